//! Study configuration.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::hac::HacOptions;
use crate::inference::{DesignOptions, SamplerOptions};
use crate::netmetrics::Direction;
use crate::stats::seed_for_label;
use crate::volmodel::{FitOptions, ModelSpec, SelectionConfig, VarianceFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Bundle directory; relative paths resolve against the config file's directory.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Master seed from which every stage's stream is derived.
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub windows: WindowConfig,
    #[serde(default)]
    pub causality: CausalityConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub probit: ProbitConfig,
    #[serde(default)]
    pub trend: HacOptions,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Wide CSV: a date column and one close column per market.
    pub prices: PathBuf,
    /// Market metadata TOML (timezone, currency, closing-hour epochs).
    pub metadata: PathBuf,
    /// Long FX CSV `date,pair,rate`; required when any market is not quoted in USD.
    #[serde(default)]
    pub fx: Option<PathBuf>,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    /// Market order of every output; empty means the price file's column order.
    #[serde(default)]
    pub markets: Vec<String>,
    /// Reference market for the time-to-US covariate.
    #[serde(default = "default_us")]
    pub us_market: Option<String>,
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
}

fn default_date_column() -> String {
    "date".into()
}

fn default_date_format() -> String {
    "%Y-%m-%d".into()
}

fn default_us() -> Option<String> {
    Some("US".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// `window_months` calendar months stepping by `drift_months`.
    #[default]
    Calendar,
    /// `window_days` panel trading days stepping by `drift_days`.
    TradingDays,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub mode: WindowMode,
    pub window_months: u32,
    pub drift_months: u32,
    pub window_days: usize,
    pub drift_days: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            mode: WindowMode::Calendar,
            window_months: 3,
            drift_months: 1,
            window_days: 63,
            drift_days: 21,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantRule {
    /// Instantaneous when the two closes coincide on every common date of the window.
    #[default]
    Auto,
    Lagged,
    Instantaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CausalityConfig {
    /// Kernel bandwidth `M`.
    pub bandwidth: usize,
    /// Family level, split over the `N(N-1)` ordered pairs.
    pub level: f64,
    pub variant: VariantRule,
}

impl Default for CausalityConfig {
    fn default() -> Self {
        Self {
            bandwidth: 5,
            level: 0.01,
            variant: VariantRule::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub families: Vec<VarianceFamily>,
    pub include_zero_mean_orders: bool,
    /// Drops grid specifications with `p + q + r + s` above this.
    pub max_total_order: Option<usize>,
    pub starts: usize,
    pub pr_lags: usize,
    pub pr_reps: usize,
    pub pr_level: f64,
    /// Returns are multiplied by this before fitting.
    pub return_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let sel = SelectionConfig::default();
        Self {
            families: VarianceFamily::ALL.to_vec(),
            include_zero_mean_orders: false,
            max_total_order: None,
            starts: sel.fit.starts,
            pr_lags: sel.pr_lags,
            pr_reps: sel.pr_reps,
            pr_level: sel.pr_level,
            return_scale: 100.0,
        }
    }
}

impl ModelConfig {
    pub fn grid(&self) -> Vec<ModelSpec> {
        let mut g = ModelSpec::grid(&self.families, self.include_zero_mean_orders);
        if let Some(cap) = self.max_total_order {
            g.retain(|s| s.total_order() <= cap);
        }
        g
    }

    pub fn selection(&self, seed: u64) -> SelectionConfig {
        SelectionConfig {
            fit: FitOptions {
                starts: self.starts,
                seed,
                ..FitOptions::default()
            },
            pr_lags: self.pr_lags,
            pr_reps: self.pr_reps,
            pr_level: self.pr_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Path direction for harmonic centrality.
    pub direction: Direction,
    pub survival_steps: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            direction: Direction::Outgoing,
            survival_steps: (1..=18).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbitConfig {
    pub enabled: bool,
    pub draws: usize,
    pub burn_in: usize,
    pub beta_prior_precision: f64,
    pub initial_step: f64,
    pub design: DesignOptions,
}

impl Default for ProbitConfig {
    fn default() -> Self {
        let s = SamplerOptions::default();
        Self {
            enabled: true,
            draws: s.draws,
            burn_in: s.burn_in,
            beta_prior_precision: s.beta_prior_precision,
            initial_step: s.initial_step,
            design: DesignOptions::default(),
        }
    }
}

impl ProbitConfig {
    pub fn sampler(&self, seed: u64) -> SamplerOptions {
        SamplerOptions {
            draws: self.draws,
            burn_in: self.burn_in,
            seed,
            beta_prior_precision: self.beta_prior_precision,
            initial_step: self.initial_step,
            fixed_spatial: None,
        }
    }
}

/// Independent streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub fit: u64,
    pub portmanteau: u64,
    pub probit: u64,
}

impl StudyConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.windows;
        if w.window_months < 1 || w.drift_months < 1 {
            return Err(Error::Config("window_months and drift_months must be at least 1".into()));
        }
        if w.window_days < 2 || w.drift_days < 1 {
            return Err(Error::Config("window_days must be at least 2 and drift_days at least 1".into()));
        }
        let c = &self.causality;
        if !(c.level > 0.0 && c.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", c.level)));
        }
        if c.bandwidth < 1 {
            return Err(Error::Config("bandwidth must be at least 1".into()));
        }
        if self.model.grid().is_empty() {
            return Err(Error::Config("model grid is empty".into()));
        }
        if !(self.model.return_scale > 0.0 && self.model.return_scale.is_finite()) {
            return Err(Error::Config("return_scale must be positive".into()));
        }
        if self.network.survival_steps.contains(&0) {
            return Err(Error::Config("survival steps must be at least 1".into()));
        }
        if self.probit.draws == 0 {
            return Err(Error::Config("probit draws must be at least 1".into()));
        }
        if let (Some(a), Some(b)) = (self.data.start, self.data.end) {
            if a > b {
                return Err(Error::Config(format!("start {a} is after end {b}")));
            }
        }
        Ok(())
    }

    /// `path` relative to the config file's directory unless absolute.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds {
            fit: seed_for_label(self.seed, "fit"),
            portmanteau: seed_for_label(self.seed, "portmanteau"),
            probit: seed_for_label(self.seed, "probit"),
        }
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = PathBuf::new();
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
