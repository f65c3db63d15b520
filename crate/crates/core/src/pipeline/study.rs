//! Staged study runner.
//!
//! Every stage reads its inputs from the bundle written by the previous stage, so a
//! stage can be rerun alone. Per-window state lives under `windows/<ttt>/`:
//!
//! | stage   | writes                                   | failure marker |
//! |---------|------------------------------------------|----------------|
//! | fit     | `fits.csv`, `residuals.csv`              | `fit.err`      |
//! | test    | `tests.csv`                              | `test.err`     |
//! | network | `edges.csv`, `metrics.csv`, `net.dot`    | `network.err`  |
//!
//! A window missing any upstream output is skipped downstream. Bundle-level files:
//! `panel.csv`, `survival.csv`, `trends.csv`, `probit/`, `manifest.json`, `timing.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{StageSeeds, StudyConfig, VariantRule, WindowMode};
use super::windows::{make_windows, trading_day_windows, Window};
use crate::alignment::{align, closes_coincide, own_returns, ReturnSeries};
use crate::causality::{bonferroni_level, test_pair, write_tests_csv, CausalityDecision, Variant};
use crate::error::{Error, Result};
use crate::inference::hac::hac_trend_with;
use crate::inference::{
    build_design, sample, significance_table, write_coefficients_csv, write_significance_csv, CoefRecord, SlotWeights, SpatialModel,
};
use crate::ingestion::{convert_to_usd_lenient, load_fx, load_metadata, load_prices, write_prices, MarketClock, PriceSchema, PriceSeries};
use crate::netmetrics::{build_network, survival_series, write_edges_csv, write_metrics_csv, write_survival_csv, SurvivalPoint, WindowNetwork};
use crate::stats::{mean, sample_sd, seed_for_label};
use crate::volmodel::{select_model, write_fit_report, FitRecord, PrNullCache, VolFit};

/// USD closes and clocks in output market order.
#[derive(Debug, Clone)]
pub struct Panel {
    pub markets: Vec<String>,
    pub prices: Vec<PriceSeries>,
    pub clocks: Vec<MarketClock>,
    /// Index of the time-to-US reference market.
    pub us: Option<usize>,
    /// Union of trading dates inside the study range.
    pub dates: Vec<NaiveDate>,
}

impl Panel {
    pub fn load(cfg: &StudyConfig) -> Result<Self> {
        let d = &cfg.data;
        let meta = load_metadata(cfg.resolve(&d.metadata))?;
        let schema = PriceSchema {
            date_column: d.date_column.clone(),
            date_format: d.date_format.clone(),
            currencies: meta.iter().map(|(k, m)| (k.clone(), m.currency.clone())).collect(),
        };
        let mut loaded = load_prices(cfg.resolve(&d.prices), &schema)?;
        let markets: Vec<String> = if d.markets.is_empty() {
            loaded.iter().map(|s| s.market_id.clone()).collect()
        } else {
            d.markets.clone()
        };
        if markets.len() < 3 {
            return Err(Error::Config(format!("a study needs at least 3 markets, got {}", markets.len())));
        }
        let fx = match &d.fx {
            Some(p) => Some(load_fx(cfg.resolve(p))?),
            None => None,
        };
        let mut prices = Vec::with_capacity(markets.len());
        let mut clocks = Vec::with_capacity(markets.len());
        for id in &markets {
            let m = meta.get(id).ok_or_else(|| Error::Config(format!("market {id} has no metadata")))?;
            let k = loaded
                .iter()
                .position(|s| &s.market_id == id)
                .ok_or_else(|| Error::Config(format!("market {id} has no price column")))?;
            let mut series = loaded.swap_remove(k);
            if !series.currency.eq_ignore_ascii_case("USD") {
                let rates = fx
                    .as_ref()
                    .and_then(|f| f.get(&series.currency.to_uppercase()))
                    .ok_or_else(|| Error::Config(format!("market {id} is quoted in {} but no matching fx series is configured", series.currency)))?;
                let (usd, dropped) = convert_to_usd_lenient(&series, rates)?;
                if dropped > 0 {
                    warn!("{id}: {dropped} date(s) dropped for missing fx rates");
                }
                series = usd;
            }
            let (lo, hi) = (d.start.unwrap_or(NaiveDate::MIN), d.end.unwrap_or(NaiveDate::MAX));
            prices.push(series.between(lo, hi));
            clocks.push(m.clock.clone());
        }
        let dates: BTreeSet<NaiveDate> = prices.iter().flat_map(|s| s.dates()).collect();
        if dates.is_empty() {
            return Err(Error::InsufficientData("no price observations in the study range".into()));
        }
        let us = d.us_market.as_ref().and_then(|u| markets.iter().position(|m| m == u));
        if us.is_none() {
            warn!("no time-to-US reference market in the panel; the covariate is zero");
        }
        Ok(Self {
            markets,
            prices,
            clocks,
            us,
            dates: dates.into_iter().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.markets.len()
    }

    fn index_of(&self, id: &str) -> Result<usize> {
        self.markets
            .iter()
            .position(|m| m == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown market {id}")))
    }

    pub fn windows(&self, cfg: &StudyConfig) -> Result<Vec<Window>> {
        let w = &cfg.windows;
        match w.mode {
            WindowMode::Calendar => {
                let first = cfg.data.start.unwrap_or(self.dates[0]);
                let last = cfg.data.end.unwrap_or(*self.dates.last().expect("non-empty"));
                make_windows(first, last, w.window_months, w.drift_months)
            }
            WindowMode::TradingDays => trading_day_windows(&self.dates, w.window_days, w.drift_days),
        }
    }

    pub fn window_dates(&self, w: &Window) -> Vec<NaiveDate> {
        self.dates.iter().copied().filter(|d| w.contains(*d)).collect()
    }
}

/// Outcome of one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub processed: usize,
    pub failed: Vec<(usize, String)>,
}

impl StageReport {
    fn new(stage: &'static str) -> Self {
        Self {
            stage,
            processed: 0,
            failed: Vec::new(),
        }
    }

    fn record(&mut self, w: &Window, dir: &Path, outcome: Result<()>) -> Result<()> {
        match outcome {
            Ok(()) => self.processed += 1,
            Err(e) => {
                let msg = e.to_string();
                warn!("window {} ({}..{}): {} failed: {msg}", w.label(), w.start, w.end, self.stage);
                write_text(&dir.join(format!("{}.err", self.stage)), &format!("{msg}\n"))?;
                self.failed.push((w.index, msg));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub index: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub status: WindowStatus,
    /// Stage that failed and its message.
    pub error: Option<(String, String)>,
    pub tests: usize,
    pub edges: usize,
    pub probit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub seeds: StageSeeds,
    pub markets: Vec<String>,
    pub ordered_pairs: usize,
    pub pair_level: f64,
    pub decisions: usize,
    pub failed_windows: usize,
    pub windows: Vec<WindowEntry>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub manifest: Manifest,
    pub stages: Vec<StageReport>,
    /// Wall-clock seconds per stage; not part of the deterministic bundle.
    pub timing: BTreeMap<String, f64>,
}

impl StudyReport {
    /// No window failed; probit skips (for example an empty network) do not count.
    pub fn is_complete(&self) -> bool {
        self.manifest.failed_windows == 0
    }
}

pub struct Study {
    pub config: StudyConfig,
    pub panel: Panel,
    pub windows: Vec<Window>,
    out: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, row: usize) -> Result<T> {
    rec.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
        row,
        msg: format!("bad field {k}: {:?}", rec.get(k)),
    })
}

const STAGES: [&str; 3] = ["fit", "test", "network"];

impl Study {
    pub fn open(config: StudyConfig) -> Result<Self> {
        config.validate()?;
        let panel = Panel::load(&config)?;
        let windows = panel.windows(&config)?;
        let out = config.output_dir();
        make_dir(&out)?;
        info!("{} markets, {} windows, output {}", panel.n(), windows.len(), out.display());
        Ok(Self {
            config,
            panel,
            windows,
            out,
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn window_dir(&self, w: &Window) -> PathBuf {
        self.out.join("windows").join(w.label())
    }

    fn pair_level(&self) -> f64 {
        bonferroni_level(self.config.causality.level, self.panel.n())
    }

    /// First failed stage of a window, if any.
    fn failure(&self, w: &Window) -> Result<Option<(String, String)>> {
        let dir = self.window_dir(w);
        for stage in STAGES {
            let p = dir.join(format!("{stage}.err"));
            if p.exists() {
                let msg = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                return Ok(Some((stage.to_string(), msg.trim_end().to_string())));
            }
        }
        Ok(None)
    }

    /// Windows with `file` present and no failure marker.
    fn ready(&self, file: &str) -> Result<Vec<Window>> {
        let mut out = Vec::new();
        for w in &self.windows {
            if self.window_dir(w).join(file).exists() && self.failure(w)?.is_none() {
                out.push(*w);
            }
        }
        Ok(out)
    }

    /// Writes the USD panel as read.
    pub fn ingest(&self) -> Result<StageReport> {
        let path = self.out.join("panel.csv");
        write_prices(create(&path)?, &self.panel.prices)?;
        let mut r = StageReport::new("ingest");
        r.processed = self.panel.n();
        Ok(r)
    }

    /// Per window and market: model selection on own returns and standardized residuals.
    pub fn fit(&self) -> Result<StageReport> {
        let cfg = &self.config;
        let seeds = cfg.seeds();
        let grid = cfg.model.grid();
        let cache = PrNullCache::new(seeds.portmanteau);
        let scale = cfg.model.return_scale;
        let returns: Vec<Result<ReturnSeries>> = self.panel.prices.iter().map(own_returns).collect();

        let tasks: Vec<(usize, usize)> = (0..self.windows.len()).flat_map(|w| (0..self.panel.n()).map(move |m| (w, m))).collect();
        let fits: Vec<std::result::Result<(ReturnSeries, VolFit), String>> = tasks
            .par_iter()
            .map(|&(wi, mi)| {
                let w = &self.windows[wi];
                let id = &self.panel.markets[mi];
                let fitted = returns[mi].as_ref().map_err(|e| e.to_string()).and_then(|all| {
                    let points: Vec<(NaiveDate, f64)> = all.points().iter().copied().filter(|p| w.contains(p.0)).collect();
                    let series = ReturnSeries::new(id.clone(), points).map_err(|e| e.to_string())?;
                    let scaled: Vec<f64> = series.values().iter().map(|v| v * scale).collect();
                    let sel = cfg.model.selection(seed_for_label(seeds.fit, &format!("{}/{id}", w.label())));
                    let fit = select_model(&scaled, &grid, &sel, &cache).map_err(|e| e.to_string())?;
                    Ok((series, fit))
                });
                fitted.map_err(|e| format!("{id}: {e}"))
            })
            .collect();

        let mut report = StageReport::new("fit");
        let n = self.panel.n();
        for (wi, w) in self.windows.iter().enumerate() {
            let dir = self.window_dir(w);
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
            make_dir(&dir)?;
            let chunk = &fits[wi * n..(wi + 1) * n];
            let records: Vec<FitRecord> = chunk
                .iter()
                .zip(&self.panel.markets)
                .filter_map(|(f, id)| f.as_ref().ok().map(|(_, fit)| FitRecord::new(id, w.index, fit)))
                .collect();
            write_fit_report(create(&dir.join("fits.csv"))?, &records)?;
            let errors: Vec<&str> = chunk.iter().filter_map(|f| f.as_ref().err().map(String::as_str)).collect();
            let outcome = if errors.is_empty() {
                write_residuals(&dir.join("residuals.csv"), chunk.iter().map(|f| f.as_ref().expect("checked")))
            } else {
                Err(Error::InsufficientData(errors.join("; ")))
            };
            report.record(w, &dir, outcome)?;
        }
        Ok(report)
    }

    /// All ordered pairs of every fitted window.
    pub fn test(&self) -> Result<StageReport> {
        let mut report = StageReport::new("test");
        for w in &self.windows {
            let dir = self.window_dir(w);
            remove_if_exists(&dir.join("tests.csv"))?;
            remove_if_exists(&dir.join("test.err"))?;
        }
        let ready = self.ready("residuals.csv")?;
        let outcomes: Vec<Result<Vec<CausalityDecision>>> = ready.par_iter().map(|w| self.test_window(w)).collect();
        for (w, outcome) in ready.iter().zip(outcomes) {
            let dir = self.window_dir(w);
            let outcome = outcome.and_then(|d| write_tests_csv(create(&dir.join("tests.csv"))?, &d));
            report.record(w, &dir, outcome)?;
        }
        Ok(report)
    }

    fn test_window(&self, w: &Window) -> Result<Vec<CausalityDecision>> {
        let residuals = read_residuals(&self.window_dir(w).join("residuals.csv"), &self.panel.markets)?;
        let n = self.panel.n();
        let level = self.pair_level();
        let c = &self.config.causality;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let (src, tgt) = (&residuals[i], &residuals[j]);
                let a: BTreeSet<NaiveDate> = src.dates().collect();
                let common: BTreeSet<NaiveDate> = tgt.dates().filter(|d| a.contains(d)).collect();
                if common.is_empty() {
                    return Err(Error::EmptyIntersection {
                        a: src.market_id.clone(),
                        b: tgt.market_id.clone(),
                    });
                }
                let (ci, cj) = (&self.panel.clocks[i], &self.panel.clocks[j]);
                let variant = match c.variant {
                    VariantRule::Lagged => Variant::Lagged,
                    VariantRule::Instantaneous => Variant::Instantaneous,
                    VariantRule::Auto if closes_coincide(ci, cj, common.iter().copied())? => Variant::Instantaneous,
                    VariantRule::Auto => Variant::Lagged,
                };
                let aligned = align(&src.restrict_to(&common), &tgt.restrict_to(&common), ci, cj)?;
                test_pair(&aligned.hong_frame(), &src.market_id, &tgt.market_id, c.bandwidth, variant, level)
            })
            .collect()
    }

    /// Networks, metrics, survival ratios and metric trends.
    pub fn network(&self) -> Result<StageReport> {
        let mut report = StageReport::new("network");
        let mut nets: Vec<Option<WindowNetwork>> = vec![None; self.windows.len()];
        for w in &self.windows {
            let dir = self.window_dir(w);
            for f in ["edges.csv", "metrics.csv", "net.dot", "network.err"] {
                remove_if_exists(&dir.join(f))?;
            }
        }
        for w in self.ready("tests.csv")? {
            let dir = self.window_dir(&w);
            let built = read_tests(&dir.join("tests.csv"), self.pair_level())
                .and_then(|d| build_network(&d, &self.panel.markets, w.index, w.start, w.end))
                .and_then(|net| {
                    write_edges_csv(create(&dir.join("edges.csv"))?, &net)?;
                    write_metrics_csv(create(&dir.join("metrics.csv"))?, &net.metrics(self.config.network.direction))?;
                    write_text(&dir.join("net.dot"), &net.to_dot())?;
                    Ok(net)
                });
            let outcome = built.map(|net| nets[w.index] = Some(net));
            report.record(&w, &dir, outcome)?;
        }
        self.write_survival(&nets)?;
        self.write_trends(&nets)?;
        Ok(report)
    }

    /// Ratios within each run of consecutive successful windows.
    fn write_survival(&self, nets: &[Option<WindowNetwork>]) -> Result<()> {
        let mut runs: Vec<Vec<WindowNetwork>> = vec![Vec::new()];
        for n in nets {
            match n {
                Some(net) => runs.last_mut().expect("non-empty").push(net.clone()),
                None => runs.push(Vec::new()),
            }
        }
        let mut points: Vec<SurvivalPoint> = Vec::new();
        for &s in &self.config.network.survival_steps {
            for run in runs.iter().filter(|r| r.len() > s) {
                points.extend(survival_series(run, s)?);
            }
        }
        points.sort_by_key(|p| (p.s, p.t));
        write_survival_csv(create(&self.out.join("survival.csv"))?, &points)
    }

    fn write_trends(&self, nets: &[Option<WindowNetwork>]) -> Result<()> {
        let ok: Vec<&WindowNetwork> = nets.iter().flatten().collect();
        let direction = self.config.network.direction;
        let harmonic: Vec<Vec<f64>> = ok.iter().map(|n| n.harmonic_all(direction)).collect();
        let mut w = csv::Writer::from_writer(create(&self.out.join("trends.csv"))?);
        w.write_record(["market", "metric", "n", "mean", "sd", "intercept", "slope", "se", "t", "p_value", "bandwidth", "stars"])?;
        for (x, id) in self.panel.markets.iter().enumerate() {
            let series: [(&str, Vec<f64>); 3] = [
                ("out_deg", ok.iter().map(|n| n.out_degree(x) as f64).collect()),
                ("in_deg", ok.iter().map(|n| n.in_degree(x) as f64).collect()),
                ("harmonic", harmonic.iter().map(|h| h[x]).collect()),
            ];
            for (metric, y) in series {
                let mut rec = vec![id.clone(), metric.to_string(), y.len().to_string()];
                if y.is_empty() {
                    rec.extend(std::iter::repeat_n(String::new(), 9));
                } else {
                    rec.push(mean(&y).to_string());
                    rec.push(if y.len() > 1 { sample_sd(&y).to_string() } else { String::new() });
                    match hac_trend_with(&y, &self.config.trend) {
                        Ok(t) => rec.extend([t.intercept, t.slope, t.se, t.t, t.p_value, t.bandwidth].map(|v| v.to_string()).into_iter().chain([t.stars])),
                        Err(e) => {
                            warn!("{id} {metric}: no trend: {e}");
                            rec.extend(std::iter::repeat_n(String::new(), 7));
                        }
                    }
                }
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("trends.csv", e))?;
        Ok(())
    }

    /// SAR and SEM probits per window with a network.
    pub fn probit(&self) -> Result<StageReport> {
        let mut report = StageReport::new("probit");
        let dir = self.out.join("probit");
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        if !self.config.probit.enabled {
            return Ok(report);
        }
        make_dir(&dir)?;
        let weights = SlotWeights::for_markets(self.panel.n())?;
        let ready = self.ready("edges.csv")?;
        let outcomes: Vec<Result<Vec<CoefRecord>>> = ready.par_iter().map(|w| self.probit_window(w, &weights)).collect();
        let mut all = Vec::new();
        let mut skipped = csv::Writer::from_writer(create(&dir.join("skipped.csv"))?);
        skipped.write_record(["window", "reason"])?;
        for (w, outcome) in ready.iter().zip(outcomes) {
            match outcome {
                Ok(records) => {
                    write_coefficients_csv(create(&dir.join(format!("{}.csv", w.label())))?, &records)?;
                    all.extend(records);
                    report.processed += 1;
                }
                Err(e) => {
                    warn!("window {}: probit skipped: {e}", w.label());
                    skipped.write_record([w.index.to_string(), e.to_string()])?;
                    report.failed.push((w.index, e.to_string()));
                }
            }
        }
        skipped.flush().map_err(|e| Error::io("skipped.csv", e))?;
        write_significance_csv(create(&dir.join("significance.csv"))?, &significance_table(&all))?;
        Ok(report)
    }

    fn probit_window(&self, w: &Window, weights: &SlotWeights) -> Result<Vec<CoefRecord>> {
        let net = read_edges(&self.window_dir(w).join("edges.csv"), &self.panel, w)?;
        let clocks: Vec<&MarketClock> = self.panel.clocks.iter().collect();
        let design = build_design(&net, &clocks, self.panel.us, &self.config.probit.design, &self.panel.window_dates(w))?;
        let base = self.config.seeds().probit;
        let mut out = Vec::new();
        for model in [SpatialModel::Sar, SpatialModel::Sem] {
            let opts = self.config.probit.sampler(seed_for_label(base, &format!("{}/{model}", w.label())));
            let post = sample(&design, weights, model, &opts)?;
            out.extend(post.summaries().iter().map(|s| CoefRecord::new(w.index, model, s)));
        }
        Ok(out)
    }

    /// Manifest assembled from the bundle on disk.
    pub fn report(&self) -> Result<Manifest> {
        let mut entries = Vec::with_capacity(self.windows.len());
        for w in &self.windows {
            let dir = self.window_dir(w);
            let error = self.failure(w)?;
            let tests = count_rows(&dir.join("tests.csv"))?;
            let edges = count_rows(&dir.join("edges.csv"))?;
            let complete = error.is_none() && dir.join("edges.csv").exists();
            entries.push(WindowEntry {
                index: w.index,
                start: w.start,
                end: w.end,
                status: if complete { WindowStatus::Ok } else { WindowStatus::Failed },
                error,
                tests,
                edges,
                probit: self.out.join("probit").join(format!("{}.csv", w.label())).exists(),
            });
        }
        let n = self.panel.n();
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config.hash(),
            seed: self.config.seed,
            seeds: self.config.seeds(),
            markets: self.panel.markets.clone(),
            ordered_pairs: n * (n - 1),
            pair_level: self.pair_level(),
            decisions: entries.iter().map(|e| e.tests).sum(),
            failed_windows: entries.iter().filter(|e| e.status == WindowStatus::Failed).count(),
            windows: entries,
        };
        let path = self.out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_text(&path, &text)?;
        Ok(manifest)
    }
}

fn count_rows(path: &Path) -> Result<usize> {
    if !path.exists() {
        return Ok(0);
    }
    let mut n = 0;
    for rec in csv_reader(path)?.records() {
        rec?;
        n += 1;
    }
    Ok(n)
}

/// `date,market,residual`, markets in panel order.
fn write_residuals<'a>(path: &Path, fits: impl Iterator<Item = &'a (ReturnSeries, VolFit)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["date", "market", "residual"])?;
    for (series, fit) in fits {
        if fit.std_residuals.len() != series.len() {
            return Err(Error::InvalidArgument(format!("{}: residual count does not match returns", series.market_id)));
        }
        for ((date, _), z) in series.points().iter().zip(&fit.std_residuals) {
            w.write_record([date.to_string(), series.market_id.clone(), z.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_residuals(path: &Path, markets: &[String]) -> Result<Vec<ReturnSeries>> {
    let mut points: BTreeMap<String, Vec<(NaiveDate, f64)>> = markets.iter().map(|m| (m.clone(), Vec::new())).collect();
    for (row, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        let date: NaiveDate = parse_field(&rec, 0, row + 2)?;
        let value: f64 = parse_field(&rec, 2, row + 2)?;
        points
            .get_mut(&rec[1])
            .ok_or_else(|| Error::Parse {
                row: row + 2,
                msg: format!("unknown market {}", &rec[1]),
            })?
            .push((date, value));
    }
    markets
        .iter()
        .map(|m| ReturnSeries::new(m.clone(), points.remove(m).unwrap_or_default()))
        .collect()
}

fn read_tests(path: &Path, level: f64) -> Result<Vec<CausalityDecision>> {
    let mut out = Vec::new();
    for (row, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        let variant = match &rec[2] {
            "lagged" => Variant::Lagged,
            "instantaneous" => Variant::Instantaneous,
            other => {
                return Err(Error::Parse {
                    row: row + 2,
                    msg: format!("unknown variant {other}"),
                })
            }
        };
        out.push(CausalityDecision {
            source: rec[0].to_string(),
            target: rec[1].to_string(),
            variant,
            q: parse_field(&rec, 3, row + 2)?,
            p_value: parse_field(&rec, 4, row + 2)?,
            reject: parse_field(&rec, 5, row + 2)?,
            level_used: level,
        });
    }
    Ok(out)
}

fn read_edges(path: &Path, panel: &Panel, w: &Window) -> Result<WindowNetwork> {
    let mut edges = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec?;
        edges.push((panel.index_of(&rec[1])?, panel.index_of(&rec[2])?));
    }
    WindowNetwork::from_edges(w.index, w.start, w.end, panel.markets.clone(), edges)
}

/// Every stage in order, then the manifest; `timing.json` records wall-clock seconds.
pub fn run_study(config: StudyConfig) -> Result<StudyReport> {
    let mut timing = BTreeMap::new();
    let t0 = Instant::now();
    let study = Study::open(config)?;
    let mut stages = vec![study.ingest()?];
    timing.insert("ingest".to_string(), t0.elapsed().as_secs_f64());
    type StageFn = fn(&Study) -> Result<StageReport>;
    let steps: [(&str, StageFn); 4] = [("fit", Study::fit), ("test", Study::test), ("network", Study::network), ("probit", Study::probit)];
    for (name, f) in steps {
        let t = Instant::now();
        let r = f(&study)?;
        info!("{name}: {} processed, {} failed", r.processed, r.failed.len());
        stages.push(r);
        timing.insert(name.to_string(), t.elapsed().as_secs_f64());
    }
    let manifest = study.report()?;
    timing.insert("total".to_string(), t0.elapsed().as_secs_f64());
    let path = study.output_dir().join("timing.json");
    write_text(&path, &(serde_json::to_string_pretty(&timing)? + "\n"))?;
    Ok(StudyReport { manifest, stages, timing })
}
