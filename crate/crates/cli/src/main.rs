use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gcnet::pipeline::{run_study, simulate_panel, StageReport, Study, StudyConfig, SyntheticSpec};

#[derive(Parser)]
#[command(name = "gcnet", version, about = "Granger-causality networks of stock-index returns")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Load, convert and validate the price panel; writes panel.csv.
    Ingest(StudyArgs),
    /// Volatility model selection per window and market.
    Fit(StudyArgs),
    /// Pairwise causality tests on fitted residuals.
    Test(StudyArgs),
    /// Networks, metrics, survival ratios and trends from test decisions.
    Network(StudyArgs),
    /// Spatial probits per window network.
    Probit(StudyArgs),
    /// Rebuild manifest.json from the bundle.
    Report(StudyArgs),
    /// Every stage in order.
    Run(StudyArgs),
    /// Write a synthetic panel, its metadata and a study config.
    Simulate(SimulateArgs),
}

/// Flags override the matching config keys.
#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    window_months: Option<u32>,
    #[arg(long)]
    drift_months: Option<u32>,
    #[arg(long)]
    bandwidth: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    no_probit: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic panel description (TOML).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving prices.csv, markets.toml and study.toml.
    #[arg(long)]
    out: PathBuf,
}

impl StudyArgs {
    fn config(&self) -> Result<StudyConfig> {
        let mut c = StudyConfig::load(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.output {
            c.output = std::env::current_dir()?.join(o);
        }
        if let Some(v) = self.window_months {
            c.windows.window_months = v;
        }
        if let Some(v) = self.drift_months {
            c.windows.drift_months = v;
        }
        if let Some(v) = self.bandwidth {
            c.causality.bandwidth = v;
        }
        if let Some(v) = self.level {
            c.causality.level = v;
        }
        if let Some(v) = self.draws {
            c.probit.draws = v;
        }
        if let Some(v) = self.burn_in {
            c.probit.burn_in = v;
        }
        if self.no_probit {
            c.probit.enabled = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn summarize(r: &StageReport) -> bool {
    println!("{}: {} processed, {} failed", r.stage, r.processed, r.failed.len());
    for (w, msg) in &r.failed {
        println!("  window {w:03}: {msg}");
    }
    r.failed.is_empty()
}

fn stage(args: &StudyArgs, f: fn(&Study) -> gcnet::Result<StageReport>) -> Result<bool> {
    let study = Study::open(args.config()?)?;
    Ok(summarize(&f(&study)?))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: SyntheticSpec = toml::from_str(&text)?;
    let panel = simulate_panel(&spec, args.seed)?;
    let (prices, meta) = panel.write_to(&args.out)?;
    let name = |p: &Path| p.file_name().expect("file").to_string_lossy().into_owned();
    let config = format!("output = \"out\"\nseed = {}\n\n[data]\nprices = \"{}\"\nmetadata = \"{}\"\n", args.seed, name(&prices), name(&meta));
    let path = args.out.join("study.toml");
    std::fs::write(&path, config).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}, {} and {}", prices.display(), meta.display(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.verb {
        Verb::Ingest(a) => stage(a, Study::ingest),
        Verb::Fit(a) => stage(a, Study::fit),
        Verb::Test(a) => stage(a, Study::test),
        Verb::Network(a) => stage(a, Study::network),
        Verb::Probit(a) => stage(a, Study::probit),
        Verb::Report(a) => a.config().and_then(|c| {
            let m = Study::open(c)?.report()?;
            println!("{} windows, {} failed, {} decisions", m.windows.len(), m.failed_windows, m.decisions);
            Ok(m.failed_windows == 0)
        }),
        Verb::Run(a) => a.config().and_then(|c| {
            let r = run_study(c)?;
            r.stages.iter().for_each(|s| {
                summarize(s);
            });
            println!("{} windows, {} failed, {} decisions", r.manifest.windows.len(), r.manifest.failed_windows, r.manifest.decisions);
            Ok(r.is_complete())
        }),
        Verb::Simulate(a) => simulate(a).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
