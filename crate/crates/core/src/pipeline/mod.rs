//! Rolling windows, the staged study runner and synthetic panels.

pub mod config;
pub mod study;
pub mod synthetic;
pub mod windows;

pub use config::{CausalityConfig, DataConfig, ModelConfig, NetworkConfig, ProbitConfig, StageSeeds, StudyConfig, VariantRule, WindowConfig, WindowMode};
pub use study::{run_study, Manifest, Panel, StageReport, Study, StudyReport, WindowEntry, WindowStatus};
pub use synthetic::{simulate_panel, GarchParams, SyntheticEdge, SyntheticMarket, SyntheticPanel, SyntheticSpec};
pub use windows::{make_windows, trading_day_windows, Window};
