//! Directed Granger-causality networks of daily stock-index closes.
//!
//! The crate is organised along the processing chain:
//!
//! - [`ingestion`]: price panels, FX conversion and market closing clocks.
//! - [`alignment`]: pairwise calendars, log returns and closing-time alignment.
//! - [`volmodel`]: ARMA-GARCH fits with skewed-GED innovations and model selection.
//! - [`causality`]: cross-correlations and Hong's kernel-weighted Q statistic.
//! - [`netmetrics`]: per-window digraphs, degrees, harmonic centrality, survival ratios.
//! - [`inference`]: spatial probit samplers over edge slots and HAC trend regressions.
//! - [`pipeline`]: rolling windows, study orchestration and synthetic panels.

pub mod alignment;
pub mod causality;
pub mod error;
pub mod inference;
pub mod ingestion;
pub mod netmetrics;
pub mod optim;
pub mod pipeline;
pub mod stats;
pub mod volmodel;

pub use error::{Error, Result};
