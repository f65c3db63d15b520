//! Determinants of edge formation and trend tests on network statistics.

pub mod design;
pub mod hac;
pub mod probit;
pub mod truncnorm;

use std::io::Write;

use serde::Serialize;

pub use design::{build_design, devectorize, edge_slots, vectorize, DesignOptions, SlotWeights, SpatialDesign, UsReference, COVARIATE_NAMES};
pub use hac::{hac_trend, Bandwidth, TrendResult};
pub use probit::{sample, CoefSummary, Posterior, SamplerOptions, SpatialModel};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefRecord {
    pub window: usize,
    pub model: SpatialModel,
    pub param: String,
    pub post_mean: f64,
    pub post_sd: f64,
    pub sig10: bool,
    pub sig05: bool,
    pub sig01: bool,
}

impl CoefRecord {
    pub fn new(window: usize, model: SpatialModel, s: &CoefSummary) -> Self {
        Self {
            window,
            model,
            param: s.param.clone(),
            post_mean: s.post_mean,
            post_sd: s.post_sd,
            sig10: s.sig10,
            sig05: s.sig05,
            sig01: s.sig01,
        }
    }
}

pub fn write_coefficients_csv<W: Write>(writer: W, records: &[CoefRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["window", "model", "param", "post_mean", "post_sd", "sig10", "sig05", "sig01"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| crate::Error::io("<coefficients>", e))?;
    Ok(())
}

/// Rows of the significance summary: parameter key and display label.
pub const SUMMARY_ROWS: [(&str, &str); 4] = [
    ("intercept", "Intercept"),
    ("time_in_out", "Time (in - out)"),
    ("time_to_us", "Time to US"),
    ("spatial", "Spatial (rho / lambda)"),
];

/// Per parameter and model, the number of windows whose strongest significance level is
/// 10%, 5% and 1% (exclusive bins), out of `windows`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceRow {
    pub label: String,
    /// `[sar, sem]` × `[10%, 5%, 1%]`.
    pub counts: [[usize; 3]; 2],
    pub windows: [usize; 2],
}

fn summary_key(param: &str) -> &str {
    match param {
        "rho" | "lambda" => "spatial",
        other => other,
    }
}

pub fn significance_table(records: &[CoefRecord]) -> Vec<SignificanceRow> {
    SUMMARY_ROWS
        .iter()
        .map(|(key, label)| {
            let mut counts = [[0usize; 3]; 2];
            let mut windows = [0usize; 2];
            for r in records.iter().filter(|r| summary_key(&r.param) == *key) {
                let m = match r.model {
                    SpatialModel::Sar => 0,
                    SpatialModel::Sem => 1,
                    SpatialModel::Probit => continue,
                };
                windows[m] += 1;
                let bin = if r.sig01 {
                    Some(2)
                } else if r.sig05 {
                    Some(1)
                } else if r.sig10 {
                    Some(0)
                } else {
                    None
                };
                if let Some(b) = bin {
                    counts[m][b] += 1;
                }
            }
            SignificanceRow {
                label: label.to_string(),
                counts,
                windows,
            }
        })
        .collect()
}

fn cell(count: usize, total: usize) -> String {
    let pct = if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 };
    format!("{count} [{pct:.2}%]")
}

/// Cells read `count [percent%]`.
pub fn write_significance_csv<W: Write>(writer: W, rows: &[SignificanceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["param", "sar_sig10", "sar_sig05", "sar_sig01", "sem_sig10", "sem_sig05", "sem_sig01"])?;
    for r in rows {
        let mut rec = vec![r.label.clone()];
        for m in 0..2 {
            for b in 0..3 {
                rec.push(cell(r.counts[m][b], r.windows[m]));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| crate::Error::io("<significance>", e))?;
    Ok(())
}
