//! Edge-slot design: indicator vector, covariates and the slot adjacency matrix.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::MarketClock;
use crate::netmetrics::WindowNetwork;

/// Ordered pairs `(source, target)` in column-major order of the `N×N` edge matrix,
/// diagonal skipped.
pub fn edge_slots(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j))).collect()
}

/// Indicator vector of a network over [`edge_slots`].
pub fn vectorize(net: &WindowNetwork) -> Vec<f64> {
    edge_slots(net.n()).into_iter().map(|(i, j)| if net.has_edge(i, j) { 1.0 } else { 0.0 }).collect()
}

/// Inverse of [`vectorize`]: the edge list encoded by `y`.
pub fn devectorize(n: usize, y: &[f64]) -> Result<Vec<(usize, usize)>> {
    let slots = edge_slots(n);
    if y.len() != slots.len() {
        return Err(Error::InvalidArgument(format!("indicator length {} does not match {} slots", y.len(), slots.len())));
    }
    Ok(slots.into_iter().zip(y).filter(|(_, v)| **v >= 0.5).map(|(s, _)| s).collect())
}

/// Row-standardized slot adjacency (slots sharing a source or a target), stored sparsely,
/// with the spectrum needed for the log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotWeights {
    /// Per row: `(column, weight)`.
    rows: Vec<Vec<(usize, f64)>>,
    /// Per column: `(row, weight)`.
    cols: Vec<Vec<(usize, f64)>>,
    eigenvalues: Vec<f64>,
}

impl SlotWeights {
    pub fn for_markets(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("slot weights need at least 3 markets, got {n}")));
        }
        let slots = edge_slots(n);
        let raw: Vec<Vec<usize>> = slots
            .iter()
            .enumerate()
            .map(|(a, &(i, j))| {
                slots
                    .iter()
                    .enumerate()
                    .filter(|&(b, &(k, l))| a != b && (i == k || j == l))
                    .map(|(b, _)| b)
                    .collect()
            })
            .collect();
        Self::from_raw(raw)
    }

    /// No neighbours: the spatial term vanishes and the models reduce to an ordinary probit.
    pub fn empty(len: usize) -> Self {
        Self {
            rows: vec![Vec::new(); len],
            cols: vec![Vec::new(); len],
            eigenvalues: vec![0.0; len],
        }
    }

    /// Row-standardize a symmetric 0/1 neighbour structure.
    pub fn from_raw(neighbours: Vec<Vec<usize>>) -> Result<Self> {
        let m = neighbours.len();
        let degree: Vec<f64> = neighbours.iter().map(|r| r.len() as f64).collect();
        let mut sym = DMatrix::<f64>::zeros(m, m);
        for (a, r) in neighbours.iter().enumerate() {
            for &b in r {
                if b >= m || b == a || !neighbours[b].contains(&a) {
                    return Err(Error::InvalidArgument(format!("neighbour structure is not symmetric at ({a}, {b})")));
                }
                // D^{-1/2} A D^{-1/2} shares its spectrum with D^{-1} A
                sym[(a, b)] = 1.0 / (degree[a] * degree[b]).sqrt();
            }
        }
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let rows: Vec<Vec<(usize, f64)>> = neighbours.iter().enumerate().map(|(a, r)| r.iter().map(|&b| (b, 1.0 / degree[a])).collect()).collect();
        let mut cols = vec![Vec::new(); m];
        for (a, r) in rows.iter().enumerate() {
            for &(b, w) in r {
                cols[b].push((a, w));
            }
        }
        Ok(Self { rows, cols, eigenvalues })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, a: usize) -> &[(usize, f64)] {
        &self.rows[a]
    }

    pub fn col(&self, b: usize) -> &[(usize, f64)] {
        &self.cols[b]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut d = DMatrix::zeros(m, m);
        for (a, r) in self.rows.iter().enumerate() {
            for &(b, w) in r {
                d[(a, b)] = w;
            }
        }
        d
    }

    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(b, w)| w * v[b]).sum()).collect()
    }

    /// Stable interval `(1/λ_min, 1/λ_max)` of the spatial parameter.
    pub fn stable_interval(&self) -> (f64, f64) {
        let lo = self.eigenvalues.first().copied().unwrap_or(0.0);
        let hi = self.eigenvalues.last().copied().unwrap_or(0.0);
        let lower = if lo < -1e-12 { 1.0 / lo } else { -1.0 };
        let upper = if hi > 1e-12 { 1.0 / hi } else { 1.0 };
        (lower, upper)
    }

    /// `ln |I - ρW|` from the spectrum.
    pub fn log_det(&self, rho: f64) -> f64 {
        self.eigenvalues.iter().map(|l| (1.0 - rho * l).ln()).sum()
    }
}

/// Which market's distance to the US close enters the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UsReference {
    /// The edge's source market.
    #[default]
    Source,
    /// The edge's target market.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignOptions {
    pub us_reference: UsReference,
    /// Gap of the US market to itself: a full day instead of zero.
    pub us_self_full_cycle: bool,
}

pub const COVARIATE_NAMES: [&str; 3] = ["intercept", "time_in_out", "time_to_us"];

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDesign {
    pub y: Vec<f64>,
    /// Rows follow [`edge_slots`]; columns follow [`COVARIATE_NAMES`].
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
}

/// Most frequent UTC close over `dates`, as minutes in `[0, 1440)`; ties go to the earlier minute.
pub fn modal_close(clock: &MarketClock, dates: &[NaiveDate]) -> Result<i64> {
    let mut counts = std::collections::BTreeMap::<i64, usize>::new();
    for d in dates {
        *counts.entry(clock.utc_close_minutes(*d)?.rem_euclid(1440)).or_default() += 1;
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(m, _)| *m)
        .ok_or_else(|| Error::InsufficientData(format!("{}: no dates to derive a closing schedule", clock.market_id)))
}

/// Minutes from a close at `from` to the next close at `to`, in `[0, 1440)`.
pub fn succession_minutes(from: i64, to: i64) -> f64 {
    (to - from).rem_euclid(1440) as f64
}

/// Indicators and covariates for one window network.
///
/// `clocks` follows the network's vertex order and `dates` are the window's trading dates.
pub fn build_design(net: &WindowNetwork, clocks: &[&MarketClock], us: Option<usize>, opts: &DesignOptions, dates: &[NaiveDate]) -> Result<SpatialDesign> {
    let n = net.n();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("spatial design needs at least 3 markets, got {n}")));
    }
    if clocks.len() != n {
        return Err(Error::InvalidArgument(format!("{} clocks for {n} markets", clocks.len())));
    }
    let closes = clocks.iter().map(|c| modal_close(c, dates)).collect::<Result<Vec<i64>>>()?;
    let slots = edge_slots(n);
    let mut x = DMatrix::<f64>::zeros(slots.len(), 3);
    for (row, &(i, j)) in slots.iter().enumerate() {
        x[(row, 0)] = 1.0;
        x[(row, 1)] = succession_minutes(closes[i], closes[j]);
        let k = match opts.us_reference {
            UsReference::Source => i,
            UsReference::Target => j,
        };
        x[(row, 2)] = match us {
            Some(u) if u == k && opts.us_self_full_cycle => 1440.0,
            Some(u) => succession_minutes(closes[u], closes[k]),
            None => 0.0,
        };
    }
    Ok(SpatialDesign {
        y: vectorize(net),
        x,
        names: COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
    })
}

impl SpatialDesign {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.x.nrows() != self.y.len() {
            return Err(Error::InvalidArgument("design rows and indicator length differ".into()));
        }
        let ones = self.y.iter().filter(|v| **v >= 0.5).count();
        if ones == 0 || ones == self.y.len() {
            return Err(Error::InvalidArgument("indicator vector is constant".into()));
        }
        let xtx = self.x.transpose() * &self.x;
        let rank = xtx.clone().svd(false, false).rank(1e-10 * xtx.norm().max(1.0));
        if rank < self.x.ncols() {
            return Err(Error::Singular(format!("design has rank {rank} < {}", self.x.ncols())));
        }
        Ok(())
    }

    pub fn y_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn slot_order_for_three_markets() {
        assert_eq!(edge_slots(3), vec![(1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (1, 2)]);
        assert_eq!(edge_slots(20).len(), 380);
    }

    #[test]
    fn hand_enumerated_neighbours() {
        let w = SlotWeights::for_markets(3).unwrap();
        // slot (1,2) in one-based labels is index 2; neighbours (1,3) and (3,2)
        let mut cols: Vec<usize> = w.row(2).iter().map(|e| e.0).collect();
        cols.sort();
        assert_eq!(cols, vec![3, 4]);
    }

    #[test]
    fn neighbour_counts_by_enumeration() {
        for n in [3usize, 4, 5, 20] {
            let w = SlotWeights::for_markets(n).unwrap();
            let slots = edge_slots(n);
            for (a, &(i, j)) in slots.iter().enumerate() {
                let brute = slots.iter().filter(|&&(k, l)| (k, l) != (i, j) && (k == i || l == j)).count();
                assert_eq!(w.row(a).len(), brute);
                assert_eq!(brute, 2 * (n - 2));
                assert!((w.row(a).iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let w = SlotWeights::for_markets(20).unwrap();
        assert_eq!(w.len(), 380);
        assert!(w.row(0).iter().all(|e| (e.1 - 1.0 / 36.0).abs() < 1e-15));
    }

    #[test]
    fn raw_structure_is_symmetric_and_spectrum_matches_dense() {
        let w = SlotWeights::for_markets(5).unwrap();
        let d = w.to_dense();
        for a in 0..w.len() {
            for b in 0..w.len() {
                assert_eq!(d[(a, b)] > 0.0, d[(b, a)] > 0.0);
            }
        }
        let mut dense_eig: Vec<f64> = d.complex_eigenvalues().iter().map(|z| z.re).collect();
        dense_eig.sort_by(f64::total_cmp);
        for (x, y) in dense_eig.iter().zip(w.eigenvalues()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((w.eigenvalues().last().unwrap() - 1.0).abs() < 1e-12);
        let (lo, hi) = w.stable_interval();
        assert!(lo < -1.0 && (hi - 1.0).abs() < 1e-9);
        // log-determinant against a dense LU factorization
        let rho = 0.37;
        let a = DMatrix::<f64>::identity(w.len(), w.len()) - rho * &d;
        assert!((a.determinant().ln() - w.log_det(rho)).abs() < 1e-9);
    }

    #[test]
    fn vec_round_trip() {
        let edges = vec![(0, 1), (2, 1), (3, 0), (1, 3)];
        let net = WindowNetwork::from_edges(0, ymd(2006, 1, 1), ymd(2006, 4, 1), (0..4).map(|k| k.to_string()).collect(), edges.clone()).unwrap();
        let y = vectorize(&net);
        let mut back = devectorize(4, &y).unwrap();
        back.sort();
        let mut want = edges;
        want.sort();
        assert_eq!(back, want);
    }

    #[test]
    fn succession_covariates() {
        let dates: Vec<NaiveDate> = (2..=6).map(|d| ymd(2006, 7, d)).collect();
        let from = ymd(2000, 1, 1);
        let to = ymd(2020, 1, 1);
        let london = MarketClock::constant("GB", chrono_tz::Europe::London, 16 * 60 + 30, from, to).unwrap();
        let paris = MarketClock::constant("FR", chrono_tz::Europe::Paris, 17 * 60 + 30, from, to).unwrap();
        let ny = MarketClock::constant("US", chrono_tz::America::New_York, 16 * 60, from, to).unwrap();
        let net = WindowNetwork::from_edges(0, dates[0], dates[4], vec!["GB".into(), "FR".into(), "US".into()], [(0, 1)]).unwrap();
        let d = build_design(&net, &[&london, &paris, &ny], Some(2), &DesignOptions::default(), &dates).unwrap();
        // slot (GB -> FR) is index 2; London and Paris close together in UTC
        assert_eq!(d.x[(2, 1)], 0.0);
        // slot (US -> GB) is index 1: New York 20:00 UTC to London 15:30 UTC next day
        assert_eq!(d.x[(1, 1)], 19.0 * 60.0 + 30.0);
        assert_eq!(d.x[(1, 2)], 0.0);
        // slot (FR -> GB) is index 0: New York 20:00 UTC to Paris 15:30 UTC next day
        assert_eq!(d.x[(0, 2)], 1170.0);
        assert_eq!(d.y[2], 1.0);
        assert!(d.x.column(1).iter().all(|v| (0.0..1440.0).contains(v)));
        let target = DesignOptions { us_reference: UsReference::Target, us_self_full_cycle: true };
        let d = build_design(&net, &[&london, &paris, &ny], Some(2), &target, &dates).unwrap();
        // slot (FR -> US) is index 5
        assert_eq!(d.x[(5, 2)], 1440.0);
        assert_eq!(d.x[(0, 2)], 1170.0);
    }

    #[test]
    fn winter_and_summer_agree_when_zones_shift_together() {
        let from = ymd(2000, 1, 1);
        let to = ymd(2020, 1, 1);
        let london = MarketClock::constant("GB", chrono_tz::Europe::London, 16 * 60 + 30, from, to).unwrap();
        let berlin = MarketClock::constant("DE", chrono_tz::Europe::Berlin, 17 * 60 + 30, from, to).unwrap();
        let winter = [ymd(2006, 1, 10)];
        let summer = [ymd(2006, 7, 10)];
        let gap = |d: &[NaiveDate]| succession_minutes(modal_close(&london, d).unwrap(), modal_close(&berlin, d).unwrap());
        assert_eq!(gap(&winter), gap(&summer));
    }
}
