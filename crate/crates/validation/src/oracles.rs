//! Dense reference computations for network metrics.

use std::collections::BTreeSet;

use rand::Rng;

pub type Edge = (usize, usize);

/// All-pairs shortest path lengths by Floyd-Warshall; `None` when unreachable.
pub fn floyd_warshall(n: usize, edges: &BTreeSet<Edge>) -> Vec<Vec<Option<usize>>> {
    let mut d = vec![vec![None; n]; n];
    for (x, row) in d.iter_mut().enumerate() {
        row[x] = Some(0);
    }
    for &(a, b) in edges {
        d[a][b] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// `Σ 1/d(x, y)` over reachable `y ≠ x`, terms added in increasing distance.
///
/// With `incoming` the distances run from `y` to `x`.
pub fn harmonic(n: usize, edges: &BTreeSet<Edge>, incoming: bool) -> Vec<f64> {
    let d = floyd_warshall(n, edges);
    (0..n)
        .map(|x| {
            let mut lengths: Vec<usize> = (0..n)
                .filter(|&y| y != x)
                .filter_map(|y| if incoming { d[y][x] } else { d[x][y] })
                .collect();
            lengths.sort_unstable();
            lengths.iter().fold(0.0, |acc, &l| acc + 1.0 / l as f64)
        })
        .collect()
}

/// Share of the edges of window `t - s` present in every window through `t`.
pub fn survival(sets: &[BTreeSet<Edge>], s: usize, t: usize) -> Option<f64> {
    let base = &sets[t - s];
    if base.is_empty() {
        return None;
    }
    let mut kept = base.clone();
    for later in &sets[t - s + 1..=t] {
        kept = kept.intersection(later).copied().collect();
    }
    Some(kept.len() as f64 / base.len() as f64)
}

/// Each of the `n(n-1)` ordered pairs present with probability `p`.
pub fn random_digraph<R: Rng>(n: usize, p: f64, rng: &mut R) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random::<f64>() < p {
                out.insert((a, b));
            }
        }
    }
    out
}
