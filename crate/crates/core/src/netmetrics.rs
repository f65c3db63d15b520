//! Per-window causality digraphs and their vertex and sequence metrics.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::causality::CausalityDecision;
use crate::error::{Error, Result};

/// Direction in which path lengths are measured from a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Paths leaving the vertex: its reach as a source of spillovers.
    #[default]
    Outgoing,
    /// Paths arriving at the vertex.
    Incoming,
}

/// Directed graph of one window over a fixed vertex order; no self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowNetwork {
    pub window: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    vertices: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl WindowNetwork {
    pub fn from_edges(window: usize, start: NaiveDate, end: NaiveDate, vertices: Vec<String>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let n = vertices.len();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidArgument(format!("invalid edge ({a}, {b}) on {n} vertices")));
            }
            set.insert((a, b));
        }
        Ok(Self { window, start, end, vertices, edges: set })
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    /// Edges as `(source, target)` index pairs in lexicographic order.
    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.edges.contains(&(source, target))
    }

    pub fn out_degree(&self, x: usize) -> usize {
        self.edges.range((x, 0)..(x + 1, 0)).count()
    }

    pub fn in_degree(&self, x: usize) -> usize {
        self.edges.iter().filter(|e| e.1 == x).count()
    }

    fn neighbours(&self, direction: Direction) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for &(a, b) in &self.edges {
            match direction {
                Direction::Outgoing => adj[a].push(b),
                Direction::Incoming => adj[b].push(a),
            }
        }
        adj
    }

    /// `Σ_{y≠x} 1/d(x, y)`, unreachable vertices contributing 0.
    pub fn harmonic_centrality(&self, x: usize, direction: Direction) -> f64 {
        harmonic_from(&self.neighbours(direction), x)
    }

    pub fn harmonic_all(&self, direction: Direction) -> Vec<f64> {
        let adj = self.neighbours(direction);
        (0..self.n()).map(|x| harmonic_from(&adj, x)).collect()
    }

    /// Sum of vertex harmonic centralities.
    pub fn centralization(&self, direction: Direction) -> f64 {
        self.harmonic_all(direction).iter().sum()
    }

    pub fn metrics(&self, direction: Direction) -> Vec<VertexMetrics> {
        let h = self.harmonic_all(direction);
        self.vertices
            .iter()
            .enumerate()
            .map(|(x, m)| VertexMetrics {
                window: self.window,
                market: m.clone(),
                out_deg: self.out_degree(x),
                in_deg: self.in_degree(x),
                harmonic: h[x],
            })
            .collect()
    }

    /// Graphviz rendering: node width grows with out-degree, fill darkens with in-degree.
    pub fn to_dot(&self) -> String {
        let span = self.n().saturating_sub(1).max(1) as f64;
        let mut s = format!("digraph window_{} {{\n  node [shape=circle, style=filled, fixedsize=true];\n", self.window);
        for (x, name) in self.vertices.iter().enumerate() {
            let width = 0.4 + 1.2 * self.out_degree(x) as f64 / span;
            let grey = 95 - (75.0 * self.in_degree(x) as f64 / span).round() as i64;
            let _ = writeln!(s, "  \"{name}\" [width={width:.3}, fillcolor=\"gray{grey}\"];");
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "  \"{}\" -> \"{}\";", self.vertices[a], self.vertices[b]);
        }
        s.push_str("}\n");
        s
    }
}

fn harmonic_from(adj: &[Vec<usize>], x: usize) -> f64 {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[x] = 0;
    let mut queue = VecDeque::from([x]);
    let mut h = 0.0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                h += 1.0 / dist[v] as f64;
                queue.push_back(v);
            }
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexMetrics {
    pub window: usize,
    pub market: String,
    pub out_deg: usize,
    pub in_deg: usize,
    pub harmonic: f64,
}

/// Graph with an edge for every rejected decision. Every ordered pair must appear once.
pub fn build_network(decisions: &[CausalityDecision], vertices: &[String], window: usize, start: NaiveDate, end: NaiveDate) -> Result<WindowNetwork> {
    let index: HashMap<&str, usize> = vertices.iter().enumerate().map(|(k, v)| (v.as_str(), k)).collect();
    let n = vertices.len();
    let mut seen = vec![false; n * n];
    let mut edges = Vec::new();
    for d in decisions {
        let (Some(&a), Some(&b)) = (index.get(d.source.as_str()), index.get(d.target.as_str())) else {
            return Err(Error::InvalidArgument(format!("decision {} -> {} names an unknown market", d.source, d.target)));
        };
        if a == b {
            return Err(Error::InvalidArgument(format!("self-pair decision for {}", d.source)));
        }
        if std::mem::replace(&mut seen[a * n + b], true) {
            return Err(Error::InvalidArgument(format!("duplicate decision {} -> {}", d.source, d.target)));
        }
        if d.reject {
            edges.push((a, b));
        }
    }
    if decisions.len() != n * n.saturating_sub(1) {
        let missing = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .find(|&(a, b)| a != b && !seen[a * n + b])
            .map(|(a, b)| format!("{} -> {}", vertices[a], vertices[b]))
            .unwrap_or_default();
        return Err(Error::InvalidArgument(format!("window {window}: missing decision {missing}")));
    }
    WindowNetwork::from_edges(window, start, end, vertices.to_vec(), edges)
}

/// `|E_{t-s} ∩ … ∩ E_t| / |E_{t-s}|`; `None` when window `t - s` has no edges.
pub fn survival_ratio(nets: &[WindowNetwork], s: usize, t: usize) -> Result<Option<f64>> {
    if s == 0 || t < s || t >= nets.len() {
        return Err(Error::InvalidArgument(format!("survival ratio needs 1 <= s <= t < {}, got s = {s}, t = {t}", nets.len())));
    }
    let base = nets[t - s].edges();
    if base.is_empty() {
        return Ok(None);
    }
    let surviving = base.iter().filter(|e| nets[t - s + 1..=t].iter().all(|n| n.edges.contains(e))).count();
    Ok(Some(surviving as f64 / base.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub t: usize,
    pub s: usize,
    pub ratio: Option<f64>,
}

/// Ratios for every `t` in `s..len`, window indices taken from the networks.
pub fn survival_series(nets: &[WindowNetwork], s: usize) -> Result<Vec<SurvivalPoint>> {
    (s..nets.len())
        .map(|t| {
            Ok(SurvivalPoint {
                t: nets[t].window,
                s,
                ratio: survival_ratio(nets, s, t)?,
            })
        })
        .collect()
}

pub fn write_edges_csv<W: Write>(writer: W, net: &WindowNetwork) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["window", "source", "target"])?;
    for &(a, b) in net.edges() {
        wtr.write_record([net.window.to_string(), net.vertices[a].clone(), net.vertices[b].clone()])?;
    }
    wtr.flush().map_err(|e| Error::io("<edges csv>", e))?;
    Ok(())
}

/// `window,market,out_deg,in_deg,harmonic`
pub fn write_metrics_csv<W: Write>(writer: W, rows: &[VertexMetrics]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["window", "market", "out_deg", "in_deg", "harmonic"])?;
    for r in rows {
        wtr.write_record([r.window.to_string(), r.market.clone(), r.out_deg.to_string(), r.in_deg.to_string(), r.harmonic.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<metrics csv>", e))?;
    Ok(())
}

/// `t,s,ratio`, an empty ratio marking an undefined value.
pub fn write_survival_csv<W: Write>(writer: W, points: &[SurvivalPoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["t", "s", "ratio"])?;
    for p in points {
        wtr.write_record([p.t.to_string(), p.s.to_string(), p.ratio.map(|r| r.to_string()).unwrap_or_default()])?;
    }
    wtr.flush().map_err(|e| Error::io("<survival csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causality::Variant;
    use proptest::prelude::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2006, 1, 1).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|k| format!("m{k}")).collect()
    }

    fn net(n: usize, edges: &[(usize, usize)]) -> WindowNetwork {
        WindowNetwork::from_edges(0, day(), day(), names(n), edges.iter().copied()).unwrap()
    }

    fn decision(a: &str, b: &str, reject: bool) -> CausalityDecision {
        CausalityDecision {
            source: a.into(),
            target: b.into(),
            variant: Variant::Lagged,
            q: 0.0,
            p_value: 0.5,
            reject,
            level_used: 0.01,
        }
    }

    fn all_decisions(v: &[String], reject: impl Fn(usize, usize) -> bool) -> Vec<CausalityDecision> {
        let mut out = vec![];
        for a in 0..v.len() {
            for b in 0..v.len() {
                if a != b {
                    out.push(decision(&v[a], &v[b], reject(a, b)));
                }
            }
        }
        out
    }

    #[test]
    fn empty_and_complete_graphs() {
        let v = names(20);
        let empty = build_network(&all_decisions(&v, |_, _| false), &v, 0, day(), day()).unwrap();
        assert!(empty.edges().is_empty());
        assert!((0..20).all(|x| empty.out_degree(x) == 0 && empty.in_degree(x) == 0));
        let full = build_network(&all_decisions(&v, |_, _| true), &v, 0, day(), day()).unwrap();
        assert_eq!(full.edges().len(), 380);
        assert!((0..20).all(|x| full.out_degree(x) == 19 && full.in_degree(x) == 19));
        assert!(full.harmonic_all(Direction::Outgoing).iter().all(|&h| h == 19.0));
    }

    #[test]
    fn direct_degree_count() {
        let v = names(3);
        let g = build_network(&all_decisions(&v, |a, b| a == 0 && b > 0), &v, 0, day(), day()).unwrap();
        assert_eq!((g.out_degree(0), g.in_degree(1), g.in_degree(2)), (2, 1, 1));
    }

    #[test]
    fn missing_or_duplicate_decisions() {
        let v = names(3);
        let mut d = all_decisions(&v, |_, _| false);
        d.pop();
        assert!(build_network(&d, &v, 0, day(), day()).is_err());
        d.push(d[0].clone());
        assert!(build_network(&d, &v, 0, day(), day()).is_err());
    }

    #[test]
    fn harmonic_on_path() {
        let g = net(3, &[(0, 1), (1, 2)]);
        assert_eq!(g.harmonic_centrality(0, Direction::Outgoing), 1.5);
        assert_eq!(g.harmonic_centrality(2, Direction::Outgoing), 0.0);
        assert_eq!(g.harmonic_centrality(2, Direction::Incoming), 1.5);
    }

    #[test]
    fn survival_examples() {
        let a = net(3, &[(0, 1), (1, 2)]);
        let b = net(3, &[(1, 2)]);
        let e = net(3, &[]);
        assert_eq!(survival_ratio(&[a.clone(), a.clone()], 1, 1).unwrap(), Some(1.0));
        assert_eq!(survival_ratio(&[a.clone(), b.clone()], 1, 1).unwrap(), Some(0.5));
        assert_eq!(survival_ratio(&[e, b.clone()], 1, 1).unwrap(), None);
        assert!(survival_ratio(&[a, b], 2, 1).is_err());
    }

    #[test]
    fn dot_encodes_degrees() {
        let g = net(3, &[(0, 1), (0, 2)]);
        let dot = g.to_dot();
        assert!(dot.contains("\"m0\" [width=1.600, fillcolor=\"gray95\"]"));
        assert!(dot.contains("\"m1\" [width=0.400, fillcolor=\"gray57\"]"));
        assert!(dot.contains("\"m0\" -> \"m2\";"));
    }

    #[test]
    fn csv_layouts() {
        let g = net(2, &[(1, 0)]);
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &g.metrics(Direction::Outgoing)).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "window,market,out_deg,in_deg,harmonic\n0,m0,0,1,0\n0,m1,1,0,1\n");
        let mut buf = Vec::new();
        write_survival_csv(&mut buf, &[SurvivalPoint { t: 3, s: 1, ratio: None }, SurvivalPoint { t: 4, s: 1, ratio: Some(0.5) }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,s,ratio\n3,1,\n4,1,0.5\n");
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..9).prop_flat_map(|n| {
            (Just(n), proptest::collection::vec((0..n, 0..n), 0..30).prop_map(|e| e.into_iter().filter(|(a, b)| a != b).collect()))
        })
    }

    proptest! {
        #[test]
        fn degree_sums_and_bounds((n, edges) in arb_graph()) {
            let g = net(n, &edges);
            let out: usize = (0..n).map(|x| g.out_degree(x)).sum();
            let inn: usize = (0..n).map(|x| g.in_degree(x)).sum();
            prop_assert_eq!(out, g.edges().len());
            prop_assert_eq!(inn, g.edges().len());
            for x in 0..n {
                let h = g.harmonic_centrality(x, Direction::Outgoing);
                prop_assert!(h >= 0.0 && h <= (n - 1) as f64);
                prop_assert_eq!(h == (n - 1) as f64, g.out_degree(x) == n - 1);
            }
        }

        #[test]
        fn relabeling_equivariance((n, edges) in arb_graph(), rot in 0usize..8) {
            let perm: Vec<usize> = (0..n).map(|k| (k + rot) % n).collect();
            let g = net(n, &edges);
            let h = net(n, &edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect::<Vec<_>>());
            for dir in [Direction::Outgoing, Direction::Incoming] {
                let (hg, hh) = (g.harmonic_all(dir), h.harmonic_all(dir));
                for x in 0..n {
                    prop_assert_eq!(hg[x], hh[perm[x]]);
                    prop_assert_eq!(g.out_degree(x), h.out_degree(perm[x]));
                }
            }
        }

        #[test]
        fn survival_shrinks_with_longer_chains(seq in proptest::collection::vec(proptest::collection::btree_set((0usize..4, 0usize..4), 0..12), 3..8)) {
            let nets: Vec<WindowNetwork> = seq.iter().map(|e| net(4, &e.iter().copied().filter(|(a, b)| a != b).collect::<Vec<_>>())).collect();
            let t = nets.len() - 1;
            for s in 1..=t {
                let inter = |from: usize| nets[from].edges().iter().filter(|e| nets[from + 1..=t].iter().all(|n| n.edges().contains(e))).count();
                prop_assert!(inter(t - s) <= inter(t - s + 1));
                if let Some(r) = survival_ratio(&nets, s, t).unwrap() {
                    prop_assert!((0.0..=1.0).contains(&r));
                }
            }
        }
    }
}
