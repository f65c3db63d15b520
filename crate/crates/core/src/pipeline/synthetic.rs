//! Synthetic price panels with known spillover structure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveTime, Timelike, Utc};
use chrono_tz::Tz;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::alignment::next_weekday;
use crate::error::{Error, Result};
use crate::ingestion::{render_metadata, write_prices, AuctionPolicy, ClockEpoch, MarketClock, MarketMeta, PriceObs, PriceSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticMarket {
    pub id: String,
    /// IANA zone name.
    pub timezone: String,
    /// Local close, `HH:MM`.
    pub close_local: String,
}

/// `r_target(t)` loads `coefficient` on the latest source return complete before the target closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEdge {
    pub source: String,
    pub target: String,
    pub coefficient: f64,
}

/// GARCH(1,1) with Gaussian innovations, returns in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GarchParams {
    fn default() -> Self {
        Self {
            omega: 0.05,
            alpha: 0.10,
            beta: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub markets: Vec<SyntheticMarket>,
    #[serde(default)]
    pub edges: Vec<SyntheticEdge>,
    #[serde(default)]
    pub garch: GarchParams,
    /// First price date; moved forward to a week day.
    pub start: NaiveDate,
    /// Number of price dates (week days, no holidays).
    pub days: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    250
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub prices: Vec<PriceSeries>,
    pub metadata: BTreeMap<String, MarketMeta>,
    /// Percent log returns, aligned with `prices[k]` from its second date.
    pub returns: Vec<Vec<f64>>,
}

impl SyntheticPanel {
    /// Writes `prices.csv` and `markets.toml` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let prices = dir.join("prices.csv");
        let file = std::fs::File::create(&prices).map_err(|e| Error::io(&prices, e))?;
        write_prices(file, &self.prices)?;
        let meta = dir.join("markets.toml");
        let order = self.prices.iter().map(|p| (p.market_id.as_str(), &self.metadata[&p.market_id]));
        std::fs::write(&meta, render_metadata(order)).map_err(|e| Error::io(&meta, e))?;
        Ok((prices, meta))
    }
}

struct Link {
    source: usize,
    coefficient: f64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.markets.is_empty() || self.days < 2 {
            return Err(Error::InvalidArgument("a synthetic panel needs markets and at least 2 days".into()));
        }
        let g = self.garch;
        if !(g.omega > 0.0 && g.alpha >= 0.0 && g.beta >= 0.0 && g.alpha + g.beta < 1.0) {
            return Err(Error::InvalidArgument(format!("non-stationary GARCH parameters {g:?}")));
        }
        for (k, m) in self.markets.iter().enumerate() {
            if self.markets[..k].iter().any(|o| o.id == m.id) {
                return Err(Error::InvalidArgument(format!("duplicate market {}", m.id)));
            }
        }
        for e in &self.edges {
            if e.source == e.target {
                return Err(Error::InvalidArgument(format!("self-loop on {}", e.source)));
            }
            if !e.coefficient.is_finite() {
                return Err(Error::InvalidArgument(format!("coefficient of {} -> {} is not finite", e.source, e.target)));
            }
        }
        Ok(())
    }

    fn index(&self, id: &str) -> Result<usize> {
        self.markets
            .iter()
            .position(|m| m.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("edge names unknown market {id}")))
    }

    fn clocks(&self, from: NaiveDate, to: NaiveDate) -> Result<Vec<MarketClock>> {
        self.markets
            .iter()
            .map(|m| {
                let tz: Tz = m.timezone.parse().map_err(|_| Error::InvalidArgument(format!("{}: unknown timezone {}", m.id, m.timezone)))?;
                let t = NaiveTime::parse_from_str(&m.close_local, "%H:%M").map_err(|e| Error::InvalidArgument(format!("{}: bad close {}: {e}", m.id, m.close_local)))?;
                MarketClock::new(
                    m.id.clone(),
                    tz,
                    vec![ClockEpoch {
                        from,
                        to,
                        close_local: t.hour() * 60 + t.minute(),
                        auction: AuctionPolicy::LastPrice,
                    }],
                )
            })
            .collect()
    }
}

/// Processing order on one date: by UTC close, same-instant markets after their same-instant sources.
fn day_order(closes: &[DateTime<Utc>], inbound: &[Vec<Link>]) -> Result<Vec<usize>> {
    let n = closes.len();
    let mut order = Vec::with_capacity(n);
    let mut done = vec![false; n];
    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by_key(|&k| (closes[k], k));
    let mut g = 0;
    while g < n {
        let group: Vec<usize> = by_time[g..].iter().copied().take_while(|&k| closes[k] == closes[by_time[g]]).collect();
        g += group.len();
        // Kahn's algorithm restricted to the group
        let mut left = group.clone();
        while !left.is_empty() {
            let pos = left
                .iter()
                .position(|&j| inbound[j].iter().all(|l| closes[l.source] != closes[j] || done[l.source]))
                .ok_or_else(|| Error::InvalidArgument("cyclic adjacency among markets closing at the same instant".into()))?;
            let j = left.remove(pos);
            done[j] = true;
            order.push(j);
        }
    }
    Ok(order)
}

/// Simulated closes in USD plus metadata, deterministic in `seed`.
///
/// Each market's innovation follows GARCH(1,1); a source closing strictly earlier passes on
/// its same-day return, one closing later its previous-day return, and one closing at the
/// same instant its same-day return.
pub fn simulate_panel(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticPanel> {
    spec.validate()?;
    let n = spec.markets.len();
    let mut inbound: Vec<Vec<Link>> = (0..n).map(|_| Vec::new()).collect();
    for e in &spec.edges {
        inbound[spec.index(&e.target)?].push(Link {
            source: spec.index(&e.source)?,
            coefficient: e.coefficient,
        });
    }

    let first = if chrono::Datelike::weekday(&spec.start).number_from_monday() > 5 { next_weekday(spec.start) } else { spec.start };
    let mut dates = vec![first];
    while dates.len() < spec.days {
        dates.push(next_weekday(*dates.last().expect("non-empty")));
    }
    let last = *dates.last().expect("non-empty");
    let clocks = spec.clocks(first, last)?;

    let g = spec.garch;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = vec![g.omega / (1.0 - g.alpha - g.beta); n];
    let mut eps = vec![0.0; n];
    let mut prev = vec![0.0; n];
    let mut returns: Vec<Vec<f64>> = vec![Vec::with_capacity(spec.days - 1); n];

    let closes_on = |d: NaiveDate| clocks.iter().map(|c| c.utc_close_instant(d)).collect::<Result<Vec<_>>>();
    let first_closes = closes_on(first)?;
    let first_order = day_order(&first_closes, &inbound)?;
    // every price date except the first carries a return
    for step in 0..spec.burn_in + spec.days - 1 {
        let (closes, order) = if step < spec.burn_in {
            (first_closes.clone(), first_order.clone())
        } else {
            let c = closes_on(dates[step - spec.burn_in + 1])?;
            let o = day_order(&c, &inbound)?;
            (c, o)
        };
        let mut today = vec![f64::NAN; n];
        for &j in &order {
            h[j] = g.omega + g.alpha * eps[j] * eps[j] + g.beta * h[j];
            let z: f64 = StandardNormal.sample(&mut rng);
            eps[j] = h[j].sqrt() * z;
            let spill: f64 = inbound[j]
                .iter()
                .map(|l| l.coefficient * if closes[l.source] <= closes[j] { today[l.source] } else { prev[l.source] })
                .sum();
            today[j] = eps[j] + spill;
        }
        if step >= spec.burn_in {
            for j in 0..n {
                returns[j].push(today[j]);
            }
        }
        prev = today;
    }

    let mut prices = Vec::with_capacity(n);
    let mut metadata = BTreeMap::new();
    for (j, m) in spec.markets.iter().enumerate() {
        let mut level = 100.0_f64;
        let mut obs = vec![PriceObs { date: first, close: level }];
        for (d, r) in dates[1..].iter().zip(&returns[j]) {
            level *= (r / 100.0).exp();
            obs.push(PriceObs { date: *d, close: level });
        }
        prices.push(PriceSeries::new(m.id.clone(), "USD", obs)?);
        metadata.insert(
            m.id.clone(),
            MarketMeta {
                currency: "USD".into(),
                clock: clocks[j].clone(),
            },
        );
    }
    Ok(SyntheticPanel { prices, metadata, returns })
}
