use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Days, NaiveDate, NaiveTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::Deserialize;

use crate::error::{Error, Result};

/// How the official close of an epoch is determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuctionPolicy {
    /// Last traded price of the continuous session.
    LastPrice,
    /// Closing auction ending at a fixed time.
    PostAuctionFixed,
    /// Random auction end within `window_minutes` after `close_local`; the latest instant is used.
    PostAuctionWindow { window_minutes: u32 },
}

impl AuctionPolicy {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "last" => Ok(AuctionPolicy::LastPrice),
            "fixed" => Ok(AuctionPolicy::PostAuctionFixed),
            other => match other.strip_prefix("window:") {
                Some(m) => m
                    .trim()
                    .parse()
                    .map(|window_minutes| AuctionPolicy::PostAuctionWindow { window_minutes })
                    .map_err(|_| Error::Metadata(format!("bad auction window `{other}`"))),
                None => Err(Error::Metadata(format!("unknown auction policy `{other}`"))),
            },
        }
    }

    fn extra_minutes(self) -> u32 {
        match self {
            AuctionPolicy::PostAuctionWindow { window_minutes } => window_minutes,
            _ => 0,
        }
    }
}

impl std::fmt::Display for AuctionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuctionPolicy::LastPrice => write!(f, "last"),
            AuctionPolicy::PostAuctionFixed => write!(f, "fixed"),
            AuctionPolicy::PostAuctionWindow { window_minutes } => write!(f, "window:{window_minutes}"),
        }
    }
}

/// A period with a constant local closing time. Both ends are inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockEpoch {
    pub from: NaiveDate,
    pub to: NaiveDate,
    /// Local closing time in minutes after midnight.
    pub close_local: u32,
    pub auction: AuctionPolicy,
}

impl ClockEpoch {
    /// Local close used for alignment, including any post-auction window.
    pub fn effective_close(&self) -> u32 {
        self.close_local + self.auction.extra_minutes()
    }
}

/// Closing-hour history of one market.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketClock {
    pub market_id: String,
    pub timezone: Tz,
    epochs: Vec<ClockEpoch>,
}

impl MarketClock {
    /// Epochs must be ordered and contiguous: each starts the day after the previous one ends.
    pub fn new(market_id: impl Into<String>, timezone: Tz, epochs: Vec<ClockEpoch>) -> Result<Self> {
        let market_id = market_id.into();
        if epochs.is_empty() {
            return Err(Error::Metadata(format!("{market_id}: no closing-hour epochs")));
        }
        for (k, e) in epochs.iter().enumerate() {
            if e.from > e.to {
                return Err(Error::Metadata(format!("{market_id}: epoch {} ends before it starts", k + 1)));
            }
            if e.effective_close() >= 24 * 60 {
                return Err(Error::Metadata(format!("{market_id}: epoch {} closes after midnight", k + 1)));
            }
            if k > 0 {
                let expected = epochs[k - 1].to + Days::new(1);
                if e.from != expected {
                    return Err(Error::Metadata(format!(
                        "{market_id}: epoch {} starts {} but the previous one ends {} (gap or overlap)",
                        k + 1,
                        e.from,
                        epochs[k - 1].to
                    )));
                }
            }
        }
        Ok(Self {
            market_id,
            timezone,
            epochs,
        })
    }

    /// A clock with one epoch spanning `from..=to`.
    pub fn constant(
        market_id: impl Into<String>,
        timezone: Tz,
        close_local: u32,
        from: NaiveDate,
        to: NaiveDate,
    ) -> Result<Self> {
        Self::new(
            market_id,
            timezone,
            vec![ClockEpoch {
                from,
                to,
                close_local,
                auction: AuctionPolicy::LastPrice,
            }],
        )
    }

    pub fn epochs(&self) -> &[ClockEpoch] {
        &self.epochs
    }

    pub fn epoch_for(&self, date: NaiveDate) -> Result<&ClockEpoch> {
        let k = self.epochs.partition_point(|e| e.to < date);
        match self.epochs.get(k) {
            Some(e) if e.from <= date => Ok(e),
            _ => Err(Error::NoEpoch {
                market: self.market_id.clone(),
                date,
            }),
        }
    }

    /// UTC instant of the effective close on `date`, using the zone's offset for that day.
    pub fn utc_close_instant(&self, date: NaiveDate) -> Result<DateTime<Utc>> {
        let minutes = self.epoch_for(date)?.effective_close();
        let local = date.and_time(NaiveTime::from_hms_opt(minutes / 60, minutes % 60, 0).expect("minutes < 1440"));
        let resolved = match self.timezone.from_local_datetime(&local) {
            chrono::LocalResult::Single(t) => t,
            // repeated hour: the later reading is the last instant with that local time
            chrono::LocalResult::Ambiguous(_, later) => later,
            // skipped hour: the wall clock jumps forward over `local`
            chrono::LocalResult::None => self
                .timezone
                .from_local_datetime(&(local + chrono::Duration::hours(1)))
                .earliest()
                .ok_or_else(|| Error::Metadata(format!("{}: unresolvable local close on {date}", self.market_id)))?,
        };
        Ok(resolved.with_timezone(&Utc))
    }

    /// Minutes between UTC midnight of `date` and the close (may fall outside `0..1440`).
    pub fn utc_close_minutes(&self, date: NaiveDate) -> Result<i64> {
        let instant = self.utc_close_instant(date)?;
        let midnight = date.and_hms_opt(0, 0, 0).expect("valid").and_utc();
        Ok((instant - midnight).num_minutes())
    }

    pub fn covers(&self, from: NaiveDate, to: NaiveDate) -> bool {
        self.epochs.first().is_some_and(|e| e.from <= from) && self.epochs.last().is_some_and(|e| e.to >= to)
    }
}

/// Everything the pipeline needs to know about a market besides its prices.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketMeta {
    pub currency: String,
    pub clock: MarketClock,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetadata {
    markets: BTreeMap<String, RawMarket>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    timezone: String,
    #[serde(default)]
    currency: Option<String>,
    epoch: Vec<RawEpoch>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpoch {
    from: String,
    to: String,
    close_local: String,
    #[serde(default = "default_auction")]
    auction: String,
}

fn default_auction() -> String {
    "last".to_string()
}

pub fn load_metadata(path: impl AsRef<Path>) -> Result<BTreeMap<String, MarketMeta>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metadata(&text)
}

/// Parse the market metadata file.
///
/// ```toml
/// [markets.GB]
/// timezone = "Europe/London"
/// currency = "GBP"
///
/// [[markets.GB.epoch]]
/// from = "2006-01-01"
/// to = "2013-12-31"
/// close_local = "16:30"
/// auction = "window:5"   # or "last", "fixed"
/// ```
pub fn parse_metadata(text: &str) -> Result<BTreeMap<String, MarketMeta>> {
    let raw: RawMetadata = toml::from_str(text).map_err(|e| Error::Metadata(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (id, m) in raw.markets {
        let timezone: Tz = m
            .timezone
            .parse()
            .map_err(|_| Error::Metadata(format!("{id}: unknown timezone `{}`", m.timezone)))?;
        let epochs = m
            .epoch
            .iter()
            .map(|e| {
                Ok(ClockEpoch {
                    from: parse_date(&id, &e.from)?,
                    to: parse_date(&id, &e.to)?,
                    close_local: parse_hhmm(&id, &e.close_local)?,
                    auction: AuctionPolicy::parse(&e.auction)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let clock = MarketClock::new(id.clone(), timezone, epochs)?;
        out.insert(
            id,
            MarketMeta {
                currency: m.currency.unwrap_or_else(|| "USD".to_string()).to_uppercase(),
                clock,
            },
        );
    }
    Ok(out)
}

fn parse_date(id: &str, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Metadata(format!("{id}: bad date `{s}`: {e}")))
}

fn parse_hhmm(id: &str, s: &str) -> Result<u32> {
    let t = NaiveTime::parse_from_str(s, "%H:%M").map_err(|e| Error::Metadata(format!("{id}: bad time `{s}`: {e}")))?;
    use chrono::Timelike;
    Ok(t.hour() * 60 + t.minute())
}

/// Render clocks back into the TOML accepted by [`parse_metadata`].
pub fn render_metadata<'a>(markets: impl IntoIterator<Item = (&'a str, &'a MarketMeta)>) -> String {
    let mut s = String::new();
    for (id, meta) in markets {
        s.push_str(&format!(
            "[markets.{id}]\ntimezone = \"{}\"\ncurrency = \"{}\"\n\n",
            meta.clock.timezone.name(),
            meta.currency
        ));
        for e in meta.clock.epochs() {
            s.push_str(&format!(
                "[[markets.{id}.epoch]]\nfrom = \"{}\"\nto = \"{}\"\nclose_local = \"{:02}:{:02}\"\nauction = \"{}\"\n\n",
                e.from,
                e.to,
                e.close_local / 60,
                e.close_local % 60,
                e.auction
            ));
        }
    }
    s
}
