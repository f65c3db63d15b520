//! Pairwise calendars, log returns and closing-time alignment.
//!
//! For an ordered pair `i -> j` the target return `r_j(t)` is paired with the most
//! recent return of `i` that was complete before `j` closed on `t`: `r_i(t)` when `i`
//! closes strictly earlier in UTC, `r_i(t-1)` otherwise (ties included).

use std::collections::BTreeSet;
use std::io::Write;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{MarketClock, PriceSeries};

pub fn next_weekday(date: NaiveDate) -> NaiveDate {
    let step = match date.weekday() {
        Weekday::Fri => 3,
        Weekday::Sat => 2,
        _ => 1,
    };
    date + Days::new(step)
}

pub fn prev_weekday(date: NaiveDate) -> NaiveDate {
    let step = match date.weekday() {
        Weekday::Mon => 3,
        Weekday::Sun => 2,
        _ => 1,
    };
    date - Days::new(step)
}

/// Adjacent week days, with Friday to Monday counted as adjacent.
pub fn is_consecutive(prev: NaiveDate, next: NaiveDate) -> bool {
    next_weekday(prev) == next
}

/// Dated values of one market: log returns, or standardized residuals derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub market_id: String,
    points: Vec<(NaiveDate, f64)>,
}

impl ReturnSeries {
    pub fn new(market_id: impl Into<String>, points: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let market_id = market_id.into();
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::UnorderedDate { row: 0, date: w[1].0 });
        }
        Ok(Self { market_id, points })
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.points
            .binary_search_by_key(&date, |p| p.0)
            .ok()
            .map(|k| self.points[k].1)
    }

    /// Same market, values replaced element-wise (e.g. returns by residuals).
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} dates of {}",
                values.len(),
                self.points.len(),
                self.market_id
            )));
        }
        Ok(Self {
            market_id: self.market_id.clone(),
            points: self.points.iter().zip(values).map(|(p, v)| (p.0, *v)).collect(),
        })
    }

    pub fn restrict_to(&self, dates: &BTreeSet<NaiveDate>) -> Self {
        Self {
            market_id: self.market_id.clone(),
            points: self.points.iter().filter(|p| dates.contains(&p.0)).copied().collect(),
        }
    }
}

/// Dates on which both markets traded, in order.
pub fn pairwise_calendar(a: &PriceSeries, b: &PriceSeries) -> Result<Vec<NaiveDate>> {
    let (oa, ob) = (a.observations(), b.observations());
    let (mut x, mut y) = (0, 0);
    let mut out = Vec::new();
    while x < oa.len() && y < ob.len() {
        match oa[x].date.cmp(&ob[y].date) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                out.push(oa[x].date);
                x += 1;
                y += 1;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyIntersection {
            a: a.market_id.clone(),
            b: b.market_id.clone(),
        });
    }
    Ok(out)
}

/// Log returns between consecutive retained dates; returns spanning a dropped week day are skipped.
/// Each return is stamped with its terminal date.
pub fn compute_returns(series: &PriceSeries, retained: &[NaiveDate]) -> Result<ReturnSeries> {
    if retained.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least 2 retained dates, got {}",
            series.market_id,
            retained.len()
        )));
    }
    let closes = retained
        .iter()
        .map(|d| {
            series.close_on(*d).ok_or_else(|| {
                Error::InvalidArgument(format!("retained date {d} is not a trading date of {}", series.market_id))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let points = retained
        .windows(2)
        .zip(closes.windows(2))
        .filter(|(d, _)| is_consecutive(d[0], d[1]))
        .map(|(d, p)| (d[1], (p[1] / p[0]).ln()))
        .collect();
    ReturnSeries::new(series.market_id.clone(), points)
}

/// Returns of a series on its own trading calendar.
pub fn own_returns(series: &PriceSeries) -> Result<ReturnSeries> {
    let dates: Vec<NaiveDate> = series.dates().collect();
    compute_returns(series, &dates)
}

/// Returns of both markets on their common calendar.
pub fn pair_returns(a: &PriceSeries, b: &PriceSeries) -> Result<(ReturnSeries, ReturnSeries)> {
    let common = pairwise_calendar(a, b)?;
    Ok((compute_returns(a, &common)?, compute_returns(b, &common)?))
}

/// 1 when the source closes at or after the target on `date` (UTC), 0 when strictly before.
pub fn shift_for(source: &MarketClock, target: &MarketClock, date: NaiveDate) -> Result<u8> {
    let s = source.utc_close_instant(date)?;
    let t = target.utc_close_instant(date)?;
    Ok(if s < t { 0 } else { 1 })
}

/// Whether the two markets close at the same UTC instant on every given date.
pub fn closes_coincide(a: &MarketClock, b: &MarketClock, dates: impl IntoIterator<Item = NaiveDate>) -> Result<bool> {
    for d in dates {
        if a.utc_close_instant(d)? != b.utc_close_instant(d)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedEntry {
    pub target_date: NaiveDate,
    pub source_date: NaiveDate,
    pub source: f64,
    pub target: f64,
    pub shift: u8,
}

/// Source values paired with the target values they may explain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub source_id: String,
    pub target_id: String,
    pub entries: Vec<AlignedEntry>,
}

/// Series laid out for the cross-correlation test: lag 1 of `target` against `source`
/// reaches exactly the aligned source value of each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct HongFrame {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

impl AlignedPair {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The shift shared by every entry, or `None` when a closing-hour change mixes them.
    pub fn uniform_shift(&self) -> Option<u8> {
        let first = self.entries.first()?.shift;
        self.entries.iter().all(|e| e.shift == first).then_some(first)
    }

    pub fn has_mixed_shift(&self) -> bool {
        !self.is_empty() && self.uniform_shift().is_none()
    }

    /// Advance the source by one entry so that the aligned pairing sits at lag 1.
    ///
    /// Entry `e` contributes `(source of e + 1, target of e)`; lag 0 then pairs `r_j(t)`
    /// with the source return of the next target date, which for simultaneous closes
    /// is the same-day `r_i(t)`.
    pub fn hong_frame(&self) -> HongFrame {
        let n = self.entries.len().saturating_sub(1);
        HongFrame {
            source: self.entries.iter().skip(1).map(|e| e.source).collect(),
            target: self.entries.iter().take(n).map(|e| e.target).collect(),
        }
    }

    /// Debug dump: `date_j,r_source,r_target,shift`.
    pub fn write_debug_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["date_j", "r_source", "r_target", "shift"])?;
        for e in &self.entries {
            wtr.write_record([
                e.target_date.to_string(),
                e.source.to_string(),
                e.target.to_string(),
                e.shift.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<aligned pair>", e))?;
        Ok(())
    }
}

/// Align `source -> target` using each date's closing epochs.
///
/// Both inputs should live on the pair's common return calendar. A target date whose
/// required source value is missing is skipped, as is one where even the previous
/// source close falls after the target close (only possible when local closes straddle
/// UTC midnight in different zones).
pub fn align(
    source: &ReturnSeries,
    target: &ReturnSeries,
    source_clock: &MarketClock,
    target_clock: &MarketClock,
) -> Result<AlignedPair> {
    let mut entries = Vec::with_capacity(target.len());
    for &(t, target_value) in target.points() {
        let shift = shift_for(source_clock, target_clock, t)?;
        let source_date = if shift == 0 { t } else { prev_weekday(t) };
        if shift == 1 && source_clock.utc_close_instant(source_date)? > target_clock.utc_close_instant(t)? {
            continue;
        }
        if let Some(source_value) = source.get(source_date) {
            entries.push(AlignedEntry {
                target_date: t,
                source_date,
                source: source_value,
                target: target_value,
                shift,
            });
        }
    }
    Ok(AlignedPair {
        source_id: source.market_id.clone(),
        target_id: target.market_id.clone(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::PriceObs;
    use proptest::prelude::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn series(id: &str, obs: &[(NaiveDate, f64)]) -> PriceSeries {
        PriceSeries::new(id, "USD", obs.iter().map(|&(date, close)| PriceObs { date, close }).collect()).unwrap()
    }

    fn utc_clock(id: &str, minutes: u32) -> MarketClock {
        MarketClock::constant(id, chrono_tz::UTC, minutes, ymd(2000, 1, 1), ymd(2030, 12, 31)).unwrap()
    }

    // 2006-01-02 is a Monday
    fn week(days: &[u32]) -> Vec<(NaiveDate, f64)> {
        days.iter().map(|&d| (ymd(2006, 1, d), 100.0 + d as f64)).collect()
    }

    #[test]
    fn calendar_excludes_missing_day() {
        let i = series("i", &week(&[2, 3, 4, 5, 6]));
        let j = series("j", &week(&[2, 3, 5, 6]));
        assert_eq!(pairwise_calendar(&i, &j).unwrap(), vec![ymd(2006, 1, 2), ymd(2006, 1, 3), ymd(2006, 1, 5), ymd(2006, 1, 6)]);
        assert_eq!(pairwise_calendar(&i, &i).unwrap().len(), 5);
        let k = series("k", &week(&[9, 10]));
        assert!(matches!(pairwise_calendar(&i, &k), Err(Error::EmptyIntersection { .. })));
    }

    #[test]
    fn simple_log_return() {
        let s = series("i", &[(ymd(2006, 1, 2), 100.0), (ymd(2006, 1, 3), 102.0)]);
        let r = own_returns(&s).unwrap();
        assert!((r.points()[0].1 - 0.019_802_627_296_179_7).abs() < 1e-12);
    }

    #[test]
    fn friday_to_monday_is_consecutive() {
        let s = series("i", &[(ymd(2006, 1, 6), 100.0), (ymd(2006, 1, 9), 100.0)]);
        let r = own_returns(&s).unwrap();
        assert_eq!(r.points(), &[(ymd(2006, 1, 9), 0.0)]);
    }

    #[test]
    fn thursday_to_monday_dropped() {
        // Mon..Thu, Friday removed by the pair calendar, then Monday
        let retained: Vec<NaiveDate> = [2, 3, 4, 5, 9].iter().map(|&d| ymd(2006, 1, d)).collect();
        let s = series("i", &week(&[2, 3, 4, 5, 6, 9]));
        let r = compute_returns(&s, &retained).unwrap();
        // enumerate the gap rule directly: a return exists only where the next weekday follows
        let expected: Vec<NaiveDate> = retained
            .windows(2)
            .filter(|w| (w[1] - w[0]).num_days() == 1 || (w[0].weekday() == Weekday::Fri && (w[1] - w[0]).num_days() == 3))
            .map(|w| w[1])
            .collect();
        assert_eq!(r.dates().collect::<Vec<_>>(), expected);
        assert_eq!(expected, vec![ymd(2006, 1, 3), ymd(2006, 1, 4), ymd(2006, 1, 5)]);
    }

    #[test]
    fn too_few_dates() {
        let s = series("i", &week(&[2]));
        assert!(matches!(own_returns(&s), Err(Error::InsufficientData(_))));
    }

    fn flat_returns(id: &str, days: &[u32]) -> ReturnSeries {
        ReturnSeries::new(id, days.iter().map(|&d| (ymd(2006, 1, d), d as f64)).collect()).unwrap()
    }

    #[test]
    fn later_source_uses_previous_day() {
        let ri = flat_returns("i", &[3, 4, 5, 6]);
        let rj = flat_returns("j", &[3, 4, 5, 6]);
        let p = align(&ri, &rj, &utc_clock("i", 16 * 60), &utc_clock("j", 15 * 60)).unwrap();
        assert_eq!(p.uniform_shift(), Some(1));
        assert_eq!(p.entries[0].target_date, ymd(2006, 1, 4));
        assert_eq!(p.entries[0].source, 3.0);
    }

    #[test]
    fn earlier_source_uses_same_day() {
        let ri = flat_returns("i", &[3, 4, 5, 6]);
        let rj = flat_returns("j", &[3, 4, 5, 6]);
        let p = align(&ri, &rj, &utc_clock("i", 16 * 60), &utc_clock("j", 17 * 60)).unwrap();
        assert_eq!(p.uniform_shift(), Some(0));
        assert_eq!(p.len(), 4);
        assert!(p.entries.iter().all(|e| e.source == e.target));
    }

    #[test]
    fn identical_clocks_shift_both_ways() {
        let c = utc_clock("i", 16 * 60);
        let ri = flat_returns("i", &[3, 4, 5]);
        let rj = flat_returns("j", &[3, 4, 5]);
        assert_eq!(align(&ri, &rj, &c, &c).unwrap().uniform_shift(), Some(1));
        assert_eq!(align(&rj, &ri, &c, &c).unwrap().uniform_shift(), Some(1));
    }

    #[test]
    fn closing_hour_change_splits_pairing() {
        use crate::ingestion::{AuctionPolicy, ClockEpoch};
        let i = MarketClock::new(
            "i",
            chrono_tz::UTC,
            vec![
                ClockEpoch { from: ymd(2006, 1, 1), to: ymd(2006, 1, 4), close_local: 16 * 60, auction: AuctionPolicy::LastPrice },
                ClockEpoch { from: ymd(2006, 1, 5), to: ymd(2006, 12, 31), close_local: 14 * 60, auction: AuctionPolicy::LastPrice },
            ],
        )
        .unwrap();
        let j = utc_clock("j", 15 * 60);
        let p = align(&flat_returns("i", &[3, 4, 5, 6]), &flat_returns("j", &[3, 4, 5, 6]), &i, &j).unwrap();
        let shifts: Vec<u8> = p.entries.iter().map(|e| e.shift).collect();
        assert_eq!(shifts, vec![1, 0, 0]);
        assert!(p.has_mixed_shift());
    }

    #[test]
    fn missing_epoch_is_error() {
        let short = MarketClock::constant("i", chrono_tz::UTC, 600, ymd(2006, 1, 4), ymd(2006, 1, 31)).unwrap();
        let r = flat_returns("i", &[3, 4]);
        assert!(matches!(align(&r, &r, &short, &utc_clock("j", 0)), Err(Error::NoEpoch { .. })));
    }

    #[test]
    fn hong_frame_puts_aligned_value_at_lag_one() {
        let p = align(&flat_returns("i", &[3, 4, 5, 6]), &flat_returns("j", &[3, 4, 5, 6]), &utc_clock("i", 600), &utc_clock("j", 700)).unwrap();
        let f = p.hong_frame();
        for t in 1..f.target.len() {
            assert_eq!(f.source[t - 1], p.entries[t].source);
            assert_eq!(f.target[t], p.entries[t].target);
        }
    }

    #[test]
    fn debug_csv_layout() {
        let p = align(&flat_returns("i", &[3, 4]), &flat_returns("j", &[3, 4]), &utc_clock("i", 600), &utc_clock("j", 700)).unwrap();
        let mut buf = Vec::new();
        p.write_debug_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "date_j,r_source,r_target,shift\n2006-01-03,3,3,0\n2006-01-04,4,4,0\n");
    }

    fn arb_calendar() -> impl Strategy<Value = Vec<bool>> {
        proptest::collection::vec(proptest::bool::weighted(0.85), 10..60)
    }

    fn calendar_series(id: &str, mask: &[bool], seed: f64) -> PriceSeries {
        let mut d = ymd(2006, 1, 2);
        let mut obs = Vec::new();
        for (k, keep) in mask.iter().enumerate() {
            if *keep {
                obs.push((d, 100.0 + ((k as f64 + seed) * 1.7).sin()));
            }
            d = next_weekday(d);
        }
        series(id, &obs)
    }

    proptest! {
        #[test]
        fn alignment_never_looks_ahead(
            mi in arb_calendar(), mj in arb_calendar(),
            ci in 0u32..1440, cj in 0u32..1440,
            zi in 0usize..3, zj in 0usize..3,
        ) {
            let zones = [chrono_tz::UTC, chrono_tz::Europe::London, chrono_tz::America::New_York];
            let n = mi.len().min(mj.len());
            let (si, sj) = (calendar_series("i", &mi[..n], 0.3), calendar_series("j", &mj[..n], 1.1));
            let Ok((ri, rj)) = pair_returns(&si, &sj) else { return Ok(()); };
            let clock_i = MarketClock::constant("i", zones[zi], ci, ymd(2005, 1, 1), ymd(2008, 1, 1)).unwrap();
            let clock_j = MarketClock::constant("j", zones[zj], cj, ymd(2005, 1, 1), ymd(2008, 1, 1)).unwrap();
            for (src, tgt, cs, ct) in [(&ri, &rj, &clock_i, &clock_j), (&rj, &ri, &clock_j, &clock_i)] {
                let p = align(src, tgt, cs, ct).unwrap();
                for e in &p.entries {
                    prop_assert!(cs.utc_close_instant(e.source_date).unwrap() <= ct.utc_close_instant(e.target_date).unwrap());
                }
            }
        }

        #[test]
        fn dropping_leading_dates(
            mi in arb_calendar(), ci in 0u32..1440, cj in 0u32..1440, k in 0usize..8,
        ) {
            let si = calendar_series("i", &mi, 0.0);
            let sj = calendar_series("j", &mi, 2.0);
            let Ok((ri, rj)) = pair_returns(&si, &sj) else { return Ok(()); };
            let (clock_i, clock_j) = (utc_clock("i", ci), utc_clock("j", cj));
            let full = align(&ri, &rj, &clock_i, &clock_j).unwrap();
            let keep: BTreeSet<NaiveDate> = ri.dates().skip(k).collect();
            let cut = align(&ri.restrict_to(&keep), &rj.restrict_to(&keep), &clock_i, &clock_j).unwrap();
            prop_assert!(full.len() - cut.len() <= k + 1);
            prop_assert_eq!(&full.entries[full.len() - cut.len()..], &cut.entries[..]);
        }
    }
}
