use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ingestion::prices::{PriceObs, PriceSeries};

/// Which side of the pair is USD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuoteSide {
    /// `XXXUSD`: the rate is USD per unit of the foreign currency, so closes are multiplied.
    UsdPerUnit,
    /// `USDXXX`: the rate is foreign units per USD, so closes are divided.
    UnitsPerUsd,
}

/// Daily exchange rates for one currency pair written `BASEQUOTE` (an optional `/` is accepted).
#[derive(Debug, Clone, PartialEq)]
pub struct FxSeries {
    pub pair: String,
    pub foreign: String,
    pub side: QuoteSide,
    rates: Vec<(NaiveDate, f64)>,
}

impl FxSeries {
    pub fn new(pair: &str, rates: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let code: String = pair.chars().filter(|c| c.is_ascii_alphabetic()).collect::<String>().to_uppercase();
        if code.len() != 6 {
            return Err(Error::InvalidArgument(format!("currency pair `{pair}` is not of the form BASEQUOTE")));
        }
        let (base, quote) = code.split_at(3);
        let (foreign, side) = match (base, quote) {
            (b, "USD") if b != "USD" => (b.to_string(), QuoteSide::UsdPerUnit),
            ("USD", q) if q != "USD" => (q.to_string(), QuoteSide::UnitsPerUsd),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "currency pair `{pair}` must have USD on exactly one side"
                )))
            }
        };
        for (k, (date, rate)) in rates.iter().enumerate() {
            if !(rate.is_finite() && *rate > 0.0) {
                return Err(Error::InvalidArgument(format!("non-positive fx rate for {pair} on {date}")));
            }
            if k > 0 && *date <= rates[k - 1].0 {
                return Err(Error::UnorderedDate { row: k + 1, date: *date });
            }
        }
        Ok(Self {
            pair: code,
            foreign,
            side,
            rates,
        })
    }

    pub fn rate_on(&self, date: NaiveDate) -> Option<f64> {
        self.rates
            .binary_search_by_key(&date, |r| r.0)
            .ok()
            .map(|k| self.rates[k].1)
    }

    pub fn rates(&self) -> &[(NaiveDate, f64)] {
        &self.rates
    }

    fn apply(&self, close: f64, rate: f64) -> f64 {
        match self.side {
            QuoteSide::UsdPerUnit => close * rate,
            QuoteSide::UnitsPerUsd => close / rate,
        }
    }

    fn check_currency(&self, series: &PriceSeries) -> Result<()> {
        if series.currency.eq_ignore_ascii_case(&self.foreign) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "fx pair {} does not convert {} prices of {}",
                self.pair, series.currency, series.market_id
            )))
        }
    }
}

/// Load a long-format FX file (`date,pair,rate`), one [`FxSeries`] per foreign currency.
pub fn load_fx(path: impl AsRef<Path>) -> Result<BTreeMap<String, FxSeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_fx(file)
}

pub(crate) fn read_fx<R: Read>(reader: R) -> Result<BTreeMap<String, FxSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut raw: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 2;
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d").map_err(|e| Error::Parse {
            row,
            msg: format!("malformed date `{}`: {e}", field(0)),
        })?;
        let rate: f64 = field(2).parse().map_err(|_| Error::Parse {
            row,
            msg: format!("non-numeric rate `{}`", field(2)),
        })?;
        raw.entry(field(1).to_string()).or_default().push((date, rate));
    }
    let mut out = BTreeMap::new();
    for (pair, mut rates) in raw {
        rates.sort_by_key(|r| r.0);
        let fx = FxSeries::new(&pair, rates)?;
        out.insert(fx.foreign.clone(), fx);
    }
    Ok(out)
}

/// Convert a series to USD with an exact-date join. Every date of the series must have a rate.
pub fn convert_to_usd(series: &PriceSeries, fx: &FxSeries) -> Result<PriceSeries> {
    if series.currency.eq_ignore_ascii_case("USD") {
        return Ok(series.clone());
    }
    fx.check_currency(series)?;
    let missing: Vec<NaiveDate> = series.dates().filter(|d| fx.rate_on(*d).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingFx { dates: missing });
    }
    convert_to_usd_lenient(series, fx).map(|(s, _)| s)
}

/// Like [`convert_to_usd`] but drops dates without a rate, returning how many were dropped.
pub fn convert_to_usd_lenient(series: &PriceSeries, fx: &FxSeries) -> Result<(PriceSeries, usize)> {
    if series.currency.eq_ignore_ascii_case("USD") {
        return Ok((series.clone(), 0));
    }
    fx.check_currency(series)?;
    let mut dropped = 0;
    let obs: Vec<PriceObs> = series
        .observations()
        .iter()
        .filter_map(|o| match fx.rate_on(o.date) {
            Some(rate) => Some(PriceObs {
                date: o.date,
                close: fx.apply(o.close, rate),
            }),
            None => {
                dropped += 1;
                None
            }
        })
        .collect();
    Ok((PriceSeries::new(series.market_id.clone(), "USD", obs)?, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2006, 1, day).unwrap()
    }

    fn eur(closes: &[(u32, f64)]) -> PriceSeries {
        PriceSeries::new(
            "DE",
            "EUR",
            closes.iter().map(|&(day, close)| PriceObs { date: d(day), close }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn eur_multiplies() {
        let fx = FxSeries::new("EURUSD", vec![(d(2), 1.25)]).unwrap();
        let out = convert_to_usd(&eur(&[(2, 100.0)]), &fx).unwrap();
        assert_eq!(out.currency, "USD");
        assert_eq!(out.observations()[0].close, 125.0);
    }

    #[test]
    fn usd_quoted_pair_divides() {
        let fx = FxSeries::new("USD/JPY", vec![(d(2), 110.0)]).unwrap();
        let jp = PriceSeries::new("JP", "JPY", vec![PriceObs { date: d(2), close: 11000.0 }]).unwrap();
        let out = convert_to_usd(&jp, &fx).unwrap();
        assert!((out.observations()[0].close - 100.0).abs() < 1e-12);
    }

    #[test]
    fn usd_identity() {
        let fx = FxSeries::new("EURUSD", vec![]).unwrap();
        let us = PriceSeries::new("US", "USD", vec![PriceObs { date: d(2), close: 10.0 }]).unwrap();
        assert_eq!(convert_to_usd(&us, &fx).unwrap(), us);
    }

    #[test]
    fn missing_rate_is_error() {
        let fx = FxSeries::new("EURUSD", vec![(d(2), 1.2), (d(4), 1.3)]).unwrap();
        let err = convert_to_usd(&eur(&[(2, 1.0), (3, 1.0), (4, 1.0)]), &fx).unwrap_err();
        match err {
            Error::MissingFx { dates } => assert_eq!(dates, vec![d(3)]),
            other => panic!("unexpected {other}"),
        }
        let (s, dropped) = convert_to_usd_lenient(&eur(&[(2, 1.0), (3, 1.0), (4, 1.0)]), &fx).unwrap();
        assert_eq!((s.len(), dropped), (2, 1));
    }

    #[test]
    fn long_format_file() {
        let text = "date,pair,rate\n2006-01-03,EURUSD,1.2\n2006-01-02,EURUSD,1.1\n2006-01-02,USDJPY,115\n";
        let fx = read_fx(text.as_bytes()).unwrap();
        assert_eq!(fx["EUR"].rates().len(), 2);
        assert_eq!(fx["EUR"].rate_on(d(2)), Some(1.1));
        assert_eq!(fx["JPY"].side, QuoteSide::UnitsPerUsd);
    }

    proptest! {
        #[test]
        fn conversion_commutes_with_filtering(
            closes in proptest::collection::vec(1.0f64..1e4, 1..25),
            rates in proptest::collection::vec(0.5f64..2.0, 25),
            keep in proptest::collection::vec(any::<bool>(), 25),
        ) {
            let series = eur(&closes.iter().enumerate().map(|(k, &c)| (k as u32 + 1, c)).collect::<Vec<_>>());
            let fx = FxSeries::new("EURUSD", rates.iter().enumerate().map(|(k, &r)| (d(k as u32 + 1), r)).collect()).unwrap();
            let pred = |date: NaiveDate| keep[date.day0() as usize];
            let a = convert_to_usd(&series, &fx).unwrap().filter_dates(pred);
            let b = convert_to_usd(&series.filter_dates(pred), &fx).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    use chrono::Datelike;
}
