use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceObs {
    pub date: NaiveDate,
    pub close: f64,
}

/// Daily closes of one market in a single currency.
///
/// Dates are strictly increasing and every close is positive and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub market_id: String,
    pub currency: String,
    observations: Vec<PriceObs>,
}

impl PriceSeries {
    pub fn new(market_id: impl Into<String>, currency: impl Into<String>, observations: Vec<PriceObs>) -> Result<Self> {
        let market_id = market_id.into();
        for (k, obs) in observations.iter().enumerate() {
            if !(obs.close.is_finite() && obs.close > 0.0) {
                return Err(Error::NonPositivePrice { row: k + 1, market: market_id });
            }
            if k > 0 {
                let prev = observations[k - 1].date;
                if obs.date == prev {
                    return Err(Error::DuplicateDate { row: k + 1, date: obs.date });
                }
                if obs.date < prev {
                    return Err(Error::UnorderedDate { row: k + 1, date: obs.date });
                }
            }
        }
        Ok(Self {
            market_id,
            currency: currency.into(),
            observations,
        })
    }

    pub fn observations(&self) -> &[PriceObs] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.observations.iter().map(|o| o.date)
    }

    pub fn close_on(&self, date: NaiveDate) -> Option<f64> {
        self.observations
            .binary_search_by_key(&date, |o| o.date)
            .ok()
            .map(|k| self.observations[k].close)
    }

    /// Observations with `from <= date < to`.
    pub fn between(&self, from: NaiveDate, to: NaiveDate) -> PriceSeries {
        PriceSeries {
            market_id: self.market_id.clone(),
            currency: self.currency.clone(),
            observations: self
                .observations
                .iter()
                .filter(|o| o.date >= from && o.date < to)
                .copied()
                .collect(),
        }
    }

    /// Keep only the observations whose date satisfies `keep`.
    pub fn filter_dates(&self, mut keep: impl FnMut(NaiveDate) -> bool) -> PriceSeries {
        PriceSeries {
            market_id: self.market_id.clone(),
            currency: self.currency.clone(),
            observations: self.observations.iter().filter(|o| keep(o.date)).copied().collect(),
        }
    }
}

/// Column mapping for a wide price CSV (`date,<market>,<market>,...`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSchema {
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    /// Currency per market; markets absent from the map are taken to be quoted in USD.
    #[serde(default)]
    pub currencies: BTreeMap<String, String>,
}

fn default_date_column() -> String {
    "date".to_string()
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

impl Default for PriceSchema {
    fn default() -> Self {
        Self {
            date_column: default_date_column(),
            date_format: default_date_format(),
            currencies: BTreeMap::new(),
        }
    }
}

pub fn load_prices(path: impl AsRef<Path>, schema: &PriceSchema) -> Result<Vec<PriceSeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices(file, schema)
}

/// Parse a wide price CSV. Row numbers in errors count the header as row 1.
pub fn read_prices<R: Read>(reader: R, schema: &PriceSchema) -> Result<Vec<PriceSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h == schema.date_column)
        .ok_or_else(|| Error::Parse {
            row: 1,
            msg: format!("missing date column `{}`", schema.date_column),
        })?;
    let markets: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != date_idx)
        .map(|(k, h)| (k, h.to_string()))
        .collect();
    let mut columns: Vec<Vec<PriceObs>> = vec![Vec::new(); markets.len()];
    let mut last_date: Option<NaiveDate> = None;

    for (k, record) in rdr.records().enumerate() {
        let row = k + 2;
        let record = record?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, &schema.date_format).map_err(|e| Error::Parse {
            row,
            msg: format!("malformed date `{raw_date}`: {e}"),
        })?;
        if let Some(prev) = last_date {
            if date == prev {
                return Err(Error::DuplicateDate { row, date });
            }
            if date < prev {
                return Err(Error::UnorderedDate { row, date });
            }
        }
        last_date = Some(date);

        for (col, (idx, market)) in markets.iter().enumerate() {
            let cell = record.get(*idx).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let close: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("non-numeric close `{cell}` for {market}"),
            })?;
            if !close.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("non-finite close for {market}"),
                });
            }
            if close <= 0.0 {
                return Err(Error::NonPositivePrice {
                    row,
                    market: market.clone(),
                });
            }
            columns[col].push(PriceObs { date, close });
        }
    }

    markets
        .into_iter()
        .zip(columns)
        .map(|((_, market), obs)| {
            let currency = schema.currencies.get(&market).cloned().unwrap_or_else(|| "USD".to_string());
            PriceSeries::new(market, currency, obs)
        })
        .collect()
}

/// Write a panel back out in the wide CSV format read by [`read_prices`].
pub fn write_prices<W: Write>(writer: W, panel: &[PriceSeries]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.iter().map(|s| s.market_id.clone()));
    wtr.write_record(&header)?;

    let mut dates: Vec<NaiveDate> = panel.iter().flat_map(|s| s.dates()).collect();
    dates.sort_unstable();
    dates.dedup();
    let mut cursors = vec![0usize; panel.len()];
    for date in dates {
        let mut row = vec![date.format("%Y-%m-%d").to_string()];
        for (series, cur) in panel.iter().zip(cursors.iter_mut()) {
            match series.observations.get(*cur) {
                Some(obs) if obs.date == date => {
                    row.push(format!("{}", obs.close));
                    *cur += 1;
                }
                _ => row.push(String::new()),
            }
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<price writer>", e))?;
    Ok(())
}
