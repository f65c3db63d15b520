//! Rolling sub-sample boundaries.

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive date range `start..=end` of window `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Zero-padded directory name.
    pub fn label(&self) -> String {
        format!("{:03}", self.index)
    }
}

fn month_start(d: NaiveDate) -> NaiveDate {
    d.with_day(1).expect("day 1 exists")
}

/// Calendar-month windows `[m, m + months)` stepping by `drift` over every month touched
/// by `first..=last`; a trailing partial window is not formed.
pub fn make_windows(first: NaiveDate, last: NaiveDate, months: u32, drift: u32) -> Result<Vec<Window>> {
    if months == 0 || drift == 0 {
        return Err(Error::InvalidArgument("window and drift lengths must be at least one month".into()));
    }
    if first > last {
        return Err(Error::InvalidArgument(format!("empty date range {first}..{last}")));
    }
    let span = (last.year() - first.year()) as u32 * 12 + last.month() - first.month() + 1;
    if span < months {
        return Err(Error::InvalidArgument(format!("{span} month(s) in range, window needs {months}")));
    }
    let origin = month_start(first);
    Ok((0..=(span - months) / drift)
        .map(|k| {
            let start = origin + Months::new(k * drift);
            let end = start + Months::new(months) - chrono::Days::new(1);
            Window { index: k as usize, start, end }
        })
        .collect())
}

/// Windows of `len` consecutive entries of `dates` (sorted) stepping by `drift`.
pub fn trading_day_windows(dates: &[NaiveDate], len: usize, drift: usize) -> Result<Vec<Window>> {
    if len == 0 || drift == 0 {
        return Err(Error::InvalidArgument("window and drift lengths must be at least one day".into()));
    }
    if dates.len() < len {
        return Err(Error::InvalidArgument(format!("{} trading day(s) in range, window needs {len}", dates.len())));
    }
    Ok((0..=(dates.len() - len) / drift)
        .map(|k| Window {
            index: k,
            start: dates[k * drift],
            end: dates[k * drift + len - 1],
        })
        .collect())
}
