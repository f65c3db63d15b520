use std::path::PathBuf;

use chrono::NaiveDate;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("non-positive price at row {row} (market {market})")]
    NonPositivePrice { row: usize, market: String },

    #[error("duplicate date {date} at row {row}")]
    DuplicateDate { row: usize, date: NaiveDate },

    #[error("date {date} out of order at row {row}")]
    UnorderedDate { row: usize, date: NaiveDate },

    #[error("missing fx rate for {} date(s): {}", .dates.len(), format_dates(.dates))]
    MissingFx { dates: Vec<NaiveDate> },

    #[error("date {date} is outside every closing-hour epoch of market {market}")]
    NoEpoch { market: String, date: NaiveDate },

    #[error("invalid market metadata: {0}")]
    Metadata(String),

    #[error("no common trading dates between {a} and {b}")]
    EmptyIntersection { a: String, b: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_dates(dates: &[NaiveDate]) -> String {
    const SHOWN: usize = 10;
    let mut s = dates
        .iter()
        .take(SHOWN)
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if dates.len() > SHOWN {
        s.push_str(&format!(", ... ({} more)", dates.len() - SHOWN));
    }
    s
}
