//! Headline and price ingestion, keyword filtering and trading-day alignment.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("price row {row}: {message}")]
    BadPriceRow { row: usize, message: String },
    #[error("price row {row}: price {price} is not positive")]
    NonPositivePrice { row: usize, price: f64 },
    #[error("duplicate price date {date} (row {row})")]
    DuplicateDate { row: usize, date: NaiveDate },
    #[error("future market series contains weekend date {date} (row {row})")]
    WeekendInFuture { row: usize, date: NaiveDate },
    #[error("keyword must not be empty")]
    EmptyKeyword,
    #[error("split fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("corpus has {0} trading days, at least 2 are required to split")]
    TooFewDays(usize),
    #[error("split of {days} days at fraction {fraction} leaves one side empty")]
    EmptySide { days: usize, fraction: f64 },
}

/// News provider a headline came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "TG")]
    Guardian,
    #[serde(rename = "FT")]
    FinancialTimes,
    #[serde(rename = "NYTf")]
    NytFiltered,
    #[serde(rename = "NYTu")]
    NytUnfiltered,
    #[serde(rename = "OTHER")]
    Other,
}

impl Source {
    pub fn parse(s: &str) -> Source {
        match s.trim() {
            "TG" => Source::Guardian,
            "FT" => Source::FinancialTimes,
            "NYTf" => Source::NytFiltered,
            "NYTu" => Source::NytUnfiltered,
            _ => Source::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlineRecord {
    /// Stable identifier: the record's `id` field, or its 1-based line number.
    pub id: String,
    pub date: NaiveDate,
    pub source: Source,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordErrorKind {
    Json(String),
    MissingField(&'static str),
    BadDate(String),
    EmptyTitle,
}

impl fmt::Display for RecordErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordErrorKind::Json(e) => write!(f, "malformed record: {e}"),
            RecordErrorKind::MissingField(name) => write!(f, "missing field `{name}`"),
            RecordErrorKind::BadDate(d) => write!(f, "unparseable date {d:?}"),
            RecordErrorKind::EmptyTitle => write!(f, "empty title"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

#[derive(Debug, Default, Clone)]
pub struct ParsedHeadlines {
    pub records: Vec<HeadlineRecord>,
    pub errors: Vec<RecordError>,
}

#[derive(Deserialize)]
struct RawHeadline {
    id: Option<serde_json::Value>,
    date: Option<String>,
    source: Option<String>,
    title: Option<String>,
    body: Option<String>,
}

/// Parses line-delimited JSON headline records. Blank lines are ignored;
/// every other line yields either a record or a line-numbered error.
pub fn parse_headlines<R: BufRead>(reader: R) -> Result<ParsedHeadlines, IngestError> {
    let mut out = ParsedHeadlines::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_headline_line(&line, line_no) {
            Ok(rec) => out.records.push(rec),
            Err(kind) => out.errors.push(RecordError {
                line: line_no,
                kind,
            }),
        }
    }
    Ok(out)
}

fn parse_headline_line(line: &str, line_no: usize) -> Result<HeadlineRecord, RecordErrorKind> {
    let raw: RawHeadline =
        serde_json::from_str(line).map_err(|e| RecordErrorKind::Json(e.to_string()))?;
    let date = raw.date.ok_or(RecordErrorKind::MissingField("date"))?;
    let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
        .map_err(|_| RecordErrorKind::BadDate(date.clone()))?;
    let title = raw.title.ok_or(RecordErrorKind::MissingField("title"))?;
    let title = title.trim().to_string();
    if title.is_empty() {
        return Err(RecordErrorKind::EmptyTitle);
    }
    let id = match raw.id {
        Some(serde_json::Value::String(s)) => s,
        Some(serde_json::Value::Null) | None => line_no.to_string(),
        Some(other) => other.to_string(),
    };
    Ok(HeadlineRecord {
        id,
        date,
        source: Source::parse(raw.source.as_deref().unwrap_or("")),
        title,
        body: raw.body.filter(|b| !b.trim().is_empty()),
    })
}

/// Keeps records whose title, or body when present, contains `keyword`
/// case-insensitively.
pub fn keyword_filter(
    records: &[HeadlineRecord],
    keyword: &str,
) -> Result<Vec<HeadlineRecord>, IngestError> {
    let needle = keyword.trim().to_lowercase();
    if needle.is_empty() {
        return Err(IngestError::EmptyKeyword);
    }
    let matches = |text: &str| text.to_lowercase().contains(&needle);
    Ok(records
        .iter()
        .filter(|r| matches(&r.title) || r.body.as_deref().is_some_and(matches))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Market {
    /// Weekday-only forward market.
    Future,
    /// Daily next-day-delivery market.
    Spot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    /// EUR per cubic metre.
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub market: Market,
    pub points: Vec<PricePoint>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.price).collect()
    }
}

fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Parses `date,price` rows. The first row is treated as a header when its
/// first field is not a date.
pub fn parse_prices<R: Read>(reader: R, market: Market) -> Result<PriceSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    let mut seen: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| IngestError::BadPriceRow {
            row,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let date_field = rec.get(0).unwrap_or("");
        let date = match NaiveDate::parse_from_str(date_field, "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) if row == 1 => continue,
            Err(_) => {
                return Err(IngestError::BadPriceRow {
                    row,
                    message: format!("unparseable date {date_field:?}"),
                })
            }
        };
        if rec.len() != 2 {
            return Err(IngestError::BadPriceRow {
                row,
                message: format!("expected 2 columns, found {}", rec.len()),
            });
        }
        let price_field = &rec[1];
        let price: f64 = price_field.parse().map_err(|_| IngestError::BadPriceRow {
            row,
            message: format!("unparseable price {price_field:?}"),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(IngestError::NonPositivePrice { row, price });
        }
        if market == Market::Future && is_weekend(date) {
            return Err(IngestError::WeekendInFuture { row, date });
        }
        if seen.insert(date, row).is_some() {
            return Err(IngestError::DuplicateDate { row, date });
        }
        points.push(PricePoint { date, price });
    }
    points.sort_by_key(|p| p.date);
    Ok(PriceSeries { market, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingDay {
    pub date: NaiveDate,
    pub price: f64,
    pub headlines: Vec<HeadlineRecord>,
}

/// Trading days in date order, each carrying the headlines published that day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedCorpus {
    pub market: Market,
    pub days: Vec<TradingDay>,
    /// Headlines whose date was not a trading day.
    pub dropped: usize,
    /// Index of the first test day, when the corpus has been split.
    pub split: Option<usize>,
}

impl AlignedCorpus {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn headline_count(&self) -> usize {
        self.days.iter().map(|d| d.headlines.len()).sum()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.price).collect()
    }

    /// Index of the first test day for `fraction`: `floor(fraction * N)`.
    pub fn split_index(&self, fraction: f64) -> Result<usize, IngestError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(IngestError::BadFraction(fraction));
        }
        let n = self.days.len();
        if n < 2 {
            return Err(IngestError::TooFewDays(n));
        }
        let cut = (fraction * n as f64).floor() as usize;
        if cut == 0 || cut == n {
            return Err(IngestError::EmptySide { days: n, fraction });
        }
        Ok(cut)
    }

    /// Returns a copy with the split marker set.
    pub fn with_split(mut self, fraction: f64) -> Result<Self, IngestError> {
        self.split = Some(self.split_index(fraction)?);
        Ok(self)
    }
}

/// Attaches each headline to the trading day with the same date. Headlines on
/// non-trading days are dropped and counted.
pub fn align(prices: &PriceSeries, headlines: &[HeadlineRecord]) -> AlignedCorpus {
    let mut days: Vec<TradingDay> = prices
        .points
        .iter()
        .map(|p| TradingDay {
            date: p.date,
            price: p.price,
            headlines: Vec::new(),
        })
        .collect();
    let index: BTreeMap<NaiveDate, usize> =
        days.iter().enumerate().map(|(i, d)| (d.date, i)).collect();
    let mut dropped = 0;
    for h in headlines {
        match index.get(&h.date) {
            Some(&i) => days[i].headlines.push(h.clone()),
            None => dropped += 1,
        }
    }
    AlignedCorpus {
        market: prices.market,
        days,
        dropped,
        split: None,
    }
}

/// Chronological split: the first `floor(fraction * N)` days train, the rest test.
pub fn split_train_test(
    corpus: &AlignedCorpus,
    fraction: f64,
) -> Result<(AlignedCorpus, AlignedCorpus), IngestError> {
    let cut = corpus.split_index(fraction)?;
    let part = |days: &[TradingDay], dropped| AlignedCorpus {
        market: corpus.market,
        days: days.to_vec(),
        dropped,
        split: None,
    };
    Ok((
        part(&corpus.days[..cut], corpus.dropped),
        part(&corpus.days[cut..], 0),
    ))
}
