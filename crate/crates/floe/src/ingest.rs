//! Parsing and streaming of market-by-order (MBO) log records.
//!
//! The input format is UTF-8 comma-separated lines with a fixed column order:
//! `time,order_id,side,action,price,volume,affected`. The `affected` column
//! names the passive order of a trade and is `-` for all other actions. A
//! header row is auto-detected by a non-numeric second column.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Millisecond-resolution wall-clock timestamp, with an optional session date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamp {
    /// Present when the record carried a `YYYY-MM-DD` date prefix.
    pub date: Option<NaiveDate>,
    /// Milliseconds since midnight.
    pub ms_of_day: u32,
}

impl Timestamp {
    pub fn from_ms(ms_of_day: u32) -> Self {
        Timestamp { date: None, ms_of_day }
    }

    /// Absolute milliseconds; records without a date sort as day zero.
    pub fn abs_ms(&self) -> i64 {
        let days = self.date.map(|d| d.num_days_from_ce() as i64).unwrap_or(0);
        days * 86_400_000 + self.ms_of_day as i64
    }

    pub fn parse(s: &str) -> Result<Self, ParseError> {
        let (date, time) = match s.find(' ') {
            Some(i) => {
                let d = NaiveDate::parse_from_str(&s[..i], "%Y-%m-%d")
                    .map_err(|_| ParseError::MalformedTime)?;
                (Some(d), &s[i + 1..])
            }
            None => (None, s),
        };
        let mut it = time.split(':');
        let (h, m, rest) = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(h), Some(m), Some(s), None) => (h, m, s),
            _ => return Err(ParseError::MalformedTime),
        };
        let h: u32 = h.parse().map_err(|_| ParseError::MalformedTime)?;
        let m: u32 = m.parse().map_err(|_| ParseError::MalformedTime)?;
        let (sec, frac) = match rest.find('.') {
            Some(i) => (&rest[..i], &rest[i + 1..]),
            None => (rest, ""),
        };
        let sec: u32 = sec.parse().map_err(|_| ParseError::MalformedTime)?;
        if h > 23 || m > 59 || sec > 59 {
            return Err(ParseError::MalformedTime);
        }
        let ms = match frac.len() {
            0 => 0,
            n @ 1..=3 => {
                let v: u32 = frac.parse().map_err(|_| ParseError::MalformedTime)?;
                v * 10u32.pow(3 - n as u32)
            }
            _ => return Err(ParseError::MalformedTime),
        };
        Ok(Timestamp { date, ms_of_day: (h * 3600 + m * 60 + sec) * 1000 + ms })
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.abs_ms().cmp(&other.abs_ms())
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = self.date {
            write!(f, "{} ", d.format("%Y-%m-%d"))?;
        }
        let t = self.ms_of_day;
        write!(
            f,
            "{:02}:{:02}:{:02}.{:03}",
            t / 3_600_000,
            t / 60_000 % 60,
            t / 1000 % 60,
            t % 1000
        )
    }
}

/// Price in fixed-point units of 1e-4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Price(pub i64);

impl Price {
    pub const SCALE: i64 = 10_000;

    pub fn from_f64(v: f64) -> Self {
        Price((v * Self::SCALE as f64).round() as i64)
    }

    pub fn parse(s: &str) -> Result<Self, ParseError> {
        let bad = || ParseError::MalformedField("price");
        if s.is_empty() || s.starts_with('-') {
            return Err(bad());
        }
        let (int, frac) = match s.find('.') {
            Some(i) => (&s[..i], &s[i + 1..]),
            None => (s, ""),
        };
        let int: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        if frac.len() > 4 {
            return Err(bad());
        }
        let frac_val: i64 = if frac.is_empty() {
            0
        } else {
            frac.parse::<i64>().map_err(|_| bad())? * 10i64.pow(4 - frac.len() as u32)
        };
        Ok(Price(int * Self::SCALE + frac_val))
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / Self::SCALE;
        let mut frac = self.0 % Self::SCALE;
        if frac == 0 {
            return write!(f, "{int}");
        }
        let mut digits = 4;
        while frac % 10 == 0 {
            frac /= 10;
            digits -= 1;
        }
        write!(f, "{int}.{frac:0width$}", width = digits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_char(&self) -> char {
        match self {
            Side::Buy => 'B',
            Side::Sell => 'S',
        }
    }

    pub fn opposite(&self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Limit,
    Modify,
    Delete,
    Trade,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Limit => "LIMIT",
            Action::Modify => "MODIFY",
            Action::Delete => "DELETE",
            Action::Trade => "TRADE",
        }
    }
}

pub type OrderId = u64;

/// One MBO log record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderEvent {
    pub time: Timestamp,
    pub order_id: OrderId,
    pub side: Side,
    pub action: Action,
    pub price: Price,
    pub volume: u64,
    /// Passive order of a trade; present iff `action == Trade`.
    pub affected_id: Option<OrderId>,
}

impl OrderEvent {
    /// Canonical serialization; inverse of [`parse_record`] up to formatting.
    pub fn serialize_record(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.time,
            self.order_id,
            self.side.as_char(),
            self.action.as_str(),
            self.price,
            self.volume,
            self.affected_id.map_or_else(|| "-".to_string(), |a| a.to_string())
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown action")]
    UnknownAction,
    #[error("malformed time")]
    MalformedTime,
    #[error("negative volume")]
    NegativeVolume,
    #[error("missing field")]
    MissingField,
    #[error("malformed {0} field")]
    MalformedField(&'static str),
    #[error("affected id must be present exactly for trades")]
    InvalidAffected,
}

/// Parse one delimited record.
pub fn parse_record(line: &str) -> Result<OrderEvent, ParseError> {
    let mut fields = line.split(',');
    let mut next = || fields.next().map(str::trim).ok_or(ParseError::MissingField);
    let time = Timestamp::parse(next()?)?;
    let order_id: OrderId = next()?.parse().map_err(|_| ParseError::MalformedField("order_id"))?;
    let side = match next()? {
        "B" | "b" => Side::Buy,
        "S" | "s" => Side::Sell,
        _ => return Err(ParseError::MalformedField("side")),
    };
    let action_raw = next()?;
    let action = match action_raw.to_ascii_uppercase().as_str() {
        "LIMIT" => Action::Limit,
        "MODIFY" => Action::Modify,
        "DELETE" => Action::Delete,
        "TRADE" => Action::Trade,
        _ => return Err(ParseError::UnknownAction),
    };
    let price = Price::parse(next()?)?;
    let vol_raw = next()?;
    let volume: u64 = if vol_raw.starts_with('-') {
        return Err(ParseError::NegativeVolume);
    } else {
        vol_raw.parse().map_err(|_| ParseError::MalformedField("volume"))?
    };
    let affected_raw = next()?;
    if fields.next().is_some() {
        return Err(ParseError::MalformedField("trailing"));
    }
    let affected_id = match affected_raw {
        "-" => None,
        s => Some(s.parse().map_err(|_| ParseError::MalformedField("affected"))?),
    };
    match (action, affected_id) {
        (Action::Trade, None) | (Action::Limit | Action::Modify | Action::Delete, Some(_)) => {
            return Err(ParseError::InvalidAffected)
        }
        _ => {}
    }
    Ok(OrderEvent { time, order_id, side, action, price, volume, affected_id })
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format mismatch on line {line}: expected 7 comma-separated columns")]
    FormatMismatch { line: u64 },
}

/// A diagnostic attached to a rejected or suspicious record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: u64,
    pub message: String,
}

const MAX_DIAGNOSTICS: usize = 1000;

/// Pull-based stream of [`OrderEvent`]s over a buffered reader.
///
/// Rejected records never reach the consumer; they increment the rejection
/// counter and leave a diagnostic. A time regression raises a single
/// `OrderingViolation` diagnostic and processing continues.
pub struct EventStream<R: BufRead> {
    reader: R,
    buf: String,
    line_no: u64,
    consumed: u64,
    rejected: u64,
    diagnostics: Vec<Diagnostic>,
    suppressed_diagnostics: u64,
    last_time: Option<Timestamp>,
    ordering_reported: bool,
    pending: Option<OrderEvent>,
}

impl EventStream<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let file = File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }
}

impl<R: BufRead> EventStream<R> {
    /// Wrap a reader; reads the first line eagerly to auto-detect a header
    /// row (non-numeric second column) and to validate the column count.
    pub fn from_reader(reader: R) -> Result<Self, IngestError> {
        let mut s = EventStream {
            reader,
            buf: String::new(),
            line_no: 0,
            consumed: 0,
            rejected: 0,
            diagnostics: Vec::new(),
            suppressed_diagnostics: 0,
            last_time: None,
            ordering_reported: false,
            pending: None,
        };
        if let Some(line) = s.read_line()? {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(IngestError::FormatMismatch { line: 1 });
            }
            let is_header = cols[1].trim().parse::<u64>().is_err();
            if !is_header {
                match parse_record(&line) {
                    Ok(ev) => s.pending = Some(ev),
                    Err(e) => s.reject(e),
                }
            }
        }
        Ok(s)
    }

    fn read_line(&mut self) -> Result<Option<String>, std::io::Error> {
        loop {
            self.buf.clear();
            let n = self.reader.read_line(&mut self.buf)?;
            if n == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if !line.is_empty() {
                return Ok(Some(line.to_string()));
            }
        }
    }

    fn diag(&mut self, message: String) {
        if self.diagnostics.len() < MAX_DIAGNOSTICS {
            self.diagnostics.push(Diagnostic { line: self.line_no, message });
        } else {
            self.suppressed_diagnostics += 1;
        }
    }

    fn reject(&mut self, err: ParseError) {
        self.rejected += 1;
        self.diag(format!("rejected: {err}"));
    }

    fn accept(&mut self, ev: OrderEvent) -> OrderEvent {
        if let Some(last) = self.last_time {
            if ev.time < last && !self.ordering_reported {
                self.ordering_reported = true;
                self.diag(format!("OrderingViolation: time {} regresses below {}", ev.time, last));
            }
        }
        if self.last_time.map_or(true, |last| ev.time > last) {
            self.last_time = Some(ev.time);
        }
        self.consumed += 1;
        ev
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }
}

impl<R: BufRead> Iterator for EventStream<R> {
    type Item = OrderEvent;

    fn next(&mut self) -> Option<OrderEvent> {
        if let Some(ev) = self.pending.take() {
            return Some(self.accept(ev));
        }
        loop {
            match self.read_line() {
                Ok(Some(line)) => match parse_record(&line) {
                    Ok(ev) => return Some(self.accept(ev)),
                    Err(e) => self.reject(e),
                },
                Ok(None) => return None,
                Err(e) => {
                    self.diag(format!("i/o error: {e}"));
                    return None;
                }
            }
        }
    }
}
