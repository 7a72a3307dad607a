use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveTime};

use crate::error::{Error, Result};

/// Primary listing exchange codes of the consolidated tape.
pub const EXCHANGE_CODES: [(char, &str); 12] = [
    ('B', "NASDAQ OMX BX"),
    ('C', "National Stock Exchange"),
    ('J', "Direct Edge A Stock Exchange"),
    ('K', "Direct Edge X Stock Exchange"),
    ('M', "Chicago Stock Exchange"),
    ('N', "New York Stock Exchange"),
    ('P', "NYSE Arca SM"),
    ('T', "NASDAQ OMX"),
    ('W', "CBOE Stock Exchange"),
    ('X', "NASDAQ OMX PSX"),
    ('Y', "BATS Y-Exchange"),
    ('Z', "BATS Exchange"),
];

/// Single-letter exchange code. Codes outside the table are kept as-is so
/// that volume shares still account for them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exchange(char);

impl Exchange {
    /// A code from the known table; anything else is a domain error.
    pub fn known(code: &str) -> Result<Self> {
        let mut chars = code.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None)
                if EXCHANGE_CODES
                    .iter()
                    .any(|(k, _)| *k == c.to_ascii_uppercase()) =>
            {
                Ok(Self(c.to_ascii_uppercase()))
            }
            _ => Err(Error::domain(format!(
                "unknown exchange code {code:?}; known codes: {}",
                EXCHANGE_CODES
                    .iter()
                    .map(|(c, _)| c.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }

    fn parse_any(code: &str) -> Option<Self> {
        let mut chars = code.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_alphabetic() => Some(Self(c.to_ascii_uppercase())),
            _ => None,
        }
    }

    pub fn code(self) -> char {
        self.0
    }

    pub fn name(self) -> Option<&'static str> {
        EXCHANGE_CODES
            .iter()
            .find(|(c, _)| *c == self.0)
            .map(|(_, n)| *n)
    }
}

impl fmt::Display for Exchange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One consolidated best-quote update. Sizes are in round lots.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteRecord {
    pub ticker: String,
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub bid: f64,
    pub ask: f64,
    pub bid_size: i64,
    pub ask_size: i64,
    pub exchange: Exchange,
}

impl QuoteRecord {
    pub fn imbalance(&self) -> f64 {
        let total = self.bid_size + self.ask_size;
        if total == 0 {
            0.5
        } else {
            self.bid_size as f64 / total as f64
        }
    }

    /// Twice the mid-price; comparing sums avoids a rounding step.
    pub(crate) fn mid2(&self) -> f64 {
        self.bid + self.ask
    }

    pub(crate) fn same_prices(&self, other: &QuoteRecord) -> bool {
        self.bid == other.bid && self.ask == other.ask
    }

    pub fn partition(&self) -> PartitionKey {
        PartitionKey {
            ticker: self.ticker.clone(),
            exchange: self.exchange,
            date: self.date,
        }
    }
}

/// Statistics never cross one of these.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartitionKey {
    pub ticker: String,
    pub exchange: Exchange,
    pub date: NaiveDate,
}

/// Splits records by (ticker, exchange, day), keeping input order inside
/// each partition.
pub fn partition(records: &[QuoteRecord]) -> BTreeMap<PartitionKey, Vec<QuoteRecord>> {
    let mut parts: BTreeMap<PartitionKey, Vec<QuoteRecord>> = BTreeMap::new();
    for r in records {
        parts.entry(r.partition()).or_default().push(r.clone());
    }
    parts
}

pub(crate) fn check_sorted(key: &PartitionKey, part: &[QuoteRecord]) -> Result<()> {
    if let Some(w) = part.windows(2).find(|w| w[1].time < w[0].time) {
        return Err(Error::Ordering(format!(
            "{} {} {}: {} follows {}",
            key.ticker, key.exchange, key.date, w[1].time, w[0].time
        )));
    }
    Ok(())
}

/// Result of [`parse_quotes`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQuotes {
    pub records: Vec<QuoteRecord>,
    /// Data rows seen, good or bad.
    pub total: usize,
    pub malformed: usize,
    /// Descriptions of the first few malformed rows.
    pub problems: Vec<String>,
}

/// Largest tolerated fraction of malformed rows.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;
const PROBLEM_SAMPLES: usize = 5;

const COLUMNS: [(&str, &[&str]); 8] = [
    ("Ticker", &["ticker", "symbol", "sym_root"]),
    ("Date", &["date"]),
    ("Time", &["time", "time_m"]),
    ("Bid", &["bid"]),
    ("Ask", &["ask", "ofr", "offer"]),
    ("BidSize", &["bidsize", "bidsiz"]),
    (
        "AskSize",
        &["asksize", "asksiz", "ofrsiz", "ofrsize", "offersize"],
    ),
    ("Exchange", &["exchange", "ex"]),
];

fn normalise(h: &str) -> String {
    h.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .flat_map(char::to_lowercase)
        .collect()
}

/// Reads delimiter-separated quotes with a Ticker, Date, Time, Bid, Ask,
/// BidSize, AskSize, Exchange header. The delimiter (comma, tab, semicolon
/// or pipe) is taken from the header line.
pub fn parse_quotes<R: Read>(mut source: R) -> Result<ParsedQuotes> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = b"\t;|"
        .iter()
        .copied()
        .find(|&d| header_line.contains(d as char))
        .unwrap_or(b',');
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers: Vec<String> = reader.headers()?.iter().map(normalise).collect();
    let mut idx = [0usize; 8];
    for (slot, (name, aliases)) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| aliases.contains(&h.as_str()))
            .ok_or_else(|| Error::Format(format!("missing column {name}")))?;
    }

    let mut out = ParsedQuotes {
        records: Vec::new(),
        total: 0,
        malformed: 0,
        problems: Vec::new(),
    };
    for (row, rec) in reader.records().enumerate() {
        out.total += 1;
        let parsed = rec
            .map_err(|e| e.to_string())
            .and_then(|rec| parse_row(&rec, &idx));
        match parsed {
            Ok(q) => out.records.push(q),
            Err(why) => {
                out.malformed += 1;
                if out.problems.len() < PROBLEM_SAMPLES {
                    // Row numbers count the header as line 1.
                    out.problems.push(format!("line {}: {why}", row + 2));
                }
            }
        }
    }
    if out.malformed as f64 > MAX_MALFORMED_FRACTION * out.total as f64 {
        return Err(Error::Ingestion {
            malformed: out.malformed,
            total: out.total,
            samples: out.problems,
        });
    }
    Ok(out)
}

fn parse_row(
    rec: &csv::StringRecord,
    idx: &[usize; 8],
) -> std::result::Result<QuoteRecord, String> {
    let field = |k: usize| {
        rec.get(idx[k])
            .ok_or_else(|| format!("missing field {}", COLUMNS[k].0))
    };
    let ticker = field(0)?.to_string();
    if ticker.is_empty() {
        return Err("empty ticker".into());
    }
    let date = parse_date(field(1)?)?;
    let time = parse_time(field(2)?)?;
    let price = |k: usize| {
        let s = field(k)?;
        s.parse::<f64>()
            .ok()
            .filter(|p| p.is_finite() && *p >= 0.0)
            .ok_or_else(|| format!("bad {} {s:?}", COLUMNS[k].0))
    };
    let size = |k: usize| {
        let s = field(k)?;
        s.parse::<i64>()
            .ok()
            .filter(|v| *v >= 0)
            .ok_or_else(|| format!("bad {} {s:?}", COLUMNS[k].0))
    };
    let bid = price(3)?;
    let ask = price(4)?;
    if bid > 0.0 && ask > 0.0 && bid > ask {
        return Err(format!("crossed quote {bid} > {ask}"));
    }
    let exchange = {
        let s = field(7)?;
        Exchange::parse_any(s).ok_or_else(|| format!("bad Exchange {s:?}"))?
    };
    Ok(QuoteRecord {
        ticker,
        date,
        time,
        bid,
        ask,
        bid_size: size(5)?,
        ask_size: size(6)?,
        exchange,
    })
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y%m%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d"))
        .map_err(|_| format!("bad Date {s:?}"))
}

fn parse_time(s: &str) -> std::result::Result<NaiveTime, String> {
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S%.f"))
        .map_err(|_| format!("bad Time {s:?}"))
}

/// Writes records back out in the input layout.
pub fn write_quotes<W: Write>(w: W, records: &[QuoteRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COLUMNS.iter().map(|(n, _)| *n))?;
    for r in records {
        out.write_record([
            r.ticker.clone(),
            r.date.format("%Y%m%d").to_string(),
            r.time.format("%H:%M:%S").to_string(),
            r.bid.to_string(),
            r.ask.to_string(),
            r.bid_size.to_string(),
            r.ask_size.to_string(),
            r.exchange.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
