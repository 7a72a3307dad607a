use chrono::NaiveTime;

use super::records::{check_sorted, partition, Exchange, QuoteRecord};
use crate::error::{Error, Result};

/// 10:00 to 16:00, skipping the noisy first half hour after the open.
pub fn default_session() -> (NaiveTime, NaiveTime) {
    (
        NaiveTime::from_hms_opt(10, 0, 0).expect("valid time"),
        NaiveTime::from_hms_opt(16, 0, 0).expect("valid time"),
    )
}

/// Keeps records from `exchange` with time in `[start, end)`.
pub fn filter_session(
    records: &[QuoteRecord],
    exchange: &str,
    start: NaiveTime,
    end: NaiveTime,
) -> Result<Vec<QuoteRecord>> {
    let exchange = Exchange::known(exchange)?;
    if start >= end {
        return Err(Error::domain(format!(
            "session start {start} is not before end {end}"
        )));
    }
    Ok(records
        .iter()
        .filter(|r| r.exchange == exchange && r.time >= start && r.time < end)
        .cloned()
        .collect())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Bid,
    Ask,
}

/// Collapses runs of consecutive records at unchanged prices in which only
/// one queue size moves. The moving side becomes the run mean, rounded
/// half to even; the timestamp is that of the run's last record.
///
/// Partitions are processed separately and emitted in key order. The pass
/// is repeated until nothing changes, so the result is idempotent.
pub fn coalesce_single_sided(records: &[QuoteRecord]) -> Result<Vec<QuoteRecord>> {
    let mut out = Vec::with_capacity(records.len());
    for (key, part) in partition(records) {
        check_sorted(&key, &part)?;
        let mut current = part;
        loop {
            let next = coalesce_pass(&current);
            let done = next.len() == current.len();
            current = next;
            if done {
                break;
            }
        }
        out.extend(current);
    }
    Ok(out)
}

fn coalesce_pass(part: &[QuoteRecord]) -> Vec<QuoteRecord> {
    let mut out = Vec::with_capacity(part.len());
    let mut i = 0;
    while i < part.len() {
        let mut side = None;
        let mut j = i + 1;
        while j < part.len() {
            let (a, b) = (&part[j - 1], &part[j]);
            if !a.same_prices(b) {
                break;
            }
            let moved = match (a.bid_size != b.bid_size, a.ask_size != b.ask_size) {
                (true, true) => break,
                (true, false) => Some(Side::Bid),
                (false, true) => Some(Side::Ask),
                (false, false) => None,
            };
            if let Some(m) = moved {
                if side.is_some_and(|s| s != m) {
                    break;
                }
                side = Some(m);
            }
            j += 1;
        }
        let run = &part[i..j];
        let mut merged = run[run.len() - 1].clone();
        match side {
            Some(Side::Bid) => merged.bid_size = mean_half_even(run.iter().map(|r| r.bid_size)),
            Some(Side::Ask) => merged.ask_size = mean_half_even(run.iter().map(|r| r.ask_size)),
            None => {}
        }
        out.push(merged);
        i = j;
    }
    out
}

fn mean_half_even(values: impl Iterator<Item = i64>) -> i64 {
    let (sum, n) = values.fold((0i128, 0i128), |(s, n), v| (s + v as i128, n + 1));
    let q = sum.div_euclid(n);
    let r = sum.rem_euclid(n);
    let up = match (2 * r).cmp(&n) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => q % 2 != 0,
        std::cmp::Ordering::Less => false,
    };
    (q + up as i128) as i64
}
