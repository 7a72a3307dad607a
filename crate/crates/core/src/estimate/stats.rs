use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::records::{check_sorted, partition, Exchange, QuoteRecord};
use crate::curve::{fmt_f64, CoefficientProfile, Coefficients};
use crate::error::{Error, Result};

/// Equal-width imbalance buckets covering `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Buckets {
    count: usize,
}

impl Buckets {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("need at least one bucket"));
        }
        Ok(Self { count })
    }

    /// From a bucket width such as 0.05 or 0.10.
    pub fn from_width(width: f64) -> Result<Self> {
        let n = (1.0 / width).round();
        if !(width > 0.0) || ((1.0 / width) - n).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "bucket width {width} does not divide [0, 1]"
            )));
        }
        Self::new(n as usize)
    }

    pub fn count(self) -> usize {
        self.count
    }

    pub fn width(self) -> f64 {
        1.0 / self.count as f64
    }

    /// Bucket of imbalance `z`; `z = 1` joins the top bucket.
    pub fn index(self, z: f64) -> usize {
        ((z * self.count as f64).floor() as usize).min(self.count - 1)
    }

    pub fn bounds(self, k: usize) -> (f64, f64) {
        (
            k as f64 / self.count as f64,
            (k + 1) as f64 / self.count as f64,
        )
    }

    pub fn midpoint(self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.count as f64
    }

    pub fn label(self, k: usize) -> String {
        let (lo, hi) = self.bounds(k);
        format!("{lo:.2}-{hi:.2}")
    }
}

/// Positive and negative size changes on one side of the book.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SideVolumes {
    pub pos_volume: f64,
    pub neg_volume: f64,
}

impl SideVolumes {
    /// Share of positive change in all change; absent when nothing moved.
    pub fn drift_ratio(&self) -> Option<f64> {
        let total = self.pos_volume + self.neg_volume;
        (total > 0.0).then(|| self.pos_volume / total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketStats {
    pub lo: f64,
    pub hi: f64,
    /// Size-change pairs assigned to the bucket.
    pub n_obs: u64,
    pub bid: SideVolumes,
    pub ask: SideVolumes,
    pub corr: Option<f64>,
    pub std_bid: Option<f64>,
    pub std_ask: Option<f64>,
    pub p_up: Option<f64>,
    /// Records with a known next mid-price move.
    pub p_up_count: u64,
}

impl BucketStats {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn empty(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            n_obs: 0,
            bid: SideVolumes::default(),
            ask: SideVolumes::default(),
            corr: None,
            std_bid: None,
            std_ask: None,
            p_up: None,
            p_up_count: 0,
        }
    }
}

/// Exact integer sums; merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: i128,
    sb: i128,
    sa: i128,
    sbb: i128,
    saa: i128,
    sba: i128,
    pos_b: i128,
    neg_b: i128,
    pos_a: i128,
    neg_a: i128,
    up: i128,
    outcomes: i128,
}

impl Acc {
    fn add_pair(&mut self, db: i64, da: i64) {
        let (b, a) = (db as i128, da as i128);
        self.n += 1;
        self.sb += b;
        self.sa += a;
        self.sbb += b * b;
        self.saa += a * a;
        self.sba += b * a;
        if b > 0 {
            self.pos_b += b;
        } else {
            self.neg_b -= b;
        }
        if a > 0 {
            self.pos_a += a;
        } else {
            self.neg_a -= a;
        }
    }

    fn merge(mut self, o: &Acc) -> Acc {
        self.n += o.n;
        self.sb += o.sb;
        self.sa += o.sa;
        self.sbb += o.sbb;
        self.saa += o.saa;
        self.sba += o.sba;
        self.pos_b += o.pos_b;
        self.neg_b += o.neg_b;
        self.pos_a += o.pos_a;
        self.neg_a += o.neg_a;
        self.up += o.up;
        self.outcomes += o.outcomes;
        self
    }

    fn finish(&self, lo: f64, hi: f64) -> BucketStats {
        let mut s = BucketStats::empty(lo, hi);
        s.n_obs = self.n as u64;
        s.bid = SideVolumes {
            pos_volume: self.pos_b as f64,
            neg_volume: self.neg_b as f64,
        };
        s.ask = SideVolumes {
            pos_volume: self.pos_a as f64,
            neg_volume: self.neg_a as f64,
        };
        if self.n >= 2 {
            // n² times the sample (co)variances times (n − 1)/n, exact in integers.
            let vb = self.n * self.sbb - self.sb * self.sb;
            let va = self.n * self.saa - self.sa * self.sa;
            let cv = self.n * self.sba - self.sb * self.sa;
            let denom = (self.n * (self.n - 1)) as f64;
            s.std_bid = Some((vb as f64 / denom).sqrt());
            s.std_ask = Some((va as f64 / denom).sqrt());
            if vb > 0 && va > 0 {
                s.corr =
                    Some((cv as f64 / ((vb as f64).sqrt() * (va as f64).sqrt())).clamp(-1.0, 1.0));
            }
        }
        if self.outcomes > 0 {
            s.p_up = Some(self.up as f64 / self.outcomes as f64);
            s.p_up_count = self.outcomes as u64;
        }
        s
    }
}

/// Per-bucket size-change statistics of consecutive record pairs.
///
/// A pair is assigned by the imbalance of its earlier record. Pairs
/// straddling a price change describe a new queue rather than flow into an
/// old one and are skipped. The empirical up-probability of each bucket is
/// filled in as by [`empirical_pup`].
pub fn bucket_statistics(records: &[QuoteRecord], buckets: Buckets) -> Result<Vec<BucketStats>> {
    let parts: Vec<_> = partition(records).into_iter().collect();
    for (key, part) in &parts {
        check_sorted(key, part)?;
    }
    let accs: Vec<Vec<Acc>> = parts
        .par_iter()
        .map(|(_, part)| {
            let mut acc = vec![Acc::default(); buckets.count()];
            for w in part.windows(2) {
                if w[0].same_prices(&w[1]) {
                    acc[buckets.index(w[0].imbalance())]
                        .add_pair(w[1].bid_size - w[0].bid_size, w[1].ask_size - w[0].ask_size);
                }
            }
            for (r, up) in part.iter().zip(next_moves(part)) {
                if let Some(up) = up {
                    let a = &mut acc[buckets.index(r.imbalance())];
                    a.outcomes += 1;
                    a.up += up as i128;
                }
            }
            acc
        })
        .collect();
    let total = accs
        .iter()
        .fold(vec![Acc::default(); buckets.count()], |tot, a| {
            tot.iter().zip(a).map(|(t, x)| t.merge(x)).collect()
        });
    Ok(total
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let (lo, hi) = buckets.bounds(k);
            a.finish(lo, hi)
        })
        .collect())
}

/// Direction of the next strict mid-price change after each record:
/// `Some(true)` up, `Some(false)` down, `None` if the partition ends first.
fn next_moves(part: &[QuoteRecord]) -> Vec<Option<bool>> {
    let mut out = vec![None; part.len()];
    for i in (0..part.len().saturating_sub(1)).rev() {
        let (m, next) = (part[i].mid2(), part[i + 1].mid2());
        out[i] = if next != m {
            Some(next > m)
        } else {
            out[i + 1]
        };
    }
    out
}

/// Empirical up-probability per bucket with its record count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalPoint {
    pub lo: f64,
    pub hi: f64,
    pub p_up: Option<f64>,
    pub count: u64,
}

impl EmpiricalPoint {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Fraction of records, by imbalance bucket, whose next mid-price change
/// is upwards. Records never followed by a change are left out.
pub fn empirical_pup(records: &[QuoteRecord], buckets: Buckets) -> Result<Vec<EmpiricalPoint>> {
    let mut up = vec![0u64; buckets.count()];
    let mut n = vec![0u64; buckets.count()];
    for (key, part) in partition(records) {
        check_sorted(&key, &part)?;
        for (r, m) in part.iter().zip(next_moves(&part)) {
            if let Some(m) = m {
                let k = buckets.index(r.imbalance());
                n[k] += 1;
                up[k] += m as u64;
            }
        }
    }
    Ok((0..buckets.count())
        .map(|k| {
            let (lo, hi) = buckets.bounds(k);
            EmpiricalPoint {
                lo,
                hi,
                p_up: (n[k] > 0).then(|| up[k] as f64 / n[k] as f64),
                count: n[k],
            }
        })
        .collect())
}

/// What an exchange's share is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShareBasis {
    /// Number of quote updates.
    #[default]
    Records,
    /// Quoted bid plus ask size over all updates.
    QuotedSize,
}

/// Share of each exchange, ordered by code; the shares sum to 1.
pub fn exchange_volume_shares(records: &[QuoteRecord], basis: ShareBasis) -> Vec<(Exchange, f64)> {
    let mut totals: BTreeMap<Exchange, u128> = BTreeMap::new();
    for r in records {
        let w = match basis {
            ShareBasis::Records => 1,
            ShareBasis::QuotedSize => (r.bid_size + r.ask_size) as u128,
        };
        *totals.entry(r.exchange).or_default() += w;
    }
    let sum: u128 = totals.values().sum();
    if sum == 0 {
        return Vec::new();
    }
    totals
        .into_iter()
        .map(|(e, v)| (e, v as f64 / sum as f64))
        .collect()
}

/// Coefficient knots at the midpoints of buckets carrying a correlation and
/// both standard deviations, with `σ = std / √dt`. Buckets without
/// estimates are bridged by the linear interpolation between knots.
pub fn coefficients_from_data(stats: &[BucketStats], dt: f64) -> Result<CoefficientProfile> {
    if !(dt > 0.0) {
        return Err(Error::domain(format!("time step {dt} must be positive")));
    }
    let root = dt.sqrt();
    let knots: Vec<(f64, Coefficients)> = stats
        .iter()
        .filter_map(|s| match (s.corr, s.std_bid, s.std_ask) {
            (Some(rho), Some(b), Some(a)) if b > 0.0 && a > 0.0 => Some((
                s.midpoint(),
                Coefficients {
                    sigma_bid: b / root,
                    sigma_ask: a / root,
                    rho,
                },
            )),
            _ => None,
        })
        .collect();
    if knots.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} bucket(s) carry correlation and volatility estimates; need at least 2",
            knots.len()
        )));
    }
    CoefficientProfile::new(knots)
}

/// Parses a bucket label such as `0.20-0.25`.
pub fn parse_bucket_label(label: &str) -> Result<(f64, f64)> {
    let bad = || Error::Format(format!("bad bucket label {label:?}"));
    let (lo, hi) = label.trim().split_once('-').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// A bucket-by-series table: a label column followed by named numeric
/// columns; blank or `NA` cells are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketTable {
    pub buckets: Vec<(f64, f64)>,
    pub columns: Vec<(String, Vec<Option<f64>>)>,
}

impl BucketTable {
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::Format("empty bucket table".into()));
        }
        let mut table = BucketTable {
            buckets: Vec::new(),
            columns: headers
                .iter()
                .skip(1)
                .map(|h| (h.to_string(), Vec::new()))
                .collect(),
        };
        for rec in rdr.records() {
            let rec = rec?;
            table.buckets.push(parse_bucket_label(&rec[0])?);
            for (k, (name, col)) in table.columns.iter_mut().enumerate() {
                let cell = rec.get(k + 1).unwrap_or("");
                col.push(match cell {
                    "" | "NA" | "-" => None,
                    s => Some(
                        s.parse()
                            .map_err(|_| Error::Format(format!("bad {name} value {s:?}")))?,
                    ),
                });
            }
        }
        Ok(table)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, c)| c.as_slice())
            .ok_or_else(|| Error::Format(format!("missing column {name}")))
    }

    /// Bucket statistics carrying only a correlation column and constant
    /// standard deviations, for tables that report correlation alone.
    pub fn correlation_stats(
        &self,
        corr: &str,
        std_bid: f64,
        std_ask: f64,
    ) -> Result<Vec<BucketStats>> {
        let col = self.column(corr)?;
        Ok(self
            .buckets
            .iter()
            .zip(col)
            .map(|(&(lo, hi), &c)| {
                let mut s = BucketStats::empty(lo, hi);
                s.corr = c;
                s.std_bid = Some(std_bid);
                s.std_ask = Some(std_ask);
                s
            })
            .collect())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Drift ratios with the underlying volumes, one row per bucket.
pub fn write_drift_table<W: Write>(w: W, stats: &[BucketStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "imbalance",
        "n_obs",
        "bid_pos_volume",
        "bid_neg_volume",
        "bid_drift_ratio",
        "ask_pos_volume",
        "ask_neg_volume",
        "ask_drift_ratio",
    ])?;
    for s in stats {
        out.write_record([
            format!("{:.2}-{:.2}", s.lo, s.hi),
            s.n_obs.to_string(),
            fmt_f64(s.bid.pos_volume),
            fmt_f64(s.bid.neg_volume),
            opt(s.bid.drift_ratio()),
            fmt_f64(s.ask.pos_volume),
            fmt_f64(s.ask.neg_volume),
            opt(s.ask.drift_ratio()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_correlation_table<W: Write>(w: W, stats: &[BucketStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["imbalance", "n_obs", "corr", "std_bid", "std_ask"])?;
    for s in stats {
        out.write_record([
            format!("{:.2}-{:.2}", s.lo, s.hi),
            s.n_obs.to_string(),
            opt(s.corr),
            opt(s.std_bid),
            opt(s.std_ask),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_empirical_table<W: Write>(w: W, points: &[EmpiricalPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["imbalance", "z", "p_up", "count"])?;
    for p in points {
        out.write_record([
            format!("{:.2}-{:.2}", p.lo, p.hi),
            fmt_f64(p.midpoint()),
            opt(p.p_up),
            p.count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an empirical table; rows with an empty `p_up` are dropped.
pub fn read_empirical_table<R: Read>(r: R) -> Result<Vec<EmpiricalPoint>> {
    read_empirical_column(r, "p_up")
}

/// Like [`read_empirical_table`] with the probabilities taken from the
/// named column, for tables that carry several series.
pub fn read_empirical_column<R: Read>(r: R, column: &str) -> Result<Vec<EmpiricalPoint>> {
    let table = BucketTable::read_csv(r)?;
    let p = table.column(column)?;
    let count = table.column("count").ok();
    Ok(table
        .buckets
        .iter()
        .enumerate()
        .filter_map(|(i, &(lo, hi))| {
            p[i].map(|v| EmpiricalPoint {
                lo,
                hi,
                p_up: Some(v),
                count: count.and_then(|c| c[i]).map_or(0, |c| c as u64),
            })
        })
        .collect())
}

pub fn write_share_table<W: Write>(w: W, shares: &[(Exchange, f64)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["exchange", "name", "share"])?;
    for (e, s) in shares {
        out.write_record([
            e.to_string(),
            e.name().unwrap_or("").to_string(),
            fmt_f64(*s),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::records::parse_quotes;
    use crate::estimate::records::tests::SAMPLE;
    use chrono::{NaiveDate, NaiveTime};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rec(ex: &str, sec: i64, bid: f64, bid_size: i64, ask_size: i64) -> QuoteRecord {
        QuoteRecord {
            ticker: "BAC".into(),
            date: NaiveDate::from_ymd_opt(2014, 1, 2).unwrap(),
            time: NaiveTime::from_hms_opt(10, 0, 0).unwrap() + chrono::Duration::seconds(sec),
            bid,
            ask: bid + 0.01,
            bid_size,
            ask_size,
            exchange: Exchange::known(ex).unwrap(),
        }
    }

    fn twenty() -> Buckets {
        Buckets::from_width(0.05).unwrap()
    }

    #[test]
    fn bucket_geometry() {
        let b = twenty();
        assert_eq!(b.count(), 20);
        assert_eq!(b.index(0.0), 0);
        assert_eq!(b.index(0.2), 4);
        assert_eq!(b.index(1.0), 19);
        assert_eq!(b.midpoint(4), 0.225);
        assert_eq!(b.label(4), "0.20-0.25");
        assert_eq!(Buckets::from_width(0.10).unwrap().count(), 10);
        assert!(Buckets::from_width(0.3).is_err());
    }

    #[test]
    fn drift_ratio_three_quarters() {
        // Bid sizes 10, 13, 12, 15, 14 against a deep ask: changes +3, −1, +3, −1.
        let sizes = [10, 13, 12, 15, 14];
        let recs: Vec<_> = sizes
            .iter()
            .enumerate()
            .map(|(i, &b)| rec("T", i as i64, 20.0, b, 1000))
            .collect();
        let stats = bucket_statistics(&recs, twenty()).unwrap();
        let populated: Vec<_> = stats.iter().filter(|s| s.n_obs > 0).collect();
        assert_eq!(populated.len(), 1);
        assert_eq!(populated[0].bid.drift_ratio(), Some(0.75));
        assert_eq!(populated[0].ask.drift_ratio(), None);
    }

    #[test]
    fn swap_changes_are_perfectly_anticorrelated() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (mut b, mut a) = (20i64, 20i64);
        let mut recs = vec![rec("T", 0, 20.0, b, a)];
        for i in 1..2000 {
            let d = if rng.random::<bool>() { 1 } else { -1 };
            if b + d > 0 && a - d > 0 {
                b += d;
                a -= d;
            }
            recs.push(rec("T", i, 20.0, b, a));
        }
        let stats = bucket_statistics(&recs, twenty()).unwrap();
        let mut seen = 0;
        for s in stats.iter().filter(|s| s.corr.is_some()) {
            assert!((s.corr.unwrap() + 1.0).abs() < 1e-12, "{s:?}");
            seen += 1;
        }
        assert!(seen > 2);
    }

    #[test]
    fn planted_correlation_is_recovered() {
        // Seeded bivariate normal size changes, rounded to lots at a large scale.
        use rand_distr::{Distribution, StandardNormal};
        let rho: f64 = -0.34;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2014);
        let (mut b, mut a) = (1_000_000i64, 3_500_000i64);
        let mut recs = vec![rec("N", 0, 30.0, b, a)];
        for i in 1..60_000 {
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            let db = (500.0 * e1).round() as i64;
            let da = (500.0 * (rho * e1 + (1.0 - rho * rho).sqrt() * e2)).round() as i64;
            // Pull back towards the 0.20-0.25 bucket so every pair lands there.
            b += db + (1_000_000 - b) / 50;
            a += da + (3_500_000 - a) / 50;
            recs.push(rec("N", i / 10, 30.0, b, a));
        }
        let stats = bucket_statistics(&recs, twenty()).unwrap();
        let s = &stats[4];
        assert!(s.n_obs > 50_000, "{}", s.n_obs);
        assert!((s.corr.unwrap() - rho).abs() < 0.01, "{:?}", s.corr);
    }

    #[test]
    fn deterministic_next_move() {
        // z > 1/2 always ends with an ask depletion (price up), z < 1/2 down.
        let mut recs = Vec::new();
        let mut bid = 50.0;
        let mut sec = 0;
        for ep in 0..40 {
            let heavy_bid = ep % 2 == 0;
            for k in 1..6 {
                let (b, a) = if heavy_bid { (10 + k, 3) } else { (3, 10 + k) };
                recs.push(rec("T", sec, bid, b, a));
                sec += 1;
            }
            bid += if heavy_bid { 0.01 } else { -0.01 };
        }
        recs.push(rec("T", sec, bid, 5, 5));
        let pts = empirical_pup(&recs, twenty()).unwrap();
        for p in pts.iter().filter(|p| p.count > 0) {
            let expected = if p.lo >= 0.5 { 1.0 } else { 0.0 };
            assert_eq!(p.p_up, Some(expected), "{p:?}");
        }
        let stats = bucket_statistics(&recs, twenty()).unwrap();
        assert_eq!(
            stats.iter().map(|s| s.p_up_count).sum::<u64>(),
            pts.iter().map(|p| p.count).sum::<u64>()
        );
    }

    #[test]
    fn next_moves_skip_equal_mids() {
        let recs = vec![
            rec("T", 0, 10.0, 1, 1),
            rec("T", 1, 10.01, 1, 1),
            rec("T", 2, 10.0, 1, 1),
            rec("T", 3, 10.0, 2, 1),
            rec("T", 4, 9.99, 1, 1),
            rec("T", 5, 9.99, 1, 1),
        ];
        assert_eq!(
            next_moves(&recs),
            vec![
                Some(true),
                Some(false),
                Some(false),
                Some(false),
                None,
                None
            ]
        );
    }

    #[test]
    fn exchange_shares() {
        let recs = parse_quotes(SAMPLE.as_bytes()).unwrap().records;
        let shares = exchange_volume_shares(&recs, ShareBasis::Records);
        let get = |c: char| shares.iter().find(|(e, _)| e.code() == c).unwrap().1;
        assert_eq!(
            (get('N'), get('T'), get('P')),
            (2.0 / 6.0, 3.0 / 6.0, 1.0 / 6.0)
        );
        assert!((shares.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() < 1e-15);

        let one = vec![rec("T", 0, 1.0, 1, 1), rec("T", 1, 1.0, 2, 1)];
        assert_eq!(
            exchange_volume_shares(&one, ShareBasis::QuotedSize)[0].1,
            1.0
        );
        let two = vec![rec("T", 0, 1.0, 3, 1), rec("N", 1, 1.0, 2, 2)];
        let s = exchange_volume_shares(&two, ShareBasis::QuotedSize);
        assert_eq!((s[0].1, s[1].1), (0.5, 0.5));
        assert!(exchange_volume_shares(&[], ShareBasis::Records).is_empty());
    }

    #[test]
    fn coefficient_knots() {
        let mut stats: Vec<_> = (0..20)
            .map(|k| {
                let (lo, hi) = twenty().bounds(k);
                let mut s = BucketStats::empty(lo, hi);
                s.corr = Some(-0.3);
                s.std_bid = Some(2.0);
                s.std_ask = Some(3.0);
                s
            })
            .collect();
        let c = coefficients_from_data(&stats, 4.0).unwrap();
        for z in [0.0, 0.33, 1.0] {
            assert_eq!(
                c.eval(z),
                Coefficients {
                    sigma_bid: 1.0,
                    sigma_ask: 1.5,
                    rho: -0.3
                }
            );
        }
        stats[7].corr = None;
        stats[6].corr = Some(-0.1);
        stats[8].corr = Some(-0.5);
        let c = coefficients_from_data(&stats, 1.0).unwrap();
        assert!((c.eval(stats[7].midpoint()).rho + 0.3).abs() < 1e-12);

        for s in stats.iter_mut().skip(1) {
            s.corr = None;
        }
        assert!(matches!(
            coefficients_from_data(&stats, 1.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn bucket_table_columns() {
        let text = "Imbalance,A,B\n0.00-0.50,-0.1,\n0.50-1.00,-0.2,NA\n";
        let t = BucketTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.buckets, vec![(0.0, 0.5), (0.5, 1.0)]);
        assert_eq!(t.column("a").unwrap(), &[Some(-0.1), Some(-0.2)]);
        assert_eq!(t.column("B").unwrap(), &[None, None]);
        assert!(t.column("C").is_err());
        assert!(parse_bucket_label("0.3").is_err());
    }

    #[test]
    fn empirical_table_round_trip() {
        let pts = vec![
            EmpiricalPoint {
                lo: 0.0,
                hi: 0.5,
                p_up: Some(0.25),
                count: 10,
            },
            EmpiricalPoint {
                lo: 0.5,
                hi: 1.0,
                p_up: None,
                count: 0,
            },
        ];
        let mut buf = Vec::new();
        write_empirical_table(&mut buf, &pts).unwrap();
        assert_eq!(read_empirical_table(&buf[..]).unwrap(), vec![pts[0]]);
    }

    fn day(ex: &str, seed: u64) -> Vec<QuoteRecord> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut bid = 20.0;
        (0..200)
            .map(|i| {
                if rng.random::<f64>() < 0.1 {
                    bid += if rng.random::<bool>() { 0.01 } else { -0.01 };
                }
                rec(ex, i, bid, rng.random_range(0..30), rng.random_range(0..30))
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn partition_order_does_not_matter(seed in any::<u64>(), perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
            let parts = [day("T", seed), day("N", seed ^ 1), day("P", seed ^ 2)];
            let ordered: Vec<_> = parts.iter().flatten().cloned().collect();
            let shuffled: Vec<_> = perm.iter().flat_map(|&k| parts[k].clone()).collect();
            prop_assert_eq!(
                bucket_statistics(&ordered, twenty()).unwrap(),
                bucket_statistics(&shuffled, twenty()).unwrap()
            );
            for s in bucket_statistics(&ordered, twenty()).unwrap() {
                for r in [s.bid.drift_ratio(), s.ask.drift_ratio(), s.p_up].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&r));
                }
                if let Some(c) = s.corr {
                    prop_assert!((-1.0..=1.0).contains(&c));
                }
            }
        }
    }
}
