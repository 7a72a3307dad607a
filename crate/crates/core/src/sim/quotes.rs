use chrono::{Duration, NaiveDate, NaiveTime};
use rand::Rng;
use rayon::prelude::*;

use super::{path_rng, simulate_with, Mode, Outcome, RunConfig};
use crate::curve::IntensityProfile;
use crate::error::{Error, Result};
use crate::estimate::{Exchange, QuoteRecord};

/// Quote stream built from consecutive first-passage episodes of the
/// discrete model. Each episode starts from uniformly drawn queue sizes,
/// emits one record per event, and ends when a queue empties. The emptied
/// queue is recorded with size zero at the old prices; the next episode
/// quotes one tick higher after an ask depletion and one tick
/// lower after a bid depletion.
#[derive(Debug, Clone)]
pub struct QuoteSynth {
    pub profile: IntensityProfile,
    pub episodes: u64,
    /// Inclusive range for the initial size of each queue.
    pub sizes: (i64, i64),
    /// Episodes still running at this horizon are left out of the stream,
    /// since they end without a price move.
    pub horizon: f64,
    pub seed: u64,
    pub ticker: String,
    pub exchange: char,
    pub date: NaiveDate,
    pub bid: f64,
    pub tick: f64,
}

impl QuoteSynth {
    pub fn new(profile: IntensityProfile, episodes: u64, seed: u64) -> Self {
        Self {
            profile,
            episodes,
            sizes: (1, 40),
            horizon: 1e6,
            seed,
            ticker: "SYN".into(),
            exchange: 'T',
            date: NaiveDate::from_ymd_opt(2014, 1, 2).expect("valid date"),
            bid: 20.0,
            tick: 0.01,
        }
    }
}

const SESSION_SECONDS: u64 = 6 * 3600;

/// Generates the stream. Each episode gets its own timestamp second inside
/// a 10:00-16:00 session; sessions roll over to the next calendar day.
pub fn synthetic_quotes(spec: &QuoteSynth) -> Result<Vec<QuoteRecord>> {
    let (lo, hi) = spec.sizes;
    if lo < 1 || hi < lo {
        return Err(Error::domain(format!(
            "bad initial size range ({lo}, {hi})"
        )));
    }
    let exchange = Exchange::known(&spec.exchange.to_string())?;
    let open = NaiveTime::from_hms_opt(10, 0, 0).expect("valid time");

    // Episodes are simulated independently; prices are threaded afterwards.
    let episodes: Vec<(Vec<(i64, i64)>, Outcome)> = (0..spec.episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = path_rng(spec.seed ^ 0x005e_ed0f_9a7e, e);
            let x = rng.random_range(lo..=hi);
            let y = rng.random_range(lo..=hi);
            let cfg = RunConfig::new(
                spec.profile.clone(),
                (x, y),
                spec.horizon,
                spec.seed,
                Mode::FirstPassage,
            )?;
            let mut states = vec![(x, y)];
            let end = simulate_with(&cfg, e, |ev| {
                states.push((ev.state_after.x, ev.state_after.y));
            })?;
            Ok((states, end.outcome))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    let mut ticks = 0i64;
    for (e, (states, outcome)) in episodes.into_iter().enumerate() {
        let e = e as u64;
        let date = spec.date + Duration::days((e / SESSION_SECONDS) as i64);
        let time = open + Duration::seconds((e % SESSION_SECONDS) as i64);
        let step = match outcome {
            Outcome::Up => 1,
            Outcome::Down => -1,
            Outcome::Horizon | Outcome::Stalled => continue,
        };
        let bid = spec.bid + ticks as f64 * spec.tick;
        for (x, y) in states {
            out.push(QuoteRecord {
                ticker: spec.ticker.clone(),
                date,
                time,
                bid,
                ask: bid + spec.tick,
                bid_size: x,
                ask_size: y,
                exchange,
            });
        }
        ticks += step;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{empirical_pup, Buckets};

    #[test]
    fn swap_model_quotes_follow_the_identity_curve() {
        let profile = IntensityProfile::constant([0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let mut spec = QuoteSynth::new(profile, 4000, 17);
        spec.sizes = (1, 19);
        let quotes = synthetic_quotes(&spec).unwrap();
        let buckets = Buckets::new(10).unwrap();
        let pts = empirical_pup(&quotes, buckets).unwrap();
        for p in pts.iter().filter(|p| p.count > 200) {
            // Records are correlated within an episode, so allow a wide band.
            let p_hat = p.p_up.unwrap();
            let se = (p_hat * (1.0 - p_hat) / p.count as f64).sqrt();
            assert!((p_hat - p.midpoint()).abs() < 8.0 * se + 0.03, "{p:?}");
        }
    }

    #[test]
    fn stream_is_reproducible() {
        let profile = IntensityProfile::constant([1.0; 6]).unwrap();
        let spec = QuoteSynth::new(profile, 50, 3);
        assert_eq!(
            synthetic_quotes(&spec).unwrap(),
            synthetic_quotes(&spec).unwrap()
        );
    }
}
