//! Exact event-driven simulation of the six-stream level-1 queue model.
//!
//! Between events every intensity is frozen at the imbalance just before
//! the event, so waiting times are exponential with the total rate and the
//! event kind is a categorical draw.

mod quotes;

pub use quotes::{synthetic_quotes, QuoteSynth};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::curve::IntensityProfile;
use crate::error::{Error, Result};

/// The six order-flow streams, in the order of the intensity columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Limit order joins the bid queue.
    BidLimit,
    /// Market sell or cancellation at the bid.
    BidCancel,
    /// Limit order joins the ask queue.
    AskLimit,
    /// Market buy or cancellation at the ask.
    AskCancel,
    /// One unit leaves the ask and joins the bid.
    AskToBid,
    /// One unit leaves the bid and joins the ask.
    BidToAsk,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::BidLimit,
        EventKind::BidCancel,
        EventKind::AskLimit,
        EventKind::AskCancel,
        EventKind::AskToBid,
        EventKind::BidToAsk,
    ];

    /// Change in (bid, ask) queue sizes.
    pub fn delta(self) -> (i64, i64) {
        match self {
            EventKind::BidLimit => (1, 0),
            EventKind::BidCancel => (-1, 0),
            EventKind::AskLimit => (0, 1),
            EventKind::AskCancel => (0, -1),
            EventKind::AskToBid => (1, -1),
            EventKind::BidToAsk => (-1, 1),
        }
    }

    /// Position in the intensity vector.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Short label "N1" .. "N6".
    pub fn label(self) -> &'static str {
        ["N1", "N2", "N3", "N4", "N5", "N6"][self.index()]
    }

    pub fn from_label(s: &str) -> Option<Self> {
        EventKind::ALL.into_iter().find(|k| k.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobState {
    pub x: i64,
    pub y: i64,
    pub t: f64,
}

impl LobState {
    pub fn new(x: i64, y: i64) -> Self {
        Self { x, y, t: 0.0 }
    }

    pub fn imbalance(&self) -> f64 {
        let total = self.x + self.y;
        if total == 0 {
            0.5
        } else {
            self.x as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub kind: EventKind,
    pub t: f64,
    pub state_after: LobState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FreeRun,
    FirstPassage,
}

/// How a path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Ask queue depleted first: the price ticks up.
    Up,
    /// Bid queue depleted first.
    Down,
    /// Reached the horizon with both queues alive.
    Horizon,
    /// Total intensity vanished.
    Stalled,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Up => "up",
            Outcome::Down => "down",
            Outcome::Horizon => "horizon",
            Outcome::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terminal {
    pub outcome: Outcome,
    pub state: LobState,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: IntensityProfile,
    pub initial: LobState,
    pub horizon: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl RunConfig {
    pub fn new(
        profile: IntensityProfile,
        initial: (i64, i64),
        horizon: f64,
        seed: u64,
        mode: Mode,
    ) -> Result<Self> {
        let cfg = Self {
            profile,
            initial: LobState::new(initial.0, initial.1),
            horizon,
            seed,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::domain(format!(
                "horizon must be positive (got {})",
                self.horizon
            )));
        }
        let LobState { x, y, .. } = self.initial;
        if x < 0 || y < 0 {
            return Err(Error::domain(format!(
                "initial queues must be nonnegative (got {x}, {y})"
            )));
        }
        if x == 0 && y == 0 {
            return Err(Error::domain("both initial queues are empty"));
        }
        Ok(())
    }
}

/// Generator for path `index` of a run seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub initial: LobState,
    pub events: Vec<SimEvent>,
    pub terminal: Terminal,
}

/// Simulates path 0 of `cfg` and records every event.
pub fn simulate_path(cfg: &RunConfig) -> Result<SimPath> {
    simulate_indexed_path(cfg, 0)
}

pub fn simulate_indexed_path(cfg: &RunConfig, index: u64) -> Result<SimPath> {
    let mut events = Vec::new();
    let terminal = simulate_with(cfg, index, |e| events.push(*e))?;
    Ok(SimPath {
        initial: cfg.initial,
        events,
        terminal,
    })
}

/// Runs path `index`, handing each event to `visit` instead of storing it.
pub fn simulate_with(
    cfg: &RunConfig,
    index: u64,
    mut visit: impl FnMut(&SimEvent),
) -> Result<Terminal> {
    cfg.validate()?;
    let mut rng = path_rng(cfg.seed, index);
    let mut state = cfg.initial;
    let mut events = 0u64;
    let terminal = |outcome, state, events| Terminal {
        outcome,
        state,
        events,
    };

    // Depletion is checked before anything else, so a start on the axis is
    // already absorbed.
    loop {
        if state.y == 0 {
            return Ok(terminal(Outcome::Up, state, events));
        }
        if state.x == 0 {
            return Ok(terminal(Outcome::Down, state, events));
        }
        let rates = cfg.profile.eval(state.imbalance());
        let total: f64 = rates.iter().sum();
        if !(total > 0.0) {
            return Ok(terminal(Outcome::Stalled, state, events));
        }
        let wait: f64 = Exp1.sample(&mut rng);
        let t = state.t + wait / total;
        if t >= cfg.horizon {
            state.t = cfg.horizon;
            return Ok(terminal(Outcome::Horizon, state, events));
        }
        let kind = pick(&rates, total, rng.random::<f64>());
        let (dx, dy) = kind.delta();
        state = LobState {
            x: state.x + dx,
            y: state.y + dy,
            t,
        };
        events += 1;
        visit(&SimEvent {
            kind,
            t,
            state_after: state,
        });
    }
}

fn pick(rates: &[f64; 6], total: f64, u: f64) -> EventKind {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &r) in rates.iter().enumerate() {
        if r > 0.0 {
            acc += r;
            last = i;
            if target < acc {
                return EventKind::ALL[i];
            }
        }
    }
    // Rounding can leave target just above the accumulated sum.
    EventKind::ALL[last]
}

/// Point of a rescaled path: `(X(n t), Y(n t)) / √n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Samples `(X(nt)/√n, Y(nt)/√n)` at `points` uniform times in `[0, t_end]`.
/// The path is held at its last state after its final event.
pub fn rescale_path(
    path: &SimPath,
    n: u32,
    t_end: f64,
    points: usize,
) -> Result<Vec<ScaledSample>> {
    if n == 0 {
        return Err(Error::domain("scale factor must be at least 1"));
    }
    if points < 2 || !(t_end > 0.0) {
        return Err(Error::domain(
            "need at least two sample points over a positive window",
        ));
    }
    let n = n as f64;
    let root = n.sqrt();
    let mut out = Vec::with_capacity(points);
    let mut state = (path.initial.x, path.initial.y);
    let mut next = 0;
    for k in 0..points {
        let t = t_end * k as f64 / (points - 1) as f64;
        while next < path.events.len() && path.events[next].t <= n * t {
            let s = path.events[next].state_after;
            state = (s.x, s.y);
            next += 1;
        }
        out.push(ScaledSample {
            t,
            x: state.0 as f64 / root,
            y: state.1 as f64 / root,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstPassageReport {
    pub paths: u64,
    pub up: u64,
    pub down: u64,
    pub censored: u64,
    pub stalled: u64,
    pub p_up: f64,
    pub stderr: f64,
}

impl FirstPassageReport {
    pub(crate) fn from_counts(up: u64, down: u64, censored: u64, stalled: u64) -> Result<Self> {
        let done = up + down;
        if done == 0 {
            return Err(Error::Inconclusive { censored, stalled });
        }
        let p = up as f64 / done as f64;
        Ok(Self {
            paths: done + censored + stalled,
            up,
            down,
            censored,
            stalled,
            p_up: p,
            stderr: (p * (1.0 - p) / done as f64).sqrt(),
        })
    }

    pub fn censor_fraction(&self) -> f64 {
        (self.censored + self.stalled) as f64 / self.paths as f64
    }
}

/// Fraction of completed paths on which the ask queue empties first.
pub fn first_passage_prob(cfg: &RunConfig, paths: u64) -> Result<FirstPassageReport> {
    if cfg.mode != Mode::FirstPassage {
        return Err(Error::domain(
            "first_passage_prob needs a first-passage config",
        ));
    }
    if paths == 0 {
        return Err(Error::domain("paths must be at least 1"));
    }
    let counts = (0..paths)
        .into_par_iter()
        .map(|i| simulate_with(cfg, i, |_| {}).map(|t| tally(t.outcome)))
        .try_reduce(
            || [0u64; 4],
            |a, b| Ok(std::array::from_fn(|k| a[k] + b[k])),
        )?;
    FirstPassageReport::from_counts(counts[0], counts[1], counts[2], counts[3])
}

fn tally(o: Outcome) -> [u64; 4] {
    let mut c = [0; 4];
    c[match o {
        Outcome::Up => 0,
        Outcome::Down => 1,
        Outcome::Horizon => 2,
        Outcome::Stalled => 3,
    }] = 1;
    c
}

/// Terminal records of paths `0..paths`, in path order.
pub fn run_terminals(cfg: &RunConfig, paths: u64) -> Result<Vec<Terminal>> {
    (0..paths)
        .into_par_iter()
        .map(|i| simulate_with(cfg, i, |_| {}))
        .collect()
}

pub fn write_events_csv<W: Write>(w: W, events: &[SimEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "kind", "x", "y"])?;
    for e in events {
        out.write_record([
            crate::curve::fmt_f64(e.t),
            e.kind.label().to_string(),
            e.state_after.x.to_string(),
            e.state_after.y.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_terminals_csv<W: Write>(w: W, terminals: &[Terminal]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "outcome", "t", "x", "y", "events"])?;
    for (i, t) in terminals.iter().enumerate() {
        out.write_record([
            i.to_string(),
            t.outcome.label().to_string(),
            crate::curve::fmt_f64(t.state.t),
            t.state.x.to_string(),
            t.state.y.to_string(),
            t.events.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(l: [f64; 6]) -> IntensityProfile {
        IntensityProfile::constant(l).unwrap()
    }

    fn swap_only() -> IntensityProfile {
        constant([0.0, 0.0, 0.0, 0.0, 1.0, 1.0])
    }

    #[test]
    fn event_table() {
        let expected = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];
        for (k, d) in EventKind::ALL.iter().zip(expected) {
            assert_eq!(k.delta(), d);
            assert_eq!(EventKind::from_label(k.label()), Some(*k));
        }
        assert_eq!(EventKind::AskToBid.label(), "N5");
    }

    #[test]
    fn swap_flows_conserve_total_size() {
        let cfg = RunConfig::new(swap_only(), (2, 3), 1e6, 11, Mode::FreeRun).unwrap();
        for i in 0..50 {
            let path = simulate_indexed_path(&cfg, i).unwrap();
            assert!(path
                .events
                .iter()
                .all(|e| e.state_after.x + e.state_after.y == 5));
            assert!(matches!(path.terminal.outcome, Outcome::Up | Outcome::Down));
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = RunConfig::new(constant([1.0; 6]), (5, 5), 50.0, 99, Mode::FreeRun).unwrap();
        let a = simulate_path(&cfg).unwrap();
        let b = simulate_path(&cfg).unwrap();
        assert_eq!(a, b);
        let bits = |p: &SimPath| p.events.iter().map(|e| e.t.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let other = simulate_indexed_path(&cfg, 1).unwrap();
        assert_ne!(a.events, other.events);
    }

    #[test]
    fn driftless_queues_are_martingales() {
        let cfg = RunConfig::new(constant([1.0; 6]), (5, 5), 1.0, 2024, Mode::FreeRun).unwrap();
        let finals = run_terminals(&cfg, 100_000).unwrap();
        let d: Vec<f64> = finals.iter().map(|t| (t.state.x - 5) as f64).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
    }

    #[test]
    fn horizon_and_stalls() {
        let cfg = RunConfig::new(constant([0.0; 6]), (3, 3), 10.0, 1, Mode::FirstPassage).unwrap();
        let p = simulate_path(&cfg).unwrap();
        assert_eq!(p.terminal.outcome, Outcome::Stalled);
        assert!(p.events.is_empty());
        assert!(matches!(
            first_passage_prob(&cfg, 10),
            Err(Error::Inconclusive {
                censored: 0,
                stalled: 10
            })
        ));

        let short =
            RunConfig::new(constant([1.0; 6]), (40, 40), 0.5, 1, Mode::FirstPassage).unwrap();
        let t = simulate_path(&short).unwrap().terminal;
        assert_eq!(t.outcome, Outcome::Horizon);
        assert_eq!(t.state.t, 0.5);
        assert!(RunConfig::new(constant([1.0; 6]), (1, 1), 0.0, 1, Mode::FreeRun).is_err());
        assert!(RunConfig::new(constant([1.0; 6]), (0, 0), 1.0, 1, Mode::FreeRun).is_err());
    }

    #[test]
    fn empty_bid_is_already_a_down_move() {
        let cfg = RunConfig::new(constant([1.0; 6]), (0, 4), 10.0, 1, Mode::FirstPassage).unwrap();
        let r = first_passage_prob(&cfg, 100).unwrap();
        assert_eq!((r.up, r.down, r.p_up), (0, 100, 0.0));
    }

    #[test]
    fn swap_first_passage_is_two_fifths() {
        let cfg = RunConfig::new(swap_only(), (2, 3), 1e9, 5, Mode::FirstPassage).unwrap();
        let r = first_passage_prob(&cfg, 100_000).unwrap();
        assert!((r.p_up - 0.4).abs() < 3.0 * r.stderr, "{r:?}");
        assert_eq!(r.censored, 0);
    }

    #[test]
    fn symmetric_start_is_even() {
        let cfg = RunConfig::new(
            constant([1.0, 1.0, 1.0, 1.0, 0.5, 0.5]),
            (4, 4),
            1e9,
            8,
            Mode::FirstPassage,
        )
        .unwrap();
        let r = first_passage_prob(&cfg, 40_000).unwrap();
        assert!((r.p_up - 0.5).abs() < 3.0 * r.stderr, "{r:?}");
    }

    #[test]
    fn rescaling_examples() {
        let cfg = RunConfig::new(constant([1.0; 6]), (6, 7), 20.0, 3, Mode::FreeRun).unwrap();
        let path = simulate_path(&cfg).unwrap();
        let one = rescale_path(&path, 1, 20.0, 41).unwrap();
        assert_eq!(
            one[0],
            ScaledSample {
                t: 0.0,
                x: 6.0,
                y: 7.0
            }
        );
        // n = 1 reproduces the path state at each sample time.
        for s in &one {
            let last = path.events.iter().rev().find(|e| e.t <= s.t);
            let (x, y) = last.map_or((6, 7), |e| (e.state_after.x, e.state_after.y));
            assert_eq!((s.x, s.y), (x as f64, y as f64));
        }

        let still = SimPath {
            initial: LobState::new(9, 4),
            events: vec![],
            terminal: Terminal {
                outcome: Outcome::Horizon,
                state: LobState::new(9, 4),
                events: 0,
            },
        };
        for s in rescale_path(&still, 9, 1.0, 5).unwrap() {
            assert_eq!((s.x, s.y), (3.0, 4.0 / 3.0));
        }

        let swap = RunConfig::new(swap_only(), (30, 34), 1e6, 4, Mode::FreeRun).unwrap();
        let path = simulate_path(&swap).unwrap();
        for s in rescale_path(&path, 16, 10.0, 101).unwrap() {
            assert!((s.x + s.y - 16.0).abs() < 1e-12);
        }
        assert!(rescale_path(&path, 0, 1.0, 3).is_err());
    }

    #[test]
    fn events_csv_round_trips_through_text() {
        let cfg = RunConfig::new(constant([1.0; 6]), (2, 2), 5.0, 1, Mode::FreeRun).unwrap();
        let path = simulate_path(&cfg).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &path.events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,kind,x,y"));
        assert_eq!(lines.count(), path.events.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn states_stay_in_the_quadrant(seed in any::<u64>(), x in 1i64..8, y in 1i64..8,
                                       l in proptest::array::uniform6(0.0f64..2.0)) {
            let cfg = RunConfig::new(constant(l), (x, y), 30.0, seed, Mode::FreeRun).unwrap();
            let path = simulate_path(&cfg).unwrap();
            let mut prev = LobState::new(x, y);
            for e in &path.events {
                prop_assert!(e.state_after.x >= 0 && e.state_after.y >= 0);
                prop_assert!(e.t >= prev.t);
                let (dx, dy) = e.kind.delta();
                prop_assert_eq!((prev.x + dx, prev.y + dy), (e.state_after.x, e.state_after.y));
                prev = e.state_after;
            }
        }
    }
}
