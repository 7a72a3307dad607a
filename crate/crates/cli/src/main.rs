//! `lob`: command-line driver for simulation, estimation, the up-move
//! curve, the hidden-liquidity fit and the convergence check.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::NaiveTime;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tracing::warn;

use lob_core::curve::IntensityProfile;
use lob_core::estimate::{
    bucket_statistics, coalesce_single_sided, coefficients_from_data, empirical_pup,
    exchange_volume_shares, filter_session, parse_quotes, read_empirical_column,
    write_correlation_table, write_drift_table, write_empirical_table, write_quotes,
    write_share_table, Buckets, EmpiricalPoint, ShareBasis,
};
use lob_core::fit::{fit_hidden_liquidity, prediction_table, write_prediction_table};
use lob_core::model::{pup_hidden, validate_driftless, QuadratureControls};
use lob_core::sim::{
    first_passage_prob, run_terminals, simulate_indexed_path, write_events_csv,
    write_terminals_csv, Mode, Outcome, RunConfig,
};
use lob_core::verify::{convergence_experiment, write_convergence_csv};

use config::{
    load, EstimateConfig, FitConfig, Inputs, ModeName, ProfileSpec, PupConfig, Resolver,
    ShareBasisName, SimulateConfig, VerifyConfig,
};
use output::{commit, Outputs, RunInfo};

/// Largest intensity imbalance still treated as driftless.
const DRIFT_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "lob",
    version,
    about = "Level-1 order book queue model toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the discrete queue model.
    Simulate(Common),
    /// Bucketed statistics from consolidated quotes.
    Estimate(Common),
    /// Up-move probability curve for a coefficient profile.
    Pup(Common),
    /// Fit the hidden-liquidity parameter to an empirical curve.
    Fit(Common),
    /// Discrete-to-diffusion convergence table.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Refuse intensity profiles that violate the driftless condition.
    #[arg(long)]
    strict: bool,
    /// Imbalance buckets; overrides the config.
    #[arg(long, value_parser = ["10", "20"])]
    buckets: Option<String>,
    /// Points of the reported curve grid; overrides the config.
    #[arg(long)]
    grid: Option<usize>,
}

impl Common {
    fn buckets(&self, from_config: usize) -> Result<Buckets> {
        let n = match &self.buckets {
            Some(b) => b.parse()?,
            None => from_config,
        };
        Ok(Buckets::new(n)?)
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_target(false)
        .without_time()
        .init();
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c, started),
        Command::Estimate(c) => estimate(c, started),
        Command::Pup(c) => pup(c, started),
        Command::Fit(c) => fit(c, started),
        Command::Verify(c) => verify(c, started),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn check_drift(profile: &IntensityProfile, strict: bool) -> Result<()> {
    let report = validate_driftless(profile, DRIFT_TOL);
    if let Some(v) = report.violations.first() {
        let msg = format!(
            "intensity profile is not driftless at {} level(s); first at z = {} (bid gap {}, ask gap {})",
            report.violations.len(),
            v.z,
            v.bid_gap,
            v.ask_gap
        );
        if strict {
            bail!("{msg}");
        }
        warn!("{msg}");
    }
    Ok(())
}

fn start_run<C: for<'de> serde::Deserialize<'de>>(c: &Common) -> Result<(C, Resolver, Inputs)> {
    let (cfg, bytes) = load::<C>(&c.config)?;
    let mut inputs = Inputs::default();
    inputs.add(Path::new(c.config.file_name().unwrap_or_default()), &bytes);
    Ok((cfg, Resolver::for_config(&c.config), inputs))
}

fn finish<C: Serialize>(
    c: &Common,
    name: &str,
    seed: Option<u64>,
    cfg: &C,
    inputs: Inputs,
    outputs: Outputs,
    started: Instant,
) -> Result<()> {
    let info = RunInfo {
        subcommand: name,
        seed,
        strict: c.strict,
        config: cfg,
        inputs,
    };
    commit(&c.out_dir, outputs, info, started.elapsed())
}

fn profile(
    spec: &ProfileSpec,
    r: &Resolver,
    inputs: &mut Inputs,
    strict: bool,
) -> Result<IntensityProfile> {
    let p = spec.resolve(r, inputs)?;
    check_drift(&p, strict)?;
    Ok(p)
}

fn simulate(c: &Common, started: Instant) -> Result<()> {
    let (mut cfg, r, mut inputs) = start_run::<SimulateConfig>(c)?;
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    let p = profile(&cfg.profile, &r, &mut inputs, c.strict)?;
    let run = &cfg.run;
    let mode = match run.mode {
        ModeName::FirstPassage => Mode::FirstPassage,
        ModeName::FreeRun => Mode::FreeRun,
    };
    let rc = RunConfig::new(p, run.start, run.horizon, run.seed, mode)?;

    let mut out = Outputs::default();
    let terminals = run_terminals(&rc, run.paths)?;
    let count = |o: Outcome| terminals.iter().filter(|t| t.outcome == o).count();
    let mut summary = format!(
        "paths,up,down,horizon,stalled,p_up,stderr\n{},{},{},{},{}",
        run.paths,
        count(Outcome::Up),
        count(Outcome::Down),
        count(Outcome::Horizon),
        count(Outcome::Stalled)
    );
    match (mode, first_passage_prob(&rc, run.paths)) {
        (Mode::FirstPassage, Ok(fp)) => summary += &format!(",{:?},{:?}\n", fp.p_up, fp.stderr),
        (Mode::FirstPassage, Err(e)) => {
            warn!("no path reached a depletion: {e}");
            summary += ",,\n";
        }
        (Mode::FreeRun, _) => summary += ",,\n",
    }
    out.text("summary.csv", summary);
    if run.terminals {
        out.table("terminals.csv", |w| write_terminals_csv(w, &terminals))?;
    }
    if run.events {
        let path = simulate_indexed_path(&rc, 0)?;
        out.table("events.csv", |w| write_events_csv(w, &path.events))?;
    }
    finish(c, "simulate", Some(run.seed), &cfg, inputs, out, started)
}

fn estimate(c: &Common, started: Instant) -> Result<()> {
    let (mut cfg, r, mut inputs) = start_run::<EstimateConfig>(c)?;
    let buckets = c.buckets(cfg.stats.buckets)?;
    cfg.stats.buckets = buckets.count();
    let time = |s: &str| {
        NaiveTime::parse_from_str(s, "%H:%M:%S")
            .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
            .with_context(|| format!("bad window time {s:?}"))
    };
    let (start, end) = (time(&cfg.window.start)?, time(&cfg.window.end)?);

    let (full, bytes) = r.read(&cfg.input.quotes)?;
    let parsed = parse_quotes(bytes.as_slice())
        .with_context(|| format!("cannot ingest {}", full.display()))?;
    inputs.add(&cfg.input.quotes, &bytes);
    if parsed.malformed > 0 {
        warn!(
            "{} of {} rows malformed and skipped",
            parsed.malformed, parsed.total
        );
        for p in &parsed.problems {
            warn!("{p}");
        }
    }
    let records: Vec<_> = parsed
        .records
        .into_iter()
        .filter(|q| cfg.input.ticker.as_ref().is_none_or(|t| &q.ticker == t))
        .filter(|q| q.time >= start && q.time < end)
        .collect();
    let basis = match cfg.stats.share_basis {
        ShareBasisName::Records => ShareBasis::Records,
        ShareBasisName::QuotedSize => ShareBasis::QuotedSize,
    };
    let shares = exchange_volume_shares(&records, basis);
    let kept = filter_session(&records, &cfg.input.exchange, start, end)?;
    if kept.is_empty() {
        warn!(
            "no records in the window for exchange {}",
            cfg.input.exchange
        );
    }
    let work = if cfg.stats.coalesce {
        coalesce_single_sided(&kept)?
    } else {
        kept.clone()
    };
    let stats = bucket_statistics(&work, buckets)?;
    let empirical = empirical_pup(&work, buckets)?;

    let mut out = Outputs::default();
    out.table("filtered.csv", |w| write_quotes(w, &kept))?;
    out.table("drift.csv", |w| write_drift_table(w, &stats))?;
    out.table("correlation.csv", |w| write_correlation_table(w, &stats))?;
    out.table("empirical.csv", |w| write_empirical_table(w, &empirical))?;
    out.table("shares.csv", |w| write_share_table(w, &shares))?;
    match coefficients_from_data(&stats, cfg.stats.dt) {
        Ok(coeffs) => out.table("coefficients.csv", |w| coeffs.write_csv(w))?,
        Err(e) => warn!("no coefficient profile: {e}"),
    }
    finish(c, "estimate", None, &cfg, inputs, out, started)
}

fn quad(grid: Vec<f64>, panels: Option<usize>) -> QuadratureControls {
    let q = QuadratureControls::with_grid(grid);
    match panels {
        Some(p) => q.panels(p),
        None => q,
    }
}

fn pup(c: &Common, started: Instant) -> Result<()> {
    let (mut cfg, r, mut inputs) = start_run::<PupConfig>(c)?;
    if let Some(g) = c.grid {
        cfg.curve.grid = g;
    }
    if cfg.curve.grid < 2 {
        bail!("the grid needs at least 2 points");
    }
    let (coeffs, intensities) = cfg.model.resolve(&r, &mut inputs)?;
    if let Some(l) = &intensities {
        check_drift(l, c.strict)?;
    }
    let h = cfg.curve.hidden;
    let q = quad(
        QuadratureControls::uniform(cfg.curve.grid).grid,
        cfg.curve.panels,
    );
    let curve = pup_hidden(&coeffs, h, &q)?;

    let mut out = Outputs::default();
    out.table("pup.csv", |w| curve.write_csv(w))?;
    let mut check = String::from("z,expected,computed,abs_error\n");
    for (z, want) in [(0.0, h), (1.0, 1.0 - h)] {
        let got = curve.eval(z);
        check += &format!("{z:?},{want:?},{got:?},{:?}\n", (got - want).abs());
    }
    out.text("endpoints.csv", check);
    finish(c, "pup", None, &cfg, inputs, out, started)
}

fn fit(c: &Common, started: Instant) -> Result<()> {
    let (mut cfg, r, mut inputs) = start_run::<FitConfig>(c)?;
    let buckets = c.buckets(cfg.fit.buckets)?;
    cfg.fit.buckets = buckets.count();
    let (full, bytes) = r.read(&cfg.input.empirical)?;
    let empirical = read_empirical_column(bytes.as_slice(), &cfg.input.column)
        .with_context(|| format!("bad empirical table {}", full.display()))?;
    inputs.add(&cfg.input.empirical, &bytes);
    let (coeffs, intensities) = cfg.model.resolve(&r, &mut inputs)?;
    if let Some(l) = &intensities {
        check_drift(l, c.strict)?;
    }
    let mut grid = vec![0.0];
    grid.extend(empirical.iter().map(EmpiricalPoint::midpoint));
    grid.push(1.0);
    let result = fit_hidden_liquidity(&empirical, &coeffs, &quad(grid, cfg.fit.panels))?;
    let rows = prediction_table(&coeffs, result.h, buckets)?;

    let mut out = Outputs::default();
    out.text(
        "fit.toml",
        format!(
            "h = {:?}\nsse = {:?}\nn_points = {}\n",
            result.h, result.sse, result.n_points
        ),
    );
    let mut residuals = String::from("z,empirical,model,residual,count\n");
    for r in &result.residuals {
        residuals += &format!(
            "{:?},{:?},{:?},{:?},{}\n",
            r.z,
            r.empirical,
            r.model,
            r.value(),
            r.count
        );
    }
    out.text("residuals.csv", residuals);
    out.table("prediction.csv", |w| {
        write_prediction_table(w, &rows, Some(&empirical))
    })?;
    finish(c, "fit", None, &cfg, inputs, out, started)
}

fn verify(c: &Common, started: Instant) -> Result<()> {
    let (mut cfg, r, mut inputs) = start_run::<VerifyConfig>(c)?;
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    let p = profile(&cfg.profile, &r, &mut inputs, c.strict)?;
    let run = &cfg.run;
    let rows = convergence_experiment(
        &p,
        run.start,
        &run.scales,
        run.paths,
        run.seed,
        run.horizon_factor,
    )?;
    let mut out = Outputs::default();
    out.table("convergence.csv", |w| write_convergence_csv(w, &rows))?;
    finish(c, "verify", Some(run.seed), &cfg, inputs, out, started)
}
