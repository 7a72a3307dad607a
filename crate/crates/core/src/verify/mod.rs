//! Cross-checks between the discrete model, its diffusion limit and the
//! analytic up-move probability.

mod chain;
mod euler;

pub use chain::{chain_oracle, chain_solve, CAP_TOL};
pub use euler::{default_horizon, euler_first_passage, EulerConfig, EulerReport};

use std::io::Write;

use crate::curve::{fmt_f64, IntensityProfile};
use crate::error::{Error, Result};
use crate::model::{coefficients_from_intensities, pup_general, QuadratureControls};
use crate::sim::{first_passage_prob, Mode, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    pub p_hat: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub abs_error: f64,
    pub censor_fraction: f64,
}

/// For each scale `n`, estimates the discrete first-passage probability
/// from `(⌈x√n⌉, ⌈y√n⌉)` and compares it with the diffusion answer at
/// `z₀ = x / (x + y)`.
///
/// The horizon of each run is `horizon_factor · n (x + y)² / min σ²`.
pub fn convergence_experiment(
    profile: &IntensityProfile,
    (x, y): (f64, f64),
    scales: &[u32],
    paths: u64,
    seed: u64,
    horizon_factor: f64,
) -> Result<Vec<ConvergenceRow>> {
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::domain("initial sizes must be positive"));
    }
    if scales.contains(&0) {
        return Err(Error::domain("scale factors must be at least 1"));
    }
    let coeffs = coefficients_from_intensities(profile)?;
    let z0 = x / (x + y);
    let analytic =
        pup_general(&coeffs, &QuadratureControls::with_grid(vec![0.0, z0, 1.0]))?.eval(z0);
    let min_var = coeffs
        .knots()
        .map(|(_, c)| c.sigma_bid.min(c.sigma_ask))
        .fold(f64::INFINITY, f64::min)
        .powi(2);

    scales
        .iter()
        .map(|&n| {
            let root = (n as f64).sqrt();
            let start = ((x * root).ceil() as i64, (y * root).ceil() as i64);
            let horizon = horizon_factor * n as f64 * (x + y) * (x + y) / min_var;
            let cfg = RunConfig::new(
                profile.clone(),
                start,
                horizon,
                seed.wrapping_add(n as u64),
                Mode::FirstPassage,
            )?;
            let r = first_passage_prob(&cfg, paths)?;
            Ok(ConvergenceRow {
                n,
                p_hat: r.p_up,
                stderr: r.stderr,
                analytic,
                abs_error: (r.p_up - analytic).abs(),
                censor_fraction: r.censor_fraction(),
            })
        })
        .collect()
}

pub fn write_convergence_csv<W: Write>(w: W, rows: &[ConvergenceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "n",
        "p_hat",
        "stderr",
        "analytic",
        "abs_error",
        "censor_fraction",
    ])?;
    for r in rows {
        out.write_record([
            r.n.to_string(),
            fmt_f64(r.p_hat),
            fmt_f64(r.stderr),
            fmt_f64(r.analytic),
            fmt_f64(r.abs_error),
            fmt_f64(r.censor_fraction),
        ])?;
    }
    out.flush()?;
    Ok(())
}
