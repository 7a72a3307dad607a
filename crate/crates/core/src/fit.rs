//! Least-squares fit of the hidden-liquidity parameter.
//!
//! With `P(z, H) = H + (1 − 2H) F(z)` the squared error is a quadratic in
//! `H`, so the minimiser has a closed form.

use std::io::Write;

use crate::curve::{fmt_f64, CoefficientProfile};
use crate::error::{Error, Result};
use crate::estimate::{Buckets, EmpiricalPoint};
use crate::model::{pup_general, pup_hidden, QuadratureControls};

/// Largest admissible hidden liquidity.
pub const H_MAX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub h: f64,
    pub sse: f64,
    pub n_points: usize,
    pub residuals: Vec<Residual>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub z: f64,
    pub empirical: f64,
    pub model: f64,
    /// Records behind the empirical value.
    pub count: u64,
}

impl Residual {
    pub fn value(&self) -> f64 {
        self.empirical - self.model
    }
}

/// Fits `H` to the empirical points, evaluated at bucket midpoints.
pub fn fit_hidden_liquidity(
    empirical: &[EmpiricalPoint],
    coeffs: &CoefficientProfile,
    quad: &QuadratureControls,
) -> Result<FitResult> {
    let points: Vec<(f64, f64, u64)> = empirical
        .iter()
        .filter_map(|p| p.p_up.map(|e| (p.midpoint(), e, p.count)))
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} empirical point(s); need at least 2",
            points.len()
        )));
    }
    let f = pup_general(coeffs, quad)?;
    let base: Vec<f64> = points.iter().map(|&(z, _, _)| f.eval(z)).collect();
    fit_against(&points, &base)
}

/// The fit against precomputed model values `F(zᵢ)`.
pub fn fit_against(points: &[(f64, f64, u64)], base: &[f64]) -> Result<FitResult> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&(_, e, _), &f) in points.iter().zip(base) {
        let g = 1.0 - 2.0 * f;
        num += (e - f) * g;
        den += g * g;
    }
    if den < 1e-12 * points.len() as f64 {
        return Err(Error::Unidentifiable);
    }
    let h = (num / den).clamp(0.0, H_MAX);
    let residuals: Vec<Residual> = points
        .iter()
        .zip(base)
        .map(|(&(z, e, count), &f)| Residual {
            z,
            empirical: e,
            model: h + (1.0 - 2.0 * h) * f,
            count,
        })
        .collect();
    Ok(FitResult {
        h,
        sse: residuals.iter().map(|r| r.value().powi(2)).sum(),
        n_points: residuals.len(),
        residuals,
    })
}

/// Sum of squared errors at a given `H`.
pub fn sse_at(points: &[(f64, f64, u64)], base: &[f64], h: f64) -> f64 {
    points
        .iter()
        .zip(base)
        .map(|(&(_, e, _), &f)| (e - h - (1.0 - 2.0 * h) * f).powi(2))
        .sum()
}

/// Model prediction at each bucket midpoint.
pub fn prediction_table(
    coeffs: &CoefficientProfile,
    h: f64,
    buckets: Buckets,
) -> Result<Vec<(f64, f64, f64)>> {
    let mids: Vec<f64> = (0..buckets.count()).map(|k| buckets.midpoint(k)).collect();
    let mut grid = vec![0.0];
    grid.extend(&mids);
    grid.push(1.0);
    let curve = pup_hidden(coeffs, h, &QuadratureControls::with_grid(grid))?;
    Ok((0..buckets.count())
        .map(|k| {
            let (lo, hi) = buckets.bounds(k);
            (lo, hi, curve.eval(mids[k]))
        })
        .collect())
}

pub fn write_prediction_table<W: Write>(
    w: W,
    rows: &[(f64, f64, f64)],
    empirical: Option<&[EmpiricalPoint]>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["imbalance", "z", "empirical", "model"])?;
    for &(lo, hi, p) in rows {
        let e = empirical
            .and_then(|pts| {
                pts.iter()
                    .find(|q| (q.lo - lo).abs() < 1e-9 && (q.hi - hi).abs() < 1e-9)
            })
            .and_then(|q| q.p_up);
        out.write_record([
            format!("{lo:.2}-{hi:.2}"),
            fmt_f64(0.5 * (lo + hi)),
            e.map(fmt_f64).unwrap_or_default(),
            fmt_f64(p),
        ])?;
    }
    out.flush()?;
    Ok(())
}
