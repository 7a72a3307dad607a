//! Closed forms for constant-coefficient correlated Brownian queues.
//!
//! After the linear change of variables that whitens the two Brownian
//! motions, the quadrant `{x > 0, y > 0}` becomes a wedge of opening angle
//! `α`, the start point sits at polar coordinates `(r₀, θ₀)`, and the ask
//! queue depleting first is the event of leaving through the ray `θ = α`.
//! Without drift that probability is the harmonic measure `θ₀ / α`. With
//! drift it is the Girsanov-tilted integral of the exit density `g(t, r)`
//! on that ray, whose eigenfunction expansion involves `I_{nπ/α}`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::special::bessel_i_scaled;

/// Up-move probability for driftless correlated Brownian queues with equal
/// volatilities started at bid size `x`, ask size `y`.
///
/// `ρ = −1` uses the limit `x / (x + y)`; `ρ = 1` is rejected.
pub fn pup_closed_form_corr(x: f64, y: f64, rho: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::domain(format!(
            "queue sizes must be positive (got {x}, {y})"
        )));
    }
    if !(-1.0..1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "correlation {rho} must lie in [-1, 1)"
        )));
    }
    if rho == -1.0 {
        return Ok(x / (x + y));
    }
    let k = ((1.0 + rho) / (1.0 - rho)).sqrt();
    Ok(0.5 * (1.0 - (k * (y - x) / (y + x)).atan() / k.atan()))
}

/// Controls for the drifted double integral over exit time `t` and exit
/// radius `r`, carried out in `(ln t, ln r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgeQuadrature {
    /// Trapezoid step in `ln t`.
    pub log_time_step: f64,
    /// Largest trapezoid step in `ln r`; narrower near small `t`.
    pub log_radius_step: f64,
    /// Admissible total of all truncation estimates.
    pub tol: f64,
}

impl Default for WedgeQuadrature {
    fn default() -> Self {
        Self {
            log_time_step: 0.02,
            log_radius_step: 0.05,
            tol: 1e-7,
        }
    }
}

pub const DEFAULT_SERIES_TERMS: usize = 40;

/// Correlated Brownian queues with constant drifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftedBmSpec {
    pub drift_bid: f64,
    pub drift_ask: f64,
    pub sigma_bid: f64,
    pub sigma_ask: f64,
    pub rho: f64,
    /// Initial bid queue.
    pub x: f64,
    /// Initial ask queue.
    pub y: f64,
    pub series_terms: usize,
    pub quad: WedgeQuadrature,
}

impl DriftedBmSpec {
    /// Driftless spec with default numerics.
    pub fn driftless(sigma_bid: f64, sigma_ask: f64, rho: f64, x: f64, y: f64) -> Self {
        Self {
            drift_bid: 0.0,
            drift_ask: 0.0,
            sigma_bid,
            sigma_ask,
            rho,
            x,
            y,
            series_terms: DEFAULT_SERIES_TERMS,
            quad: WedgeQuadrature::default(),
        }
    }

    pub fn with_drifts(mut self, drift_bid: f64, drift_ask: f64) -> Self {
        self.drift_bid = drift_bid;
        self.drift_ask = drift_ask;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma_bid > 0.0 && self.sigma_ask > 0.0) {
            return Err(Error::domain("volatilities must be positive"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::domain(format!(
                "correlation {} must lie in (-1, 1)",
                self.rho
            )));
        }
        if !(self.x > 0.0 && self.y > 0.0) {
            return Err(Error::domain("initial queue sizes must be positive"));
        }
        if !(self.drift_bid.is_finite() && self.drift_ask.is_finite()) {
            return Err(Error::domain("drifts must be finite"));
        }
        if self.series_terms == 0 {
            return Err(Error::domain("series_terms must be at least 1"));
        }
        let q = &self.quad;
        if !(q.log_time_step > 0.0 && q.log_radius_step > 0.0 && q.tol > 0.0) {
            return Err(Error::domain(
                "quadrature steps and tolerance must be positive",
            ));
        }
        Ok(())
    }
}

/// Derived quantities of the whitened problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgeGeometry {
    /// Wedge opening angle.
    pub alpha: f64,
    pub r0: f64,
    pub theta0: f64,
    /// Whitened start point (`z^a`, `z^b`).
    pub start_a: f64,
    pub start_b: f64,
    /// Whitened drift (`γ^a`, `γ^b`).
    pub gamma_a: f64,
    pub gamma_b: f64,
}

impl WedgeGeometry {
    pub fn new(spec: &DriftedBmSpec) -> Result<Self> {
        spec.validate()?;
        let rho = spec.rho;
        let root = (1.0 - rho * rho).sqrt();
        let xb = spec.x / spec.sigma_bid;
        let ya = spec.y / spec.sigma_ask;

        let alpha = if rho > 0.0 {
            PI + (-root / rho).atan()
        } else if rho == 0.0 {
            FRAC_PI_2
        } else {
            (-root / rho).atan()
        };
        let r0 = (xb * xb + ya * ya - 2.0 * rho * xb * ya).sqrt() / root;
        let denom = ya - rho * xb;
        let theta0 = if denom < 0.0 {
            PI + (xb * root / denom).atan()
        } else if denom == 0.0 {
            FRAC_PI_2
        } else {
            (xb * root / denom).atan()
        };

        // Inverse of [[σᵃ√(1−ρ²), σᵃρ], [0, σᵇ]] applied to (y, x) and to (μᵃ, μᵇ).
        let whiten = |a: f64, b: f64| {
            let second = b / spec.sigma_bid;
            let first = (a / spec.sigma_ask - rho * second) / root;
            (first, second)
        };
        let (start_a, start_b) = whiten(spec.y, spec.x);
        let (gamma_a, gamma_b) = whiten(spec.drift_ask, spec.drift_bid);

        Ok(Self {
            alpha,
            r0,
            theta0,
            start_a,
            start_b,
            gamma_a,
            gamma_b,
        })
    }

    /// Harmonic measure of the exit ray, the driftless answer.
    pub fn driftless_pup(&self) -> f64 {
        self.theta0 / self.alpha
    }
}

/// Value of the drifted double integral and its truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgeIntegral {
    pub value: f64,
    /// Sum of the small-time bound, large-time tail and series tails.
    pub tail: f64,
}

/// Up-move probability for correlated Brownian queues with constant drifts.
pub fn pup_drifted_bm(spec: &DriftedBmSpec) -> Result<f64> {
    let geom = WedgeGeometry::new(spec)?;
    if spec.drift_bid == 0.0 && spec.drift_ask == 0.0 {
        return Ok(geom.driftless_pup());
    }
    Ok(wedge_integral(spec)?.value)
}

/// Evaluates the exit-density integral even when both drifts vanish.
pub fn wedge_integral(spec: &DriftedBmSpec) -> Result<WedgeIntegral> {
    let g = WedgeGeometry::new(spec)?;
    let q = spec.quad;
    let alpha = g.alpha;
    let r0 = g.r0;
    let order_step = PI / alpha;
    let phase = PI * (alpha - g.theta0) / alpha;
    let prefactor = PI / (alpha * alpha);
    let gamma_sq = g.gamma_a * g.gamma_a + g.gamma_b * g.gamma_b;
    let gamma_norm = gamma_sq.sqrt();
    let gamma_ray = g.gamma_a * alpha.cos() + g.gamma_b * alpha.sin();
    let gamma_start = g.gamma_a * g.start_a + g.gamma_b * g.start_b;

    // Exit before t_min needs a 1-D excursion of (d − |γ|t)/√t standard
    // deviations towards the exit ray; choose t_min to make that negligible.
    const CUTOFF_SIGMAS: f64 = 6.5;
    let gap = alpha - g.theta0;
    let (dist, scale) = if gap < FRAC_PI_2 {
        (r0 * gap.sin(), 1.0)
    } else {
        (r0, std::f64::consts::SQRT_2)
    };
    let mut t_min = (dist / (scale * CUTOFF_SIGMAS)).powi(2);
    while (dist - gamma_norm * t_min) / (scale * t_min.sqrt()) < CUTOFF_SIGMAS {
        t_min *= 0.5;
    }
    let short_time_bound =
        2.0 * 2.0 * normal_tail((dist - gamma_norm * t_min) / (scale * t_min.sqrt()));

    // The driftless exit density decays like t^(−1 − π/(2α)); in ln t the
    // line integrals fall off at least at rate π/(2α).
    let decay = (PI / (2.0 * alpha)).max(1e-3);
    const MAX_LOG_SPAN: f64 = 120.0;

    let mut value = 0.0;
    let mut series_tail = 0.0;
    let mut s = t_min.ln();
    let s_start = s;
    let mut last_line = f64::INFINITY;
    let mut peak_line: f64 = 0.0;
    let mut first = true;
    loop {
        let t = s.exp();
        let sqrt_t = t.sqrt();
        let centre = r0 + gamma_ray.max(0.0) * t;
        let r_hi = centre + 10.0 * sqrt_t * order_step.sqrt().max(1.0);
        let r_lo = (r0 - 10.0 * sqrt_t).max(r0.min(sqrt_t) * (-40.0 / order_step).exp());
        let (q_lo, q_hi) = (r_lo.ln(), r_hi.ln());
        let width = sqrt_t / centre.max(sqrt_t);
        let h_q = q.log_radius_step.min(0.1 * width);
        let nq = (((q_hi - q_lo) / h_q).ceil() as usize).clamp(8, 200_000);
        let h_q = (q_hi - q_lo) / nq as f64;

        let mut line = 0.0;
        let mut line_tail = 0.0;
        for k in 0..=nq {
            let r = (q_lo + k as f64 * h_q).exp();
            let w = if k == 0 || k == nq { 0.5 } else { 1.0 };
            let expo =
                -(r - r0) * (r - r0) / (2.0 * t) + gamma_ray * r - gamma_start - 0.5 * gamma_sq * t;
            if expo < -60.0 {
                continue;
            }
            let arg = r * r0 / t;
            let (sum, tail) = eigen_sum(arg, order_step, phase, spec.series_terms);
            let weight = prefactor * expo.exp() * w;
            line += weight * sum;
            line_tail += weight * tail;
        }
        line *= h_q;
        line_tail *= h_q;
        let ds = if first { 0.5 } else { 1.0 } * q.log_time_step;
        value += ds * line;
        series_tail += ds * line_tail;
        first = false;

        peak_line = peak_line.max(line.abs());
        let decreasing = line.abs() <= last_line;
        last_line = line.abs();
        // Before t ≈ r₀² the lines are still growing out of the truncation noise.
        if t > r0 * r0
            && decreasing
            && line.abs() / decay < 0.01 * q.tol
            && line.abs() < 1e-3 * peak_line.max(1e-300)
        {
            // Trapezoid end correction for the last line.
            value -= 0.5 * q.log_time_step * line;
            break;
        }
        s += q.log_time_step;
        if s - s_start > MAX_LOG_SPAN {
            return Err(Error::Nonconvergent {
                tail: line.abs() / decay,
                tol: q.tol,
            });
        }
    }
    let long_time_tail = last_line / decay;
    let tail = short_time_bound + long_time_tail + series_tail;
    if !(value.is_finite()) {
        return Err(Error::numerical("wedge integral is not finite", None));
    }
    if !(tail <= q.tol) {
        return Err(Error::Nonconvergent { tail, tol: q.tol });
    }
    Ok(WedgeIntegral { value, tail })
}

/// `Σₙ n sin(n·phase) e^{−x} I_{n·order_step}(x)` truncated at `terms`,
/// with a geometric bound on the omitted tail.
fn eigen_sum(x: f64, order_step: f64, phase: f64, terms: usize) -> (f64, f64) {
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    let mut prev = f64::INFINITY;
    for n in 1..=terms {
        let nf = n as f64;
        let a = nf * bessel_i_scaled(nf * order_step, x);
        sum += a * (nf * phase).sin();
        abs_sum += a;
        if a < prev && a <= 1e-17 * abs_sum {
            return (sum, a);
        }
        if n == terms {
            let ratio = a / prev;
            let tail = if ratio < 1.0 {
                a * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            return (sum, tail);
        }
        prev = a;
    }
    (sum, 0.0)
}

/// Upper tail of the standard normal distribution.
fn normal_tail(q: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(q / std::f64::consts::SQRT_2)
}
