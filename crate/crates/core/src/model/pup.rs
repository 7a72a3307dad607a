//! Probability that the ask queue depletes first, as a function of imbalance.
//!
//! With `u(z)` the up-move probability, `ν(z) u'' + μ(z) u' = 0` on `[0, 1]`
//! with `u(0) = 0`, `u(1) = 1`, so
//!
//! ```text
//! u(z) = ∫₀ᶻ exp(−Φ(y)) dy / ∫₀¹ exp(−Φ(y)) dy,   Φ(y) = ∫₀ʸ μ/ν dx.
//! ```
//!
//! Both integrals are composite trapezoid sums on one refinement grid; the
//! cumulative inner integral is reused for the outer one.

use std::io::{Read, Write};

use super::{mu_nu_raw, NU_FLOOR};
use crate::curve::{fmt_f64, CoefficientProfile};
use crate::error::{Error, Result};

pub const DEFAULT_PANELS: usize = 4096;
pub const DEFAULT_GRID_POINTS: usize = 101;
pub const MIN_PANELS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureControls {
    /// Target number of trapezoid panels across `[0, 1]`.
    pub panels: usize,
    /// Imbalance levels at which the curve is reported.
    pub grid: Vec<f64>,
}

impl Default for QuadratureControls {
    fn default() -> Self {
        Self::uniform(DEFAULT_GRID_POINTS)
    }
}

impl QuadratureControls {
    pub fn uniform(points: usize) -> Self {
        let points = points.max(2);
        let grid = (0..points)
            .map(|i| i as f64 / (points - 1) as f64)
            .collect();
        Self {
            panels: DEFAULT_PANELS,
            grid,
        }
    }

    pub fn with_grid(grid: Vec<f64>) -> Self {
        Self {
            panels: DEFAULT_PANELS,
            grid,
        }
    }

    pub fn panels(mut self, panels: usize) -> Self {
        self.panels = panels;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.panels < MIN_PANELS {
            return Err(Error::domain(format!(
                "quadrature needs at least {MIN_PANELS} panels (got {})",
                self.panels
            )));
        }
        if self.grid.iter().any(|z| !(0.0..=1.0).contains(z)) {
            return Err(Error::domain("output grid must lie in [0, 1]"));
        }
        if self.grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("output grid must be sorted"));
        }
        Ok(())
    }
}

/// Dense solution on the refinement grid, kept for evaluation off the
/// output grid: node positions, `F(z)` and `F'(z)` for the `H = 0` curve.
#[derive(Debug, Clone, PartialEq)]
struct Dense {
    z: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
}

impl Dense {
    /// Cubic Hermite interpolation using the node values and slopes.
    fn eval(&self, z: f64) -> f64 {
        let n = self.z.len();
        if z <= self.z[0] {
            return self.f[0];
        }
        if z >= self.z[n - 1] {
            return self.f[n - 1];
        }
        let hi = self.z.partition_point(|&k| k <= z);
        let lo = hi - 1;
        let h = self.z[hi] - self.z[lo];
        let t = (z - self.z[lo]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.f[lo] + h10 * h * self.df[lo] + h01 * self.f[hi] + h11 * h * self.df[hi]
    }
}

/// Up-move probability sampled on an imbalance grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PupCurve {
    hidden: f64,
    samples: Vec<(f64, f64)>,
    quad_error: f64,
    dense: Option<Dense>,
}

impl PupCurve {
    /// Hidden-liquidity parameter `H`; the curve runs from `H` to `1 − H`.
    pub fn hidden(&self) -> f64 {
        self.hidden
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Richardson estimate of the quadrature error on the output grid.
    pub fn quad_error(&self) -> f64 {
        self.quad_error
    }

    /// Value at an arbitrary imbalance. Uses the dense quadrature solution
    /// when available, otherwise linear interpolation of the samples.
    pub fn eval(&self, z: f64) -> f64 {
        match &self.dense {
            Some(d) => self.hidden + (1.0 - 2.0 * self.hidden) * d.eval(z),
            None => {
                let s = &self.samples;
                if z <= s[0].0 {
                    return s[0].1;
                }
                if z >= s[s.len() - 1].0 {
                    return s[s.len() - 1].1;
                }
                let hi = s.partition_point(|p| p.0 <= z);
                let (a, b) = (s[hi - 1], s[hi]);
                a.1 + (b.1 - a.1) * (z - a.0) / (b.0 - a.0)
            }
        }
    }

    /// The same curve with hidden liquidity `h`.
    pub fn with_hidden(&self, h: f64) -> Result<Self> {
        check_hidden(h)?;
        let base = self.hidden;
        let samples = self
            .samples
            .iter()
            .map(|&(z, p)| {
                let f = if base == 0.0 {
                    p
                } else {
                    (p - base) / (1.0 - 2.0 * base)
                };
                (z, h + (1.0 - 2.0 * h) * f)
            })
            .collect();
        Ok(Self {
            hidden: h,
            samples,
            quad_error: self.quad_error * (1.0 - 2.0 * h),
            dense: self.dense.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z", "p_up"])?;
        for &(z, p) in &self.samples {
            w.write_record([fmt_f64(z), fmt_f64(p)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `z,p_up` table. `hidden` is taken from the value at the
    /// first sample.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad curve row {rec:?}")))
            };
            samples.push((get(0)?, get(1)?));
        }
        if samples.is_empty() {
            return Err(Error::Format("empty curve".into()));
        }
        Ok(Self {
            hidden: samples[0].1,
            samples,
            quad_error: 0.0,
            dense: None,
        })
    }
}

fn check_hidden(h: f64) -> Result<()> {
    if (0.0..=0.5).contains(&h) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "hidden liquidity {h} outside [0, 1/2]"
        )))
    }
}

/// Up-move probability with `P(0) = 0`, `P(1) = 1`.
pub fn pup_general(coeffs: &CoefficientProfile, quad: &QuadratureControls) -> Result<PupCurve> {
    quad.validate()?;

    let mut breaks: Vec<f64> = [0.0, 1.0]
        .into_iter()
        .chain(quad.grid.iter().copied())
        .chain(coeffs.curve().knot_z().iter().copied())
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    // Even panel count per gap, so the even-indexed nodes form the halved
    // grid used for the Richardson estimate and still hit every breakpoint.
    let mut z = vec![0.0];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 2 * ((((b - a) * quad.panels as f64) / 2.0).ceil() as usize).max(1);
        for k in 1..m {
            z.push(a + (b - a) * k as f64 / m as f64);
        }
        z.push(b);
    }

    let mut ratio = Vec::with_capacity(z.len());
    for &zj in &z {
        let (mu, nu) = mu_nu_raw(&coeffs.eval(zj), zj);
        if !(nu >= NU_FLOOR) {
            return Err(Error::SingularCoefficient { z: zj, nu });
        }
        let g = mu / nu;
        if !g.is_finite() {
            return Err(Error::numerical("non-finite mu/nu", Some(zj)));
        }
        ratio.push(g);
    }

    let fine = solve(&z, &ratio)?;
    let even_z: Vec<f64> = z.iter().step_by(2).copied().collect();
    let even_g: Vec<f64> = ratio.iter().step_by(2).copied().collect();
    let coarse = solve(&even_z, &even_g)?;

    let mut samples = Vec::with_capacity(quad.grid.len());
    let mut quad_error: f64 = 0.0;
    for &zq in &quad.grid {
        let j = z.partition_point(|&k| k < zq);
        debug_assert_eq!(z[j], zq);
        debug_assert_eq!(j % 2, 0);
        let p = fine.f[j];
        quad_error = quad_error.max((p - coarse.f[j / 2]).abs() / 3.0);
        samples.push((zq, p));
    }

    Ok(PupCurve {
        hidden: 0.0,
        samples,
        quad_error,
        dense: Some(fine),
    })
}

/// Nested cumulative trapezoid sums on nodes `z` for the integrand ratio
/// `g = μ/ν`; returns the normalised solution and its derivative.
fn solve(z: &[f64], g: &[f64]) -> Result<Dense> {
    let n = z.len();
    let mut phi = vec![0.0; n];
    for j in 1..n {
        phi[j] = phi[j - 1] + 0.5 * (z[j] - z[j - 1]) * (g[j] + g[j - 1]);
    }
    // Shift so the largest exponent is zero; the normalisation cancels it.
    let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let integrand: Vec<f64> = phi.iter().map(|p| (phi_min - p).exp()).collect();
    let mut cum = vec![0.0; n];
    for j in 1..n {
        cum[j] = cum[j - 1] + 0.5 * (z[j] - z[j - 1]) * (integrand[j] + integrand[j - 1]);
    }
    let total = cum[n - 1];
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::numerical(
            "outer integral is not a positive finite number",
            None,
        ));
    }
    let mut f: Vec<f64> = cum.iter().map(|c| c / total).collect();
    f[n - 1] = 1.0;
    let df = integrand.iter().map(|v| v / total).collect();
    Ok(Dense {
        z: z.to_vec(),
        f,
        df,
    })
}

/// Up-move probability with boundary values `P(0) = H`, `P(1) = 1 − H`.
pub fn pup_hidden(
    coeffs: &CoefficientProfile,
    hidden: f64,
    quad: &QuadratureControls,
) -> Result<PupCurve> {
    check_hidden(hidden)?;
    pup_general(coeffs, quad)?.with_hidden(hidden)
}

/// Finite-difference residual of
/// `σᵇ² u_xx + 2ρσᵇσᵃ u_xy + σᵃ² u_yy` for `u(x, y) = P(x / (x + y))`,
/// with stencil half-width `step`.
pub fn pde_residual(
    coeffs: &CoefficientProfile,
    curve: &PupCurve,
    x: f64,
    y: f64,
    step: f64,
) -> Result<f64> {
    if curve.dense.is_none() {
        return Err(Error::domain(
            "curve has no dense solution; build it with pup_general",
        ));
    }
    if !(step > 0.0) || x - step <= 0.0 || y - step <= 0.0 {
        return Err(Error::domain(format!(
            "stencil of half-width {step} around ({x}, {y}) leaves the open quadrant"
        )));
    }
    let u = |a: f64, b: f64| curve.eval(a / (a + b));
    let h = step;
    let h2 = h * h;
    let centre = u(x, y);
    let u_xx = (u(x + h, y) - 2.0 * centre + u(x - h, y)) / h2;
    let u_yy = (u(x, y + h) - 2.0 * centre + u(x, y - h)) / h2;
    let u_xy = (u(x + h, y + h) - u(x + h, y - h) - u(x - h, y + h) + u(x - h, y - h)) / (4.0 * h2);
    let c = coeffs.eval(x / (x + y));
    Ok(c.sigma_bid * c.sigma_bid * u_xx
        + 2.0 * c.rho * c.sigma_bid * c.sigma_ask * u_xy
        + c.sigma_ask * c.sigma_ask * u_yy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::Coefficients;
    use std::f64::consts::PI;

    /// Closed form for equal volatilities and constant correlation, written
    /// out independently of the library's own implementation.
    fn oracle(z: f64, rho: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        if z == 1.0 {
            return 1.0;
        }
        let k = ((1.0 + rho) / (1.0 - rho)).sqrt();
        0.5 * (1.0 - (k * (1.0 - 2.0 * z)).atan() / k.atan())
    }

    #[test]
    fn negative_one_correlation_gives_identity() {
        let c = CoefficientProfile::constant(1.3, 1.3, -1.0).unwrap();
        let curve = pup_general(&c, &QuadratureControls::default()).unwrap();
        assert_eq!(curve.samples().len(), 101);
        for &(z, p) in curve.samples() {
            assert!((p - z).abs() <= 1e-10, "{z}: {p}");
        }
    }

    #[test]
    fn zero_correlation_quarter_point() {
        let c = CoefficientProfile::constant(2.0, 2.0, 0.0).unwrap();
        let curve = pup_general(&c, &QuadratureControls::with_grid(vec![0.0, 0.25, 1.0])).unwrap();
        let expected = 2.0 / PI * (1.0f64 / 3.0).atan();
        assert!((curve.samples()[1].1 - expected).abs() < 1e-8);
        assert!((expected - 0.204833).abs() < 1e-6);
        assert_eq!(curve.samples()[0].1, 0.0);
        assert_eq!(curve.samples()[2].1, 1.0);
    }

    #[test]
    fn matches_constant_correlation_closed_form() {
        for rho in [-0.99, -0.9, -0.5, -0.2, 0.0] {
            let c = CoefficientProfile::constant(0.8, 0.8, rho).unwrap();
            let curve = pup_general(&c, &QuadratureControls::default()).unwrap();
            for &(z, p) in curve.samples() {
                assert!((p - oracle(z, rho)).abs() < 1e-6, "rho {rho} z {z}");
            }
        }
    }

    #[test]
    fn dense_evaluation_between_grid_points() {
        let c = CoefficientProfile::constant(1.0, 1.0, -0.5).unwrap();
        let curve = pup_general(&c, &QuadratureControls::uniform(11)).unwrap();
        for z in [0.013, 0.377, 0.5, 0.91] {
            assert!((curve.eval(z) - oracle(z, -0.5)).abs() < 1e-8);
        }
    }

    #[test]
    fn hidden_liquidity_examples() {
        let c = CoefficientProfile::constant(1.0, 1.0, -1.0).unwrap();
        let quad = QuadratureControls::with_grid(vec![0.0, 0.25, 1.0]);
        let base = pup_general(&c, &quad).unwrap();
        assert_eq!(
            pup_hidden(&c, 0.0, &quad).unwrap().samples(),
            base.samples()
        );
        let h = pup_hidden(&c, 0.1, &quad).unwrap();
        assert!((h.samples()[1].1 - 0.3).abs() < 1e-12);
        assert_eq!(h.samples()[0].1, 0.1);
        assert_eq!(h.samples()[2].1, 0.9);
        let flat = pup_hidden(&c, 0.5, &quad).unwrap();
        assert!(flat.samples().iter().all(|&(_, p)| p == 0.5));
        assert!(matches!(pup_hidden(&c, 0.6, &quad), Err(Error::Domain(_))));
        assert!(matches!(
            pup_hidden(&c, -0.01, &quad),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rejects_bad_controls_and_singular_profiles() {
        let c = CoefficientProfile::constant(1.0, 1.0, 0.0).unwrap();
        assert!(pup_general(&c, &QuadratureControls::default().panels(32)).is_err());
        assert!(pup_general(&c, &QuadratureControls::with_grid(vec![0.5, 0.2])).is_err());
        let singular = CoefficientProfile::constant(1.0, 1.0, 1.0).unwrap();
        match pup_general(&singular, &QuadratureControls::default()) {
            Err(Error::SingularCoefficient { z, .. }) => assert!((z - 0.5).abs() < 1e-12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn richardson_estimate_is_small_for_smooth_profiles() {
        let c = CoefficientProfile::new(vec![
            (
                0.0,
                Coefficients {
                    sigma_bid: 2.0,
                    sigma_ask: 1.0,
                    rho: -0.1,
                },
            ),
            (
                0.5,
                Coefficients {
                    sigma_bid: 1.0,
                    sigma_ask: 1.0,
                    rho: -0.35,
                },
            ),
            (
                1.0,
                Coefficients {
                    sigma_bid: 1.0,
                    sigma_ask: 2.0,
                    rho: -0.1,
                },
            ),
        ])
        .unwrap();
        let curve = pup_general(&c, &QuadratureControls::default()).unwrap();
        assert!(curve.quad_error() < 1e-8, "{}", curve.quad_error());
    }

    #[test]
    fn pde_residual_of_the_identity_solution_matches_its_stencil() {
        let c = CoefficientProfile::constant(1.0, 1.0, -1.0).unwrap();
        let curve = pup_general(&c, &QuadratureControls::default()).unwrap();
        let exact = |x: f64, y: f64| x / (x + y);
        let h = 0.05;
        for (x, y) in [(1.0, 1.0), (2.0, 1.0), (0.5, 3.0)] {
            let r = pde_residual(&c, &curve, x, y, h).unwrap();
            let d = |a: f64, b: f64| exact(x + a * h, y + b * h);
            let o = (d(1.0, 0.0) - 2.0 * d(0.0, 0.0) + d(-1.0, 0.0)) / (h * h)
                + (d(0.0, 1.0) - 2.0 * d(0.0, 0.0) + d(0.0, -1.0)) / (h * h)
                - 2.0 * (d(1.0, 1.0) - d(1.0, -1.0) - d(-1.0, 1.0) + d(-1.0, -1.0)) / (4.0 * h * h);
            assert!((r - o).abs() < 1e-6, "({x}, {y}): {r} vs {o}");
        }
        assert!(matches!(
            pde_residual(&c, &curve, 0.04, 1.0, 0.05),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pde_residual_tracks_the_closed_form_stencil() {
        // The same stencil applied to (2/π)·atan(x/y) is the oracle.
        let c = CoefficientProfile::constant(1.0, 1.0, 0.0).unwrap();
        let curve = pup_general(&c, &QuadratureControls::default()).unwrap();
        let exact = |x: f64, y: f64| 2.0 / PI * (x / y).atan();
        for h in [0.2, 0.1, 0.05] {
            let (x, y) = (1.0, 1.0);
            let r = pde_residual(&c, &curve, x, y, h).unwrap();
            let o = (exact(x + h, y) - 2.0 * exact(x, y) + exact(x - h, y)) / (h * h)
                + (exact(x, y + h) - 2.0 * exact(x, y) + exact(x, y - h)) / (h * h);
            assert!((r - o).abs() < 1e-6, "h {h}: {r} vs {o}");
            assert!(r.abs() <= 10.0 * h * h, "h {h}: {r}");
        }
    }

    #[test]
    fn pde_residual_converges_at_second_order() {
        let c = CoefficientProfile::constant(1.5, 0.7, -0.3).unwrap();
        let curve = pup_general(&c, &QuadratureControls::default()).unwrap();
        let steps = [0.2, 0.1, 0.05, 0.025];
        let res: Vec<f64> = steps
            .iter()
            .map(|&h| pde_residual(&c, &curve, 2.0, 1.0, h).unwrap().abs())
            .collect();
        for w in res.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "observed order {order} from {res:?}");
        }
    }

    #[test]
    fn csv_round_trip_keeps_samples() {
        let c = CoefficientProfile::constant(1.0, 1.0, -0.4).unwrap();
        let curve = pup_hidden(&c, 0.05, &QuadratureControls::uniform(21)).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let back = PupCurve::read_csv(&buf[..]).unwrap();
        assert_eq!(back.samples(), curve.samples());
        assert_eq!(back.hidden(), 0.05);
    }
}
