use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::curve::CoefficientProfile;
use crate::error::{Error, Result};
use crate::sim::path_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct EulerConfig {
    pub coeffs: CoefficientProfile,
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub horizon: f64,
    pub paths: u64,
    pub seed: u64,
}

impl EulerConfig {
    /// Config with the default horizon `20 (x + y)² / min σ²`.
    pub fn new(
        coeffs: CoefficientProfile,
        (x, y): (f64, f64),
        h: f64,
        paths: u64,
        seed: u64,
    ) -> Result<Self> {
        let horizon = default_horizon(&coeffs, x, y);
        let cfg = Self {
            coeffs,
            x,
            y,
            h,
            horizon,
            paths,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.x > 0.0 && self.y > 0.0) {
            return Err(Error::domain("initial queue sizes must be positive"));
        }
        if !(self.h > 0.0) || !(self.horizon >= self.h) {
            return Err(Error::domain(format!(
                "need 0 < h <= horizon (got h = {}, horizon = {})",
                self.h, self.horizon
            )));
        }
        if self.paths == 0 {
            return Err(Error::domain("paths must be at least 1"));
        }
        Ok(())
    }
}

pub fn default_horizon(coeffs: &CoefficientProfile, x: f64, y: f64) -> f64 {
    let min_var = coeffs
        .knots()
        .map(|(_, c)| c.sigma_bid.min(c.sigma_ask))
        .fold(f64::INFINITY, f64::min)
        .powi(2);
    20.0 * (x + y) * (x + y) / min_var
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerReport {
    pub p_up: f64,
    pub stderr: f64,
    pub censor_fraction: f64,
    pub up: u64,
    pub down: u64,
    /// Both queues crossed in the same step; counted half to each side.
    pub ties: u64,
    pub censored: u64,
}

/// Euler-Maruyama first passage of the limiting diffusion, with the
/// coefficients re-evaluated at the current imbalance every step.
pub fn euler_first_passage(cfg: &EulerConfig) -> Result<EulerReport> {
    cfg.validate()?;
    let steps = (cfg.horizon / cfg.h).ceil() as u64;
    let sq = cfg.h.sqrt();
    let values = cfg.coeffs.curve().knot_values();
    let fixed = values
        .iter()
        .all(|v| *v == values[0])
        .then(|| cfg.coeffs.eval(0.5));
    let counts = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i);
            let (mut b, mut a) = (cfg.x, cfg.y);
            let mut c = [0u64; 4];
            for _ in 0..steps {
                let k = fixed.unwrap_or_else(|| cfg.coeffs.eval(b / (b + a)));
                let e1: f64 = rng.sample(StandardNormal);
                let e2: f64 = rng.sample(StandardNormal);
                b += k.sigma_bid * sq * e1;
                a += k.sigma_ask * sq * (k.rho * e1 + (1.0 - k.rho * k.rho).max(0.0).sqrt() * e2);
                match (a <= 0.0, b <= 0.0) {
                    (true, false) => c[0] = 1,
                    (false, true) => c[1] = 1,
                    (true, true) => c[2] = 1,
                    (false, false) => continue,
                }
                return c;
            }
            c[3] = 1;
            c
        })
        .reduce(|| [0u64; 4], |p, q| std::array::from_fn(|k| p[k] + q[k]));
    let [up, down, ties, censored] = counts;
    let done = up + down + ties;
    if done == 0 {
        return Err(Error::Inconclusive {
            censored,
            stalled: 0,
        });
    }
    let p = (up as f64 + 0.5 * ties as f64) / done as f64;
    Ok(EulerReport {
        p_up: p,
        stderr: (p * (1.0 - p) / done as f64).sqrt(),
        censor_fraction: censored as f64 / cfg.paths as f64,
        up,
        down,
        ties,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pup_closed_form_corr;

    fn run(rho: f64, x: f64, y: f64, paths: u64, seed: u64) -> EulerReport {
        let c = CoefficientProfile::constant(1.0, 1.0, rho).unwrap();
        let h = 1e-4 * (x + y) * (x + y);
        euler_first_passage(&EulerConfig::new(c, (x, y), h, paths, seed).unwrap()).unwrap()
    }

    #[test]
    fn symmetric_start() {
        let r = run(0.0, 1.0, 1.0, 8_000, 1);
        assert!((r.p_up - 0.5).abs() < 3.0 * r.stderr, "{r:?}");
    }

    #[test]
    fn perfectly_anticorrelated_is_linear() {
        let r = run(-1.0, 1.0, 3.0, 8_000, 2);
        assert!((r.p_up - 0.25).abs() < 3.0 * r.stderr, "{r:?}");
    }

    #[test]
    fn agrees_with_the_arctan_form() {
        for (rho, seed) in [(-0.9, 3), (-0.5, 4), (0.0, 5)] {
            let r = run(rho, 1.0, 3.0, 8_000, seed);
            let exact = pup_closed_form_corr(1.0, 3.0, rho).unwrap();
            assert!(
                (r.p_up - exact).abs() < (3.0 * r.stderr).max(0.01),
                "rho {rho}: {r:?} vs {exact}"
            );
            assert!(r.censor_fraction < 0.01);
        }
    }

    #[test]
    fn halving_the_step_moves_little() {
        let c = CoefficientProfile::constant(1.0, 1.0, -0.5).unwrap();
        let coarse =
            euler_first_passage(&EulerConfig::new(c.clone(), (1.0, 2.0), 2e-3, 8_000, 6).unwrap())
                .unwrap();
        let fine =
            euler_first_passage(&EulerConfig::new(c, (1.0, 2.0), 1e-3, 8_000, 6).unwrap()).unwrap();
        let se = coarse.stderr.hypot(fine.stderr);
        assert!(
            (coarse.p_up - fine.p_up).abs() < 3.0 * se,
            "{coarse:?} {fine:?}"
        );
    }

    #[test]
    fn short_horizon_is_inconclusive() {
        let c = CoefficientProfile::constant(1.0, 1.0, 0.0).unwrap();
        let mut cfg = EulerConfig::new(c, (50.0, 50.0), 0.01, 10, 1).unwrap();
        cfg.horizon = 0.02;
        assert!(matches!(
            euler_first_passage(&cfg),
            Err(Error::Inconclusive { censored: 10, .. })
        ));
        cfg.h = 0.0;
        assert!(euler_first_passage(&cfg).is_err());
    }
}
