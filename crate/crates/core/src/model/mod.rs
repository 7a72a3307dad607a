//! Imbalance-dependent diffusion model of the best bid and ask queues.

mod closed_form;
mod pup;

pub use closed_form::{
    pup_closed_form_corr, pup_drifted_bm, wedge_integral, DriftedBmSpec, WedgeGeometry,
    WedgeIntegral, WedgeQuadrature, DEFAULT_SERIES_TERMS,
};
pub use pup::{
    pde_residual, pup_general, pup_hidden, PupCurve, QuadratureControls, DEFAULT_GRID_POINTS,
};

use crate::curve::{CoefficientProfile, Coefficients, IntensityProfile};
use crate::error::{Error, Result};

/// Smallest admissible ν(z); below this the reduced ODE is singular.
pub const NU_FLOOR: f64 = 1e-12;

/// Bid share of the best-quote volume, `x / (x + y)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Imbalance(f64);

impl Imbalance {
    pub fn new(z: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&z) {
            Ok(Self(z))
        } else {
            Err(Error::domain(format!("imbalance {z} outside [0, 1]")))
        }
    }

    /// From bid and ask sizes. An empty book maps to 1/2.
    pub fn from_sizes(bid: f64, ask: f64) -> Result<Self> {
        if !(bid >= 0.0 && ask >= 0.0) {
            return Err(Error::domain(format!(
                "queue sizes must be nonnegative (got {bid}, {ask})"
            )));
        }
        let total = bid + ask;
        if total == 0.0 {
            return Ok(Self(0.5));
        }
        Ok(Self(bid / total))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn imbalance(bid: f64, ask: f64) -> Result<Imbalance> {
    Imbalance::from_sizes(bid, ask)
}

/// Outcome of [`validate_driftless`].
#[derive(Debug, Clone, PartialEq)]
pub struct DriftlessReport {
    pub tol: f64,
    /// Imbalance levels where either queue has a drift beyond `tol`.
    pub violations: Vec<DriftViolation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftViolation {
    pub z: f64,
    /// λ¹ − λ² − (λ⁶ − λ⁵): net drift of the bid queue.
    pub bid_gap: f64,
    /// λ⁶ − λ⁵ − (λ⁴ − λ³): net drift of the ask queue.
    pub ask_gap: f64,
}

impl DriftlessReport {
    pub fn is_driftless(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks λ¹ − λ² = λ⁶ − λ⁵ = λ⁴ − λ³ at every knot and knot midpoint.
pub fn validate_driftless(profile: &IntensityProfile, tol: f64) -> DriftlessReport {
    let violations = profile
        .curve()
        .check_points()
        .into_iter()
        .filter_map(|z| {
            let l = profile.eval(z);
            let bid_gap = (l[0] - l[1]) - (l[5] - l[4]);
            let ask_gap = (l[5] - l[4]) - (l[3] - l[2]);
            (bid_gap.abs() > tol || ask_gap.abs() > tol).then_some(DriftViolation {
                z,
                bid_gap,
                ask_gap,
            })
        })
        .collect();
    DriftlessReport { tol, violations }
}

/// Diffusion coefficients of the scaling limit at each knot of `profile`:
/// σᵇ² = λ¹+λ²+λ⁵+λ⁶, σᵃ² = λ³+λ⁴+λ⁵+λ⁶, ρ = −(λ⁵+λ⁶)/(σᵇσᵃ).
pub fn coefficients_from_intensities(profile: &IntensityProfile) -> Result<CoefficientProfile> {
    let knots = profile
        .curve()
        .knots()
        .map(|(z, l)| coefficients_at(z, &l).map(|c| (z, c)))
        .collect::<Result<Vec<_>>>()?;
    CoefficientProfile::new(knots)
}

pub(crate) fn coefficients_at(z: f64, l: &[f64; 6]) -> Result<Coefficients> {
    let var_bid = l[0] + l[1] + l[4] + l[5];
    let var_ask = l[2] + l[3] + l[4] + l[5];
    if var_bid <= 0.0 {
        return Err(Error::DegenerateProfile { z, side: "bid" });
    }
    if var_ask <= 0.0 {
        return Err(Error::DegenerateProfile { z, side: "ask" });
    }
    let sigma_bid = var_bid.sqrt();
    let sigma_ask = var_ask.sqrt();
    // λ⁵+λ⁶ never exceeds either variance, so |ρ| ≤ 1 up to rounding.
    let rho = (-(l[4] + l[5]) / (sigma_bid * sigma_ask)).max(-1.0);
    Ok(Coefficients {
        sigma_bid,
        sigma_ask,
        rho,
    })
}

/// Drift and diffusion terms of the ODE `ν u'' + μ u' = 0` satisfied by the
/// up-move probability as a function of imbalance.
pub fn mu_nu(coeffs: &CoefficientProfile, z: Imbalance) -> Result<(f64, f64)> {
    let z = z.value();
    let (mu, nu) = mu_nu_raw(&coeffs.eval(z), z);
    if !(nu >= NU_FLOOR) {
        return Err(Error::SingularCoefficient { z, nu });
    }
    Ok((mu, nu))
}

pub(crate) fn mu_nu_raw(c: &Coefficients, z: f64) -> (f64, f64) {
    let sb2 = c.sigma_bid * c.sigma_bid;
    let sa2 = c.sigma_ask * c.sigma_ask;
    let cross = c.rho * c.sigma_bid * c.sigma_ask;
    let w = 1.0 - z;
    let mu = -2.0 * w * sb2 + 2.0 * (2.0 * z - 1.0) * cross + 2.0 * z * sa2;
    let nu = w * w * sb2 - 2.0 * z * w * cross + z * z * sa2;
    (mu, nu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn imbalance_examples() {
        assert_eq!(imbalance(10.0, 30.0).unwrap().value(), 0.25);
        assert_eq!(imbalance(0.0, 0.0).unwrap().value(), 0.5);
        assert!(close(imbalance(9.0, 33.0).unwrap().value(), 0.214286, 1e-6));
        assert_eq!(imbalance(9.0, 33.0).unwrap().value(), 9.0 / 42.0);
        assert!(matches!(imbalance(-1.0, 3.0), Err(Error::Domain(_))));
        assert!(Imbalance::new(1.2).is_err());
    }

    #[test]
    fn driftless_examples() {
        let ones = IntensityProfile::constant([1.0; 6]).unwrap();
        assert!(validate_driftless(&ones, 1e-12).is_driftless());

        let shifted = IntensityProfile::constant([2.0, 1.0, 1.0, 2.0, 0.5, 1.5]).unwrap();
        assert!(validate_driftless(&shifted, 1e-12).is_driftless());

        let drifting = IntensityProfile::new(vec![
            (0.0, [2.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
            (0.5, [2.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
            (1.0, [2.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
        ])
        .unwrap();
        let report = validate_driftless(&drifting, 1e-9);
        assert!(!report.is_driftless());
        let zs: Vec<f64> = report.violations.iter().map(|v| v.z).collect();
        assert_eq!(zs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(report
            .violations
            .iter()
            .all(|v| v.bid_gap == 1.0 && v.ask_gap == 0.0));
    }

    #[test]
    fn coefficient_examples() {
        let c =
            coefficients_from_intensities(&IntensityProfile::constant([1.0; 6]).unwrap()).unwrap();
        let k = c.eval(0.3);
        assert_eq!((k.sigma_bid, k.sigma_ask, k.rho), (2.0, 2.0, -0.5));

        let swap = coefficients_from_intensities(
            &IntensityProfile::constant([0.0, 0.0, 0.0, 0.0, 2.0, 2.0]).unwrap(),
        )
        .unwrap()
        .eval(0.5);
        assert_eq!((swap.sigma_bid, swap.sigma_ask, swap.rho), (2.0, 2.0, -1.0));

        let uncoupled = coefficients_from_intensities(
            &IntensityProfile::constant([1.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap(),
        )
        .unwrap()
        .eval(0.1);
        assert_eq!(uncoupled.rho, 0.0);
        assert!(close(uncoupled.sigma_bid, 2f64.sqrt(), 1e-15));
        assert!(close(uncoupled.sigma_ask, 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn zero_side_intensity_is_degenerate() {
        let p = IntensityProfile::constant([1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            coefficients_from_intensities(&p),
            Err(Error::DegenerateProfile { side: "ask", .. })
        ));
    }

    #[test]
    fn mu_nu_examples() {
        let s = 1.7;
        let neg = CoefficientProfile::constant(s, s, -1.0).unwrap();
        for z in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let (mu, nu) = mu_nu(&neg, Imbalance::new(z).unwrap()).unwrap();
            assert!(close(mu, 0.0, 1e-12), "mu {mu} at {z}");
            assert!(close(nu, s * s, 1e-12), "nu {nu} at {z}");
        }
        let zero = CoefficientProfile::constant(s, s, 0.0).unwrap();
        let (mu, nu) = mu_nu(&zero, Imbalance::new(0.0).unwrap()).unwrap();
        assert!(close(mu, -2.0 * s * s, 1e-12) && close(nu, s * s, 1e-12));
        let (mu, nu) = mu_nu(&zero, Imbalance::new(0.5).unwrap()).unwrap();
        assert!(close(mu, 0.0, 1e-12) && close(nu, s * s / 2.0, 1e-12));
    }

    #[test]
    fn perfectly_positive_correlation_is_singular_at_the_matched_point() {
        let c = CoefficientProfile::constant(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            mu_nu(&c, Imbalance::new(0.5).unwrap()),
            Err(Error::SingularCoefficient { .. })
        ));
    }
}
