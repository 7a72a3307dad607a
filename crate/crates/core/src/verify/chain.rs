use std::collections::VecDeque;

use crate::curve::IntensityProfile;
use crate::error::{Error, Result};
use crate::sim::EventKind;

/// Largest acceptable change in the answer when the cap doubles.
pub const CAP_TOL: f64 = 1e-6;

/// Exact up-move probability of the discrete model with constant
/// intensities, from the absorbing-chain equations on `[0, cap]²`.
///
/// Moves that would push a queue above `cap` are suppressed. With no cap
/// given, `8 (x + y)` is used. The cap is accepted only if doubling it
/// changes the answer by at most [`CAP_TOL`].
pub fn chain_oracle(
    profile: &IntensityProfile,
    start: (i64, i64),
    cap: Option<usize>,
) -> Result<f64> {
    let (x, y) = start;
    let cap = cap.unwrap_or(8 * (x + y).max(1) as usize);
    let p = chain_solve(profile, start, cap)?;
    let wide = chain_solve(profile, start, 2 * cap)?;
    let delta = (wide - p).abs();
    if delta > CAP_TOL {
        return Err(Error::CapInsufficient { cap, delta });
    }
    Ok(p)
}

/// One solve at a fixed cap, without the doubling check.
pub fn chain_solve(profile: &IntensityProfile, (x, y): (i64, i64), cap: usize) -> Result<f64> {
    if !profile.is_constant() {
        return Err(Error::domain("the chain oracle needs constant intensities"));
    }
    if x <= 0 || y <= 0 {
        return Err(Error::domain(format!(
            "start ({x}, {y}) must be strictly inside the quadrant"
        )));
    }
    if (x.max(y) as usize) >= cap {
        return Err(Error::domain(format!(
            "cap {cap} must exceed the start ({x}, {y})"
        )));
    }
    let rates = profile.eval(0.5);
    let m = cap;
    let n = m * m;
    let index = |i: usize, j: usize| (i - 1) * m + (j - 1);

    // States reachable from the start; the rest keep identity rows.
    let mut reach = vec![false; n];
    let mut queue = VecDeque::from([(x as usize, y as usize)]);
    reach[index(x as usize, y as usize)] = true;
    while let Some((i, j)) = queue.pop_front() {
        for (k, kind) in EventKind::ALL.iter().enumerate() {
            if let Some((a, b)) = step(i, j, *kind, m, rates[k]) {
                if a > 0 && b > 0 && !reach[index(a, b)] {
                    reach[index(a, b)] = true;
                    queue.push_back((a, b));
                }
            }
        }
    }

    let mut band = Band::new(n, m);
    let mut rhs = vec![0.0; n];
    for i in 1..=m {
        for j in 1..=m {
            let r = index(i, j);
            if !reach[r] {
                band.set(r, r, 1.0);
                continue;
            }
            let mut diag = 0.0;
            for (k, kind) in EventKind::ALL.iter().enumerate() {
                let Some((a, b)) = step(i, j, *kind, m, rates[k]) else {
                    continue;
                };
                diag += rates[k];
                if b == 0 && a > 0 {
                    rhs[r] += rates[k];
                } else if a > 0 && b > 0 {
                    band.add(r, index(a, b), -rates[k]);
                }
            }
            band.set(r, r, diag);
        }
    }
    let u = band.solve(rhs)?;
    Ok(u[index(x as usize, y as usize)])
}

fn step(i: usize, j: usize, kind: EventKind, cap: usize, rate: f64) -> Option<(usize, usize)> {
    if rate <= 0.0 {
        return None;
    }
    let (dx, dy) = kind.delta();
    let a = i as i64 + dx;
    let b = j as i64 + dy;
    if a > cap as i64 || b > cap as i64 {
        return None;
    }
    Some((a as usize, b as usize))
}

/// Square band matrix with equal lower and upper bandwidth.
struct Band {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl Band {
    fn new(n: usize, w: usize) -> Self {
        Self {
            n,
            w,
            data: vec![0.0; n * (2 * w + 1)],
        }
    }

    fn at(&self, r: usize, c: usize) -> usize {
        debug_assert!(r.abs_diff(c) <= self.w);
        r * (2 * self.w + 1) + (c + self.w - r)
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        let k = self.at(r, c);
        self.data[k] = v;
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self.at(r, c);
        self.data[k] += v;
    }

    /// Gaussian elimination without pivoting; the chain matrix is
    /// diagonally dominant.
    #[allow(clippy::needless_range_loop)]
    fn solve(mut self, mut b: Vec<f64>) -> Result<Vec<f64>> {
        let (n, w) = (self.n, self.w);
        for k in 0..n {
            let pivot = self.data[self.at(k, k)];
            if !(pivot.abs() > 1e-300) {
                return Err(Error::numerical(
                    "zero pivot in chain solve",
                    Some(k as f64),
                ));
            }
            for r in k + 1..(k + w + 1).min(n) {
                let f = self.data[self.at(r, k)] / pivot;
                if f == 0.0 {
                    continue;
                }
                for c in k..(k + w + 1).min(n) {
                    let v = self.data[self.at(k, c)];
                    let idx = self.at(r, c);
                    self.data[idx] -= f * v;
                }
                b[r] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..(k + w + 1).min(n) {
                s -= self.data[self.at(k, c)] * b[c];
            }
            b[k] = s / self.data[self.at(k, k)];
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(l: [f64; 6]) -> IntensityProfile {
        IntensityProfile::constant(l).unwrap()
    }

    #[test]
    fn swap_chain_is_linear() {
        let p = chain_oracle(&constant([0.0, 0.0, 0.0, 0.0, 2.0, 2.0]), (2, 3), None).unwrap();
        assert!((p - 0.4).abs() < 1e-12, "{p}");
    }

    #[test]
    fn symmetric_chain_is_even() {
        for k in [1, 3, 6] {
            let p = chain_oracle(&constant([1.0, 1.0, 1.0, 1.0, 0.3, 0.3]), (k, k), None).unwrap();
            assert!((p - 0.5).abs() < 1e-9, "{k}: {p}");
        }
    }

    #[test]
    fn unit_intensities_from_three_five() {
        // Frozen regression value.
        let p = chain_oracle(&constant([1.0; 6]), (3, 5), Some(64)).unwrap();
        assert!((p - 0.363_122_749).abs() < 1e-8, "{p}");
    }

    #[test]
    fn dense_elimination_agrees_on_a_small_grid() {
        let l = [1.0, 0.7, 0.4, 1.1, 0.6, 0.2];
        let cap = 7;
        let banded = chain_solve(&constant(l), (2, 4), cap).unwrap();
        // Gauss-Seidel sweeps on the same equations as an independent route.
        let m = cap;
        let mut u = vec![vec![0.0f64; m + 1]; m + 1];
        for row in u.iter_mut().skip(1) {
            row[0] = 1.0;
        }
        for _ in 0..20_000 {
            for i in 1..=m {
                for j in 1..=m {
                    let (mut num, mut den) = (0.0, 0.0);
                    for (k, kind) in EventKind::ALL.iter().enumerate() {
                        if let Some((a, b)) = step(i, j, *kind, m, l[k]) {
                            num += l[k] * u[a][b];
                            den += l[k];
                        }
                    }
                    u[i][j] = num / den;
                }
            }
        }
        assert!((u[2][4] - banded).abs() < 1e-10, "{} vs {banded}", u[2][4]);
    }

    #[test]
    fn small_cap_is_rejected() {
        let err = chain_oracle(&constant([1.0; 6]), (3, 5), Some(8)).unwrap_err();
        assert!(
            matches!(err, Error::CapInsufficient { cap: 8, .. }),
            "{err}"
        );
        assert!(chain_solve(&constant([1.0; 6]), (3, 5), 5).is_err());
        let knotted = IntensityProfile::new(vec![(0.0, [1.0; 6]), (1.0, [2.0; 6])]).unwrap();
        assert!(chain_solve(&knotted, (1, 1), 10).is_err());
    }
}
