//! Piecewise-linear curves of imbalance on `[0, 1]`.
//!
//! Both the six order-flow intensities and the diffusion coefficients are
//! stored as knot tables: evaluation interpolates linearly between knots and
//! holds the end values flat outside the knot range. Knot tables round-trip
//! through header-bearing CSV files.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Knot table with `N` value columns per knot.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotCurve<const N: usize> {
    z: Vec<f64>,
    values: Vec<[f64; N]>,
}

impl<const N: usize> KnotCurve<N> {
    pub fn new(knots: Vec<(f64, [f64; N])>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidProfile(
                "at least one knot is required".into(),
            ));
        }
        let mut z = Vec::with_capacity(knots.len());
        let mut values = Vec::with_capacity(knots.len());
        for (zk, v) in knots {
            if !(0.0..=1.0).contains(&zk) {
                return Err(Error::InvalidProfile(format!(
                    "knot z = {zk} outside [0, 1]"
                )));
            }
            if let Some(&prev) = z.last() {
                if zk <= prev {
                    return Err(Error::InvalidProfile(format!(
                        "knot z values must be strictly increasing ({prev} then {zk})"
                    )));
                }
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidProfile(format!(
                    "non-finite value at z = {zk}"
                )));
            }
            z.push(zk);
            values.push(v);
        }
        Ok(Self { z, values })
    }

    pub fn constant(v: [f64; N]) -> Result<Self> {
        Self::new(vec![(0.0, v), (1.0, v)])
    }

    pub fn knot_z(&self) -> &[f64] {
        &self.z
    }

    pub fn knot_values(&self) -> &[[f64; N]] {
        &self.values
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, [f64; N])> + '_ {
        self.z.iter().copied().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn eval(&self, z: f64) -> [f64; N] {
        let last = self.z.len() - 1;
        if z <= self.z[0] {
            return self.values[0];
        }
        if z >= self.z[last] {
            return self.values[last];
        }
        // first knot strictly greater than z; 1 <= hi <= last here
        let hi = self.z.partition_point(|&k| k <= z);
        let lo = hi - 1;
        if z == self.z[lo] {
            return self.values[lo];
        }
        let t = (z - self.z[lo]) / (self.z[hi] - self.z[lo]);
        let (a, b) = (&self.values[lo], &self.values[hi]);
        std::array::from_fn(|i| a[i] + (b[i] - a[i]) * t)
    }

    /// Knot positions together with the midpoints between consecutive knots.
    pub fn check_points(&self) -> Vec<f64> {
        let mut pts = Vec::with_capacity(2 * self.z.len());
        for (i, &zk) in self.z.iter().enumerate() {
            pts.push(zk);
            if let Some(&next) = self.z.get(i + 1) {
                pts.push(0.5 * (zk + next));
            }
        }
        pts
    }

    pub fn map<const M: usize>(
        &self,
        mut f: impl FnMut(f64, &[f64; N]) -> Result<[f64; M]>,
    ) -> Result<KnotCurve<M>> {
        let knots = self
            .knots()
            .map(|(z, v)| f(z, &v).map(|w| (z, w)))
            .collect::<Result<Vec<_>>>()?;
        KnotCurve::new(knots)
    }

    fn write_csv<W: Write>(&self, out: W, columns: &[&str; N]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["z"];
        header.extend_from_slice(columns);
        w.write_record(&header)?;
        for (z, v) in self.knots() {
            let mut row = vec![fmt_f64(z)];
            row.extend(v.iter().map(|&x| fmt_f64(x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn read_csv<R: Read>(input: R, columns: &[&str; N]) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = r.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Format(format!("knot table is missing column `{name}`")))
        };
        let z_col = find("z")?;
        let cols: Vec<usize> = columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
        let mut knots = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                let field = rec.get(i).unwrap_or("");
                field.parse::<f64>().map_err(|_| {
                    Error::Format(format!(
                        "knot row {}: cannot parse `{field}` as a number",
                        line + 1
                    ))
                })
            };
            let z = parse(z_col)?;
            let mut v = [0.0; N];
            for (slot, &c) in v.iter_mut().zip(&cols) {
                *slot = parse(c)?;
            }
            knots.push((z, v));
        }
        Self::new(knots)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// The six order-flow intensities at one imbalance level.
///
/// Index `j - 1` holds λʲ: bid limit orders, bid market orders and
/// cancellations, ask limit orders, ask market orders and cancellations,
/// ask-cancel/bid-limit swaps, bid-cancel/ask-limit swaps.
pub type Intensities = [f64; 6];

const INTENSITY_COLUMNS: [&str; 6] = [
    "lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "lambda6",
];

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    curve: KnotCurve<6>,
}

impl IntensityProfile {
    pub fn new(knots: Vec<(f64, Intensities)>) -> Result<Self> {
        let curve = KnotCurve::new(knots)?;
        if let Some((z, _)) = curve.knots().find(|(_, v)| v.iter().any(|&l| l < 0.0)) {
            return Err(Error::InvalidProfile(format!(
                "negative intensity at z = {z}"
            )));
        }
        Ok(Self { curve })
    }

    pub fn constant(l: Intensities) -> Result<Self> {
        Self::new(vec![(0.0, l), (1.0, l)])
    }

    pub fn eval(&self, z: f64) -> Intensities {
        self.curve.eval(z)
    }

    pub fn curve(&self) -> &KnotCurve<6> {
        &self.curve
    }

    /// True when every knot carries the same six values.
    pub fn is_constant(&self) -> bool {
        let first = self.curve.knot_values()[0];
        self.curve.knot_values().iter().all(|v| *v == first)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.curve.write_csv(out, &INTENSITY_COLUMNS)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let curve = KnotCurve::read_csv(input, &INTENSITY_COLUMNS)?;
        Self::new(curve.knots().collect())
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Diffusion coefficients at one imbalance level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub sigma_bid: f64,
    pub sigma_ask: f64,
    pub rho: f64,
}

impl Coefficients {
    fn to_array(self) -> [f64; 3] {
        [self.sigma_bid, self.sigma_ask, self.rho]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self {
            sigma_bid: a[0],
            sigma_ask: a[1],
            rho: a[2],
        }
    }
}

const COEFFICIENT_COLUMNS: [&str; 3] = ["sigma_bid", "sigma_ask", "rho"];

/// σᵇ(z), σᵃ(z), ρ(z) as piecewise-linear curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientProfile {
    curve: KnotCurve<3>,
}

impl CoefficientProfile {
    pub fn new(knots: Vec<(f64, Coefficients)>) -> Result<Self> {
        for (z, c) in &knots {
            if !(c.sigma_bid > 0.0 && c.sigma_ask > 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "volatilities must be positive at z = {z} (got {}, {})",
                    c.sigma_bid, c.sigma_ask
                )));
            }
            if !(-1.0..=1.0).contains(&c.rho) {
                return Err(Error::InvalidProfile(format!(
                    "correlation {} outside [-1, 1] at z = {z}",
                    c.rho
                )));
            }
        }
        let curve = KnotCurve::new(knots.into_iter().map(|(z, c)| (z, c.to_array())).collect())?;
        Ok(Self { curve })
    }

    pub fn constant(sigma_bid: f64, sigma_ask: f64, rho: f64) -> Result<Self> {
        let c = Coefficients {
            sigma_bid,
            sigma_ask,
            rho,
        };
        Self::new(vec![(0.0, c), (1.0, c)])
    }

    pub fn eval(&self, z: f64) -> Coefficients {
        Coefficients::from_array(self.curve.eval(z))
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, Coefficients)> + '_ {
        self.curve
            .knots()
            .map(|(z, v)| (z, Coefficients::from_array(v)))
    }

    pub fn curve(&self) -> &KnotCurve<3> {
        &self.curve
    }

    /// Multiplies both volatility curves by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.knots()
                .map(|(z, c)| {
                    (
                        z,
                        Coefficients {
                            sigma_bid: c.sigma_bid * factor,
                            sigma_ask: c.sigma_ask * factor,
                            rho: c.rho,
                        },
                    )
                })
                .collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.curve.write_csv(out, &COEFFICIENT_COLUMNS)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let curve = KnotCurve::read_csv(input, &COEFFICIENT_COLUMNS)?;
        Self::new(
            curve
                .knots()
                .map(|(z, v)| (z, Coefficients::from_array(v)))
                .collect(),
        )
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
