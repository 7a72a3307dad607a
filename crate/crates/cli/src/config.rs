use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use lob_core::curve::{CoefficientProfile, IntensityProfile};
use lob_core::estimate::{coefficients_from_data, BucketTable};
use lob_core::model::coefficients_from_intensities;

/// Reads and parses a TOML config.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, Vec<u8>)> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let text = std::str::from_utf8(&bytes)
        .with_context(|| format!("config {} is not UTF-8", path.display()))?;
    let cfg = toml::from_str(text).with_context(|| format!("bad config {}", path.display()))?;
    Ok((cfg, bytes))
}

/// Where knot files named in a config are looked up.
pub struct Resolver {
    base: PathBuf,
}

impl Resolver {
    pub fn for_config(config: &Path) -> Self {
        let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
        Self { base }
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn read(&self, p: &Path) -> Result<(PathBuf, Vec<u8>)> {
        let full = self.path(p);
        let bytes =
            std::fs::read(&full).with_context(|| format!("cannot read {}", full.display()))?;
        Ok((full, bytes))
    }
}

/// An intensity profile given by a knot file or as six constants.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub intensities: Option<PathBuf>,
    pub constant: Option<[f64; 6]>,
}

impl ProfileSpec {
    pub fn resolve(&self, r: &Resolver, inputs: &mut Inputs) -> Result<IntensityProfile> {
        match (&self.intensities, self.constant) {
            (Some(p), None) => {
                let (full, bytes) = r.read(p)?;
                let profile = IntensityProfile::read_csv(bytes.as_slice())
                    .with_context(|| format!("bad intensity knots in {}", full.display()))?;
                inputs.add(p, &bytes);
                Ok(profile)
            }
            (None, Some(l)) => Ok(IntensityProfile::constant(l)?),
            _ => bail!("[profile] needs exactly one of `intensities` or `constant`"),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantCoefficients {
    pub sigma_bid: f64,
    pub sigma_ask: f64,
    pub rho: f64,
}

/// A coefficient profile from one of four sources.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Knot file with `z, sigma_bid, sigma_ask, rho` columns.
    pub coefficients: Option<PathBuf>,
    /// Intensity knot file, mapped to diffusion coefficients.
    pub intensities: Option<PathBuf>,
    pub constant: Option<ConstantCoefficients>,
    /// Bucket table holding a correlation column, paired with constant
    /// volatilities.
    pub correlation_table: Option<PathBuf>,
    pub correlation_column: Option<String>,
    pub sigma_bid: Option<f64>,
    pub sigma_ask: Option<f64>,
}

impl ModelSpec {
    /// The coefficients, plus the intensity profile when one was given.
    pub fn resolve(
        &self,
        r: &Resolver,
        inputs: &mut Inputs,
    ) -> Result<(CoefficientProfile, Option<IntensityProfile>)> {
        let sources = [
            self.coefficients.is_some(),
            self.intensities.is_some(),
            self.constant.is_some(),
            self.correlation_table.is_some(),
        ];
        if sources.iter().filter(|s| **s).count() != 1 {
            bail!("[model] needs exactly one of `coefficients`, `intensities`, `constant` or `correlation_table`");
        }
        if let Some(p) = &self.coefficients {
            let (full, bytes) = r.read(p)?;
            let c = CoefficientProfile::read_csv(bytes.as_slice())
                .with_context(|| format!("bad coefficient knots in {}", full.display()))?;
            inputs.add(p, &bytes);
            return Ok((c, None));
        }
        if let Some(p) = &self.intensities {
            let (full, bytes) = r.read(p)?;
            let l = IntensityProfile::read_csv(bytes.as_slice())
                .with_context(|| format!("bad intensity knots in {}", full.display()))?;
            inputs.add(p, &bytes);
            return Ok((coefficients_from_intensities(&l)?, Some(l)));
        }
        if let Some(c) = self.constant {
            return Ok((
                CoefficientProfile::constant(c.sigma_bid, c.sigma_ask, c.rho)?,
                None,
            ));
        }
        let p = self.correlation_table.as_ref().expect("one source is set");
        let (Some(col), Some(sb), Some(sa)) =
            (&self.correlation_column, self.sigma_bid, self.sigma_ask)
        else {
            bail!(
                "`correlation_table` also needs `correlation_column`, `sigma_bid` and `sigma_ask`"
            );
        };
        let (full, bytes) = r.read(p)?;
        let table = BucketTable::read_csv(bytes.as_slice())
            .with_context(|| format!("bad table {}", full.display()))?;
        inputs.add(p, &bytes);
        let stats = table.correlation_stats(col, sb, sa)?;
        Ok((coefficients_from_data(&stats, 1.0)?, None))
    }
}

/// Digests of the files a run read.
#[derive(Debug, Default)]
pub struct Inputs(pub Vec<(String, Vec<u8>)>);

impl Inputs {
    pub fn add(&mut self, name: &Path, bytes: &[u8]) {
        self.0.push((name.display().to_string(), bytes.to_vec()));
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    #[default]
    FirstPassage,
    FreeRun,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub profile: ProfileSpec,
    pub run: SimulateRun,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRun {
    pub start: (i64, i64),
    pub horizon: f64,
    pub paths: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ModeName,
    /// Write the per-path terminal table.
    #[serde(default = "yes")]
    pub terminals: bool,
    /// Write the event log of the first path.
    #[serde(default = "yes")]
    pub events: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub input: EstimateInput,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub stats: StatsOptions,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateInput {
    pub quotes: PathBuf,
    pub ticker: Option<String>,
    pub exchange: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start: String,
    pub end: String,
}

impl Default for Window {
    fn default() -> Self {
        Self {
            start: "10:00:00".into(),
            end: "16:00:00".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShareBasisName {
    #[default]
    Records,
    QuotedSize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StatsOptions {
    #[serde(default = "twenty")]
    pub buckets: usize,
    /// Sampling interval used to turn per-pair deviations into volatilities.
    #[serde(default = "one")]
    pub dt: f64,
    #[serde(default = "yes")]
    pub coalesce: bool,
    #[serde(default)]
    pub share_basis: ShareBasisName,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            buckets: 20,
            dt: 1.0,
            coalesce: true,
            share_basis: ShareBasisName::Records,
        }
    }
}

fn twenty() -> usize {
    20
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PupConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub curve: CurveOptions,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CurveOptions {
    #[serde(default)]
    pub hidden: f64,
    #[serde(default = "grid_points")]
    pub grid: usize,
    pub panels: Option<usize>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            hidden: 0.0,
            grid: grid_points(),
            panels: None,
        }
    }
}

fn grid_points() -> usize {
    lob_core::model::DEFAULT_GRID_POINTS
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub input: FitInput,
    pub model: ModelSpec,
    #[serde(default)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitInput {
    pub empirical: PathBuf,
    #[serde(default = "p_up")]
    pub column: String,
}

fn p_up() -> String {
    "p_up".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    #[serde(default = "twenty")]
    pub buckets: usize,
    pub panels: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            buckets: 20,
            panels: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub profile: ProfileSpec,
    pub run: VerifyRun,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRun {
    pub start: (f64, f64),
    pub scales: Vec<u32>,
    pub paths: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "horizon_factor")]
    pub horizon_factor: f64,
}

fn horizon_factor() -> f64 {
    200.0
}
