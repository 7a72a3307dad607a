use std::io::Write;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Inputs;

pub const MANIFEST: &str = "manifest.toml";

/// Output tables held in memory until the run has succeeded.
#[derive(Default)]
pub struct Outputs(Vec<(String, Vec<u8>)>);

impl Outputs {
    pub fn table(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> lob_core::Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf).with_context(|| format!("cannot render {name}"))?;
        self.0.push((name.to_string(), buf));
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: String) {
        self.0.push((name.to_string(), body.into_bytes()));
    }
}

#[derive(Serialize)]
struct Digest256 {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    seed: Option<u64>,
    strict: bool,
    duration_seconds: f64,
    config: &'a C,
    inputs: Vec<Digest256>,
    outputs: Vec<Digest256>,
}

pub struct RunInfo<'a, C: Serialize> {
    pub subcommand: &'a str,
    pub seed: Option<u64>,
    pub strict: bool,
    pub config: &'a C,
    pub inputs: Inputs,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn digests(items: &[(String, Vec<u8>)]) -> Vec<Digest256> {
    items
        .iter()
        .map(|(name, bytes)| Digest256 {
            name: name.clone(),
            sha256: sha256_hex(bytes),
        })
        .collect()
}

/// Writes every output and then the manifest, each through a temporary
/// file renamed into place.
pub fn commit<C: Serialize>(
    dir: &Path,
    outputs: Outputs,
    info: RunInfo<'_, C>,
    elapsed: Duration,
) -> Result<()> {
    let manifest = Manifest {
        subcommand: info.subcommand,
        version: env!("CARGO_PKG_VERSION"),
        seed: info.seed,
        strict: info.strict,
        duration_seconds: elapsed.as_secs_f64(),
        config: info.config,
        inputs: digests(&info.inputs.0),
        outputs: digests(&outputs.0),
    };
    let manifest = toml::to_string(&manifest).context("cannot render manifest")?;

    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for (name, bytes) in outputs
        .0
        .iter()
        .chain([(MANIFEST.to_string(), manifest.into_bytes())].iter())
    {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .with_context(|| format!("cannot write into {}", dir.display()))?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        let dest = dir.join(name);
        tmp.persist(&dest)
            .with_context(|| format!("cannot move output into {}", dest.display()))?;
    }
    Ok(())
}
