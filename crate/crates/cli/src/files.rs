//! Loading and writing the on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use strokeprim::io::{self, chain_from_json, params_from_json, parse_recording, write_recording};
use strokeprim::segment::Recording;
use strokeprim::sim::{EpisodeOutcome, Scenario, SimContext};
use strokeprim::{KinematicChain, Limits, PrimitiveParams};

use crate::cli::RobotArgs;

#[derive(Debug, Clone)]
pub struct RobotSetup {
    pub chain: KinematicChain,
    /// Limits from the chain file; derived from the scenario otherwise.
    pub limits: Option<Limits>,
    pub scenario: Scenario,
}

impl RobotSetup {
    pub fn load(args: &RobotArgs) -> Result<Self> {
        let scenario = match &args.scenario {
            Some(path) => Scenario::from_json(&read(path)?).with_context(|| format!("scenario {}", path.display()))?,
            None => Scenario::default(),
        };
        let (chain, limits) = match &args.chain {
            Some(path) => {
                let file = chain_from_json(&read(path)?).map_err(|e| e.in_file(path))?;
                (file.chain, file.limits)
            }
            None => (KinematicChain::wheelchair_arm(), None),
        };
        Ok(Self { chain, limits, scenario })
    }

    pub fn context(&self, primitive: PrimitiveParams) -> Result<SimContext> {
        let ctx = match &self.limits {
            Some(l) => SimContext::with_limits(primitive, self.chain.clone(), l.clone(), self.scenario.clone()),
            None => SimContext::new(primitive, self.chain.clone(), self.scenario.clone()),
        };
        Ok(ctx?)
    }
}

pub fn read(path: &Path) -> Result<String> {
    Ok(io::read_text(path)?)
}

pub fn load_params(path: &Path) -> Result<PrimitiveParams> {
    Ok(params_from_json(&read(path)?).map_err(|e| e.in_file(path))?)
}

pub fn load_recording(path: &Path) -> Result<Recording> {
    Ok(parse_recording(&read(path)?).map_err(|e| e.in_file(path))?)
}

/// `.csv` files of `dir`, sorted by name.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Writes atomically, creating parent directories.
pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(io::write_atomic(path, contents.as_bytes())?)
}

pub fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Writes `<id>.csv` (executed arm joints with velocities) and the
/// `<id>.json` outcome sidecar.
pub fn write_episode(dir: &Path, id: &str, outcome: &EpisodeOutcome) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        bail!("`{id}` is not a usable episode id");
    }
    write(&dir.join(format!("{id}.csv")), &write_recording(&outcome.executed, true))?;
    write(&dir.join(format!("{id}.json")), &pretty_json(&outcome.sidecar()))
}
