//! Run manifests: the resolved configuration, the seeds derived from it and
//! SHA-256 hashes of every input and output artifact.
//!
//! A manifest is itself a valid `--config` file for the command that wrote
//! it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Manifests are named `<command>.manifest.toml` so commands sharing an
/// output directory keep separate records.
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: toml::Table,
    /// Derived seeds by purpose, as decimal strings (TOML integers are
    /// signed 64-bit).
    pub seeds: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Result<Self> {
        let config = toml::Table::try_from(config).map_err(|e| CliError::config(format!("cannot echo configuration: {e}")))?;
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn seed(&mut self, purpose: impl Into<String>, seed: u64) {
        self.seeds.insert(purpose.into(), seed.to_string());
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.{MANIFEST_FILE}", self.command));
        let text = toml::to_string(self).map_err(|e| CliError::config(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Loads a command configuration from a TOML file. A manifest's `config`
/// table is used when the file is a manifest.
pub fn load_config<C: for<'de> Deserialize<'de>>(path: &Path, command: &str) -> Result<C> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if let (Some(toml::Value::String(cmd)), Some(_)) = (table.get("command"), table.get("config")) {
        if cmd != command {
            return Err(CliError::config(format!(
                "{} is a manifest for `{cmd}`, not `{command}`",
                path.display()
            )));
        }
        table = match table.remove("config") {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(CliError::config(format!("{}: config is not a table", path.display()))),
        };
    }
    table
        .try_into()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
