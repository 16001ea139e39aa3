//! Versioned parameter checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::AdamState;
use crate::params::{Param, ParamStore};

pub const CHECKPOINT_FORMAT: &str = "amberflag-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint header {format} v{version}")]
    Header { format: String, version: u32 },
}

/// Ordered named tensors plus optional optimizer state. `meta` carries
/// whatever the owner needs to rebuild the model around the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub meta: serde_json::Value,
    pub params: Vec<Param>,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value, store: &ParamStore, optimizer: Option<&AdamState>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            meta,
            params: store.params().to_vec(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn store(&self) -> ParamStore {
        ParamStore::from_params(self.params.clone())
    }

    pub fn to_json(&self) -> Result<String, CheckpointError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.check_header()?;
        Ok(ck)
    }

    fn check_header(&self) -> Result<(), CheckpointError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Header {
                format: self.format.clone(),
                version: self.version,
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let file = File::open(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        ck.check_header()?;
        Ok(ck)
    }
}
