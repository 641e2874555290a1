//! Trainer section, appended after the model parameters:
//!
//! ```text
//! epoch                 u64 LE
//! history length H      u64 LE
//! H × loss              f64 LE
//! config length C       u64 LE
//! C bytes of JSON config
//! ```

use std::fs;
use std::path::Path;

use super::TrainConfig;
use crate::encoder::{put_f64, put_u64, read_model, write_model, ByteReader, CheckpointError, Model};

/// Parameters plus the run that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub epoch: usize,
    pub history: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_model(&self.model, &mut out);
        put_u64(&mut out, self.epoch as u64);
        put_u64(&mut out, self.history.len() as u64);
        for &l in &self.history {
            put_f64(&mut out, l);
        }
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        put_u64(&mut out, json.len() as u64);
        out.extend_from_slice(&json);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = ByteReader::new(bytes);
        let (header, model) = read_model(&mut r)?;
        let epoch = r.usize()?;
        let len = r.usize()?;
        if len > r.remaining() / 8 {
            return Err(CheckpointError::Truncated {
                needed: len.saturating_mul(8),
                offset: bytes.len() - r.remaining(),
                available: r.remaining(),
            });
        }
        let history = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let clen = r.usize()?;
        let config: TrainConfig = serde_json::from_slice(r.take(clen)?)?;
        r.finish()?;
        if config.layers != header.layers || config.hidden != header.hidden {
            return Err(CheckpointError::Layout(format!(
                "config declares {}×{}, parameters are {}×{}",
                config.layers, config.hidden, header.layers, header.hidden
            )));
        }
        Ok(Self {
            model,
            config,
            epoch,
            history,
        })
    }

    /// Writes through a sibling temporary file, so a failed save never leaves
    /// a partial checkpoint at `path`.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
