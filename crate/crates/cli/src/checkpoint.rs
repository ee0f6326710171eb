//! Self-describing JSON checkpoints and content hashes.

use std::path::Path;

use graphdeepar_core::model::GraphDeepAr;
use graphdeepar_core::trainer::EpochRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;

pub const FORMAT: &str = "graphdeepar-checkpoint";
pub const VERSION: u32 = 1;

/// Hex SHA-256 of a value's JSON encoding.
pub fn sha256_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("in-memory values serialise");
    hex(&Sha256::digest(&bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model_name: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub schema_hash: String,
    pub data_hash: String,
    pub model: GraphDeepAr,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_minutes: f64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).map_err(|e| CliError::Config(e.to_string()))?;
        io::write_bytes(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        let probe: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))?;
        if probe.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
            return Err(CliError::parse(path, "not a checkpoint file"));
        }
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(VERSION) => {}
            other => return Err(CliError::parse(path, format!("unsupported checkpoint version {other:?}"))),
        }
        serde_json::from_value(probe).map_err(|e| CliError::parse(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphdeepar_core::model::ModelConfig;

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let mut cfg = ModelConfig::with_graph(3, 2, 1);
        cfg.decoder.hidden_sizes = vec![4];
        let model = GraphDeepAr::init(cfg, 2.5, 11).unwrap();
        let ck = Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            model_name: "graphdeepar".into(),
            config: RunConfig::default(),
            config_hash: "c".into(),
            schema_hash: "s".into(),
            data_hash: "d".into(),
            model,
            history: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.1 + 0.2,
                val_loss: None,
            }],
            best_epoch: 1,
            stopped_early: false,
            train_minutes: 0.5,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.model, ck.model);
        assert_eq!(back.history, ck.history);
        std::fs::write(&path, "{\"format\":\"other\"}").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(CliError::Parse { .. })));
    }

    #[test]
    fn hashes_are_stable_hex() {
        let h = sha256_json(&[1, 2, 3]);
        assert_eq!(h.len(), 64);
        assert_eq!(h, sha256_json(&vec![1, 2, 3]));
        assert_ne!(h, sha256_json(&[1, 2, 4]));
    }
}
