//! Binary training checkpoints.
//!
//! The container captures the complete trainer: networks, optimizer moments,
//! temperature, replay buffer contents, history, and the RNG stream, so a
//! resumed run continues bit-exactly where the original would have gone.
//! A config digest is stored alongside; loading under a different config is
//! refused unless forced.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use super::trainer::Trainer;

const MAGIC: [u8; 4] = *b"IMPH";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} is not a checkpoint (bad magic)")]
    BadMagic { path: String },
    #[error("unsupported checkpoint version {got} (expected {expect})")]
    Version { got: u32, expect: u32 },
    #[error("checkpoint was written under config {stored}, current config is {current}; pass force to override")]
    ConfigMismatch { stored: String, current: String },
    #[error("checkpoint payload corrupt: {0}")]
    Corrupt(String),
}

#[derive(Serialize, Deserialize)]
struct Container {
    config_hash: String,
    trainer: Trainer,
}

pub fn save(trainer: &Trainer, path: &Path) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let container = Container {
        config_hash: trainer.cfg.hash(),
        trainer: trainer.clone(),
    };
    let payload =
        bincode::serialize(&container).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&MAGIC).map_err(io_err)?;
    file.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    file.write_all(&payload).map_err(io_err)?;
    Ok(())
}

/// Loads a checkpoint, verifying magic, version, and the config digest
/// against `expected_hash` (skipped when `force`).
pub fn load(path: &Path, expected_hash: &str, force: bool) -> Result<Trainer, CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::open(path).map_err(io_err)?;
    let mut header = [0u8; 8];
    file.read_exact(&mut header).map_err(io_err)?;
    if header[..4] != MAGIC {
        return Err(CheckpointError::BadMagic {
            path: path.display().to_string(),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::Version {
            got: version,
            expect: VERSION,
        });
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(io_err)?;
    let container: Container =
        bincode::deserialize(&payload).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if !force && container.config_hash != expected_hash {
        return Err(CheckpointError::ConfigMismatch {
            stored: container.config_hash,
            current: expected_hash.to_string(),
        });
    }
    Ok(container.trainer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AblationCase, Profile, RunConfig};
    use crate::envs::TaskKind;

    fn tiny_cfg(seed: u64) -> RunConfig {
        let mut cfg = RunConfig::new(TaskKind::Lift, Profile::Desk, AblationCase::Full, seed);
        cfg.train.hidden = vec![16, 16];
        cfg.train.batch_size = 16;
        cfg.train.explore_atomic_per_epoch = 60;
        cfg.train.grad_steps_per_epoch = 2;
        cfg.train.eval_episodes = 2;
        cfg.train.warmup_epochs = 1;
        cfg.train.epochs = 4;
        cfg
    }

    #[test]
    fn resume_is_bit_exact_for_one_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");

        let mut reference = Trainer::new(tiny_cfg(11));
        reference.run_epoch();
        save(&reference, &path).unwrap();
        reference.run_epoch();

        let mut resumed = load(&path, &tiny_cfg(11).hash(), false).unwrap();
        resumed.run_epoch();

        assert_eq!(reference.metrics_csv(), resumed.metrics_csv());
        assert_eq!(
            reference.agent.policy.net.flat_params(),
            resumed.agent.policy.net.flat_params()
        );
        assert_eq!(
            reference.agent.q1.flat_params(),
            resumed.agent.q1.flat_params()
        );
    }

    #[test]
    fn config_mismatch_is_refused_unless_forced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let trainer = Trainer::new(tiny_cfg(1));
        save(&trainer, &path).unwrap();

        let other = tiny_cfg(2);
        let err = load(&path, &other.hash(), false).unwrap_err();
        assert!(matches!(err, CheckpointError::ConfigMismatch { .. }));
        assert!(load(&path, &other.hash(), true).is_ok());
    }

    #[test]
    fn junk_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        let err = load(&path, "", false).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic { .. }));
    }
}
