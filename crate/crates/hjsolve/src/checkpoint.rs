//! Bit-exact binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     4 bytes  "HJIN"
//! version   u32      1
//! d         u32      spatial dimension
//! depth     u32      hidden layer count
//! width     u32      hidden width
//! act_tag   u32      0 = softplus, 1 = identity
//! beta      f64
//! n_params  u64
//! params    n_params * f64, order (W_0, b_0, ..., W_{L-1}, b_{L-1}, W, b), row-major
//! epoch     u64
//! loss      f64      final training loss
//! seed      u64
//! id_len    u32
//! id        id_len bytes UTF-8 problem id
//! ```

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{HjError, Result};
use crate::network::{Activation, MlpParams, NetworkConfig};

pub const MAGIC: &[u8; 4] = b"HJIN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub epoch: u64,
    pub final_loss: f64,
    pub seed: u64,
    pub problem_id: String,
}

pub fn save_checkpoint(params: &MlpParams, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let cfg = &params.config;
    let flat = params.flatten();
    let mut buf = Vec::with_capacity(44 + flat.len() * 8 + meta.problem_id.len() + 32);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(cfg.space_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.depth as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.width as u32).to_le_bytes());
    buf.extend_from_slice(&cfg.activation.tag().to_le_bytes());
    buf.extend_from_slice(&cfg.beta.to_le_bytes());
    buf.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in &flat {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&meta.epoch.to_le_bytes());
    buf.extend_from_slice(&meta.final_loss.to_le_bytes());
    buf.extend_from_slice(&meta.seed.to_le_bytes());
    buf.extend_from_slice(&(meta.problem_id.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta.problem_id.as_bytes());
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(HjError::CorruptCheckpoint {
                path: self.path.to_path_buf(),
                reason: format!("truncated at byte {}", self.buf.len()),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, CheckpointMeta)> {
    let corrupt = |reason: String| HjError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut c = Cursor {
        buf: &buf,
        pos: 0,
        path,
    };
    if c.take(4)? != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let d = c.u32()? as usize;
    let depth = c.u32()? as usize;
    let width = c.u32()? as usize;
    let act_tag = c.u32()?;
    let beta = c.f64()?;
    let activation = Activation::from_tag(act_tag)
        .ok_or_else(|| corrupt(format!("unknown activation tag {act_tag}")))?;
    let config = NetworkConfig {
        input_dim: d + 1,
        depth,
        width,
        activation,
        beta,
    };
    config
        .validate()
        .map_err(|e| corrupt(format!("invalid embedded config: {e}")))?;
    let n = c.u64()? as usize;
    if n != config.param_count() {
        return Err(corrupt(format!(
            "parameter count {n} does not match config ({})",
            config.param_count()
        )));
    }
    let mut flat = Vec::with_capacity(n);
    for _ in 0..n {
        flat.push(c.f64()?);
    }
    if !flat.iter().all(|v| v.is_finite()) {
        return Err(corrupt("non-finite parameter".into()));
    }
    let params = MlpParams::from_flat(&config, &flat)
        .map_err(|e| corrupt(format!("parameter layout: {e}")))?;
    let epoch = c.u64()?;
    let final_loss = c.f64()?;
    let seed = c.u64()?;
    let id_len = c.u32()? as usize;
    let id_bytes = c.take(id_len)?;
    let problem_id = std::str::from_utf8(id_bytes)
        .map_err(|_| corrupt("problem id is not UTF-8".into()))?
        .to_string();
    Ok((
        params,
        CheckpointMeta {
            epoch,
            final_loss,
            seed,
            problem_id,
        },
    ))
}

/// Load and require a particular network shape.
pub fn load_checkpoint_expecting(
    path: &Path,
    expected: &NetworkConfig,
) -> Result<(MlpParams, CheckpointMeta)> {
    let (params, meta) = load_checkpoint(path)?;
    if params.config != *expected {
        return Err(HjError::CheckpointMismatch {
            path: PathBuf::from(path),
            reason: format!(
                "checkpoint has config {:?}, expected {:?}",
                params.config, expected
            ),
        });
    }
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_network;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            epoch: 123,
            final_loss: 4.5e-6,
            seed: 99,
            problem_id: "burgers-d1".into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.hjin");
        let cfg = NetworkConfig::new(3, 2, 7, 100.0);
        let p = init_network(&cfg, 1234).unwrap();
        save_checkpoint(&p, &meta(), &path).unwrap();
        let (q, m) = load_checkpoint(&path).unwrap();
        let (fa, fb) = (p.flatten(), q.flatten());
        assert_eq!(fa.len(), fb.len());
        for (a, b) in fa.iter().zip(&fb) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(m, meta());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hjin");
        let cfg = NetworkConfig::new(1, 1, 4, 100.0);
        let p = init_network(&cfg, 0).unwrap();
        save_checkpoint(&p, &meta(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(HjError::CorruptCheckpoint { .. })
        ));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.hjin");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        match load_checkpoint(&path) {
            Err(HjError::CorruptCheckpoint { reason, .. }) => {
                assert!(reason.contains("magic"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.hjin");
        let cfg = NetworkConfig::new(1, 1, 4, 100.0);
        let p = init_network(&cfg, 0).unwrap();
        save_checkpoint(&p, &meta(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(HjError::CorruptCheckpoint { reason, .. }) => {
                assert!(reason.contains("version"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn incompatible_config_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hjin");
        let cfg = NetworkConfig::new(1, 1, 4, 100.0);
        let p = init_network(&cfg, 0).unwrap();
        save_checkpoint(&p, &meta(), &path).unwrap();
        let other = NetworkConfig::new(2, 1, 4, 100.0);
        assert!(matches!(
            load_checkpoint_expecting(&path, &other),
            Err(HjError::CheckpointMismatch { .. })
        ));
    }
}
