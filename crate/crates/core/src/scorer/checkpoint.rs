//! Binary checkpoint container.
//!
//! Layout: magic `RLCK`, `u32` format version, `u64` header length, a UTF-8
//! JSON header, then every tensor listed in the header as little-endian
//! `f64` values in header order. The encoding is canonical, so identical
//! parameters give identical bytes.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::train::{EpochStats, TrainConfig};
use super::{ArchMode, ScorerError, ScorerParams};
use crate::encoding::EncoderFingerprint;
use crate::flsim::FlEmbeddingTable;
use crate::util::fnv1a64;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ScorerParams,
    pub fingerprint: EncoderFingerprint,
    pub dev_loss: f64,
    pub epoch: usize,
    pub train_config: TrainConfig,
    pub history: Vec<EpochStats>,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    arch: ArchMode,
    dim: usize,
    fingerprint: EncoderFingerprint,
    dev_loss: f64,
    epoch: usize,
    train_config: TrainConfig,
    history: Vec<EpochStats>,
    tensors: Vec<TensorInfo>,
}

fn malformed(path: &str, message: impl Into<String>) -> ScorerError {
    ScorerError::Checkpoint {
        path: path.to_string(),
        message: message.into(),
    }
}

impl Checkpoint {
    pub fn arch(&self) -> ArchMode {
        self.params.arch
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.params.tensors();
        let header = Header {
            version: CHECKPOINT_VERSION,
            arch: self.params.arch,
            dim: self.params.dim,
            fingerprint: self.fingerprint.clone(),
            dev_loss: self.dev_loss,
            epoch: self.epoch,
            train_config: self.train_config.clone(),
            history: self.history.clone(),
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorInfo {
                    name: name.to_string(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let n_values: usize = tensors.iter().map(|t| t.2.len()).sum();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * n_values);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &tensors {
            for v in *data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Stable identifier: FNV-1a of the serialized bytes, hex encoded.
    pub fn id(&self) -> String {
        format!("{:016x}", fnv1a64(&self.to_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ScorerError> {
        fs::write(path, self.to_bytes()).map_err(|source| ScorerError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        let bytes = fs::read(path).map_err(|source| ScorerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, ScorerError> {
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(malformed(origin, "not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(malformed(origin, format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16usize.saturating_add(header_len))
            .ok_or_else(|| malformed(origin, "truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| malformed(origin, format!("bad header: {e}")))?;

        let mut cursor = 16 + header_len;
        let mut take = |info: &TensorInfo| -> Result<Vec<f64>, ScorerError> {
            let n: usize = info.shape.iter().product();
            let end = cursor + 8 * n;
            let raw = bytes
                .get(cursor..end)
                .ok_or_else(|| malformed(origin, format!("truncated tensor {}", info.name)))?;
            cursor = end;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };

        let mut attention = None;
        let mut fl_table = None;
        let mut w1 = None;
        let mut b1 = None;
        let mut w2 = None;
        let mut b2 = None;
        let mut w3 = None;
        let mut b3 = None;
        for info in &header.tensors {
            let data = take(info)?;
            let shape_err = || malformed(origin, format!("bad shape for {}", info.name));
            let matrix = |data: Vec<f64>| -> Result<Array2<f64>, ScorerError> {
                match info.shape[..] {
                    [r, c] => Array2::from_shape_vec((r, c), data).map_err(|_| shape_err()),
                    _ => Err(shape_err()),
                }
            };
            let vector = |data: Vec<f64>| -> Result<Array1<f64>, ScorerError> {
                if info.shape.len() == 1 {
                    Ok(Array1::from(data))
                } else {
                    Err(shape_err())
                }
            };
            match info.name.as_str() {
                "attention" => attention = Some(vector(data)?),
                "fl_table" => fl_table = Some(FlEmbeddingTable { table: matrix(data)? }),
                "w1" => w1 = Some(matrix(data)?),
                "b1" => b1 = Some(vector(data)?),
                "w2" => w2 = Some(matrix(data)?),
                "b2" => b2 = Some(vector(data)?),
                "w3" => w3 = Some(vector(data)?),
                "b3" => b3 = Some(vector(data)?),
                other => return Err(malformed(origin, format!("unknown tensor {other}"))),
            }
        }
        if cursor != bytes.len() {
            return Err(malformed(origin, "trailing bytes after tensors"));
        }
        let missing = |name: &str| malformed(origin, format!("missing tensor {name}"));
        let params = ScorerParams {
            arch: header.arch,
            dim: header.dim,
            attention,
            fl_table,
            w1: w1.ok_or_else(|| missing("w1"))?,
            b1: b1.ok_or_else(|| missing("b1"))?,
            w2: w2.ok_or_else(|| missing("w2"))?,
            b2: b2.ok_or_else(|| missing("b2"))?,
            w3: w3.ok_or_else(|| missing("w3"))?,
            b3: b3.ok_or_else(|| missing("b3"))?,
        };
        params
            .validate()
            .map_err(|e| malformed(origin, e.to_string()))?;
        if !params.is_finite() {
            return Err(malformed(origin, "non-finite parameter values"));
        }
        Ok(Self {
            params,
            fingerprint: header.fingerprint,
            dev_loss: header.dev_loss,
            epoch: header.epoch,
            train_config: header.train_config,
            history: header.history,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Backend;
    use crate::flsim::FlConfig;
    use crate::scorer::Mode;
    use crate::util::seeded_rng;

    fn sample(arch: ArchMode) -> Checkpoint {
        Checkpoint {
            params: ScorerParams::init(arch, 16, &FlConfig::default(), [6, 5], &mut seeded_rng(8)),
            fingerprint: EncoderFingerprint {
                backend: Backend::Builtin,
                dim: 16,
                model_id: "builtin-hash-v1:test".into(),
            },
            dev_loss: 0.25,
            epoch: 3,
            train_config: TrainConfig::default(),
            history: vec![EpochStats {
                epoch: 1,
                train_loss: 0.5,
                dev_loss: 0.25,
                dev_f1: Some(0.9),
                dev_threshold: None,
            }],
        }
    }

    #[test]
    fn round_trip_every_mode() {
        let dir = tempfile::tempdir().unwrap();
        for mode in [Mode::Cdcr, Mode::Nli, Mode::Sts] {
            for use_fl in [false, true] {
                let ck = sample(ArchMode::new(mode, use_fl));
                let path = dir.path().join(format!("{mode}-{use_fl}.ck"));
                ck.save(&path).unwrap();
                let back = Checkpoint::load(&path).unwrap();
                assert_eq!(back, ck);
                assert_eq!(back.id(), ck.id());
            }
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample(ArchMode::default()).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], "x").is_err());
        assert!(Checkpoint::from_bytes(b"NOPE0000000000000000", "x").is_err());
        let mut v2 = bytes.clone();
        v2[4] = 9;
        assert!(Checkpoint::from_bytes(&v2, "x").is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, "x").is_err());
    }
}
