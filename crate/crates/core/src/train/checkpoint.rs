//! Binary checkpoint format.
//!
//! Little-endian throughout:
//!
//! ```text
//! "WSDL"  u32 version (= 1)
//! u32 spec_len, spec bytes (UTF-8 canonical model spec), [u8; 32] SHA-256 of spec
//! u64 d, u64 step
//! u8 schedule kind (0 = wsd, 1 = cosine), u64 T_w, u64 T_c, u64 T_end, f64 peak lr
//! f64 beta1, f64 beta2, f64 eps, f64 weight decay, u64 optimizer step count
//! u32 rng algorithm, u64 rng seed, u64 rng stream, u128 rng word position
//! u64 loss-log byte offset
//! f32 x d params, f32 x d first moment, f32 x d second moment
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! Decoding checks magic, version, length, spec digest and checksum in that
//! order, each failure with its own [`CheckpointError`] kind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CheckpointError, Error, Result};
use crate::math::{ParamVector, RngState};
use crate::models::ModelSpec;
use crate::optim::{AdamWConfig, AdamWState, ScheduleKind, ScheduleSpec};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"WSDL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Canonical model spec text; its SHA-256 is stored beside it.
    pub model_spec: String,
    pub step: u64,
    pub params: ParamVector,
    pub adam: AdamWState,
    pub schedule: ScheduleSpec,
    /// Data-order stream state at `step`.
    pub rng: RngState,
    /// Bytes of the loss log written before the row for `step`.
    pub loss_log_offset: u64,
}

impl Checkpoint {
    pub fn digest(&self) -> [u8; 32] {
        spec_digest(&self.model_spec)
    }

    /// Errors unless this checkpoint was written for `spec`.
    pub fn check_model(&self, spec: &ModelSpec) -> std::result::Result<(), CheckpointError> {
        if self.digest() != spec.digest() {
            return Err(CheckpointError::DigestMismatch);
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let d = self.params.len();
        let mut out = Vec::with_capacity(256 + self.model_spec.len() + 12 * d);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.model_spec.len() as u32).to_le_bytes());
        out.extend_from_slice(self.model_spec.as_bytes());
        out.extend_from_slice(&self.digest());
        out.extend_from_slice(&(d as u64).to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        let s = &self.schedule;
        out.push(match s.kind {
            ScheduleKind::Wsd => 0,
            ScheduleKind::WarmupCosine => 1,
        });
        for v in [s.warmup, s.decay_start, s.total] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&s.peak_lr.to_le_bytes());
        let h = &self.adam.config;
        for v in [h.beta1, h.beta2, h.eps, h.weight_decay] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.adam.t.to_le_bytes());
        out.extend_from_slice(&self.rng.algorithm.to_le_bytes());
        out.extend_from_slice(&self.rng.seed.to_le_bytes());
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&self.loss_log_offset.to_le_bytes());
        for arr in [self.params.as_slice(), &self.adam.m, &self.adam.v] {
            for x in arr {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.array()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic { found: magic });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let spec_len = r.u32()? as usize;
        let model_spec = String::from_utf8(r.take(spec_len)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("model spec is not UTF-8".into()))?;
        let digest: [u8; 32] = r.array()?;
        let d = r.u64()? as usize;
        let step = r.u64()?;
        let kind = match r.array::<1>()?[0] {
            0 => ScheduleKind::Wsd,
            1 => ScheduleKind::WarmupCosine,
            k => return Err(CheckpointError::Malformed(format!("schedule kind {k}"))),
        };
        let schedule = ScheduleSpec {
            kind,
            warmup: r.u64()?,
            decay_start: r.u64()?,
            total: r.u64()?,
            peak_lr: r.f64()?,
        };
        let config = AdamWConfig {
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
            weight_decay: r.f64()?,
        };
        let adam_t = r.u64()?;
        let rng = RngState {
            algorithm: r.u32()?,
            seed: r.u64()?,
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.array()?),
        };
        let loss_log_offset = r.u64()?;
        if digest != spec_digest(&model_spec) {
            return Err(CheckpointError::DigestMismatch);
        }
        let params = r.f32s(d)?;
        let m = r.f32s(d)?;
        let v = r.f32s(d)?;
        let body_end = r.pos;
        let stored = r.u32()?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(CheckpointError::CrcMismatch { stored, computed });
        }
        Ok(Checkpoint {
            model_spec,
            step,
            params: ParamVector::new(params),
            adam: AdamWState {
                m,
                v,
                t: adam_t,
                config,
            },
            schedule,
            rng,
            loss_log_offset,
        })
    }
}

fn spec_digest(spec: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(spec.as_bytes()));
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            }),
        }
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], CheckpointError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> std::result::Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f32>, CheckpointError> {
        let len = n.checked_mul(4).ok_or_else(|| {
            CheckpointError::Malformed(format!("parameter count {n} overflows"))
        })?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

/// Writes atomically: the file appears under its final name only when complete.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("bin.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&checkpoint.encode())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::DataMissing(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?;
    Checkpoint::decode(&bytes).map_err(|source| Error::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

pub fn checkpoint_file_name(step: u64) -> String {
    format!("ckpt_{step:08}.bin")
}

/// Checkpoints in `dir` as `(step, path)`, sorted by step.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(step) = name
            .strip_prefix("ckpt_")
            .and_then(|s| s.strip_suffix(".bin"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            out.push((step, path));
        }
    }
    out.sort_by_key(|(s, _)| *s);
    Ok(out)
}
