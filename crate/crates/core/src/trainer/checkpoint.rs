//! Checkpoint container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "DQCK" | u16 version (1) | 32-byte config hash | u8 head (0 cdl, 1 dqc)
//! u64 feature_dim | u64 num_labels | u64 depth | u64 epoch | u64 adam step
//! u32 group count, then per group:
//!     u16 name length | name bytes | u64 length | params f64[] | adam m f64[] | adam v f64[]
//! 32-byte SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::mlcore::AdamState;
use crate::model::{Head, HeadKind};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DQCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Hex SHA-256 from [`TrainConfig::hash`](super::TrainConfig::hash).
    pub config_hash: String,
    /// Epoch whose end state this is (0 = initialization).
    pub epoch: usize,
    pub head: Head,
    pub optimizer: AdamState,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Format {
            what: "checkpoint",
            reason: "truncated".into(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format {
            what: "checkpoint",
            reason: "length overflows usize".into(),
        })
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or(Error::Format {
            what: "checkpoint",
            reason: "length overflow".into(),
        })?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        let hash = hex::decode(&self.config_hash).unwrap_or_default();
        let mut fixed = [0u8; 32];
        fixed[..hash.len().min(32)].copy_from_slice(&hash[..hash.len().min(32)]);
        out.extend(fixed);
        out.push(match self.head.kind() {
            HeadKind::Cdl => 0,
            HeadKind::Dqc => 1,
        });
        for v in [
            self.head.feature_dim(),
            self.head.num_labels(),
            self.head.depth(),
            self.epoch,
            self.optimizer.step() as usize,
        ] {
            out.extend((v as u64).to_le_bytes());
        }
        let names = self.head.group_names();
        out.extend((names.len() as u32).to_le_bytes());
        let groups = self.head.param_groups();
        for (i, name) in names.iter().enumerate() {
            out.extend((name.len() as u16).to_le_bytes());
            out.extend(name.as_bytes());
            out.extend((groups[i].len() as u64).to_le_bytes());
            for series in [groups[i], &self.optimizer.first_moment()[i], &self.optimizer.second_moment()[i]] {
                for x in series {
                    out.extend(x.to_le_bytes());
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend(digest);
        out
    }

    /// Parses a checkpoint, refusing it unless it was written under
    /// `expected_hash`.
    pub fn from_bytes(bytes: &[u8], expected_hash: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            what: "checkpoint",
            reason: reason.into(),
        };
        if bytes.len() < 32 {
            return Err(bad("truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let config_hash = hex::encode(r.take(32)?);
        if config_hash != expected_hash {
            return Err(Error::ConfigHashMismatch {
                expected: expected_hash.to_string(),
                found: config_hash,
            });
        }
        let kind = match r.u8()? {
            0 => HeadKind::Cdl,
            1 => HeadKind::Dqc,
            k => return Err(bad(&format!("unknown head code {k}"))),
        };
        let (feature_dim, num_labels, depth, epoch) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let (mut names, mut params, mut first, mut second) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            names.push(r.take(name_len)?);
            let len = r.usize()?;
            params.push(r.f64s(len)?);
            first.push(r.f64s(len)?);
            second.push(r.f64s(len)?);
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        let head = Head::from_groups(kind, feature_dim, num_labels, depth, params)?;
        if !names.iter().copied().eq(head.group_names().iter().map(|n| n.as_bytes())) {
            return Err(bad("parameter group names do not match the head"));
        }
        Ok(Checkpoint {
            config_hash,
            epoch,
            head,
            optimizer: AdamState::from_parts(step, first, second)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_hash: &str) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?, expected_hash)
    }
}
