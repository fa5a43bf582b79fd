//! Binary checkpoint format.
//!
//! ```text
//! "CSRT1"
//! u32 fingerprint length, fingerprint bytes (UTF-8)
//! u32 block count
//! per block: u32 name length, name bytes, u32 rank, rank x u64 extents,
//!            product(extents) x f64
//! ```
//!
//! All integers and floats are little-endian. Parameter blocks come first in
//! model order; blocks named `state/...` carry training state.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"CSRT1";
pub const STATE_PREFIX: &str = "state/";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: String,
    pub params: ParamStore,
    /// Training-state blocks, names without the `state/` prefix.
    pub state: ParamStore,
}

impl Checkpoint {
    pub fn new(fingerprint: String, params: ParamStore) -> Self {
        Checkpoint {
            fingerprint,
            params,
            state: ParamStore::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_str(&mut out, &self.fingerprint);
        let count = self.params.len() + self.state.len();
        out.extend_from_slice(&(count as u32).to_le_bytes());
        let blocks = self.params.iter().map(|(n, t)| (n.to_string(), t)).chain(
            self.state
                .iter()
                .map(|(n, t)| (format!("{STATE_PREFIX}{n}"), t)),
        );
        for (name, t) in blocks {
            put_str(&mut out, &name);
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let fingerprint = r.string()?;
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        let mut state = ParamStore::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = (0..numel).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let tensor = Tensor::new(shape, data)
                .map_err(|e| Error::Checkpoint(format!("block `{name}`: {e}")))?;
            match name.strip_prefix(STATE_PREFIX) {
                Some(rest) => state.insert(rest, tensor)?,
                None => params.insert(&name, tensor)?,
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            fingerprint,
            params,
            state,
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and rejects checkpoints written for a different layout.
    pub fn load_verified(path: &Path, expected_fingerprint: &str) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.verify(expected_fingerprint)?;
        Ok(ck)
    }

    pub fn verify(&self, expected_fingerprint: &str) -> Result<()> {
        if self.fingerprint != expected_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: expected_fingerprint.to_string(),
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
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

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("non UTF-8 string".into()))
    }
}
