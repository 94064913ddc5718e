//! Versioned binary checkpoint of a trained meta-critic.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "MCRITIC\0"
//! version    u32      currently 1
//! state_dim  u32
//! action_dim u32
//! sets       u32      always 2: "taen" then "mvn"
//! per set:   name, u32 parameter count, then per parameter:
//!            name, u32 rank, rank x u32 dims, prod(dims) x f64
//! checksum   u64      FNV-1a of every preceding byte
//! ```
//!
//! Names are a u32 byte length followed by UTF-8.

use std::path::Path;

use metacritic_core::autodiff::{ParamSet, Tensor};
use metacritic_core::metacritic::MetaCritic;
use metacritic_core::nets::{MetaValueNet, TaskEncoder};

use crate::error::{HarnessError, Result};

pub const MAGIC: [u8; 8] = *b"MCRITIC\0";
pub const VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
}

fn put_set(out: &mut Vec<u8>, name: &str, set: &ParamSet) {
    put_name(out, name);
    put_u32(out, set.len());
    for p in set.iter() {
        put_name(out, &p.name);
        put_u32(out, p.value.shape().len());
        for &d in p.value.shape() {
            put_u32(out, d);
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode(mc: &MetaCritic) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, mc.state_dim());
    put_u32(&mut out, mc.action_dim());
    put_u32(&mut out, 2);
    put_set(&mut out, "taen", &mc.taen.params);
    put_set(&mut out, "mvn", &mc.mvn.params);
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| HarnessError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| HarnessError::Checkpoint("name is not UTF-8".into()))
    }

    fn set(&mut self, expected: &str) -> Result<ParamSet> {
        let name = self.name()?;
        if name != expected {
            return Err(HarnessError::Checkpoint(format!("expected parameter set {expected}, found {name}")));
        }
        let mut set = ParamSet::new();
        for _ in 0..self.u32()? {
            let pname = self.name()?;
            let rank = self.u32()?;
            if rank > 2 {
                return Err(HarnessError::Checkpoint(format!("{pname}: rank {rank} unsupported")));
            }
            let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let data = self
                .take(len.checked_mul(8).ok_or_else(|| HarnessError::Checkpoint("size overflow".into()))?)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            set.insert(pname, Tensor::new(&shape, data)?)?;
        }
        Ok(set)
    }
}

pub fn decode(bytes: &[u8]) -> Result<MetaCritic> {
    if bytes.len() < MAGIC.len() + 12 || bytes[..8] != MAGIC {
        return Err(HarnessError::Checkpoint("not a meta-critic checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(HarnessError::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(HarnessError::Checkpoint(format!("unsupported version {version}")));
    }
    let state_dim = r.u32()?;
    let action_dim = r.u32()?;
    if r.u32()? != 2 {
        return Err(HarnessError::Checkpoint("expected two parameter sets".into()));
    }
    let taen = TaskEncoder::from_params(r.set("taen")?)?;
    let mvn = MetaValueNet::from_params(r.set("mvn")?, state_dim, action_dim)?;
    if r.pos != body.len() {
        return Err(HarnessError::Checkpoint("trailing bytes".into()));
    }
    if taen.input_width() != state_dim + action_dim + 1 {
        return Err(HarnessError::Checkpoint("encoder width does not match the value network".into()));
    }
    Ok(MetaCritic { taen, mvn })
}

pub fn save(path: &Path, mc: &MetaCritic) -> Result<()> {
    std::fs::write(path, encode(mc)).map_err(|e| HarnessError::io(path, e))
}

pub fn load(path: &Path) -> Result<MetaCritic> {
    decode(&std::fs::read(path).map_err(|e| HarnessError::io(path, e))?)
}
