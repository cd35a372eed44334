//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "ADSTCKPT"
//! version    u32
//! hash_bits  u32
//! positions  u32      always 5
//! per position: id u8, updates_seen u64, bias f32
//! per position, in header order: weights [f32; 2^hash_bits], grad_sum [f32; 2^hash_bits]
//! ```

use std::fs;
use std::path::Path;

use super::lr::PositionModel;
use super::PositionModels;
use crate::error::{Error, Result};
use crate::types::Position;

pub const MAGIC: &[u8; 8] = b"ADSTCKPT";
pub const VERSION: u32 = 1;

pub fn to_bytes(models: &PositionModels) -> Vec<u8> {
    let dim = 1usize << models.hash_bits;
    let mut out = Vec::with_capacity(20 + 5 * 13 + 5 * dim * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&models.hash_bits.to_le_bytes());
    out.extend_from_slice(&(models.models.len() as u32).to_le_bytes());
    for m in &models.models {
        out.push(m.position.index() as u8);
        out.extend_from_slice(&m.updates_seen.to_le_bytes());
        out.extend_from_slice(&m.bias.to_le_bytes());
    }
    for m in &models.models {
        for w in &m.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for g in &m.grad_sum {
            out.extend_from_slice(&g.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(bad(
                section,
                format!("needs {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, section)?.try_into().unwrap(),
        ))
    }

    fn floats(&mut self, n: usize, section: &str) -> Result<Vec<f32>> {
        let raw = self.take(n * 4, section)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn bad(section: &str, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        section: section.to_string(),
        message: message.into(),
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<PositionModels> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(bad("magic", "not a model checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(bad("version", format!("unsupported version {version}")));
    }
    let hash_bits = r.u32("hash_bits")?;
    if !(1..=30).contains(&hash_bits) {
        return Err(bad("hash_bits", format!("{hash_bits} out of range")));
    }
    let count = r.u32("positions")?;
    if count != 5 {
        return Err(bad(
            "positions",
            format!("expected 5 positions, found {count}"),
        ));
    }
    let mut headers = Vec::with_capacity(5);
    let mut seen = [false; 5];
    for i in 0..5 {
        let section = format!("position header {i}");
        let id = r.take(1, &section)?[0];
        let pos = Position::from_index(id as usize)
            .ok_or_else(|| bad(&section, format!("unknown position id {id}")))?;
        if std::mem::replace(&mut seen[pos.index()], true) {
            return Err(bad(&section, format!("position {pos} repeated")));
        }
        let updates_seen = u64::from_le_bytes(r.take(8, &section)?.try_into().unwrap());
        let bias = f32::from_le_bytes(r.take(4, &section)?.try_into().unwrap());
        headers.push((pos, updates_seen, bias));
    }
    let dim = 1usize << hash_bits;
    let mut slots: [Option<PositionModel>; 5] = Default::default();
    for (pos, updates_seen, bias) in headers {
        let weights = r.floats(dim, &format!("weights {pos}"))?;
        let grad_sum = r.floats(dim, &format!("grad_sum {pos}"))?;
        slots[pos.index()] = Some(PositionModel {
            position: pos,
            weights,
            grad_sum,
            bias,
            updates_seen,
        });
    }
    if r.pos != bytes.len() {
        return Err(bad(
            "trailer",
            format!("{} unexpected trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok(PositionModels {
        hash_bits,
        models: slots.map(|m| m.expect("all five positions read")),
    })
}

pub fn save(models: &PositionModels, path: &Path) -> Result<()> {
    // write beside the target and rename so a reader never sees half a file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, to_bytes(models)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<PositionModels> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
