//! `VZRIR1` binary container for [`RirSet`].
//!
//! Layout: the 6-byte magic, then little-endian `u32` M, L, K and sample
//! rate, then `f64` responses in `[m][l][k]` order, then the virtual-source
//! block in `[m][k]` order.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::RirSet;
use crate::{Error, Result};

pub const RIR_MAGIC: &[u8; 6] = b"VZRIR1";

pub fn write_rir_set<W: Write>(mut w: W, rirs: &RirSet) -> Result<()> {
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::InvalidContainer(format!("dimension {v} exceeds u32")))
    };
    w.write_all(RIR_MAGIC)?;
    w.write_u32::<LittleEndian>(to_u32(rirs.points())?)?;
    w.write_u32::<LittleEndian>(to_u32(rirs.sources())?)?;
    w.write_u32::<LittleEndian>(to_u32(rirs.taps())?)?;
    w.write_u32::<LittleEndian>(rirs.sample_rate())?;
    let (h, hv) = rirs.raw();
    for &v in h.iter().chain(hv) {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rir_set<R: Read>(mut r: R) -> Result<RirSet> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|e| Error::InvalidContainer(format!("truncated header: {e}")))?;
    if &magic != RIR_MAGIC {
        return Err(Error::InvalidContainer(format!("bad magic {magic:?}")));
    }
    let mut header = [0u32; 4];
    r.read_u32_into::<LittleEndian>(&mut header)
        .map_err(|e| Error::InvalidContainer(format!("truncated header: {e}")))?;
    let [m, l, k, fs] = header.map(|v| v as usize);
    let main = m
        .checked_mul(l)
        .and_then(|v| v.checked_mul(k))
        .ok_or_else(|| Error::InvalidContainer("dimensions overflow".into()))?;
    let mut h = vec![0.0; main];
    let mut hv = vec![0.0; m * k];
    r.read_f64_into::<LittleEndian>(&mut h)
        .and_then(|_| r.read_f64_into::<LittleEndian>(&mut hv))
        .map_err(|e| Error::InvalidContainer(format!("truncated payload: {e}")))?;
    RirSet::from_parts(m, l, k, fs as u32, h, hv)
}
