//! Band file codec.
//!
//! ```text
//! magic "MIXR" | version u16 = 1 | rows u32 | cols u32 | rows*cols f32, row-major
//! ```
//!
//! All integers and floats little-endian. No-data pixels are written as the
//! canonical quiet NaN `0x7fc00000` and read back as no-data.

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::raster::BandGrid;

pub const MAGIC: &[u8; 4] = b"MIXR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub fn encode(grid: &BandGrid) -> Vec<u8> {
    let mut w = Writer::with_capacity(HEADER_LEN + grid.values().len() * 4);
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(grid.rows() as u32);
    w.u32(grid.cols() as u32);
    for v in grid.values() {
        w.f32(*v);
    }
    w.into_inner()
}

pub fn decode(label: &str, bytes: &[u8]) -> Result<BandGrid> {
    let mut r = Reader::new(bytes, "band file");
    if r.take(4)? != MAGIC {
        return Err(Error::format("band file", "bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::format("band file", format!("unsupported version {version}")));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let n = rows
        .checked_mul(cols)
        .filter(|n| n.checked_mul(4) == Some(r.remaining()))
        .ok_or_else(|| Error::format("band file", format!("{rows}x{cols} does not match payload")))?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(r.f32()?);
    }
    r.finish()?;
    BandGrid::new(label, rows, cols, values).map_err(|e| Error::format("band file", e.to_string()))
}
