use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;

use super::{is_cancelled, Cancelled, IndexEntry, IndexKind, RangeIndex, Seen};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geo::{BoundingBox, TimeRange};
use crate::geohash::{code_from_bits, CellRange, GeoHashCode};

/// Entries whose footprint spans more cells than this are kept in a side
/// list scanned by every query instead of being fanned out.
const MAX_CELLS_PER_ENTRY: u64 = 4096;

/// A query picks the finest precision whose cover needs at most this many
/// prefix range scans.
const SCAN_BUDGET: u64 = 16;

/// Sorted map from fixed-precision geohash cell to entry positions.
///
/// Keys are the packed code bits (see [`GeoHashCode`]), so a code prefix
/// maps to one contiguous key range and coarse covers become range scans.
///
/// Structure section: `precision u8 | oversize list | key_count u32 |
/// key_count x (key u64, positions list)`, lists being `len u32` followed by
/// `u32` positions.
#[derive(Debug)]
pub struct GeoHashIndex {
    entries: Vec<IndexEntry>,
    precision: usize,
    cells: BTreeMap<u64, Vec<u32>>,
    oversize: Vec<u32>,
}

impl GeoHashIndex {
    pub(crate) fn build(entries: Vec<IndexEntry>, precision: usize) -> Self {
        let mut cells: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
        let mut oversize = Vec::new();
        for (pos, e) in entries.iter().enumerate() {
            let range = CellRange::closed(&e.bbox, precision);
            if range.count() > MAX_CELLS_PER_ENTRY {
                oversize.push(pos as u32);
                continue;
            }
            for key in range.keys() {
                cells.entry(key).or_default().push(pos as u32);
            }
        }
        Self {
            entries,
            precision,
            cells,
            oversize,
        }
    }

    pub(crate) fn decode(entries: Vec<IndexEntry>, r: &mut Reader<'_>) -> Result<Self> {
        let precision = r.u8()? as usize;
        if !(1..=crate::geohash::MAX_PRECISION).contains(&precision) {
            return Err(Error::format("geohash index", format!("precision {precision}")));
        }
        let oversize = r.u32_list()?;
        let n = r.u32()?;
        let mut cells = BTreeMap::new();
        for _ in 0..n {
            let key = r.u64()?;
            cells.insert(key, r.u32_list()?);
        }
        let idx = Self {
            entries,
            precision,
            cells,
            oversize,
        };
        let n = idx.entries.len() as u32;
        if idx.cells.values().flatten().chain(&idx.oversize).any(|p| *p >= n) {
            return Err(Error::format("geohash index", "entry position out of range"));
        }
        Ok(idx)
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Cell codes with their entry positions, in code order.
    pub fn cells(&self) -> impl Iterator<Item = (GeoHashCode, &[u32])> + '_ {
        self.cells.iter().map(|(k, v)| {
            let code = GeoHashCode::parse(&code_from_bits(*k, self.precision)).expect("valid code");
            (code, v.as_slice())
        })
    }
}

impl RangeIndex for GeoHashIndex {
    fn kind(&self) -> IndexKind {
        IndexKind::GeoHash
    }

    fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    fn search(&self, b: &BoundingBox, t: &TimeRange, cancel: &AtomicBool) -> Result<Vec<u32>, Cancelled> {
        let mut out = Vec::new();
        if self.entries.is_empty() {
            return Ok(out);
        }
        let mut seen = Seen::new(self.entries.len());
        for &pos in &self.oversize {
            seen.insert(pos);
            if self.entries[pos as usize].matches(b, t) {
                out.push(pos);
            }
        }

        let mut level = self.precision;
        let mut cover = CellRange::minimal(b, level);
        while level > 1 && cover.count() > SCAN_BUDGET {
            level -= 1;
            cover = CellRange::minimal(b, level);
        }
        let shift = 5 * (self.precision - level) as u32;
        for prefix in cover.keys() {
            let lo = prefix << shift;
            let hi = lo | ((1u64 << shift) - 1);
            for list in self.cells.range(lo..=hi).map(|(_, v)| v) {
                if is_cancelled(cancel) {
                    return Err(Cancelled);
                }
                for &pos in list {
                    if seen.insert(pos) && self.entries[pos as usize].matches(b, t) {
                        out.push(pos);
                    }
                }
            }
        }
        Ok(out)
    }

    fn encode_structure(&self, w: &mut Writer) {
        w.u8(self.precision as u8);
        w.u32_list(&self.oversize);
        w.u32(self.cells.len() as u32);
        for (k, v) in &self.cells {
            w.u64(*k);
            w.u32_list(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{intersects, TileId};
    use crate::geohash::geohash_decode;

    #[test]
    fn entry_lives_in_every_intersecting_cell() {
        let bbox = BoundingBox::new(116.01, 116.13, 39.02, 39.09).unwrap();
        let e = IndexEntry::new(TileId::from("a"), bbox, TimeRange::instant(0));
        let idx = GeoHashIndex::build(vec![e], 5);
        let cells: Vec<_> = idx.cells().collect();
        assert!(!cells.is_empty());
        for (code, _) in &cells {
            assert!(intersects(&geohash_decode(code), &bbox), "{code}");
        }
        // every neighbour of a covered cell that also intersects must be present
        let covered: std::collections::BTreeSet<_> = cells.iter().map(|(c, _)| c.clone()).collect();
        let expect = crate::geohash::CellRange::closed(&bbox, 5).count() as usize;
        assert_eq!(covered.len(), expect);
    }

    #[test]
    fn huge_entry_goes_to_oversize_list() {
        let e = IndexEntry::new(TileId::from("big"), BoundingBox::WORLD, TimeRange::instant(0));
        let idx = GeoHashIndex::build(vec![e], 5);
        assert_eq!(idx.cell_count(), 0);
        let q = BoundingBox::new(1.0, 1.1, 1.0, 1.1).unwrap();
        assert_eq!(idx.range_query(&q, &TimeRange::ALL).len(), 1);
    }
}
