//! The three spatial range indexes behind one contract.
//!
//! Every index is built once from a list of [`IndexEntry`] values and is
//! immutable afterwards. A query returns exactly the entries whose box
//! intersects the query box and whose time range overlaps the query range,
//! so all three kinds are interchangeable.
//!
//! Blob layout shared by all kinds (little-endian):
//!
//! ```text
//! magic "MXIX" | version u16 = 1 | kind u8 | reserved u8 | payload_len u64 | payload
//! payload = entry table | kind-specific structure
//! entry table = count u32, then per entry:
//!     id_len u16, id bytes, min_lon f64, max_lon f64, min_lat f64, max_lat f64,
//!     start i64, end i64
//! ```
//!
//! The kind-specific sections are described on each index type.

mod geohash_index;
mod ortho;
mod quadtree;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use geohash_index::GeoHashIndex;
pub use ortho::{grid_cell_of, OrthoGridIndex};
pub use quadtree::{quadtree_path, Quadrant, QuadTreeIndex};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geo::{intersects, overlaps_time, BoundingBox, TileId, TimeRange};

pub const BLOB_MAGIC: &[u8; 4] = b"MXIX";
pub const BLOB_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    GeoHash,
    QuadTree,
    OrthoList,
}

impl IndexKind {
    pub const ALL: [IndexKind; 3] = [IndexKind::GeoHash, IndexKind::QuadTree, IndexKind::OrthoList];

    /// Tie-break rank when two kinds finish together; lower wins.
    pub fn priority(self) -> u8 {
        match self {
            IndexKind::QuadTree => 0,
            IndexKind::OrthoList => 1,
            IndexKind::GeoHash => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IndexKind::GeoHash => "geohash",
            IndexKind::QuadTree => "quadtree",
            IndexKind::OrthoList => "ortholist",
        }
    }

    fn tag(self) -> u8 {
        match self {
            IndexKind::GeoHash => 1,
            IndexKind::QuadTree => 2,
            IndexKind::OrthoList => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(IndexKind::GeoHash),
            2 => Ok(IndexKind::QuadTree),
            3 => Ok(IndexKind::OrthoList),
            t => Err(Error::format("index blob", format!("unknown kind tag {t}"))),
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IndexKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geohash" => Ok(IndexKind::GeoHash),
            "quadtree" => Ok(IndexKind::QuadTree),
            "ortholist" | "ortho" | "orthogonal" => Ok(IndexKind::OrthoList),
            other => Err(Error::InvalidArgument(format!("unknown index kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: TileId,
    pub bbox: BoundingBox,
    pub time: TimeRange,
}

impl IndexEntry {
    pub fn new(id: TileId, bbox: BoundingBox, time: TimeRange) -> Self {
        Self { id, bbox, time }
    }

    #[inline]
    pub(crate) fn matches(&self, b: &BoundingBox, t: &TimeRange) -> bool {
        intersects(&self.bbox, b) && overlaps_time(&self.time, t)
    }
}

/// Build-time knobs. Defaults follow the documented desk-scale layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub geohash_precision: usize,
    pub quadtree_leaf_capacity: usize,
    pub quadtree_max_depth: usize,
    pub grid_cell_deg: f64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            geohash_precision: 5,
            quadtree_leaf_capacity: 8,
            quadtree_max_depth: 12,
            grid_cell_deg: 1.0,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::geohash::MAX_PRECISION).contains(&self.geohash_precision) {
            return Err(Error::InvalidArgument(format!(
                "geohash precision {} outside 1..=12",
                self.geohash_precision
            )));
        }
        if self.quadtree_leaf_capacity == 0 {
            return Err(Error::InvalidArgument("quadtree leaf capacity must be positive".into()));
        }
        if self.quadtree_max_depth > 32 {
            return Err(Error::InvalidArgument("quadtree max depth above 32".into()));
        }
        if !(self.grid_cell_deg.is_finite() && self.grid_cell_deg > 0.0 && self.grid_cell_deg <= 180.0) {
            return Err(Error::InvalidArgument(format!(
                "grid cell size {} outside (0, 180]",
                self.grid_cell_deg
            )));
        }
        Ok(())
    }
}

/// Returned by a search that observed its cancellation flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cancelled;

pub trait RangeIndex: Send + Sync + fmt::Debug {
    fn kind(&self) -> IndexKind;

    fn entries(&self) -> &[IndexEntry];

    /// Positions (into [`RangeIndex::entries`]) of every matching entry,
    /// each reported once. Polls `cancel` between node/cell visits.
    fn search(&self, b: &BoundingBox, t: &TimeRange, cancel: &AtomicBool) -> Result<Vec<u32>, Cancelled>;

    /// Kind-specific section of the blob.
    fn encode_structure(&self, w: &mut Writer);

    fn range_query(&self, b: &BoundingBox, t: &TimeRange) -> BTreeSet<TileId> {
        let never = AtomicBool::new(false);
        let hits = self.search(b, t, &never).expect("search without cancellation");
        self.ids(&hits)
    }

    fn ids(&self, positions: &[u32]) -> BTreeSet<TileId> {
        let entries = self.entries();
        positions.iter().map(|p| entries[*p as usize].id.clone()).collect()
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Writer::new();
        encode_entries(&mut payload, self.entries());
        self.encode_structure(&mut payload);
        let payload = payload.into_inner();
        let mut w = Writer::new();
        w.bytes(BLOB_MAGIC);
        w.u16(BLOB_VERSION);
        w.u8(self.kind().tag());
        w.u8(0);
        w.u64(payload.len() as u64);
        w.bytes(&payload);
        w.into_inner()
    }
}

#[inline]
pub(crate) fn is_cancelled(cancel: &AtomicBool) -> bool {
    cancel.load(Ordering::Relaxed)
}

/// Per-query visited set for indexes that store an entry in several cells.
pub(crate) struct Seen(Vec<u64>);

impl Seen {
    pub fn new(n: usize) -> Self {
        Seen(vec![0; n.div_ceil(64)])
    }

    /// Marks `pos`; returns true the first time only.
    #[inline]
    pub fn insert(&mut self, pos: u32) -> bool {
        let (w, b) = ((pos / 64) as usize, pos % 64);
        let fresh = self.0[w] & (1 << b) == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

fn encode_entries(w: &mut Writer, entries: &[IndexEntry]) {
    w.u32(entries.len() as u32);
    for e in entries {
        let id = e.id.as_str().as_bytes();
        w.u16(id.len() as u16);
        w.bytes(id);
        w.f64(e.bbox.min_lon());
        w.f64(e.bbox.max_lon());
        w.f64(e.bbox.min_lat());
        w.f64(e.bbox.max_lat());
        w.i64(e.time.start());
        w.i64(e.time.end());
    }
}

fn decode_entries(r: &mut Reader<'_>) -> Result<Vec<IndexEntry>> {
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(r.remaining() / 50));
    for _ in 0..n {
        let len = r.u16()? as usize;
        let id = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::format("index blob", e.to_string()))?
            .to_owned();
        let bbox = BoundingBox::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?)?;
        let time = TimeRange::new(r.i64()?, r.i64()?)?;
        out.push(IndexEntry::new(TileId::from(id), bbox, time));
    }
    Ok(out)
}

fn check_distinct(entries: &[IndexEntry]) -> Result<()> {
    let mut seen = HashSet::with_capacity(entries.len());
    for e in entries {
        if !seen.insert(&e.id) {
            return Err(Error::DuplicateEntry(e.id.clone()));
        }
    }
    if entries.len() > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many entries".into()));
    }
    Ok(())
}

/// A freshly built index with its build measurements.
#[derive(Debug, Clone)]
pub struct BuiltIndex {
    pub index: Arc<dyn RangeIndex>,
    pub build_time: Duration,
    pub serialized_size: usize,
}

pub fn index_build(kind: IndexKind, entries: &[IndexEntry], params: &IndexParams) -> Result<BuiltIndex> {
    params.validate()?;
    let started = Instant::now();
    check_distinct(entries)?;
    let entries = entries.to_vec();
    let index: Arc<dyn RangeIndex> = match kind {
        IndexKind::GeoHash => Arc::new(GeoHashIndex::build(entries, params.geohash_precision)),
        IndexKind::QuadTree => Arc::new(QuadTreeIndex::build(
            entries,
            params.quadtree_leaf_capacity,
            params.quadtree_max_depth,
        )),
        IndexKind::OrthoList => Arc::new(OrthoGridIndex::build(entries, params.grid_cell_deg)),
    };
    let build_time = started.elapsed();
    let serialized_size = index.to_bytes().len();
    Ok(BuiltIndex {
        index,
        build_time,
        serialized_size,
    })
}

pub fn decode_index(blob: &[u8]) -> Result<Arc<dyn RangeIndex>> {
    let mut r = Reader::new(blob, "index blob");
    if r.take(4)? != BLOB_MAGIC {
        return Err(Error::format("index blob", "bad magic"));
    }
    let version = r.u16()?;
    if version != BLOB_VERSION {
        return Err(Error::format("index blob", format!("unsupported version {version}")));
    }
    let kind = IndexKind::from_tag(r.u8()?)?;
    let _reserved = r.u8()?;
    let len = r.u64()? as usize;
    if len != r.remaining() {
        return Err(Error::format("index blob", "payload length mismatch"));
    }
    let entries = decode_entries(&mut r)?;
    check_distinct(&entries)?;
    let index: Arc<dyn RangeIndex> = match kind {
        IndexKind::GeoHash => Arc::new(GeoHashIndex::decode(entries, &mut r)?),
        IndexKind::QuadTree => Arc::new(QuadTreeIndex::decode(entries, &mut r)?),
        IndexKind::OrthoList => Arc::new(OrthoGridIndex::decode(entries, &mut r)?),
    };
    r.finish()?;
    Ok(index)
}
