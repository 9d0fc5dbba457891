//! Tile metadata rows and the catalog that holds them.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{intersects, overlaps_time, BoundingBox, TileId, TimeRange};
use crate::geohash::{geohash_encode, GeoHashCode};
use crate::index::{grid_cell_of, quadtree_path, IndexEntry, IndexParams};

/// One catalog row. Also written as `meta.json` next to each replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MetaRecord", try_from = "MetaRecord")]
pub struct TileMetadata {
    pub tile_id: TileId,
    pub bbox: BoundingBox,
    pub capture_time: i64,
    pub satellite: String,
    pub bands: Vec<String>,
    /// Pixel grid shared by every band.
    pub rows: usize,
    pub cols: usize,
    pub geohash: GeoHashCode,
    pub quadtree_path: String,
    pub grid_row: i64,
    pub grid_col: i64,
    /// Band label to hex SHA-256 of the band file.
    pub checksums: BTreeMap<String, String>,
    /// Node ids holding a copy, in read order.
    pub replicas: Vec<u32>,
}

/// Index keys derived from a footprint: geohash of the centre, quadtree
/// path and grid cell.
pub fn index_keys(bbox: &BoundingBox, params: &IndexParams) -> (GeoHashCode, String, (i64, i64)) {
    let geohash = geohash_encode(&bbox.center(), params.geohash_precision).expect("precision validated");
    (
        geohash,
        quadtree_path(bbox, params.quadtree_max_depth),
        grid_cell_of(bbox, params.grid_cell_deg),
    )
}

impl TileMetadata {
    pub fn time(&self) -> TimeRange {
        TimeRange::instant(self.capture_time)
    }

    pub fn index_entry(&self) -> IndexEntry {
        IndexEntry::new(self.tile_id.clone(), self.bbox, self.time())
    }

    pub fn matches(&self, bbox: &BoundingBox, time: &TimeRange, satellite: Option<&str>) -> bool {
        intersects(&self.bbox, bbox)
            && overlaps_time(&self.time(), time)
            && satellite.is_none_or(|s| s == self.satellite)
    }

    /// Recomputes the stored index keys from the box.
    pub fn check_keys(&self, params: &IndexParams) -> Result<()> {
        let (gh, path, (row, col)) = index_keys(&self.bbox, params);
        if gh != self.geohash || path != self.quadtree_path || (row, col) != (self.grid_row, self.grid_col) {
            return Err(Error::format(
                "tile metadata",
                format!("index keys of {} do not match its bounding box", self.tile_id),
            ));
        }
        if TileId::derive(&self.bbox, self.capture_time, &self.satellite) != self.tile_id {
            return Err(Error::format("tile metadata", format!("tile id {} does not match its key", self.tile_id)));
        }
        Ok(())
    }

    /// Degrees per pixel along longitude and latitude.
    pub fn pixel_size(&self) -> (f64, f64) {
        (self.bbox.width() / self.cols as f64, self.bbox.height() / self.rows as f64)
    }

    /// Catalog order.
    pub fn order_key(&self) -> (i64, &TileId) {
        (self.capture_time, &self.tile_id)
    }
}

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    tile_id: TileId,
    min_lon: f64,
    max_lon: f64,
    min_lat: f64,
    max_lat: f64,
    capture_time: i64,
    satellite: String,
    bands: Vec<String>,
    rows: usize,
    cols: usize,
    geohash: GeoHashCode,
    quadtree_path: String,
    grid_row: i64,
    grid_col: i64,
    checksums: BTreeMap<String, String>,
    #[serde(default)]
    replicas: Vec<u32>,
}

impl From<TileMetadata> for MetaRecord {
    fn from(m: TileMetadata) -> Self {
        Self {
            tile_id: m.tile_id,
            min_lon: m.bbox.min_lon(),
            max_lon: m.bbox.max_lon(),
            min_lat: m.bbox.min_lat(),
            max_lat: m.bbox.max_lat(),
            capture_time: m.capture_time,
            satellite: m.satellite,
            bands: m.bands,
            rows: m.rows,
            cols: m.cols,
            geohash: m.geohash,
            quadtree_path: m.quadtree_path,
            grid_row: m.grid_row,
            grid_col: m.grid_col,
            checksums: m.checksums,
            replicas: m.replicas,
        }
    }
}

impl TryFrom<MetaRecord> for TileMetadata {
    type Error = Error;
    fn try_from(r: MetaRecord) -> Result<Self> {
        Ok(Self {
            tile_id: r.tile_id,
            bbox: BoundingBox::new(r.min_lon, r.max_lon, r.min_lat, r.max_lat)?,
            capture_time: r.capture_time,
            satellite: r.satellite,
            bands: r.bands,
            rows: r.rows,
            cols: r.cols,
            geohash: r.geohash,
            quadtree_path: r.quadtree_path,
            grid_row: r.grid_row,
            grid_col: r.grid_col,
            checksums: r.checksums,
            replicas: r.replicas,
        })
    }
}

/// Linear scan used as the selection authority: every matching row,
/// ordered by `(capture_time, tile_id)`.
pub fn select_rows<'a>(
    rows: impl IntoIterator<Item = &'a TileMetadata>,
    bbox: &BoundingBox,
    time: &TimeRange,
    satellite: Option<&str>,
) -> Vec<TileMetadata> {
    let mut out: Vec<TileMetadata> = rows
        .into_iter()
        .filter(|m| m.matches(bbox, time, satellite))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    out
}

/// Metadata table, one row per tile. Implementations must be safe to share
/// between query threads.
pub trait Catalog: Send + Sync {
    fn insert(&self, meta: &TileMetadata) -> Result<()>;

    fn get(&self, id: &TileId) -> Option<TileMetadata>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All rows in insertion order.
    fn rows(&self) -> Vec<TileMetadata>;

    fn select(&self, bbox: &BoundingBox, time: &TimeRange, satellite: Option<&str>) -> Vec<TileMetadata> {
        select_rows(&self.rows(), bbox, time, satellite)
    }
}

#[derive(Default)]
struct Rows {
    rows: Vec<TileMetadata>,
    by_id: HashMap<TileId, usize>,
}

impl Rows {
    fn push(&mut self, meta: TileMetadata) -> Result<()> {
        if self.by_id.contains_key(&meta.tile_id) {
            return Err(Error::DuplicateIngest(meta.tile_id));
        }
        self.by_id.insert(meta.tile_id.clone(), self.rows.len());
        self.rows.push(meta);
        Ok(())
    }
}

/// Newline-delimited JSON file, appended on insert and held in memory.
pub struct NdjsonCatalog {
    path: PathBuf,
    rows: RwLock<Rows>,
    file: Mutex<File>,
}

impl NdjsonCatalog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut rows = Rows::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let meta: TileMetadata = serde_json::from_str(&line)
                    .map_err(|e| Error::format("catalog", format!("line {}: {e}", n + 1)))?;
                rows.push(meta)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            rows: RwLock::new(rows),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Catalog for NdjsonCatalog {
    fn insert(&self, meta: &TileMetadata) -> Result<()> {
        let mut line = serde_json::to_vec(meta)?;
        line.push(b'\n');
        let mut rows = self.rows.write().expect("catalog lock");
        if rows.by_id.contains_key(&meta.tile_id) {
            return Err(Error::DuplicateIngest(meta.tile_id.clone()));
        }
        {
            let mut f = self.file.lock().expect("catalog file lock");
            f.write_all(&line)?;
            f.flush()?;
        }
        rows.push(meta.clone())
    }

    fn get(&self, id: &TileId) -> Option<TileMetadata> {
        let rows = self.rows.read().expect("catalog lock");
        rows.by_id.get(id).map(|&i| rows.rows[i].clone())
    }

    fn len(&self) -> usize {
        self.rows.read().expect("catalog lock").rows.len()
    }

    fn rows(&self) -> Vec<TileMetadata> {
        self.rows.read().expect("catalog lock").rows.clone()
    }

    fn select(&self, bbox: &BoundingBox, time: &TimeRange, satellite: Option<&str>) -> Vec<TileMetadata> {
        let rows = self.rows.read().expect("catalog lock");
        select_rows(&rows.rows, bbox, time, satellite)
    }
}
