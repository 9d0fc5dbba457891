//! Simulated replicated tile store.
//!
//! A store is a directory:
//!
//! ```text
//! <root>/store.json          node count and index parameters
//! <root>/nodes.json          availability flag per node
//! <root>/catalog.ndjson      one metadata row per tile
//! <root>/node-<i>/<tile dir>/<label>.band, meta.json
//! ```
//!
//! Every tile is written to three distinct nodes chosen round-robin over the
//! nodes alive at ingest time. Reads try the replicas in placement order and
//! skip failed nodes or copies whose checksum does not match.

pub mod bandfile;
pub mod catalog;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use catalog::{index_keys, select_rows, Catalog, NdjsonCatalog, TileMetadata};

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, TileId, TimeRange};
use crate::index::IndexParams;
use crate::raster::{BandGrid, RasterScene};

pub const REPLICATION: usize = 3;
const MANIFEST: &str = "store.json";
const NODES: &str = "nodes.json";
const CATALOG: &str = "catalog.ndjson";

fn coord_dir(v: f64) -> String {
    let f = v.floor() as i64;
    if f < 0 {
        format!("-{:03}", -f)
    } else {
        format!("{f:03}")
    }
}

pub(crate) fn year_of(t: i64) -> Option<i32> {
    DateTime::from_timestamp(t, 0).map(|d| d.year())
}

/// Directory of a tile inside a node:
/// `lon_<floor min_lon>/lat_<floor min_lat>/<UTC year>/<tile_id>`.
pub fn tile_dir(meta: &TileMetadata) -> String {
    let year = year_of(meta.capture_time).expect("capture time checked at ingest");
    format!(
        "lon_{}/lat_{}/{year:04}/{}",
        coord_dir(meta.bbox.min_lon()),
        coord_dir(meta.bbox.min_lat()),
        meta.tile_id
    )
}

pub fn tile_path(meta: &TileMetadata, band: &str) -> String {
    format!("{}/{band}.band", tile_dir(meta))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    nodes: u32,
    index: IndexParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStatus {
    pub id: u32,
    pub alive: bool,
}

#[derive(Default)]
struct IngestState {
    cursor: usize,
    pending: HashSet<TileId>,
}

pub struct TileStore {
    root: PathBuf,
    params: IndexParams,
    alive: Vec<AtomicBool>,
    flags_lock: Mutex<()>,
    catalog: Box<dyn Catalog>,
    ingest: Mutex<IngestState>,
}

impl std::fmt::Debug for TileStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TileStore")
            .field("root", &self.root)
            .field("nodes", &self.alive.len())
            .field("tiles", &self.catalog.len())
            .finish()
    }
}

impl TileStore {
    /// Initializes an empty store; fails if one already exists at `root`.
    pub fn create(root: impl Into<PathBuf>, nodes: u32, params: IndexParams) -> Result<Self> {
        let root = root.into();
        params.validate()?;
        if (nodes as usize) < REPLICATION {
            return Err(Error::InvalidArgument(format!(
                "a store needs at least {REPLICATION} nodes, got {nodes}"
            )));
        }
        if root.join(MANIFEST).exists() {
            return Err(Error::InvalidArgument(format!("store already exists at {}", root.display())));
        }
        fs::create_dir_all(&root)?;
        for i in 0..nodes {
            fs::create_dir_all(root.join(format!("node-{i}")))?;
        }
        let manifest = Manifest {
            version: 1,
            nodes,
            index: params,
        };
        fs::write(root.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
        let store = Self::assemble(root, manifest, None)?;
        store.save_flags()?;
        Ok(store)
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let manifest_path = root.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(Error::MissingStore(root));
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
        manifest.index.validate()?;
        let flags = match fs::read(root.join(NODES)) {
            Ok(bytes) => Some(serde_json::from_slice::<Vec<NodeStatus>>(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let store = Self::assemble(root, manifest, flags)?;
        for meta in store.catalog.rows() {
            meta.check_keys(&store.params)?;
            store.check_placement(&meta)?;
        }
        Ok(store)
    }

    /// Opens the store at `root`, creating it with `nodes` nodes if absent.
    pub fn open_or_create(root: impl Into<PathBuf>, nodes: u32, params: IndexParams) -> Result<Self> {
        let root = root.into();
        if root.join(MANIFEST).exists() {
            Self::open(root)
        } else {
            Self::create(root, nodes, params)
        }
    }

    fn assemble(root: PathBuf, manifest: Manifest, flags: Option<Vec<NodeStatus>>) -> Result<Self> {
        let alive: Vec<AtomicBool> = (0..manifest.nodes).map(|_| AtomicBool::new(true)).collect();
        for s in flags.unwrap_or_default() {
            let slot = alive
                .get(s.id as usize)
                .ok_or_else(|| Error::format("node flags", format!("node {} outside store", s.id)))?;
            slot.store(s.alive, Ordering::SeqCst);
        }
        let catalog = NdjsonCatalog::open(root.join(CATALOG))?;
        let cursor = catalog.len();
        Ok(Self {
            root,
            params: manifest.index,
            alive,
            flags_lock: Mutex::new(()),
            catalog: Box::new(catalog),
            ingest: Mutex::new(IngestState {
                cursor,
                pending: HashSet::new(),
            }),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn catalog(&self) -> &dyn Catalog {
        self.catalog.as_ref()
    }

    pub fn node_count(&self) -> u32 {
        self.alive.len() as u32
    }

    pub fn nodes(&self) -> Vec<NodeStatus> {
        self.alive
            .iter()
            .enumerate()
            .map(|(i, a)| NodeStatus {
                id: i as u32,
                alive: a.load(Ordering::SeqCst),
            })
            .collect()
    }

    pub fn is_alive(&self, node: u32) -> bool {
        self.alive.get(node as usize).is_some_and(|a| a.load(Ordering::SeqCst))
    }

    fn live_nodes(&self) -> Vec<u32> {
        self.nodes().into_iter().filter(|n| n.alive).map(|n| n.id).collect()
    }

    fn set_alive(&self, node: u32, alive: bool) -> Result<()> {
        let slot = self.alive.get(node as usize).ok_or(Error::UnknownNode(node))?;
        let _guard = self.flags_lock.lock().expect("flags lock");
        slot.store(alive, Ordering::SeqCst);
        self.save_flags()
    }

    pub fn fail_node(&self, node: u32) -> Result<()> {
        self.set_alive(node, false)
    }

    pub fn restore_node(&self, node: u32) -> Result<()> {
        self.set_alive(node, true)
    }

    fn save_flags(&self) -> Result<()> {
        let tmp = self.root.join(format!("{NODES}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&self.nodes())?)?;
        fs::rename(tmp, self.root.join(NODES))?;
        Ok(())
    }

    fn node_dir(&self, node: u32) -> PathBuf {
        self.root.join(format!("node-{node}"))
    }

    /// On-disk location of one replica of a band.
    pub fn replica_path(&self, node: u32, meta: &TileMetadata, band: &str) -> PathBuf {
        self.node_dir(node).join(tile_path(meta, band))
    }

    fn check_placement(&self, meta: &TileMetadata) -> Result<()> {
        let distinct: HashSet<_> = meta.replicas.iter().collect();
        if meta.replicas.len() != REPLICATION
            || distinct.len() != REPLICATION
            || meta.replicas.iter().any(|n| *n as usize >= self.alive.len())
        {
            return Err(Error::format(
                "tile metadata",
                format!("tile {} has invalid placement {:?}", meta.tile_id, meta.replicas),
            ));
        }
        Ok(())
    }

    /// Writes every band of `scene` to three live nodes and records it in the
    /// catalog.
    pub fn ingest(&self, scene: &RasterScene) -> Result<TileId> {
        scene.validate()?;
        if year_of(scene.capture_time).is_none() {
            return Err(Error::InvalidArgument(format!(
                "capture time {} outside the calendar range",
                scene.capture_time
            )));
        }
        let tile_id = TileId::derive(&scene.bbox, scene.capture_time, &scene.satellite);
        let replicas = {
            let mut st = self.ingest.lock().expect("ingest lock");
            if st.pending.contains(&tile_id) || self.catalog.get(&tile_id).is_some() {
                return Err(Error::DuplicateIngest(tile_id));
            }
            let live = self.live_nodes();
            if live.len() < REPLICATION {
                return Err(Error::Replication {
                    required: REPLICATION,
                    live: live.len(),
                });
            }
            let start = st.cursor % live.len();
            st.cursor += 1;
            st.pending.insert(tile_id.clone());
            (0..REPLICATION).map(|k| live[(start + k) % live.len()]).collect::<Vec<_>>()
        };
        let result = self.write_tile(scene, tile_id.clone(), replicas);
        self.ingest.lock().expect("ingest lock").pending.remove(&tile_id);
        result
    }

    fn write_tile(&self, scene: &RasterScene, tile_id: TileId, replicas: Vec<u32>) -> Result<TileId> {
        let encoded: Vec<(String, Vec<u8>)> = scene
            .bands
            .iter()
            .map(|b| (b.label().to_owned(), bandfile::encode(b)))
            .collect();
        let checksums: BTreeMap<String, String> =
            encoded.iter().map(|(l, bytes)| (l.clone(), sha256_hex(bytes))).collect();
        let (geohash, quadtree_path, (grid_row, grid_col)) = index_keys(&scene.bbox, &self.params);
        let meta = TileMetadata {
            tile_id,
            bbox: scene.bbox,
            capture_time: scene.capture_time,
            satellite: scene.satellite.clone(),
            bands: scene.labels(),
            rows: scene.rows(),
            cols: scene.cols(),
            geohash,
            quadtree_path,
            grid_row,
            grid_col,
            checksums,
            replicas,
        };
        let sidecar = serde_json::to_vec_pretty(&meta)?;
        let dir = tile_dir(&meta);
        for &node in &meta.replicas {
            if !self.is_alive(node) {
                return Err(Error::Replication {
                    required: REPLICATION,
                    live: self.live_nodes().len(),
                });
            }
            let tile_root = self.node_dir(node).join(&dir);
            fs::create_dir_all(&tile_root)?;
            for (label, bytes) in &encoded {
                fs::write(tile_root.join(format!("{label}.band")), bytes)?;
            }
            fs::write(tile_root.join("meta.json"), &sidecar)?;
        }
        self.catalog.insert(&meta)?;
        Ok(meta.tile_id)
    }

    pub fn metadata(&self, id: &TileId) -> Result<TileMetadata> {
        self.catalog.get(id).ok_or_else(|| Error::UnknownTile(id.clone()))
    }

    pub fn catalog_select(&self, bbox: &BoundingBox, time: &TimeRange, satellite: Option<&str>) -> Vec<TileMetadata> {
        self.catalog.select(bbox, time, satellite)
    }

    pub fn fetch_band(&self, id: &TileId, band: &str) -> Result<BandGrid> {
        let meta = self.metadata(id)?;
        self.fetch_band_of(&meta, band)
    }

    /// Reads `band` from the first live replica whose bytes match the
    /// recorded checksum.
    pub fn fetch_band_of(&self, meta: &TileMetadata, band: &str) -> Result<BandGrid> {
        let expected = meta
            .checksums
            .get(band)
            .ok_or_else(|| Error::InvalidArgument(format!("tile {} has no band {band:?}", meta.tile_id)))?;
        let mut corrupt = None;
        for &node in &meta.replicas {
            if !self.is_alive(node) {
                continue;
            }
            let bytes = match fs::read(self.replica_path(node, meta, band)) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    corrupt.get_or_insert(node);
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            if sha256_hex(&bytes) != *expected {
                corrupt.get_or_insert(node);
                continue;
            }
            return bandfile::decode(band, &bytes);
        }
        Err(match corrupt {
            Some(node) => Error::Corruption {
                tile: meta.tile_id.clone(),
                band: band.to_owned(),
                node,
            },
            None => Error::Unavailable {
                tile: meta.tile_id.clone(),
                band: band.to_owned(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(lon: f64, t: i64) -> RasterScene {
        let bbox = BoundingBox::new(lon, lon + 0.1, 39.0, 39.1).unwrap();
        let red = BandGrid::new("Red", 2, 2, vec![0.1, 0.2, 0.3, f32::NAN]).unwrap();
        let nir = BandGrid::new("NIR", 2, 2, vec![0.5, 0.6, 0.7, 0.8]).unwrap();
        RasterScene::new(bbox, t, "LandSat8", vec![red, nir]).unwrap()
    }

    fn meta_at(min_lon: f64, min_lat: f64, t: i64) -> TileMetadata {
        let bbox = BoundingBox::new(min_lon, min_lon + 0.1, min_lat, min_lat + 0.1).unwrap();
        let (geohash, quadtree_path, (grid_row, grid_col)) = index_keys(&bbox, &IndexParams::default());
        TileMetadata {
            tile_id: TileId::from("tid"),
            bbox,
            capture_time: t,
            satellite: "LandSat8".into(),
            bands: vec![],
            rows: 1,
            cols: 1,
            geohash,
            quadtree_path,
            grid_row,
            grid_col,
            checksums: BTreeMap::new(),
            replicas: vec![0, 1, 2],
        }
    }

    #[test]
    fn tile_path_scheme() {
        // 2020-06-01T00:00:00Z
        let m = meta_at(116.0, 39.0, 1_590_969_600);
        assert_eq!(tile_path(&m, "NIR"), "lon_116/lat_039/2020/tid/NIR.band");
        let m = meta_at(-3.5, -1.2, 1_590_969_600);
        assert!(tile_path(&m, "NIR").starts_with("lon_-004/lat_-002/2020/"));
        let m = meta_at(5.0, 0.0, 0);
        assert_eq!(tile_dir(&m), "lon_005/lat_000/1970/tid");
        let a = meta_at(116.2, 39.3, 1_590_969_600);
        let b = meta_at(116.7, 39.8, 1_600_000_000);
        assert_eq!(tile_dir(&a).rsplit_once('/').unwrap().0, tile_dir(&b).rsplit_once('/').unwrap().0);
    }

    #[test]
    fn ingest_writes_three_replicas() {
        let dir = tempfile::tempdir().unwrap();
        let store = TileStore::create(dir.path(), 4, IndexParams::default()).unwrap();
        let s = scene(116.0, 1_590_969_600);
        let id = store.ingest(&s).unwrap();
        let meta = store.metadata(&id).unwrap();
        assert_eq!(meta.replicas, vec![0, 1, 2]);
        for &n in &meta.replicas {
            for band in ["Red", "NIR"] {
                let bytes = fs::read(store.replica_path(n, &meta, band)).unwrap();
                assert_eq!(sha256_hex(&bytes), meta.checksums[band]);
            }
            assert!(store.replica_path(n, &meta, "Red").with_file_name("meta.json").is_file());
        }
        assert!(!store.replica_path(3, &meta, "Red").exists());
        let second = store.ingest(&scene(116.1, 1_590_969_600)).unwrap();
        assert_eq!(store.metadata(&second).unwrap().replicas, vec![1, 2, 3]);
        assert!(matches!(store.ingest(&s), Err(Error::DuplicateIngest(_))));
    }

    #[test]
    fn fetch_fails_over_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let store = TileStore::create(dir.path(), 3, IndexParams::default()).unwrap();
        let s = scene(116.0, 0);
        let id = store.ingest(&s).unwrap();
        let healthy = store.fetch_band(&id, "Red").unwrap();
        assert!(healthy.bit_eq(s.band("Red").unwrap()));

        store.fail_node(0).unwrap();
        assert!(store.fetch_band(&id, "Red").unwrap().bit_eq(&healthy));
        store.fail_node(1).unwrap();
        store.fail_node(2).unwrap();
        assert!(matches!(store.fetch_band(&id, "Red"), Err(Error::Unavailable { .. })));
        assert!(matches!(store.ingest(&scene(117.0, 0)), Err(Error::Replication { live: 0, .. })));
        for n in 0..3 {
            store.restore_node(n).unwrap();
        }
        assert!(store.fetch_band(&id, "Red").unwrap().bit_eq(&healthy));
        assert!(matches!(store.fail_node(9), Err(Error::UnknownNode(9))));
        assert!(matches!(store.fetch_band(&id, "Blue"), Err(Error::InvalidArgument(_))));
        assert!(matches!(store.fetch_band(&TileId::from("nope"), "Red"), Err(Error::UnknownTile(_))));
    }

    #[test]
    fn corrupt_replica_is_skipped_then_named() {
        let dir = tempfile::tempdir().unwrap();
        let store = TileStore::create(dir.path(), 3, IndexParams::default()).unwrap();
        let id = store.ingest(&scene(116.0, 0)).unwrap();
        let meta = store.metadata(&id).unwrap();
        let p0 = store.replica_path(0, &meta, "NIR");
        let mut bytes = fs::read(&p0).unwrap();
        *bytes.last_mut().unwrap() ^= 1;
        fs::write(&p0, &bytes).unwrap();
        store.fetch_band(&id, "NIR").unwrap();
        store.fail_node(1).unwrap();
        store.fail_node(2).unwrap();
        assert!(matches!(store.fetch_band(&id, "NIR"), Err(Error::Corruption { node: 0, .. })));
    }

    #[test]
    fn reopen_keeps_catalog_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = TileStore::create(dir.path(), 5, IndexParams::default()).unwrap();
            store.ingest(&scene(116.0, 0)).unwrap();
            store.fail_node(3).unwrap();
        }
        assert!(TileStore::create(dir.path(), 5, IndexParams::default()).is_err());
        let store = TileStore::open(dir.path()).unwrap();
        assert_eq!(store.catalog().len(), 1);
        assert!(!store.is_alive(3));
        assert!(store.is_alive(4));
        // round-robin continues from the catalog count over live nodes 0,1,2,4
        let id = store.ingest(&scene(116.1, 0)).unwrap();
        assert_eq!(store.metadata(&id).unwrap().replicas, vec![1, 2, 4]);
        assert!(matches!(TileStore::open(dir.path().join("missing")), Err(Error::MissingStore(_))));
    }
}
