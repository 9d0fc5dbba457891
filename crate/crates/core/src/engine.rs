//! End-to-end query execution: race the indexes for the tile set, fetch
//! bands with failover, compute the index per tile and assemble a mosaic.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::bandmath::{assemble_mosaic, compute_index, InfoKind, Mosaic};
use crate::error::{Error, Result};
use crate::geo::{BoundingBox, TileId, TimeRange};
use crate::index::IndexKind;
use crate::multi::{build_all, duration_ms, IndexRunner, MultiIndex, RaceOptions, RaceOutcome};
use crate::raster::{BandGrid, NIR, RED};
use crate::store::{TileMetadata, TileStore};

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub bbox: BoundingBox,
    pub time: TimeRange,
    pub satellite: Option<String>,
    pub info: InfoKind,
}

impl Query {
    pub fn new(bbox: BoundingBox, time: TimeRange, satellite: Option<String>, info: InfoKind) -> Result<Self> {
        if satellite.as_deref().is_some_and(|s| s.trim().is_empty()) {
            return Err(Error::InvalidArgument("satellite filter is empty".into()));
        }
        Ok(Self {
            bbox,
            time,
            satellite,
            info,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimings {
    #[serde(with = "duration_ms")]
    pub index: Duration,
    #[serde(with = "duration_ms")]
    pub select: Duration,
    #[serde(with = "duration_ms")]
    pub fetch: Duration,
    #[serde(with = "duration_ms")]
    pub compute: Duration,
    #[serde(with = "duration_ms")]
    pub mosaic: Duration,
    #[serde(with = "duration_ms")]
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub mosaic: Mosaic,
    pub race: RaceOutcome,
    pub timings: StageTimings,
    pub tile_count: usize,
    /// Selected tiles in catalog order.
    pub tiles: Vec<TileId>,
}

/// Blank-mosaic cell size for a store without tiles.
const FALLBACK_CELL_DEG: f64 = 0.1 / 256.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct EngineConfig {
    pub race: RaceOptions,
    /// Cell size of the all-no-data mosaic returned for empty results;
    /// `None` takes the pixel size of the first catalogued tile.
    pub blank_cell_deg: Option<f64>,
}

/// A store with its racing indexes, ready to answer queries. Safe to share
/// between request handlers.
pub struct System {
    store: Arc<TileStore>,
    runner: IndexRunner,
    config: EngineConfig,
}

impl System {
    /// Builds the three indexes from the store's catalog.
    pub fn new(store: Arc<TileStore>, mut config: EngineConfig) -> Result<Self> {
        let rows = store.catalog().rows();
        let entries: Vec<_> = rows.iter().map(TileMetadata::index_entry).collect();
        if config.blank_cell_deg.is_none() {
            config.blank_cell_deg = Some(rows.first().map_or(FALLBACK_CELL_DEG, |m| m.pixel_size().0));
        }
        let multi = build_all(&entries, store.params())?;
        Ok(Self {
            runner: IndexRunner::new(Arc::new(multi)),
            store,
            config,
        })
    }

    pub fn open(root: &Path, config: EngineConfig) -> Result<Self> {
        Self::new(Arc::new(TileStore::open(root)?), config)
    }

    pub fn store(&self) -> &Arc<TileStore> {
        &self.store
    }

    pub fn runner(&self) -> &IndexRunner {
        &self.runner
    }

    pub fn multi(&self) -> &Arc<MultiIndex> {
        self.runner.multi()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn set_verify(&mut self, verify: bool) {
        self.config.race.verify = verify;
    }

    pub fn fail_index_worker(&self, kind: IndexKind) {
        self.runner.fail_index_worker(kind)
    }

    pub fn restore_index_worker(&self, kind: IndexKind) {
        self.runner.restore_index_worker(kind)
    }

    pub fn execute_query(&self, q: &Query) -> Result<QueryResult> {
        let started = Instant::now();
        let race = self.runner.race_query(&q.bbox, &q.time, self.config.race)?;
        let index = started.elapsed();

        let t = Instant::now();
        let mut tiles = race
            .result
            .iter()
            .map(|id| self.store.metadata(id))
            .collect::<Result<Vec<_>>>()?;
        tiles.retain(|m| q.satellite.as_deref().is_none_or(|s| s == m.satellite));
        tiles.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        if self.config.race.verify {
            let expected = self.store.catalog_select(&q.bbox, &q.time, q.satellite.as_deref());
            if expected.iter().map(|m| &m.tile_id).ne(tiles.iter().map(|m| &m.tile_id)) {
                return Err(Error::IndexDisagreement(format!(
                    "racing indexes selected {} tiles, catalog selected {}",
                    tiles.len(),
                    expected.len()
                )));
            }
        }
        let select = t.elapsed();

        let t = Instant::now();
        let bands = tiles
            .par_iter()
            .map(|m| Ok((self.store.fetch_band_of(m, NIR)?, self.store.fetch_band_of(m, RED)?)))
            .collect::<Result<Vec<(BandGrid, BandGrid)>>>()?;
        let fetch = t.elapsed();

        let t = Instant::now();
        let computed = bands
            .par_iter()
            .map(|(nir, red)| compute_index(q.info, nir, red))
            .collect::<Result<Vec<_>>>()?;
        let compute = t.elapsed();

        let t = Instant::now();
        let pairs: Vec<(TileMetadata, BandGrid)> = tiles.into_iter().zip(computed).collect();
        let blank_cell = self.config.blank_cell_deg.unwrap_or(FALLBACK_CELL_DEG);
        let mosaic = assemble_mosaic(&pairs, &q.bbox, blank_cell)?;
        let mosaic_time = t.elapsed();

        let ids: Vec<TileId> = pairs.into_iter().map(|(m, _)| m.tile_id).collect();
        Ok(QueryResult {
            mosaic,
            race,
            timings: StageTimings {
                index,
                select,
                fetch,
                compute,
                mosaic: mosaic_time,
                total: started.elapsed(),
            },
            tile_count: ids.len(),
            tiles: ids,
        })
    }

    /// Runs `queries` with at most `parallelism` in flight (1 = sequential).
    /// Failures are collected per query.
    pub fn batch_execute(&self, queries: &[Query], parallelism: usize) -> Result<BatchOutcome> {
        let started = Instant::now();
        let results = if parallelism <= 1 {
            queries.iter().map(|q| self.execute_query(q)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| queries.par_iter().map(|q| self.execute_query(q)).collect())
        };
        Ok(BatchOutcome {
            results,
            elapsed: started.elapsed(),
        })
    }
}

#[derive(Debug)]
pub struct BatchOutcome {
    pub results: Vec<Result<QueryResult>>,
    pub elapsed: Duration,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::IndexParams;
    use crate::raster::RasterScene;

    fn tile(lon: f64, lat: f64, t: i64, nir: f32, red: f32) -> RasterScene {
        let bbox = BoundingBox::new(lon, lon + 0.1, lat, lat + 0.1).unwrap();
        RasterScene::new(
            bbox,
            t,
            "LandSat8",
            vec![
                BandGrid::filled("Red", 4, 4, red).unwrap(),
                BandGrid::filled("NIR", 4, 4, nir).unwrap(),
            ],
        )
        .unwrap()
    }

    fn system(dir: &Path) -> System {
        let store = TileStore::create(dir, 3, IndexParams::default()).unwrap();
        store.ingest(&tile(116.0, 39.0, 10, 0.6, 0.2)).unwrap();
        store.ingest(&tile(116.5, 39.0, 20, 0.3, 0.3)).unwrap();
        let mut cfg = EngineConfig::default();
        cfg.race.verify = true;
        System::new(Arc::new(store), cfg).unwrap()
    }

    #[test]
    fn empty_result_is_not_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let sys = system(dir.path());
        let q = Query::new(
            BoundingBox::new(0.0, 1.0, 0.0, 1.0).unwrap(),
            TimeRange::ALL,
            None,
            InfoKind::Ndvi,
        )
        .unwrap();
        let r = sys.execute_query(&q).unwrap();
        assert_eq!(r.tile_count, 0);
        assert_eq!(r.mosaic.data_pixels(), 0);
    }

    #[test]
    fn single_tile_query() {
        let dir = tempfile::tempdir().unwrap();
        let sys = system(dir.path());
        let q = Query::new(
            BoundingBox::new(116.0, 116.1, 39.0, 39.1).unwrap(),
            TimeRange::new(0, 15).unwrap(),
            Some("LandSat8".into()),
            InfoKind::Ndvi,
        )
        .unwrap();
        let r = sys.execute_query(&q).unwrap();
        assert_eq!(r.tile_count, 1);
        assert_eq!((r.mosaic.rows, r.mosaic.cols), (4, 4));
        assert!(r.mosaic.values.iter().all(|v| (*v - 0.5).abs() < 1e-6));
        assert!(r.timings.total >= r.timings.index);

        let other = Query {
            satellite: Some("Sentinel2".into()),
            ..q.clone()
        };
        assert_eq!(sys.execute_query(&other).unwrap().tile_count, 0);
        assert!(Query::new(q.bbox, q.time, Some(" ".into()), InfoKind::Ndvi).is_err());
    }

    #[test]
    fn batch_collects_errors_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let sys = system(dir.path());
        let q = Query::new(BoundingBox::new(116.0, 117.0, 39.0, 39.1).unwrap(), TimeRange::ALL, None, InfoKind::Dvi).unwrap();
        for n in 0..3 {
            sys.store().fail_node(n).unwrap();
        }
        let out = sys.batch_execute(&[q.clone(), q.clone()], 1).unwrap();
        assert!(out.results.iter().all(|r| matches!(r, Err(Error::Unavailable { .. }))));
        sys.store().restore_node(1).unwrap();
        let out = sys.batch_execute(&[q.clone(), q], 2).unwrap();
        assert_eq!(out.results.len(), 2);
        assert!(out.results.iter().all(|r| r.as_ref().unwrap().tile_count == 2));
        assert!(sys.batch_execute(&[], 1).unwrap().results.is_empty());
    }
}
