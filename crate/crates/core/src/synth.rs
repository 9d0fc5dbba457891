//! Seeded synthetic scenes and query workloads.
//!
//! Scenes tile a regular lon/lat grid: tile `k` sits at footprint
//! `k % side²` (row-major from the south-west origin) and capture epoch
//! `k / side²`, so the corpus stacks `side × side` footprints over time.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, TileId, TimeRange};
use crate::index::IndexParams;
use crate::raster::{BandGrid, RasterScene, LANDSAT8_BANDS};
use crate::store::{index_keys, TileMetadata, REPLICATION};

/// 2020-01-01T00:00:00Z
pub const BASE_TIME: i64 = 1_577_836_800;
/// Revisit interval between capture epochs (16 days).
pub const EPOCH_SECS: i64 = 16 * 86_400;
pub const SATELLITE: &str = "LandSat8";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneLayout {
    pub origin_lon: f64,
    pub origin_lat: f64,
    /// Tile edge in degrees.
    pub tile_deg: f64,
    /// Footprints per side of the square layout.
    pub side: usize,
}

impl Default for SceneLayout {
    fn default() -> Self {
        Self {
            origin_lon: 116.0,
            origin_lat: 39.0,
            tile_deg: 0.1,
            side: 30,
        }
    }
}

impl SceneLayout {
    fn edge(origin: f64, step: f64, i: usize) -> f64 {
        origin + i as f64 * step
    }

    /// Footprint `(col, row)` of grid cell, counted from the south-west.
    pub fn cell_bbox(&self, col: usize, row: usize) -> BoundingBox {
        BoundingBox::new(
            Self::edge(self.origin_lon, self.tile_deg, col),
            Self::edge(self.origin_lon, self.tile_deg, col + 1),
            Self::edge(self.origin_lat, self.tile_deg, row),
            Self::edge(self.origin_lat, self.tile_deg, row + 1),
        )
        .expect("layout inside the world box")
    }

    pub fn footprint(&self, k: usize) -> BoundingBox {
        let f = k % (self.side * self.side);
        self.cell_bbox(f % self.side, f / self.side)
    }

    pub fn capture_time(&self, k: usize) -> i64 {
        BASE_TIME + (k / (self.side * self.side)) as i64 * EPOCH_SECS
    }

    pub fn extent(&self) -> BoundingBox {
        self.cell_bbox(0, 0).union(&self.cell_bbox(self.side - 1, self.side - 1))
    }

    /// Capture times spanned by `count` tiles.
    pub fn time_span(&self, count: usize) -> TimeRange {
        TimeRange::new(BASE_TIME, self.capture_time(count.max(1) - 1)).expect("ordered")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub layout: SceneLayout,
    /// Pixels per side.
    pub size: usize,
    /// Number of bands, taken from the start of [`LANDSAT8_BANDS`].
    pub bands: usize,
    pub seed: u64,
    /// Probability that a pixel is no-data in every band.
    pub no_data_rate: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            layout: SceneLayout::default(),
            size: 256,
            bands: LANDSAT8_BANDS.len(),
            seed: 7,
            no_data_rate: 0.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidArgument("scene size must be positive".into()));
        }
        if !(1..=LANDSAT8_BANDS.len()).contains(&self.bands) {
            return Err(Error::InvalidArgument(format!(
                "band count {} outside 1..={}",
                self.bands,
                LANDSAT8_BANDS.len()
            )));
        }
        if self.layout.side == 0 || self.layout.tile_deg.is_nan() || self.layout.tile_deg <= 0.0 {
            return Err(Error::InvalidArgument("empty scene layout".into()));
        }
        if !(0.0..=1.0).contains(&self.no_data_rate) {
            return Err(Error::InvalidArgument("no-data rate outside [0, 1]".into()));
        }
        Ok(())
    }

    fn rng(&self, k: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Scene number `k`: reflectance-like values in `[0, 0.6)`.
    pub fn scene(&self, k: usize) -> Result<RasterScene> {
        self.validate()?;
        let mut rng = self.rng(k);
        let n = self.size * self.size;
        let holes: Vec<bool> = (0..n).map(|_| rng.gen_bool(self.no_data_rate)).collect();
        let bands = LANDSAT8_BANDS[..self.bands]
            .iter()
            .map(|label| {
                let values = holes
                    .iter()
                    .map(|h| if *h { f32::NAN } else { rng.gen_range(0.0f32..0.6) })
                    .collect();
                BandGrid::new(*label, self.size, self.size, values)
            })
            .collect::<Result<Vec<_>>>()?;
        RasterScene::new(self.layout.footprint(k), self.layout.capture_time(k), SATELLITE, bands)
    }
}

/// Catalog rows for `count` layout tiles of `size`² pixels without pixel
/// data, as the store would record them with `nodes` nodes.
pub fn metadata_records(
    layout: &SceneLayout,
    count: usize,
    size: usize,
    params: &IndexParams,
    nodes: u32,
) -> Vec<TileMetadata> {
    (0..count)
        .map(|k| {
            let bbox = layout.footprint(k);
            let t = layout.capture_time(k);
            let (geohash, quadtree_path, (grid_row, grid_col)) = index_keys(&bbox, params);
            TileMetadata {
                tile_id: TileId::derive(&bbox, t, SATELLITE),
                bbox,
                capture_time: t,
                satellite: SATELLITE.into(),
                bands: LANDSAT8_BANDS.iter().map(|s| s.to_string()).collect(),
                rows: size,
                cols: size,
                geohash,
                quadtree_path,
                grid_row,
                grid_col,
                checksums: BTreeMap::new(),
                replicas: (0..REPLICATION as u32).map(|r| (k as u32 + r) % nodes).collect(),
            }
        })
        .collect()
}

/// Uniform random query rectangles with edges of 1 to 4 tile widths inside
/// `extent`, each with a random time window inside `span`.
pub fn query_workload(
    extent: &BoundingBox,
    span: &TimeRange,
    tile_deg: f64,
    count: usize,
    seed: u64,
) -> Vec<(BoundingBox, TimeRange)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |lo: f64, hi: f64, edge: f64| -> (f64, f64) {
        let edge = edge.min(hi - lo);
        let start = if hi - lo > edge { rng.gen_range(lo..=hi - edge) } else { lo };
        (start, start + edge)
    };
    let mut out = Vec::with_capacity(count);
    let mut edges = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ 0x5bd1_e995);
    for _ in 0..count {
        let w = edges.gen_range(1.0..=4.0) * tile_deg;
        let h = edges.gen_range(1.0..=4.0) * tile_deg;
        let (x0, x1) = pick(extent.min_lon(), extent.max_lon(), w);
        let (y0, y1) = pick(extent.min_lat(), extent.max_lat(), h);
        // windows may hang over either end of the span so that the first and
        // last capture epochs are hit about as often as the middle ones
        let len = (span.end() - span.start()).max(1);
        let start = edges.gen_range(span.start() - len / 2..=span.end());
        let end = start.saturating_add(edges.gen_range(len / 4..=len));
        out.push((
            BoundingBox::new(x0, x1, y0, y1).expect("inside extent"),
            TimeRange::new(start, end).expect("ordered"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_edges_are_shared() {
        let l = SceneLayout::default();
        let a = l.footprint(0);
        let b = l.footprint(1);
        let up = l.footprint(l.side);
        assert_eq!(a.max_lon(), b.min_lon());
        assert_eq!(a.max_lat(), up.min_lat());
        assert_eq!(a.min_lon(), 116.0);
        assert_eq!(l.footprint(900), a);
        assert_eq!(l.capture_time(900), BASE_TIME + EPOCH_SECS);
    }

    #[test]
    fn scenes_are_seeded() {
        let spec = SceneSpec {
            size: 8,
            ..Default::default()
        };
        let a = spec.scene(3).unwrap();
        let b = spec.scene(3).unwrap();
        let c = spec.scene(4).unwrap();
        assert_eq!(a.bands.len(), 10);
        assert!(a.bands.iter().zip(&b.bands).all(|(x, y)| x.bit_eq(y)));
        assert!(!a.bands[0].bit_eq(&c.bands[0]));
        assert!(SceneSpec { bands: 11, ..spec }.scene(0).is_err());
    }

    #[test]
    fn workload_is_reproducible_and_bounded() {
        let l = SceneLayout::default();
        let extent = l.extent();
        let span = l.time_span(9000);
        let a = query_workload(&extent, &span, l.tile_deg, 200, 42);
        assert_eq!(a, query_workload(&extent, &span, l.tile_deg, 200, 42));
        assert_ne!(a, query_workload(&extent, &span, l.tile_deg, 200, 43));
        for (b, _) in &a {
            assert!(extent.contains(b));
            assert!(b.width() >= l.tile_deg * 0.999 && b.width() <= 4.0 * l.tile_deg * 1.001);
        }
    }
}
