//! Replicated multi-index storage and racing query engine for tiled,
//! multi-band raster data.
//!
//! Tiles are ingested into a simulated replicated store, indexed three ways
//! (geohash, quadtree, orthogonal list), and queried by racing the three
//! indexes on separate replica workers. Vegetation indices are computed per
//! tile and assembled into a georeferenced mosaic.

pub mod bandmath;
#[doc(hidden)]
pub mod codec;
pub mod engine;
pub mod error;
pub mod geo;
pub mod geohash;
pub mod index;
pub mod multi;
pub mod raster;
pub mod render;
pub mod store;
pub mod synth;

pub use bandmath::{assemble_mosaic, compute_index, InfoKind, Mosaic};
pub use engine::{BatchOutcome, EngineConfig, Query, QueryResult, StageTimings, System};
pub use error::{Error, ErrorClass, Result};
pub use geo::{intersects, overlaps_time, BoundingBox, GeoPoint, TileId, TimeRange};
pub use geohash::{geohash_cover, geohash_decode, geohash_encode, GeoHashCode};
pub use index::{index_build, BuiltIndex, IndexEntry, IndexKind, IndexParams, RangeIndex};
pub use multi::{build_all, IndexRunner, KindLatency, MultiIndex, RaceOptions, RaceOutcome};
pub use raster::{BandGrid, RasterScene};
pub use render::render_heatmap;
pub use store::{tile_path, Catalog, NodeStatus, TileMetadata, TileStore};
