//! Geometric and temporal primitives shared by every other module.
//!
//! Everything lives in plate-carrée lon/lat degrees. Boxes and time ranges
//! are closed: touching edges or endpoints count as an intersection.
//! Longitude does not wrap; callers split antimeridian-crossing queries.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MIN_LON: f64 = -180.0;
pub const MAX_LON: f64 = 180.0;
pub const MIN_LAT: f64 = -90.0;
pub const MAX_LAT: f64 = 90.0;

fn check_lon(lon: f64) -> Result<()> {
    if !lon.is_finite() || !(MIN_LON..=MAX_LON).contains(&lon) {
        return Err(Error::InvalidArgument(format!(
            "longitude {lon} outside [-180, 180]"
        )));
    }
    Ok(())
}

fn check_lat(lat: f64) -> Result<()> {
    if !lat.is_finite() || !(MIN_LAT..=MAX_LAT).contains(&lat) {
        return Err(Error::InvalidArgument(format!(
            "latitude {lat} outside [-90, 90]"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lon: f64,
    lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        check_lon(lon)?;
        check_lat(lat)?;
        Ok(Self { lon, lat })
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }
}

/// A closed lon/lat rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    min_lon: f64,
    max_lon: f64,
    min_lat: f64,
    max_lat: f64,
}

impl BoundingBox {
    pub const WORLD: BoundingBox = BoundingBox {
        min_lon: MIN_LON,
        max_lon: MAX_LON,
        min_lat: MIN_LAT,
        max_lat: MAX_LAT,
    };

    pub fn new(min_lon: f64, max_lon: f64, min_lat: f64, max_lat: f64) -> Result<Self> {
        check_lon(min_lon)?;
        check_lon(max_lon)?;
        check_lat(min_lat)?;
        check_lat(max_lat)?;
        if min_lon > max_lon {
            return Err(Error::InvalidArgument(format!(
                "min_lon {min_lon} > max_lon {max_lon}"
            )));
        }
        if min_lat > max_lat {
            return Err(Error::InvalidArgument(format!(
                "min_lat {min_lat} > max_lat {max_lat}"
            )));
        }
        Ok(Self {
            min_lon,
            max_lon,
            min_lat,
            max_lat,
        })
    }

    /// Constructor for boxes whose validity is already guaranteed by the
    /// caller's own arithmetic (quadrant bisection, geohash cells).
    pub(crate) const fn from_bounds_unchecked(
        min_lon: f64,
        max_lon: f64,
        min_lat: f64,
        max_lat: f64,
    ) -> Self {
        Self {
            min_lon,
            max_lon,
            min_lat,
            max_lat,
        }
    }

    pub fn min_lon(&self) -> f64 {
        self.min_lon
    }
    pub fn max_lon(&self) -> f64 {
        self.max_lon
    }
    pub fn min_lat(&self) -> f64 {
        self.min_lat
    }
    pub fn max_lat(&self) -> f64 {
        self.max_lat
    }

    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lon: self.min_lon + self.width() / 2.0,
            lat: self.min_lat + self.height() / 2.0,
        }
    }

    pub fn contains_point(&self, p: &GeoPoint) -> bool {
        self.min_lon <= p.lon && p.lon <= self.max_lon && self.min_lat <= p.lat && p.lat <= self.max_lat
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.min_lon <= other.min_lon
            && other.max_lon <= self.max_lon
            && self.min_lat <= other.min_lat
            && other.max_lat <= self.max_lat
    }

    #[inline]
    pub fn intersects(&self, other: &BoundingBox) -> bool {
        intersects(self, other)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            min_lon: self.min_lon.min(other.min_lon),
            max_lon: self.max_lon.max(other.max_lon),
            min_lat: self.min_lat.min(other.min_lat),
            max_lat: self.max_lat.max(other.max_lat),
        }
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}]x[{}, {}]",
            self.min_lon, self.max_lon, self.min_lat, self.max_lat
        )
    }
}

/// Closed range of UTC epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeRange {
    start: i64,
    end: i64,
}

impl TimeRange {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidArgument(format!(
                "time range start {start} > end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn instant(t: i64) -> Self {
        Self { start: t, end: t }
    }

    pub const ALL: TimeRange = TimeRange {
        start: i64::MIN,
        end: i64::MAX,
    };

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.end
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t <= self.end
    }
}

/// True iff the closed boxes share at least one point.
#[inline]
pub fn intersects(a: &BoundingBox, b: &BoundingBox) -> bool {
    a.min_lon <= b.max_lon && b.min_lon <= a.max_lon && a.min_lat <= b.max_lat && b.min_lat <= a.max_lat
}

#[inline]
pub fn overlaps_time(a: &TimeRange, b: &TimeRange) -> bool {
    a.start.max(b.start) <= a.end.min(b.end)
}

/// Stable tile identifier, a pure function of footprint, capture time and
/// satellite.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TileId(String);

impl TileId {
    pub fn derive(bbox: &BoundingBox, capture_time: i64, satellite: &str) -> Self {
        let mut hasher = Sha256::new();
        for v in [bbox.min_lon, bbox.max_lon, bbox.min_lat, bbox.max_lat] {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher.update(capture_time.to_le_bytes());
        hasher.update(satellite.as_bytes());
        let digest = hasher.finalize();
        TileId(format!("t{}", hex::encode(&digest[..8])))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for TileId {
    fn from(s: &str) -> Self {
        TileId(s.to_owned())
    }
}

impl From<String> for TileId {
    fn from(s: String) -> Self {
        TileId(s)
    }
}

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
