//! In-memory raster types: single bands and multi-band scenes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::BoundingBox;
use crate::store::bandfile;

/// LandSat 8 OLI/TIRS band names, in band order.
pub const LANDSAT8_BANDS: [&str; 10] = [
    "Coastal", "Blue", "Green", "Red", "NIR", "SWIR1", "SWIR2", "Pan", "Cirrus", "TIRS1",
];

pub const NIR: &str = "NIR";
pub const RED: &str = "Red";

/// One band as a row-major grid. Row 0 is the northern edge.
///
/// No-data pixels hold the canonical quiet NaN in `values` and `true` in
/// the mask.
#[derive(Debug, Clone)]
pub struct BandGrid {
    label: String,
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    no_data: Vec<bool>,
}

impl BandGrid {
    /// NaN values become no-data; infinities are rejected.
    pub fn new(label: impl Into<String>, rows: usize, cols: usize, mut values: Vec<f32>) -> Result<Self> {
        let label = label.into();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!("band {label:?} has zero size")));
        }
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::InvalidArgument(format!(
                "band {label:?}: {} values for {rows}x{cols}",
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::InvalidArgument(format!("band {label:?} holds infinite values")));
        }
        let no_data = values
            .iter_mut()
            .map(|v| {
                // one canonical NaN keeps encoded files byte-stable
                let nd = v.is_nan();
                if nd {
                    *v = f32::NAN;
                }
                nd
            })
            .collect();
        Ok(Self {
            label,
            rows,
            cols,
            values,
            no_data,
        })
    }

    /// Grid from explicit values and mask; masked pixels are overwritten with NaN.
    pub fn with_mask(
        label: impl Into<String>,
        rows: usize,
        cols: usize,
        mut values: Vec<f32>,
        no_data: Vec<bool>,
    ) -> Result<Self> {
        if no_data.len() != values.len() {
            return Err(Error::InvalidArgument("mask and values differ in length".into()));
        }
        for (v, m) in values.iter_mut().zip(&no_data) {
            if *m {
                *v = f32::NAN;
            }
        }
        let grid = Self::new(label, rows, cols, values)?;
        debug_assert_eq!(grid.no_data, no_data);
        Ok(grid)
    }

    pub fn filled(label: impl Into<String>, rows: usize, cols: usize, v: f32) -> Result<Self> {
        Self::new(label, rows, cols, vec![v; rows.saturating_mul(cols)])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn no_data(&self) -> &[bool] {
        &self.no_data
    }

    /// `None` for no-data.
    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        let k = row * self.cols + col;
        (!self.no_data[k]).then_some(self.values[k])
    }

    pub fn same_shape(&self, other: &BandGrid) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Bit-level equality, NaN payloads included.
    pub fn bit_eq(&self, other: &BandGrid) -> bool {
        self.same_shape(other)
            && self.label == other.label
            && self.no_data == other.no_data
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label.len() <= 64
        && label.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// A captured multi-band scene before ingest.
#[derive(Debug, Clone)]
pub struct RasterScene {
    pub bbox: BoundingBox,
    pub capture_time: i64,
    pub satellite: String,
    pub bands: Vec<BandGrid>,
}

impl RasterScene {
    pub fn new(bbox: BoundingBox, capture_time: i64, satellite: impl Into<String>, bands: Vec<BandGrid>) -> Result<Self> {
        let scene = Self {
            bbox,
            capture_time,
            satellite: satellite.into(),
            bands,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.satellite.trim().is_empty() {
            return Err(Error::InvalidArgument("satellite name is empty".into()));
        }
        let first = self
            .bands
            .first()
            .ok_or_else(|| Error::InvalidArgument("scene has no bands".into()))?;
        let mut labels = std::collections::HashSet::new();
        for b in &self.bands {
            if !valid_label(b.label()) {
                return Err(Error::InvalidArgument(format!("bad band label {:?}", b.label())));
            }
            if !labels.insert(b.label()) {
                return Err(Error::InvalidArgument(format!("band {:?} repeated", b.label())));
            }
            if !b.same_shape(first) {
                return Err(Error::InvalidArgument(format!(
                    "band {:?} is {}x{}, expected {}x{}",
                    b.label(),
                    b.rows(),
                    b.cols(),
                    first.rows(),
                    first.cols()
                )));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.bands[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.bands[0].cols()
    }

    pub fn band(&self, label: &str) -> Option<&BandGrid> {
        self.bands.iter().find(|b| b.label() == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.bands.iter().map(|b| b.label().to_owned()).collect()
    }
}

/// `scene.json` inside a scene directory; each band sits next to it as
/// `<label>.band`.
#[derive(Debug, Serialize, Deserialize)]
struct SceneManifest {
    min_lon: f64,
    max_lon: f64,
    min_lat: f64,
    max_lat: f64,
    capture_time: i64,
    satellite: String,
    bands: Vec<String>,
}

pub fn write_scene_dir(scene: &RasterScene, dir: &Path) -> Result<()> {
    scene.validate()?;
    fs::create_dir_all(dir)?;
    let manifest = SceneManifest {
        min_lon: scene.bbox.min_lon(),
        max_lon: scene.bbox.max_lon(),
        min_lat: scene.bbox.min_lat(),
        max_lat: scene.bbox.max_lat(),
        capture_time: scene.capture_time,
        satellite: scene.satellite.clone(),
        bands: scene.labels(),
    };
    fs::write(dir.join("scene.json"), serde_json::to_vec_pretty(&manifest)?)?;
    for b in &scene.bands {
        fs::write(dir.join(format!("{}.band", b.label())), bandfile::encode(b))?;
    }
    Ok(())
}

pub fn read_scene_dir(dir: &Path) -> Result<RasterScene> {
    let manifest: SceneManifest = serde_json::from_slice(&fs::read(dir.join("scene.json"))?)?;
    let bbox = BoundingBox::new(manifest.min_lon, manifest.max_lon, manifest.min_lat, manifest.max_lat)?;
    let mut bands = Vec::with_capacity(manifest.bands.len());
    for label in &manifest.bands {
        if !valid_label(label) {
            return Err(Error::InvalidArgument(format!("bad band label {label:?}")));
        }
        let bytes = fs::read(dir.join(format!("{label}.band")))?;
        bands.push(bandfile::decode(label, &bytes)?);
    }
    RasterScene::new(bbox, manifest.capture_time, manifest.satellite, bands)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_becomes_no_data() {
        let g = BandGrid::new("x", 1, 3, vec![0.5, f32::NAN, 1.0]).unwrap();
        assert_eq!(g.no_data(), &[false, true, false]);
        assert_eq!(g.get(0, 1), None);
        assert_eq!(g.get(0, 2), Some(1.0));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(BandGrid::new("x", 2, 2, vec![0.0; 3]).is_err());
        assert!(BandGrid::new("x", 0, 2, vec![]).is_err());
        assert!(BandGrid::new("x", 1, 1, vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn mask_overrides_values() {
        let g = BandGrid::with_mask("x", 1, 2, vec![3.0, 4.0], vec![true, false]).unwrap();
        assert!(g.values()[0].is_nan());
        assert_eq!(g.get(0, 1), Some(4.0));
    }

    #[test]
    fn scene_validation() {
        let bbox = BoundingBox::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let a = BandGrid::filled("Red", 2, 2, 0.1).unwrap();
        let b = BandGrid::filled("NIR", 2, 3, 0.1).unwrap();
        assert!(RasterScene::new(bbox, 0, "L8", vec![a.clone(), b]).is_err());
        assert!(RasterScene::new(bbox, 0, "L8", vec![a.clone(), a.clone()]).is_err());
        assert!(RasterScene::new(bbox, 0, "", vec![a.clone()]).is_err());
        assert!(RasterScene::new(bbox, 0, "L8", vec![]).is_err());
        assert!(RasterScene::new(bbox, 0, "L8", vec![a.clone().relabel("../x")]).is_err());
        assert!(RasterScene::new(bbox, 0, "L8", vec![a]).is_ok());
    }

    #[test]
    fn scene_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let bbox = BoundingBox::new(116.0, 116.1, 39.0, 39.1).unwrap();
        let bands = vec![
            BandGrid::new("Red", 2, 2, vec![0.1, 0.2, f32::NAN, 0.4]).unwrap(),
            BandGrid::new("NIR", 2, 2, vec![0.5, 0.6, 0.7, 0.8]).unwrap(),
        ];
        let scene = RasterScene::new(bbox, 1_600_000_000, "LandSat8", bands).unwrap();
        write_scene_dir(&scene, dir.path()).unwrap();
        let back = read_scene_dir(dir.path()).unwrap();
        assert_eq!(back.bbox, scene.bbox);
        assert_eq!(back.capture_time, scene.capture_time);
        for (a, b) in back.bands.iter().zip(&scene.bands) {
            assert!(a.bit_eq(b));
        }
    }
}
