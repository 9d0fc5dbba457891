//! Vegetation indices and mosaic assembly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{intersects, BoundingBox, TileId};
use crate::raster::BandGrid;
use crate::store::TileMetadata;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InfoKind {
    Ndvi,
    Rvi,
    Dvi,
}

impl InfoKind {
    pub const ALL: [InfoKind; 3] = [InfoKind::Ndvi, InfoKind::Rvi, InfoKind::Dvi];

    pub fn as_str(self) -> &'static str {
        match self {
            InfoKind::Ndvi => "NDVI",
            InfoKind::Rvi => "RVI",
            InfoKind::Dvi => "DVI",
        }
    }

    /// Value range mapped onto the heatmap scale; values outside are clamped.
    pub fn display_range(self) -> (f64, f64) {
        match self {
            InfoKind::Ndvi | InfoKind::Dvi => (-1.0, 1.0),
            InfoKind::Rvi => (0.0, 10.0),
        }
    }

    /// `None` marks a no-data pixel.
    #[inline]
    pub fn apply(self, nir: f64, red: f64) -> Option<f64> {
        if nir < 0.0 || red < 0.0 {
            return None;
        }
        match self {
            InfoKind::Ndvi => {
                let den = nir + red;
                (den != 0.0).then(|| (nir - red) / den)
            }
            InfoKind::Rvi => (red != 0.0).then(|| nir / red),
            InfoKind::Dvi => Some(nir - red),
        }
    }
}

impl fmt::Display for InfoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InfoKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ndvi" => Ok(InfoKind::Ndvi),
            "rvi" => Ok(InfoKind::Rvi),
            "dvi" => Ok(InfoKind::Dvi),
            _ => Err(Error::InvalidArgument(format!("unknown info kind {s:?}, expected ndvi, rvi or dvi"))),
        }
    }
}

impl TryFrom<String> for InfoKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InfoKind> for String {
    fn from(k: InfoKind) -> Self {
        k.as_str().to_ascii_lowercase()
    }
}

/// Pixel-wise index over two co-registered bands. Pixels where either input
/// is no-data or negative, or where the ratio is undefined, are no-data.
pub fn compute_index(kind: InfoKind, nir: &BandGrid, red: &BandGrid) -> Result<BandGrid> {
    if !nir.same_shape(red) {
        return Err(Error::InvalidArgument(format!(
            "NIR is {}x{} but Red is {}x{}",
            nir.rows(),
            nir.cols(),
            red.rows(),
            red.cols()
        )));
    }
    let values = nir
        .values()
        .iter()
        .zip(nir.no_data())
        .zip(red.values().iter().zip(red.no_data()))
        .map(|((&n, &n_nd), (&r, &r_nd))| {
            if n_nd || r_nd {
                return f32::NAN;
            }
            kind.apply(n as f64, r as f64).map_or(f32::NAN, |v| v as f32)
        })
        .collect();
    BandGrid::new(kind.as_str(), nir.rows(), nir.cols(), values)
}

/// Upper bound on mosaic pixels.
pub const MAX_MOSAIC_PIXELS: usize = 1 << 26;

/// Longest side of a mosaic with no contributing tiles.
const BLANK_MAX_SIDE: usize = 1024;

/// A georeferenced grid over the query box. Row 0 is the northern edge;
/// pixel `(r, c)` is centred at
/// `(min_lon + (c + 0.5) * cell_lon, max_lat - (r + 0.5) * cell_lat)`.
///
/// Equality compares pixel values bit for bit, so no-data pixels compare
/// equal.
#[derive(Debug, Clone)]
pub struct Mosaic {
    pub bbox: BoundingBox,
    pub rows: usize,
    pub cols: usize,
    pub cell_lon: f64,
    pub cell_lat: f64,
    pub values: Vec<f32>,
    pub no_data: Vec<bool>,
    /// Contributing tiles in catalog order.
    pub provenance: Vec<TileId>,
}

impl PartialEq for Mosaic {
    fn eq(&self, other: &Self) -> bool {
        self.bbox == other.bbox
            && (self.rows, self.cols) == (other.rows, other.cols)
            && self.cell_lon.to_bits() == other.cell_lon.to_bits()
            && self.cell_lat.to_bits() == other.cell_lat.to_bits()
            && self.no_data == other.no_data
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.provenance == other.provenance
    }
}

fn grid_dims(area: &BoundingBox, cell_lon: f64, cell_lat: f64) -> Result<(usize, usize)> {
    let cols = (area.width() / cell_lon).round().max(1.0);
    let rows = (area.height() / cell_lat).round().max(1.0);
    if rows * cols > MAX_MOSAIC_PIXELS as f64 {
        return Err(Error::InvalidArgument(format!(
            "query area needs {rows}x{cols} pixels, above the {MAX_MOSAIC_PIXELS} limit"
        )));
    }
    Ok((rows as usize, cols as usize))
}

impl Mosaic {
    /// All-no-data mosaic over `area`; the cell size grows if needed to keep
    /// the grid small.
    pub fn blank(area: &BoundingBox, cell_deg: f64) -> Self {
        let side = area.width().max(area.height());
        let cell = cell_deg.max(side / BLANK_MAX_SIDE as f64);
        let cell = if cell > 0.0 { cell } else { 1.0 };
        let (rows, cols) = grid_dims(area, cell, cell).expect("bounded by BLANK_MAX_SIDE");
        Self {
            bbox: *area,
            rows,
            cols,
            cell_lon: cell,
            cell_lat: cell,
            values: vec![f32::NAN; rows * cols],
            no_data: vec![true; rows * cols],
            provenance: Vec::new(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        let k = row * self.cols + col;
        (!self.no_data[k]).then_some(self.values[k])
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.bbox.min_lon() + (col as f64 + 0.5) * self.cell_lon,
            self.bbox.max_lat() - (row as f64 + 0.5) * self.cell_lat,
        )
    }

    pub fn data_pixels(&self) -> usize {
        self.no_data.iter().filter(|m| !**m).count()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Places each tile's grid at its footprint inside `area`.
///
/// Mosaic pixels take the tile pixel under their centre. Tiles are painted
/// in `(capture_time, tile_id)` order and only data pixels are painted, so
/// where tiles overlap the newest capture wins, ties going to the larger
/// tile id.
pub fn assemble_mosaic(results: &[(TileMetadata, BandGrid)], area: &BoundingBox, blank_cell_deg: f64) -> Result<Mosaic> {
    let Some((first_meta, _)) = results.first() else {
        return Ok(Mosaic::blank(area, blank_cell_deg));
    };
    let (cell_lon, cell_lat) = first_meta.pixel_size();
    for (meta, grid) in results {
        if (grid.rows(), grid.cols()) != (meta.rows, meta.cols) {
            return Err(Error::InvalidArgument(format!(
                "grid for tile {} is {}x{}, metadata says {}x{}",
                meta.tile_id,
                grid.rows(),
                grid.cols(),
                meta.rows,
                meta.cols
            )));
        }
        let (cl, ct) = meta.pixel_size();
        if !close(cl, cell_lon) || !close(ct, cell_lat) {
            return Err(Error::InvalidArgument(format!(
                "tile {} pixel size {cl}x{ct} differs from {cell_lon}x{cell_lat}",
                meta.tile_id
            )));
        }
        if !intersects(&meta.bbox, area) {
            return Err(Error::InvalidArgument(format!("tile {} lies outside the query box", meta.tile_id)));
        }
    }
    let (rows, cols) = grid_dims(area, cell_lon, cell_lat)?;
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[a].0.order_key().cmp(&results[b].0.order_key()));

    let mut mosaic = Mosaic {
        bbox: *area,
        rows,
        cols,
        cell_lon,
        cell_lat,
        values: vec![f32::NAN; rows * cols],
        no_data: vec![true; rows * cols],
        provenance: order.iter().map(|&i| results[i].0.tile_id.clone()).collect(),
    };
    for &i in &order {
        paint(&mut mosaic, &results[i].0.bbox, &results[i].1);
    }
    Ok(mosaic)
}

fn paint(m: &mut Mosaic, tile: &BoundingBox, grid: &BandGrid) {
    let (a_lon, a_lat) = (m.bbox.min_lon(), m.bbox.max_lat());
    // candidate mosaic columns/rows, widened by one and filtered per pixel
    let c0 = (((tile.min_lon() - a_lon) / m.cell_lon).floor() - 1.0).max(0.0) as usize;
    let c1 = ((((tile.max_lon() - a_lon) / m.cell_lon).ceil() + 1.0).max(0.0) as usize).min(m.cols);
    let r0 = (((a_lat - tile.max_lat()) / m.cell_lat).floor() - 1.0).max(0.0) as usize;
    let r1 = ((((a_lat - tile.min_lat()) / m.cell_lat).ceil() + 1.0).max(0.0) as usize).min(m.rows);
    let src_cols: Vec<Option<usize>> = (c0..c1)
        .map(|c| {
            let lon = a_lon + (c as f64 + 0.5) * m.cell_lon;
            let j = ((lon - tile.min_lon()) / m.cell_lon).floor();
            (j >= 0.0 && (j as usize) < grid.cols()).then_some(j as usize)
        })
        .collect();
    for r in r0..r1 {
        let lat = a_lat - (r as f64 + 0.5) * m.cell_lat;
        let i = ((tile.max_lat() - lat) / m.cell_lat).floor();
        if i < 0.0 || i as usize >= grid.rows() {
            continue;
        }
        let i = i as usize;
        for (c, j) in (c0..c1).zip(&src_cols) {
            let Some(j) = *j else { continue };
            if let Some(v) = grid.get(i, j) {
                let k = r * m.cols + c;
                m.values[k] = v;
                m.no_data[k] = false;
            }
        }
    }
}
