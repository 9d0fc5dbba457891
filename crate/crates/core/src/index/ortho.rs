use std::sync::atomic::AtomicBool;

use super::{is_cancelled, Cancelled, IndexEntry, IndexKind, RangeIndex, Seen};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geo::{BoundingBox, TimeRange, MAX_LAT, MIN_LON};

const NO_LINK: u32 = u32::MAX;

/// Global grid coordinates: column counts east from -180, row counts south
/// from +90.
fn axis_cells(cell: f64) -> (i64, i64) {
    ((360.0 / cell).ceil() as i64, (180.0 / cell).ceil() as i64)
}

fn col_of(lon: f64, cell: f64) -> i64 {
    let (ncols, _) = axis_cells(cell);
    (((lon - MIN_LON) / cell).floor() as i64).clamp(0, ncols - 1)
}

fn row_of(lat: f64, cell: f64) -> i64 {
    let (_, nrows) = axis_cells(cell);
    (((MAX_LAT - lat) / cell).floor() as i64).clamp(0, nrows - 1)
}

/// `(row, col)` of the global grid cell containing the box centre.
pub fn grid_cell_of(bbox: &BoundingBox, cell_deg: f64) -> (i64, i64) {
    let c = bbox.center();
    (row_of(c.lat(), cell_deg), col_of(c.lon(), cell_deg))
}

/// Inclusive `(row0, row1, col0, col1)` of every cell whose closed square
/// intersects the box.
fn cell_span(b: &BoundingBox, cell: f64) -> (i64, i64, i64, i64) {
    let mut c0 = col_of(b.min_lon(), cell);
    if c0 > 0 && MIN_LON + c0 as f64 * cell == b.min_lon() {
        c0 -= 1;
    }
    let c1 = col_of(b.max_lon(), cell);
    let mut r0 = row_of(b.max_lat(), cell);
    if r0 > 0 && MAX_LAT - r0 as f64 * cell == b.max_lat() {
        r0 -= 1;
    }
    let r1 = row_of(b.min_lat(), cell);
    (r0, r1, c0, c1)
}

#[derive(Debug, Clone)]
struct Cell {
    entries: Vec<u32>,
    right: u32,
    down: u32,
}

/// Orthogonal list: a rectangular block of grid cells over the extent of
/// the entries, each cell linked to its east (`right`) and south (`down`)
/// neighbour. Queries jump to the first cell of the query span and walk the
/// links.
///
/// Structure section: `cell_deg f64 | row0 i64 | col0 i64 | nrows u32 |
/// ncols u32` then `nrows*ncols` cells row-major, each
/// `right u32 | down u32 | positions list` (`u32::MAX` = no link).
#[derive(Debug)]
pub struct OrthoGridIndex {
    entries: Vec<IndexEntry>,
    cell_deg: f64,
    row0: i64,
    col0: i64,
    nrows: usize,
    ncols: usize,
    cells: Vec<Cell>,
}

impl OrthoGridIndex {
    pub(crate) fn build(entries: Vec<IndexEntry>, cell_deg: f64) -> Self {
        let spans: Vec<_> = entries.iter().map(|e| cell_span(&e.bbox, cell_deg)).collect();
        let (row0, row1, col0, col1) = spans.iter().fold(
            (i64::MAX, i64::MIN, i64::MAX, i64::MIN),
            |acc, s| (acc.0.min(s.0), acc.1.max(s.1), acc.2.min(s.2), acc.3.max(s.3)),
        );
        let (nrows, ncols) = if entries.is_empty() {
            (0, 0)
        } else {
            ((row1 - row0 + 1) as usize, (col1 - col0 + 1) as usize)
        };
        let mut cells: Vec<Cell> = (0..nrows * ncols)
            .map(|k| {
                let (r, c) = (k / ncols, k % ncols);
                Cell {
                    entries: Vec::new(),
                    right: if c + 1 < ncols { (k + 1) as u32 } else { NO_LINK },
                    down: if r + 1 < nrows { (k + ncols) as u32 } else { NO_LINK },
                }
            })
            .collect();
        for (pos, &(r0, r1, c0, c1)) in spans.iter().enumerate() {
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let k = (r - row0) as usize * ncols + (c - col0) as usize;
                    cells[k].entries.push(pos as u32);
                }
            }
        }
        Self {
            entries,
            cell_deg,
            row0: if nrows == 0 { 0 } else { row0 },
            col0: if ncols == 0 { 0 } else { col0 },
            nrows,
            ncols,
            cells,
        }
    }

    pub(crate) fn decode(entries: Vec<IndexEntry>, r: &mut Reader<'_>) -> Result<Self> {
        let cell_deg = r.f64()?;
        if !(cell_deg.is_finite() && cell_deg > 0.0) {
            return Err(Error::format("ortho index", "bad cell size"));
        }
        let row0 = r.i64()?;
        let col0 = r.i64()?;
        let nrows = r.u32()? as usize;
        let ncols = r.u32()? as usize;
        let total = nrows
            .checked_mul(ncols)
            .filter(|t| *t <= r.remaining() / 12)
            .ok_or_else(|| Error::format("ortho index", "grid larger than blob"))?;
        let mut cells = Vec::with_capacity(total);
        for _ in 0..total {
            let right = r.u32()?;
            let down = r.u32()?;
            cells.push(Cell {
                entries: r.u32_list()?,
                right,
                down,
            });
        }
        let n = entries.len() as u32;
        if cells.iter().flat_map(|c| &c.entries).any(|p| *p >= n) {
            return Err(Error::format("ortho index", "entry position out of range"));
        }
        Ok(Self {
            entries,
            cell_deg,
            row0,
            col0,
            nrows,
            ncols,
            cells,
        })
    }

    pub fn cell_deg(&self) -> f64 {
        self.cell_deg
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    /// Global `(row, col)` of the top-left cell.
    pub fn origin(&self) -> (i64, i64) {
        (self.row0, self.col0)
    }

    /// `(right, down)` neighbours of local cell `(i, j)` as local coordinates.
    pub fn links(&self, i: usize, j: usize) -> (Option<(usize, usize)>, Option<(usize, usize)>) {
        let cell = &self.cells[i * self.ncols + j];
        let to_rc = |k: u32| (k != NO_LINK).then(|| (k as usize / self.ncols, k as usize % self.ncols));
        (to_rc(cell.right), to_rc(cell.down))
    }

    /// Entry positions stored in local cell `(i, j)`.
    pub fn cell_entries(&self, i: usize, j: usize) -> &[u32] {
        &self.cells[i * self.ncols + j].entries
    }

    /// Every global cell the entry intersects, as the build would place it.
    pub fn cells_for(&self, bbox: &BoundingBox) -> Vec<(i64, i64)> {
        let (r0, r1, c0, c1) = cell_span(bbox, self.cell_deg);
        (r0..=r1).flat_map(|r| (c0..=c1).map(move |c| (r, c))).collect()
    }
}

impl RangeIndex for OrthoGridIndex {
    fn kind(&self) -> IndexKind {
        IndexKind::OrthoList
    }

    fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    fn search(&self, b: &BoundingBox, t: &TimeRange, cancel: &AtomicBool) -> Result<Vec<u32>, Cancelled> {
        let mut out = Vec::new();
        if self.cells.is_empty() {
            return Ok(out);
        }
        let (qr0, qr1, qc0, qc1) = cell_span(b, self.cell_deg);
        let last_row = self.row0 + self.nrows as i64 - 1;
        let last_col = self.col0 + self.ncols as i64 - 1;
        let (r0, r1) = (qr0.max(self.row0), qr1.min(last_row));
        let (c0, c1) = (qc0.max(self.col0), qc1.min(last_col));
        if r0 > r1 || c0 > c1 {
            return Ok(out);
        }
        let width = (c1 - c0) as usize;
        let mut seen = Seen::new(self.entries.len());
        let mut row_head = (r0 - self.row0) as u32 * self.ncols as u32 + (c0 - self.col0) as u32;
        for step in 0..=(r1 - r0) {
            if step > 0 {
                row_head = self.cells[row_head as usize].down;
            }
            let mut k = row_head;
            for hop in 0..=width {
                if hop > 0 {
                    k = self.cells[k as usize].right;
                }
                if is_cancelled(cancel) {
                    return Err(Cancelled);
                }
                for &pos in &self.cells[k as usize].entries {
                    if seen.insert(pos) && self.entries[pos as usize].matches(b, t) {
                        out.push(pos);
                    }
                }
            }
        }
        Ok(out)
    }

    fn encode_structure(&self, w: &mut Writer) {
        w.f64(self.cell_deg);
        w.i64(self.row0);
        w.i64(self.col0);
        w.u32(self.nrows as u32);
        w.u32(self.ncols as u32);
        for c in &self.cells {
            w.u32(c.right);
            w.u32(c.down);
            w.u32_list(&c.entries);
        }
    }
}
