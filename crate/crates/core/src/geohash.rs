//! Base32 geohash encoding, decoding and box covers.
//!
//! A code of precision `k` carries `5k` bits that alternate longitude and
//! latitude, longitude first. Each bit halves the remaining range and is 1
//! when the coordinate lies in the upper half (`v >= mid`). Bits are packed
//! five at a time into the alphabet below.
//!
//! Internally a code is handled as a pair of cell indices `(i, j)` on the
//! uniform grid of `2^lon_bits x 2^lat_bits` cells. All cell edges are
//! dyadic fractions of the world range, so they are exact in `f64`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, GeoPoint, MAX_LAT, MAX_LON, MIN_LAT, MIN_LON};

pub const ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";
pub const MAX_PRECISION: usize = 12;

/// Upper bound on the number of cells `geohash_cover` will enumerate.
pub const MAX_COVER_CELLS: u64 = 1 << 22;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GeoHashCode(String);

impl GeoHashCode {
    pub fn parse(code: &str) -> Result<Self> {
        let bad = |reason: &str| Error::GeohashDecode {
            code: code.to_owned(),
            reason: reason.to_owned(),
        };
        if code.is_empty() {
            return Err(bad("empty code"));
        }
        if code.len() > MAX_PRECISION {
            return Err(bad("longer than 12 characters"));
        }
        if let Some(c) = code.bytes().find(|b| symbol_value(*b).is_none()) {
            return Err(bad(&format!("character {:?} not in alphabet", c as char)));
        }
        Ok(Self(code.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn precision(&self) -> usize {
        self.0.len()
    }

    pub fn is_prefix_of(&self, other: &GeoHashCode) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl TryFrom<String> for GeoHashCode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        GeoHashCode::parse(&s)
    }
}

impl From<GeoHashCode> for String {
    fn from(c: GeoHashCode) -> String {
        c.0
    }
}

impl fmt::Display for GeoHashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn symbol_value(b: u8) -> Option<u8> {
    ALPHABET.iter().position(|&a| a == b).map(|p| p as u8)
}

fn check_precision(precision: usize) -> Result<()> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(Error::InvalidArgument(format!(
            "geohash precision {precision} outside 1..=12"
        )));
    }
    Ok(())
}

/// Number of longitude and latitude bits at a given precision.
#[inline]
pub(crate) fn axis_bits(precision: usize) -> (u32, u32) {
    let total = 5 * precision as u32;
    (total.div_ceil(2), total / 2)
}

/// Index of the cell owning `v` after `bits` bisections of `[lo, hi]`.
fn axis_index(v: f64, mut lo: f64, mut hi: f64, bits: u32) -> u64 {
    let mut idx = 0u64;
    for _ in 0..bits {
        let mid = (lo + hi) / 2.0;
        idx <<= 1;
        if v >= mid {
            idx |= 1;
            lo = mid;
        } else {
            hi = mid;
        }
    }
    idx
}

#[inline]
fn cell_edge(lo: f64, hi: f64, bits: u32, idx: u64) -> f64 {
    lo + (hi - lo) * (idx as f64) / ((1u64 << bits) as f64)
}

/// Interleave cell indices into a code string.
pub(crate) fn code_from_cell(i: u64, j: u64, precision: usize) -> String {
    let (lon_bits, lat_bits) = axis_bits(precision);
    let mut out = String::with_capacity(precision);
    let (mut li, mut lj) = (lon_bits, lat_bits);
    let mut group = 0u8;
    for bit in 0..(5 * precision as u32) {
        let b = if bit.is_multiple_of(2) {
            li -= 1;
            (i >> li) & 1
        } else {
            lj -= 1;
            (j >> lj) & 1
        };
        group = (group << 1) | b as u8;
        if bit % 5 == 4 {
            out.push(ALPHABET[group as usize] as char);
            group = 0;
        }
    }
    out
}

/// The `5 * precision` code bits as an integer. Ordering of these keys
/// matches lexicographic ordering of the code strings, and every code with
/// a given prefix occupies one contiguous key range.
pub(crate) fn interleave(i: u64, j: u64, precision: usize) -> u64 {
    let (lon_bits, lat_bits) = axis_bits(precision);
    let (mut li, mut lj) = (lon_bits, lat_bits);
    let mut out = 0u64;
    for bit in 0..(5 * precision as u32) {
        let b = if bit.is_multiple_of(2) {
            li -= 1;
            (i >> li) & 1
        } else {
            lj -= 1;
            (j >> lj) & 1
        };
        out = (out << 1) | b;
    }
    out
}

pub(crate) fn code_from_bits(bits: u64, precision: usize) -> String {
    (0..precision)
        .rev()
        .map(|g| ALPHABET[((bits >> (5 * g)) & 0x1f) as usize] as char)
        .collect()
}

fn cell_from_code(code: &GeoHashCode) -> (u64, u64) {
    let (mut i, mut j) = (0u64, 0u64);
    let mut bit = 0u32;
    for b in code.0.bytes() {
        let v = symbol_value(b).expect("validated on construction");
        for k in (0..5).rev() {
            let set = ((v >> k) & 1) as u64;
            if bit.is_multiple_of(2) {
                i = (i << 1) | set;
            } else {
                j = (j << 1) | set;
            }
            bit += 1;
        }
    }
    (i, j)
}

pub(crate) fn cell_bbox(i: u64, j: u64, precision: usize) -> BoundingBox {
    let (lon_bits, lat_bits) = axis_bits(precision);
    BoundingBox::from_bounds_unchecked(
        cell_edge(MIN_LON, MAX_LON, lon_bits, i),
        cell_edge(MIN_LON, MAX_LON, lon_bits, i + 1),
        cell_edge(MIN_LAT, MAX_LAT, lat_bits, j),
        cell_edge(MIN_LAT, MAX_LAT, lat_bits, j + 1),
    )
}

pub fn geohash_encode(p: &GeoPoint, precision: usize) -> Result<GeoHashCode> {
    check_precision(precision)?;
    let (lon_bits, lat_bits) = axis_bits(precision);
    let i = axis_index(p.lon(), MIN_LON, MAX_LON, lon_bits);
    let j = axis_index(p.lat(), MIN_LAT, MAX_LAT, lat_bits);
    Ok(GeoHashCode(code_from_cell(i, j, precision)))
}

pub fn geohash_decode(code: &GeoHashCode) -> BoundingBox {
    let (i, j) = cell_from_code(code);
    cell_bbox(i, j, code.precision())
}

/// Parses and decodes in one step.
pub fn geohash_decode_str(code: &str) -> Result<BoundingBox> {
    Ok(geohash_decode(&GeoHashCode::parse(code)?))
}

/// Inclusive rectangle of cell indices at one precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CellRange {
    pub precision: usize,
    pub i_lo: u64,
    pub i_hi: u64,
    pub j_lo: u64,
    pub j_hi: u64,
}

impl CellRange {
    /// Cells sharing interior area with `b` (or, for degenerate boxes, the
    /// cells owning its points). This is the minimal cover.
    pub fn minimal(b: &BoundingBox, precision: usize) -> Self {
        let (lon_bits, lat_bits) = axis_bits(precision);
        let (i_lo, i_hi) = minimal_axis(b.min_lon(), b.max_lon(), MIN_LON, MAX_LON, lon_bits);
        let (j_lo, j_hi) = minimal_axis(b.min_lat(), b.max_lat(), MIN_LAT, MAX_LAT, lat_bits);
        Self {
            precision,
            i_lo,
            i_hi,
            j_lo,
            j_hi,
        }
    }

    /// Every cell whose closed box intersects `b`, boundary contact included.
    pub fn closed(b: &BoundingBox, precision: usize) -> Self {
        let (lon_bits, lat_bits) = axis_bits(precision);
        let (i_lo, i_hi) = closed_axis(b.min_lon(), b.max_lon(), MIN_LON, MAX_LON, lon_bits);
        let (j_lo, j_hi) = closed_axis(b.min_lat(), b.max_lat(), MIN_LAT, MAX_LAT, lat_bits);
        Self {
            precision,
            i_lo,
            i_hi,
            j_lo,
            j_hi,
        }
    }

    pub fn count(&self) -> u64 {
        (self.i_hi - self.i_lo + 1).saturating_mul(self.j_hi - self.j_lo + 1)
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        (self.i_lo..=self.i_hi).flat_map(move |i| {
            (self.j_lo..=self.j_hi).map(move |j| interleave(i, j, self.precision))
        })
    }

    pub fn codes(&self) -> impl Iterator<Item = String> + '_ {
        (self.i_lo..=self.i_hi).flat_map(move |i| {
            (self.j_lo..=self.j_hi).map(move |j| code_from_cell(i, j, self.precision))
        })
    }
}

fn minimal_axis(min: f64, max: f64, lo: f64, hi: f64, bits: u32) -> (u64, u64) {
    let a = axis_index(min, lo, hi, bits);
    let mut b = axis_index(max, lo, hi, bits);
    // max sitting exactly on the lower edge of its owner cell adds no area
    if b > a && cell_edge(lo, hi, bits, b) == max {
        b -= 1;
    }
    (a, b)
}

fn closed_axis(min: f64, max: f64, lo: f64, hi: f64, bits: u32) -> (u64, u64) {
    let mut a = axis_index(min, lo, hi, bits);
    let b = axis_index(max, lo, hi, bits);
    // min on a cell edge also touches the cell to its left/south
    if a > 0 && cell_edge(lo, hi, bits, a) == min {
        a -= 1;
    }
    (a, b)
}

/// Minimal set of precision-`precision` cells whose union covers `b`.
///
/// Cells that merely touch `b` along an edge are not part of the minimal
/// cover; they add no area.
pub fn geohash_cover(b: &BoundingBox, precision: usize) -> Result<BTreeSet<GeoHashCode>> {
    check_precision(precision)?;
    let range = CellRange::minimal(b, precision);
    if range.count() > MAX_COVER_CELLS {
        return Err(Error::InvalidArgument(format!(
            "cover of {b} at precision {precision} needs {} cells",
            range.count()
        )));
    }
    Ok(range.codes().map(GeoHashCode).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference encoder working on an explicit bit vector, written
    /// independently of the cell-index path above.
    fn oracle_encode(lat: f64, lon: f64, precision: usize) -> String {
        let mut bits = Vec::with_capacity(precision * 5);
        let (mut lon_r, mut lat_r) = ((-180.0f64, 180.0f64), (-90.0f64, 90.0f64));
        for n in 0..precision * 5 {
            let (r, v) = if n % 2 == 0 { (&mut lon_r, lon) } else { (&mut lat_r, lat) };
            let mid = (r.0 + r.1) / 2.0;
            if v >= mid {
                bits.push(1u8);
                r.0 = mid;
            } else {
                bits.push(0u8);
                r.1 = mid;
            }
        }
        bits.chunks(5)
            .map(|c| {
                let idx = c.iter().fold(0usize, |acc, b| acc * 2 + *b as usize);
                "0123456789bcdefghjkmnpqrstuvwxyz".as_bytes()[idx] as char
            })
            .collect()
    }

    #[test]
    fn oracle_reference_values() {
        assert_eq!(oracle_encode(0.0, 0.0, 1), "s");
        assert_eq!(oracle_encode(57.64911, 10.40744, 11), "u4pruydqqvj");
    }

    #[test]
    fn encode_known_points() {
        let origin = GeoPoint::new(0.0, 0.0).unwrap();
        assert_eq!(geohash_encode(&origin, 1).unwrap().as_str(), "s");
        let p = GeoPoint::new(10.40744, 57.64911).unwrap();
        assert_eq!(geohash_encode(&p, 11).unwrap().as_str(), "u4pruydqqvj");
    }

    #[test]
    fn encode_rejects_bad_precision() {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        assert!(matches!(geohash_encode(&p, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(geohash_encode(&p, 13), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn decode_s() {
        let b = geohash_decode_str("s").unwrap();
        assert_eq!(b, BoundingBox::new(0.0, 45.0, 0.0, 45.0).unwrap());
    }

    #[test]
    fn decode_rejects_bad_codes() {
        assert!(matches!(geohash_decode_str(""), Err(Error::GeohashDecode { .. })));
        assert!(matches!(geohash_decode_str("sa"), Err(Error::GeohashDecode { .. })));
        assert!(matches!(geohash_decode_str("S"), Err(Error::GeohashDecode { .. })));
        assert!(geohash_decode_str("0123456789bcd").is_err());
    }

    #[test]
    fn cover_whole_world_and_exact_cell() {
        let all = geohash_cover(&BoundingBox::WORLD, 1).unwrap();
        assert_eq!(all.len(), 32);
        let s = geohash_decode_str("s").unwrap();
        let c = geohash_cover(&s, 1).unwrap();
        assert_eq!(c.into_iter().map(String::from).collect::<Vec<_>>(), vec!["s"]);
    }

    #[test]
    fn packed_keys_match_strings() {
        let p = GeoPoint::new(116.39, 39.91).unwrap();
        for k in 1..=12 {
            let code = geohash_encode(&p, k).unwrap();
            let (i, j) = cell_from_code(&code);
            assert_eq!(code_from_bits(interleave(i, j, k), k), code.as_str());
            assert_eq!(code_from_cell(i, j, k), code.as_str());
        }
    }

    #[test]
    fn closed_range_includes_touching_cells() {
        let s = geohash_decode_str("s").unwrap();
        let r = CellRange::closed(&s, 1);
        // 3x3 neighbourhood around "s"
        assert_eq!(r.count(), 9);
    }

    proptest! {
        #[test]
        fn encode_matches_oracle(lon in -180.0..=180.0f64, lat in -90.0..=90.0f64, k in 1usize..=12) {
            let p = GeoPoint::new(lon, lat).unwrap();
            let code = geohash_encode(&p, k).unwrap();
            prop_assert_eq!(code.as_str(), oracle_encode(lat, lon, k));
        }

        #[test]
        fn decode_center_roundtrip(lon in -180.0..=180.0f64, lat in -90.0..=90.0f64, k in 1usize..=12) {
            let p = GeoPoint::new(lon, lat).unwrap();
            let code = geohash_encode(&p, k).unwrap();
            let cell = geohash_decode(&code);
            prop_assert!(cell.contains_point(&p));
            prop_assert_eq!(geohash_encode(&cell.center(), k).unwrap(), code);
        }

        #[test]
        fn prefix_chain_and_nesting(lon in -180.0..=180.0f64, lat in -90.0..=90.0f64) {
            let p = GeoPoint::new(lon, lat).unwrap();
            let mut prev: Option<GeoHashCode> = None;
            for k in 1..=12 {
                let c = geohash_encode(&p, k).unwrap();
                if let Some(pc) = &prev {
                    prop_assert!(pc.is_prefix_of(&c));
                    prop_assert!(geohash_decode(pc).contains(&geohash_decode(&c)));
                }
                prev = Some(c);
            }
        }
    }
}
