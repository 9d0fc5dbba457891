//! Heatmap rendering of mosaics as binary PGM.

use crate::bandmath::{InfoKind, Mosaic};

/// `P5` greymap, maxval 255. Data pixels map linearly from the kind's
/// display range onto 1..=255 (values outside are clamped); no-data is 0.
pub fn render_heatmap(m: &Mosaic, kind: InfoKind) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", m.cols, m.rows);
    let (lo, hi) = kind.display_range();
    let mut out = Vec::with_capacity(header.len() + m.values.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(m.values.iter().zip(&m.no_data).map(|(&v, &nd)| {
        if nd {
            0
        } else {
            let t = ((v as f64).clamp(lo, hi) - lo) / (hi - lo);
            (t * 254.0).round() as u8 + 1
        }
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::BoundingBox;

    fn mosaic(values: Vec<f32>, rows: usize, cols: usize) -> Mosaic {
        let no_data = values.iter().map(|v| v.is_nan()).collect();
        Mosaic {
            bbox: BoundingBox::new(0.0, 1.0, 0.0, 1.0).unwrap(),
            rows,
            cols,
            cell_lon: 1.0 / cols as f64,
            cell_lat: 1.0 / rows as f64,
            values,
            no_data,
            provenance: vec![],
        }
    }

    #[test]
    fn header_and_extremes() {
        let m = mosaic(vec![-1.0, 1.0, f32::NAN, 5.0, -3.0, 0.0], 2, 3);
        let img = render_heatmap(&m, InfoKind::Ndvi);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(&img[header.len()..], &[1, 255, 0, 255, 1, 128]);
    }

    #[test]
    fn rvi_range() {
        let m = mosaic(vec![0.0, 10.0, 5.0], 1, 3);
        let img = render_heatmap(&m, InfoKind::Rvi);
        assert_eq!(&img[img.len() - 3..], &[1, 255, 128]);
    }
}
