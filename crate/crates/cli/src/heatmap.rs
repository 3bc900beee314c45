//! 8-bit binary graymap (P5) rendering of `|field|`.

use std::io::Write;
use std::path::Path;

use polyloc::field::SpatialField;

/// Linear scaling used for an image: pixel = round(255 (v - min) / (max - min)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapScaling {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
}

/// Pixel rows of `|f|`. N = 1 gives a single row; N = 2 the full plane with rows along the
/// first axis; N = 3 the plane at index `slice` of the last axis (centered by default).
pub fn render(f: &SpatialField, slice: Option<usize>) -> (Vec<u8>, HeatmapScaling) {
    let spec = f.spec();
    let n = spec.samples_per_dim();
    let (width, height, offset) = match spec.dims() {
        1 => (n, 1, 0),
        2 => (n, n, 0),
        _ => (n, n, slice.unwrap_or(n / 2).min(n - 1)),
    };
    let stride = if spec.dims() == 3 { n } else { 1 };
    let values: Vec<f64> = (0..width * height)
        .map(|p| f.samples()[p * stride + offset].norm())
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let pixels = values
        .iter()
        .map(|v| if span > 0.0 { (255.0 * (v - min) / span).round() as u8 } else { 0 })
        .collect();
    (pixels, HeatmapScaling { width, height, min, max })
}

pub fn emit_heatmap(f: &SpatialField, slice: Option<usize>, path: &Path) -> std::io::Result<HeatmapScaling> {
    let (pixels, scaling) = render(f, slice);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "P5\n{} {}\n255\n", scaling.width, scaling.height)?;
    file.write_all(&pixels)?;
    file.flush()?;
    Ok(scaling)
}
