//! Time-frequency matrix to fixed-size RGB image, and binary PPM I/O.
//!
//! The pipeline is: dB compression relative to the matrix maximum, flip so
//! the lowest channel is the bottom row, bilinear resize, then a closed-form
//! jet-like colormap. Every step is deterministic so images are bit-exact.

use std::path::Path;

use ndarray::Array2;

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::gammatone::Gammatonegram;

pub const DEFAULT_FLOOR_DB: f64 = -80.0;
pub const EXPORT_SIZE: usize = 227;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first, R,G,B per pixel.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} bytes for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Anything that can be rendered: a channels-by-frames magnitude matrix
/// whose row 0 is the lowest frequency.
pub trait TimeFrequency {
    fn magnitudes(&self) -> &Array2<f64>;
}

impl TimeFrequency for Gammatonegram {
    fn magnitudes(&self) -> &Array2<f64> {
        &self.energies
    }
}

impl TimeFrequency for Spectrogram {
    fn magnitudes(&self) -> &Array2<f64> {
        &self.mags
    }
}

impl TimeFrequency for Array2<f64> {
    fn magnitudes(&self) -> &Array2<f64> {
        self
    }
}

/// `20 log10(m / max)` clamped to `[floor_db, 0]` and mapped linearly onto
/// [0, 1]. An all-zero matrix maps to all zeros.
pub fn power_to_db_norm(m: &Array2<f64>, floor_db: f64) -> Result<Array2<f64>> {
    if !(floor_db < 0.0) {
        return Err(Error::InvalidParameter(format!("dB floor {floor_db} must be negative")));
    }
    let max = m.iter().copied().fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return Ok(Array2::zeros(m.dim()));
    }
    Ok(m.mapv(|v| {
        let d = (20.0 * (v.max(1e-10) / max).log10()).clamp(floor_db, 0.0);
        (d - floor_db) / -floor_db
    }))
}

fn channel(v: f64, center: f64) -> u8 {
    (255.0 * (1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0)).round() as u8
}

/// Jet-like map from [0, 1] to RGB: dark blue, cyan, yellow, dark red.
pub fn colormap(v: f64) -> Result<[u8; 3]> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("colormap input {v} outside [0, 1]")));
    }
    Ok([channel(v, 3.0), channel(v, 2.0), channel(v, 1.0)])
}

/// Source sample positions and weights for one output axis, using the
/// pixel-center convention `(i + 0.5) * src / out - 0.5`, edge-clamped.
fn axis_taps(src: usize, out: usize) -> Vec<(usize, usize, f64)> {
    (0..out)
        .map(|i| {
            let x = ((i as f64 + 0.5) * src as f64 / out as f64 - 0.5).clamp(0.0, (src - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(src - 1);
            (x0, x1, x - x0 as f64)
        })
        .collect()
}

fn bilinear<F: Fn(usize, usize) -> f64>(
    src_w: usize,
    src_h: usize,
    out_w: usize,
    out_h: usize,
    sample: F,
    mut emit: impl FnMut(usize, usize, f64),
) {
    let xs = axis_taps(src_w, out_w);
    let ys = axis_taps(src_h, out_h);
    for (i, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (j, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = sample(y0, x0) * (1.0 - fx) + sample(y0, x1) * fx;
            let bottom = sample(y1, x0) * (1.0 - fx) + sample(y1, x1) * fx;
            emit(i, j, top * (1.0 - fy) + bottom * fy);
        }
    }
}

/// Bilinear resize of a real matrix (rows are the vertical axis).
pub fn resize_matrix(m: &Array2<f64>, out_w: usize, out_h: usize) -> Result<Array2<f64>> {
    let (h, w) = m.dim();
    if h == 0 || w == 0 {
        return Err(Error::InvalidParameter("cannot resize an empty matrix".into()));
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter("output size must be at least 1x1".into()));
    }
    let mut out = Array2::zeros((out_h, out_w));
    bilinear(w, h, out_w, out_h, |r, c| m[[r, c]], |r, c, v| out[[r, c]] = v);
    Ok(out)
}

/// Bilinear resize of an RGB image, channels independent, rounded half away
/// from zero.
pub fn resize_rgb(img: &RgbImage, out_w: usize, out_h: usize) -> Result<RgbImage> {
    if img.width == 0 || img.height == 0 {
        return Err(Error::InvalidParameter("cannot resize an empty image".into()));
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter("output size must be at least 1x1".into()));
    }
    let mut pixels = vec![0u8; out_w * out_h * 3];
    for ch in 0..3 {
        bilinear(
            img.width,
            img.height,
            out_w,
            out_h,
            |r, c| img.pixels[(r * img.width + c) * 3 + ch] as f64,
            |r, c, v| pixels[(r * out_w + c) * 3 + ch] = v.round().clamp(0.0, 255.0) as u8,
        );
    }
    RgbImage::new(out_w, out_h, pixels)
}

pub fn render_image(tf: &impl TimeFrequency, out_w: usize, out_h: usize, floor_db: f64) -> Result<RgbImage> {
    let m = tf.magnitudes();
    if m.is_empty() {
        return Err(Error::InvalidParameter("cannot render an empty matrix".into()));
    }
    let mut norm = power_to_db_norm(m, floor_db)?;
    norm.invert_axis(ndarray::Axis(0));
    let resized = resize_matrix(&norm, out_w, out_h)?;
    let mut pixels = Vec::with_capacity(out_w * out_h * 3);
    for &v in resized.iter() {
        pixels.extend_from_slice(&colormap(v.clamp(0.0, 1.0))?);
    }
    RgbImage::new(out_w, out_h, pixels)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_ppm(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_ppm(img))?;
    Ok(())
}

/// Parses the exact P6 layout produced by [`encode_ppm`].
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let bad = |why: &str| Error::InvalidParameter(format!("not a P6 image: {why}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        let end = bytes[pos..]
            .iter()
            .position(|b| b.is_ascii_whitespace())
            .ok_or_else(|| bad("truncated header"))?;
        fields.push(std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("non-ASCII header"))?);
        pos += end + 1;
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("unsupported magic or depth"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
    RgbImage::new(width, height, bytes[pos..].to_vec())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    decode_ppm(&std::fs::read(path)?)
}
