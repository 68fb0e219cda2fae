//! Grayscale slice renders and line plots as PNG, one pixel per cell.

use std::path::Path;

use gradcore::Tensor;
use image::{GrayImage, Luma};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slice {
    /// Map view at height `z`: columns x, rows y.
    Horizontal(usize),
    /// Section at `y`: columns x, rows z with the top layer first.
    Vertical(usize),
}

/// `-1` maps to black and `+1` to white.
pub fn gray(v: f64) -> u8 {
    (((v + 1.0) / 2.0) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Slice of channel `c` of a `[C, X, Y, Z]` sample.
pub fn slice_image(sample: &Tensor<f64>, c: usize, slice: Slice) -> GrayImage {
    let s = sample.shape();
    let (nx, ny, nz) = (s[1], s[2], s[3]);
    let at = |x: usize, y: usize, z: usize| sample.data()[((c * nx + x) * ny + y) * nz + z];
    match slice {
        Slice::Horizontal(z) => GrayImage::from_fn(nx as u32, ny as u32, |x, y| Luma([gray(at(x as usize, y as usize, z))])),
        Slice::Vertical(y) => {
            GrayImage::from_fn(nx as u32, nz as u32, |x, r| Luma([gray(at(x as usize, y, nz - 1 - r as usize))]))
        }
    }
}

/// Mid-height and mid-section renders of every channel, named
/// `{stem}_c{channel}_{h|v}.png`.
pub fn save_mid_slices(sample: &Tensor<f64>, dir: &Path, stem: &str) -> Result<()> {
    let s = sample.shape();
    for c in 0..s[0] {
        slice_image(sample, c, Slice::Horizontal(s[3] / 2)).save(dir.join(format!("{stem}_c{c}_h.png")))?;
        slice_image(sample, c, Slice::Vertical(s[2] / 2)).save(dir.join(format!("{stem}_c{c}_v.png")))?;
    }
    Ok(())
}

const PLOT_W: u32 = 480;
const PLOT_H: u32 = 240;
const MARGIN: u32 = 20;

fn line(img: &mut GrayImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, Luma([0]));
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Polyline of `(x, y)` points scaled to fill the plot area, with axes.
pub fn line_plot(points: &[(f64, f64)]) -> GrayImage {
    let mut img = GrayImage::from_pixel(PLOT_W, PLOT_H, Luma([255]));
    let (l, r, t, b) = (MARGIN as i64, (PLOT_W - MARGIN) as i64, MARGIN as i64, (PLOT_H - MARGIN) as i64);
    line(&mut img, (l, t), (l, b));
    line(&mut img, (l, b), (r, b));
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if finite.is_empty() {
        return img;
    }
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x_lo, x_hi) = span(&mut finite.iter().map(|p| p.0));
    let (y_lo, y_hi) = span(&mut finite.iter().map(|p| p.1));
    let px = |(x, y): (f64, f64)| {
        let u = ((x - x_lo) / (x_hi - x_lo) * (r - l) as f64).round() as i64 + l;
        let v = b - ((y - y_lo) / (y_hi - y_lo) * (b - t) as f64).round() as i64;
        (u, v)
    };
    let mut prev = px(finite[0]);
    line(&mut img, prev, prev);
    for &p in &finite[1..] {
        let q = px(p);
        line(&mut img, prev, q);
        prev = q;
    }
    img
}
