//! Minimal line plots rasterized straight into an RGB image.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::{io_err, CliError};

pub const COLORS: [[u8; 3]; 3] = [[40, 90, 200], [30, 160, 60], [220, 60, 40]];

const MARGIN: i64 = 40;

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3], thick: bool) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        if thick {
            put(img, x, y + 1, c);
            put(img, x + 1, y, c);
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

/// Plots each series against its index. `marker` draws a dashed vertical
/// line at that index (the end of the fusion window).
pub fn line_plot(series: &[(&[f64], [u8; 3])], marker: Option<usize>, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let n = series.iter().map(|(s, _)| s.len()).max().unwrap_or(0);
    let values = series.iter().flat_map(|(s, _)| s.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0), lo.max(0.0) + 1.0) };
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let (w, h) = (width as i64, height as i64);
    let px = |i: f64| MARGIN + ((w - 2 * MARGIN) as f64 * i / (n.max(2) - 1) as f64).round() as i64;
    let py = |v: f64| h - MARGIN - ((h - 2 * MARGIN) as f64 * (v - lo) / (hi - lo)).round() as i64;

    let grid = [225, 225, 225];
    for k in 0..=4 {
        let y = MARGIN + (h - 2 * MARGIN) * k / 4;
        line(&mut img, (MARGIN, y), (w - MARGIN, y), grid, false);
    }
    let axis = [60, 60, 60];
    line(&mut img, (MARGIN, MARGIN), (MARGIN, h - MARGIN), axis, false);
    line(&mut img, (MARGIN, h - MARGIN), (w - MARGIN, h - MARGIN), axis, false);
    for i in (0..n).step_by(5) {
        let x = px(i as f64);
        line(&mut img, (x, h - MARGIN), (x, h - MARGIN + 5), axis, false);
    }
    if let Some(m) = marker.filter(|&m| m < n) {
        let x = px(m as f64 - 0.5);
        let mut y = MARGIN;
        while y < h - MARGIN {
            line(&mut img, (x, y), (x, (y + 5).min(h - MARGIN)), [150, 150, 150], false);
            y += 10;
        }
    }
    for (s, c) in series {
        let pts: Vec<(i64, i64)> = s.iter().enumerate().map(|(i, &v)| (px(i as f64), py(v))).collect();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], *c, true);
        }
    }
    for (k, (_, c)) in series.iter().enumerate() {
        let y = MARGIN / 2 - 4;
        let x = w - MARGIN - 20 * (series.len() - k) as i64;
        for dy in 0..10 {
            line(&mut img, (x, y + dy), (x + 12, y + dy), *c, false);
        }
    }
    img
}

pub fn save_plot(img: &RgbImage, path: &Path) -> Result<(), CliError> {
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(source) => io_err(path)(source),
        other => CliError::Core(other.into()),
    })
}
