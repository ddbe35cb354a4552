//! 8-bit PNG exchange for feature planes and masks.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::projection::FeatureImage;

/// `[0, 1]` to `0..=255`, rounding to nearest.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_rgb(img: &FeatureImage, path: &Path) -> Result<()> {
    if img.channels < 3 {
        return Err(Error::invalid("RGB export needs at least 3 channels"));
    }
    let mut out = RgbImage::new(img.width as u32, img.height as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        let p = img.pixel(i);
        *px = Rgb([to_u8(p[0]), to_u8(p[1]), to_u8(p[2])]);
    }
    out.save(path)?;
    Ok(())
}

pub fn save_gray(width: usize, height: usize, values: &[u8], path: &Path) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, values.to_vec())
        .ok_or_else(|| Error::invalid("gray buffer does not match dimensions"))?;
    img.save(path)?;
    Ok(())
}

/// Loads any PNG as RGB in `[0, 1]`; the foreground mask is left empty.
pub fn load_rgb(path: &Path) -> Result<FeatureImage> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = FeatureImage::zeros(w, h, 3);
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out.data[i * 3 + c] = px[c] as f64 / 255.0;
        }
    }
    Ok(out)
}

pub fn load_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.pixels().map(|p: &Luma<u8>| p[0]).collect()))
}
