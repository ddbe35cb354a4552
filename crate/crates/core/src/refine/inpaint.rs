//! Hole filling for masked image regions.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{Error, Result};
use crate::imageio::{load_rgb, save_gray, save_rgb, to_u8};
use crate::projection::FeatureImage;

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl BinaryImage {
    pub fn empty(width: usize, height: usize) -> Self {
        BinaryImage {
            width,
            height,
            pixels: vec![false; width * height],
        }
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| if p { 255 } else { 0 }).collect()
    }
}

/// Fills the masked foreground pixels of an image.
pub trait Inpainter {
    /// `depth` holds the per-pixel distance score in `[0, 1]` (0 on
    /// background). Only masked foreground pixels of the result are used.
    fn inpaint(&self, image: &FeatureImage, mask: &BinaryImage, depth: &[f64], view: usize) -> Result<FeatureImage>;
}

/// Discrete Laplace fill: every unknown pixel becomes the mean of its
/// 4-connected foreground neighbors. Solved by over-relaxed Gauss-Seidel from
/// an initial guess equal to the mean of the known pixels bordering the hole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicInpainter {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for HarmonicInpainter {
    fn default() -> Self {
        HarmonicInpainter {
            tolerance: 1e-4,
            max_sweeps: 20_000,
        }
    }
}

const RELAXATION: f64 = 1.8;

impl Inpainter for HarmonicInpainter {
    fn inpaint(&self, image: &FeatureImage, mask: &BinaryImage, _depth: &[f64], _view: usize) -> Result<FeatureImage> {
        if mask.width != image.width || mask.height != image.height {
            return Err(Error::invalid("mask does not match image"));
        }
        let (w, h, ch) = (image.width, image.height, image.channels);
        let unknown: Vec<bool> = (0..w * h).map(|i| mask.pixels[i] && image.foreground[i]).collect();
        let neighbors = |i: usize| {
            let (x, y) = (i % w, i / w);
            [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ]
            .into_iter()
            .flatten()
            .filter(|&j| image.foreground[j])
        };
        let mut out = image.clone();
        let order: Vec<usize> = (0..w * h).filter(|&i| unknown[i]).collect();
        if order.is_empty() {
            return Ok(out);
        }

        let mut border = vec![0.0; ch];
        let mut border_count = 0usize;
        for i in 0..w * h {
            if image.foreground[i] && !unknown[i] && neighbors(i).any(|j| unknown[j]) {
                border.iter_mut().zip(image.pixel(i)).for_each(|(b, v)| *b += v);
                border_count += 1;
            }
        }
        if border_count > 0 {
            border.iter_mut().for_each(|b| *b /= border_count as f64);
            for &i in &order {
                out.pixel_mut(i).copy_from_slice(&border);
            }
        }

        let mut acc = vec![0.0; ch];
        for _ in 0..self.max_sweeps {
            let mut change: f64 = 0.0;
            for &i in &order {
                acc.fill(0.0);
                let mut n = 0;
                for j in neighbors(i) {
                    acc.iter_mut().zip(out.pixel(j)).for_each(|(a, v)| *a += v);
                    n += 1;
                }
                if n == 0 {
                    continue;
                }
                let px = out.pixel_mut(i);
                for c in 0..ch {
                    let delta = RELAXATION * (acc[c] / n as f64 - px[c]);
                    px[c] += delta;
                    change = change.max(delta.abs());
                }
            }
            if change < self.tolerance {
                return Ok(out);
            }
        }
        log::warn!("harmonic fill stopped after {} sweeps without converging", self.max_sweeps);
        Ok(out)
    }
}

/// Runs `program image.png mask.png depth.png output.png` in a per-view
/// scratch directory and reads back `output.png`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalInpainter {
    pub program: PathBuf,
    pub scratch: PathBuf,
}

impl ExternalInpainter {
    fn view_dir(&self, view: usize) -> PathBuf {
        self.scratch.join(format!("view{view}"))
    }
}

fn run(program: &Path, dir: &Path) -> Result<()> {
    let status = Command::new(program)
        .current_dir(dir)
        .args(["image.png", "mask.png", "depth.png", "output.png"])
        .status()
        .map_err(|e| Error::Inpainter(format!("cannot run {}: {e}", program.display())))?;
    if status.success() {
        Ok(())
    } else {
        Err(Error::Inpainter(format!("{} exited with {status}", program.display())))
    }
}

impl Inpainter for ExternalInpainter {
    fn inpaint(&self, image: &FeatureImage, mask: &BinaryImage, depth: &[f64], view: usize) -> Result<FeatureImage> {
        let dir = self.view_dir(view);
        std::fs::create_dir_all(&dir)?;
        save_rgb(image, &dir.join("image.png"))?;
        save_gray(mask.width, mask.height, &mask.to_u8(), &dir.join("mask.png"))?;
        let depth_u8: Vec<u8> = depth.iter().map(|&d| to_u8(d)).collect();
        save_gray(image.width, image.height, &depth_u8, &dir.join("depth.png"))?;
        run(&self.program, &dir)?;
        let filled = load_rgb(&dir.join("output.png"))
            .map_err(|e| Error::Inpainter(format!("unreadable output.png: {e}")))?;
        if filled.width != image.width || filled.height != image.height {
            return Err(Error::Inpainter(format!(
                "output is {}×{}, expected {}×{}",
                filled.width, filled.height, image.width, image.height
            )));
        }
        let mut out = image.clone();
        for i in 0..out.pixel_count() {
            if mask.pixels[i] && out.foreground[i] {
                out.pixel_mut(i)[..3].copy_from_slice(filled.pixel(i));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, value: f64) -> FeatureImage {
        let mut img = FeatureImage::filled(w, h, 3, value);
        img.foreground = vec![true; w * h];
        img
    }

    #[test]
    fn constant_boundary_fills_constant() {
        let mut img = plane(20, 20, 0.3);
        let mut mask = BinaryImage::empty(20, 20);
        for y in 5..15 {
            for x in 4..16 {
                mask.pixels[y * 20 + x] = true;
                img.pixel_mut(y * 20 + x).fill(0.9);
            }
        }
        let out = HarmonicInpainter::default().inpaint(&img, &mask, &[], 0).unwrap();
        assert!(out.data.iter().all(|v| (v - 0.3).abs() < 1e-3));
    }

    #[test]
    fn linear_boundary_fills_linear() {
        let (w, h) = (16, 12);
        let mut img = plane(w, h, 0.0);
        for i in 0..w * h {
            img.pixel_mut(i).fill((i % w) as f64 / w as f64);
        }
        let truth = img.clone();
        let mut mask = BinaryImage::empty(w, h);
        for y in 3..9 {
            for x in 3..13 {
                mask.pixels[y * w + x] = true;
                img.pixel_mut(y * w + x).fill(0.0);
            }
        }
        let out = HarmonicInpainter::default().inpaint(&img, &mask, &[], 0).unwrap();
        for (a, b) in out.data.iter().zip(&truth.data) {
            assert!((a - b).abs() < 2e-3);
        }
    }

    #[test]
    fn background_and_unmasked_pixels_untouched() {
        let mut img = plane(6, 6, 0.5);
        img.foreground[0] = false;
        img.data[0..3].fill(0.0);
        let mut mask = BinaryImage::empty(6, 6);
        mask.pixels[0] = true;
        mask.pixels[14] = true;
        img.pixel_mut(14).fill(1.0);
        let out = HarmonicInpainter::default().inpaint(&img, &mask, &[], 0).unwrap();
        assert_eq!(&out.data[0..3], &[0.0; 3]);
        for i in 1..36 {
            let want = if i == 14 { 0.5 } else { img.pixel(i)[0] };
            assert!((out.pixel(i)[0] - want).abs() < 1e-3);
        }
    }

    #[test]
    fn missing_program_is_inpainter_error() {
        let dir = tempfile::tempdir().unwrap();
        let ext = ExternalInpainter {
            program: dir.path().join("no-such-program"),
            scratch: dir.path().to_path_buf(),
        };
        let img = plane(4, 4, 0.5);
        let err = ext.inpaint(&img, &BinaryImage::empty(4, 4), &[0.0; 16], 2).unwrap_err();
        assert!(matches!(err, Error::Inpainter(_)));
        assert!(dir.path().join("view2/mask.png").exists());
    }

    #[cfg(unix)]
    #[test]
    fn external_program_round_trip() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fill.sh");
        // Returns the depth map as the filled image.
        std::fs::write(&script, "#!/bin/sh\ncp \"$3\" \"$4\"\n").unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let ext = ExternalInpainter {
            program: script,
            scratch: dir.path().join("scratch"),
        };
        let img = plane(4, 4, 0.2);
        let mut mask = BinaryImage::empty(4, 4);
        mask.pixels[5] = true;
        let depth = vec![1.0; 16];
        let out = ext.inpaint(&img, &mask, &depth, 0).unwrap();
        assert_eq!(out.pixel(5), &[1.0, 1.0, 1.0]);
        assert_eq!(out.pixel(6), &[0.2, 0.2, 0.2]);
    }
}
