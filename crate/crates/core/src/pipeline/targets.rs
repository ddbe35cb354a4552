//! Procedural surface textures used as denoising targets, and the fixed
//! latent-to-RGB decoder.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{FragmentBuffer, Mesh};
use crate::math::Vec3;
use crate::projection::FeatureImage;

/// A feature field over the normalized volume, sampled at surface points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetField {
    Checker { cells: u32 },
    Gradient,
    Noise { frequency: f64, seed: u64 },
    Constant(f64),
}

impl Default for TargetField {
    fn default() -> Self {
        TargetField::Noise { frequency: 1.5, seed: 7 }
    }
}

impl FromStr for TargetField {
    type Err = Error;

    /// `checker[:cells]`, `gradient`, `noise[:frequency[:seed]]`, `constant[:value]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::config(format!("invalid target spec `{s}`"));
        let num = |i: usize, default: f64| -> Result<f64> {
            args.get(i).map_or(Ok(default), |a| a.parse().map_err(|_| bad()))
        };
        let field = match kind {
            "checker" => TargetField::Checker { cells: num(0, 4.0)? as u32 },
            "gradient" => TargetField::Gradient,
            "noise" => TargetField::Noise {
                frequency: num(0, 1.5)?,
                seed: num(1, 7.0)? as u64,
            },
            "constant" => TargetField::Constant(num(0, 0.5)?),
            _ => return Err(bad()),
        };
        let max_args = match field {
            TargetField::Gradient => 0,
            TargetField::Noise { .. } => 2,
            _ => 1,
        };
        if args.len() > max_args {
            return Err(bad());
        }
        match field {
            TargetField::Checker { cells: 0 } => Err(bad()),
            TargetField::Noise { frequency, .. } if !(frequency > 0.0) => Err(bad()),
            _ => Ok(field),
        }
    }
}

/// Fixed per-channel directions so channels are not copies of each other.
const DIRECTIONS: [[f64; 3]; 4] = [[1.0, 0.3, 0.0], [0.0, 1.0, 0.4], [0.5, 0.0, 1.0], [0.6, -0.6, 0.5]];

fn lattice(seed: u64, channel: usize, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed ^ (channel as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for k in [x, y, z] {
        h = (h ^ k as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 29;
    }
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 32;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Trilinear value noise with smoothstep fade, range `[-1, 1]`.
fn value_noise(p: Vec3, seed: u64, channel: usize) -> f64 {
    let fade = |t: f64| t * t * (3.0 - 2.0 * t);
    let base = [p.x.floor(), p.y.floor(), p.z.floor()];
    let f = [fade(p.x - base[0]), fade(p.y - base[1]), fade(p.z - base[2])];
    let b = base.map(|v| v as i64);
    let mut acc = 0.0;
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let w: f64 = (0..3).map(|a| if o[a] == 1 { f[a] } else { 1.0 - f[a] }).product();
        acc += w * lattice(seed, channel, b[0] + o[0] as i64, b[1] + o[1] as i64, b[2] + o[2] as i64);
    }
    acc
}

impl TargetField {
    pub fn evaluate(&self, p: Vec3, channel: usize) -> f64 {
        let d = DIRECTIONS[channel % DIRECTIONS.len()];
        let dir = Vec3::from_array(d) / Vec3::from_array(d).norm();
        match *self {
            TargetField::Constant(v) => v,
            TargetField::Gradient => 1.2 * p.dot(dir) / 3f64.sqrt(),
            TargetField::Checker { cells } => {
                let k = cells as f64 * 0.5;
                let idx = ((p.x + 1.0) * k).floor() + ((p.y + 1.0) * k).floor() + ((p.z + 1.0) * k).floor() + channel as f64;
                if idx.rem_euclid(2.0) < 1.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            TargetField::Noise { frequency, seed } => {
                let q = p * frequency + dir * 0.37;
                1.5 * value_noise(q, seed, channel)
            }
        }
    }

    /// Per-view target planes: foreground pixels sample the field at their
    /// surface point, background is zero.
    pub fn render(&self, mesh: &Mesh, frags: &[FragmentBuffer], channels: usize) -> Vec<FeatureImage> {
        frags
            .iter()
            .map(|frag| {
                let mut img = FeatureImage::zeros(frag.width, frag.height, channels).with_foreground_of(frag);
                for (i, face, b) in frag.fragments() {
                    let p = mesh.interpolate_position(face, b);
                    for (c, v) in img.pixel_mut(i).iter_mut().enumerate() {
                        *v = self.evaluate(p, c);
                    }
                }
                img
            })
            .collect()
    }
}

/// Latent value to display intensity: `clamp(0.5 + 0.25 z)`.
pub fn latent_to_rgb(z: f64) -> f64 {
    (0.5 + 0.25 * z).clamp(0.0, 1.0)
}

/// Decodes the first three latent channels to RGB at `scale`× resolution.
///
/// Each output pixel samples the latent bilinearly using only foreground
/// latent pixels, falling back to the nearest foreground latent pixel, so
/// silhouettes do not bleed background into the colors. The output carries no
/// foreground mask.
pub fn decode_latent(latent: &FeatureImage, scale: usize) -> Result<FeatureImage> {
    if latent.channels < 3 {
        return Err(Error::invalid("decoding needs at least 3 latent channels"));
    }
    if scale == 0 {
        return Err(Error::config("image_scale must be ≥ 1"));
    }
    let (lw, lh, ch) = (latent.width, latent.height, latent.channels);
    let (w, h) = (lw * scale, lh * scale);
    let mut out = FeatureImage::zeros(w, h, 3);
    let any_fg = latent.foreground.iter().any(|&f| f);
    for y in 0..h {
        for x in 0..w {
            // Output pixel center in latent pixel units, relative to latent centers.
            let fx = (x as f64 + 0.5) / scale as f64 - 0.5;
            let fy = (y as f64 + 0.5) / scale as f64 - 0.5;
            let (x0, y0) = (fx.floor(), fy.floor());
            let (tx, ty) = (fx - x0, fy - y0);
            let mut acc = [0.0; 3];
            let mut total = 0.0;
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let (sx, sy) = (x0 as i64 + dx, y0 as i64 + dy);
                if sx < 0 || sy < 0 || sx >= lw as i64 || sy >= lh as i64 {
                    continue;
                }
                let i = sy as usize * lw + sx as usize;
                if any_fg && !latent.foreground[i] {
                    continue;
                }
                let w = if dx == 1 { tx } else { 1.0 - tx } * if dy == 1 { ty } else { 1.0 - ty };
                if w <= 0.0 {
                    continue;
                }
                for c in 0..3 {
                    acc[c] += w * latent.data[i * ch + c];
                }
                total += w;
            }
            let value = if total > 0.0 {
                acc.map(|a| a / total)
            } else {
                nearest_foreground(latent, fx, fy)
            };
            let o = (y * w + x) * 3;
            for c in 0..3 {
                out.data[o + c] = latent_to_rgb(value[c]);
            }
        }
    }
    Ok(out)
}

fn nearest_foreground(latent: &FeatureImage, fx: f64, fy: f64) -> [f64; 3] {
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..latent.pixel_count() {
        if latent.foreground[i] {
            let (x, y) = ((i % latent.width) as f64, (i / latent.width) as f64);
            let d = (x - fx).powi(2) + (y - fy).powi(2);
            if d < best.0 {
                let p = latent.pixel(i);
                best = (d, [p[0], p[1], p[2]]);
            }
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::icosphere;
    use crate::geometry::{rasterize, Camera};

    #[test]
    fn parse_specs() {
        assert_eq!("checker:6".parse::<TargetField>().unwrap(), TargetField::Checker { cells: 6 });
        assert_eq!("gradient".parse::<TargetField>().unwrap(), TargetField::Gradient);
        assert_eq!("constant:0.25".parse::<TargetField>().unwrap(), TargetField::Constant(0.25));
        assert_eq!("noise:2:3".parse::<TargetField>().unwrap(), TargetField::Noise { frequency: 2.0, seed: 3 });
        for bad in ["", "plaid", "checker:x", "checker:0", "gradient:1", "noise:-1"] {
            assert!(bad.parse::<TargetField>().is_err(), "{bad}");
        }
    }

    #[test]
    fn fields_are_bounded_and_continuous() {
        let noise = TargetField::default();
        let p = Vec3::new(0.3, -0.2, 0.5);
        let q = p + Vec3::new(1e-6, 0.0, 0.0);
        for c in 0..4 {
            assert!((noise.evaluate(p, c) - noise.evaluate(q, c)).abs() < 1e-4);
            assert!(noise.evaluate(p, c).abs() <= 1.5);
            assert!(TargetField::Gradient.evaluate(p, c).abs() <= 1.2);
        }
        assert_ne!(noise.evaluate(p, 0), noise.evaluate(p, 1));
    }

    #[test]
    fn views_agree_on_shared_surface_points() {
        let mesh = icosphere(2);
        let cams = [0.0, 30.0].map(|a| Camera::new(a, 10.0, 2.5, 60.0, (16, 16)).unwrap());
        let frags: Vec<_> = cams.iter().map(|c| rasterize(&mesh, c)).collect();
        let imgs = TargetField::Constant(0.8).render(&mesh, &frags, 4);
        for (img, frag) in imgs.iter().zip(&frags) {
            for i in 0..frag.len() {
                let want = if frag.is_foreground(i) { 0.8 } else { 0.0 };
                assert!(img.pixel(i).iter().all(|&v| v == want));
            }
        }
    }

    #[test]
    fn decode_constant_and_scale() {
        let mut latent = FeatureImage::filled(4, 4, 4, 1.0);
        latent.foreground = vec![true; 16];
        latent.foreground[0] = false;
        latent.data[0..4].fill(-10.0);
        let rgb = decode_latent(&latent, 4).unwrap();
        assert_eq!((rgb.width, rgb.height, rgb.channels), (16, 16, 3));
        assert!(rgb.data.iter().all(|&v| (v - 0.75).abs() < 1e-12));
        assert!(decode_latent(&FeatureImage::zeros(2, 2, 2), 2).is_err());
        assert_eq!(latent_to_rgb(10.0), 1.0);
        assert_eq!(latent_to_rgb(-10.0), 0.0);
    }
}
