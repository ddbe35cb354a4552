//! Noise predictors driving the reverse process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::projection::FeatureImage;

use super::schedule::{sub_seed, NoiseSchedule};

/// Predicts the noise in per-view latents at step `t`.
pub trait NoisePredictor {
    /// `conditioning` carries one plane per view (the rendered depth score).
    fn predict(
        &self,
        latents: &[FeatureImage],
        t: usize,
        schedule: &NoiseSchedule,
        conditioning: &[FeatureImage],
    ) -> Result<Vec<FeatureImage>>;
}

/// Clean estimate implied by a noise prediction.
pub fn clean_estimate(x_t: &FeatureImage, eps: &FeatureImage, signal: f64) -> FeatureImage {
    let (s, n) = (signal.sqrt(), (1.0 - signal).sqrt());
    let mut out = x_t.clone();
    for (o, e) in out.data.iter_mut().zip(&eps.data) {
        *o = (*o - n * e) / s;
    }
    out
}

/// Closed-form predictor for a Gaussian prior centered on per-view targets.
///
/// With `x0 ~ N(m, s²)` per element the posterior mean given `x_t` is
/// `m + k (x_t − √ᾱ m)` with `k = √ᾱ s² / (ᾱ s² + 1 − ᾱ)`, and the returned
/// noise is the one consistent with that estimate. `detail_std = 0` reduces to
/// `ε̂ = (x_t − √ᾱ m) / √(1 − ᾱ)`; larger values let the sampled trajectory
/// carry view-specific detail that fusion has to reconcile.
#[derive(Debug, Clone)]
pub struct ToyPredictor {
    pub targets: Vec<FeatureImage>,
    pub detail_std: f64,
}

impl ToyPredictor {
    pub fn new(targets: Vec<FeatureImage>, detail_std: f64) -> Result<Self> {
        if !(detail_std >= 0.0) {
            return Err(Error::config(format!("detail_std must be ≥ 0, got {detail_std}")));
        }
        Ok(ToyPredictor { targets, detail_std })
    }

    /// Adds a seeded smooth field of the given amplitude to each target's
    /// foreground, independently per view.
    pub fn perturbed(mut self, amplitude: f64, seed: u64) -> Self {
        if amplitude != 0.0 {
            for (view, target) in self.targets.iter_mut().enumerate() {
                add_low_frequency(target, amplitude, sub_seed(seed, u64::MAX, view as u64));
            }
        }
        self
    }
}

impl NoisePredictor for ToyPredictor {
    fn predict(
        &self,
        latents: &[FeatureImage],
        t: usize,
        schedule: &NoiseSchedule,
        _conditioning: &[FeatureImage],
    ) -> Result<Vec<FeatureImage>> {
        if latents.len() != self.targets.len() {
            return Err(Error::invalid(format!(
                "predictor holds {} targets, got {} latents",
                self.targets.len(),
                latents.len()
            )));
        }
        let a = schedule.signal(t);
        if a >= 1.0 {
            return Err(Error::invalid("noise is undefined at t = 0"));
        }
        let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
        let s2 = self.detail_std * self.detail_std;
        let k = sa * s2 / (a * s2 + 1.0 - a);
        latents
            .iter()
            .zip(&self.targets)
            .map(|(x, m)| {
                if !x.same_shape(m) {
                    return Err(Error::invalid("latent and target shapes differ"));
                }
                let mut eps = x.clone();
                for (e, (&xt, &mu)) in eps.data.iter_mut().zip(x.data.iter().zip(&m.data)) {
                    let x0 = mu + k * (xt - sa * mu);
                    *e = (xt - sa * x0) / sn;
                }
                Ok(eps)
            })
            .collect()
    }
}

/// Sum of three random plane waves per channel with wavelengths of at least
/// half the image, scaled so each channel's peak amplitude is `amplitude`.
pub fn add_low_frequency(image: &mut FeatureImage, amplitude: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h, ch) = (image.width, image.height, image.channels);
    for c in 0..ch {
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let freq = rng.random_range(0.5..2.0) * std::f64::consts::PI;
                (freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !image.foreground[i] {
                    continue;
                }
                let (u, v) = ((x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64);
                let field: f64 = waves.iter().map(|(fx, fy, ph)| (fx * u + fy * v + ph).sin()).sum::<f64>() / 3.0;
                image.data[i * ch + c] += amplitude * field;
            }
        }
    }
}
