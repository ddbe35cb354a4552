//! Forward-process noise schedules and seeded noising.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::projection::FeatureImage;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ScheduleKind {
    #[default]
    Linear,
    Cosine,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::config(format!("unknown schedule kind `{other}` (linear, cosine)"))),
        }
    }
}

/// `β_1..β_T` and the cumulative signal coefficients `ᾱ_t = Π_{s≤t} (1 − β_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

const MAX_BETA: f64 = 0.999;

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::config("a schedule needs ≥ 2 betas in (0, 1)"));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        for b in &betas {
            alpha_bar.push(alpha_bar.last().unwrap() * (1.0 - b));
        }
        Ok(NoiseSchedule { betas, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `ᾱ_t`; `t = 0` is the clean signal.
    pub fn signal(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }
}

/// Linear betas scale their endpoints `1e-4 → 0.02` by `1000 / T` so short
/// schedules still reach near-pure noise; cosine follows the squared-cosine
/// `ᾱ` curve with offset 0.008.
pub fn build_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::config(format!("schedule needs at least 2 steps, got {steps}")));
    }
    let t = steps as f64;
    let betas = match kind {
        ScheduleKind::Linear => {
            let scale = 1000.0 / t;
            let (lo, hi) = (scale * 1e-4, scale * 0.02);
            (0..steps)
                .map(|i| (lo + (hi - lo) * i as f64 / (t - 1.0)).min(MAX_BETA))
                .collect()
        }
        ScheduleKind::Cosine => {
            let f = |s: f64| ((s / t + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2).cos().powi(2);
            (1..=steps)
                .map(|s| (1.0 - f(s as f64) / f(s as f64 - 1.0)).clamp(1e-8, MAX_BETA))
                .collect()
        }
    };
    NoiseSchedule::from_betas(betas)
}

/// Derives an independent sub-seed for `(step, view)` from the master seed
/// with two rounds of the SplitMix64 finalizer.
pub fn sub_seed(master: u64, step: u64, view: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(master ^ mix((step << 32) ^ view))
}

/// Fills `like`'s shape with standard normal samples from `seed`.
pub fn gaussian_like(like: &FeatureImage, seed: u64) -> FeatureImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = like.clone();
    out.data.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
    out
}

/// `x_t = √ᾱ_t · x0 + √(1 − ᾱ_t) · ε` with seeded standard normal `ε`.
pub fn forward_noise(x0: &FeatureImage, t: usize, schedule: &NoiseSchedule, seed: u64) -> Result<FeatureImage> {
    if t > schedule.steps() {
        return Err(Error::invalid(format!("step {t} exceeds schedule length {}", schedule.steps())));
    }
    let a = schedule.signal(t);
    if a == 1.0 {
        return Ok(x0.clone());
    }
    let mut out = gaussian_like(x0, seed);
    let (s, n) = (a.sqrt(), (1.0 - a).sqrt());
    for (o, x) in out.data.iter_mut().zip(&x0.data) {
        *o = s * x + n * *o;
    }
    Ok(out)
}
