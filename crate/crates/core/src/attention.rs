//! Self-attention over per-view tokens and over volumetric grid cells of
//! foreground features lifted onto the surface.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{FragmentBuffer, Mesh};
use crate::math::Vec3;
use crate::projection::FeatureImage;

/// Foreground pixels of several views placed on the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedFeatureSet {
    pub channels: usize,
    pub points: Vec<Vec3>,
    /// Row-major `points × channels`.
    pub features: Vec<f64>,
    /// `(view, pixel)` each point came from.
    pub origin: Vec<(usize, usize)>,
}

impl LiftedFeatureSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lifts every foreground pixel to the linear barycentric interpolation of its
/// face's vertex positions.
pub fn lift_foreground(features: &[FeatureImage], frags: &[FragmentBuffer], mesh: &Mesh) -> Result<LiftedFeatureSet> {
    if features.len() != frags.len() {
        return Err(Error::invalid("one feature plane per fragment buffer required"));
    }
    let channels = features.first().map_or(0, |f| f.channels);
    let mut set = LiftedFeatureSet {
        channels,
        points: Vec::new(),
        features: Vec::new(),
        origin: Vec::new(),
    };
    for (view, (img, frag)) in features.iter().zip(frags).enumerate() {
        if img.width != frag.width || img.height != frag.height || img.channels != channels {
            return Err(Error::invalid(format!("view {view}: plane does not match fragments")));
        }
        for (i, face, b) in frag.fragments() {
            set.points.push(mesh.interpolate_position(face, b));
            set.features.extend_from_slice(img.pixel(i));
            set.origin.push((view, i));
        }
    }
    Ok(set)
}

/// Cell assignment of lifted points on a regular grid anchored at `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    pub grid_size: f64,
    pub cells: Vec<[i64; 3]>,
}

impl GridPartition {
    /// Point indices per occupied cell, in cell order.
    pub fn groups(&self) -> BTreeMap<[i64; 3], Vec<usize>> {
        let mut groups: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.cells.iter().enumerate() {
            groups.entry(c).or_default().push(i);
        }
        groups
    }
}

pub fn partition_grid(set: &LiftedFeatureSet, grid_size: f64) -> Result<GridPartition> {
    if !(grid_size > 0.0) {
        return Err(Error::config(format!("grid size must be > 0, got {grid_size}")));
    }
    let cell = |x: f64| ((x + 1.0) / grid_size).floor() as i64;
    Ok(GridPartition {
        grid_size,
        cells: set.points.iter().map(|p| [cell(p.x), cell(p.y), cell(p.z)]).collect(),
    })
}

/// Row-stochastic attention matrix `softmax_k(⟨q_i, k_k⟩ · temperature)`.
pub fn attention_weights(queries: &[f64], keys: &[f64], channels: usize, temperature: f64) -> Vec<f64> {
    let n = queries.len() / channels;
    let m = keys.len() / channels;
    let mut w = vec![0.0; n * m];
    for i in 0..n {
        let q = &queries[i * channels..(i + 1) * channels];
        let row = &mut w[i * m..(i + 1) * m];
        for (k, r) in row.iter_mut().enumerate() {
            let key = &keys[k * channels..(k + 1) * channels];
            *r = q.iter().zip(key).map(|(a, b)| a * b).sum::<f64>() * temperature;
        }
        softmax_in_place(row);
    }
    w
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for r in row.iter_mut() {
        *r = (*r - max).exp();
        total += *r;
    }
    for r in row.iter_mut() {
        *r /= total;
    }
}

/// Identity-projection self-attention over `rows` (`n × channels`).
pub fn group_attention(rows: &[f64], channels: usize, temperature: f64) -> Vec<f64> {
    AttentionKernel::identity(channels).with_temperature(temperature).apply(rows)
}

/// Self-attention with fixed query/key projections; values are never projected.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionKernel {
    pub channels: usize,
    pub temperature: f64,
    query: Option<Vec<f64>>,
    key: Option<Vec<f64>>,
}

impl AttentionKernel {
    /// Identity projections, temperature `1/√C`.
    pub fn identity(channels: usize) -> Self {
        AttentionKernel {
            channels,
            temperature: 1.0 / (channels.max(1) as f64).sqrt(),
            query: None,
            key: None,
        }
    }

    /// Independent random orthonormal query and key projections.
    pub fn orthonormal(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kernel = Self::identity(channels);
        kernel.query = Some(random_orthonormal(channels, &mut rng));
        kernel.key = Some(random_orthonormal(channels, &mut rng));
        kernel
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    fn project(&self, rows: &[f64], matrix: &Option<Vec<f64>>) -> Vec<f64> {
        let Some(p) = matrix else { return rows.to_vec() };
        let c = self.channels;
        let mut out = vec![0.0; rows.len()];
        for (src, dst) in rows.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            for (o, d) in dst.iter_mut().enumerate() {
                *d = (0..c).map(|i| src[i] * p[i * c + o]).sum();
            }
        }
        out
    }

    /// Attends every row to every row of the same set.
    pub fn apply(&self, rows: &[f64]) -> Vec<f64> {
        let c = self.channels;
        let n = rows.len() / c;
        let q = self.project(rows, &self.query);
        let k = self.project(rows, &self.key);
        let mut out = vec![0.0; rows.len()];
        let mut scores = vec![0.0; n];
        for i in 0..n {
            let qi = &q[i * c..(i + 1) * c];
            for (j, s) in scores.iter_mut().enumerate() {
                *s = qi.iter().zip(&k[j * c..(j + 1) * c]).map(|(a, b)| a * b).sum::<f64>() * self.temperature;
            }
            softmax_in_place(&mut scores);
            let oi = &mut out[i * c..(i + 1) * c];
            for (j, &w) in scores.iter().enumerate() {
                for (o, v) in oi.iter_mut().zip(&rows[j * c..(j + 1) * c]) {
                    *o += w * v;
                }
            }
        }
        out
    }
}

fn random_orthonormal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Gram-Schmidt on Gaussian columns; retries on (improbable) collapse.
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-8 {
                break;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
        if cols.len() == n {
            let mut m = vec![0.0; n * n];
            for (j, c) in cols.iter().enumerate() {
                for i in 0..n {
                    m[i * n + j] = c[i];
                }
            }
            return m;
        }
    }
}

/// Full token attention within each view, all pixels participating.
pub fn attention_2d(features: &[FeatureImage], kernel: &AttentionKernel) -> Vec<FeatureImage> {
    features
        .iter()
        .map(|img| FeatureImage {
            data: kernel.apply(&img.data),
            ..img.clone()
        })
        .collect()
}

/// Lifts foreground features, attends within each grid cell across all views,
/// and scatters the result back. Background pixels keep their input values.
pub fn attention_3d(
    features: &[FeatureImage],
    frags: &[FragmentBuffer],
    mesh: &Mesh,
    grid_size: f64,
    kernel: &AttentionKernel,
) -> Result<Vec<FeatureImage>> {
    let set = lift_foreground(features, frags, mesh)?;
    let partition = partition_grid(&set, grid_size)?;
    let c = set.channels;
    let mut out = features.to_vec();
    let mut rows = Vec::new();
    for members in partition.groups().values() {
        rows.clear();
        for &p in members {
            rows.extend_from_slice(&set.features[p * c..(p + 1) * c]);
        }
        let attended = kernel.apply(&rows);
        for (k, &p) in members.iter().enumerate() {
            let (view, pixel) = set.origin[p];
            out[view].pixel_mut(pixel).copy_from_slice(&attended[k * c..(k + 1) * c]);
        }
    }
    Ok(out)
}

/// Averages the two branches on foreground; background follows the 2D branch.
pub fn jnp_mix(branch_2d: &[FeatureImage], branch_3d: &[FeatureImage]) -> Result<Vec<FeatureImage>> {
    if branch_2d.len() != branch_3d.len() {
        return Err(Error::invalid("branch view counts differ"));
    }
    branch_2d
        .iter()
        .zip(branch_3d)
        .map(|(a, b)| {
            if !a.same_shape(b) {
                return Err(Error::invalid("branch planes differ in shape"));
            }
            let mut out = a.clone();
            for i in 0..a.pixel_count() {
                if a.foreground[i] {
                    for (o, v) in out.pixel_mut(i).iter_mut().zip(b.pixel(i)) {
                        *o = 0.5 * (*o + v);
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

/// Joint prediction: the mean of per-view and grid-cell attention.
pub fn joint_attention(
    features: &[FeatureImage],
    frags: &[FragmentBuffer],
    mesh: &Mesh,
    grid_size: f64,
    kernel: &AttentionKernel,
) -> Result<Vec<FeatureImage>> {
    let b2 = attention_2d(features, kernel);
    let b3 = attention_3d(features, frags, mesh, grid_size, kernel)?;
    jnp_mix(&b2, &b3)
}
