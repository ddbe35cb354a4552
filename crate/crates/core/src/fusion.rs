//! Cross-view vertex aggregation, re-rasterization, and variance alignment.
//!
//! Rasterizing vertex features is a convex combination per pixel, so the
//! rendered plane has lower variance than the vertex features it came from.
//! [`estimate_variance_stats`] predicts the variance a plane of independent
//! barycentric recombinations would have, and [`variance_align`] rescales the
//! rendered foreground to that target.

use crate::error::{Error, Result};
use crate::geometry::{FragmentBuffer, Mesh};
use crate::math::{mean_std, psi};
use crate::projection::{render_features, FeatureImage, ViewProjection};

/// Per-view back-projected features and weights for every vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexBank {
    pub views: usize,
    pub vertices: usize,
    pub channels: usize,
    /// `views × vertices × channels`.
    pub features: Vec<f64>,
    /// `views × vertices`; exactly zero where not visible.
    pub weights: Vec<f64>,
    pub visible: Vec<bool>,
}

impl VertexBank {
    pub fn from_projections(views: Vec<ViewProjection>) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::invalid("vertex bank needs at least one view"))?;
        let (channels, vertices) = (first.channels, first.visible.len());
        let mut bank = VertexBank {
            views: views.len(),
            vertices,
            channels,
            features: Vec::with_capacity(views.len() * vertices * channels),
            weights: Vec::with_capacity(views.len() * vertices),
            visible: Vec::with_capacity(views.len() * vertices),
        };
        for (n, v) in views.into_iter().enumerate() {
            if v.channels != channels || v.visible.len() != vertices || v.features.len() != vertices * channels {
                return Err(Error::invalid(format!("view {n} has inconsistent bank dimensions")));
            }
            bank.features.extend(v.features);
            bank.weights
                .extend(v.weights.iter().zip(&v.visible).map(|(&w, &vis)| if vis { w.max(0.0) } else { 0.0 }));
            bank.visible.extend(v.visible);
        }
        Ok(bank)
    }

    fn feature(&self, view: usize, vertex: usize) -> &[f64] {
        let start = (view * self.vertices + vertex) * self.channels;
        &self.features[start..start + self.channels]
    }
}

/// Fused per-vertex features.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedMesh {
    pub channels: usize,
    /// Row-major `J × channels`.
    pub features: Vec<f64>,
    /// Views with a non-zero mixing weight.
    pub coverage: Vec<u32>,
    /// Set where no view carried weight and a fallback value was used.
    pub fallback: Vec<bool>,
}

impl AggregatedMesh {
    pub fn vertex_count(&self) -> usize {
        self.coverage.len()
    }

    pub fn feature(&self, vertex: usize) -> &[f64] {
        &self.features[vertex * self.channels..(vertex + 1) * self.channels]
    }
}

/// Normalized mixing coefficients `ψ(W_n, τ) / Σ ψ(W_n, τ)`, or `None` when
/// every weight vanishes.
pub fn mixing_coefficients(weights: &[f64], tau: f64) -> Option<Vec<f64>> {
    let powered: Vec<f64> = weights.iter().map(|&w| psi(w, tau)).collect();
    let omega: f64 = powered.iter().sum();
    (omega > 0.0).then(|| powered.into_iter().map(|p| p / omega).collect())
}

/// Fuses the bank across views with power weights `ψ(W, τ_w)`.
///
/// Vertices with zero total weight are flagged `fallback`: if some view sees
/// them they take the plain mean of the visible views, otherwise the matching
/// row of `previous` (or zeros).
pub fn aggregate_views(bank: &VertexBank, tau_w: f64, previous: Option<&[f64]>) -> Result<AggregatedMesh> {
    let (nv, j, ch) = (bank.views, bank.vertices, bank.channels);
    if let Some(prev) = previous {
        if prev.len() != j * ch {
            return Err(Error::invalid("previous features do not match bank dimensions"));
        }
    }
    let mut features = vec![0.0; j * ch];
    let mut coverage = vec![0u32; j];
    let mut fallback = vec![false; j];
    let mut weights = vec![0.0; nv];
    for v in 0..j {
        for (n, w) in weights.iter_mut().enumerate() {
            *w = bank.weights[n * j + v];
        }
        let out = &mut features[v * ch..(v + 1) * ch];
        if let Some(mix) = mixing_coefficients(&weights, tau_w) {
            for (n, &m) in mix.iter().enumerate() {
                if m > 0.0 {
                    coverage[v] += 1;
                    for (o, x) in out.iter_mut().zip(bank.feature(n, v)) {
                        *o += m * x;
                    }
                }
            }
            continue;
        }
        fallback[v] = true;
        let seen: Vec<usize> = (0..nv).filter(|&n| bank.visible[n * j + v]).collect();
        if !seen.is_empty() {
            for &n in &seen {
                for (o, x) in out.iter_mut().zip(bank.feature(n, v)) {
                    *o += x / seen.len() as f64;
                }
            }
        } else if let Some(prev) = previous {
            out.copy_from_slice(&prev[v * ch..(v + 1) * ch]);
        }
    }
    Ok(AggregatedMesh {
        channels: ch,
        features,
        coverage,
        fallback,
    })
}

/// Renders the fused features into every view and keeps each original plane's
/// background.
pub fn rasterize_back(
    agg: &AggregatedMesh,
    mesh: &Mesh,
    frags: &[FragmentBuffer],
    originals: &[FeatureImage],
) -> Result<Vec<FeatureImage>> {
    if frags.len() != originals.len() {
        return Err(Error::invalid("one original plane per fragment buffer required"));
    }
    if agg.vertex_count() != mesh.vertex_count() {
        return Err(Error::invalid("aggregated features do not match mesh"));
    }
    frags
        .iter()
        .zip(originals)
        .map(|(frag, orig)| {
            if orig.width != frag.width || orig.height != frag.height || orig.channels != agg.channels {
                return Err(Error::invalid("original plane does not match fragments"));
            }
            let mut out = render_features(mesh, &agg.features, agg.channels, frag);
            for i in 0..frag.len() {
                if !frag.is_foreground(i) {
                    out.pixel_mut(i).copy_from_slice(orig.pixel(i));
                }
            }
            Ok(out)
        })
        .collect()
}

/// Per-channel moments of a rasterized plane and its alignment target.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceStats {
    pub mean_2d: Vec<f64>,
    pub std_2d: Vec<f64>,
    pub mean_3d: Vec<f64>,
    pub std_3d: Vec<f64>,
    pub pixels: usize,
}

impl VarianceStats {
    /// Same target, with the 2D moments re-measured on `image`.
    pub fn remeasured(&self, image: &FeatureImage) -> VarianceStats {
        let (mean_2d, std_2d) = foreground_moments(image);
        VarianceStats {
            mean_2d,
            std_2d,
            mean_3d: self.mean_3d.clone(),
            std_3d: self.std_3d.clone(),
            pixels: image.foreground.iter().filter(|&&f| f).count(),
        }
    }
}

/// Population mean and std per channel over foreground pixels.
pub fn foreground_moments(image: &FeatureImage) -> (Vec<f64>, Vec<f64>) {
    (0..image.channels)
        .map(|c| mean_std(image.foreground_channel(c)))
        .unzip()
}

/// Foreground samples of one view: the barycentric triple and the fused
/// features of the face's three vertices, per channel.
struct PixelTriples {
    bary: Vec<[f64; 3]>,
    /// `channels × pixels × 3`.
    values: Vec<[f64; 3]>,
    referenced: Vec<bool>,
    pixels: usize,
}

fn collect_triples(agg: &AggregatedMesh, mesh: &Mesh, frags: &[&FragmentBuffer]) -> PixelTriples {
    let ch = agg.channels;
    let pixels: usize = frags.iter().map(|f| f.foreground_count()).sum();
    let mut bary = Vec::with_capacity(pixels);
    let mut values = vec![[0.0; 3]; ch * pixels];
    let mut referenced = vec![false; mesh.vertex_count()];
    let mut k = 0;
    for frag in frags {
        for (_, face, b) in frag.fragments() {
            let f = mesh.faces[face];
            bary.push(b);
            for u in 0..3 {
                referenced[f[u]] = true;
                for c in 0..ch {
                    values[c * pixels + k][u] = agg.features[f[u] * ch + c];
                }
            }
            k += 1;
        }
    }
    PixelTriples {
        bary,
        values,
        referenced,
        pixels,
    }
}

/// Expected variance of `Σ_u B_u x_u` when the coefficients `B` follow the
/// foreground barycentric distribution and the vertex triples `x` follow the
/// foreground triple distribution independently:
/// `Σ_u E[B_u²]·Var(x_u) + 2·Σ_{u<v} E[B_u B_v]·Cov(x_u, x_v)`.
fn recombination_variance(bary: &[[f64; 3]], triples: &[[f64; 3]]) -> f64 {
    let m = triples.len() as f64;
    let mut mu = [0.0; 3];
    for t in triples {
        for u in 0..3 {
            mu[u] += t[u] / m;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for t in triples {
        for u in 0..3 {
            for v in u..3 {
                cov[u][v] += (t[u] - mu[u]) * (t[v] - mu[v]) / m;
            }
        }
    }
    let mut coef = [[0.0; 3]; 3];
    for b in bary {
        for u in 0..3 {
            for v in u..3 {
                coef[u][v] += b[u] * b[v] / m;
            }
        }
    }
    let mut var = 0.0;
    for u in 0..3 {
        var += coef[u][u] * cov[u][u];
        for v in u + 1..3 {
            var += 2.0 * coef[u][v] * cov[u][v];
        }
    }
    var.max(0.0)
}

/// Alignment statistics for one view.
pub fn estimate_variance_stats(
    agg: &AggregatedMesh,
    mesh: &Mesh,
    frag: &FragmentBuffer,
    rasterized: &FeatureImage,
) -> Result<VarianceStats> {
    estimate_variance_stats_pooled(agg, mesh, &[frag], &[rasterized])
}

/// Alignment statistics pooled over several views.
pub fn estimate_variance_stats_pooled(
    agg: &AggregatedMesh,
    mesh: &Mesh,
    frags: &[&FragmentBuffer],
    rasterized: &[&FeatureImage],
) -> Result<VarianceStats> {
    let triples = collect_triples(agg, mesh, frags);
    if triples.pixels < 2 {
        return Err(Error::UndefinedStatistics { pixels: triples.pixels });
    }
    let ch = agg.channels;
    let mut stats = VarianceStats {
        mean_2d: Vec::with_capacity(ch),
        std_2d: Vec::with_capacity(ch),
        mean_3d: Vec::with_capacity(ch),
        std_3d: Vec::with_capacity(ch),
        pixels: triples.pixels,
    };
    for c in 0..ch {
        let (m2, s2) = mean_std(rasterized.iter().flat_map(|img| img.foreground_channel(c)));
        let (m3, _) = mean_std(
            triples
                .referenced
                .iter()
                .enumerate()
                .filter(|(_, &r)| r)
                .map(|(v, _)| agg.features[v * ch + c]),
        );
        let values = &triples.values[c * triples.pixels..(c + 1) * triples.pixels];
        stats.mean_2d.push(m2);
        stats.std_2d.push(s2);
        stats.mean_3d.push(m3);
        stats.std_3d.push(recombination_variance(&triples.bary, values).sqrt());
    }
    Ok(stats)
}

/// Upper bound on the rasterized variance from per-pixel convexity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBound {
    pub variance_2d: f64,
    /// `E_i[Σ_u B_iu (x_iu − μ)²]` with `μ` the mean over referenced vertices.
    pub bound: f64,
    pub slack: f64,
}

/// Per-channel convex bound on the variance of a rasterized plane.
pub fn rasterization_variance_bound(
    agg: &AggregatedMesh,
    mesh: &Mesh,
    frag: &FragmentBuffer,
    rasterized: &FeatureImage,
) -> Result<Vec<VarianceBound>> {
    let stats = estimate_variance_stats(agg, mesh, frag, rasterized)?;
    let triples = collect_triples(agg, mesh, &[frag]);
    Ok((0..agg.channels)
        .map(|c| {
            let mu = stats.mean_3d[c];
            let values = &triples.values[c * triples.pixels..(c + 1) * triples.pixels];
            let bound = triples
                .bary
                .iter()
                .zip(values)
                .map(|(b, x)| (0..3).map(|u| b[u] * (x[u] - mu).powi(2)).sum::<f64>())
                .sum::<f64>()
                / triples.pixels as f64;
            let variance_2d = stats.std_2d[c].powi(2);
            VarianceBound {
                variance_2d,
                bound,
                slack: bound - variance_2d,
            }
        })
        .collect())
}

/// Below this the foreground is treated as constant and cannot be rescaled.
const FLAT_STD: f64 = 1e-12;

/// Per-channel affine correction of the foreground:
/// `(x − μ₂) / σ₂ · σ₃ + μ₃`. Background pixels are untouched. Channels with a
/// flat foreground pass through unchanged.
pub fn variance_align(rasterized: &FeatureImage, stats: &VarianceStats) -> FeatureImage {
    let mut out = rasterized.clone();
    let ch = rasterized.channels;
    for c in 0..ch {
        let (m2, s2, m3, s3) = (stats.mean_2d[c], stats.std_2d[c], stats.mean_3d[c], stats.std_3d[c]);
        if s2 <= FLAT_STD * (1.0 + m2.abs()) {
            if s3 > FLAT_STD * (1.0 + m3.abs()) {
                log::warn!("channel {c}: flat foreground cannot be rescaled to std {s3:.3e}; passing through");
            }
            continue;
        }
        let gain = s3 / s2;
        for i in 0..out.pixel_count() {
            if out.foreground[i] {
                let x = &mut out.data[i * ch + c];
                *x = (*x - m2) * gain + m3;
            }
        }
    }
    out
}

/// Result of [`check_convex_variance_inequality`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexCheck {
    pub holds: bool,
    /// `Σ λ_i Var(x_i) − Var(Σ λ_i x_i)`.
    pub slack: f64,
    pub combined_variance: f64,
    pub bound: f64,
}

/// Sample variance with the `M − 1` denominator.
fn sample_variance(xs: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
}

/// Checks `Var(Σ λ_i x_i) ≤ Σ λ_i Var(x_i)` for element-wise combinations of
/// equally sized sample sets.
pub fn check_convex_variance_inequality(weights: &[f64], samples: &[Vec<f64>]) -> Result<ConvexCheck> {
    if weights.is_empty() || weights.len() != samples.len() {
        return Err(Error::invalid("one weight per sample set required"));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
    }
    let m = samples[0].len();
    if m < 2 || samples.iter().any(|s| s.len() != m) {
        return Err(Error::invalid("sample sets need equal length ≥ 2"));
    }
    let combined: Vec<f64> = (0..m)
        .map(|j| weights.iter().zip(samples).map(|(w, s)| w * s[j]).sum())
        .collect();
    let combined_variance = sample_variance(&combined);
    let bound: f64 = weights.iter().zip(samples).map(|(w, s)| w * sample_variance(s)).sum();
    let slack = bound - combined_variance;
    Ok(ConvexCheck {
        holds: combined_variance <= bound + 1e-9,
        slack,
        combined_variance,
        bound,
    })
}
