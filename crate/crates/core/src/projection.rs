//! Mapping between per-view feature planes and mesh vertices.

use crate::error::{Error, Result};
use crate::geometry::{Camera, FragmentBuffer, Mesh};
use crate::math::psi;

/// Per-view `H × W × C` plane; `foreground` mirrors the fragment buffer it was
/// produced from (all `false` when unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major pixels, channels innermost.
    pub data: Vec<f64>,
    pub foreground: Vec<bool>,
}

impl FeatureImage {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        FeatureImage {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            foreground: vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        let mut img = Self::zeros(width, height, channels);
        img.data.fill(value);
        img
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn with_foreground_of(mut self, frag: &FragmentBuffer) -> Self {
        self.foreground = (0..frag.len()).map(|i| frag.is_foreground(i)).collect();
        self
    }

    pub fn same_shape(&self, other: &FeatureImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Values of one channel over foreground pixels.
    pub fn foreground_channel(&self, channel: usize) -> impl Iterator<Item = f64> + '_ {
        self.foreground
            .iter()
            .enumerate()
            .filter(|(_, &fg)| fg)
            .map(move |(i, _)| self.data[i * self.channels + channel])
    }
}

/// View and distance scores per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMaps {
    pub width: usize,
    pub height: usize,
    /// Cosine between the interpolated normal and the direction to the eye.
    pub view_score: Vec<f64>,
    /// `1 - depth / z_far` clamped to `[0, 1]`; zero on background.
    pub distance_score: Vec<f64>,
}

/// Renders per-vertex features through the fragment buffer by barycentric
/// combination. `features` is row-major `J × channels`.
pub fn render_features(
    mesh: &Mesh,
    features: &[f64],
    channels: usize,
    frag: &FragmentBuffer,
) -> FeatureImage {
    let mut img = FeatureImage::zeros(frag.width, frag.height, channels).with_foreground_of(frag);
    for (i, face, b) in frag.fragments() {
        let f = mesh.faces[face];
        let out = img.pixel_mut(i);
        for c in 0..channels {
            out[c] = b[0] * features[f[0] * channels + c]
                + b[1] * features[f[1] * channels + c]
                + b[2] * features[f[2] * channels + c];
        }
    }
    img
}

/// Renders the mesh's own attribute block.
pub fn render_attributes(mesh: &Mesh, frag: &FragmentBuffer) -> Result<FeatureImage> {
    if mesh.channels() == 0 {
        return Err(Error::invalid("mesh has no attribute channels to render"));
    }
    Ok(render_features(mesh, mesh.attributes(), mesh.channels(), frag))
}

pub fn compute_scores(
    mesh: &Mesh,
    camera: &Camera,
    frag: &FragmentBuffer,
    z_far: f64,
) -> Result<ScoreMaps> {
    if !(z_far > 0.0) {
        return Err(Error::config(format!("z_far must be > 0, got {z_far}")));
    }
    let eye = camera.position();
    let n = frag.len();
    let mut view_score = vec![0.0; n];
    let mut distance_score = vec![0.0; n];
    for (i, face, b) in frag.fragments() {
        let f = mesh.faces[face];
        let normal = mesh.normals[f[0]] * b[0] + mesh.normals[f[1]] * b[1] + mesh.normals[f[2]] * b[2];
        let point = mesh.interpolate_position(face, b);
        view_score[i] = match (normal.normalized(), (eye - point).normalized()) {
            (Some(nrm), Some(dir)) => nrm.dot(dir).clamp(-1.0, 1.0),
            _ => 0.0,
        };
        distance_score[i] = (1.0 - frag.depth[i] / z_far).clamp(0.0, 1.0);
    }
    Ok(ScoreMaps {
        width: frag.width,
        height: frag.height,
        view_score,
        distance_score,
    })
}

/// One view's back-projected vertex features and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewProjection {
    pub channels: usize,
    /// Row-major `J × channels`; zero for invisible vertices.
    pub features: Vec<f64>,
    pub weights: Vec<f64>,
    pub visible: Vec<bool>,
}

/// Exponents of the per-pixel power weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionExponents {
    pub tau_b: f64,
    pub tau_d: f64,
}

impl Default for ProjectionExponents {
    fn default() -> Self {
        ProjectionExponents { tau_b: 2.0, tau_d: 2.0 }
    }
}

/// Back-projects a feature plane onto vertices.
///
/// Every foreground pixel contributes to the three vertices of its face, each
/// with weight `ψ(α_u, τ_b)` taken from that vertex's own barycentric channel.
/// Features are the weight-normalized pixel average; the vertex weight is the
/// same average of `max(S, 0) · ψ(D, τ_d)`.
pub fn back_project(
    feature: &FeatureImage,
    frag: &FragmentBuffer,
    scores: &ScoreMaps,
    mesh: &Mesh,
    exponents: ProjectionExponents,
) -> Result<ViewProjection> {
    back_project_where(feature, frag, scores, mesh, exponents, |_| true)
}

/// [`back_project`] restricted to pixels accepted by `keep`.
pub fn back_project_where(
    feature: &FeatureImage,
    frag: &FragmentBuffer,
    scores: &ScoreMaps,
    mesh: &Mesh,
    exponents: ProjectionExponents,
    keep: impl Fn(usize) -> bool,
) -> Result<ViewProjection> {
    if feature.width != frag.width || feature.height != frag.height {
        return Err(Error::invalid(format!(
            "feature plane {}×{} does not match fragments {}×{}",
            feature.width, feature.height, frag.width, frag.height
        )));
    }
    if scores.view_score.len() != frag.len() {
        return Err(Error::invalid("score maps do not match fragment buffer"));
    }
    let (j, ch) = (mesh.vertex_count(), feature.channels);
    let mut sum_x = vec![0.0; j * ch];
    let mut sum_w = vec![0.0; j];
    let mut eta = vec![0.0; j];
    for (i, face, b) in frag.fragments() {
        if !keep(i) {
            continue;
        }
        let f = mesh.faces[face];
        let px = feature.pixel(i);
        let pixel_weight = scores.view_score[i].max(0.0) * psi(scores.distance_score[i], exponents.tau_d);
        for u in 0..3 {
            let w = psi(b[u], exponents.tau_b);
            if w == 0.0 {
                continue;
            }
            let v = f[u];
            eta[v] += w;
            sum_w[v] += pixel_weight * w;
            for c in 0..ch {
                sum_x[v * ch + c] += px[c] * w;
            }
        }
    }
    let visible: Vec<bool> = eta.iter().map(|&e| e > 0.0).collect();
    for v in 0..j {
        if visible[v] {
            for c in 0..ch {
                sum_x[v * ch + c] /= eta[v];
            }
            sum_w[v] /= eta[v];
        }
    }
    Ok(ViewProjection {
        channels: ch,
        features: sum_x,
        weights: sum_w,
        visible,
    })
}
