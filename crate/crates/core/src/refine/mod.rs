//! Pixel-space texture aggregation on the fine mesh, cross-view conflict
//! detection, and sequential inpainting of conflicting regions.

mod inpaint;

pub use inpaint::{BinaryImage, ExternalInpainter, HarmonicInpainter, Inpainter};

use crate::error::{Error, Result};
use crate::fusion::{aggregate_views, VertexBank};
use crate::geometry::{rasterize, Camera, FragmentBuffer, Mesh};
use crate::projection::{
    back_project, back_project_where, compute_scores, render_features, FeatureImage, ProjectionExponents, ScoreMaps,
    ViewProjection,
};

/// Per-view vertex colors re-projected from RGB images.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorRepository {
    pub views: usize,
    pub vertices: usize,
    /// `views × vertices`.
    pub colors: Vec<[f64; 3]>,
    pub visible: Vec<bool>,
    weights: Vec<f64>,
}

impl ColorRepository {
    pub fn from_projections(projections: &[ViewProjection]) -> Result<Self> {
        let vertices = projections.first().map_or(0, |p| p.visible.len());
        let mut repo = ColorRepository {
            views: projections.len(),
            vertices,
            colors: Vec::with_capacity(projections.len() * vertices),
            visible: Vec::with_capacity(projections.len() * vertices),
            weights: Vec::with_capacity(projections.len() * vertices),
        };
        for p in projections {
            if p.channels != 3 || p.visible.len() != vertices {
                return Err(Error::invalid("color projections must be RGB over the same mesh"));
            }
            repo.colors.extend(
                p.features
                    .chunks_exact(3)
                    .map(|c| [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)]),
            );
            repo.visible.extend_from_slice(&p.visible);
            repo.weights.extend_from_slice(&p.weights);
        }
        Ok(repo)
    }

    pub fn color(&self, view: usize, vertex: usize) -> Option<[f64; 3]> {
        let k = view * self.vertices + vertex;
        self.visible[k].then(|| self.colors[k])
    }

    fn bank(&self) -> VertexBank {
        VertexBank {
            views: self.views,
            vertices: self.vertices,
            channels: 3,
            features: self.colors.iter().flatten().copied().collect(),
            weights: self.weights.clone(),
            visible: self.visible.clone(),
        }
    }
}

/// Per-vertex RGB texture.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexColors {
    pub colors: Vec<[f64; 3]>,
    /// Vertices no view sees, colored from their nearest visible vertex.
    pub fallback: Vec<bool>,
}

impl VertexColors {
    pub fn flat(&self) -> Vec<f64> {
        self.colors.iter().flatten().copied().collect()
    }
}

/// Fragments and score maps of a set of views.
#[derive(Debug, Clone)]
pub struct ViewSet {
    pub cameras: Vec<Camera>,
    pub frags: Vec<FragmentBuffer>,
    pub scores: Vec<ScoreMaps>,
}

impl ViewSet {
    pub fn new(mesh: &Mesh, cameras: &[Camera], z_far: f64) -> Result<Self> {
        let frags: Vec<FragmentBuffer> = cameras.iter().map(|c| rasterize(mesh, c)).collect();
        let scores = cameras
            .iter()
            .zip(&frags)
            .map(|(c, f)| compute_scores(mesh, c, f, z_far))
            .collect::<Result<_>>()?;
        Ok(ViewSet {
            cameras: cameras.to_vec(),
            frags,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    /// Back-projects one image per view.
    pub fn repository(&self, images: &[FeatureImage], mesh: &Mesh, exponents: ProjectionExponents) -> Result<ColorRepository> {
        if images.len() != self.len() {
            return Err(Error::invalid("one image per view required"));
        }
        let projections = images
            .iter()
            .zip(self.frags.iter().zip(&self.scores))
            .map(|(img, (f, s))| back_project(img, f, s, mesh, exponents))
            .collect::<Result<Vec<_>>>()?;
        ColorRepository::from_projections(&projections)
    }
}

/// Builds the color repository from RGB images and fuses it with power
/// weights `ψ(W, τ_f)` into the initial texture.
pub fn pixel_aggregate(
    images: &[FeatureImage],
    views: &ViewSet,
    fine_mesh: &Mesh,
    exponents: ProjectionExponents,
    tau_f: f64,
) -> Result<(ColorRepository, VertexColors)> {
    if images.iter().any(|i| i.channels != 3) {
        return Err(Error::invalid("pixel aggregation expects RGB images"));
    }
    let repo = views.repository(images, fine_mesh, exponents)?;
    let agg = aggregate_views(&repo.bank(), tau_f, None)?;
    let j = fine_mesh.vertex_count();
    let seen: Vec<bool> = (0..j).map(|v| (0..repo.views).any(|n| repo.visible[n * j + v])).collect();
    let mut colors: Vec<[f64; 3]> = (0..j)
        .map(|v| {
            let f = agg.feature(v);
            [f[0], f[1], f[2]]
        })
        .collect();
    let fallback: Vec<bool> = seen.iter().map(|s| !s).collect();
    if seen.iter().any(|&s| s) {
        for v in (0..j).filter(|&v| fallback[v]) {
            let p = fine_mesh.vertices[v];
            let nearest = (0..j)
                .filter(|&u| seen[u])
                .min_by(|&a, &b| {
                    let da = (fine_mesh.vertices[a] - p).norm();
                    let db = (fine_mesh.vertices[b] - p).norm();
                    da.total_cmp(&db)
                })
                .expect("some vertex is visible");
            colors[v] = colors[nearest];
        }
    }
    Ok((repo, VertexColors { colors, fallback }))
}

/// Unbiased per-vertex color variance across the views that see it, summed
/// over RGB; zero with fewer than two such views.
pub fn vertex_variance(repo: &ColorRepository) -> Vec<f64> {
    (0..repo.vertices)
        .map(|v| {
            let samples: Vec<[f64; 3]> = (0..repo.views).filter_map(|n| repo.color(n, v)).collect();
            if samples.len() < 2 {
                return 0.0;
            }
            let m = samples.len() as f64;
            (0..3)
                .map(|c| {
                    let mean = samples.iter().map(|s| s[c]).sum::<f64>() / m;
                    samples.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / (m - 1.0)
                })
                .sum()
        })
        .collect()
}

/// Vertices whose color variance exceeds the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictMask {
    pub flags: Vec<bool>,
    pub threshold: f64,
}

impl ConflictMask {
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

pub fn build_conflict_mask(variances: &[f64], threshold: f64) -> Result<ConflictMask> {
    if !(threshold >= 0.0) {
        return Err(Error::config(format!("lambda must be ≥ 0, got {threshold}")));
    }
    Ok(ConflictMask {
        flags: variances.iter().map(|&v| v > threshold).collect(),
        threshold,
    })
}

/// Square-kernel binary dilation. An even kernel `k` spans offsets
/// `-k/2 ..= k - 1 - k/2`.
pub fn dilate(mask: &BinaryImage, kernel: usize) -> Result<BinaryImage> {
    if kernel == 0 {
        return Err(Error::config("dilation kernel must be ≥ 1"));
    }
    let (w, h) = (mask.width, mask.height);
    let lo = (kernel / 2) as i64;
    let hi = (kernel - 1 - kernel / 2) as i64;
    // A pixel is set if some set pixel lies within the kernel placed on it:
    // source offset s = target − o for o in [−lo, hi].
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                out[(y as usize) * w + x as usize] = (-hi..=lo).any(|d| {
                    let (sx, sy) = if horizontal { (x + d, y) } else { (x, y + d) };
                    sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 && src[sy as usize * w + sx as usize]
                });
            }
        }
        out
    };
    let rows = pass(&mask.pixels, true);
    Ok(BinaryImage {
        width: w,
        height: h,
        pixels: pass(&rows, false),
    })
}

/// Interpolates the 0/1 vertex flags through the fragments and keeps pixels
/// at or above 0.5.
pub fn render_mask(mask: &ConflictMask, mesh: &Mesh, frag: &FragmentBuffer) -> BinaryImage {
    let values: Vec<f64> = mask.flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let img = render_features(mesh, &values, 1, frag);
    BinaryImage {
        width: frag.width,
        height: frag.height,
        pixels: (0..frag.len()).map(|i| frag.is_foreground(i) && img.data[i] >= 0.5).collect(),
    }
}

pub fn render_mask_dilated(mask: &ConflictMask, mesh: &Mesh, camera: &Camera, kernel: usize) -> Result<BinaryImage> {
    dilate(&render_mask(mask, mesh, &rasterize(mesh, camera)), kernel)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub exponents: ProjectionExponents,
    pub kernel: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            exponents: ProjectionExponents::default(),
            kernel: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRefinement {
    pub view: usize,
    pub masked_pixels: usize,
    pub updated_vertices: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RefineReport {
    pub texture: VertexColors,
    /// Each view's image after its fill.
    pub images: Vec<FeatureImage>,
    /// Repository re-projected from `images`.
    pub repository: ColorRepository,
    /// Vertices still flagged at the end.
    pub residual: Vec<usize>,
    pub views: Vec<ViewRefinement>,
}

/// Visits the views in order. Each view renders the current texture, masks
/// the still-flagged vertices (dilated), fills the mask with `inpainter`,
/// re-projects the filled pixels onto flagged vertices it sees, and clears
/// their flags. Unflagged vertices keep their colors. A failing inpainter
/// skips its view and leaves that view's vertices flagged.
pub fn inpaint_refine(
    texture: &VertexColors,
    mask: &ConflictMask,
    mesh: &Mesh,
    views: &ViewSet,
    inpainter: &dyn Inpainter,
    options: RefineOptions,
) -> Result<RefineReport> {
    let j = mesh.vertex_count();
    if texture.colors.len() != j || mask.flags.len() != j {
        return Err(Error::invalid("texture and mask must cover every mesh vertex"));
    }
    let mut colors = texture.colors.clone();
    let mut flags = mask.flags.clone();
    let mut images = Vec::with_capacity(views.len());
    let mut reports = Vec::with_capacity(views.len());
    for n in 0..views.len() {
        let (frag, scores) = (&views.frags[n], &views.scores[n]);
        let flat: Vec<f64> = colors.iter().flatten().copied().collect();
        let rendered = render_features(mesh, &flat, 3, frag);
        let current = ConflictMask {
            flags: flags.clone(),
            threshold: mask.threshold,
        };
        let dilated = dilate(&render_mask(&current, mesh, frag), options.kernel)?;
        let masked: Vec<bool> = (0..frag.len()).map(|i| dilated.pixels[i] && frag.is_foreground(i)).collect();
        let masked_pixels = masked.iter().filter(|&&m| m).count();
        let mut report = ViewRefinement {
            view: n,
            masked_pixels,
            updated_vertices: 0,
            error: None,
        };
        if masked_pixels == 0 {
            images.push(rendered);
            reports.push(report);
            continue;
        }
        let filled = match inpainter.inpaint(&rendered, &dilated, &scores.distance_score, n) {
            Ok(out) if out.same_shape(&rendered) => out,
            Ok(_) => {
                report.error = Some("inpainter returned a plane of the wrong shape".into());
                rendered.clone()
            }
            Err(e) => {
                log::warn!("view {n}: inpainting skipped: {e}");
                report.error = Some(e.to_string());
                rendered.clone()
            }
        };
        let mut merged = rendered;
        for i in (0..frag.len()).filter(|&i| masked[i]) {
            let src = filled.pixel(i);
            merged.pixel_mut(i).copy_from_slice(&[src[0].clamp(0.0, 1.0), src[1].clamp(0.0, 1.0), src[2].clamp(0.0, 1.0)]);
        }
        if report.error.is_none() {
            let proj = back_project_where(&merged, frag, scores, mesh, options.exponents, |i| masked[i])?;
            for v in 0..j {
                if !(flags[v] && proj.visible[v]) {
                    continue;
                }
                let f = &proj.features[v * 3..v * 3 + 3];
                colors[v] = [f[0], f[1], f[2]];
                flags[v] = false;
                report.updated_vertices += 1;
            }
        }
        images.push(merged);
        reports.push(report);
    }
    let repository = views.repository(&images, mesh, options.exponents)?;
    Ok(RefineReport {
        texture: VertexColors {
            colors,
            fallback: texture.fallback.clone(),
        },
        images,
        repository,
        residual: (0..j).filter(|&v| flags[v]).collect(),
        views: reports,
    })
}
