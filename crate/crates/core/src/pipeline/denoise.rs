//! The reverse-process loop with per-step multi-view fusion.

use std::io::Write;
use std::str::FromStr;

use crate::attention::{joint_attention, AttentionKernel};
use crate::error::{Error, Result};
use crate::fusion::{
    aggregate_views, estimate_variance_stats, estimate_variance_stats_pooled, foreground_moments, rasterize_back,
    variance_align, AggregatedMesh, VarianceStats, VertexBank,
};
use crate::geometry::{rasterize, Camera, FragmentBuffer, Mesh};
use crate::projection::{back_project, compute_scores, FeatureImage, ProjectionExponents, ScoreMaps};

use super::predictor::{clean_estimate, NoisePredictor};
use super::schedule::{build_schedule, forward_noise, gaussian_like, sub_seed, ScheduleKind};

/// Which fusion stages run inside the fusion window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Policy {
    /// Independent per-view denoising.
    Baseline,
    /// Aggregation and re-rasterization without the variance correction.
    MvarNoVa,
    #[default]
    MvarVa,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Baseline, Policy::MvarNoVa, Policy::MvarVa];

    pub fn tag(self) -> &'static str {
        match self {
            Policy::Baseline => "baseline",
            Policy::MvarNoVa => "mvar_no_va",
            Policy::MvarVa => "mvar_va",
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Policy::Baseline),
            "mvar" | "mvar_no_va" => Ok(Policy::MvarNoVa),
            "mvar-va" | "mvar_va" => Ok(Policy::MvarVa),
            other => Err(Error::config(format!("unknown policy `{other}` (baseline, mvar, mvar-va)"))),
        }
    }
}

/// What the fusion stages operate on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FusionSpace {
    /// Fuse the clean estimate, then re-noise.
    #[default]
    CleanEstimate,
    /// Re-noise first, then fuse the stepped latents.
    Stepped,
}

impl FromStr for FusionSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x0" | "clean" => Ok(FusionSpace::CleanEstimate),
            "stepped" | "xt" => Ok(FusionSpace::Stepped),
            other => Err(Error::config(format!("unknown fusion space `{other}` (x0, stepped)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub fusion_fraction: f64,
    /// Cycled by fusion step index.
    pub grid_sizes: Vec<f64>,
    pub exponents: ProjectionExponents,
    pub tau_w: f64,
    pub z_far: f64,
    pub channels: usize,
    pub seed: u64,
    pub policy: Policy,
    pub jnp: bool,
    /// Seed of random orthonormal query/key projections; identity when `None`.
    pub attention_seed: Option<u64>,
    pub pooled_stats: bool,
    pub fusion_space: FusionSpace,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            steps: 50,
            schedule: ScheduleKind::Linear,
            fusion_fraction: 0.9,
            grid_sizes: vec![0.34, 0.25],
            exponents: ProjectionExponents::default(),
            tau_w: 3.0,
            z_far: 5.0,
            channels: 4,
            seed: 0,
            policy: Policy::MvarVa,
            jnp: false,
            attention_seed: None,
            pooled_stats: false,
            fusion_space: FusionSpace::CleanEstimate,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fusion_fraction) {
            return Err(Error::config(format!("fusion_fraction must lie in [0, 1], got {}", self.fusion_fraction)));
        }
        if self.grid_sizes.is_empty() || self.grid_sizes.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::config("grid_sizes must be a non-empty list of positive sizes"));
        }
        for (name, v) in [("tau_b", self.exponents.tau_b), ("tau_d", self.exponents.tau_d), ("tau_w", self.tau_w)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.channels == 0 {
            return Err(Error::config("channels must be ≥ 1"));
        }
        Ok(())
    }
}

/// Number of leading steps with fusion active: `⌈fraction · T⌉`.
pub fn fusion_step_count(steps: usize, fraction: f64) -> usize {
    ((fraction * steps as f64 - 1e-9).ceil().max(0.0) as usize).min(steps)
}

/// Per-view, per-channel foreground std at each stage of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    pub std_pre: Vec<f64>,
    pub std_post_raster: Vec<f64>,
    pub std_post_va: Vec<f64>,
    /// Alignment target, present when the variance correction ran.
    pub target_std: Option<Vec<f64>>,
    pub target_mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// 1-based position in the loop.
    pub step: usize,
    /// Diffusion timestep, `T` down to 1.
    pub t: usize,
    pub fused: bool,
    /// Means over views and channels of the per-view values.
    pub std_pre: f64,
    pub std_post_raster: f64,
    pub std_post_va: f64,
    pub views: Vec<ViewRecord>,
}

/// One row of the alignment-statistics dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsRow {
    pub step: usize,
    pub view: usize,
    pub channel: usize,
    pub std_2d: f64,
    pub std_3d: f64,
    pub mean_2d: f64,
    pub mean_3d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub policy: Policy,
    pub records: Vec<TrajectoryRecord>,
    pub stats: Vec<StatsRow>,
}

impl TrajectoryLog {
    pub fn fusion_steps(&self) -> usize {
        self.records.iter().filter(|r| r.fused).count()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "step,policy,std_pre,std_post_raster,std_post_va")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{:.9},{:.9},{:.9}",
                r.step,
                self.policy.tag(),
                r.std_pre,
                r.std_post_raster,
                r.std_post_va
            )?;
        }
        Ok(())
    }

    pub fn write_stats_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "step,view,channel,std_2d,std_3d,mean_2d,mean_3d")?;
        for s in &self.stats {
            writeln!(
                out,
                "{},{},{},{:.9},{:.9},{:.9},{:.9}",
                s.step, s.view, s.channel, s.std_2d, s.std_3d, s.mean_2d, s.mean_3d
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DenoiseOutput {
    /// Per-view latents after the last step.
    pub latents: Vec<FeatureImage>,
    /// Final latents fused onto the mesh vertices.
    pub texture: AggregatedMesh,
    pub trajectory: TrajectoryLog,
    pub frags: Vec<FragmentBuffer>,
}

fn check_finite(planes: &[FeatureImage], step: usize, stage: &'static str) -> Result<()> {
    match planes.iter().position(|p| !p.is_finite()) {
        Some(view) => Err(Error::NonFinite { step, stage, view }),
        None => Ok(()),
    }
}

fn foreground_stds(planes: &[FeatureImage]) -> Vec<Vec<f64>> {
    planes.iter().map(|p| foreground_moments(p).1).collect()
}

fn grand_mean(per_view: &[Vec<f64>]) -> f64 {
    let n: usize = per_view.iter().map(Vec::len).sum();
    per_view.iter().flatten().sum::<f64>() / n.max(1) as f64
}

struct Views<'a> {
    mesh: &'a Mesh,
    frags: Vec<FragmentBuffer>,
    scores: Vec<ScoreMaps>,
}

impl Views<'_> {
    fn aggregate(&self, planes: &[FeatureImage], exponents: ProjectionExponents, tau_w: f64, previous: Option<&[f64]>) -> Result<AggregatedMesh> {
        let projections = planes
            .iter()
            .zip(self.frags.iter().zip(&self.scores))
            .map(|(p, (f, s))| back_project(p, f, s, self.mesh, exponents))
            .collect::<Result<Vec<_>>>()?;
        aggregate_views(&VertexBank::from_projections(projections)?, tau_w, previous)
    }
}

/// Runs the reverse process from pure noise with fusion in the leading
/// `fusion_fraction` of the steps.
///
/// Each step predicts noise per view, forms the clean estimate, optionally
/// mixes per-view and grid-cell attention, fuses across views on the mesh,
/// corrects the variance, and re-noises to the next timestep with fresh
/// seeded noise. Outside the window the views evolve independently.
pub fn run_collaborative_denoising(
    mesh: &Mesh,
    cameras: &[Camera],
    predictor: &dyn NoisePredictor,
    config: &PipelineConfig,
) -> Result<DenoiseOutput> {
    config.validate()?;
    if cameras.is_empty() {
        return Err(Error::config("at least one camera is required"));
    }
    let schedule = build_schedule(config.steps, config.schedule)?;
    let views = Views {
        mesh,
        frags: cameras.iter().map(|c| rasterize(mesh, c)).collect(),
        scores: Vec::new(),
    };
    let scores = cameras
        .iter()
        .zip(&views.frags)
        .map(|(c, f)| compute_scores(mesh, c, f, config.z_far))
        .collect::<Result<Vec<_>>>()?;
    let views = Views { scores, ..views };
    let conditioning: Vec<FeatureImage> = views
        .scores
        .iter()
        .zip(&views.frags)
        .map(|(s, f)| FeatureImage {
            width: s.width,
            height: s.height,
            channels: 1,
            data: s.distance_score.clone(),
            foreground: (0..f.len()).map(|i| f.is_foreground(i)).collect(),
        })
        .collect();

    let kernel = match config.attention_seed {
        Some(seed) => AttentionKernel::orthonormal(config.channels, seed),
        None => AttentionKernel::identity(config.channels),
    };
    let fused_steps = if config.policy == Policy::Baseline {
        0
    } else {
        fusion_step_count(config.steps, config.fusion_fraction)
    };
    let mut latents: Vec<FeatureImage> = views
        .frags
        .iter()
        .enumerate()
        .map(|(n, f)| {
            let shape = FeatureImage::zeros(f.width, f.height, config.channels).with_foreground_of(f);
            gaussian_like(&shape, sub_seed(config.seed, 0, n as u64))
        })
        .collect();
    let mut log = TrajectoryLog {
        policy: config.policy,
        records: Vec::with_capacity(config.steps),
        stats: Vec::new(),
    };
    let mut previous: Option<Vec<f64>> = None;

    for k in 0..config.steps {
        let t = config.steps - k;
        let step = k + 1;
        let signal = schedule.signal(t);
        let eps = predictor.predict(&latents, t, &schedule, &conditioning)?;
        if eps.len() != latents.len() || eps.iter().zip(&latents).any(|(e, x)| !e.same_shape(x)) {
            return Err(Error::invalid(format!("step {step}: predictor output shape mismatch")));
        }
        check_finite(&eps, step, "predict")?;
        let mut x0: Vec<FeatureImage> = latents.iter().zip(&eps).map(|(x, e)| clean_estimate(x, e, signal)).collect();
        check_finite(&x0, step, "clean-estimate")?;

        let fused = k < fused_steps;
        if fused && config.jnp {
            let grid = config.grid_sizes[k % config.grid_sizes.len()];
            x0 = joint_attention(&x0, &views.frags, mesh, grid, &kernel)?;
            check_finite(&x0, step, "attention")?;
        }

        let renoise = |planes: &[FeatureImage]| -> Result<Vec<FeatureImage>> {
            planes
                .iter()
                .enumerate()
                .map(|(n, p)| forward_noise(p, t - 1, &schedule, sub_seed(config.seed, step as u64, n as u64)))
                .collect()
        };
        let mut current = match (fused, config.fusion_space) {
            (true, FusionSpace::Stepped) => renoise(&x0)?,
            _ => x0,
        };
        let std_pre = foreground_stds(&current);
        let (mut std_raster, mut std_va) = (std_pre.clone(), std_pre.clone());
        let mut targets: Vec<Option<VarianceStats>> = vec![None; current.len()];

        if fused {
            let agg = views.aggregate(&current, config.exponents, config.tau_w, previous.as_deref())?;
            let raster = rasterize_back(&agg, mesh, &views.frags, &current)?;
            check_finite(&raster, step, "rasterize")?;
            std_raster = foreground_stds(&raster);
            current = if config.policy == Policy::MvarVa {
                let stats: Vec<VarianceStats> = if config.pooled_stats {
                    let frags: Vec<&FragmentBuffer> = views.frags.iter().collect();
                    let planes: Vec<&FeatureImage> = raster.iter().collect();
                    vec![estimate_variance_stats_pooled(&agg, mesh, &frags, &planes)?; raster.len()]
                } else {
                    raster
                        .iter()
                        .zip(&views.frags)
                        .map(|(r, f)| estimate_variance_stats(&agg, mesh, f, r))
                        .collect::<Result<_>>()?
                };
                let aligned: Vec<FeatureImage> = raster.iter().zip(&stats).map(|(r, s)| variance_align(r, s)).collect();
                check_finite(&aligned, step, "variance-align")?;
                for (n, s) in stats.iter().enumerate() {
                    for c in 0..s.std_3d.len() {
                        log.stats.push(StatsRow {
                            step,
                            view: n,
                            channel: c,
                            std_2d: s.std_2d[c],
                            std_3d: s.std_3d[c],
                            mean_2d: s.mean_2d[c],
                            mean_3d: s.mean_3d[c],
                        });
                    }
                }
                targets = stats.into_iter().map(Some).collect();
                aligned
            } else {
                raster
            };
            std_va = foreground_stds(&current);
            previous = Some(agg.features);
        }

        latents = match (fused, config.fusion_space) {
            (true, FusionSpace::Stepped) => current,
            _ => renoise(&current)?,
        };
        check_finite(&latents, step, "renoise")?;

        log.records.push(TrajectoryRecord {
            step,
            t,
            fused,
            std_pre: grand_mean(&std_pre),
            std_post_raster: grand_mean(&std_raster),
            std_post_va: grand_mean(&std_va),
            views: (0..latents.len())
                .map(|n| ViewRecord {
                    std_pre: std_pre[n].clone(),
                    std_post_raster: std_raster[n].clone(),
                    std_post_va: std_va[n].clone(),
                    target_std: targets[n].as_ref().map(|s| s.std_3d.clone()),
                    target_mean: targets[n].as_ref().map(|s| s.mean_3d.clone()),
                })
                .collect(),
        });
    }

    let texture = views.aggregate(&latents, config.exponents, config.tau_w, previous.as_deref())?;
    Ok(DenoiseOutput {
        latents,
        texture,
        trajectory: log,
        frags: views.frags,
    })
}
