//! The four subcommands. Every file is written under `out_dir`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::json;

use cotex_core::fusion::foreground_moments;
use cotex_core::geometry::io::write_ply;
use cotex_core::geometry::{rasterize, Mesh};
use cotex_core::imageio::{save_gray, save_rgb, to_u8};
use cotex_core::pipeline::{
    decode_latent, latent_to_rgb, run_collaborative_denoising, DenoiseOutput, Policy, TrajectoryLog,
};
use cotex_core::projection::{compute_scores, render_features, FeatureImage};
use cotex_core::refine::{
    build_conflict_mask, inpaint_refine, pixel_aggregate, render_mask, vertex_variance, ColorRepository,
    ConflictMask, ExternalInpainter, HarmonicInpainter, Inpainter, RefineOptions, RefineReport, VertexColors, ViewSet,
};

use crate::config::{InpainterChoice, RunConfig};
use crate::plot::{line_plot, save_plot, COLORS};
use crate::scene::{cameras_at, load_scene, predictor, ring_cameras, same_azimuth, Scene};
use crate::{io_err, CliError};

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable summary");
    text.push('\n');
    write_text(path, &text)
}

fn write_colors_ply(path: &Path, mesh: &Mesh, colors: &[[f64; 3]]) -> Result<(), CliError> {
    write_ply(mesh, colors, create(path)?)?;
    Ok(())
}

fn az_label(az: f64) -> String {
    format!("{:03}", az.rem_euclid(360.0).round() as i64)
}

// ---------------------------------------------------------------------------
// render

#[derive(Debug, Clone)]
pub struct RenderSummary {
    pub files: Vec<PathBuf>,
}

/// Per ring view: the target field as color, the depth map, and the clamped
/// view score, on the fine mesh at image resolution.
pub fn cmd_render(cfg: &RunConfig) -> Result<RenderSummary, CliError> {
    let scene = load_scene(cfg)?;
    let size = cfg.image_size();
    let cams = ring_cameras(cfg, size)?;
    ensure_dir(&cfg.out_dir)?;
    let mut files = Vec::new();
    for (k, cam) in cams.iter().enumerate() {
        let frag = rasterize(&scene.fine, cam);
        let scores = compute_scores(&scene.fine, cam, &frag, cfg.pipeline.z_far)?;
        let mut color = cfg.target.render(&scene.fine, std::slice::from_ref(&frag), 3).remove(0);
        color.data.iter_mut().for_each(|v| *v = latent_to_rgb(*v));
        for i in 0..frag.len() {
            if !frag.is_foreground(i) {
                color.pixel_mut(i).fill(0.0);
            }
        }
        let depth: Vec<u8> = (0..frag.len())
            .map(|i| if frag.is_foreground(i) { to_u8(1.0 - frag.depth[i] / cfg.pipeline.z_far) } else { 0 })
            .collect();
        let score: Vec<u8> = scores.view_score.iter().map(|&s| to_u8(s)).collect();
        let base = cfg.out_dir.join(format!("view{k}"));
        let paths = [0, 1, 2].map(|n| PathBuf::from(format!("{}_{}.png", base.display(), ["color", "depth", "score"][n])));
        save_rgb(&color, &paths[0])?;
        save_gray(size, size, &depth, &paths[1])?;
        save_gray(size, size, &score, &paths[2])?;
        files.extend(paths);
    }
    Ok(RenderSummary { files })
}

// ---------------------------------------------------------------------------
// shared stages

fn denoise(cfg: &RunConfig, scene: &Scene) -> Result<DenoiseOutput, CliError> {
    let cams = ring_cameras(cfg, cfg.latent_size)?;
    let p = predictor(cfg, &scene.coarse, &cams)?;
    Ok(run_collaborative_denoising(&scene.coarse, &cams, &p, &cfg.pipeline)?)
}

/// RGB images of the refinement views: a ring view's final latent when one
/// shares the azimuth, otherwise the fused latent texture rendered there.
fn refinement_images(cfg: &RunConfig, scene: &Scene, out: &DenoiseOutput, views: &ViewSet) -> Result<Vec<FeatureImage>, CliError> {
    let ring = cfg.ring_azimuths();
    let latent_cams = cameras_at(cfg, &cfg.inpaint_views, cfg.latent_size)?;
    cfg.inpaint_views
        .iter()
        .zip(&latent_cams)
        .zip(&views.frags)
        .map(|((&az, cam), frag)| {
            let latent = match ring.iter().position(|&r| same_azimuth(r, az)) {
                Some(k) => out.latents[k].clone(),
                None => {
                    let f = rasterize(&scene.coarse, cam);
                    render_features(&scene.coarse, &out.texture.features, out.texture.channels, &f)
                }
            };
            Ok(decode_latent(&latent, cfg.image_scale)?.with_foreground_of(frag))
        })
        .collect()
}

struct Conflicts {
    views: ViewSet,
    repository: ColorRepository,
    texture: VertexColors,
    variance: Vec<f64>,
    mask: ConflictMask,
}

fn detect(cfg: &RunConfig, scene: &Scene, out: &DenoiseOutput) -> Result<Conflicts, CliError> {
    let cams = cameras_at(cfg, &cfg.inpaint_views, cfg.image_size())?;
    let views = ViewSet::new(&scene.fine, &cams, cfg.pipeline.z_far)?;
    let images = refinement_images(cfg, scene, out, &views)?;
    let (repository, texture) = pixel_aggregate(&images, &views, &scene.fine, cfg.projection_exponents(), cfg.tau_f)?;
    let variance = vertex_variance(&repository);
    let mask = build_conflict_mask(&variance, cfg.lambda)?;
    Ok(Conflicts {
        views,
        repository,
        texture,
        variance,
        mask,
    })
}

fn inpainter(cfg: &RunConfig) -> Box<dyn Inpainter> {
    match &cfg.inpainter {
        InpainterChoice::Harmonic => Box::new(HarmonicInpainter::default()),
        InpainterChoice::Program(program) => Box::new(ExternalInpainter {
            program: program.clone(),
            scratch: cfg.out_dir.join("inpaint"),
        }),
    }
}

fn write_trajectory(cfg: &RunConfig, log: &TrajectoryLog) -> Result<(), CliError> {
    log.write_csv(create(&cfg.out_dir.join("trajectory.csv"))?)?;
    if cfg.stats_csv {
        log.write_stats_csv(create(&cfg.out_dir.join("variance_stats.csv"))?)?;
    }
    Ok(())
}

fn final_std(log: &TrajectoryLog) -> f64 {
    log.records.last().map_or(0.0, |r| r.std_post_va)
}

// ---------------------------------------------------------------------------
// texture

#[derive(Debug, Clone)]
pub struct TextureSummary {
    pub flagged: usize,
    pub residual: usize,
    pub fusion_steps: usize,
    pub timings: Vec<(&'static str, Duration)>,
}

fn refinement_json(report: &RefineReport) -> serde_json::Value {
    json!(report
        .views
        .iter()
        .map(|v| json!({
            "view": v.view,
            "masked_pixels": v.masked_pixels,
            "updated_vertices": v.updated_vertices,
            "error": v.error,
        }))
        .collect::<Vec<_>>())
}

/// Denoising, pixel aggregation, conflict detection and refinement.
///
/// On failure a `FAILED` file names the stage that failed; files written by
/// earlier stages stay in place.
pub fn cmd_texture(cfg: &RunConfig) -> Result<TextureSummary, CliError> {
    ensure_dir(&cfg.out_dir)?;
    let mut stage = "setup";
    let result = texture_stages(cfg, &mut stage);
    if let Err(e) = &result {
        let _ = write_text(&cfg.out_dir.join("FAILED"), &format!("stage: {stage}\nerror: {e}\n"));
    }
    result
}

fn texture_stages(cfg: &RunConfig, stage: &mut &'static str) -> Result<TextureSummary, CliError> {
    let _ = fs::remove_file(cfg.out_dir.join("FAILED"));
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, Duration)>| {
        timings.push((name, clock.elapsed()));
        clock = Instant::now();
    };

    let scene = load_scene(cfg)?;
    *stage = "denoise";
    let out = denoise(cfg, &scene)?;
    write_trajectory(cfg, &out.trajectory)?;
    let latent_dir = cfg.out_dir.join("latents");
    ensure_dir(&latent_dir)?;
    for (k, (latent, az)) in out.latents.iter().zip(cfg.ring_azimuths()).enumerate() {
        let rgb = decode_latent(latent, 1)?;
        save_rgb(&rgb, &latent_dir.join(format!("view{k}_az{}.png", az_label(az))))?;
    }
    lap("denoise", &mut timings);

    *stage = "aggregate";
    let conflicts = detect(cfg, &scene, &out)?;
    write_colors_ply(&cfg.out_dir.join("texture_initial.ply"), &scene.fine, &conflicts.texture.colors)?;
    lap("aggregate", &mut timings);

    *stage = "refine";
    let options = RefineOptions {
        exponents: cfg.projection_exponents(),
        kernel: cfg.dilation_kernel,
    };
    let fill = inpainter(cfg);
    let report = inpaint_refine(&conflicts.texture, &conflicts.mask, &scene.fine, &conflicts.views, fill.as_ref(), options)?;
    write_colors_ply(&cfg.out_dir.join("texture.ply"), &scene.fine, &report.texture.colors)?;
    let render_dir = cfg.out_dir.join("renders");
    ensure_dir(&render_dir)?;
    let flat = report.texture.flat();
    for (frag, &az) in conflicts.views.frags.iter().zip(&cfg.inpaint_views) {
        let img = render_features(&scene.fine, &flat, 3, frag);
        save_rgb(&img, &render_dir.join(format!("az{}.png", az_label(az))))?;
    }
    lap("refine", &mut timings);

    let after = vertex_variance(&report.repository);
    let flagged = conflicts.mask.count();
    let resolved = (0..after.len()).filter(|&v| conflicts.mask.flags[v] && after[v] <= cfg.lambda).count();
    let summary = json!({
        "status": "ok",
        "seed": cfg.pipeline.seed,
        "policy": cfg.pipeline.policy.tag(),
        "coarse_vertices": scene.coarse.vertex_count(),
        "fine_vertices": scene.fine.vertex_count(),
        "ring_views": cfg.views,
        "refine_views": cfg.inpaint_views,
        "steps": cfg.pipeline.steps,
        "fusion_steps": out.trajectory.fusion_steps(),
        "final_std": final_std(&out.trajectory),
        "fallback_vertices": conflicts.texture.fallback.iter().filter(|&&f| f).count(),
        "flagged_vertices": flagged,
        "resolved_vertices": resolved,
        "residual_flags": report.residual.len(),
        "refinement": refinement_json(&report),
    });
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    Ok(TextureSummary {
        flagged,
        residual: report.residual.len(),
        fusion_steps: out.trajectory.fusion_steps(),
        timings,
    })
}

// ---------------------------------------------------------------------------
// analyze-variance

#[derive(Debug, Clone)]
pub struct AnalyzeSummary {
    /// Per step: baseline, aggregation without and with the correction.
    pub rows: Vec<[f64; 3]>,
    pub fusion_steps: usize,
    /// Fraction of fusion steps where the uncorrected curve is at or below
    /// the baseline.
    pub below_baseline: f64,
    /// `|corrected − baseline| / baseline` at the last step.
    pub final_gap: f64,
    pub elapsed: Duration,
}

/// Runs the three policies from the same seed and records the per-step
/// foreground std after fusion.
pub fn cmd_analyze_variance(cfg: &RunConfig) -> Result<AnalyzeSummary, CliError> {
    let start = Instant::now();
    ensure_dir(&cfg.out_dir)?;
    let scene = load_scene(cfg)?;
    let mut logs = Vec::with_capacity(3);
    for policy in Policy::ALL {
        let mut c = cfg.clone();
        c.pipeline.policy = policy;
        logs.push(denoise(&c, &scene)?.trajectory);
    }
    let rows: Vec<[f64; 3]> = (0..cfg.pipeline.steps)
        .map(|k| [0, 1, 2].map(|p| logs[p].records[k].std_post_va))
        .collect();
    let mut csv = String::from("step,baseline,mvar_no_va,mvar_va\n");
    for (k, r) in rows.iter().enumerate() {
        csv.push_str(&format!("{},{:.9},{:.9},{:.9}\n", k + 1, r[0], r[1], r[2]));
    }
    write_text(&cfg.out_dir.join("variance_trajectory.csv"), &csv)?;
    let fusion_steps = logs[1].fusion_steps();
    let columns: Vec<Vec<f64>> = (0..3).map(|p| rows.iter().map(|r| r[p]).collect()).collect();
    let series: Vec<(&[f64], [u8; 3])> = columns.iter().zip(COLORS).map(|(c, col)| (c.as_slice(), col)).collect();
    save_plot(&line_plot(&series, Some(fusion_steps), 640, 400), &cfg.out_dir.join("variance_trajectory.png"))?;

    let below = rows[..fusion_steps].iter().filter(|r| r[1] <= r[0]).count();
    let last = rows.last().copied().unwrap_or([0.0; 3]);
    Ok(AnalyzeSummary {
        rows,
        fusion_steps,
        below_baseline: if fusion_steps == 0 { 1.0 } else { below as f64 / fusion_steps as f64 },
        final_gap: (last[2] - last[0]).abs() / last[0].abs().max(f64::MIN_POSITIVE),
        elapsed: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// detect-conflicts

#[derive(Debug, Clone)]
pub struct ConflictSummary {
    pub flagged: usize,
    pub visible: usize,
}

/// Conflict detection without refinement: per-vertex variance, a PLY with
/// flagged vertices in red, and the dilated mask of each view.
pub fn cmd_detect_conflicts(cfg: &RunConfig) -> Result<ConflictSummary, CliError> {
    ensure_dir(&cfg.out_dir)?;
    let scene = load_scene(cfg)?;
    let out = denoise(cfg, &scene)?;
    let c = detect(cfg, &scene, &out)?;
    let mut csv = String::from("vertex,variance,flagged\n");
    for (v, (var, flag)) in c.variance.iter().zip(&c.mask.flags).enumerate() {
        csv.push_str(&format!("{v},{var:.9},{}\n", *flag as u8));
    }
    write_text(&cfg.out_dir.join("vertex_variance.csv"), &csv)?;
    let colors: Vec<[f64; 3]> = c
        .texture
        .colors
        .iter()
        .zip(&c.mask.flags)
        .map(|(&col, &f)| if f { [1.0, 0.0, 0.0] } else { col })
        .collect();
    write_colors_ply(&cfg.out_dir.join("conflicts.ply"), &scene.fine, &colors)?;
    let mask_dir = cfg.out_dir.join("masks");
    ensure_dir(&mask_dir)?;
    for (frag, &az) in c.views.frags.iter().zip(&cfg.inpaint_views) {
        let m = cotex_core::refine::dilate(&render_mask(&c.mask, &scene.fine, frag), cfg.dilation_kernel)?;
        save_gray(m.width, m.height, &m.to_u8(), &mask_dir.join(format!("az{}.png", az_label(az))))?;
    }
    let visible = (0..c.repository.vertices)
        .filter(|&v| (0..c.repository.views).any(|n| c.repository.color(n, v).is_some()))
        .count();
    let per_view_std: Vec<f64> = out.latents.iter().map(|l| foreground_moments(l).1.iter().sum::<f64>() / l.channels as f64).collect();
    write_json(
        &cfg.out_dir.join("conflicts.json"),
        &json!({
            "lambda": cfg.lambda,
            "fine_vertices": scene.fine.vertex_count(),
            "visible_vertices": visible,
            "flagged_vertices": c.mask.count(),
            "final_latent_std": per_view_std,
        }),
    )?;
    Ok(ConflictSummary {
        flagged: c.mask.count(),
        visible,
    })
}
