//! Meshes, cameras and target latents derived from a run configuration.

use cotex_core::geometry::io::read_obj;
use cotex_core::geometry::shapes::icosphere;
use cotex_core::geometry::{cameras_at_azimuths, normalize_mesh, rasterize, subdivide, Camera, Mesh};
use cotex_core::pipeline::ToyPredictor;
use cotex_core::projection::FeatureImage;

use crate::config::RunConfig;
use crate::CliError;

/// Coarse mesh for latent fusion and fine mesh for pixel-space refinement.
#[derive(Debug, Clone)]
pub struct Scene {
    pub coarse: Mesh,
    pub fine: Mesh,
}

/// The base mesh: the configured OBJ or a level-1 icosphere.
pub fn base_mesh(cfg: &RunConfig) -> Result<Mesh, CliError> {
    let mesh = match &cfg.mesh {
        Some(path) => read_obj(path).map_err(|e| match e {
            cotex_core::Error::Io(source) => CliError::Io { path: path.clone(), source },
            other => other.into(),
        })?,
        None => icosphere(1),
    };
    Ok(normalize_mesh(mesh)?)
}

pub fn load_scene(cfg: &RunConfig) -> Result<Scene, CliError> {
    let base = base_mesh(cfg)?;
    let level = |n: u32| -> Result<Mesh, CliError> { Ok(normalize_mesh(subdivide(&base, n, cfg.subdivision)?)?) };
    Ok(Scene {
        coarse: level(cfg.coarse_levels)?,
        fine: level(cfg.fine_levels)?,
    })
}

pub fn ring_cameras(cfg: &RunConfig, resolution: usize) -> Result<Vec<Camera>, CliError> {
    Ok(cameras_at_azimuths(
        &cfg.ring_azimuths(),
        cfg.elevation,
        cfg.camera_distance,
        cfg.fov,
        (resolution, resolution),
    )?)
}

pub fn cameras_at(cfg: &RunConfig, azimuths: &[f64], resolution: usize) -> Result<Vec<Camera>, CliError> {
    Ok(cameras_at_azimuths(azimuths, cfg.elevation, cfg.camera_distance, cfg.fov, (resolution, resolution))?)
}

/// Per-view target latents of the procedural field on the coarse mesh.
pub fn target_latents(cfg: &RunConfig, mesh: &Mesh, cameras: &[Camera]) -> Vec<FeatureImage> {
    let frags: Vec<_> = cameras.iter().map(|c| rasterize(mesh, c)).collect();
    cfg.target.render(mesh, &frags, cfg.pipeline.channels)
}

pub fn predictor(cfg: &RunConfig, mesh: &Mesh, cameras: &[Camera]) -> Result<ToyPredictor, CliError> {
    Ok(ToyPredictor::new(target_latents(cfg, mesh, cameras), cfg.detail_std)?.perturbed(cfg.perturbation, cfg.pipeline.seed))
}

/// Same direction on the circle, within a millidegree.
pub fn same_azimuth(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(360.0);
    d < 1e-3 || d > 360.0 - 1e-3
}
