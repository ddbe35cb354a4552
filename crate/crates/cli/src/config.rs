//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use cotex_core::geometry::SubdivisionScheme;
use cotex_core::pipeline::{FusionSpace, PipelineConfig, Policy, ScheduleKind, TargetField};
use cotex_core::projection::ProjectionExponents;

use crate::CliError;

/// Declares the recognized keys once: the key list, the clap flags that
/// override them, and the accessor pairing flags with their keys.
macro_rules! config_keys {
    ($($key:ident),* $(,)?) => {
        pub const KEYS: &[&str] = &[$(stringify!($key)),*];

        /// Command-line overrides, one `--key VALUE` flag per config key.
        #[derive(Debug, Default, Clone, clap::Args)]
        pub struct Overrides {
            $(
                #[arg(long = stringify!($key), value_name = "VALUE", help_heading = "Config overrides")]
                pub $key: Option<String>,
            )*
        }

        impl Overrides {
            pub fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

config_keys!(
    mesh,
    out_dir,
    target,
    views,
    view_spacing_deg,
    elevation,
    camera_distance,
    fov,
    steps,
    schedule_kind,
    fusion_fraction,
    grid_sizes,
    tau_b,
    tau_d,
    tau_w,
    tau_f,
    z_far,
    lambda,
    latent_size,
    channels,
    image_scale,
    seed,
    coarse_levels,
    fine_levels,
    subdivision,
    inpaint_views,
    dilation_kernel,
    perturbation,
    detail_std,
    jnp,
    attention_seed,
    policy,
    pooled_stats,
    fusion_space,
    inpainter,
    stats_csv,
);

/// How masked regions are filled during refinement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InpainterChoice {
    Harmonic,
    /// External program following the image/mask/depth PNG contract.
    Program(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// OBJ input; the bundled sphere when absent.
    pub mesh: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub target: TargetField,
    pub views: usize,
    pub view_spacing_deg: f64,
    pub elevation: f64,
    pub camera_distance: f64,
    pub fov: f64,
    pub latent_size: usize,
    pub image_scale: usize,
    pub coarse_levels: u32,
    pub fine_levels: u32,
    pub subdivision: SubdivisionScheme,
    pub pipeline: PipelineConfig,
    pub tau_f: f64,
    pub lambda: f64,
    pub inpaint_views: Vec<f64>,
    pub dilation_kernel: usize,
    pub perturbation: f64,
    pub detail_std: f64,
    pub inpainter: InpainterChoice,
    pub stats_csv: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: None,
            out_dir: PathBuf::from("out"),
            target: TargetField::default(),
            views: 9,
            view_spacing_deg: 40.0,
            elevation: 10.0,
            camera_distance: 2.5,
            fov: 60.0,
            latent_size: 32,
            image_scale: 4,
            coarse_levels: 1,
            fine_levels: 3,
            subdivision: SubdivisionScheme::Loop,
            pipeline: PipelineConfig::default(),
            tau_f: 6.0,
            lambda: 0.005,
            inpaint_views: vec![0.0, 80.0, 160.0, 280.0],
            dilation_kernel: 8,
            perturbation: 0.2,
            detail_std: 0.3,
            inpainter: InpainterChoice::Harmonic,
            stats_csv: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|s| parse::<f64>(key, s.trim()))
        .collect()
}

fn core_config(key: &str, e: cotex_core::Error) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        let p = &mut self.pipeline;
        match key {
            "mesh" => self.mesh = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "target" => self.target = v.parse().map_err(|e| core_config(key, e))?,
            "views" => self.views = parse(key, v)?,
            "view_spacing_deg" => self.view_spacing_deg = parse(key, v)?,
            "elevation" => self.elevation = parse(key, v)?,
            "camera_distance" => self.camera_distance = parse(key, v)?,
            "fov" => self.fov = parse(key, v)?,
            "steps" => p.steps = parse(key, v)?,
            "schedule_kind" => p.schedule = v.parse::<ScheduleKind>().map_err(|e| core_config(key, e))?,
            "fusion_fraction" => p.fusion_fraction = parse(key, v)?,
            "grid_sizes" => p.grid_sizes = parse_list(key, v)?,
            "tau_b" => p.exponents.tau_b = parse(key, v)?,
            "tau_d" => p.exponents.tau_d = parse(key, v)?,
            "tau_w" => p.tau_w = parse(key, v)?,
            "tau_f" => self.tau_f = parse(key, v)?,
            "z_far" => p.z_far = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "latent_size" => self.latent_size = parse(key, v)?,
            "channels" => p.channels = parse(key, v)?,
            "image_scale" => self.image_scale = parse(key, v)?,
            "seed" => p.seed = parse(key, v)?,
            "coarse_levels" => self.coarse_levels = parse(key, v)?,
            "fine_levels" => self.fine_levels = parse(key, v)?,
            "subdivision" => self.subdivision = v.parse().map_err(|e| core_config(key, e))?,
            "inpaint_views" => self.inpaint_views = parse_list(key, v)?,
            "dilation_kernel" => self.dilation_kernel = parse(key, v)?,
            "perturbation" => self.perturbation = parse(key, v)?,
            "detail_std" => self.detail_std = parse(key, v)?,
            "jnp" => p.jnp = parse_bool(key, v)?,
            "attention_seed" => {
                p.attention_seed = match v {
                    "" | "none" => None,
                    s => Some(parse(key, s)?),
                }
            }
            "policy" => p.policy = v.parse::<Policy>().map_err(|e| core_config(key, e))?,
            "pooled_stats" => p.pooled_stats = parse_bool(key, v)?,
            "fusion_space" => p.fusion_space = v.parse::<FusionSpace>().map_err(|e| core_config(key, e))?,
            "inpainter" => {
                self.inpainter = match v {
                    "harmonic" => InpainterChoice::Harmonic,
                    "" => return Err(CliError::Config("inpainter: empty value".into())),
                    path => InpainterChoice::Program(PathBuf::from(path)),
                }
            }
            "stats_csv" => self.stats_csv = parse_bool(key, v)?,
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected `key = value`", origin.display(), n + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Config(format!("{}:{}: {}", origin.display(), n + 1, e.message())))?;
        }
        Ok(())
    }

    /// Defaults, then the file, then command-line overrides.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            cfg.apply_text(&text, path)?;
        }
        for (key, value) in overrides.pairs() {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.views == 0 {
            return bad("views must be ≥ 1".into());
        }
        if self.latent_size == 0 || self.image_scale == 0 {
            return bad("latent_size and image_scale must be ≥ 1".into());
        }
        if self.pipeline.channels < 3 {
            return bad("channels must be ≥ 3 so latents can be decoded to RGB".into());
        }
        if self.inpaint_views.is_empty() {
            return bad("inpaint_views must list at least one azimuth".into());
        }
        if self.dilation_kernel == 0 {
            return bad("dilation_kernel must be ≥ 1".into());
        }
        if !(self.tau_f > 0.0) || !(self.lambda >= 0.0) {
            return bad("tau_f must be > 0 and lambda ≥ 0".into());
        }
        if !(self.perturbation.is_finite() && self.detail_std >= 0.0) {
            return bad("perturbation must be finite and detail_std ≥ 0".into());
        }
        if !(self.pipeline.z_far > 0.0) {
            return bad(format!("z_far must be > 0, got {}", self.pipeline.z_far));
        }
        if !(self.camera_distance > 0.0) || !(self.fov > 0.0 && self.fov < 180.0) {
            return bad("camera_distance must be > 0 and fov in (0, 180)".into());
        }
        self.pipeline
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.pipeline.steps < 2 {
            return bad("steps must be ≥ 2".into());
        }
        Ok(())
    }

    pub fn ring_azimuths(&self) -> Vec<f64> {
        (0..self.views).map(|k| k as f64 * self.view_spacing_deg).collect()
    }

    pub fn image_size(&self) -> usize {
        self.latent_size * self.image_scale
    }

    pub fn projection_exponents(&self) -> ProjectionExponents {
        self.pipeline.exponents
    }
}
