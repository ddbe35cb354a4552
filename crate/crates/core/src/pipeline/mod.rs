//! The collaborative denoising driver and its supporting pieces.

mod denoise;
mod predictor;
mod schedule;
mod targets;

pub use denoise::{
    fusion_step_count, run_collaborative_denoising, DenoiseOutput, FusionSpace, PipelineConfig, Policy, StatsRow,
    TrajectoryLog, TrajectoryRecord, ViewRecord,
};
pub use predictor::{add_low_frequency, clean_estimate, NoisePredictor, ToyPredictor};
pub use schedule::{build_schedule, forward_noise, gaussian_like, sub_seed, NoiseSchedule, ScheduleKind};
pub use targets::{decode_latent, latent_to_rgb, TargetField};
