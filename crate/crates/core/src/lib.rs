//! Multi-view texture fusion on triangle meshes.
//!
//! Per-view feature planes are back-projected onto mesh vertices, fused across
//! views with power-mean weights, rasterized back with a variance correction,
//! and denoised jointly under a pluggable noise predictor. A pixel-space pass
//! flags vertices whose colors disagree across views and inpaints them.

pub mod attention;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod imageio;
pub mod math;
pub mod pipeline;
pub mod projection;
pub mod refine;

pub use error::{Error, Result};
pub use math::Vec3;
