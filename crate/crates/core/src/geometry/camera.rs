use crate::error::{Error, Result};
use crate::math::Vec3;

/// Right-handed look-at pinhole camera aimed at the origin.
///
/// Azimuth 0 places the camera on +Z; azimuth grows toward +X. Elevation lifts
/// the camera toward +Y. `fov` is the vertical field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub fov: f64,
    pub width: usize,
    pub height: usize,
}

/// Camera-space frame: `right`, `up`, and `back` (camera looks down `-back`).
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub eye: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub back: Vec3,
    focal: f64,
    aspect: f64,
}

impl Camera {
    pub fn new(
        azimuth: f64,
        elevation: f64,
        distance: f64,
        fov: f64,
        (width, height): (usize, usize),
    ) -> Result<Self> {
        if !(distance > 0.0) {
            return Err(Error::config(format!("camera distance must be > 0, got {distance}")));
        }
        if !(fov > 0.0 && fov < 180.0) {
            return Err(Error::config(format!("fov must lie in (0, 180), got {fov}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::config("camera resolution must be at least 1×1"));
        }
        Ok(Camera {
            azimuth,
            elevation,
            distance,
            fov,
            width,
            height,
        })
    }

    pub fn position(&self) -> Vec3 {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * self.distance
    }

    pub fn frame(&self) -> CameraFrame {
        let eye = self.position();
        let back = eye.normalized().expect("distance > 0");
        let world_up = if back.cross(Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-9 {
            Vec3::new(0.0, 0.0, -1.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let right = world_up.cross(back).normalized().expect("non-parallel up");
        let up = back.cross(right);
        CameraFrame {
            eye,
            right,
            up,
            back,
            focal: 1.0 / (self.fov.to_radians() * 0.5).tan(),
            aspect: self.width as f64 / self.height as f64,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

impl CameraFrame {
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = p - self.eye;
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.back))
    }

    /// Continuous screen position (pixel units, y down) and the positive
    /// view depth `w`. Returns `None` when the point is behind the eye.
    pub fn project(&self, p: Vec3, width: usize, height: usize) -> Option<(f64, f64, f64)> {
        let c = self.to_camera(p);
        let w = -c.z;
        if w <= 1e-9 {
            return None;
        }
        let ndc_x = self.focal * c.x / (self.aspect * w);
        let ndc_y = self.focal * c.y / w;
        Some((
            (ndc_x + 1.0) * 0.5 * width as f64,
            (1.0 - ndc_y) * 0.5 * height as f64,
            w,
        ))
    }

    /// World-space unit direction of the ray through a continuous screen point.
    pub fn ray(&self, sx: f64, sy: f64, width: usize, height: usize) -> Vec3 {
        let ndc_x = 2.0 * sx / width as f64 - 1.0;
        let ndc_y = 1.0 - 2.0 * sy / height as f64;
        let d = self.right * (ndc_x * self.aspect / self.focal) + self.up * (ndc_y / self.focal)
            - self.back;
        d.normalized().expect("finite ray")
    }
}

/// `n_views` cameras evenly spaced in azimuth starting at 0°.
pub fn make_camera_ring(
    n_views: usize,
    elevation: f64,
    distance: f64,
    fov: f64,
    resolution: (usize, usize),
) -> Result<Vec<Camera>> {
    if n_views == 0 {
        return Err(Error::config("camera ring needs at least one view"));
    }
    let step = 360.0 / n_views as f64;
    let azimuths: Vec<f64> = (0..n_views).map(|k| step * k as f64).collect();
    cameras_at_azimuths(&azimuths, elevation, distance, fov, resolution)
}

pub fn cameras_at_azimuths(
    azimuths: &[f64],
    elevation: f64,
    distance: f64,
    fov: f64,
    resolution: (usize, usize),
) -> Result<Vec<Camera>> {
    azimuths
        .iter()
        .map(|&az| Camera::new(az, elevation, distance, fov, resolution))
        .collect()
}
