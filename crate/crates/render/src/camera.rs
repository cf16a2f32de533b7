use std::f64::consts::{FRAC_PI_3, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uv3_core::{Error, Mesh, Result, Vec3};

use crate::bvh::Ray;

/// Camera distance in units of the mesh bounding radius.
pub const ORBIT_DISTANCE: f64 = 2.5;
pub const DEFAULT_FOV: f64 = std::f64::consts::FRAC_PI_4;
pub const MAX_ELEVATION: f64 = FRAC_PI_3;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(position: Vec3, look_at: Vec3, up: Vec3, fov: f64, width: usize, height: usize) -> Result<Self> {
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(Error::invalid(format!("field of view {fov} outside (0, pi)")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        let view = look_at - position;
        if view.norm() == 0.0 || view.normalize().cross(&up.normalize()).norm() < 1e-9 {
            return Err(Error::invalid("up vector is parallel to the view direction"));
        }
        Ok(Self {
            position,
            look_at,
            up,
            fov,
            width,
            height,
        })
    }

    /// Camera on the viewing sphere around the mesh centroid; `y` is up.
    pub fn orbit(mesh: &Mesh, azimuth: f64, elevation: f64, width: usize, height: usize) -> Result<Self> {
        let c = mesh.centroid();
        let r = ORBIT_DISTANCE * mesh.bounding_radius().max(1e-12);
        let dir = Vec3::new(elevation.cos() * azimuth.cos(), elevation.sin(), elevation.cos() * azimuth.sin());
        Self::new(c + dir * r, c, Vec3::y(), DEFAULT_FOV, width, height)
    }

    /// Azimuth uniform in `[0, 2 pi)` and elevation uniform in `[0, pi/3]`.
    pub fn random(mesh: &Mesh, seed: u64, width: usize, height: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let azimuth = rng.random_range(0.0..TAU);
        let elevation = rng.random_range(0.0..=MAX_ELEVATION);
        Self::orbit(mesh, azimuth, elevation, width, height)
    }

    /// Ray through the center of pixel `(x, y)`, with `y` growing downwards.
    pub fn ray(&self, x: usize, y: usize) -> Ray {
        let forward = (self.look_at - self.position).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        let half = (self.fov * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let sx = (2.0 * (x as f64 + 0.5) / self.width as f64 - 1.0) * half * aspect;
        let sy = (1.0 - 2.0 * (y as f64 + 0.5) / self.height as f64) * half;
        Ray::new(self.position, forward + right * sx + up * sy)
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        let v = |p: &Vec3| format!("{} {} {}", p.x, p.y, p.z);
        vec![
            ("camera.position".into(), v(&self.position)),
            ("camera.look_at".into(), v(&self.look_at)),
            ("camera.up".into(), v(&self.up)),
            ("camera.fov".into(), self.fov.to_string()),
            ("camera.orbit_distance".into(), ORBIT_DISTANCE.to_string()),
        ]
    }
}
