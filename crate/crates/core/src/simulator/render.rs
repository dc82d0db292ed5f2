//! Pinhole camera and z-buffer point splatting with Gaussian depth noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SceneState;
use crate::error::{Error, Result};
use crate::se3::{Pose, Rotation, Vec3};

/// Optical axis `+z`, image `x` to the right and `y` down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub pose: Pose,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub depth_noise_sigma: f64,
}

impl Camera {
    /// Camera at `position` looking at `target` with a centred principal point.
    pub fn look_at(position: Vec3, target: Vec3, focal: f64, width: usize, height: usize, sigma: f64) -> Result<Self> {
        let z = target - position;
        if z.norm() == 0.0 {
            return Err(Error::invalid("camera position coincides with its target"));
        }
        let z = z.normalize();
        let helper = if z.y.abs() < 0.9 { Vec3::y() } else { Vec3::x() };
        let x = helper.cross(&z).normalize();
        let y = z.cross(&x);
        let cam = Camera {
            pose: Pose::new(Rotation::from_columns(&x, &y, &z), position),
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            depth_noise_sigma: sigma,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera needs positive focal lengths and a non-empty image"));
        }
        if !(self.depth_noise_sigma >= 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invalid("camera noise must be non-negative and the principal point finite"));
        }
        self.pose.rotation.validate(1e-6)
    }

    /// Pixel and depth of a camera-frame point, if it lands on the image.
    pub fn project(&self, p: &Vec3) -> Option<(usize, usize, f64, f64)> {
        if p.z <= 1e-6 {
            return None;
        }
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize, u, v))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<Vec3>>,
    /// Object each point came from; `None` for background.
    pub sources: Vec<Option<u32>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count_from(&self, id: u32) -> usize {
        self.sources.iter().filter(|s| **s == Some(id)).count()
    }
}

#[derive(Clone, Copy)]
struct Hit {
    depth: f64,
    cam: Vec3,
    color: Vec3,
    source: Option<u32>,
}

/// Splats every surface sample into its pixel, keeps the nearest per pixel,
/// perturbs the depth and back-projects along the sample's own ray.
pub fn render_cloud(s: &SceneState, cam: &Camera, seed: u64) -> PointCloud {
    let mut zbuf: Vec<Option<Hit>> = vec![None; cam.width * cam.height];
    let world_to_cam = cam.pose.inverse();
    let mut splat = |p_world: Vec3, color: Vec3, source: Option<u32>| {
        let p = world_to_cam.transform_point(&p_world);
        if let Some((iu, iv, _, _)) = cam.project(&p) {
            let slot = &mut zbuf[iv * cam.width + iu];
            if slot.is_none_or(|h| p.z < h.depth) {
                *slot = Some(Hit { depth: p.z, cam: p, color, source });
            }
        }
    };
    for o in &s.objects {
        for q in &o.model.points {
            splat(o.pose.transform_point(q), o.color, Some(o.id()));
        }
    }
    if let Some(b) = &s.background {
        for q in &b.points {
            splat(*q, b.color, None);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cam.depth_noise_sigma.max(0.0)).expect("finite sigma");
    let mut cloud = PointCloud {
        colors: Some(Vec::new()),
        ..Default::default()
    };
    for h in zbuf.into_iter().flatten() {
        let n = if cam.depth_noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let z = h.depth + n;
        if z <= 1e-6 {
            continue;
        }
        let p = h.cam * (z / h.depth);
        cloud.points.push(cam.pose.transform_point(&p));
        cloud.colors.as_mut().expect("colors").push(h.color);
        cloud.sources.push(h.source);
    }
    cloud
}
