//! Object models as oriented surface samples, plus analytic shapes.

use crate::error::{Error, Result};
use crate::se3::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub object_id: u32,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Center of gravity under uniform density.
    pub cog: Vec3,
    /// Largest distance from the model origin to a sample.
    pub bounding_radius: f64,
}

impl ObjectModel {
    /// Builds a model; without an explicit `cog` the sample centroid is used.
    pub fn new(object_id: u32, points: Vec<Vec3>, normals: Vec<Vec3>, cog: Option<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid(format!("object {object_id} has no surface samples")));
        }
        if points.len() != normals.len() {
            return Err(Error::invalid(format!(
                "object {object_id}: {} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        for (i, (p, n)) in points.iter().zip(&normals).enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("object {object_id}: sample {i} is not finite")));
            }
            if (n.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("object {object_id}: normal {i} is not unit length")));
            }
        }
        let cog = cog.unwrap_or_else(|| points.iter().sum::<Vec3>() / points.len() as f64);
        if !cog.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("object {object_id}: center of gravity is not finite")));
        }
        let bounding_radius = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        Ok(ObjectModel {
            object_id,
            points,
            normals,
            cog,
            bounding_radius,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Uniformly scales the model about its origin.
    pub fn scaled(mut self, s: f64) -> Self {
        for p in &mut self.points {
            *p *= s;
        }
        self.cog *= s;
        self.bounding_radius *= s;
        self
    }
}

/// `n` quasi-uniform unit vectors on the sphere (Fibonacci lattice).
pub(crate) fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Farthest-point subsample starting from index 0. Returns sorted-by-pick
/// indices; ties go to the smaller index.
pub fn farthest_point_sample(points: &[Vec3], count: usize) -> Vec<usize> {
    if points.is_empty() || count == 0 {
        return Vec::new();
    }
    if count >= points.len() {
        return (0..points.len()).collect();
    }
    let mut picked = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut current = 0;
    for _ in 0..count {
        picked.push(current);
        let c = points[current];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in points.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best.0 {
                best = (dist[i], i);
            }
        }
        current = best.1;
    }
    picked
}

pub mod shapes {
    //! Analytic test objects centred on their model origin.

    use super::{fibonacci_sphere, ObjectModel};
    use crate::se3::Vec3;

    pub fn sphere(object_id: u32, radius: f64, samples: usize) -> ObjectModel {
        let dirs = fibonacci_sphere(samples.max(1));
        let points = dirs.iter().map(|d| d * radius).collect();
        ObjectModel::new(object_id, points, dirs, Some(Vec3::zeros())).expect("valid sphere")
    }

    /// Ellipsoid with the given semi-axes. Sample density is not uniform.
    pub fn ellipsoid(object_id: u32, semi_axes: Vec3, samples: usize) -> ObjectModel {
        let dirs = fibonacci_sphere(samples.max(1));
        let points: Vec<Vec3> = dirs.iter().map(|d| d.component_mul(&semi_axes)).collect();
        let normals = points
            .iter()
            .map(|p| {
                Vec3::new(
                    p.x / (semi_axes.x * semi_axes.x),
                    p.y / (semi_axes.y * semi_axes.y),
                    p.z / (semi_axes.z * semi_axes.z),
                )
                .normalize()
            })
            .collect();
        ObjectModel::new(object_id, points, normals, Some(Vec3::zeros())).expect("valid ellipsoid")
    }

    /// Box surface sampled on a regular grid of roughly `spacing` per face.
    pub fn cuboid(object_id: u32, half_extents: Vec3, spacing: f64) -> ObjectModel {
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let nu = ((2.0 * half_extents[u] / spacing).ceil() as usize).max(1);
            let nv = ((2.0 * half_extents[v] / spacing).ceil() as usize).max(1);
            for sign in [-1.0, 1.0] {
                let mut n = Vec3::zeros();
                n[axis] = sign;
                for i in 0..=nu {
                    for j in 0..=nv {
                        let mut p = Vec3::zeros();
                        p[axis] = sign * half_extents[axis];
                        p[u] = -half_extents[u] + 2.0 * half_extents[u] * i as f64 / nu as f64;
                        p[v] = -half_extents[v] + 2.0 * half_extents[v] * j as f64 / nv as f64;
                        points.push(p);
                        normals.push(n);
                    }
                }
            }
        }
        ObjectModel::new(object_id, points, normals, Some(Vec3::zeros())).expect("valid cuboid")
    }

    /// Capped cylinder along z.
    pub fn cylinder(object_id: u32, radius: f64, half_height: f64, spacing: f64) -> ObjectModel {
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let n_around = ((2.0 * std::f64::consts::PI * radius / spacing).ceil() as usize).max(8);
        let n_up = ((2.0 * half_height / spacing).ceil() as usize).max(1);
        for i in 0..n_around {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n_around as f64;
            let dir = Vec3::new(a.cos(), a.sin(), 0.0);
            for j in 0..=n_up {
                let z = -half_height + 2.0 * half_height * j as f64 / n_up as f64;
                points.push(dir * radius + Vec3::new(0.0, 0.0, z));
                normals.push(dir);
            }
        }
        let n_rings = ((radius / spacing).ceil() as usize).max(1);
        for sign in [-1.0, 1.0] {
            points.push(Vec3::new(0.0, 0.0, sign * half_height));
            normals.push(Vec3::new(0.0, 0.0, sign));
            for r in 1..=n_rings {
                let rr = radius * r as f64 / n_rings as f64;
                let count = ((2.0 * std::f64::consts::PI * rr / spacing).ceil() as usize).max(6);
                for k in 0..count {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    points.push(Vec3::new(rr * a.cos(), rr * a.sin(), sign * half_height));
                    normals.push(Vec3::new(0.0, 0.0, sign));
                }
            }
        }
        ObjectModel::new(object_id, points, normals, Some(Vec3::zeros())).expect("valid cylinder")
    }
}
