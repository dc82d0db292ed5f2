//! Rigid-body pose algebra, the grasp pose type and the object-frame grasp
//! distance.
//!
//! Gripper frame convention: the z-axis is the approach direction, the
//! x-axis is the finger closing line and y completes a right-handed frame.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// A proper rotation stored as a 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Builds a rotation from nine row-major entries, rejecting anything that
    /// is not orthonormal with determinant +1 (tolerance 1e-6).
    pub fn from_row_major(entries: &[f64; 9]) -> Result<Self> {
        let m = Matrix3::from_row_slice(entries);
        let r = Rotation(m);
        r.validate(1e-6)?;
        Ok(r)
    }

    pub fn from_columns(x: &Vec3, y: &Vec3, z: &Vec3) -> Self {
        Rotation(Matrix3::from_columns(&[*x, *y, *z]))
    }

    /// Rotation of `angle` radians about a unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let k = axis.normalize();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Rotation(Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos()))
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Closing axis (first column).
    pub fn x_axis(&self) -> Vec3 {
        self.0.column(0).into_owned()
    }

    pub fn y_axis(&self) -> Vec3 {
        self.0.column(1).into_owned()
    }

    /// Approach axis (third column).
    pub fn z_axis(&self) -> Vec3 {
        self.0.column(2).into_owned()
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let err = (self.0.transpose() * self.0 - Matrix3::identity()).abs().max();
        if !err.is_finite() || err > tol {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (max deviation {err:e})"
            )));
        }
        let det = self.0.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::invalid(format!("rotation determinant is {det}")));
        }
        Ok(())
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::identity()
    }
}

impl Serialize for Rotation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = <[f64; 9]>::deserialize(d)?;
        Rotation::from_row_major(&entries).map_err(serde::de::Error::custom)
    }
}

/// Rigid transform mapping points from a child frame into a parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    #[serde(with = "vec3_serde")]
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose::new(Rotation::identity(), t)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt.apply(&self.translation)),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.apply(v)
    }
}

/// A parallel-jaw grasp: gripper frame, opening width, approach depth and
/// the scores attached by annotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub rotation: Rotation,
    #[serde(with = "vec3_serde")]
    pub translation: Vec3,
    pub width: f64,
    pub depth: f64,
    pub score: f64,
    pub stable_score: f64,
    pub object_id: Option<u32>,
}

impl GraspPose {
    pub fn new(rotation: Rotation, translation: Vec3, width: f64, depth: f64) -> Self {
        GraspPose {
            rotation,
            translation,
            width,
            depth,
            score: 0.0,
            stable_score: 0.0,
            object_id: None,
        }
    }

    pub fn with_object(mut self, id: u32) -> Self {
        self.object_id = Some(id);
        self
    }

    /// The gripper frame as a pose (grasp frame to parent frame).
    pub fn frame(&self) -> Pose {
        Pose::new(self.rotation, self.translation)
    }

    pub fn approach(&self) -> Vec3 {
        self.rotation.z_axis()
    }

    pub fn closing_axis(&self) -> Vec3 {
        self.rotation.x_axis()
    }

    /// The 12 pose parameters: row-major rotation then translation.
    pub fn pose_parameters(&self) -> [f64; 12] {
        let r = self.rotation.row_major();
        let mut out = [0.0; 12];
        out[..9].copy_from_slice(&r);
        out[9] = self.translation.x;
        out[10] = self.translation.y;
        out[11] = self.translation.z;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceParams {
    /// Translation normaliser in meters.
    pub w_max: f64,
    /// Weight of the normalised rotation term.
    pub gamma: f64,
}

impl Default for DistanceParams {
    fn default() -> Self {
        DistanceParams {
            w_max: 0.01,
            gamma: 0.1,
        }
    }
}

impl DistanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_max > 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::invalid(format!(
                "distance params need w_max > 0 and gamma >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Gripper frame whose third column is `approach_dir`, with the closing axis
/// turned by `in_plane_angle` about it.
///
/// The reference closing axis is world x projected onto the plane orthogonal
/// to the approach (world y when the approach is nearly parallel to x).
pub fn rotation_from_view(approach_dir: &Vec3, in_plane_angle: f64) -> Result<Rotation> {
    let n = approach_dir.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::invalid("approach direction has zero length"));
    }
    let z = approach_dir / n;
    let helper = if z.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let x0 = (helper - z * z.dot(&helper)).normalize();
    let y0 = z.cross(&x0);
    let (s, c) = in_plane_angle.sin_cos();
    let x = x0 * c + y0 * s;
    let y = z.cross(&x);
    Ok(Rotation::from_columns(&x, &y, &z))
}

/// Geodesic angle between two rotations, in `[0, π]`.
pub fn rotation_distance(r1: &Rotation, r2: &Rotation) -> f64 {
    // acos of the trace alone loses half the digits near 0 and π.
    let m = r1.matrix().transpose() * r2.matrix();
    let sin = 0.5 * Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    let cos = 0.5 * (m.trace() - 1.0);
    sin.atan2(cos)
}

/// `Δt / w_max + γ·ΔR / π`, or infinity when the grasps belong to
/// different objects.
pub fn grasp_distance(g1: &GraspPose, g2: &GraspPose, p: &DistanceParams) -> f64 {
    if g1.object_id != g2.object_id {
        return f64::INFINITY;
    }
    let dt = (g1.translation - g2.translation).norm();
    let dr = rotation_distance(&g1.rotation, &g2.rotation);
    dt / p.w_max + p.gamma * dr / PI
}

pub fn transform_grasp(g: &GraspPose, t: &Pose) -> GraspPose {
    GraspPose {
        rotation: t.rotation.compose(&g.rotation),
        translation: t.transform_point(&g.translation),
        ..*g
    }
}

pub(crate) mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}
