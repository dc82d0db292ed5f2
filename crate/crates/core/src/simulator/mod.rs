//! Deterministic kinematic scenes with moving rigid objects, a synthetic
//! depth sensor, an analytic perception oracle and the episode runner.

mod config;
mod dataset;
mod episode;
mod perception;
mod render;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objects::ObjectModel;
use crate::se3::{Pose, Rotation, Vec3};

pub use config::{
    CameraConfig, ControllerConfig, FloorConfig, ObjectConfig, PerceptionConfig, RandomizeConfig, SceneConfig,
    ShapeSpec, SimWorld,
};
pub use dataset::{association_pair, AssociationPair, PairOptions, PairRecord};
pub use episode::{
    classify_failure, run_episode, run_episodes, summarize, ActionRecord, EpisodeReport, EpisodeSummary, FailureClass,
    FailureEvidence, Outcome,
};
pub use perception::{oracle_perception, LabelLibrary, Perception};
pub use render::{render_cloud, Camera, PointCloud};

/// Scripted object motion. Translation-type movers never tilt the object,
/// so approach angles measured against the world vertical are invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mover {
    Static,
    ConstantVelocity {
        velocity: [f64; 3],
        /// Spin about the world vertical through the object origin, rad/s.
        #[serde(default)]
        yaw_rate: f64,
    },
    /// Closed polyline traversed at constant speed; positions are offsets
    /// relative to the first waypoint.
    WaypointLoop { points: Vec<[f64; 3]>, speed: f64 },
    Sinusoid { axis: [f64; 3], amplitude: f64, period: f64 },
}

impl Default for Mover {
    fn default() -> Self {
        Mover::Static
    }
}

impl Mover {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Mover::Static => true,
            Mover::ConstantVelocity { velocity, yaw_rate } => finite(velocity) && yaw_rate.is_finite(),
            Mover::WaypointLoop { points, speed } => {
                !points.is_empty() && points.iter().all(|p| finite(p)) && speed.is_finite() && *speed >= 0.0
            }
            Mover::Sinusoid { axis, amplitude, period } => {
                finite(axis) && Vec3::from(*axis).norm() > 0.0 && amplitude.is_finite() && period.is_finite() && *period > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid mover {self:?}")))
        }
    }

    /// Offset from the anchor translation at time `t` for closed-form movers.
    fn offset(&self, t: f64) -> Vec3 {
        match self {
            Mover::Static | Mover::ConstantVelocity { .. } => Vec3::zeros(),
            Mover::WaypointLoop { points, speed } => {
                let first = Vec3::from(points[0]);
                waypoint_position(points, speed * t) - first
            }
            Mover::Sinusoid { axis, amplitude, period } => {
                Vec3::from(*axis).normalize() * (amplitude * (2.0 * std::f64::consts::PI * t / period).sin())
            }
        }
    }

    /// Instantaneous translational velocity at time `t`.
    pub fn velocity(&self, t: f64) -> Vec3 {
        match self {
            Mover::Static => Vec3::zeros(),
            Mover::ConstantVelocity { velocity, .. } => Vec3::from(*velocity),
            Mover::WaypointLoop { .. } | Mover::Sinusoid { .. } => {
                let h = 1e-4;
                (self.offset(t + h) - self.offset(t - h)) / (2.0 * h)
            }
        }
    }
}

/// Point at arc length `s` along the closed loop through `points`.
fn waypoint_position(points: &[[f64; 3]], s: f64) -> Vec3 {
    let pts: Vec<Vec3> = points.iter().map(|p| Vec3::from(*p)).collect();
    let n = pts.len();
    let seg_len: Vec<f64> = (0..n).map(|i| (pts[(i + 1) % n] - pts[i]).norm()).collect();
    let total: f64 = seg_len.iter().sum();
    if total <= 0.0 {
        return pts[0];
    }
    let mut s = s.rem_euclid(total);
    for i in 0..n {
        if s <= seg_len[i] && seg_len[i] > 0.0 {
            return pts[i] + (pts[(i + 1) % n] - pts[i]) * (s / seg_len[i]);
        }
        s -= seg_len[i];
    }
    pts[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub model: Arc<ObjectModel>,
    pub pose: Pose,
    pub mover: Mover,
    /// Pose at `t = 0`; closed-form movers are evaluated relative to it.
    pub anchor: Pose,
    pub color: Vec3,
}

impl SceneObject {
    pub fn new(model: Arc<ObjectModel>, pose: Pose, mover: Mover, color: Vec3) -> Self {
        SceneObject {
            model,
            anchor: pose.clone(),
            pose,
            mover,
            color,
        }
    }

    pub fn id(&self) -> u32 {
        self.model.object_id
    }
}

/// Unlabelled static geometry that is rendered and collides (tank floor).
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub points: Vec<Vec3>,
    pub color: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub objects: Vec<SceneObject>,
    pub background: Option<Arc<Background>>,
    pub t: f64,
}

impl SceneState {
    pub fn new(objects: Vec<SceneObject>, background: Option<Arc<Background>>) -> Self {
        SceneState { objects, background, t: 0.0 }
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id() == id)
    }

    pub fn object_poses(&self) -> crate::annotation::ObjectPoses {
        self.objects.iter().map(|o| (o.id(), o.pose.clone())).collect()
    }

    /// Every object sample and background point in the world frame.
    pub fn world_points(&self) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = self
            .objects
            .iter()
            .flat_map(|o| o.model.points.iter().map(|p| o.pose.transform_point(p)))
            .collect();
        if let Some(b) = &self.background {
            out.extend_from_slice(&b.points);
        }
        out
    }
}

/// Advances every object by its mover.
pub fn step_scene(s: &SceneState, dt: f64) -> SceneState {
    let mut next = s.clone();
    if dt <= 0.0 {
        return next;
    }
    next.t = s.t + dt;
    for o in &mut next.objects {
        match &o.mover {
            Mover::Static => {}
            Mover::ConstantVelocity { velocity, yaw_rate } => {
                o.pose.translation += Vec3::from(*velocity) * dt;
                if *yaw_rate != 0.0 {
                    o.pose.rotation = Rotation::rot_z(yaw_rate * dt).compose(&o.pose.rotation);
                }
            }
            m => {
                o.pose.translation = o.anchor.translation + m.offset(next.t);
            }
        }
    }
    next
}
