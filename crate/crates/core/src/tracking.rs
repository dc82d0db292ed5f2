//! Dynamic grasping controller: temporal buffer, momentum prediction,
//! pregrasp servo targets, the grasp trigger and the tracking state machine.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::association::GraspFeature;
use crate::error::{Error, Result};
use crate::registry::TrackingPolicy;
use crate::se3::{rotation_distance, GraspPose, Pose, Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    pub buffer_len: usize,
    pub d_pregrasp: f64,
    pub delta_t: f64,
    pub delta_t_xoy: f64,
    pub delta_r: f64,
    pub approach_cone_limit: f64,
    /// Extrapolation horizon for the predicted grasp, normally the gripper
    /// close latency.
    pub lookahead: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            buffer_len: 10,
            d_pregrasp: 0.035,
            delta_t: 0.055,
            delta_t_xoy: 0.02,
            delta_r: 20f64.to_radians(),
            approach_cone_limit: 25f64.to_radians(),
            lookahead: 0.5,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.d_pregrasp,
            self.delta_t,
            self.delta_t_xoy,
            self.delta_r,
            self.approach_cone_limit,
            self.lookahead,
        ];
        if self.buffer_len == 0 || vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("tracking parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Ready,
    Servoing,
    Grasping,
    Lifting,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Ready => "ready",
            Phase::Servoing => "servoing",
            Phase::Grasping => "grasping",
            Phase::Lifting => "lifting",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub phase: Phase,
    /// `(timestamp, selected grasp)`, oldest first.
    pub buffer: VecDeque<(f64, GraspPose)>,
    pub tracked_feature: Option<GraspFeature>,
    pub tracked_grasp: Option<GraspPose>,
    /// Index into the latest observation of the grasp selected this step.
    pub selected: Option<usize>,
}

impl Default for TrackState {
    fn default() -> Self {
        TrackState::new()
    }
}

impl TrackState {
    pub fn new() -> Self {
        TrackState {
            phase: Phase::Ready,
            buffer: VecDeque::new(),
            tracked_feature: None,
            tracked_grasp: None,
            selected: None,
        }
    }

    fn reset(&mut self) {
        *self = TrackState::new();
    }
}

/// Least-squares velocity of the buffered translations; zero for fewer than
/// two entries or a degenerate time span.
pub fn buffer_velocity(buffer: &VecDeque<(f64, GraspPose)>) -> Vec3 {
    if buffer.len() < 2 {
        return Vec3::zeros();
    }
    let n = buffer.len() as f64;
    let t_mean = buffer.iter().map(|(t, _)| t).sum::<f64>() / n;
    let p_mean = buffer.iter().map(|(_, g)| g.translation).sum::<Vec3>() / n;
    let mut num = Vec3::zeros();
    let mut den = 0.0;
    for (t, g) in buffer {
        let dt = t - t_mean;
        num += (g.translation - p_mean) * dt;
        den += dt * dt;
    }
    if den > 0.0 {
        num / den
    } else {
        Vec3::zeros()
    }
}

/// Appends `g` at `t_now` and extrapolates it by the buffered velocity.
/// A sample at the same timestamp as the newest entry replaces it.
pub fn push_and_predict(state: &mut TrackState, g: &GraspPose, t_now: f64, cfg: &TrackConfig) -> GraspPose {
    if state.buffer.back().is_some_and(|(t, _)| *t >= t_now) {
        state.buffer.pop_back();
    }
    state.buffer.push_back((t_now, g.clone()));
    while state.buffer.len() > cfg.buffer_len {
        state.buffer.pop_front();
    }
    let v = buffer_velocity(&state.buffer);
    let mut out = g.clone();
    out.translation += v * cfg.lookahead;
    out
}

/// Rotation with the approach pointing straight down and the closing axis
/// keeping its horizontal heading.
pub fn flatten_rotation(r: &Rotation) -> Rotation {
    let down = Vec3::new(0.0, 0.0, -1.0);
    let x = r.x_axis();
    let heading = Vec3::new(x.x, x.y, 0.0);
    let x_flat = if heading.norm() > 1e-9 {
        heading.normalize()
    } else {
        // Closing axis vertical: take the heading from the other axis.
        let y = r.y_axis();
        Vec3::new(y.x, y.y, 0.0).normalize().cross(&down)
    };
    Rotation::from_columns(&x_flat, &down.cross(&x_flat), &down)
}

/// Servo target: flattened rotation, backed off `d_pregrasp` along the
/// flattened approach.
pub fn pregrasp_pose(predicted: &GraspPose, cfg: &TrackConfig) -> Pose {
    let rotation = flatten_rotation(&predicted.rotation);
    let translation = predicted.translation - rotation.z_axis() * cfg.d_pregrasp;
    Pose::new(rotation, translation)
}

/// Angle between the approach axis and straight down.
pub fn approach_tilt(g: &GraspPose) -> f64 {
    (-g.approach().z).clamp(-1.0, 1.0).acos()
}

pub fn check_grasp_trigger(predicted: &GraspPose, tcp: &Pose, cfg: &TrackConfig) -> bool {
    let d = predicted.translation - tcp.translation;
    let d_r = rotation_distance(&predicted.rotation, &tcp.rotation);
    let d_xy = (d.x * d.x + d.y * d.y).sqrt();
    d_r <= cfg.delta_r && d.norm() <= cfg.delta_t && d_xy <= cfg.delta_t_xoy
}

/// Grasps the controller may select: inside the approach cone and close
/// enough to their own flattened servo pose that the rotation trigger can
/// fire.
pub fn feasibility_mask(grasps: &[GraspPose], cfg: &TrackConfig) -> Vec<bool> {
    grasps
        .iter()
        .map(|g| {
            approach_tilt(g) <= cfg.approach_cone_limit
                && rotation_distance(&g.rotation, &flatten_rotation(&g.rotation)) <= cfg.delta_r
        })
        .collect()
}

/// Perception output for one frame.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub grasps: &'a [GraspPose],
    pub features: &'a [GraspFeature],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    ServoReady(Pose),
    ServoPregrasp(Pose),
    ExecuteGrasp(GraspPose),
    LiftAndReset,
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::ServoReady(_) => "servo_ready",
            Action::ServoPregrasp(_) => "servo_pregrasp",
            Action::ExecuteGrasp(_) => "execute_grasp",
            Action::LiftAndReset => "lift_and_reset",
        }
    }

    pub fn target(&self) -> Option<Pose> {
        match self {
            Action::ServoReady(p) | Action::ServoPregrasp(p) => Some(p.clone()),
            Action::ExecuteGrasp(g) => Some(g.frame()),
            Action::LiftAndReset => None,
        }
    }
}

/// First-frame choice: highest score among feasible grasps, lowest index on
/// ties.
pub fn select_initial(grasps: &[GraspPose], feasible: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (g, ok)) in grasps.iter().zip(feasible).enumerate() {
        if *ok && best.is_none_or(|b| g.score > grasps[b].score) {
            best = Some(i);
        }
    }
    best
}

/// One controller cycle. Never fails: degenerate input returns to ready.
pub fn step_state_machine(
    state: &TrackState,
    perception: Option<Observation<'_>>,
    tcp: &Pose,
    t_now: f64,
    cfg: &TrackConfig,
    ready: &Pose,
    policy: &dyn TrackingPolicy,
) -> (Action, TrackState) {
    let mut next = state.clone();
    next.selected = None;

    if next.phase == Phase::Grasping {
        next.reset();
        next.phase = Phase::Lifting;
        return (Action::LiftAndReset, next);
    }
    if next.phase == Phase::Lifting {
        next.reset();
    }

    let obs = match perception {
        Some(o) if !o.grasps.is_empty() && o.grasps.len() == o.features.len() => o,
        _ => {
            next.reset();
            return (Action::ServoReady(ready.clone()), next);
        }
    };
    let feasible = feasibility_mask(obs.grasps, cfg);
    let pick = match (&next.tracked_grasp, &next.tracked_feature) {
        (Some(g), Some(f)) if next.phase == Phase::Servoing => policy.select_next(g, f, &obs, &feasible),
        _ => select_initial(obs.grasps, &feasible),
    };
    let Some(i) = pick else {
        next.reset();
        return (Action::ServoReady(ready.clone()), next);
    };

    let chosen = &obs.grasps[i];
    next.selected = Some(i);
    next.tracked_grasp = Some(chosen.clone());
    next.tracked_feature = Some(obs.features[i].clone());
    let predicted = push_and_predict(&mut next, chosen, t_now, cfg);
    if check_grasp_trigger(&predicted, tcp, cfg) {
        next.phase = Phase::Grasping;
        (Action::ExecuteGrasp(predicted), next)
    } else {
        next.phase = Phase::Servoing;
        (Action::ServoPregrasp(pregrasp_pose(&predicted, cfg)), next)
    }
}
