//! Closed-loop episodes: render, perceive, step the controller, move the
//! TCP, and judge the grasp at gripper-close time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{oracle_perception, render_cloud, step_scene, Perception, SceneState, SimWorld};
use crate::collision::{check_collision, find_contacts, Corridor};
use crate::error::{Error, Result};
use crate::registry::{policy_registry, TrackingPolicy};
use crate::se3::{grasp_distance, transform_grasp, DistanceParams, GraspPose, Pose, Rotation, Vec3};
use crate::tracking::{check_grasp_trigger, step_state_machine, Action, Observation, TrackState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    Slip,
    PredictionAhead,
    PushAway,
    PredictionBehind,
    CorrespondenceSwitch,
}

impl FailureClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureClass::Slip => "slip",
            FailureClass::PredictionAhead => "prediction ahead",
            FailureClass::PushAway => "push-away",
            FailureClass::PredictionBehind => "prediction behind",
            FailureClass::CorrespondenceSwitch => "correspondence switch",
        }
    }
}

/// What was observed when the gripper closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvidence {
    /// The tracked object changed during the final tracking segment.
    pub switched: bool,
    /// Both fingers found the target inside the closing corridor.
    pub contact: bool,
    /// The gripper overlapped the target when it arrived.
    pub pushed: bool,
    pub slipped: bool,
    /// Signed error of the executed grasp along the target's motion, m.
    pub along_track_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub t: f64,
    pub phase: String,
    pub action: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub tcp_x: f64,
    pub tcp_y: f64,
    pub tcp_z: f64,
    pub n_grasps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub controller: String,
    pub outcome: Outcome,
    pub failure_class: Option<FailureClass>,
    /// Close time for executed grasps, the horizon otherwise.
    pub time_to_grasp: f64,
    /// Sum and count of finite object-frame distances between consecutive
    /// tracked grasps.
    pub distance_sum: f64,
    pub distance_steps: usize,
    pub switches: usize,
    pub executes: usize,
    /// Execute actions issued while the trigger test was false.
    pub trigger_violations: usize,
    pub evidence: Option<FailureEvidence>,
    pub log: Vec<ActionRecord>,
}

impl EpisodeReport {
    pub fn mean_tracking_distance(&self) -> Option<f64> {
        (self.distance_steps > 0).then(|| self.distance_sum / self.distance_steps as f64)
    }
}

/// Rule-based failure taxonomy: correspondence switch, then slip, then
/// push-away, then the sign of the along-track error.
pub fn classify_failure(report: &EpisodeReport) -> Result<FailureClass> {
    if report.outcome == Outcome::Success {
        return Err(Error::invalid("cannot classify a successful episode"));
    }
    let e = report
        .evidence
        .ok_or_else(|| Error::invalid("episode executed no grasp, nothing to classify"))?;
    Ok(classify_evidence(&e))
}

fn classify_evidence(e: &FailureEvidence) -> FailureClass {
    if e.switched {
        FailureClass::CorrespondenceSwitch
    } else if e.slipped && e.contact && !e.pushed {
        FailureClass::Slip
    } else if e.pushed {
        FailureClass::PushAway
    } else if e.along_track_error > 0.0 {
        FailureClass::PredictionAhead
    } else {
        FailureClass::PredictionBehind
    }
}

fn move_toward(tcp: &Pose, target: &Pose, max_step: f64) -> Pose {
    let d = target.translation - tcp.translation;
    let n = d.norm();
    let translation = if n <= max_step { target.translation } else { tcp.translation + d * (max_step / n) };
    Pose::new(target.rotation, translation)
}

fn ready_pose(world: &SimWorld) -> Pose {
    let down = Rotation::from_columns(&Vec3::x(), &Vec3::new(0.0, -1.0, 0.0), &Vec3::new(0.0, 0.0, -1.0));
    Pose::new(down, Vec3::from(world.config.controller.ready))
}

/// Renders and perceives one frame.
pub(crate) fn perceive(world: &SimWorld, scene: &SceneState, seed: u64) -> Result<Perception> {
    let cloud = render_cloud(scene, &world.camera, seed);
    oracle_perception(
        &cloud,
        scene,
        &world.library,
        &world.config.gripper,
        &world.config.perception_params(),
        world.provider.as_ref(),
    )
}

/// Tracked grasp expressed in its object's frame.
fn in_object_frame(scene: &SceneState, g: &GraspPose) -> Option<GraspPose> {
    let o = scene.object(g.object_id?)?;
    Some(transform_grasp(g, &o.pose.inverse()))
}

pub fn run_episode(world: &SimWorld, policy: &dyn TrackingPolicy, seed: u64) -> Result<EpisodeReport> {
    let cc = &world.config.controller;
    let cfg = &world.config.track;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = world.initial_scene(&mut rng);
    let ready = ready_pose(world);
    let mut tcp = ready.clone();
    let mut state = TrackState::new();
    let dist = DistanceParams::default();

    let mut report = EpisodeReport {
        seed,
        controller: policy.name().to_string(),
        outcome: Outcome::Timeout,
        failure_class: None,
        time_to_grasp: cc.horizon,
        distance_sum: 0.0,
        distance_steps: 0,
        switches: 0,
        executes: 0,
        trigger_violations: 0,
        evidence: None,
        log: Vec::new(),
    };
    // Last tracked grasp in its object frame, and whether the current
    // tracking segment has switched objects.
    let mut prev_obj: Option<GraspPose> = None;
    let mut segment_switched = false;

    // Failed attempts are followed by a lift and a fresh approach, so the
    // episode runs until a grasp holds or the horizon leaves no time to close.
    let mut step = 0usize;
    loop {
        if step > 0 {
            scene = step_scene(&scene, cc.dt);
        }
        step += 1;
        let t = scene.t;
        if t + cfg.lookahead > cc.horizon + 1e-9 {
            break;
        }
        let frame_seed: u64 = rng.random();
        let perception = perceive(world, &scene, frame_seed)?;
        let obs = Observation {
            grasps: &perception.grasps,
            features: &perception.features,
        };
        let input = (!perception.is_empty()).then_some(obs);
        let (action, next) = step_state_machine(&state, input, &tcp, t, cfg, &ready, policy);

        match next.selected {
            Some(i) => {
                let cur = in_object_frame(&scene, &perception.grasps[i]);
                if let (Some(prev), Some(cur)) = (&prev_obj, &cur) {
                    let d = grasp_distance(prev, cur, &dist);
                    if d.is_finite() {
                        report.distance_sum += d;
                        report.distance_steps += 1;
                    } else {
                        report.switches += 1;
                        segment_switched = true;
                    }
                }
                prev_obj = cur;
            }
            None => {
                prev_obj = None;
                segment_switched = false;
            }
        }

        let target = action.target();
        let shown = target.as_ref().map(|p| p.translation).unwrap_or_else(Vec3::zeros);
        report.log.push(ActionRecord {
            t,
            phase: next.phase.as_str().to_string(),
            action: action.kind().to_string(),
            x: shown.x,
            y: shown.y,
            z: shown.z,
            tcp_x: tcp.translation.x,
            tcp_y: tcp.translation.y,
            tcp_z: tcp.translation.z,
            n_grasps: perception.grasps.len(),
        });

        match action {
            Action::ServoReady(p) | Action::ServoPregrasp(p) => {
                tcp = move_toward(&tcp, &p, cc.tcp_speed * cc.dt);
            }
            Action::LiftAndReset => {
                tcp = move_toward(&tcp, &ready, cc.tcp_speed * cc.dt);
            }
            Action::ExecuteGrasp(g) => {
                report.executes += 1;
                if !check_grasp_trigger(&g, &tcp, cfg) {
                    report.trigger_violations += 1;
                }
                tcp = Pose::new(g.rotation, g.translation);
                let (evidence, closed) = close_gripper(world, &scene, &g, prev_obj.as_ref(), &mut rng);
                let evidence = FailureEvidence {
                    switched: segment_switched,
                    ..evidence
                };
                scene = closed;
                report.evidence = Some(evidence);
                if evidence.contact && !evidence.pushed && !evidence.slipped {
                    report.outcome = Outcome::Success;
                    report.failure_class = None;
                    report.time_to_grasp = scene.t;
                    break;
                }
                report.outcome = Outcome::Failure;
                report.failure_class = Some(classify_evidence(&evidence));
            }
        }
        state = next;
    }
    Ok(report)
}

/// Lets the scene run for the close latency and judges the grasp against
/// the target object at that moment.
fn close_gripper(
    world: &SimWorld,
    scene: &SceneState,
    g: &GraspPose,
    tracked: Option<&GraspPose>,
    rng: &mut ChaCha8Rng,
) -> (FailureEvidence, SceneState) {
    let cc = &world.config.controller;
    let latency = world.config.track.lookahead;
    let geom = &world.config.gripper;
    let mut s = scene.clone();
    let mut remaining = latency;
    while remaining > 1e-12 {
        let h = remaining.min(cc.dt);
        s = step_scene(&s, h);
        remaining -= h;
    }
    let slipped = rng.random_bool(cc.slip_probability);
    let Some(target) = g.object_id.and_then(|id| s.object(id)) else {
        let e = FailureEvidence { switched: false, contact: false, pushed: false, slipped, along_track_error: 0.0 };
        return (e, s);
    };
    let g_obj = transform_grasp(g, &target.pose.inverse());
    let pts = &target.model.points;
    let contact = find_contacts(pts, 0..pts.len(), &g_obj, &Corridor::for_grasp(&g_obj, geom))
        .is_some_and(|c| c.left != c.right && c.left_x < c.right_x);
    let pushed = check_collision(pts, &g_obj, geom);

    let reference = tracked
        .map(|l| target.pose.compose(&l.frame()).translation)
        .unwrap_or_else(|| target.pose.transform_point(&target.model.cog));
    let v = target.mover.velocity(s.t);
    let err = g.translation - reference;
    let along_track_error = if v.norm() > 1e-12 { err.dot(&v.normalize()) } else { 0.0 };
    (
        FailureEvidence {
            switched: false,
            contact,
            pushed,
            slipped,
            along_track_error,
        },
        s,
    )
}

/// Runs `episodes` seeds `base_seed, base_seed + 1, …` in parallel; the
/// result order and content do not depend on scheduling.
pub fn run_episodes(world: &SimWorld, controller: &str, episodes: usize, base_seed: u64) -> Result<Vec<EpisodeReport>> {
    let policy = policy_registry().create(controller)?;
    (0..episodes as u64)
        .into_par_iter()
        .map(|k| run_episode(world, policy.as_ref(), base_seed.wrapping_add(k)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub controller: String,
    pub episodes: usize,
    pub successes: usize,
    pub failures: usize,
    pub timeouts: usize,
    pub success_rate: f64,
    /// Mean close time over successful episodes.
    pub mean_time_to_success: Option<f64>,
    /// Pooled mean of per-step object-frame tracking distances.
    pub mean_tracking_distance: Option<f64>,
    pub switches: usize,
    pub trigger_violations: usize,
    pub failure_classes: std::collections::BTreeMap<String, usize>,
}

pub fn summarize(reports: &[EpisodeReport]) -> EpisodeSummary {
    let count = |o: Outcome| reports.iter().filter(|r| r.outcome == o).count();
    let successes = count(Outcome::Success);
    let times: Vec<f64> = reports
        .iter()
        .filter(|r| r.outcome == Outcome::Success)
        .map(|r| r.time_to_grasp)
        .collect();
    let steps: usize = reports.iter().map(|r| r.distance_steps).sum();
    let sum: f64 = reports.iter().map(|r| r.distance_sum).sum();
    let mut classes = std::collections::BTreeMap::new();
    for r in reports {
        if let Some(c) = r.failure_class {
            *classes.entry(c.as_str().to_string()).or_insert(0) += 1;
        }
    }
    EpisodeSummary {
        controller: reports.first().map(|r| r.controller.clone()).unwrap_or_default(),
        episodes: reports.len(),
        successes,
        failures: count(Outcome::Failure),
        timeouts: count(Outcome::Timeout),
        success_rate: if reports.is_empty() { 0.0 } else { successes as f64 / reports.len() as f64 },
        mean_time_to_success: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
        mean_tracking_distance: (steps > 0).then(|| sum / steps as f64),
        switches: reports.iter().map(|r| r.switches).sum(),
        trigger_violations: reports.iter().map(|r| r.trigger_violations).sum(),
        failure_classes: classes,
    }
}
