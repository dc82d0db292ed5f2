//! Parametric two-finger gripper occupancy, point-cloud collision checks and
//! the gripper-centering post-process.
//!
//! In the grasp frame the fingers span `z ∈ [depth - finger_length, depth]`
//! (fingertips at `z = depth`), sit just outside `|x| = width / 2`, and the
//! base bar lies behind them. The region between the fingers is free space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{GraspPose, Rotation, Vec3};
use crate::spatial::PointIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperGeometry {
    pub finger_length: f64,
    pub finger_height: f64,
    pub finger_thickness: f64,
    pub max_opening: f64,
    pub base_depth: f64,
    /// Inflates every occupancy box by this amount.
    pub safety_margin: f64,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        GripperGeometry {
            finger_length: 0.04,
            finger_height: 0.02,
            finger_thickness: 0.01,
            max_opening: 0.085,
            base_depth: 0.02,
            safety_margin: 0.0,
        }
    }
}

impl GripperGeometry {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.finger_length,
            self.finger_height,
            self.finger_thickness,
            self.max_opening,
            self.base_depth,
        ];
        if dims.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "gripper dimensions must be positive: {self:?}"
            )));
        }
        if self.max_opening <= 2.0 * self.finger_thickness {
            return Err(Error::invalid(
                "max_opening must exceed twice the finger thickness",
            ));
        }
        if !(self.safety_margin >= 0.0) {
            return Err(Error::invalid("safety_margin must be non-negative"));
        }
        Ok(())
    }

    /// Radius of a ball around the grasp center containing all occupancy
    /// boxes and the closing corridor.
    pub fn reach(&self, g: &GraspPose) -> f64 {
        let m = self.safety_margin;
        let hx = g.width.max(self.max_opening) / 2.0 + self.finger_thickness + m;
        let hy = self.finger_height / 2.0 + m;
        let z_back = (g.depth - self.finger_length - self.base_depth - m).abs();
        let z_front = (g.depth + m).abs();
        (hx * hx + hy * hy + z_back.max(z_front).powi(2)).sqrt() + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub rotation: Rotation,
}

impl OrientedBox {
    /// Strict interior membership.
    pub fn contains(&self, p: &Vec3) -> bool {
        let local = self.rotation.transpose().apply(&(p - self.center));
        local.x.abs() < self.half_extents.x
            && local.y.abs() < self.half_extents.y
            && local.z.abs() < self.half_extents.z
    }
}

/// Axis-aligned box in the grasp frame.
#[derive(Debug, Clone, Copy)]
struct LocalBox {
    lo: Vec3,
    hi: Vec3,
}

impl LocalBox {
    fn contains(&self, q: &Vec3) -> bool {
        q.x > self.lo.x
            && q.x < self.hi.x
            && q.y > self.lo.y
            && q.y < self.hi.y
            && q.z > self.lo.z
            && q.z < self.hi.z
    }
}

fn local_boxes(width: f64, depth: f64, geom: &GripperGeometry) -> [LocalBox; 3] {
    let m = geom.safety_margin;
    let hw = width / 2.0;
    let t = geom.finger_thickness;
    let hh = geom.finger_height / 2.0;
    let z_tip = depth;
    let z_root = depth - geom.finger_length;
    let z_back = z_root - geom.base_depth;
    let finger = |sign: f64| {
        let (a, b) = if sign < 0.0 {
            (-hw - t, -hw)
        } else {
            (hw, hw + t)
        };
        LocalBox {
            lo: Vec3::new(a - m, -hh - m, z_root - m),
            hi: Vec3::new(b + m, hh + m, z_tip + m),
        }
    };
    [
        finger(-1.0),
        finger(1.0),
        LocalBox {
            lo: Vec3::new(-hw - t - m, -hh - m, z_back - m),
            hi: Vec3::new(hw + t + m, hh + m, z_root + m),
        },
    ]
}

/// Left finger, right finger and base bar as world-frame boxes.
pub fn gripper_occupancy(g: &GraspPose, geom: &GripperGeometry) -> Result<Vec<OrientedBox>> {
    if g.width > geom.max_opening || !(g.width > 0.0) {
        return Err(Error::invalid(format!(
            "grasp width {} outside (0, {}]",
            g.width, geom.max_opening
        )));
    }
    let frame = g.frame();
    Ok(local_boxes(g.width, g.depth, geom)
        .iter()
        .map(|b| OrientedBox {
            center: frame.transform_point(&((b.lo + b.hi) / 2.0)),
            half_extents: (b.hi - b.lo) / 2.0,
            rotation: g.rotation,
        })
        .collect())
}

/// True iff some point lies strictly inside the gripper occupancy. A grasp
/// wider than the maximum opening cannot be realised and counts as a
/// collision.
pub fn check_collision(cloud: &[Vec3], g: &GraspPose, geom: &GripperGeometry) -> bool {
    if g.width > geom.max_opening {
        return true;
    }
    let boxes = local_boxes(g.width, g.depth, geom);
    let inv = g.frame().inverse();
    cloud.iter().any(|p| {
        let q = inv.transform_point(p);
        boxes.iter().any(|b| b.contains(&q))
    })
}

/// [`check_collision`] restricted to the listed points.
pub(crate) fn collides_among(
    cloud: &[Vec3],
    candidates: impl IntoIterator<Item = usize>,
    g: &GraspPose,
    geom: &GripperGeometry,
) -> bool {
    if g.width > geom.max_opening {
        return true;
    }
    let boxes = local_boxes(g.width, g.depth, geom);
    let inv = g.frame().inverse();
    candidates.into_iter().any(|i| {
        let q = inv.transform_point(&cloud[i]);
        boxes.iter().any(|b| b.contains(&q))
    })
}

/// Examines the first `k` grasps of a ranked list and keeps the
/// collision-free ones in their original order.
pub fn filter_top_k(
    grasps: &[GraspPose],
    cloud: &[Vec3],
    geom: &GripperGeometry,
    k: usize,
) -> Vec<GraspPose> {
    let checker = CollisionChecker::new(cloud, *geom);
    grasps
        .iter()
        .take(k)
        .filter(|g| !checker.collides(g))
        .copied()
        .collect()
}

/// Collision checks against a fixed cloud through a spatial index.
pub struct CollisionChecker<'a> {
    cloud: &'a [Vec3],
    index: PointIndex,
    geom: GripperGeometry,
}

impl<'a> CollisionChecker<'a> {
    pub fn new(cloud: &'a [Vec3], geom: GripperGeometry) -> Self {
        CollisionChecker {
            cloud,
            index: PointIndex::new(cloud, 0.02),
            geom,
        }
    }

    pub fn geometry(&self) -> &GripperGeometry {
        &self.geom
    }

    pub fn collides(&self, g: &GraspPose) -> bool {
        if g.width > self.geom.max_opening {
            return true;
        }
        let candidates = self.index.candidates(&g.translation, self.geom.reach(g));
        collides_among(self.cloud, candidates.into_iter().map(|i| i as usize), g, &self.geom)
    }

    /// Centers `g` on this cloud; see [`center_gripper`].
    pub fn center(&self, g: &GraspPose) -> Centering {
        let candidates = self
            .index
            .candidates(&g.translation, self.geom.reach(g) + g.width / 2.0);
        center_with(self.cloud, &candidates, g, &self.geom)
    }
}

/// The free region swept by the fingers while closing, in the grasp frame.
#[derive(Debug, Clone, Copy)]
pub struct Corridor {
    pub half_width: f64,
    pub half_height: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Corridor {
    pub fn new(half_width: f64, depth: f64, geom: &GripperGeometry) -> Self {
        Corridor {
            half_width,
            half_height: geom.finger_height / 2.0,
            z_min: depth - geom.finger_length,
            z_max: depth,
        }
    }

    pub fn for_grasp(g: &GraspPose, geom: &GripperGeometry) -> Self {
        Corridor::new(g.width / 2.0, g.depth, geom)
    }

    pub fn contains(&self, q: &Vec3) -> bool {
        q.x.abs() <= self.half_width
            && q.y.abs() <= self.half_height
            && q.z >= self.z_min
            && q.z <= self.z_max
    }
}

/// First points hit by the left (−x) and right (+x) fingers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPair {
    pub left: usize,
    pub right: usize,
    /// Grasp-frame x coordinate of each contact.
    pub left_x: f64,
    pub right_x: f64,
}

/// Finds the extreme points along the closing axis among `candidates` that
/// lie in the corridor. Ties go to the smaller index.
pub fn find_contacts(
    points: &[Vec3],
    candidates: impl IntoIterator<Item = usize>,
    g: &GraspPose,
    corridor: &Corridor,
) -> Option<ContactPair> {
    let inv = g.frame().inverse();
    let mut best: Option<ContactPair> = None;
    for i in candidates {
        let q = inv.transform_point(&points[i]);
        if !corridor.contains(&q) {
            continue;
        }
        match best.as_mut() {
            None => {
                best = Some(ContactPair {
                    left: i,
                    right: i,
                    left_x: q.x,
                    right_x: q.x,
                })
            }
            Some(c) => {
                if q.x < c.left_x || (q.x == c.left_x && i < c.left) {
                    c.left = i;
                    c.left_x = q.x;
                }
                if q.x > c.right_x || (q.x == c.right_x && i < c.right) {
                    c.right = i;
                    c.right_x = q.x;
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centering {
    pub grasp: GraspPose,
    /// False when either fingertip found nothing to touch; the grasp is then
    /// returned unchanged.
    pub contact: bool,
}

/// Slides the grasp along its closing axis until both fingertips travel the
/// same distance to their first contact.
///
/// The shift is repeated while it admits new points into the corridor, so
/// the result is a fixed point and re-centering leaves it unchanged.
pub fn center_gripper(points: &[Vec3], g: &GraspPose, geom: &GripperGeometry) -> Centering {
    let all: Vec<u32> = (0..points.len() as u32).collect();
    center_with(points, &all, g, geom)
}

fn center_with(points: &[Vec3], candidates: &[u32], g: &GraspPose, geom: &GripperGeometry) -> Centering {
    const MAX_ROUNDS: usize = 64;
    let mut current = *g;
    for round in 0..MAX_ROUNDS {
        let corridor = Corridor::for_grasp(&current, geom);
        let Some(c) = find_contacts(points, candidates.iter().map(|&i| i as usize), &current, &corridor)
        else {
            return Centering {
                grasp: if round == 0 { *g } else { current },
                contact: round > 0,
            };
        };
        let hw = current.width / 2.0;
        let d_left = c.left_x + hw;
        let d_right = hw - c.right_x;
        let shift = (d_left - d_right) / 2.0;
        if shift.abs() <= 1e-12 {
            break;
        }
        current.translation += current.closing_axis() * shift;
    }
    Centering {
        grasp: current,
        contact: true,
    }
}
