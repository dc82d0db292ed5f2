//! Dense analytic grasp labels: candidate enumeration, graded antipodal
//! scoring, center-of-gravity stable scores, projection into scenes and
//! cross-viewpoint association labels.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{collides_among, find_contacts, CollisionChecker, ContactPair, Corridor, GripperGeometry};
use crate::error::{Error, Result};
use crate::objects::{farthest_point_sample, fibonacci_sphere, ObjectModel};
use crate::se3::{grasp_distance, rotation_from_view, transform_grasp, DistanceParams, GraspPose, Pose, Vec3};
use crate::spatial::PointIndex;

/// Object id to pose in some common frame.
pub type ObjectPoses = BTreeMap<u32, Pose>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationGrid {
    pub n_views: usize,
    pub n_rotations: usize,
    pub depths: Vec<f64>,
    /// Ascending friction coefficients tried when grading antipodality.
    pub friction_grid: Vec<f64>,
    /// Seed points per object (farthest-point subsample).
    pub n_seeds: usize,
    /// Clearance added on each side of the contact span to get the width.
    pub finger_clearance: f64,
}

impl Default for AnnotationGrid {
    fn default() -> Self {
        AnnotationGrid {
            n_views: 300,
            n_rotations: 12,
            depths: vec![0.005, 0.01, 0.02, 0.03, 0.04],
            friction_grid: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            n_seeds: 512,
            finger_clearance: 0.005,
        }
    }
}

impl AnnotationGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 || self.n_rotations == 0 || self.n_seeds == 0 {
            return Err(Error::invalid("views, rotations and seeds must be at least 1"));
        }
        if self.depths.is_empty() || self.depths.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::invalid("approach depths must be strictly positive"));
        }
        if self.friction_grid.is_empty()
            || self.friction_grid.iter().any(|m| !(*m > 0.0))
            || self.friction_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid("friction grid must be positive and ascending"));
        }
        if !(self.finger_clearance >= 0.0) {
            return Err(Error::invalid("finger clearance must be non-negative"));
        }
        Ok(())
    }

    /// Friction value mapped to score zero: one grid step past the largest.
    pub fn friction_ceiling(&self) -> f64 {
        let g = &self.friction_grid;
        let last = g[g.len() - 1];
        let step = if g.len() >= 2 { last - g[g.len() - 2] } else { last };
        last + step
    }

    pub fn score_for_friction(&self, mu: f64) -> f64 {
        (1.0 - mu / self.friction_ceiling()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspLabelSet {
    pub object_id: Option<u32>,
    pub labels: Vec<GraspPose>,
}

impl GraspLabelSet {
    pub fn new(object_id: Option<u32>, labels: Vec<GraspPose>) -> Self {
        GraspLabelSet { object_id, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stable sort by score, highest first.
    pub fn sort_by_score(&mut self) {
        self.labels.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationLabels {
    pub rows: usize,
    pub cols: usize,
    /// Row-major grasp distances; infinity across objects.
    pub distance: Vec<f64>,
    /// Row-major same-class flags.
    pub positive: Vec<bool>,
    pub sigma: f64,
}

impl AssociationLabels {
    pub fn from_distances(rows: usize, cols: usize, distance: Vec<f64>, sigma: f64) -> Self {
        assert_eq!(distance.len(), rows * cols);
        let positive = distance.iter().map(|d| *d <= sigma).collect();
        AssociationLabels {
            rows,
            cols,
            distance,
            positive,
            sigma,
        }
    }

    pub fn is_positive(&self, i: usize, j: usize) -> bool {
        self.positive[i * self.cols + j]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance[i * self.cols + j]
    }

    pub fn positives_in_row(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.cols).filter(move |&j| self.is_positive(i, j))
    }

    pub fn any_positive(&self) -> bool {
        self.positive.iter().any(|p| *p)
    }
}

/// `n` deterministic, quasi-uniform unit view directions.
pub fn enumerate_views(n: usize) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::invalid("view count must be at least 1"));
    }
    Ok(fibonacci_sphere(n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntipodalResult {
    pub score: f64,
    /// Smallest grid friction at which the contacts are antipodal.
    pub mu_min: Option<f64>,
    pub contacts: Option<ContactPair>,
}

impl AntipodalResult {
    fn zero(contacts: Option<ContactPair>) -> Self {
        AntipodalResult {
            score: 0.0,
            mu_min: None,
            contacts,
        }
    }
}

/// Angles between each contact normal and the inward closing direction
/// (left, right), in radians.
pub fn contact_normal_angles(obj: &ObjectModel, g: &GraspPose, c: &ContactPair) -> (f64, f64) {
    let x = g.closing_axis();
    let left = (-obj.normals[c.left].dot(&x)).clamp(-1.0, 1.0).acos();
    let right = obj.normals[c.right].dot(&x).clamp(-1.0, 1.0).acos();
    (left, right)
}

/// Both contact normals lie inside the friction cone of half-angle
/// `atan(mu)` around the closing line.
pub fn is_antipodal(obj: &ObjectModel, g: &GraspPose, c: &ContactPair, mu: f64) -> bool {
    let (l, r) = contact_normal_angles(obj, g, c);
    let limit = mu.atan();
    l <= limit && r <= limit
}

/// Graded antipodal quality of a grasp expressed in the object frame.
pub fn antipodal_score(
    obj: &ObjectModel,
    g: &GraspPose,
    grid: &AnnotationGrid,
    geom: &GripperGeometry,
) -> Result<AntipodalResult> {
    if obj.is_empty() {
        return Err(Error::invalid("antipodal score on an empty object"));
    }
    Ok(antipodal_with(obj, 0..obj.len(), g, grid, geom))
}

fn antipodal_with(
    obj: &ObjectModel,
    candidates: impl IntoIterator<Item = usize>,
    g: &GraspPose,
    grid: &AnnotationGrid,
    geom: &GripperGeometry,
) -> AntipodalResult {
    let corridor = Corridor::for_grasp(g, geom);
    let Some(c) = find_contacts(&obj.points, candidates, g, &corridor) else {
        return AntipodalResult::zero(None);
    };
    if c.left == c.right || c.left_x >= c.right_x {
        return AntipodalResult::zero(Some(c));
    }
    match grid.friction_grid.iter().find(|&&mu| is_antipodal(obj, g, &c, mu)) {
        Some(&mu) => AntipodalResult {
            score: grid.score_for_friction(mu),
            mu_min: Some(mu),
            contacts: Some(c),
        },
        None => AntipodalResult::zero(Some(c)),
    }
}

/// Distance from the center of gravity to the plane spanned by the closing
/// and approach axes through the grasp center.
pub fn stable_score_raw(obj: &ObjectModel, g: &GraspPose) -> f64 {
    (obj.cog - g.translation).dot(&g.rotation.y_axis()).abs()
}

/// Divides every raw distance (held in `stable_score`) by the set maximum.
/// An all-zero set stays all zero.
pub fn normalize_stable_scores(mut set: GraspLabelSet) -> Result<GraspLabelSet> {
    if set.is_empty() {
        return Err(Error::invalid("cannot normalise an empty label set"));
    }
    let max = set.labels.iter().map(|g| g.stable_score).fold(0.0, f64::max);
    for g in &mut set.labels {
        g.stable_score = if max > 0.0 { g.stable_score / max } else { 0.0 };
    }
    Ok(set)
}

/// `score ← score · (1 − stable_score)`.
pub fn adjust_scores(mut set: GraspLabelSet) -> GraspLabelSet {
    for g in &mut set.labels {
        g.score *= 1.0 - g.stable_score;
    }
    set
}

/// Enumerates seeds × views × in-plane rotations × depths on one object and
/// keeps the collision-free candidates with a positive antipodal score.
///
/// Returned scores are already stability-adjusted and `stable_score` holds
/// the normalised stable score.
pub fn annotate_object(obj: &ObjectModel, grid: &AnnotationGrid, geom: &GripperGeometry) -> Result<GraspLabelSet> {
    grid.validate()?;
    geom.validate()?;
    let views = enumerate_views(grid.n_views)?;
    let seeds = farthest_point_sample(&obj.points, grid.n_seeds);
    let index = PointIndex::new(&obj.points, 0.02);
    let bounds = SeedBounds::new(grid, geom);

    let per_seed: Vec<Vec<GraspPose>> = seeds
        .par_iter()
        .map(|&seed| {
            let p = obj.points[seed];
            let normal = obj.normals[seed];
            let neighbours: Vec<(usize, Vec3)> = index
                .candidates(&p, bounds.radius)
                .into_iter()
                .map(|i| (i as usize, obj.points[i as usize] - p))
                .collect();
            let mut out = Vec::new();
            let mut in_view = Vec::with_capacity(neighbours.len());
            let mut slab = Vec::with_capacity(neighbours.len());
            for view in &views {
                if view.dot(&normal) >= 0.0 {
                    continue;
                }
                let base = rotation_from_view(view, 0.0).expect("unit view");
                let (bx, by, bz) = (base.x_axis(), base.y_axis(), base.z_axis());
                in_view.clear();
                for (i, d) in &neighbours {
                    let q = Vec3::new(d.dot(&bx), d.dot(&by), d.dot(&bz));
                    if q.z > bounds.z_lo && q.z < bounds.z_hi && q.x * q.x + q.y * q.y < bounds.rho2 {
                        in_view.push((*i, q));
                    }
                }
                for k in 0..grid.n_rotations {
                    let angle = std::f64::consts::PI * k as f64 / grid.n_rotations as f64;
                    let (sn, cs) = angle.sin_cos();
                    slab.clear();
                    for (i, q) in &in_view {
                        let y = -q.x * sn + q.y * cs;
                        if y.abs() < bounds.slab {
                            slab.push(SlabPoint { index: *i, x: q.x * cs + q.y * sn, y, z: q.z });
                        }
                    }
                    if slab.len() < 2 {
                        continue;
                    }
                    let closing = bx * cs + by * sn;
                    for &depth in &grid.depths {
                        let Some((mid, width)) = candidate(obj, &slab, &closing, depth, grid, geom) else {
                            continue;
                        };
                        // The screen above works in seed-relative coordinates; the
                        // final verdict uses the canonical grasp-frame transform so
                        // that labels agree exactly with the public scoring calls.
                        let rot = rotation_from_view(view, angle).expect("unit view");
                        let mut g = GraspPose::new(rot, p + closing * mid, width, depth).with_object(obj.object_id);
                        let exact = antipodal_with(obj, slab.iter().map(|q| q.index), &g, grid, geom);
                        if exact.score <= 0.0 || collides_among(&obj.points, slab.iter().map(|q| q.index), &g, geom) {
                            continue;
                        }
                        g.score = exact.score;
                        g.stable_score = stable_score_raw(obj, &g);
                        out.push(g);
                    }
                }
            }
            out
        })
        .collect();

    let labels: Vec<GraspPose> = per_seed.into_iter().flatten().collect();
    if labels.is_empty() {
        return Ok(GraspLabelSet::new(Some(obj.object_id), labels));
    }
    let set = normalize_stable_scores(GraspLabelSet::new(Some(obj.object_id), labels))?;
    Ok(adjust_scores(set))
}

/// Seed-relative extents outside which a point can touch neither the
/// closing corridor nor any gripper box of a candidate.
struct SeedBounds {
    radius: f64,
    z_lo: f64,
    z_hi: f64,
    rho2: f64,
    slab: f64,
}

impl SeedBounds {
    fn new(grid: &AnnotationGrid, geom: &GripperGeometry) -> Self {
        let m = geom.safety_margin;
        let max_depth = grid.depths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_depth = grid.depths.iter().cloned().fold(f64::INFINITY, f64::min);
        let z_lo = min_depth - geom.finger_length - geom.base_depth - m - 1e-9;
        let z_hi = max_depth + m + 1e-9;
        let slab = geom.finger_height / 2.0 + m + 1e-9;
        let rho2 = (geom.max_opening + geom.finger_thickness + m).powi(2) + slab * slab + 1e-12;
        SeedBounds {
            radius: (rho2 + z_lo.abs().max(z_hi.abs()).powi(2)).sqrt() + 1e-9,
            z_lo,
            z_hi,
            rho2,
            slab,
        }
    }
}

/// Neighbour in the candidate frame centred on the seed.
struct SlabPoint {
    index: usize,
    x: f64,
    y: f64,
    z: f64,
}

/// Centers the closing span on the contacts seen by a fully open gripper,
/// then grades antipodality and checks self-collision in the same local
/// frame. Returns `(center offset along closing axis, width)`.
fn candidate(
    obj: &ObjectModel,
    slab: &[SlabPoint],
    closing: &Vec3,
    depth: f64,
    grid: &AnnotationGrid,
    geom: &GripperGeometry,
) -> Option<(f64, f64)> {
    let half = geom.max_opening / 2.0;
    let hh = geom.finger_height / 2.0;
    let z_root = depth - geom.finger_length;
    let in_corridor = |p: &SlabPoint| p.y.abs() <= hh && p.z >= z_root && p.z <= depth;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut hits = 0usize;
    for p in slab {
        if p.x.abs() <= half && in_corridor(p) {
            lo = lo.min(p.x);
            hi = hi.max(p.x);
            hits += 1;
        }
    }
    if hits < 2 || hi <= lo {
        return None;
    }
    let width = hi - lo + 2.0 * grid.finger_clearance;
    if width > geom.max_opening {
        return None;
    }
    let mid = (lo + hi) / 2.0;
    let hw = width / 2.0;

    // Contacts of the final grasp: extreme points of its corridor, ties to
    // the smaller sample index.
    let mut left: Option<(usize, f64)> = None;
    let mut right: Option<(usize, f64)> = None;
    for p in slab {
        let x = p.x - mid;
        if x.abs() > hw || !in_corridor(p) {
            continue;
        }
        if left.is_none_or(|(i, lx)| x < lx || (x == lx && p.index < i)) {
            left = Some((p.index, x));
        }
        if right.is_none_or(|(i, rx)| x > rx || (x == rx && p.index < i)) {
            right = Some((p.index, x));
        }
    }
    let ((li, lx), (ri, rx)) = (left?, right?);
    if li == ri || lx >= rx {
        return None;
    }
    let left_angle = (-obj.normals[li].dot(closing)).clamp(-1.0, 1.0).acos();
    let right_angle = obj.normals[ri].dot(closing).clamp(-1.0, 1.0).acos();
    let worst = left_angle.max(right_angle);
    grid.friction_grid.iter().find(|&&mu| worst <= mu.atan())?;

    let m = geom.safety_margin;
    let t = geom.finger_thickness;
    let (y_lim, z_tip, z_back) = (hh + m, depth + m, z_root - geom.base_depth - m);
    for p in slab {
        if p.y.abs() >= y_lim || p.z <= z_back || p.z >= z_tip {
            continue;
        }
        let x = (p.x - mid).abs();
        let in_finger = p.z > z_root - m && x > hw - m && x < hw + t + m;
        let in_base = p.z < z_root + m && x < hw + t + m;
        if in_finger || in_base {
            return None;
        }
    }
    Some((mid, width))
}

/// Moves per-object labels into the scene and drops grasps that collide with
/// the scene cloud.
pub fn project_to_scene(
    labels: &[GraspLabelSet],
    object_poses: &[Pose],
    scene_cloud: &[Vec3],
    geom: &GripperGeometry,
) -> Result<GraspLabelSet> {
    if labels.len() != object_poses.len() {
        return Err(Error::invalid(format!(
            "{} label sets but {} object poses",
            labels.len(),
            object_poses.len()
        )));
    }
    let checker = CollisionChecker::new(scene_cloud, *geom);
    let out: Vec<GraspPose> = labels
        .iter()
        .zip(object_poses)
        .flat_map(|(set, pose)| set.labels.iter().map(move |g| transform_grasp(g, pose)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter(|g| !checker.collides(g))
        .collect();
    Ok(GraspLabelSet::new(None, out))
}

fn to_object_frame(g: &GraspPose, poses: &ObjectPoses) -> Result<GraspPose> {
    let id = g
        .object_id
        .ok_or_else(|| Error::invalid("grasp without object id cannot be associated"))?;
    let pose = poses
        .get(&id)
        .ok_or_else(|| Error::invalid(format!("no pose for object {id}")))?;
    Ok(transform_grasp(g, &pose.inverse()))
}

/// Same-class flags between two grasp sets, each given in its own frame
/// together with the object poses in that frame.
pub fn association_labels(
    set1: &[GraspPose],
    poses1: &ObjectPoses,
    set2: &[GraspPose],
    poses2: &ObjectPoses,
    p: &DistanceParams,
    sigma: f64,
) -> Result<AssociationLabels> {
    p.validate()?;
    let a: Vec<GraspPose> = set1.iter().map(|g| to_object_frame(g, poses1)).collect::<Result<_>>()?;
    let b: Vec<GraspPose> = set2.iter().map(|g| to_object_frame(g, poses2)).collect::<Result<_>>()?;
    let mut distance = Vec::with_capacity(a.len() * b.len());
    for g1 in &a {
        for g2 in &b {
            distance.push(grasp_distance(g1, g2, p));
        }
    }
    Ok(AssociationLabels::from_distances(a.len(), b.len(), distance, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::check_collision;
    use crate::objects::shapes;
    use crate::se3::Rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_grid() -> AnnotationGrid {
        AnnotationGrid {
            n_views: 40,
            n_rotations: 6,
            n_seeds: 48,
            ..Default::default()
        }
    }

    #[test]
    fn views_are_unit_and_spread() {
        assert_eq!(enumerate_views(1).unwrap().len(), 1);
        assert!(enumerate_views(0).is_err());
        let v = enumerate_views(300).unwrap();
        assert_eq!(v.len(), 300);
        assert!(v.iter().all(|d| (d.norm() - 1.0).abs() < 1e-9));
        // hexagonal packing angle for n points on the unit sphere
        let ideal = (8.0 * std::f64::consts::PI / (3f64.sqrt() * 300.0)).sqrt();
        let mut min_angle = f64::INFINITY;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                min_angle = min_angle.min(v[i].dot(&v[j]).clamp(-1.0, 1.0).acos());
            }
        }
        assert!(min_angle >= 0.6 * ideal, "{min_angle} vs {ideal}");
    }

    #[test]
    fn diametral_sphere_grasp_is_maximal() {
        let obj = shapes::sphere(1, 0.03, 2000);
        let grid = AnnotationGrid::default();
        let geom = GripperGeometry::default();
        let g = GraspPose::new(Rotation::identity(), Vec3::zeros(), 0.07, 0.02);
        let r = antipodal_score(&obj, &g, &grid, &geom).unwrap();
        assert_eq!(r.mu_min, Some(0.2));
        assert!((r.score - (1.0 - 0.2 / 1.2)).abs() < 1e-12);
    }

    #[test]
    fn missing_the_object_scores_zero() {
        let obj = shapes::sphere(1, 0.03, 2000);
        let g = GraspPose::new(Rotation::identity(), Vec3::new(0.0, 0.0, 0.5), 0.07, 0.02);
        let r = antipodal_score(&obj, &g, &AnnotationGrid::default(), &GripperGeometry::default()).unwrap();
        assert_eq!(r.score, 0.0);
        assert!(r.contacts.is_none());
    }

    #[test]
    fn steep_wedge_scores_zero() {
        // two faces whose normals sit 60° off the closing line
        let tilt = 60f64.to_radians();
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for sign in [-1.0, 1.0] {
            let n = Vec3::new(sign * tilt.cos(), 0.0, tilt.sin());
            let along = Vec3::new(-n.z * sign, 0.0, n.x * sign).normalize();
            for i in -5..=5 {
                for j in -5..=5 {
                    let base = Vec3::new(sign * 0.02, 0.0, 0.0);
                    points.push(base + along * (i as f64 * 0.002) + Vec3::new(0.0, j as f64 * 0.002, 0.0));
                    normals.push(n);
                }
            }
        }
        let obj = ObjectModel::new(7, points, normals, None).unwrap();
        let g = GraspPose::new(Rotation::identity(), Vec3::zeros(), 0.08, 0.02);
        let r = antipodal_score(&obj, &g, &AnnotationGrid::default(), &GripperGeometry::default()).unwrap();
        assert!(r.contacts.is_some());
        let (l, rr) = contact_normal_angles(&obj, &g, &r.contacts.unwrap());
        assert!((l - tilt).abs() < 1e-9 && (rr - tilt).abs() < 1e-9);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn stable_score_examples() {
        let obj = shapes::sphere(1, 0.03, 100);
        let g = GraspPose::new(Rotation::identity(), Vec3::new(0.01, 0.0, 0.02), 0.07, 0.02);
        assert_eq!(stable_score_raw(&obj, &g), 0.0);
        let off = GraspPose::new(Rotation::identity(), Vec3::new(0.0, 0.03, 0.0), 0.07, 0.02);
        assert!((stable_score_raw(&obj, &off) - 0.03).abs() < 1e-15);
    }

    fn raw_set(raw: &[f64]) -> GraspLabelSet {
        GraspLabelSet::new(
            Some(1),
            raw.iter()
                .map(|r| {
                    let mut g = GraspPose::new(Rotation::identity(), Vec3::zeros(), 0.05, 0.01);
                    g.stable_score = *r;
                    g
                })
                .collect(),
        )
    }

    #[test]
    fn normalization_examples() {
        let s = normalize_stable_scores(raw_set(&[0.0, 0.02, 0.04])).unwrap();
        let got: Vec<f64> = s.labels.iter().map(|g| g.stable_score).collect();
        assert_eq!(got, vec![0.0, 0.5, 1.0]);
        let s = normalize_stable_scores(raw_set(&[0.3, 0.3])).unwrap();
        assert!(s.labels.iter().all(|g| g.stable_score == 1.0));
        let s = normalize_stable_scores(raw_set(&[0.0, 0.0])).unwrap();
        assert!(s.labels.iter().all(|g| g.stable_score == 0.0));
        assert!(normalize_stable_scores(raw_set(&[])).is_err());
    }

    #[test]
    fn adjust_examples() {
        let mut set = raw_set(&[0.0, 1.0, 0.5]);
        for (g, s) in set.labels.iter_mut().zip([0.8, 0.8, 0.5]) {
            g.score = s;
        }
        let got: Vec<f64> = adjust_scores(set).labels.iter().map(|g| g.score).collect();
        assert_eq!(got, vec![0.8, 0.0, 0.25]);
    }

    #[test]
    fn sphere_annotation_is_centered() {
        let r = 0.03;
        let obj = shapes::sphere(1, r, 3000);
        let geom = GripperGeometry::default();
        let set = annotate_object(&obj, &small_grid(), &geom).unwrap();
        assert!(!set.is_empty());
        for g in &set.labels {
            assert!(g.translation.dot(&g.closing_axis()).abs() < 0.1 * r);
            assert!((0.0..=1.0).contains(&g.score));
            assert!((0.0..=1.0).contains(&g.stable_score));
            assert!(g.width <= geom.max_opening);
            assert!(small_grid().depths.contains(&g.depth));
        }
        let max = set.labels.iter().map(|g| g.stable_score).fold(0.0, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn oversized_cube_yields_nothing() {
        let obj = shapes::cuboid(2, Vec3::repeat(0.1), 0.01);
        let geom = GripperGeometry {
            max_opening: 0.08,
            ..Default::default()
        };
        let set = annotate_object(&obj, &small_grid(), &geom).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn minimal_grid_counts() {
        let obj = shapes::sphere(1, 0.03, 800);
        let grid = AnnotationGrid {
            n_views: 1,
            n_rotations: 1,
            depths: vec![0.02],
            n_seeds: 30,
            ..Default::default()
        };
        let set = annotate_object(&obj, &grid, &GripperGeometry::default()).unwrap();
        assert!(set.len() <= 30);
    }

    #[test]
    fn labels_agree_with_brute_force_scoring() {
        let geom = GripperGeometry::default();
        let grid = small_grid();
        for obj in [
            shapes::cylinder(3, 0.02, 0.04, 0.004),
            shapes::ellipsoid(4, Vec3::new(0.05, 0.02, 0.015), 1500),
            shapes::cuboid(5, Vec3::new(0.015, 0.03, 0.02), 0.004),
        ] {
            let set = annotate_object(&obj, &grid, &geom).unwrap();
            assert!(!set.is_empty());
            for g in &set.labels {
                let raw = antipodal_score(&obj, g, &grid, &geom).unwrap();
                assert!((raw.score * (1.0 - g.stable_score) - g.score).abs() < 1e-12);
                assert!(!check_collision(&obj.points, g, &geom));
            }
        }
    }

    #[test]
    fn annotation_is_deterministic() {
        let obj = shapes::cylinder(3, 0.02, 0.04, 0.004);
        let a = annotate_object(&obj, &small_grid(), &GripperGeometry::default()).unwrap();
        let b = annotate_object(&obj, &small_grid(), &GripperGeometry::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projection_with_identity_and_transform() {
        let obj = shapes::sphere(1, 0.03, 1500);
        let geom = GripperGeometry::default();
        let set = annotate_object(&obj, &small_grid(), &geom).unwrap();
        let same = project_to_scene(std::slice::from_ref(&set), &[Pose::identity()], &[], &geom).unwrap();
        assert_eq!(same.labels, set.labels);
        let pose = Pose::new(Rotation::from_axis_angle(&Vec3::new(0.2, 1.0, 0.1), 0.7), Vec3::new(0.3, -0.1, 0.05));
        let moved = project_to_scene(std::slice::from_ref(&set), &[pose], &[], &geom).unwrap();
        for (a, b) in set.labels.iter().zip(&moved.labels) {
            assert_eq!(b.rotation.matrix(), &(pose.rotation.matrix() * a.rotation.matrix()));
            assert_eq!(b.object_id, Some(1));
        }
        assert!(project_to_scene(&[set], &[], &[], &geom).is_err());
    }

    #[test]
    fn association_examples() {
        let p = DistanceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grasps: Vec<GraspPose> = (0..6)
            .map(|i| {
                GraspPose::new(
                    Rotation::rot_z(rng.random_range(0.0..3.0)),
                    Vec3::new(rng.random(), rng.random(), rng.random()) * 0.05,
                    0.05,
                    0.01,
                )
                .with_object(1 + (i % 2) as u32)
            })
            .collect();
        let mut poses = ObjectPoses::new();
        poses.insert(1, Pose::from_translation(Vec3::new(0.1, 0.0, 0.0)));
        poses.insert(2, Pose::identity());
        let lab = association_labels(&grasps, &poses, &grasps, &poses, &p, 0.1).unwrap();
        for i in 0..6 {
            assert!(lab.is_positive(i, i));
            for j in 0..6 {
                if grasps[i].object_id != grasps[j].object_id {
                    assert!(!lab.is_positive(i, j));
                    assert!(lab.distance(i, j).is_infinite());
                }
            }
        }
        // boundary: d == sigma exactly is positive
        let g1 = GraspPose::new(Rotation::identity(), Vec3::zeros(), 0.05, 0.01).with_object(1);
        let mut g2 = g1;
        g2.translation.x = 0.5;
        let params = DistanceParams { w_max: 1.0, gamma: 0.1 };
        let lab = association_labels(&[g1], &poses, &[g2], &poses, &params, 0.5).unwrap();
        assert_eq!(lab.distance(0, 0), 0.5);
        assert!(lab.is_positive(0, 0));
    }
}
