//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances and budgets are pinned below.
//!
//! Run alone with `cargo test -p graspkit-core --test acceptance`; a
//! positional argument runs only the criteria whose name contains it.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use graspkit_core::annotation::{
    annotate_object, antipodal_score, is_antipodal, normalize_stable_scores, stable_score_raw, AnnotationGrid,
    GraspLabelSet,
};
use graspkit_core::association::{
    contrastive_loss, correspondence_matrix, embed_rows, train_embedding, TrainConfig, TrainingPair,
};
use graspkit_core::annotation::AssociationLabels;
use graspkit_core::collision::{center_gripper, check_collision, gripper_occupancy, GripperGeometry};
use graspkit_core::eval::{downsample_dataset, evaluate_ap, Axis, PlacedObject};
use graspkit_core::objects::{shapes, ObjectModel};
use graspkit_core::registry::policy_registry;
use graspkit_core::se3::{
    grasp_distance, rotation_distance, rotation_from_view, transform_grasp, DistanceParams, GraspPose, Pose,
    Rotation, Vec3,
};
use graspkit_core::simulator::{
    association_pair, oracle_perception, render_cloud, run_episode, summarize, EpisodeReport, PairOptions,
    SceneConfig, SimWorld,
};

const ROTATION_ORACLE_TOL: f64 = 1e-6;
const METRIC_TOL: f64 = 1e-9;
const CENTERING_TOL: f64 = 1e-9;
const FD_REL_TOL: f64 = 1e-4;
const LOG2_TOL: f64 = 1e-12;
const MIN_ASSOC_ACCURACY: f64 = 0.90;
const MIN_NOISY_PRECISION: f64 = 0.8;
const BUDGET_METRICS: Duration = Duration::from_secs(5);
const BUDGET_COLLISION: Duration = Duration::from_secs(30);
const BUDGET_TRAINING: Duration = Duration::from_secs(120);
const BUDGET_TRACKING: Duration = Duration::from_secs(300);

/// Grid used for every simulator scene in this suite.
fn sim_grid() -> AnnotationGrid {
    AnnotationGrid { n_views: 120, n_seeds: 256, ..Default::default() }
}

const FISH_SHAPE: &str = r#"shape = { kind = "ellipsoid", semi_axes = [0.06, 0.02, 0.015], samples = 3000 }"#;
const CAN_SHAPE: &str = r#"shape = { kind = "cylinder", radius = 0.02, half_height = 0.03, spacing = 0.004 }"#;

fn fish() -> ObjectModel {
    shapes::ellipsoid(0, Vec3::new(0.06, 0.02, 0.015), 3000)
}

fn can() -> ObjectModel {
    shapes::cylinder(0, 0.02, 0.03, 0.004)
}

fn cached(cell: &'static OnceLock<Vec<GraspPose>>, model: fn() -> ObjectModel) -> &'static [GraspPose] {
    cell.get_or_init(|| annotate_object(&model(), &sim_grid(), &GripperGeometry::default()).unwrap().labels)
}

fn fish_labels() -> &'static [GraspPose] {
    static CELL: OnceLock<Vec<GraspPose>> = OnceLock::new();
    cached(&CELL, fish)
}

fn can_labels() -> &'static [GraspPose] {
    static CELL: OnceLock<Vec<GraspPose>> = OnceLock::new();
    cached(&CELL, can)
}

/// Builds a world from TOML whose objects use the fish or can shapes,
/// reusing the cached annotations.
fn world(toml: &str) -> SimWorld {
    let cfg = SceneConfig::from_toml(toml).unwrap();
    let models = cfg.build_models(Path::new(".")).unwrap();
    let labels: BTreeMap<u32, Vec<GraspPose>> = models
        .iter()
        .zip(&cfg.objects)
        .map(|(m, o)| {
            let src = match format!("{:?}", o.shape).contains("Cylinder") {
                true => can_labels(),
                false => fish_labels(),
            };
            (m.object_id, src.iter().map(|g| GraspPose { object_id: Some(m.object_id), ..*g }).collect())
        })
        .collect();
    SimWorld::with_labels(cfg, models, labels, Path::new(".")).unwrap()
}

fn random_rotation(rng: &mut impl Rng) -> (Rotation, UnitQuaternion<f64>) {
    let q = UnitQuaternion::from_quaternion(Quaternion::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ));
    (Rotation::from_matrix_unchecked(*q.to_rotation_matrix().matrix()), q)
}

fn random_grasp(rng: &mut impl Rng, id: Option<u32>) -> GraspPose {
    let t = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    let mut g = GraspPose::new(random_rotation(rng).0, t, rng.random_range(0.01..0.085), rng.random_range(0.0..0.04));
    g.object_id = id;
    g
}

/// Collects failed checks for one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

fn c01_metric_suite(c: &mut Checks) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (r1, q1) = random_rotation(&mut rng);
        let (r2, q2) = random_rotation(&mut rng);
        let oracle = 2.0 * q1.coords.dot(&q2.coords).abs().min(1.0).acos();
        worst = worst.max((rotation_distance(&r1, &r2) - oracle).abs());
    }
    c.check(worst < ROTATION_ORACLE_TOL, format!("rotation oracle error {worst:e}"));

    let p = DistanceParams::default();
    let mut worst_metric = 0.0f64;
    for _ in 0..1000 {
        let g1 = random_grasp(&mut rng, Some(1));
        let g2 = random_grasp(&mut rng, Some(1));
        let t = Pose::new(random_rotation(&mut rng).0, Vec3::new(0.3, -0.1, 0.7));
        let d = grasp_distance(&g1, &g2, &p);
        worst_metric = worst_metric
            .max(grasp_distance(&g1, &g1, &p))
            .max((d - grasp_distance(&g2, &g1, &p)).abs())
            .max((d - grasp_distance(&transform_grasp(&g1, &t), &transform_grasp(&g2, &t), &p)).abs());
        let other = GraspPose { object_id: Some(2), ..g2 };
        c.check(grasp_distance(&g1, &other, &p).is_infinite(), "different objects must be infinitely far");
    }
    c.check(worst_metric < METRIC_TOL, format!("identity/symmetry/invariance error {worst_metric:e}"));

    let g = GraspPose::new(Rotation::identity(), Vec3::zeros(), 0.05, 0.01);
    let moved = GraspPose { translation: Vec3::new(0.01, 0.0, 0.0), ..g };
    let spot = grasp_distance(&g, &moved, &p);
    c.check(spot == 1.0, format!("spot value {spot}"));
    let elapsed = start.elapsed();
    c.check(elapsed < BUDGET_METRICS, format!("runtime {elapsed:?}"));
    c.note(format!("rotation err {worst:.1e}, metric err {worst_metric:.1e}, {elapsed:.2?}"));
}

/// Independent membership test: strict interior of each oriented box.
fn brute_force_collides(cloud: &[Vec3], g: &GraspPose, geom: &GripperGeometry) -> bool {
    if g.width > geom.max_opening {
        return true;
    }
    let boxes = gripper_occupancy(g, geom).unwrap();
    let axes = [g.rotation.x_axis(), g.rotation.y_axis(), g.rotation.z_axis()];
    cloud.iter().any(|p| {
        boxes.iter().any(|b| {
            let d = p - b.center;
            (0..3).all(|i| d.dot(&axes[i]).abs() < b.half_extents[i])
        })
    })
}

fn c02_collision_oracle(c: &mut Checks) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let geom = GripperGeometry { safety_margin: 0.001, ..Default::default() };
    let mut disagreements = 0;
    let mut hits = 0;
    for _ in 0..10_000 {
        let g = GraspPose::new(
            random_rotation(&mut rng).0,
            Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
            rng.random_range(0.005..0.095),
            rng.random_range(0.0..0.04),
        );
        let cloud: Vec<Vec3> = (0..40)
            .map(|_| g.translation + Vec3::new(rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08)))
            .collect();
        let got = check_collision(&cloud, &g, &geom);
        let want = brute_force_collides(&cloud, &g, &geom);
        hits += want as usize;
        disagreements += (got != want) as usize;
    }
    c.check(disagreements == 0, format!("{disagreements} disagreements"));
    c.check(hits > 1000 && hits < 9000, format!("degenerate sample: {hits} collisions"));
    let elapsed = start.elapsed();
    c.check(elapsed < BUDGET_COLLISION, format!("runtime {elapsed:?}"));
    c.note(format!("{hits}/10000 colliding, 0 tolerance, {elapsed:.2?}"));
}

fn fingertip_gaps(points: &[Vec3], g: &GraspPose) -> (f64, f64) {
    let x = g.closing_axis();
    let xs: Vec<f64> = points.iter().map(|p| (p - g.translation).dot(&x)).collect();
    let left = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let right = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (left + g.width / 2.0, g.width / 2.0 - right)
}

fn c03_centering(c: &mut Checks) {
    let geom = GripperGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let r = rotation_from_view(&random_rotation(&mut rng).0.z_axis(), rng.random_range(0.0..6.28)).unwrap();
        let g = GraspPose::new(r, Vec3::new(0.1, 0.2, -0.1), 0.08, 0.02);
        // Two contacts on the closing line, offset from the center.
        let a = rng.random_range(-0.035..-0.005);
        let b = rng.random_range(a + 0.005..0.035);
        let pts = [g.translation + g.closing_axis() * a, g.translation + g.closing_axis() * b];
        let out = center_gripper(&pts, &g, &geom);
        c.check(out.contact, "asymmetric case lost contact");
        let (l, rr) = fingertip_gaps(&pts, &out.grasp);
        worst = worst.max((l - rr).abs());
    }
    c.check(worst < CENTERING_TOL, format!("fingertip gap mismatch {worst:e}"));

    let mut idem = 0.0f64;
    for _ in 0..1000 {
        let g = GraspPose::new(random_rotation(&mut rng).0, Vec3::zeros(), rng.random_range(0.02..0.085), 0.02);
        let cloud: Vec<Vec3> = (0..30)
            .map(|_| Vec3::new(rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04)))
            .collect();
        let once = center_gripper(&cloud, &g, &geom);
        let twice = center_gripper(&cloud, &once.grasp, &geom);
        idem = idem.max((once.grasp.translation - twice.grasp.translation).norm());
        c.check(once.grasp.rotation == g.rotation && once.grasp.width == g.width, "centering changed more than the translation");
    }
    c.check(idem < CENTERING_TOL, format!("idempotence error {idem:e}"));
    c.note(format!("gap mismatch {worst:.1e}, idempotence {idem:.1e}"));
}

fn c04_stable_score(c: &mut Checks) {
    let sphere = shapes::sphere(1, 0.03, 500);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        // Any grasp whose center lies in a plane through the COG spanned by
        // its closing and approach axes.
        let r = random_rotation(&mut rng).0;
        let t = r.x_axis() * rng.random_range(-0.03..0.03) + r.z_axis() * rng.random_range(-0.05..0.05);
        let g = GraspPose::new(r, t, 0.07, 0.02);
        worst = worst.max(stable_score_raw(&sphere, &g));
    }
    c.check(worst < 1e-12, format!("COG-plane raw score {worst:e}"));
    let through = GraspPose::new(Rotation::identity(), Vec3::zeros(), 0.07, 0.02);
    c.check(stable_score_raw(&sphere, &through) == 0.0, "diametral sphere grasp not 0");

    let mut all_max_one = true;
    for _ in 0..20 {
        let set: Vec<GraspPose> = (0..50)
            .map(|_| {
                let mut g = random_grasp(&mut rng, Some(1));
                g.stable_score = stable_score_raw(&sphere, &g);
                g
            })
            .collect();
        let n = normalize_stable_scores(GraspLabelSet::new(Some(1), set)).unwrap();
        let max = n.labels.iter().map(|g| g.stable_score).fold(0.0, f64::max);
        all_max_one &= max == 1.0 && n.labels.iter().all(|g| (0.0..=1.0).contains(&g.stable_score));
    }
    c.check(all_max_one, "normalized set max is not 1");
    c.note(format!("max COG-plane raw {worst:.1e}"));
}

fn c05_antipodal(c: &mut Checks) {
    let grid = AnnotationGrid::default();
    let geom = GripperGeometry::default();
    let obj = shapes::ellipsoid(1, Vec3::new(0.04, 0.025, 0.02), 3000);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut tested, mut violations) = (0, 0);
    while tested < 200 {
        let r = rotation_from_view(&random_rotation(&mut rng).0.z_axis(), rng.random_range(0.0..6.28)).unwrap();
        let t = Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.015..0.015), rng.random_range(-0.01..0.01));
        let g = GraspPose::new(r, t, 0.085, rng.random_range(0.0..0.03));
        let Some(contacts) = antipodal_score(&obj, &g, &grid, &geom).unwrap().contacts else { continue };
        tested += 1;
        let mut prev = false;
        for k in 0..=100 {
            let ok = is_antipodal(&obj, &g, &contacts, k as f64 * 0.02);
            violations += (prev && !ok) as usize;
            prev = ok;
        }
    }
    c.check(violations == 0, format!("{violations} monotonicity violations"));

    let sphere = shapes::sphere(2, 0.03, 2000);
    let diametral = GraspPose::new(Rotation::identity(), Vec3::zeros(), 0.07, 0.02);
    let r = antipodal_score(&sphere, &diametral, &grid, &geom).unwrap();
    c.check(r.mu_min == Some(0.2), format!("sphere mu_min {:?}", r.mu_min));

    // Two faces whose normals sit 60° off the closing line: beyond every
    // cone in the friction grid.
    let tilt = 60f64.to_radians();
    let (mut points, mut normals) = (Vec::new(), Vec::new());
    for sign in [-1.0, 1.0] {
        let n = Vec3::new(sign * tilt.cos(), 0.0, tilt.sin());
        let along = Vec3::new(-n.z * sign, 0.0, n.x * sign).normalize();
        for i in -5..=5 {
            for j in -5..=5 {
                points.push(Vec3::new(sign * 0.02, 0.0, 0.0) + along * (i as f64 * 0.002) + Vec3::new(0.0, j as f64 * 0.002, 0.0));
                normals.push(n);
            }
        }
    }
    let wedge = ObjectModel::new(3, points, normals, None).unwrap();
    let w = antipodal_score(&wedge, &GraspPose::new(Rotation::identity(), Vec3::zeros(), 0.08, 0.02), &grid, &geom).unwrap();
    c.check(w.contacts.is_some() && w.score == 0.0, format!("wedge score {}", w.score));
    c.note(format!("{tested} grasps x 101 friction values"));
}

fn c06_contrastive(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let tau = 0.1;
    let mut worst = 0.0f64;
    for &m in &[2usize, 8, 32] {
        for _ in 0..20 {
            let s = nalgebra::DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let dist: Vec<f64> = (0..m * m).map(|_| if rng.random_bool(0.3) { 0.0 } else { 1.0 }).collect();
            let labels = AssociationLabels::from_distances(m, m, dist, 0.1);
            let (_, grad) = contrastive_loss(&s, &labels, tau).unwrap();
            let h = 1e-6;
            for i in 0..m {
                for j in 0..m {
                    let mut up = s.clone();
                    up[(i, j)] += h;
                    let mut dn = s.clone();
                    dn[(i, j)] -= h;
                    let fd = (contrastive_loss(&up, &labels, tau).unwrap().0 - contrastive_loss(&dn, &labels, tau).unwrap().0)
                        / (2.0 * h);
                    let rel = (fd - grad[(i, j)]).abs() / fd.abs().max(grad[(i, j)].abs()).max(1e-3);
                    worst = worst.max(rel);
                }
            }
        }
    }
    c.check(worst < FD_REL_TOL, format!("finite-difference relative error {worst:e}"));

    let s = nalgebra::DMatrix::from_element(1, 2, 0.5);
    let labels = AssociationLabels::from_distances(1, 2, vec![0.0, 1.0], 0.1);
    let (l, _) = contrastive_loss(&s, &labels, tau).unwrap();
    c.check((l - 2f64.ln()).abs() < LOG2_TOL, format!("equal-logit loss {l} vs ln 2"));
    c.note(format!("worst relative error {worst:.1e} over 60 instances"));
}

fn assoc_scene() -> String {
    format!(
        "[floor]\n[camera]\ndepth_noise_sigma = 0.002\n[randomize]\nposition = 0.04\nyaw = true\n\
         [[objects]]\nid = 1\n{FISH_SHAPE}\nposition = [-0.08, -0.05, 0.015]\n\
         [[objects]]\nid = 2\n{FISH_SHAPE}\nposition = [0.08, 0.05, 0.015]\n\
         [[objects]]\nid = 3\n{CAN_SHAPE}\nposition = [0.0, 0.1, 0.03]\n"
    )
}

fn c07_association_training(c: &mut Checks) {
    let w = world(&assoc_scene());
    let start = Instant::now();
    let opts = PairOptions { azimuths: (0.0, 20.0), max_grasps: 48, sigma: 0.1 };
    let pairs: Vec<_> = (0..30).map(|s| association_pair(&w, 1000 + s, &opts).unwrap()).collect();
    let (train, held_out) = pairs.split_at(24);
    let train: Vec<TrainingPair> = train.iter().map(|p| p.training.clone()).collect();
    let cfg = TrainConfig { dims: 64, steps: 500, learning_rate: 0.05, seed: 7, ..Default::default() };
    let out = train_embedding(&train, &cfg).unwrap();
    let decreasing = out.loss_history[..=50].windows(2).all(|w| w[1] < w[0]);
    c.check(decreasing, "loss not strictly decreasing over the first 50 steps");

    let (mut hits, mut anchors) = (0, 0);
    for p in held_out {
        let f1 = embed_rows(&out.model, &p.training.descriptors1).unwrap();
        let f2 = embed_rows(&out.model, &p.training.descriptors2).unwrap();
        let s = correspondence_matrix(&f1, &f2).unwrap();
        for i in 0..p.labels.rows {
            if p.labels.positives_in_row(i).next().is_none() {
                continue;
            }
            let j = (0..p.labels.cols).max_by(|a, b| s[(i, *a)].total_cmp(&s[(i, *b)])).unwrap();
            anchors += 1;
            hits += p.labels.is_positive(i, j) as usize;
        }
    }
    let acc = hits as f64 / anchors.max(1) as f64;
    c.check(anchors >= 100, format!("only {anchors} held-out anchors"));
    c.check(acc >= MIN_ASSOC_ACCURACY, format!("held-out top-1 accuracy {acc:.3}"));
    let elapsed = start.elapsed();
    c.check(elapsed < BUDGET_TRAINING, format!("runtime {elapsed:?}"));
    c.note(format!(
        "24 train / 6 held-out pairs, top-1 {acc:.3} on {anchors} anchors, loss {:.3} -> {:.3}, {elapsed:.1?}",
        out.loss_history[0],
        out.loss_history.last().unwrap()
    ));
}

fn moving_scene() -> String {
    format!(
        "[floor]\n[randomize]\nposition = 0.02\n\
         [[objects]]\nid = 1\n{FISH_SHAPE}\nposition = [-0.1, -0.05, 0.015]\n\
         mover = {{ kind = \"waypoint_loop\", points = [[-0.1, -0.05, 0.015], [0.1, -0.05, 0.015], [0.1, 0.08, 0.015], [-0.1, 0.08, 0.015]], speed = 0.08 }}\n\
         [[objects]]\nid = 2\n{FISH_SHAPE}\nposition = [0.1, 0.05, 0.015]\nyaw_deg = 90\n\
         mover = {{ kind = \"constant_velocity\", velocity = [0.0, 0.0, 0.0], yaw_rate = 0.5 }}\n\
         [[objects]]\nid = 3\n{FISH_SHAPE}\nposition = [0.0, 0.12, 0.015]\n\
         mover = {{ kind = \"sinusoid\", axis = [1.0, 0.0, 0.0], amplitude = 0.08, period = 4.0 }}\n"
    )
}

fn run_all(w: &SimWorld, controller: &str, n: u64) -> Vec<EpisodeReport> {
    let policy = policy_registry().create(controller).unwrap();
    (0..n).map(|s| run_episode(w, policy.as_ref(), s).unwrap()).collect()
}

fn c08_tracking_ordering(c: &mut Checks) {
    let w = world(&moving_scene());
    let start = Instant::now();
    let ours = summarize(&run_all(&w, "anygrasp", 50));
    let base = summarize(&run_all(&w, "nearest", 50));
    let (d_ours, d_base) = (ours.mean_tracking_distance.unwrap_or(f64::NAN), base.mean_tracking_distance.unwrap_or(f64::NAN));
    let (t_ours, t_base) = (ours.mean_time_to_success.unwrap_or(f64::NAN), base.mean_time_to_success.unwrap_or(f64::NAN));
    c.check(d_ours < d_base, format!("tracking distance {d_ours:.4} vs baseline {d_base:.4}"));
    c.check(t_ours < t_base, format!("time to success {t_ours:.3} vs baseline {t_base:.3}"));
    let elapsed = start.elapsed();
    c.check(elapsed < BUDGET_TRACKING, format!("runtime {elapsed:?}"));
    c.note(format!(
        "distance {d_ours:.4} vs {d_base:.4}, time {t_ours:.3}s vs {t_base:.3}s, success {}/50 vs {}/50, {elapsed:.1?}",
        ours.successes, base.successes
    ));
}

fn c09_static_catch(c: &mut Checks) {
    let w = world(&format!("[floor]\n[randomize]\nposition = 0.03\nyaw = true\n[[objects]]\nid = 1\n{FISH_SHAPE}\nposition = [0.0, 0.0, 0.015]\n"));
    let reports = run_all(&w, "anygrasp", 50);
    let ok = reports.iter().filter(|r| r.outcome == graspkit_core::simulator::Outcome::Success).count();
    let single = reports.iter().all(|r| r.executes == 1);
    let violations: usize = reports.iter().map(|r| r.trigger_violations).sum();
    c.check(ok == 50, format!("{ok}/50 succeeded"));
    c.check(single, "an episode issued more than one execute");
    c.check(violations == 0, format!("{violations} trigger violations"));
    c.note(format!("{ok}/50 success, {violations} violations"));
}

fn c10_noise_robustness(c: &mut Checks) {
    let toml = format!(
        "[floor]\n[camera]\ndepth_noise_sigma = 0.005\n[randomize]\nposition = 0.03\nyaw = true\n\
         [[objects]]\nid = 1\n{FISH_SHAPE}\nposition = [-0.07, -0.04, 0.015]\n\
         [[objects]]\nid = 2\n{FISH_SHAPE}\nposition = [0.07, 0.04, 0.015]\n\
         [[objects]]\nid = 3\n{CAN_SHAPE}\nposition = [0.0, 0.1, 0.03]\n"
    );
    let w = world(&toml);
    let mut total = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = w.initial_scene(&mut rng);
        let cloud = render_cloud(&scene, &w.camera, rng.random());
        let p = oracle_perception(&cloud, &scene, &w.library, &w.config.gripper, &w.config.perception_params(), w.provider.as_ref())
            .unwrap();
        let placed: Vec<PlacedObject> = scene.objects.iter().map(|o| PlacedObject { model: &o.model, pose: o.pose }).collect();
        let curve = evaluate_ap(&p.grasps, &placed, &w.config.gripper, &w.config.annotation, 10, 0.4).unwrap();
        total += curve.precision_at_k[9];
    }
    let mean = total / 20.0;
    c.check(mean >= MIN_NOISY_PRECISION, format!("mean precision@10 {mean:.3}"));
    c.note(format!("mean precision@10 {mean:.3} at 5 mm noise over 20 seeds"));
}

fn c11_self_evaluation(c: &mut Checks) {
    let geom = GripperGeometry::default();
    let grid = AnnotationGrid { n_views: 60, n_seeds: 128, ..Default::default() };
    let obj = shapes::cuboid(9, Vec3::new(0.015, 0.03, 0.02), 0.004);
    let set = annotate_object(&obj, &grid, &geom).unwrap();
    let mut labels = set.labels.clone();
    labels.sort_by(|a, b| b.score.total_cmp(&a.score));
    let pose = Pose::new(Rotation::rot_z(1.1), Vec3::new(0.05, 0.02, 0.02));
    let preds: Vec<GraspPose> = labels.iter().take(50).map(|g| transform_grasp(g, &pose)).collect();
    let curve = evaluate_ap(&preds, &[PlacedObject { model: &obj, pose }], &geom, &grid, 50, 0.4).unwrap();
    c.check(curve.mean_ap == 1.0, format!("self mean_ap {}", curve.mean_ap));

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("labels");
    graspkit_core::io::write_labels(&src.join("scene_0000/9.jsonl"), &set.labels).unwrap();
    graspkit_core::io::write_labels(&src.join("scene_0001/9.jsonl"), &preds).unwrap();
    let mut identical = true;
    for axis in [Axis::Pose, Axis::Image, Axis::Scene] {
        let dst = tmp.path().join(format!("{axis:?}"));
        downsample_dataset(&src, &dst, axis, 1).unwrap();
        for f in ["scene_0000/9.jsonl", "scene_0001/9.jsonl"] {
            identical &= std::fs::read(src.join(f)).unwrap() == std::fs::read(dst.join(f)).unwrap();
        }
    }
    c.check(identical, "downsample factor 1 changed bytes");
    c.note(format!("mean_ap {} on {} labels", curve.mean_ap, preds.len()));
}

type Criterion = (&'static str, fn(&mut Checks));

const CRITERIA: [Criterion; 11] = [
    ("c01_metric_suite", c01_metric_suite),
    ("c02_collision_oracle", c02_collision_oracle),
    ("c03_centering", c03_centering),
    ("c04_stable_score", c04_stable_score),
    ("c05_antipodal", c05_antipodal),
    ("c06_contrastive_loss", c06_contrastive),
    ("c07_association_training", c07_association_training),
    ("c08_tracking_ordering", c08_tracking_ordering),
    ("c09_static_catch", c09_static_catch),
    ("c10_noise_robustness", c10_noise_robustness),
    ("c11_self_evaluation", c11_self_evaluation),
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (name, _) in CRITERIA {
            println!("{name}: test");
        }
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut checks = Checks::default();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&mut checks)));
        if let Err(e) = result {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.failures.push(format!("panicked: {msg}"));
        }
        let status = if checks.failures.is_empty() { "PASS" } else { "FAIL" };
        let detail = if checks.failures.is_empty() { checks.notes.join("; ") } else { checks.failures.join("; ") };
        println!("{status} {name} ({:.1?}): {detail}", start.elapsed());
        failed += !checks.failures.is_empty() as usize;
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
