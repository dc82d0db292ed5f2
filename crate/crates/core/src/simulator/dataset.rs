//! Two-view association pairs for training and evaluating grasp embeddings.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{render_cloud, PointCloud, SceneState, SimWorld};
use crate::annotation::{association_labels, AssociationLabels};
use crate::association::{DescriptorExtractor, TrainingPair};
use crate::collision::CollisionChecker;
use crate::error::{Error, Result};
use crate::se3::{transform_grasp, DistanceParams, GraspPose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    /// Camera azimuths of the two views, degrees.
    pub azimuths: (f64, f64),
    /// Grasps kept per view.
    pub max_grasps: usize,
    pub sigma: f64,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            azimuths: (0.0, 30.0),
            max_grasps: 64,
            sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationPair {
    pub grasps1: Vec<GraspPose>,
    pub grasps2: Vec<GraspPose>,
    pub cloud1: PointCloud,
    pub cloud2: PointCloud,
    pub labels: AssociationLabels,
    pub training: TrainingPair,
}

/// Projected labels of visible objects that are collision-free against the
/// view's cloud, best first.
fn view_grasps(world: &SimWorld, scene: &SceneState, cloud: &PointCloud, max: usize) -> Vec<GraspPose> {
    let checker = CollisionChecker::new(&cloud.points, world.config.gripper);
    let mut all: Vec<GraspPose> = Vec::new();
    for o in &scene.objects {
        if cloud.count_from(o.id()) < world.config.perception.min_visible {
            continue;
        }
        all.extend(world.library.labels(o.id()).iter().map(|g| transform_grasp(g, &o.pose)));
    }
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    all.into_iter().filter(|g| !checker.collides(g)).take(max).collect()
}

fn descriptors(world: &SimWorld, cloud: &PointCloud, grasps: &[GraspPose]) -> DMatrix<f64> {
    let ex = DescriptorExtractor::new(&cloud.points, cloud.colors.as_deref(), world.config.descriptor);
    let d = world.config.descriptor.len();
    let mut m = DMatrix::zeros(grasps.len(), d);
    for (i, g) in grasps.iter().enumerate() {
        for (j, v) in ex.describe(g).into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

/// Renders the randomized initial scene from two viewpoints and pairs the
/// perceived grasps with their ground-truth association.
pub fn association_pair(world: &SimWorld, seed: u64, opts: &PairOptions) -> Result<AssociationPair> {
    if opts.max_grasps == 0 {
        return Err(Error::invalid("max_grasps must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = world.initial_scene(&mut rng);
    let cam1 = world.config.camera.orbit(opts.azimuths.0).camera()?;
    let cam2 = world.config.camera.orbit(opts.azimuths.1).camera()?;
    let cloud1 = render_cloud(&scene, &cam1, rng.random());
    let cloud2 = render_cloud(&scene, &cam2, rng.random());
    let grasps1 = view_grasps(world, &scene, &cloud1, opts.max_grasps);
    let grasps2 = view_grasps(world, &scene, &cloud2, opts.max_grasps);
    let poses = scene.object_poses();
    let labels = association_labels(&grasps1, &poses, &grasps2, &poses, &DistanceParams::default(), opts.sigma)?;
    let training = TrainingPair {
        descriptors1: descriptors(world, &cloud1, &grasps1),
        descriptors2: descriptors(world, &cloud2, &grasps2),
        labels: labels.clone(),
    };
    Ok(AssociationPair {
        grasps1,
        grasps2,
        cloud1,
        cloud2,
        labels,
        training,
    })
}

/// File form of an association pair. Infinite distances (grasps on
/// different objects) are stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub seed: u64,
    pub azimuths: (f64, f64),
    pub sigma: f64,
    pub grasps1: Vec<GraspPose>,
    pub grasps2: Vec<GraspPose>,
    pub descriptors1: Vec<Vec<f64>>,
    pub descriptors2: Vec<Vec<f64>>,
    pub distance: Vec<Option<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid(format!("{what} rows have different lengths")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

impl PairRecord {
    pub fn new(pair: &AssociationPair, seed: u64, opts: &PairOptions) -> Self {
        PairRecord {
            seed,
            azimuths: opts.azimuths,
            sigma: opts.sigma,
            grasps1: pair.grasps1.clone(),
            grasps2: pair.grasps2.clone(),
            descriptors1: rows_of(&pair.training.descriptors1),
            descriptors2: rows_of(&pair.training.descriptors2),
            distance: pair.labels.distance.iter().map(|d| d.is_finite().then_some(*d)).collect(),
        }
    }

    pub fn training_pair(&self) -> Result<TrainingPair> {
        let d1 = matrix_of(&self.descriptors1, "descriptors1")?;
        let d2 = matrix_of(&self.descriptors2, "descriptors2")?;
        if self.distance.len() != d1.nrows() * d2.nrows() {
            return Err(Error::invalid("distance table does not match the descriptor counts"));
        }
        if d1.nrows() > 0 && d2.nrows() > 0 && d1.ncols() != d2.ncols() {
            return Err(Error::invalid("descriptor lengths differ between the views"));
        }
        let distance = self.distance.iter().map(|d| d.unwrap_or(f64::INFINITY)).collect();
        Ok(TrainingPair {
            labels: AssociationLabels::from_distances(d1.nrows(), d2.nrows(), distance, self.sigma),
            descriptors1: d1,
            descriptors2: d2,
        })
    }
}
