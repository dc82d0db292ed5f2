//! Analytic stand-in for learned grasp perception: ground-truth labels moved
//! through the current object poses and checked against the observed cloud.

use std::collections::BTreeMap;

use super::{PointCloud, SceneState};
use crate::association::GraspFeature;
use crate::collision::{CollisionChecker, GripperGeometry};
use crate::error::Result;
use crate::registry::{FeatureContext, FeatureProvider};
use crate::se3::{transform_grasp, GraspPose};

/// Object-frame labels per object, ranked by score, plus a global class
/// numbering used by the oracle feature channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelLibrary {
    labels: BTreeMap<u32, Vec<GraspPose>>,
    offsets: BTreeMap<u32, usize>,
    n_classes: usize,
}

impl LabelLibrary {
    pub fn new(sets: BTreeMap<u32, Vec<GraspPose>>) -> Self {
        let mut offsets = BTreeMap::new();
        let mut n = 0;
        let mut labels = BTreeMap::new();
        for (id, mut set) in sets {
            set.sort_by(|a, b| b.score.total_cmp(&a.score));
            offsets.insert(id, n);
            n += set.len();
            labels.insert(id, set);
        }
        LabelLibrary { labels, offsets, n_classes: n }
    }

    pub fn labels(&self, id: u32) -> &[GraspPose] {
        self.labels.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn class_of(&self, id: u32, index: usize) -> Option<usize> {
        self.offsets.get(&id).map(|o| o + index)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn object_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.labels.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Perception {
    /// World-frame grasps, best first.
    pub grasps: Vec<GraspPose>,
    pub features: Vec<GraspFeature>,
    /// `(object id, label index)` each grasp was derived from.
    pub sources: Vec<(u32, usize)>,
    pub classes: Vec<usize>,
}

impl Perception {
    pub fn is_empty(&self) -> bool {
        self.grasps.is_empty()
    }
}

/// Perception settings that matter inside a single frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionParams {
    pub min_visible: usize,
    pub max_grasps: usize,
    pub center: bool,
}

/// Labels of sufficiently visible objects, moved into the world, centred on
/// the observed cloud when enabled, collision-checked against it and ranked.
/// The stored label scores are already stability adjusted.
pub fn oracle_perception(
    cloud: &PointCloud,
    scene: &SceneState,
    library: &LabelLibrary,
    geom: &GripperGeometry,
    params: &PerceptionParams,
    provider: &dyn FeatureProvider,
) -> Result<Perception> {
    let mut ranked: Vec<(GraspPose, u32, usize)> = Vec::new();
    for o in &scene.objects {
        let id = o.id();
        if cloud.count_from(id) < params.min_visible {
            continue;
        }
        for (k, label) in library.labels(id).iter().enumerate() {
            ranked.push((transform_grasp(label, &o.pose), id, k));
        }
    }
    ranked.sort_by(|a, b| b.0.score.total_cmp(&a.0.score));

    let checker = CollisionChecker::new(&cloud.points, *geom);
    let mut out = Perception::default();
    for (g, id, k) in ranked {
        if out.grasps.len() >= params.max_grasps {
            break;
        }
        let centred = params.center.then(|| checker.center(&g)).filter(|c| c.contact).map(|c| c.grasp);
        let pick = centred
            .into_iter()
            .chain(std::iter::once(g))
            .find(|cand| !checker.collides(cand));
        if let Some(p) = pick {
            out.grasps.push(p);
            out.sources.push((id, k));
            out.classes.push(library.class_of(id, k).expect("known object"));
        }
    }
    let ctx = FeatureContext {
        points: &cloud.points,
        colors: cloud.colors.as_deref(),
        grasps: &out.grasps,
        classes: &out.classes,
        n_classes: library.n_classes(),
    };
    out.features = provider.features(&ctx)?;
    Ok(out)
}
