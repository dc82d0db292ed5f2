//! Scene configuration and the prepared simulation world.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::perception::{LabelLibrary, PerceptionParams};
use super::{Background, Camera, Mover, SceneObject, SceneState};
use crate::annotation::{annotate_object, AnnotationGrid};
use crate::association::{DescriptorParams, EmbeddingModel};
use crate::collision::GripperGeometry;
use crate::error::{Error, Result};
use crate::objects::{shapes, ObjectModel};
use crate::registry::{feature_registry, FeatureOptions, FeatureProvider};
use crate::se3::{GraspPose, Pose, Rotation, Vec3};
use crate::tracking::TrackConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub depth_noise_sigma: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            position: [0.0, 0.0, 0.6],
            look_at: [0.0, 0.0, 0.0],
            focal: 150.0,
            width: 160,
            height: 120,
            depth_noise_sigma: 0.0,
        }
    }
}

impl CameraConfig {
    pub fn camera(&self) -> Result<Camera> {
        Camera::look_at(
            Vec3::from(self.position),
            Vec3::from(self.look_at),
            self.focal,
            self.width,
            self.height,
            self.depth_noise_sigma,
        )
    }

    /// The same camera swung about the vertical through its target.
    pub fn orbit(&self, azimuth_deg: f64) -> CameraConfig {
        let target = Vec3::from(self.look_at);
        let offset = Rotation::rot_z(azimuth_deg.to_radians()).apply(&(Vec3::from(self.position) - target));
        CameraConfig {
            position: (target + offset).into(),
            ..self.clone()
        }
    }
}

/// Flat tank floor rendered as background geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloorConfig {
    pub z: f64,
    pub half_extent: f64,
    pub spacing: f64,
    pub color: [f64; 3],
}

impl Default for FloorConfig {
    fn default() -> Self {
        FloorConfig {
            z: 0.0,
            half_extent: 0.25,
            spacing: 0.003,
            color: [0.2, 0.3, 0.6],
        }
    }
}

impl FloorConfig {
    fn points(&self) -> Result<Vec<Vec3>> {
        if !(self.spacing > 0.0 && self.half_extent > 0.0) {
            return Err(Error::invalid("floor spacing and extent must be positive"));
        }
        let n = (2.0 * self.half_extent / self.spacing).round() as i64;
        let mut out = Vec::with_capacity(((n + 1) * (n + 1)) as usize);
        for i in 0..=n {
            for j in 0..=n {
                let x = -self.half_extent + i as f64 * self.spacing;
                let y = -self.half_extent + j as f64 * self.spacing;
                out.push(Vec3::new(x, y, self.z));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere { radius: f64, samples: usize },
    Ellipsoid { semi_axes: [f64; 3], samples: usize },
    Cuboid { half_extents: [f64; 3], spacing: f64 },
    Cylinder { radius: f64, half_height: f64, spacing: f64 },
}

impl ShapeSpec {
    pub fn build(&self, id: u32) -> Result<ObjectModel> {
        let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        let ok = match self {
            ShapeSpec::Sphere { radius, samples } => positive(&[*radius]) && *samples > 0,
            ShapeSpec::Ellipsoid { semi_axes, samples } => positive(semi_axes) && *samples > 0,
            ShapeSpec::Cuboid { half_extents, spacing } => positive(half_extents) && positive(&[*spacing]),
            ShapeSpec::Cylinder { radius, half_height, spacing } => positive(&[*radius, *half_height, *spacing]),
        };
        if !ok {
            return Err(Error::invalid(format!("invalid shape {self:?}")));
        }
        Ok(match self {
            ShapeSpec::Sphere { radius, samples } => shapes::sphere(id, *radius, *samples),
            ShapeSpec::Ellipsoid { semi_axes, samples } => shapes::ellipsoid(id, Vec3::from(*semi_axes), *samples),
            ShapeSpec::Cuboid { half_extents, spacing } => shapes::cuboid(id, Vec3::from(*half_extents), *spacing),
            ShapeSpec::Cylinder { radius, half_height, spacing } => shapes::cylinder(id, *radius, *half_height, *spacing),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub id: u32,
    #[serde(default)]
    pub shape: Option<ShapeSpec>,
    /// Model file, relative to the config file.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw_deg: f64,
    #[serde(default = "default_color")]
    pub color: [f64; 3],
    #[serde(default)]
    pub mover: Mover,
}

fn default_color() -> [f64; 3] {
    [0.8, 0.5, 0.2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub min_visible: usize,
    pub max_grasps: usize,
    pub center: bool,
    /// Per-object cap on labels considered each frame, best first.
    pub label_budget: usize,
    /// Labels whose approach is tilted further than this from straight down
    /// at the initial pose are dropped. Movers only yaw objects, so the tilt
    /// never changes during an episode.
    pub label_cone_deg: f64,
    pub features: String,
    /// Trained embedding for the handcrafted provider, relative to the config.
    pub model: Option<PathBuf>,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            min_visible: 20,
            max_grasps: 100,
            center: true,
            label_budget: 400,
            label_cone_deg: 25.0,
            features: "oracle".into(),
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub name: String,
    /// TCP speed cap, m/s.
    pub tcp_speed: f64,
    pub ready: [f64; 3],
    pub horizon: f64,
    pub dt: f64,
    pub slip_probability: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            name: "anygrasp".into(),
            tcp_speed: 0.5,
            ready: [0.0, 0.0, 0.3],
            horizon: 15.0,
            dt: 0.1,
            slip_probability: 0.0,
        }
    }
}

/// Per-episode perturbation of the initial object poses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizeConfig {
    /// Uniform horizontal jitter half-width, m.
    pub position: f64,
    /// Uniformly random initial yaw.
    pub yaw: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub floor: Option<FloorConfig>,
    pub objects: Vec<ObjectConfig>,
    #[serde(default)]
    pub gripper: GripperGeometry,
    #[serde(default)]
    pub annotation: AnnotationGrid,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub track: TrackConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub randomize: RandomizeConfig,
    #[serde(default)]
    pub descriptor: DescriptorParams,
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::invalid(format!("scene config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: SceneConfig = crate::io::read_toml(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.camera()?;
        self.gripper.validate()?;
        self.annotation.validate()?;
        self.track.validate()?;
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return Err(Error::invalid(format!("duplicate object id {}", o.id)));
            }
            if o.shape.is_some() == o.model.is_some() {
                return Err(Error::invalid(format!("object {} needs exactly one of `shape` or `model`", o.id)));
            }
            o.mover.validate()?;
        }
        let c = &self.controller;
        if !(c.tcp_speed > 0.0 && c.dt > 0.0 && c.horizon > 0.0) || !(0.0..=1.0).contains(&c.slip_probability) {
            return Err(Error::invalid(format!("invalid controller block {c:?}")));
        }
        if !(self.randomize.position >= 0.0) || self.perception.max_grasps == 0 {
            return Err(Error::invalid("randomize.position must be non-negative and max_grasps positive"));
        }
        Ok(())
    }

    pub fn build_models(&self, base_dir: &Path) -> Result<Vec<ObjectModel>> {
        self.objects
            .iter()
            .map(|o| match (&o.shape, &o.model) {
                (Some(s), _) => s.build(o.id),
                (None, Some(p)) => crate::io::load_object(&base_dir.join(p), Some(o.id)),
                (None, None) => unreachable!("validated"),
            })
            .collect()
    }

    /// Object poses at `t = 0` before randomization.
    pub fn initial_poses(&self) -> Vec<Pose> {
        self.objects
            .iter()
            .map(|o| Pose::new(Rotation::rot_z(o.yaw_deg.to_radians()), Vec3::from(o.position)))
            .collect()
    }

    pub fn perception_params(&self) -> PerceptionParams {
        PerceptionParams {
            min_visible: self.perception.min_visible,
            max_grasps: self.perception.max_grasps,
            center: self.perception.center,
        }
    }
}

/// A scene config with its models built, labels prepared and the feature
/// provider resolved. Shared read-only across episodes.
pub struct SimWorld {
    pub config: SceneConfig,
    pub camera: Camera,
    pub models: Vec<Arc<ObjectModel>>,
    pub library: LabelLibrary,
    pub background: Option<Arc<Background>>,
    pub provider: Box<dyn FeatureProvider>,
}

impl std::fmt::Debug for SimWorld {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimWorld")
            .field("objects", &self.models.len())
            .field("classes", &self.library.n_classes())
            .field("features", &self.provider.name())
            .finish()
    }
}

impl SimWorld {
    /// Builds models and annotates each with the configured grid.
    pub fn build(config: SceneConfig, base_dir: &Path) -> Result<Self> {
        let models = config.build_models(base_dir)?;
        let mut labels = BTreeMap::new();
        // Objects built from the same analytic shape share one annotation.
        let mut by_shape: Vec<(&ShapeSpec, u32)> = Vec::new();
        for (m, o) in models.iter().zip(&config.objects) {
            let cached = o
                .shape
                .as_ref()
                .and_then(|s| by_shape.iter().find(|(k, _)| *k == s))
                .map(|(_, id)| *id);
            let set: Vec<GraspPose> = match cached {
                Some(id) => labels
                    .get(&id)
                    .map(|v: &Vec<GraspPose>| v.iter().map(|g| GraspPose { object_id: Some(m.object_id), ..g.clone() }).collect())
                    .expect("cached labels"),
                None => {
                    if let Some(s) = &o.shape {
                        by_shape.push((s, m.object_id));
                    }
                    annotate_object(m, &config.annotation, &config.gripper)?.labels
                }
            };
            labels.insert(m.object_id, set);
        }
        Self::with_labels(config, models, labels, base_dir)
    }

    /// Uses precomputed object-frame labels keyed by object id.
    pub fn with_labels(
        config: SceneConfig,
        models: Vec<ObjectModel>,
        labels: BTreeMap<u32, Vec<GraspPose>>,
        base_dir: &Path,
    ) -> Result<Self> {
        config.validate()?;
        let camera = config.camera.camera()?;
        let cone = config.perception.label_cone_deg.to_radians();
        let poses = config.initial_poses();
        let mut kept = BTreeMap::new();
        for (m, pose) in models.iter().zip(&poses) {
            let mut set: Vec<GraspPose> = labels
                .get(&m.object_id)
                .ok_or_else(|| Error::invalid(format!("no labels for object {}", m.object_id)))?
                .iter()
                .filter(|g| (-pose.rotation.apply(&g.approach()).z).clamp(-1.0, 1.0).acos() <= cone)
                .cloned()
                .collect();
            set.sort_by(|a, b| b.score.total_cmp(&a.score));
            set.truncate(config.perception.label_budget);
            kept.insert(m.object_id, set);
        }
        let background = match &config.floor {
            Some(f) => Some(Arc::new(Background {
                points: f.points()?,
                color: Vec3::from(f.color),
            })),
            None => None,
        };
        let model = match &config.perception.model {
            Some(p) => Some(EmbeddingModel::from_text(&crate::io::read_text(&base_dir.join(p))?)?),
            None => None,
        };
        let provider = feature_registry().create_with(
            &config.perception.features,
            &FeatureOptions {
                descriptor: config.descriptor,
                model,
            },
        )?;
        Ok(SimWorld {
            camera,
            models: models.into_iter().map(Arc::new).collect(),
            library: LabelLibrary::new(kept),
            background,
            provider,
            config,
        })
    }

    /// Replaces the feature provider (e.g. with a freshly trained embedding).
    pub fn set_provider(&mut self, provider: Box<dyn FeatureProvider>) {
        self.provider = provider;
    }

    /// Scene at `t = 0`, with per-episode randomization drawn from `rng`.
    pub fn initial_scene(&self, rng: &mut impl Rng) -> SceneState {
        let r = &self.config.randomize;
        let objects = self
            .config
            .objects
            .iter()
            .zip(self.config.initial_poses())
            .zip(&self.models)
            .map(|((o, mut pose), model)| {
                if r.position > 0.0 {
                    pose.translation.x += rng.random_range(-r.position..=r.position);
                    pose.translation.y += rng.random_range(-r.position..=r.position);
                }
                if r.yaw {
                    let yaw = rng.random_range(0.0..std::f64::consts::TAU);
                    pose.rotation = Rotation::rot_z(yaw).compose(&pose.rotation);
                }
                SceneObject::new(model.clone(), pose, o.mover.clone(), Vec3::from(o.color))
            })
            .collect();
        SceneState::new(objects, self.background.clone())
    }
}
