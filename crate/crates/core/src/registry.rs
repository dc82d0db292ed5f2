//! Named strategy registries. Controllers and feature providers are trait
//! objects chosen at runtime by name from config or the command line.

use crate::association::{cosine, match_grasp, DescriptorExtractor, DescriptorParams, EmbeddingModel, GraspFeature};
use crate::error::{Error, Result};
use crate::se3::{GraspPose, Vec3};
use crate::tracking::Observation;

type Factory<T, O> = Box<dyn Fn(&O) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized, O = ()> {
    kind: &'static str,
    entries: Vec<(&'static str, Factory<T, O>)>,
}

impl<T: ?Sized, O> Registry<T, O> {
    pub fn new(kind: &'static str) -> Self {
        Registry { kind, entries: Vec::new() }
    }

    pub fn register(&mut self, name: &'static str, factory: impl Fn(&O) -> Result<Box<T>> + Send + Sync + 'static) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, Box::new(factory)));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn create_with(&self, name: &str, options: &O) -> Result<Box<T>> {
        match self.entries.iter().find(|(n, _)| *n == name) {
            Some((_, f)) => f(options),
            None => Err(Error::invalid(format!(
                "unknown {} `{name}` (known: {})",
                self.kind,
                self.names().join(", ")
            ))),
        }
    }
}

impl<T: ?Sized> Registry<T, ()> {
    pub fn create(&self, name: &str) -> Result<Box<T>> {
        self.create_with(name, &())
    }
}

/// How the controller follows its target after the first frame.
pub trait TrackingPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    fn select_next(
        &self,
        prev: &GraspPose,
        prev_feature: &GraspFeature,
        obs: &Observation<'_>,
        feasible: &[bool],
    ) -> Option<usize>;
}

/// Follows the grasp whose feature best matches the previous one.
#[derive(Debug, Clone, Copy, Default)]
pub struct AssociationPolicy;

impl TrackingPolicy for AssociationPolicy {
    fn name(&self) -> &'static str {
        "anygrasp"
    }

    /// Without any positively similar candidate the tracked grasp is taken
    /// as occluded for this frame and the closest grasp stands in for it.
    fn select_next(&self, prev: &GraspPose, prev_feature: &GraspFeature, obs: &Observation<'_>, feasible: &[bool]) -> Option<usize> {
        let i = match_grasp(prev_feature, obs.features, feasible)?;
        if cosine(&prev_feature.values, &obs.features[i].values) > 0.0 {
            Some(i)
        } else {
            NearestPolicy.select_next(prev, prev_feature, obs, feasible)
        }
    }
}

/// Baseline: follows the feasible grasp closest in world translation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestPolicy;

impl TrackingPolicy for NearestPolicy {
    fn name(&self) -> &'static str {
        "nearest"
    }

    fn select_next(&self, prev: &GraspPose, _: &GraspFeature, obs: &Observation<'_>, feasible: &[bool]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, (g, ok)) in obs.grasps.iter().zip(feasible).enumerate() {
            let d = (g.translation - prev.translation).norm();
            if *ok && best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

pub fn policy_registry() -> Registry<dyn TrackingPolicy> {
    let mut r = Registry::new("controller");
    r.register("anygrasp", |_| Ok(Box::new(AssociationPolicy) as Box<dyn TrackingPolicy>));
    r.register("nearest", |_| Ok(Box::new(NearestPolicy) as Box<dyn TrackingPolicy>));
    r
}

/// Everything a feature provider may look at for one frame.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub points: &'a [Vec3],
    pub colors: Option<&'a [Vec3]>,
    pub grasps: &'a [GraspPose],
    /// Ground-truth label class of each grasp (oracle channel).
    pub classes: &'a [usize],
    pub n_classes: usize,
}

pub trait FeatureProvider: Send + Sync {
    fn name(&self) -> &'static str;

    fn features(&self, ctx: &FeatureContext<'_>) -> Result<Vec<GraspFeature>>;
}

/// One-hot of the ground-truth label class.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleFeatures;

impl FeatureProvider for OracleFeatures {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn features(&self, ctx: &FeatureContext<'_>) -> Result<Vec<GraspFeature>> {
        if ctx.classes.len() != ctx.grasps.len() {
            return Err(Error::invalid("oracle features need one class per grasp"));
        }
        ctx.classes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c >= ctx.n_classes {
                    return Err(Error::invalid(format!("class {c} out of range {}", ctx.n_classes)));
                }
                let mut v = vec![0.0; ctx.n_classes];
                v[c] = 1.0;
                Ok(GraspFeature::new(v, i))
            })
            .collect()
    }
}

/// Cylinder descriptors, optionally passed through a trained embedding.
#[derive(Debug, Clone)]
pub struct HandcraftedFeatures {
    pub params: DescriptorParams,
    pub model: Option<EmbeddingModel>,
}

impl FeatureProvider for HandcraftedFeatures {
    fn name(&self) -> &'static str {
        "handcrafted"
    }

    fn features(&self, ctx: &FeatureContext<'_>) -> Result<Vec<GraspFeature>> {
        use rayon::prelude::*;
        let ex = DescriptorExtractor::new(ctx.points, ctx.colors, self.params);
        ctx.grasps
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let d = ex.describe(g);
                match &self.model {
                    Some(m) => crate::association::embed(m, &d, i),
                    None => Ok(GraspFeature::new(d, i)),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct FeatureOptions {
    pub descriptor: DescriptorParams,
    pub model: Option<EmbeddingModel>,
}

pub fn feature_registry() -> Registry<dyn FeatureProvider, FeatureOptions> {
    let mut r = Registry::new("feature provider");
    r.register("oracle", |_| Ok(Box::new(OracleFeatures) as Box<dyn FeatureProvider>));
    r.register("handcrafted", |o: &FeatureOptions| {
        if let Some(m) = &o.model {
            if m.input_dim() != o.descriptor.len() {
                return Err(Error::invalid(format!(
                    "embedding expects {} inputs but descriptors have {}",
                    m.input_dim(),
                    o.descriptor.len()
                )));
            }
        }
        Ok(Box::new(HandcraftedFeatures {
            params: o.descriptor,
            model: o.model.clone(),
        }) as Box<dyn FeatureProvider>)
    });
    r
}
