//! Ranked-grasp AP curves and dataset downsampling.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{antipodal_score, AnnotationGrid};
use crate::collision::{CollisionChecker, GripperGeometry};
use crate::error::{Error, Result};
use crate::objects::ObjectModel;
use crate::se3::{transform_grasp, GraspPose, Pose, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APCurve {
    pub k: usize,
    /// `precision_at_k[i]` is the precision of the top `i + 1` predictions.
    pub precision_at_k: Vec<f64>,
    pub mean_ap: f64,
}

/// Ground-truth geometry of one object placed in the scene.
#[derive(Debug, Clone, Copy)]
pub struct PlacedObject<'a> {
    pub model: &'a ObjectModel,
    pub pose: Pose,
}

/// Scores one prediction: it must not touch any object and must be
/// antipodal at quality `theta` on its own object, or on the best object
/// when it carries no id.
fn is_true_positive(
    g: &GraspPose,
    scene: &[PlacedObject<'_>],
    checker: &CollisionChecker<'_>,
    grid: &AnnotationGrid,
    geom: &GripperGeometry,
    theta: f64,
) -> Result<bool> {
    if checker.collides(g) {
        return Ok(false);
    }
    let mut best = 0.0f64;
    for o in scene {
        if g.object_id.is_some_and(|id| id != o.model.object_id) {
            continue;
        }
        let local = transform_grasp(g, &o.pose.inverse());
        best = best.max(antipodal_score(o.model, &local, grid, geom)?.score);
    }
    Ok(best >= theta)
}

pub fn evaluate_ap(
    predictions: &[GraspPose],
    scene: &[PlacedObject<'_>],
    geom: &GripperGeometry,
    grid: &AnnotationGrid,
    k: usize,
    theta: f64,
) -> Result<APCurve> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !theta.is_finite() {
        return Err(Error::invalid("theta must be finite"));
    }
    let world: Vec<Vec3> = scene
        .iter()
        .flat_map(|o| o.model.points.iter().map(move |p| o.pose.transform_point(p)))
        .collect();
    let checker = CollisionChecker::new(&world, *geom);
    let hits: Vec<bool> = predictions
        .par_iter()
        .take(k)
        .map(|g| is_true_positive(g, scene, &checker, grid, geom, theta))
        .collect::<Result<_>>()?;
    Ok(curve_from_hits(&hits, k))
}

/// Precision at every cutoff `1..=k`; missing predictions count as misses.
pub fn curve_from_hits(hits: &[bool], k: usize) -> APCurve {
    let mut tp = 0usize;
    let precision_at_k: Vec<f64> = (0..k)
        .map(|i| {
            if hits.get(i).copied().unwrap_or(false) {
                tp += 1;
            }
            tp as f64 / (i + 1) as f64
        })
        .collect();
    let mean_ap = precision_at_k.iter().sum::<f64>() / k as f64;
    APCurve { k, precision_at_k, mean_ap }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Pose,
    Image,
    Scene,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pose" => Ok(Axis::Pose),
            "image" => Ok(Axis::Image),
            "scene" => Ok(Axis::Scene),
            other => Err(Error::invalid(format!("unknown axis `{other}` (expected pose, image or scene)"))),
        }
    }
}

/// Counts of what a downsampling pass kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DownsampleStats {
    pub seen: usize,
    pub kept: usize,
}

fn sorted_entries(dir: &Path) -> Result<Vec<fs::DirEntry>> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn copy_tree(src: &Path, dst: &Path) -> Result<()> {
    fs::create_dir_all(dst).map_err(|e| Error::io(dst, e))?;
    for e in sorted_entries(src)? {
        let to = dst.join(e.file_name());
        if e.path().is_dir() {
            copy_tree(&e.path(), &to)?;
        } else {
            fs::copy(e.path(), &to).map_err(|err| Error::io(e.path(), err))?;
        }
    }
    Ok(())
}

/// Stride subsampling of a label dataset laid out as one directory per scene.
///
/// - `pose`: every `factor`-th line of every label file.
/// - `image`: every `factor`-th file (sorted by name) in each directory.
/// - `scene`: every `factor`-th scene directory (sorted by name); loose
///   files at the top level are copied.
///
/// Factor 1 copies the tree unchanged.
pub fn downsample_dataset(input: &Path, output: &Path, axis: Axis, factor: usize) -> Result<DownsampleStats> {
    if factor == 0 {
        return Err(Error::invalid("factor must be at least 1"));
    }
    if !input.is_dir() {
        return Err(Error::io(
            input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input is not a directory"),
        ));
    }
    let mut stats = DownsampleStats::default();
    if factor == 1 {
        copy_tree(input, output)?;
        return Ok(stats);
    }
    match axis {
        Axis::Pose => pose_stride(input, output, factor, &mut stats)?,
        Axis::Image => image_stride(input, output, factor, &mut stats)?,
        Axis::Scene => {
            fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
            let mut n = 0;
            for e in sorted_entries(input)? {
                let to = output.join(e.file_name());
                if e.path().is_dir() {
                    if n % factor == 0 {
                        copy_tree(&e.path(), &to)?;
                        stats.kept += 1;
                    }
                    n += 1;
                    stats.seen += 1;
                } else {
                    fs::copy(e.path(), &to).map_err(|err| Error::io(e.path(), err))?;
                }
            }
        }
    }
    Ok(stats)
}

fn pose_stride(src: &Path, dst: &Path, factor: usize, stats: &mut DownsampleStats) -> Result<()> {
    fs::create_dir_all(dst).map_err(|e| Error::io(dst, e))?;
    for e in sorted_entries(src)? {
        let to = dst.join(e.file_name());
        if e.path().is_dir() {
            pose_stride(&e.path(), &to, factor, stats)?;
            continue;
        }
        let text = crate::io::read_text(&e.path())?;
        let mut out = String::new();
        for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            stats.seen += 1;
            if i % factor == 0 {
                stats.kept += 1;
                out.push_str(line);
                out.push('\n');
            }
        }
        crate::io::write_text(&to, &out)?;
    }
    Ok(())
}

fn image_stride(src: &Path, dst: &Path, factor: usize, stats: &mut DownsampleStats) -> Result<()> {
    fs::create_dir_all(dst).map_err(|e| Error::io(dst, e))?;
    let mut n = 0;
    for e in sorted_entries(src)? {
        let to = dst.join(e.file_name());
        if e.path().is_dir() {
            image_stride(&e.path(), &to, factor, stats)?;
            continue;
        }
        stats.seen += 1;
        if n % factor == 0 {
            stats.kept += 1;
            fs::copy(e.path(), &to).map_err(|err| Error::io(e.path(), err))?;
        }
        n += 1;
    }
    Ok(())
}
