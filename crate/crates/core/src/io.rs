//! File formats: object models, label files, TOML configs, CSV exports.
//!
//! Object models are either Wavefront OBJ meshes (sampled into oriented
//! points) or plain text with one `x y z nx ny nz` sample per line. An
//! optional sidecar `<stem>.meta.toml` next to the model carries the object
//! id, center of gravity, scale and mesh sampling settings.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objects::ObjectModel;
use crate::se3::{GraspPose, Vec3};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    write_text(path, &(text + "\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectMeta {
    pub object_id: Option<u32>,
    pub cog: Option<[f64; 3]>,
    pub scale: f64,
    /// Surface samples drawn from a mesh.
    pub samples: usize,
    pub seed: u64,
}

impl Default for ObjectMeta {
    fn default() -> Self {
        ObjectMeta {
            object_id: None,
            cog: None,
            scale: 1.0,
            samples: 3000,
            seed: 0,
        }
    }
}

pub fn meta_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    model.with_file_name(format!("{stem}.meta.toml"))
}

/// Loads a model and its optional sidecar. `object_id` overrides the
/// sidecar id; without either the id is 0.
pub fn load_object(path: &Path, object_id: Option<u32>) -> Result<ObjectModel> {
    let meta_file = meta_path(path);
    let meta: ObjectMeta = if meta_file.exists() { read_toml(&meta_file)? } else { ObjectMeta::default() };
    if !(meta.scale > 0.0) {
        return Err(Error::parse(&meta_file, "scale must be positive"));
    }
    let id = object_id.or(meta.object_id).unwrap_or(0);
    let text = read_text(path)?;
    let is_obj = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    let (points, normals, mesh_cog) = if is_obj {
        sample_obj(&text, path, meta.samples, meta.seed)?
    } else {
        let (p, n) = parse_oriented_points(&text, path)?;
        (p, n, None)
    };
    let cog = meta.cog.map(Vec3::from).or(mesh_cog);
    let model = ObjectModel::new(id, points, normals, cog).map_err(|e| Error::parse(path, e))?;
    Ok(if meta.scale != 1.0 { model.scaled(meta.scale) } else { model })
}

fn parse_numbers(line: &str, path: &Path, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::parse(path, format!("line {lineno}: `{t}`: {e}")))
        })
        .collect()
}

pub fn parse_oriented_points(text: &str, path: &Path) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = parse_numbers(line, path, k + 1)?;
        if v.len() != 6 {
            return Err(Error::parse(path, format!("line {}: expected 6 numbers, found {}", k + 1, v.len())));
        }
        let n = Vec3::new(v[3], v[4], v[5]);
        if !(n.norm() > 0.0) {
            return Err(Error::parse(path, format!("line {}: zero normal", k + 1)));
        }
        points.push(Vec3::new(v[0], v[1], v[2]));
        normals.push(n.normalize());
    }
    Ok((points, normals))
}

pub fn format_oriented_points(model: &ObjectModel) -> String {
    let mut s = String::new();
    for (p, n) in model.points.iter().zip(&model.normals) {
        s.push_str(&format!("{} {} {} {} {} {}\n", p.x, p.y, p.z, n.x, n.y, n.z));
    }
    s
}

type Sampled = (Vec<Vec3>, Vec<Vec3>, Option<Vec3>);

/// Area-weighted surface samples with face normals. The center of gravity
/// is the solid centroid for a closed mesh with non-zero volume.
fn sample_obj(text: &str, path: &Path, samples: usize, seed: u64) -> Result<Sampled> {
    let mut verts: Vec<Vec3> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let mut it = raw.split_whitespace();
        match it.next() {
            Some("v") => {
                let v = parse_numbers(&it.take(3).collect::<Vec<_>>().join(" "), path, k + 1)?;
                if v.len() != 3 {
                    return Err(Error::parse(path, format!("line {}: vertex needs 3 coordinates", k + 1)));
                }
                verts.push(Vec3::new(v[0], v[1], v[2]));
            }
            Some("f") => {
                let idx = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|e| Error::parse(path, format!("line {}: `{tok}`: {e}", k + 1)))?;
                        let resolved = if i < 0 { verts.len() as i64 + i } else { i - 1 };
                        if resolved < 0 || resolved as usize >= verts.len() {
                            return Err(Error::parse(path, format!("line {}: vertex index {i} out of range", k + 1)));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<usize>>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse(path, format!("line {}: face needs 3 vertices", k + 1)));
                }
                for j in 1..idx.len() - 1 {
                    tris.push([idx[0], idx[j], idx[j + 1]]);
                }
            }
            _ => {}
        }
    }
    let areas: Vec<f64> = tris
        .iter()
        .map(|t| (verts[t[1]] - verts[t[0]]).cross(&(verts[t[2]] - verts[t[0]])).norm() / 2.0)
        .collect();
    let total: f64 = areas.iter().sum();
    if tris.is_empty() || !(total > 0.0) {
        return Err(Error::parse(path, "mesh has no faces with positive area"));
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(samples);
    let mut normals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let r = rng.random::<f64>() * total;
        let f = cumulative.partition_point(|c| *c < r).min(tris.len() - 1);
        let [a, b, c] = tris[f].map(|i| verts[i]);
        let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let n = (b - a).cross(&(c - a));
        if n.norm() == 0.0 {
            continue;
        }
        points.push(a + (b - a) * u + (c - a) * v);
        normals.push(n.normalize());
    }

    let mut volume = 0.0;
    let mut moment = Vec3::zeros();
    for t in &tris {
        let [a, b, c] = t.map(|i| verts[i]);
        let v6 = a.dot(&b.cross(&c));
        volume += v6;
        moment += (a + b + c) * v6;
    }
    let cog = (volume.abs() > 1e-15).then(|| moment / (4.0 * volume));
    Ok((points, normals, cog))
}

pub fn write_labels(path: &Path, labels: &[GraspPose]) -> Result<()> {
    let mut s = String::new();
    for g in labels {
        s.push_str(&serde_json::to_string(g).map_err(|e| Error::parse(path, e))?);
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn read_labels(path: &Path) -> Result<Vec<GraspPose>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g: GraspPose =
            serde_json::from_str(line).map_err(|e| Error::parse(path, format!("line {}: {e}", k + 1)))?;
        g.rotation
            .validate(1e-6)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", k + 1)))?;
        out.push(g);
    }
    Ok(out)
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::parse(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse(path, e))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Serialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

pub fn write_loss_history(path: &Path, history: &[f64]) -> Result<()> {
    let rows: Vec<LossRow> = history.iter().enumerate().map(|(step, &loss)| LossRow { step, loss }).collect();
    write_csv(path, &rows)
}
