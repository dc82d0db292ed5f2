//! Grasp descriptors, cosine correspondence, the supervised contrastive loss
//! and a linear embedding trained against it.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotation::AssociationLabels;
use crate::error::{Error, Result};
use crate::se3::{GraspPose, Vec3};
use crate::spatial::PointIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspFeature {
    pub values: Vec<f64>,
    /// Index of the grasp this feature was computed for.
    pub source: usize,
}

impl GraspFeature {
    pub fn new(values: Vec<f64>, source: usize) -> Self {
        GraspFeature { values, source }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorParams {
    /// Cylinder radius around the approach axis.
    pub radius: f64,
    /// Cylinder length, ending at the fingertips.
    pub length: f64,
    /// Occupancy histogram bins per axis.
    pub n_bins: usize,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            radius: 0.05,
            length: 0.04,
            n_bins: 4,
        }
    }
}

impl DescriptorParams {
    pub fn len(&self) -> usize {
        self.n_bins.pow(3) + 9 + 3 + 12
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Cylinder-grouped statistics of the cloud around a grasp:
/// `[occupancy histogram (n³), mean + covariance (9), mean color (3), pose (12)]`.
/// Everything but the pose block is expressed in the grasp frame.
pub fn handcrafted_descriptor(
    cloud: &[Vec3],
    colors: Option<&[Vec3]>,
    g: &GraspPose,
    params: &DescriptorParams,
) -> Vec<f64> {
    descriptor_from(cloud, colors, 0..cloud.len(), g, params)
}

fn descriptor_from(
    cloud: &[Vec3],
    colors: Option<&[Vec3]>,
    candidates: impl IntoIterator<Item = usize>,
    g: &GraspPose,
    params: &DescriptorParams,
) -> Vec<f64> {
    let n = params.n_bins;
    let r = params.radius;
    let z_hi = g.depth;
    let z_lo = g.depth - params.length;
    let inv = g.frame().inverse();

    let mut hist = vec![0.0; n * n * n];
    let mut sum = Vec3::zeros();
    let mut outer = nalgebra::Matrix3::<f64>::zeros();
    let mut color = Vec3::zeros();
    let mut count = 0usize;
    let bin = |v: f64, lo: f64, span: f64| (((v - lo) / span * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
    for i in candidates {
        let q = inv.transform_point(&cloud[i]);
        if q.x * q.x + q.y * q.y > r * r || q.z < z_lo || q.z > z_hi {
            continue;
        }
        let (bx, by, bz) = (bin(q.x, -r, 2.0 * r), bin(q.y, -r, 2.0 * r), bin(q.z, z_lo, params.length));
        hist[(bx * n + by) * n + bz] += 1.0;
        sum += q;
        outer += q * q.transpose();
        if let Some(c) = colors {
            color += c[i];
        }
        count += 1;
    }

    let mut out = Vec::with_capacity(params.len());
    if count > 0 {
        let c = count as f64;
        out.extend(hist.iter().map(|h| h / c));
        let mean = sum / c;
        let cov = outer / c - mean * mean.transpose();
        out.extend_from_slice(&[mean.x, mean.y, mean.z]);
        out.extend_from_slice(&[cov[(0, 0)], cov[(0, 1)], cov[(0, 2)], cov[(1, 1)], cov[(1, 2)], cov[(2, 2)]]);
        let mc = if colors.is_some() { color / c } else { Vec3::zeros() };
        out.extend_from_slice(&[mc.x, mc.y, mc.z]);
    } else {
        out.resize(n * n * n + 12, 0.0);
    }
    out.extend_from_slice(&g.pose_parameters());
    out
}

/// Batch descriptor extraction over one cloud.
pub struct DescriptorExtractor<'a> {
    cloud: &'a [Vec3],
    colors: Option<&'a [Vec3]>,
    index: PointIndex,
    params: DescriptorParams,
}

impl<'a> DescriptorExtractor<'a> {
    pub fn new(cloud: &'a [Vec3], colors: Option<&'a [Vec3]>, params: DescriptorParams) -> Self {
        DescriptorExtractor {
            cloud,
            colors,
            index: PointIndex::new(cloud, params.radius.max(0.01)),
            params,
        }
    }

    pub fn describe(&self, g: &GraspPose) -> Vec<f64> {
        let reach = (self.params.radius.powi(2) + (g.depth.abs() + self.params.length).powi(2)).sqrt() + 1e-9;
        let cands = self.index.candidates(&g.translation, reach);
        descriptor_from(self.cloud, self.colors, cands.into_iter().map(|i| i as usize), g, &self.params)
    }
}

/// Linear map `feature = Wᵀ d + b` with `W` of shape `d_in × c`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl EmbeddingModel {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::invalid(format!(
                "embedding weight has {} columns but bias has {} entries",
                weights.ncols(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding parameters must be finite"));
        }
        Ok(EmbeddingModel { weights, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Text form: `embedding <d_in> <c>` header, `d_in` rows of weights,
    /// then one row of biases.
    pub fn to_text(&self) -> String {
        let mut s = format!("embedding {} {}\n", self.input_dim(), self.output_dim());
        for r in 0..self.input_dim() {
            let row: Vec<String> = (0..self.output_dim()).map(|c| format!("{}", self.weights[(r, c)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        let b: Vec<String> = self.bias.iter().map(|v| format!("{v}")).collect();
        s.push_str(&b.join(" "));
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::invalid("empty embedding file"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "embedding" {
            return Err(Error::invalid(format!("bad embedding header `{header}`")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::invalid(format!("bad dimension `{s}`: {e}")));
        let (d_in, c) = (parse_usize(parts[1])?, parse_usize(parts[2])?);
        let parse_row = |line: Option<&str>| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| Error::invalid("embedding file is truncated"))?;
            let row = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| Error::invalid(format!("bad number `{v}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != c {
                return Err(Error::invalid(format!("expected {c} values per row, found {}", row.len())));
            }
            Ok(row)
        };
        let mut w = Vec::with_capacity(d_in * c);
        for _ in 0..d_in {
            w.extend(parse_row(lines.next())?);
        }
        let b = parse_row(lines.next())?;
        EmbeddingModel::new(DMatrix::from_row_slice(d_in, c, &w), DVector::from_vec(b))
    }
}

pub fn embed(model: &EmbeddingModel, descriptor: &[f64], source: usize) -> Result<GraspFeature> {
    if descriptor.len() != model.input_dim() {
        return Err(Error::invalid(format!(
            "descriptor has {} entries, embedding expects {}",
            descriptor.len(),
            model.input_dim()
        )));
    }
    let d = DVector::from_column_slice(descriptor);
    let f = model.weights.tr_mul(&d) + &model.bias;
    Ok(GraspFeature::new(f.iter().copied().collect(), source))
}

/// Pairwise cosine similarities, rows from `f1`, columns from `f2`.
pub fn correspondence_matrix(f1: &[GraspFeature], f2: &[GraspFeature]) -> Result<DMatrix<f64>> {
    let normalise = |fs: &[GraspFeature], side: &str| -> Result<Vec<Vec<f64>>> {
        fs.iter()
            .enumerate()
            .map(|(i, f)| {
                let n = f.norm();
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::invalid(format!("{side} feature {i} has zero norm")));
                }
                Ok(f.values.iter().map(|v| v / n).collect())
            })
            .collect()
    };
    let a = normalise(f1, "first")?;
    let b = normalise(f2, "second")?;
    if let (Some(x), Some(y)) = (a.first(), b.first()) {
        if x.len() != y.len() {
            return Err(Error::invalid("feature dimensions differ"));
        }
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        a[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
    }))
}

/// Supervised contrastive loss over a correspondence matrix and its
/// gradient with respect to the scores. Rows without positives contribute
/// nothing.
pub fn contrastive_loss(scores: &DMatrix<f64>, labels: &AssociationLabels, tau: f64) -> Result<(f64, DMatrix<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    if scores.nrows() != labels.rows || scores.ncols() != labels.cols {
        return Err(Error::invalid(format!(
            "score matrix is {}x{} but labels are {}x{}",
            scores.nrows(),
            scores.ncols(),
            labels.rows,
            labels.cols
        )));
    }
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(scores.nrows(), scores.ncols());
    let mut prob = vec![0.0; scores.ncols()];
    for i in 0..scores.nrows() {
        let n_pos = labels.positives_in_row(i).count();
        if n_pos == 0 {
            continue;
        }
        let max = (0..scores.ncols()).map(|j| scores[(i, j)] / tau).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (j, p) in prob.iter_mut().enumerate() {
            *p = (scores[(i, j)] / tau - max).exp();
            z += *p;
        }
        let lse = max + z.ln();
        let inv_pos = 1.0 / n_pos as f64;
        let mut pos_sum = 0.0;
        for (j, p) in prob.iter().enumerate() {
            let positive = labels.is_positive(i, j);
            if positive {
                pos_sum += scores[(i, j)] / tau;
            }
            let target = if positive { inv_pos } else { 0.0 };
            grad[(i, j)] = (p / z - target) / tau;
        }
        loss += lse - pos_sum * inv_pos;
    }
    Ok((loss, grad))
}

/// One pair of observations with raw descriptors (one row per grasp) and the
/// ground-truth association between them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub descriptors1: DMatrix<f64>,
    pub descriptors2: DMatrix<f64>,
    pub labels: AssociationLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dims: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate every `decay_every` steps (1.0 = fixed).
    pub decay: f64,
    pub decay_every: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dims: 64,
            steps: 500,
            learning_rate: 0.05,
            decay: 1.0,
            decay_every: 100,
            tau: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let k = step / self.decay_every.max(1);
        self.learning_rate * self.decay.powi(k as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    /// Objective before each update, plus the final value.
    pub loss_history: Vec<f64>,
}

/// Mean per-anchor contrastive loss of `model` on `pairs` (rows without
/// positives excluded).
pub fn mean_pair_loss(model: &EmbeddingModel, pairs: &[TrainingPair], tau: f64) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        let f1 = embed_rows(model, &p.descriptors1)?;
        let f2 = embed_rows(model, &p.descriptors2)?;
        let s = correspondence_matrix(&f1, &f2)?;
        let (l, _) = contrastive_loss(&s, &p.labels, tau)?;
        total += l / anchors(&p.labels).max(1) as f64;
    }
    Ok(total / pairs.len().max(1) as f64)
}

pub fn embed_rows(model: &EmbeddingModel, descriptors: &DMatrix<f64>) -> Result<Vec<GraspFeature>> {
    (0..descriptors.nrows())
        .map(|i| {
            let row: Vec<f64> = descriptors.row(i).iter().copied().collect();
            embed(model, &row, i)
        })
        .collect()
}

fn anchors(labels: &AssociationLabels) -> usize {
    (0..labels.rows).filter(|&i| labels.positives_in_row(i).next().is_some()).count()
}

/// Per-dimension affine standardisation folded into the embedding after
/// training.
struct Standardiser {
    mean: DVector<f64>,
    scale: DVector<f64>,
}

impl Standardiser {
    fn fit(pairs: &[TrainingPair], d_in: usize) -> Self {
        let mut sum = DVector::zeros(d_in);
        let mut sq = DVector::zeros(d_in);
        let mut n = 0.0;
        for p in pairs {
            for m in [&p.descriptors1, &p.descriptors2] {
                for row in m.row_iter() {
                    let r = row.transpose();
                    sq += r.component_mul(&r);
                    sum += r;
                    n += 1.0;
                }
            }
        }
        let mean = &sum / n;
        let var = &sq / n - mean.component_mul(&mean);
        let scale = var.map(|v| if v > 1e-18 { 1.0 / v.sqrt() } else { 1.0 });
        Standardiser { mean, scale }
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for mut row in out.row_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) * self.scale[j];
            }
        }
        out
    }

    /// Converts parameters acting on standardised input to raw input.
    fn fold(&self, w: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut raw_w = w.clone();
        for (r, mut row) in raw_w.row_iter_mut().enumerate() {
            row *= self.scale[r];
        }
        let shift = raw_w.tr_mul(&self.mean);
        (raw_w, b - shift)
    }
}

/// Gradient descent on the mean per-anchor contrastive loss, chained through
/// the embedding and the cosine correspondence matrix.
pub fn train_embedding(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let first = pairs.first().ok_or_else(|| Error::invalid("no training pairs"))?;
    if !pairs.iter().any(|p| p.labels.any_positive()) {
        return Err(Error::invalid("training pairs contain no positive associations"));
    }
    if cfg.dims == 0 || !(cfg.tau > 0.0) || !(cfg.learning_rate >= 0.0) {
        return Err(Error::invalid(format!("bad training configuration {cfg:?}")));
    }
    let d_in = first.descriptors1.ncols();
    for (k, p) in pairs.iter().enumerate() {
        if p.descriptors1.ncols() != d_in
            || p.descriptors2.ncols() != d_in
            || p.descriptors1.nrows() != p.labels.rows
            || p.descriptors2.nrows() != p.labels.cols
        {
            return Err(Error::invalid(format!("training pair {k} has inconsistent shapes")));
        }
    }

    let std = Standardiser::fit(pairs, d_in);
    let data: Vec<(DMatrix<f64>, DMatrix<f64>, &AssociationLabels, f64)> = pairs
        .iter()
        .map(|p| {
            (
                std.apply(&p.descriptors1),
                std.apply(&p.descriptors2),
                &p.labels,
                anchors(&p.labels).max(1) as f64,
            )
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0 / (d_in as f64).sqrt()).expect("finite std");
    let mut w = DMatrix::from_fn(d_in, cfg.dims, |_, _| normal.sample(&mut rng));
    let mut b = DVector::from_fn(cfg.dims, |_, _| normal.sample(&mut rng));

    let n_pairs = data.len() as f64;
    let mut history = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let mut total = 0.0;
        let mut gw = DMatrix::zeros(d_in, cfg.dims);
        let mut gb = DVector::zeros(cfg.dims);
        for (x1, x2, labels, n_anchor) in &data {
            let weight = 1.0 / (n_anchor * n_pairs);
            let (l, dw, db) = pair_gradient(&w, &b, x1, x2, labels, cfg.tau)?;
            total += l * weight;
            gw += dw * weight;
            gb += db * weight;
        }
        history.push(total);
        if step == cfg.steps {
            break;
        }
        let lr = cfg.learning_rate_at(step);
        w -= gw * lr;
        b -= gb * lr;
    }

    let (raw_w, raw_b) = std.fold(&w, &b);
    Ok(TrainOutcome {
        model: EmbeddingModel::new(raw_w, raw_b)?,
        loss_history: history,
    })
}

fn forward(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut f = x * w;
    for mut row in f.row_iter_mut() {
        row += b.transpose();
    }
    let norms = DVector::from_iterator(f.nrows(), f.row_iter().map(|r| r.norm().max(1e-12)));
    for (i, mut row) in f.row_iter_mut().enumerate() {
        row /= norms[i];
    }
    (f, norms)
}

/// Back-propagates `dL/dN` through row normalisation.
fn normalise_backward(n: &DMatrix<f64>, norms: &DVector<f64>, dn: &DMatrix<f64>) -> DMatrix<f64> {
    let mut df = dn.clone();
    for i in 0..n.nrows() {
        let dot = n.row(i).dot(&dn.row(i));
        for j in 0..n.ncols() {
            df[(i, j)] = (dn[(i, j)] - n[(i, j)] * dot) / norms[i];
        }
    }
    df
}

fn pair_gradient(
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    labels: &AssociationLabels,
    tau: f64,
) -> Result<(f64, DMatrix<f64>, DVector<f64>)> {
    let (n1, norms1) = forward(x1, w, b);
    let (n2, norms2) = forward(x2, w, b);
    let s = (&n1 * n2.transpose()).map(|v| v.clamp(-1.0, 1.0));
    let (loss, g) = contrastive_loss(&s, labels, tau)?;
    let dn1 = &g * &n2;
    let dn2 = g.transpose() * &n1;
    let df1 = normalise_backward(&n1, &norms1, &dn1);
    let df2 = normalise_backward(&n2, &norms2, &dn2);
    let dw = x1.transpose() * &df1 + x2.transpose() * &df2;
    let db = df1.row_sum().transpose() + df2.row_sum().transpose();
    Ok((loss, dw, db))
}

/// Feasible entry of `current` most similar to `prev`; ties go to the lowest
/// index. `None` when nothing is feasible.
pub fn match_grasp(prev: &GraspFeature, current: &[GraspFeature], feasible: &[bool]) -> Option<usize> {
    debug_assert_eq!(current.len(), feasible.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (f, ok)) in current.iter().zip(feasible).enumerate() {
        if !ok {
            continue;
        }
        let s = cosine(&prev.values, &f.values);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}
