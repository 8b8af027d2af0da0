//! Visual data augmentation: a linear semantic→visual hallucinator that
//! synthesizes features for classes without training images, and a softmax
//! classifier over all classes with MC-dropout inference.
//!
//! The classifier does not care where the synthetic features come from;
//! externally generated features can be passed to
//! [`train_visual_classifier`] in place of hallucinated ones.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::linear::{softmax, softmax_xent_loss_grad, FlatMap, LinearMap};
use crate::rng::{self, TAG_VISUAL};
use crate::semantic::stack_rows;
use crate::train::{sgd, validate_dropout, Fit, TrainConfig};

/// Linear generator: a feature row is `a · map + bias + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "HallucinatorFile", try_from = "HallucinatorFile")]
pub struct Hallucinator {
    map: LinearMap,
    noise_std: f64,
}

impl Hallucinator {
    pub fn new(map: LinearMap, noise_std: f64) -> Result<Self> {
        if !map.is_finite() {
            return Err(Error::Invalid("hallucinator map is not finite".into()));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::arg("noise_std", "must be finite and nonnegative"));
        }
        Ok(Self { map, noise_std })
    }

    pub fn map(&self) -> &LinearMap {
        &self.map
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Noiseless feature vector for prototype `a`.
    pub fn mean_features(&self, a: ArrayView1<f64>) -> Array1<f64> {
        self.map.apply(a)
    }

    /// `n` synthetic feature rows for prototype `a`, deterministic in `seed`.
    pub fn hallucinate(&self, a: ArrayView1<f64>, n: usize, seed: u64) -> Array2<f64> {
        let mean = self.mean_features(a);
        let mut out = Array2::zeros((n, mean.len()));
        let mut rng = rng::stream(&[seed, 0x4A11]);
        for mut row in out.rows_mut() {
            row.assign(&mean);
            if self.noise_std > 0.0 {
                for v in row.iter_mut() {
                    *v += self.noise_std * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        out
    }
}

/// Per-class sample count, mean and per-coordinate sum of squared deviations.
struct ClassMoments {
    count: usize,
    mean: Array1<f64>,
    m2: Array1<f64>,
}

fn class_moments(features: ArrayView2<f64>, labels: &[ClassId]) -> BTreeMap<ClassId, ClassMoments> {
    let mut acc: BTreeMap<ClassId, ClassMoments> = BTreeMap::new();
    for (x, &y) in features.rows().into_iter().zip(labels) {
        let m = acc.entry(y).or_insert_with(|| ClassMoments {
            count: 0,
            mean: Array1::zeros(x.len()),
            m2: Array1::zeros(x.len()),
        });
        m.count += 1;
        let k = m.count as f64;
        for ((mean, m2), &v) in m.mean.iter_mut().zip(m.m2.iter_mut()).zip(x.iter()) {
            let delta = v - *mean;
            *mean += delta / k;
            *m2 += delta * (v - *mean);
        }
    }
    acc
}

fn svd_least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = max_sv * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.solve(b, eps)
        .map_err(|e| Error::Invalid(format!("least-squares solve failed: {e}")))
}

/// Ridge least-squares fit mapping each class prototype to its class mean
/// feature vector. With `intercept`, the bias is fit unpenalized by centering;
/// otherwise the map passes through the origin. Rank-deficient systems get
/// the minimum-norm solution. `noise_std` is the mean within-class feature
/// standard deviation.
pub fn fit_hallucinator(
    features: ArrayView2<f64>,
    labels: &[ClassId],
    attributes: ArrayView2<f64>,
    ridge: f64,
    intercept: bool,
) -> Result<Hallucinator> {
    if features.nrows() == 0 {
        return Err(Error::arg("seen_features", "empty input"));
    }
    if labels.len() != features.nrows() {
        return Err(Error::arg("seen_labels", "one label per sample required"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::arg("ridge", "must be finite and nonnegative"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= attributes.nrows()) {
        return Err(Error::arg("seen_labels", format!("class {bad} has no prototype")));
    }
    let moments = class_moments(features, labels);
    let (k, l, m) = (features.ncols(), attributes.ncols(), moments.len());

    let noise_std = moments
        .values()
        .map(|c| c.m2.iter().map(|s| (s / c.count as f64).sqrt()).sum::<f64>() / k as f64)
        .sum::<f64>()
        / m as f64;

    let mut protos = Array2::zeros((m, l));
    let mut means = Array2::zeros((m, k));
    for (i, (&class, mom)) in moments.iter().enumerate() {
        protos.row_mut(i).assign(&attributes.row(class));
        means.row_mut(i).assign(&mom.mean);
    }
    let (proto_center, mean_center) = if intercept {
        (protos.mean_axis(Axis(0)).unwrap(), means.mean_axis(Axis(0)).unwrap())
    } else {
        (Array1::zeros(l), Array1::zeros(k))
    };
    let pc = &protos - &proto_center;
    let mc = &means - &mean_center;

    let extra = if ridge > 0.0 { l } else { 0 };
    let mut a = DMatrix::zeros(m + extra, l);
    let mut b = DMatrix::zeros(m + extra, k);
    for i in 0..m {
        for j in 0..l {
            a[(i, j)] = pc[[i, j]];
        }
        for j in 0..k {
            b[(i, j)] = mc[[i, j]];
        }
    }
    for j in 0..extra {
        a[(m + j, j)] = ridge.sqrt();
    }
    let solution = svd_least_squares(&a, &b)?;
    let weights = Array2::from_shape_fn((l, k), |(i, j)| solution[(i, j)]);
    let bias = &mean_center - &proto_center.dot(&weights);
    Hallucinator::new(LinearMap { weights, bias }, noise_std)
}

/// Softmax classifier over all classes with input dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "VisualFile", try_from = "VisualFile")]
pub struct VisualClassifier {
    map: LinearMap,
    dropout_rate: f64,
    t_passes: usize,
    base_seed: u64,
}

impl VisualClassifier {
    pub fn new(map: LinearMap, dropout_rate: f64, t_passes: usize, base_seed: u64) -> Result<Self> {
        validate_dropout(dropout_rate)?;
        if t_passes == 0 {
            return Err(Error::arg("t_passes", "must be at least 1"));
        }
        if !map.is_finite() {
            return Err(Error::Invalid("classifier weights are not finite".into()));
        }
        Ok(Self {
            map,
            dropout_rate,
            t_passes,
            base_seed,
        })
    }

    pub fn map(&self) -> &LinearMap {
        &self.map
    }

    pub fn num_classes(&self) -> usize {
        self.map.outputs()
    }

    pub fn t_passes(&self) -> usize {
        self.t_passes
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn with_passes(mut self, t_passes: usize) -> Result<Self> {
        if t_passes == 0 {
            return Err(Error::arg("t_passes", "must be at least 1"));
        }
        self.t_passes = t_passes;
        Ok(self)
    }

    /// Softmax output under the dropout mask of `(pass, sample)`.
    pub fn pass_probabilities(&self, x: ArrayView1<f64>, pass: usize, sample: u64) -> Array1<f64> {
        let mut xd = x.to_owned();
        rng::inference_dropout(
            xd.as_slice_mut().expect("owned vector"),
            self.dropout_rate,
            self.base_seed,
            TAG_VISUAL,
            pass,
            sample,
        );
        softmax(self.map.apply(xd.view()).view())
    }

    /// Mean of the `T` per-pass softmax outputs.
    pub fn mc_scores(&self, x: ArrayView1<f64>, sample: u64) -> Array1<f64> {
        let passes: Vec<Array1<f64>> = (0..self.t_passes)
            .map(|t| self.pass_probabilities(x, t, sample))
            .collect();
        average_distributions(&passes)
    }

    pub fn score_rows(&self, features: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
        let scores: Vec<Array1<f64>> = rows
            .par_iter()
            .map(|&i| self.mc_scores(features.row(i), i as u64))
            .collect();
        stack_rows(&scores, self.num_classes())
    }
}

/// Elementwise mean of a nonempty list of equal-length vectors.
pub fn average_distributions(passes: &[Array1<f64>]) -> Array1<f64> {
    let mut total = passes[0].clone();
    for p in &passes[1..] {
        total += p;
    }
    total / passes.len() as f64
}

/// Trains the classifier on real features of seen classes together with
/// synthetic features of the remaining classes.
#[allow(clippy::too_many_arguments)]
pub fn train_visual_classifier(
    real_features: ArrayView2<f64>,
    real_labels: &[ClassId],
    synthetic_features: ArrayView2<f64>,
    synthetic_labels: &[ClassId],
    num_classes: usize,
    dropout_rate: f64,
    t_passes: usize,
    cfg: &TrainConfig,
) -> Result<Fit<VisualClassifier>> {
    if real_labels.len() != real_features.nrows() || synthetic_labels.len() != synthetic_features.nrows() {
        return Err(Error::arg("labels", "one label per sample required"));
    }
    if real_features.nrows() + synthetic_features.nrows() == 0 {
        return Err(Error::arg("features", "empty input"));
    }
    let labels: Vec<ClassId> = real_labels.iter().chain(synthetic_labels).copied().collect();
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::arg("labels", format!("class {bad} outside [0, {num_classes})")));
    }
    let mut distinct = labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::arg("labels", "training data must cover at least 2 classes"));
    }
    let inputs = if synthetic_features.nrows() == 0 {
        real_features.to_owned()
    } else if real_features.nrows() == 0 {
        synthetic_features.to_owned()
    } else {
        concatenate(Axis(0), &[real_features, synthetic_features])
            .map_err(|_| Error::arg("synthetic_features", "feature dimension differs from real features"))?
    };
    let fit = sgd(
        LinearMap::zeros(inputs.ncols(), num_classes),
        inputs.view(),
        cfg,
        dropout_rate,
        |map, xb, batch| {
            let yb: Vec<ClassId> = batch.iter().map(|&i| labels[i]).collect();
            softmax_xent_loss_grad(map, xb, &yb)
        },
    )?;
    Ok(Fit {
        model: VisualClassifier::new(fit.model, dropout_rate, t_passes, cfg.seed)?,
        epoch_losses: fit.epoch_losses,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HallucinatorFile {
    kind: String,
    #[serde(flatten)]
    map: FlatMap,
    noise_std: f64,
}

impl From<Hallucinator> for HallucinatorFile {
    fn from(h: Hallucinator) -> Self {
        Self {
            kind: "hallucinator".into(),
            map: FlatMap::from(&h.map),
            noise_std: h.noise_std,
        }
    }
}

impl TryFrom<HallucinatorFile> for Hallucinator {
    type Error = String;

    fn try_from(f: HallucinatorFile) -> std::result::Result<Self, String> {
        if f.kind != "hallucinator" {
            return Err(format!("expected a hallucinator, found {:?}", f.kind));
        }
        Hallucinator::new(LinearMap::try_from(f.map)?, f.noise_std).map_err(|e| e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VisualFile {
    kind: String,
    #[serde(flatten)]
    map: FlatMap,
    dropout_rate: f64,
    t_passes: usize,
    base_seed: u64,
}

impl From<VisualClassifier> for VisualFile {
    fn from(m: VisualClassifier) -> Self {
        Self {
            kind: "visual_classifier".into(),
            map: FlatMap::from(&m.map),
            dropout_rate: m.dropout_rate,
            t_passes: m.t_passes,
            base_seed: m.base_seed,
        }
    }
}

impl TryFrom<VisualFile> for VisualClassifier {
    type Error = String;

    fn try_from(f: VisualFile) -> std::result::Result<Self, String> {
        if f.kind != "visual_classifier" {
            return Err(format!("expected a visual_classifier model, found {:?}", f.kind));
        }
        VisualClassifier::new(LinearMap::try_from(f.map)?, f.dropout_rate, f.t_passes, f.base_seed)
            .map_err(|e| e.to_string())
    }
}
