//! Semantic attribute prediction: a linear visual→attribute regressor with
//! input dropout, classified by nearest prototype and ensembled over MC
//! dropout passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::linear::{mse_loss_grad, FlatMap, LinearMap};
use crate::rng::{self, TAG_DAP};
use crate::train::{sgd, validate_dropout, Fit, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DapFile", try_from = "DapFile")]
pub struct DapRegressor {
    map: LinearMap,
    dropout_rate: f64,
    t_passes: usize,
    base_seed: u64,
}

impl DapRegressor {
    pub fn new(map: LinearMap, dropout_rate: f64, t_passes: usize, base_seed: u64) -> Result<Self> {
        validate_dropout(dropout_rate)?;
        if t_passes == 0 {
            return Err(Error::arg("t_passes", "must be at least 1"));
        }
        if !map.is_finite() {
            return Err(Error::Invalid("regressor weights are not finite".into()));
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

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn t_passes(&self) -> usize {
        self.t_passes
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// Same model with a different number of MC passes.
    pub fn with_passes(mut self, t_passes: usize) -> Result<Self> {
        if t_passes == 0 {
            return Err(Error::arg("t_passes", "must be at least 1"));
        }
        self.t_passes = t_passes;
        Ok(self)
    }

    /// Regressed attributes under the dropout mask of `(pass, sample)`.
    pub fn regress_pass(&self, x: ArrayView1<f64>, pass: usize, sample: u64) -> Array1<f64> {
        let mut xd = x.to_owned();
        rng::inference_dropout(
            xd.as_slice_mut().expect("owned vector"),
            self.dropout_rate,
            self.base_seed,
            TAG_DAP,
            pass,
            sample,
        );
        self.map.apply(xd.view())
    }

    /// Winning class of a single dropout pass.
    pub fn nn_class_pass(&self, x: ArrayView1<f64>, attributes: ArrayView2<f64>, pass: usize, sample: u64) -> ClassId {
        nearest_prototype(self.regress_pass(x, pass, sample).view(), attributes)
    }

    /// One-hot indicator over the rows of `attributes` for a single pass.
    pub fn classify_nn_pass(
        &self,
        x: ArrayView1<f64>,
        attributes: ArrayView2<f64>,
        pass: usize,
        sample: u64,
    ) -> Array1<f64> {
        let mut out = Array1::zeros(attributes.nrows());
        out[self.nn_class_pass(x, attributes, pass, sample)] = 1.0;
        out
    }

    /// Fraction of the `T` passes won by each class.
    pub fn mc_scores(&self, x: ArrayView1<f64>, attributes: ArrayView2<f64>, sample: u64) -> Array1<f64> {
        let winners: Vec<ClassId> = (0..self.t_passes)
            .map(|t| self.nn_class_pass(x, attributes, t, sample))
            .collect();
        vote_fractions(&winners, attributes.nrows())
    }

    /// MC scores for `rows` of `features`; the row index keys each sample's
    /// dropout masks.
    pub fn score_rows(&self, features: ArrayView2<f64>, rows: &[usize], attributes: ArrayView2<f64>) -> Array2<f64> {
        let scores: Vec<Array1<f64>> = rows
            .par_iter()
            .map(|&i| self.mc_scores(features.row(i), attributes, i as u64))
            .collect();
        stack_rows(&scores, attributes.nrows())
    }
}

pub(crate) fn stack_rows(rows: &[Array1<f64>], width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), width));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(src);
    }
    out
}

/// Class whose prototype is closest in squared Euclidean distance; ties go
/// to the lowest class id.
pub fn nearest_prototype(a: ArrayView1<f64>, attributes: ArrayView2<f64>) -> ClassId {
    let mut best = (0, f64::INFINITY);
    for (c, proto) in attributes.rows().into_iter().enumerate() {
        let d: f64 = proto.iter().zip(a.iter()).map(|(p, v)| (v - p) * (v - p)).sum();
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Averages one-hot votes: entry `c` is (#passes won by `c`) / T.
pub fn vote_fractions(winners: &[ClassId], num_classes: usize) -> Array1<f64> {
    let mut counts = vec![0u32; num_classes];
    for &w in winners {
        counts[w] += 1;
    }
    let t = winners.len() as f64;
    counts.into_iter().map(|k| f64::from(k) / t).collect()
}

/// Fits the regressor by minimizing the MSE between regressed attributes
/// and each sample's class prototype. Weights start at zero.
pub fn train_dap(
    features: ArrayView2<f64>,
    labels: &[ClassId],
    attributes: ArrayView2<f64>,
    dropout_rate: f64,
    t_passes: usize,
    cfg: &TrainConfig,
) -> Result<Fit<DapRegressor>> {
    if features.nrows() == 0 {
        return Err(Error::arg("train_features", "empty training set"));
    }
    if labels.len() != features.nrows() {
        return Err(Error::arg("train_labels", "one label per training sample required"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= attributes.nrows()) {
        return Err(Error::arg("train_labels", format!("class {bad} has no prototype")));
    }
    let targets = attributes.select(Axis(0), labels);
    let fit = sgd(
        LinearMap::zeros(features.ncols(), attributes.ncols()),
        features,
        cfg,
        dropout_rate,
        |map, xb, batch| mse_loss_grad(map, xb, targets.select(Axis(0), batch).view()),
    )?;
    Ok(Fit {
        model: DapRegressor::new(fit.model, dropout_rate, t_passes, cfg.seed)?,
        epoch_losses: fit.epoch_losses,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DapFile {
    kind: String,
    #[serde(flatten)]
    map: FlatMap,
    dropout_rate: f64,
    t_passes: usize,
    base_seed: u64,
}

impl From<DapRegressor> for DapFile {
    fn from(m: DapRegressor) -> Self {
        Self {
            kind: "dap_regressor".into(),
            map: FlatMap::from(&m.map),
            dropout_rate: m.dropout_rate,
            t_passes: m.t_passes,
            base_seed: m.base_seed,
        }
    }
}

impl TryFrom<DapFile> for DapRegressor {
    type Error = String;

    fn try_from(f: DapFile) -> std::result::Result<Self, String> {
        if f.kind != "dap_regressor" {
            return Err(format!("expected a dap_regressor model, found {:?}", f.kind));
        }
        DapRegressor::new(LinearMap::try_from(f.map)?, f.dropout_rate, f.t_passes, f.base_seed)
            .map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_model(dim: usize, rate: f64, t: usize) -> DapRegressor {
        let map = LinearMap {
            weights: Array2::eye(dim),
            bias: Array1::zeros(dim),
        };
        DapRegressor::new(map, rate, t, 5).unwrap()
    }

    #[test]
    fn exact_prototype_wins() {
        let attrs = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, -2.0], [5.0, 5.0]];
        let m = identity_model(2, 0.0, 1);
        let one_hot = m.classify_nn_pass(array![3.0, -2.0].view(), attrs.view(), 0, 0);
        assert_eq!(one_hot, array![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn equidistant_prototypes_resolve_to_lowest_id() {
        // Classes 2 and 5 are both at squared distance 1 from the origin.
        let attrs = array![[9.0, 9.0], [8.0, 8.0], [1.0, 0.0], [7.0, 7.0], [6.0, 6.0], [0.0, 1.0]];
        let m = identity_model(2, 0.0, 1);
        assert_eq!(m.nn_class_pass(array![0.0, 0.0].view(), attrs.view(), 0, 0), 2);
    }

    #[test]
    fn hand_computed_nearest_neighbor() {
        let attrs = array![[1.0, 0.0], [0.0, 1.0]];
        // Distances 0.16 + 0.25 = 0.41 and 0.36 + 0.25 = 0.61.
        assert_eq!(nearest_prototype(array![0.6, 0.5].view(), attrs.view()), 0);
    }

    #[test]
    fn vote_fraction_arithmetic() {
        let p = vote_fractions(&[2, 2, 3, 2], 5);
        assert_eq!(p, array![0.0, 0.0, 0.75, 0.25, 0.0]);
    }

    #[test]
    fn zero_dropout_mc_equals_single_pass() {
        let attrs = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let m = identity_model(2, 0.0, 100);
        let x = array![0.9, 0.8];
        let p = m.mc_scores(x.view(), attrs.view(), 0);
        assert_eq!(p, m.classify_nn_pass(x.view(), attrs.view(), 0, 0));
        assert_eq!(p, array![0.0, 0.0, 1.0]);
    }

    #[test]
    fn passes_are_pure() {
        let attrs = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let m = identity_model(3, 0.5, 10);
        let x = array![0.4, 0.35, 0.3];
        for t in 0..10 {
            assert_eq!(
                m.nn_class_pass(x.view(), attrs.view(), t, 3),
                m.nn_class_pass(x.view(), attrs.view(), t, 3)
            );
        }
        assert_eq!(
            m.mc_scores(x.view(), attrs.view(), 3),
            m.mc_scores(x.view(), attrs.view(), 3)
        );
    }

    #[test]
    fn zero_epochs_keeps_zero_init() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let attrs = array![[1.0], [2.0]];
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let fit = train_dap(x.view(), &[0, 1], attrs.view(), 0.2, 10, &cfg).unwrap();
        assert!(fit.model.map().weights.iter().all(|v| *v == 0.0));
        assert!(fit.model.map().bias.iter().all(|v| *v == 0.0));
        assert!(fit.epoch_losses.is_empty());
    }

    #[test]
    fn rejects_empty_training_set_and_reports_divergence() {
        let attrs = array![[1.0], [2.0]];
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(train_dap(empty.view(), &[], attrs.view(), 0.0, 1, &TrainConfig::default()).is_err());

        let x = array![[1e3, -1e3], [2e3, 5e2]];
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 2,
            learning_rate: 10.0,
            seed: 0,
        };
        match train_dap(x.view(), &[0, 1], attrs.view(), 0.0, 1, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let m = identity_model(3, 0.2, 100);
        let text = serde_json::to_string(&m).unwrap();
        let back: DapRegressor = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
        assert!(serde_json::from_str::<DapRegressor>(&text.replace("dap_regressor", "visual")).is_err());
    }
}
