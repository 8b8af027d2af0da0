//! End-to-end training: calibration models on the pseudo-unseen split,
//! final models on the full training split, and cached score matrices for
//! both.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, GeneratedFeatures, GzslDataset};
use crate::ensemble::ClassPartition;
use crate::error::{Error, Result};
use crate::rng;
use crate::scores::ScoreSet;
use crate::semantic::{train_dap, DapRegressor};
use crate::textio;
use crate::train::TrainConfig;
use crate::visual::{fit_hallucinator, train_visual_classifier, Hallucinator, VisualClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityConfig {
    pub dropout_rate: f64,
    pub t_passes: usize,
    pub dap: TrainConfig,
    pub visual: TrainConfig,
    pub ridge: f64,
    pub hallucinator_intercept: bool,
    /// Synthetic samples per class without real training data; `None` uses
    /// the median real per-class count.
    pub synthetic_per_class: Option<usize>,
    /// Retrain on every seen class after calibration; otherwise the final
    /// models reuse the calibration training rows.
    pub retrain: bool,
    pub seed: u64,
}

impl Default for ModalityConfig {
    fn default() -> Self {
        Self {
            dropout_rate: 0.2,
            t_passes: 100,
            dap: TrainConfig::default(),
            visual: TrainConfig::default(),
            ridge: 1e-6,
            hallucinator_intercept: true,
            synthetic_per_class: None,
            retrain: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Modalities {
    pub dap: DapRegressor,
    pub hallucinator: Hallucinator,
    pub visual: VisualClassifier,
    pub num_classes: usize,
}

const STAGE_CALIBRATION: u64 = 1;
const STAGE_FINAL: u64 = 2;

/// Trains both modalities on `train_rows` over classes `[0, num_classes)`.
/// Classes in that range without training rows get synthetic features:
/// externally generated ones when `generated` covers them, hallucinated
/// otherwise.
pub fn fit_modalities(
    ds: &GzslDataset,
    train_rows: &[usize],
    num_classes: usize,
    generated: Option<&GeneratedFeatures>,
    cfg: &ModalityConfig,
    stage: u64,
) -> Result<Modalities> {
    let features = ds.features.select(Axis(0), train_rows);
    let labels: Vec<ClassId> = train_rows.iter().map(|&i| ds.labels[i]).collect();
    let attributes = ds.attributes.slice(s![..num_classes, ..]);

    let dap_cfg = TrainConfig {
        seed: rng::derive_seed(&[cfg.seed, rng::TAG_DAP, stage, cfg.dap.seed]),
        ..cfg.dap.clone()
    };
    let dap = train_dap(
        features.view(),
        &labels,
        attributes,
        cfg.dropout_rate,
        cfg.t_passes,
        &dap_cfg,
    )?
    .model;

    let hallucinator = fit_hallucinator(
        features.view(),
        &labels,
        attributes,
        cfg.ridge,
        cfg.hallucinator_intercept,
    )?;

    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &y in &labels {
        *counts.entry(y).or_default() += 1;
    }
    let per_class = cfg.synthetic_per_class.unwrap_or_else(|| {
        let mut c: Vec<usize> = counts.values().copied().collect();
        c.sort_unstable();
        c[c.len() / 2]
    });

    let mut syn_rows: Vec<Array2<f64>> = Vec::new();
    let mut syn_labels = Vec::new();
    for class in (0..num_classes).filter(|c| !counts.contains_key(c)) {
        let supplied: Vec<usize> = generated
            .map(|g| (0..g.labels.len()).filter(|&i| g.labels[i] == class).collect())
            .unwrap_or_default();
        let block = if supplied.is_empty() {
            hallucinator.hallucinate(
                attributes.row(class),
                per_class,
                rng::derive_seed(&[cfg.seed, 0x4A11, stage, class as u64]),
            )
        } else {
            generated.expect("supplied rows").features.select(Axis(0), &supplied)
        };
        syn_labels.extend(std::iter::repeat_n(class, block.nrows()));
        syn_rows.push(block);
    }
    let views: Vec<_> = syn_rows.iter().map(|m| m.view()).collect();
    let synthetic = if views.is_empty() {
        Array2::zeros((0, ds.feature_dim()))
    } else {
        ndarray::concatenate(Axis(0), &views)
            .map_err(|_| Error::Invalid("generated features have the wrong dimension".into()))?
    };

    let visual_cfg = TrainConfig {
        seed: rng::derive_seed(&[cfg.seed, rng::TAG_VISUAL, stage, cfg.visual.seed]),
        ..cfg.visual.clone()
    };
    let visual = train_visual_classifier(
        features.view(),
        &labels,
        synthetic.view(),
        &syn_labels,
        num_classes,
        cfg.dropout_rate,
        cfg.t_passes,
        &visual_cfg,
    )?
    .model;

    Ok(Modalities {
        dap,
        hallucinator,
        visual,
        num_classes,
    })
}

impl Modalities {
    /// MC scores of both modalities on `rows` of the dataset.
    pub fn score(&self, ds: &GzslDataset, rows: &[usize], partition: ClassPartition) -> Result<ScoreSet> {
        let attributes = ds.attributes.slice(s![..self.num_classes, ..]);
        let dap = self.dap.score_rows(ds.features.view(), rows, attributes);
        let cyg = self.visual.score_rows(ds.features.view(), rows);
        let labels = rows.iter().map(|&i| ds.labels[i]).collect();
        ScoreSet::new(dap, cyg, labels, partition)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        textio::write_json(&dir.join("dap.json"), &self.dap)?;
        textio::write_json(&dir.join("hallucinator.json"), &self.hallucinator)?;
        textio::write_json(&dir.join("visual.json"), &self.visual)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let dap: DapRegressor = textio::read_json(&dir.join("dap.json"))?;
        let hallucinator: Hallucinator = textio::read_json(&dir.join("hallucinator.json"))?;
        let visual: VisualClassifier = textio::read_json(&dir.join("visual.json"))?;
        let num_classes = visual.num_classes();
        Ok(Self {
            dap,
            hallucinator,
            visual,
            num_classes,
        })
    }
}

/// Splits the training rows for calibration: sub-train classes are divided
/// 80/20 per class into fitting rows and held-out rows; the held-out rows
/// plus every training row of the pseudo-unseen classes form the
/// validation set. Returns `(fit_rows, validation_rows)`.
pub fn calibration_rows(ds: &GzslDataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for i in ds.subtrain_indices() {
        by_class.entry(ds.labels[i]).or_default().push(i);
    }
    let mut fit = Vec::new();
    let mut val = ds.validation_indices();
    for (class, mut rows) in by_class {
        rows.shuffle(&mut rng::stream(&[seed, 0x401D, class as u64]));
        let keep = if rows.len() < 2 {
            rows.len()
        } else {
            ((rows.len() as f64 * 0.8).round() as usize).clamp(1, rows.len() - 1)
        };
        fit.extend_from_slice(&rows[..keep]);
        val.extend_from_slice(&rows[keep..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Models and cached scores produced by a training run.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub calibration_models: Modalities,
    pub final_models: Modalities,
    /// Scores of the validation rows over the seen classes, partitioned into
    /// pseudo-seen and pseudo-unseen.
    pub validation: ScoreSet,
    /// Scores of test_seen followed by test_unseen over all classes.
    pub test: ScoreSet,
}

pub fn train_run(ds: &GzslDataset, generated: Option<&GeneratedFeatures>, cfg: &ModalityConfig) -> Result<TrainedRun> {
    let (fit_rows, val_rows) = calibration_rows(ds, cfg.seed);
    if val_rows.is_empty() {
        return Err(Error::Invalid("calibration split leaves no validation samples".into()));
    }
    let s = ds.num_seen;
    let calibration_models = fit_modalities(ds, &fit_rows, s, None, cfg, STAGE_CALIBRATION)?;
    let pseudo = ClassPartition::new(
        &ds.splits.calib_subtrain_classes,
        &ds.splits.calib_pseudo_unseen_classes,
    )?;
    let validation = calibration_models.score(ds, &val_rows, pseudo)?;

    let final_rows = if cfg.retrain { ds.splits.train.clone() } else { fit_rows };
    let final_models = fit_modalities(ds, &final_rows, ds.num_classes(), generated, cfg, STAGE_FINAL)?;
    let test_rows: Vec<usize> = ds
        .splits
        .test_seen
        .iter()
        .chain(&ds.splits.test_unseen)
        .copied()
        .collect();
    let test = final_models.score(ds, &test_rows, ClassPartition::contiguous(s, ds.num_classes()))?;

    Ok(TrainedRun {
        calibration_models,
        final_models,
        validation,
        test,
    })
}

pub const VALIDATION_SCORES: &str = "scores/validation.json";
pub const TEST_SCORES: &str = "scores/test.json";

impl TrainedRun {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.final_models.save(&dir.join("models"))?;
        self.calibration_models.save(&dir.join("models/calibration"))?;
        self.validation.save(&dir.join(VALIDATION_SCORES))?;
        self.test.save(&dir.join(TEST_SCORES))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthSpec};

    fn dataset() -> GzslDataset {
        generate_synthetic(&SynthSpec {
            num_seen: 6,
            num_unseen: 2,
            feature_dim: 5,
            attribute_dim: 3,
            samples_per_class: 10,
            sigma_vis: 0.05,
            sigma_attr: 1.0,
            seed: 4,
        })
        .unwrap()
        .0
    }

    #[test]
    fn calibration_rows_partition_training_rows() {
        let ds = dataset();
        let (fit, val) = calibration_rows(&ds, 3);
        let mut all: Vec<_> = fit.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ds.splits.train);
        assert!(fit
            .iter()
            .all(|&i| ds.splits.calib_subtrain_classes.contains(&ds.labels[i])));
        for &c in &ds.splits.calib_subtrain_classes {
            assert!(val.iter().any(|&i| ds.labels[i] == c), "class {c} has no held-out rows");
        }
    }

    #[test]
    fn supplied_features_replace_hallucination() {
        let ds = dataset();
        let cfg = ModalityConfig {
            t_passes: 2,
            dap: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            visual: TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            ..ModalityConfig::default()
        };
        let generated = GeneratedFeatures {
            features: Array2::from_elem((3, 5), 0.5),
            labels: vec![6, 6, 7],
        };
        let m = fit_modalities(&ds, &ds.splits.train, 8, Some(&generated), &cfg, STAGE_FINAL).unwrap();
        assert_eq!(m.visual.num_classes(), 8);
        assert!(fit_modalities(&ds, &ds.splits.train, 8, None, &cfg, STAGE_FINAL).is_ok());
    }

    #[test]
    fn models_round_trip_through_json() {
        let ds = dataset();
        let cfg = ModalityConfig {
            t_passes: 3,
            dap: TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
            visual: TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
            ..ModalityConfig::default()
        };
        let m = fit_modalities(&ds, &ds.splits.train, 8, None, &cfg, STAGE_FINAL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(Modalities::load(dir.path()).unwrap(), m);
    }
}
