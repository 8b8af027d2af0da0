//! GZSL data model.
//!
//! Classes use a contiguous 0-based layout: seen classes occupy `[0, S)` and
//! unseen classes `[S, S + U)`. Loaders normalize external ids into this
//! layout, so downstream code can treat the seen/unseen sets as ranges.

mod io;
mod synth;

use std::collections::BTreeSet;
use std::ops::Range;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use io::{load_dataset, save_dataset, GeneratedFeatures, Manifest, ManifestClass};
pub use synth::{generate_synthetic, SynthSpec};

pub type ClassId = usize;

/// Sample partition plus the class split used for calibrating the ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_unseen: Vec<usize>,
    /// Seen classes kept for sub-training during calibration.
    pub calib_subtrain_classes: Vec<ClassId>,
    /// Seen classes held out and treated as unseen during calibration.
    pub calib_pseudo_unseen_classes: Vec<ClassId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GzslDataset {
    pub name: String,
    pub class_names: Vec<String>,
    /// N×K visual features.
    pub features: Array2<f64>,
    pub labels: Vec<ClassId>,
    /// C×L semantic prototypes, one row per class.
    pub attributes: Array2<f64>,
    pub num_seen: usize,
    pub splits: SplitManifest,
}

impl GzslDataset {
    pub fn num_classes(&self) -> usize {
        self.attributes.nrows()
    }

    pub fn num_unseen(&self) -> usize {
        self.num_classes() - self.num_seen
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn attribute_dim(&self) -> usize {
        self.attributes.ncols()
    }

    pub fn seen_classes(&self) -> Range<ClassId> {
        0..self.num_seen
    }

    pub fn unseen_classes(&self) -> Range<ClassId> {
        self.num_seen..self.num_classes()
    }

    pub fn is_seen(&self, class: ClassId) -> bool {
        class < self.num_seen
    }

    /// Training samples of the pseudo-unseen classes.
    pub fn validation_indices(&self) -> Vec<usize> {
        let held_out: BTreeSet<ClassId> = self.splits.calib_pseudo_unseen_classes.iter().copied().collect();
        self.splits
            .train
            .iter()
            .copied()
            .filter(|&i| held_out.contains(&self.labels[i]))
            .collect()
    }

    /// Training samples of the calibration sub-train classes.
    pub fn subtrain_indices(&self) -> Vec<usize> {
        let kept: BTreeSet<ClassId> = self.splits.calib_subtrain_classes.iter().copied().collect();
        self.splits
            .train
            .iter()
            .copied()
            .filter(|&i| kept.contains(&self.labels[i]))
            .collect()
    }

    /// Checks every structural invariant of the dataset and its splits.
    pub fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        let c = self.num_classes();
        if self.feature_dim() == 0 || self.attribute_dim() == 0 {
            return Err(Error::Invalid(
                "feature and attribute dimensions must be at least 1".into(),
            ));
        }
        if self.labels.len() != n {
            return Err(Error::Invalid(format!(
                "row count mismatch: {} labels for {} feature rows",
                self.labels.len(),
                n
            )));
        }
        if self.class_names.len() != c {
            return Err(Error::Invalid(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                c
            )));
        }
        if self.num_seen < 1 || self.num_seen >= c {
            return Err(Error::Invalid(format!(
                "need at least one seen and one unseen class (seen {}, total {})",
                self.num_seen, c
            )));
        }
        if self
            .features
            .iter()
            .chain(self.attributes.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Invalid("non-finite value in features or attributes".into()));
        }
        if let Some((i, &l)) = self.labels.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(Error::Invalid(format!(
                "label out of range: sample {i} has class {l} (C = {c})"
            )));
        }

        let s = &self.splits;
        let mut owner = vec![None::<&str>; n];
        for (name, list) in [
            ("train", &s.train),
            ("test_seen", &s.test_seen),
            ("test_unseen", &s.test_unseen),
        ] {
            for &i in list.iter() {
                if i >= n {
                    return Err(Error::Invalid(format!("{name} index {i} out of range (N = {n})")));
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::Invalid(format!(
                        "overlapping splits: sample {i} in both {prev} and {name}"
                    )));
                }
                owner[i] = Some(name);
            }
        }
        if let Some(&i) = s.train.iter().find(|&&i| !self.is_seen(self.labels[i])) {
            return Err(Error::Invalid(format!(
                "train sample {i} belongs to unseen class {}",
                self.labels[i]
            )));
        }
        if let Some(&i) = s.test_seen.iter().find(|&&i| !self.is_seen(self.labels[i])) {
            return Err(Error::Invalid(format!(
                "test_seen sample {i} belongs to unseen class {}",
                self.labels[i]
            )));
        }
        if let Some(&i) = s.test_unseen.iter().find(|&&i| self.is_seen(self.labels[i])) {
            return Err(Error::Invalid(format!(
                "test_unseen sample {i} belongs to seen class {}",
                self.labels[i]
            )));
        }
        validate_calibration_classes(s, self.num_seen)
    }
}

fn validate_calibration_classes(s: &SplitManifest, num_seen: usize) -> Result<()> {
    if s.calib_subtrain_classes.is_empty() || s.calib_pseudo_unseen_classes.is_empty() {
        return Err(Error::Invalid("calibration class sets must both be nonempty".into()));
    }
    let mut seen = vec![false; num_seen];
    for &c in s.calib_subtrain_classes.iter().chain(&s.calib_pseudo_unseen_classes) {
        if c >= num_seen {
            return Err(Error::Invalid(format!("calibration class {c} is not a seen class")));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::Invalid(format!("calibration class {c} listed twice")));
        }
    }
    if let Some(c) = seen.iter().position(|&x| !x) {
        return Err(Error::Invalid(format!(
            "seen class {c} missing from the calibration split"
        )));
    }
    Ok(())
}

/// Picks `pseudo_unseen_count` seen classes uniformly at random to act as
/// unseen classes during calibration; the rest form the sub-train set.
pub fn make_calibration_split(dataset: &GzslDataset, pseudo_unseen_count: usize, seed: u64) -> Result<SplitManifest> {
    let s = dataset.num_seen;
    if pseudo_unseen_count < 1 || pseudo_unseen_count >= s {
        return Err(Error::arg(
            "pseudo_unseen_count",
            format!("must be in [1, {s}) for {s} seen classes, got {pseudo_unseen_count}"),
        ));
    }
    let mut classes: Vec<ClassId> = dataset.seen_classes().collect();
    classes.shuffle(&mut rng::stream(&[seed, 0xCA11]));
    let mut held_out = classes[..pseudo_unseen_count].to_vec();
    let mut kept = classes[pseudo_unseen_count..].to_vec();
    held_out.sort_unstable();
    kept.sort_unstable();
    Ok(SplitManifest {
        calib_subtrain_classes: kept,
        calib_pseudo_unseen_classes: held_out,
        ..dataset.splits.clone()
    })
}

/// Default number of pseudo-unseen classes: a third of the seen classes,
/// rounded up.
pub fn default_pseudo_unseen_count(num_seen: usize) -> usize {
    num_seen.div_ceil(3)
}
