use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{default_pseudo_unseen_count, make_calibration_split, GzslDataset, SplitManifest};
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of a synthetic dataset whose visual features are an exact
/// linear image of the class prototypes plus isotropic Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_seen: usize,
    pub num_unseen: usize,
    pub feature_dim: usize,
    pub attribute_dim: usize,
    pub samples_per_class: usize,
    /// Standard deviation of the visual noise.
    pub sigma_vis: f64,
    /// Standard deviation of the prototype entries.
    pub sigma_attr: f64,
    /// The command-line front end replaces this with the run's global seed.
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_seen: 20,
            num_unseen: 5,
            feature_dim: 16,
            attribute_dim: 8,
            samples_per_class: 50,
            sigma_vis: 0.01,
            sigma_attr: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_seen < 2 {
            return Err(Error::arg("num_seen", "need at least 2 seen classes"));
        }
        if self.num_unseen < 1 {
            return Err(Error::arg("num_unseen", "need at least 1 unseen class"));
        }
        if self.feature_dim < 1 || self.attribute_dim < 1 {
            return Err(Error::arg("feature_dim", "dimensions must be at least 1"));
        }
        if self.samples_per_class < 1 {
            return Err(Error::arg("samples_per_class", "must be at least 1"));
        }
        if !(self.sigma_vis >= 0.0 && self.sigma_vis.is_finite()) {
            return Err(Error::arg("sigma_vis", "must be a finite nonnegative number"));
        }
        // Distinct prototypes need a nonzero spread.
        if !(self.sigma_attr > 0.0 && self.sigma_attr.is_finite()) {
            return Err(Error::arg("sigma_attr", "must be a finite positive number"));
        }
        Ok(())
    }
}

/// Seen-class split of samples into train and test: 80/20 per class,
/// keeping at least one training sample and, when possible, one test sample.
fn train_count(n: usize) -> usize {
    ((n as f64 * 0.8).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Builds a dataset and returns it together with the L×K ground-truth map
/// from prototypes to noiseless visual features.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(GzslDataset, Array2<f64>)> {
    spec.validate()?;
    let c = spec.num_seen + spec.num_unseen;
    let (k, l) = (spec.feature_dim, spec.attribute_dim);
    let mut rng = rng::stream(&[spec.seed, 0x5F17]);

    let attributes = loop {
        let a = Array2::from_shape_simple_fn((c, l), || spec.sigma_attr * rng.sample::<f64, _>(StandardNormal));
        if min_pairwise_distance(&a) > 0.0 {
            break a;
        }
    };
    let scale = 1.0 / (l as f64).sqrt();
    let ground_truth = Array2::from_shape_simple_fn((l, k), || scale * rng.sample::<f64, _>(StandardNormal));

    let n = c * spec.samples_per_class;
    let mut features = Array2::zeros((n, k));
    let mut labels = Vec::with_capacity(n);
    for class in 0..c {
        let mean: Array1<f64> = attributes.row(class).dot(&ground_truth);
        for j in 0..spec.samples_per_class {
            let i = class * spec.samples_per_class + j;
            let mut row = features.row_mut(i);
            row.assign(&mean);
            if spec.sigma_vis > 0.0 {
                for v in row.iter_mut() {
                    *v += spec.sigma_vis * rng.sample::<f64, _>(StandardNormal);
                }
            }
            labels.push(class);
        }
    }

    let mut train = Vec::new();
    let mut test_seen = Vec::new();
    for class in 0..spec.num_seen {
        let mut idx: Vec<usize> = (0..spec.samples_per_class)
            .map(|j| class * spec.samples_per_class + j)
            .collect();
        idx.shuffle(&mut rng);
        let cut = train_count(idx.len());
        train.extend_from_slice(&idx[..cut]);
        test_seen.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test_seen.sort_unstable();
    let test_unseen: Vec<usize> = (spec.num_seen * spec.samples_per_class..n).collect();

    let mut dataset = GzslDataset {
        name: format!("synthetic-s{}-u{}-seed{}", spec.num_seen, spec.num_unseen, spec.seed),
        class_names: (0..c).map(|i| format!("class_{i:03}")).collect(),
        features,
        labels,
        attributes,
        num_seen: spec.num_seen,
        splits: SplitManifest {
            train,
            test_seen,
            test_unseen,
            calib_subtrain_classes: Vec::new(),
            calib_pseudo_unseen_classes: Vec::new(),
        },
    };
    dataset.splits = make_calibration_split(
        &dataset,
        default_pseudo_unseen_count(spec.num_seen),
        rng::derive_seed(&[spec.seed, 0xCA1B]),
    )?;
    dataset.validate()?;
    Ok((dataset, ground_truth))
}

fn min_pairwise_distance(a: &Array2<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.nrows() {
        for j in i + 1..a.nrows() {
            let d = (&a.row(i) - &a.row(j)).mapv(|v| v * v).sum();
            best = best.min(d);
        }
    }
    best.sqrt()
}
