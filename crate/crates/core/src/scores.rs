//! Cached per-sample modality scores.
//!
//! MC inference runs once per sample; calibration, evaluation and sweeps
//! only post-process these matrices.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::ensemble::{fuse_into, ClassPartition, PartitionBest};
use crate::error::{Error, Result};
use crate::textio;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    /// M×C attribute-regressor vote fractions.
    pub dap: Array2<f64>,
    /// M×C visual-classifier MC softmax averages.
    pub cyg: Array2<f64>,
    pub labels: Vec<ClassId>,
    pub partition: ClassPartition,
}

impl ScoreSet {
    pub fn new(dap: Array2<f64>, cyg: Array2<f64>, labels: Vec<ClassId>, partition: ClassPartition) -> Result<Self> {
        let set = Self {
            dap,
            cyg,
            labels,
            partition,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.partition.num_classes()
    }

    fn validate(&self) -> Result<()> {
        let shape = (self.labels.len(), self.partition.num_classes());
        if self.dap.dim() != shape || self.cyg.dim() != shape {
            return Err(Error::Invalid(format!(
                "score matrices must be {}x{}, got {:?} and {:?}",
                shape.0,
                shape.1,
                self.dap.dim(),
                self.cyg.dim()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= shape.1) {
            return Err(Error::Invalid(format!("label {bad} outside [0, {})", shape.1)));
        }
        if self
            .dap
            .iter()
            .chain(self.cyg.iter())
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Invalid("scores must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Per-sample best seen/unseen classes of the fused scores at `alpha`.
    pub fn fused_bests(&self, alpha: f64) -> Vec<PartitionBest> {
        let mut buf = vec![0.0; self.num_classes()];
        self.dap
            .rows()
            .into_iter()
            .zip(self.cyg.rows())
            .map(|(d, c)| {
                fuse_into(
                    d.as_slice().expect("standard layout"),
                    c.as_slice().expect("standard layout"),
                    alpha,
                    &mut buf,
                );
                PartitionBest::new(&buf, &self.partition)
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_json(path, &ScoreFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ScoreFile = textio::read_json(path)?;
        file.into_set().map_err(|e| match e {
            Error::Invalid(msg) | Error::Argument { message: msg, .. } => Error::data(path, None, msg),
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreFile {
    seen_classes: Vec<ClassId>,
    unseen_classes: Vec<ClassId>,
    labels: Vec<ClassId>,
    dap: Vec<Vec<f64>>,
    cyg: Vec<Vec<f64>>,
}

impl From<&ScoreSet> for ScoreFile {
    fn from(s: &ScoreSet) -> Self {
        let rows = |m: &Array2<f64>| m.rows().into_iter().map(|r| r.to_vec()).collect();
        Self {
            seen_classes: s.partition.seen(),
            unseen_classes: s.partition.unseen(),
            labels: s.labels.clone(),
            dap: rows(&s.dap),
            cyg: rows(&s.cyg),
        }
    }
}

impl ScoreFile {
    fn into_set(self) -> Result<ScoreSet> {
        let partition = ClassPartition::new(&self.seen_classes, &self.unseen_classes)?;
        let c = partition.num_classes();
        let matrix = |rows: Vec<Vec<f64>>| -> Result<Array2<f64>> {
            let m = rows.len();
            if rows.iter().any(|r| r.len() != c) {
                return Err(Error::Invalid(format!("every score row needs {c} entries")));
            }
            Ok(Array2::from_shape_vec((m, c), rows.into_iter().flatten().collect()).expect("checked shape"))
        };
        ScoreSet::new(matrix(self.dap)?, matrix(self.cyg)?, self.labels, partition)
    }
}
