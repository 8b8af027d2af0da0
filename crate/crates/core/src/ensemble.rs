//! Agreement-voting fusion of the two modalities and seen/unseen class
//! weighting.

use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    alpha: f64,
}

impl EnsembleParams {
    pub fn new(alpha: f64) -> Result<Self> {
        check_unit("alpha", alpha)?;
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::arg(name, format!("must be in [0, 1], got {v}")));
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<ClassId> {
    let mut best: Option<(ClassId, f64)> = None;
    for (i, &v) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Fuses the two modality distributions. When both rank the same class
/// first, that class is pinned to 1; every other entry is the α-weighted
/// average `α·p_cyg + (1-α)·p_dap`.
pub fn ensemble_scores(p_dap: &[f64], p_cyg: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if p_dap.len() != p_cyg.len() {
        return Err(Error::arg(
            "p_cyg",
            format!("length {} differs from p_dap length {}", p_cyg.len(), p_dap.len()),
        ));
    }
    check_unit("alpha", alpha)?;
    let mut out = vec![0.0; p_dap.len()];
    fuse_into(p_dap, p_cyg, alpha, &mut out);
    Ok(out)
}

/// Allocation-free form of [`ensemble_scores`] for equal-length inputs.
pub fn fuse_into(p_dap: &[f64], p_cyg: &[f64], alpha: f64, out: &mut [f64]) {
    for ((o, d), c) in out.iter_mut().zip(p_dap).zip(p_cyg) {
        *o = alpha * c + (1.0 - alpha) * d;
    }
    if let (Some(a), Some(b)) = (argmax(p_dap), argmax(p_cyg)) {
        if a == b {
            out[a] = 1.0;
        }
    }
}

/// Seen/unseen membership of every class in `[0, C)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    unseen: Vec<bool>,
}

impl ClassPartition {
    /// `seen` and `unseen` must partition `[0, C)` where C is their total size.
    pub fn new(seen: &[ClassId], unseen: &[ClassId]) -> Result<Self> {
        let c = seen.len() + unseen.len();
        let mut slot = vec![None; c];
        for (&class, flag) in seen.iter().map(|s| (s, false)).chain(unseen.iter().map(|u| (u, true))) {
            if class >= c {
                return Err(Error::arg("class sets", format!("class {class} outside [0, {c})")));
            }
            if slot[class].replace(flag).is_some() {
                return Err(Error::arg("class sets", format!("class {class} listed twice")));
            }
        }
        Ok(Self {
            unseen: slot.into_iter().map(|f| f.expect("every slot filled")).collect(),
        })
    }

    /// Seen classes `[0, num_seen)`, unseen `[num_seen, num_classes)`.
    pub fn contiguous(num_seen: usize, num_classes: usize) -> Self {
        Self {
            unseen: (0..num_classes).map(|c| c >= num_seen).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.unseen.len()
    }

    pub fn is_unseen(&self, class: ClassId) -> bool {
        self.unseen[class]
    }

    pub fn seen(&self) -> Vec<ClassId> {
        (0..self.num_classes()).filter(|&c| !self.unseen[c]).collect()
    }

    pub fn unseen(&self) -> Vec<ClassId> {
        (0..self.num_classes()).filter(|&c| self.unseen[c]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeighting {
    beta: f64,
    partition: ClassPartition,
}

impl ClassWeighting {
    pub fn new(beta: f64, partition: ClassPartition) -> Result<Self> {
        check_unit("beta", beta)?;
        Ok(Self { beta, partition })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn partition(&self) -> &ClassPartition {
        &self.partition
    }

    /// Class predicted from unweighted `scores` under this weighting.
    pub fn predict(&self, scores: &[f64]) -> Result<ClassId> {
        if scores.len() != self.partition.num_classes() {
            return Err(Error::arg("scores", "length differs from the number of classes"));
        }
        Ok(PartitionBest::new(scores, &self.partition).pick(self.beta))
    }
}

/// Scales unseen-class scores by β and seen-class scores by 1 - β.
pub fn apply_class_weighting(scores: &[f64], w: &ClassWeighting) -> Result<Vec<f64>> {
    if scores.len() != w.partition.num_classes() {
        return Err(Error::arg(
            "scores",
            format!(
                "length {} differs from {} classes",
                scores.len(),
                w.partition.num_classes()
            ),
        ));
    }
    Ok(scores
        .iter()
        .enumerate()
        .map(|(y, s)| {
            if w.partition.is_unseen(y) {
                s * w.beta
            } else {
                s * (1.0 - w.beta)
            }
        })
        .collect())
}

/// Argmax with ties toward the lowest class id.
pub fn predict(weighted_scores: &[f64]) -> Result<ClassId> {
    argmax(weighted_scores).ok_or_else(|| Error::arg("weighted_scores", "empty score vector"))
}

/// Best class and score within each side of a partition.
///
/// Weighting by β scales each side uniformly, so the weighted argmax is
/// always one of these two classes. At β = 1 (β = 0) the prediction is the
/// best unseen (seen) class even when every surviving score is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionBest {
    seen: Option<(ClassId, f64)>,
    unseen: Option<(ClassId, f64)>,
}

impl PartitionBest {
    pub fn new(scores: &[f64], partition: &ClassPartition) -> Self {
        let mut seen: Option<(ClassId, f64)> = None;
        let mut unseen: Option<(ClassId, f64)> = None;
        for (y, &s) in scores.iter().enumerate() {
            let slot = if partition.is_unseen(y) { &mut unseen } else { &mut seen };
            match slot {
                Some((_, best)) if s <= *best => {}
                _ => *slot = Some((y, s)),
            }
        }
        Self { seen, unseen }
    }

    pub fn pick(&self, beta: f64) -> ClassId {
        match (self.seen, self.unseen) {
            (Some((s, _)), None) => s,
            (None, Some((u, _))) => u,
            (None, None) => 0,
            (Some((s, ss)), Some((u, us))) => {
                if beta >= 1.0 {
                    u
                } else if beta <= 0.0 {
                    s
                } else {
                    let ws = ss * (1.0 - beta);
                    let wu = us * beta;
                    if ws > wu {
                        s
                    } else if wu > ws {
                        u
                    } else {
                        s.min(u)
                    }
                }
            }
        }
    }
}
