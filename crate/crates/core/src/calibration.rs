//! Joint grid search for the fusion weight α and the seen/unseen weight β,
//! maximizing the harmonic mean of seen and unseen accuracy on a
//! pseudo-unseen validation split.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::metrics::{accuracies_at, check_unit_grid, read_headed_csv};
use crate::scores::ScoreSet;
use crate::textio;

/// Harmonic mean of seen and unseen accuracy; 0 when both are 0.
pub fn hmean(acc_seen: f64, acc_unseen: f64) -> f64 {
    let total = acc_seen + acc_unseen;
    if total == 0.0 {
        0.0
    } else {
        2.0 * acc_seen * acc_unseen / total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    alpha_values: Vec<f64>,
    beta_values: Vec<f64>,
}

impl GridSpec {
    pub fn new(alpha_values: Vec<f64>, beta_values: Vec<f64>) -> Result<Self> {
        check_unit_grid("alpha_values", &alpha_values)?;
        check_unit_grid("beta_values", &beta_values)?;
        Ok(Self {
            alpha_values,
            beta_values,
        })
    }

    /// Evenly spaced grid; each step must divide 1 into a whole number of parts.
    pub fn uniform(alpha_step: f64, beta_step: f64) -> Result<Self> {
        Self::new(
            unit_steps("alpha_step", alpha_step)?,
            unit_steps("beta_step", beta_step)?,
        )
    }

    pub fn alpha_values(&self) -> &[f64] {
        &self.alpha_values
    }

    pub fn beta_values(&self) -> &[f64] {
        &self.beta_values
    }
}

/// `[0, step, 2·step, …, 1]`, computed as `i / n` so grid values are the
/// nearest doubles to the intended decimals.
pub fn unit_steps(name: &'static str, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::arg(name, format!("must be in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::arg(name, format!("1 is not a whole multiple of {step}")));
    }
    let n = n as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub acc_seen: f64,
    pub acc_unseen: f64,
    pub hmean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub alpha_star: f64,
    pub beta_star: f64,
    /// The grid point at (α*, β*).
    pub best: GridPoint,
    /// |α| × |β| harmonic means.
    pub hmean_grid: Array2<f64>,
    /// Every grid point, α-major.
    pub points: Vec<GridPoint>,
    pub pseudo_seen: Vec<ClassId>,
    pub pseudo_unseen: Vec<ClassId>,
}

/// Evaluates every (α, β) on the grid against validation scores whose class
/// partition is (pseudo-seen, pseudo-unseen) and returns the H-maximizing
/// point. Ties go to the smaller β, then the smaller α.
pub fn calibrate_grid(val: &ScoreSet, grid: &GridSpec) -> Result<CalibrationResult> {
    if val.is_empty() {
        return Err(Error::arg("validation scores", "empty validation set"));
    }
    let pseudo_seen = val.partition.seen();
    let pseudo_unseen = val.partition.unseen();
    if pseudo_seen.is_empty() {
        return Err(Error::arg("pseudo_seen_set", "empty class set"));
    }
    if pseudo_unseen.is_empty() {
        return Err(Error::arg("pseudo_unseen_set", "empty class set"));
    }

    let rows: Vec<Vec<GridPoint>> = grid
        .alpha_values
        .par_iter()
        .map(|&alpha| {
            let bests = val.fused_bests(alpha);
            grid.beta_values
                .iter()
                .map(|&beta| {
                    let (acc_seen, acc_unseen) = accuracies_at(&bests, val, beta)?;
                    Ok(GridPoint {
                        alpha,
                        beta,
                        acc_seen,
                        acc_unseen,
                        hmean: hmean(acc_seen, acc_unseen),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let (na, nb) = (grid.alpha_values.len(), grid.beta_values.len());
    let hmean_grid = Array2::from_shape_fn((na, nb), |(i, j)| rows[i][j].hmean);
    let mut best = (0, 0);
    for j in 0..nb {
        for i in 0..na {
            if hmean_grid[[i, j]] > hmean_grid[[best.0, best.1]] {
                best = (i, j);
            }
        }
    }
    let best = rows[best.0][best.1];
    Ok(CalibrationResult {
        alpha_star: best.alpha,
        beta_star: best.beta,
        best,
        hmean_grid,
        points: rows.into_iter().flatten().collect(),
        pseudo_seen,
        pseudo_unseen,
    })
}

/// Contents of `calibration.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSummary {
    pub alpha_star: f64,
    pub beta_star: f64,
    pub val_hmean: f64,
    pub val_acc_seen: f64,
    pub val_acc_unseen: f64,
    pub pseudo_seen_classes: Vec<ClassId>,
    pub pseudo_unseen_classes: Vec<ClassId>,
    pub num_validation_samples: usize,
}

impl CalibrationSummary {
    pub fn load(path: &Path) -> Result<Self> {
        textio::read_json(path)
    }
}

const GRID_HEADER: [&str; 5] = ["alpha", "beta", "acc_seen", "acc_unseen", "hmean"];

impl CalibrationResult {
    pub fn summary(&self, num_validation_samples: usize) -> CalibrationSummary {
        CalibrationSummary {
            alpha_star: self.alpha_star,
            beta_star: self.beta_star,
            val_hmean: self.best.hmean,
            val_acc_seen: self.best.acc_seen,
            val_acc_unseen: self.best.acc_unseen,
            pseudo_seen_classes: self.pseudo_seen.clone(),
            pseudo_unseen_classes: self.pseudo_unseen.clone(),
            num_validation_samples,
        }
    }

    /// Writes `calibration.json` and `hmean_grid.csv` into `dir`.
    pub fn save(&self, dir: &Path, num_validation_samples: usize) -> Result<()> {
        textio::write_json(&dir.join("calibration.json"), &self.summary(num_validation_samples))?;
        let mut csv = GRID_HEADER.join(",");
        csv.push('\n');
        for p in &self.points {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p.alpha, p.beta, p.acc_seen, p.acc_unseen, p.hmean
            ));
        }
        textio::write_string(&dir.join("hmean_grid.csv"), &csv)
    }
}

pub fn read_hmean_grid_csv(path: &Path) -> Result<Vec<GridPoint>> {
    Ok(read_headed_csv(path, &GRID_HEADER)?
        .into_iter()
        .map(|r| GridPoint {
            alpha: r[0],
            beta: r[1],
            acc_seen: r[2],
            acc_unseen: r[3],
            hmean: r[4],
        })
        .collect())
}
