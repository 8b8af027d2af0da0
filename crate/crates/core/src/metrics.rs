//! Evaluation: per-class top-1 accuracy, GZSL reports, β-sweep curves and
//! the area under the seen/unseen curve (AUSUC). Accuracies are fractions
//! in [0, 1] throughout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::hmean;
use crate::dataset::ClassId;
use crate::ensemble::PartitionBest;
use crate::error::{Error, Result};
use crate::scores::ScoreSet;
use crate::textio;

/// Macro-averaged top-1 accuracy over `class_set`: each class's accuracy is
/// computed on its own samples, then averaged with equal class weight.
/// Samples labeled outside `class_set` are ignored.
pub fn per_class_top1(predictions: &[ClassId], labels: &[ClassId], class_set: &[ClassId]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::arg("predictions", "one prediction per label required"));
    }
    if class_set.is_empty() {
        return Err(Error::arg("class_set", "empty class set"));
    }
    let width = class_set.iter().max().map_or(0, |m| m + 1);
    let mut total = vec![0usize; width];
    let mut correct = vec![0usize; width];
    for (&p, &y) in predictions.iter().zip(labels) {
        if y < width {
            total[y] += 1;
            correct[y] += usize::from(p == y);
        }
    }
    let mut sum = 0.0;
    for &c in class_set {
        if total[c] == 0 {
            return Err(Error::arg("class_set", format!("class {c} has no labeled samples")));
        }
        sum += correct[c] as f64 / total[c] as f64;
    }
    Ok(sum / class_set.len() as f64)
}

/// Seen-side and unseen-side per-class accuracy of the weighted predictions.
pub(crate) fn accuracies_at(bests: &[PartitionBest], scores: &ScoreSet, beta: f64) -> Result<(f64, f64)> {
    let predictions: Vec<ClassId> = bests.iter().map(|b| b.pick(beta)).collect();
    let seen = per_class_top1(&predictions, &scores.labels, &scores.partition.seen())?;
    let unseen = per_class_top1(&predictions, &scores.labels, &scores.partition.unseen())?;
    Ok((seen, unseen))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GzslReport {
    pub acc_unseen: f64,
    pub acc_seen: f64,
    pub hmean: f64,
    /// Unseen-class accuracy when predictions are restricted to unseen classes.
    pub zsl: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GzslReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        textio::read_json(path)
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::arg(name, format!("must be in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_sides(scores: &ScoreSet) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::arg("scores", "no samples"));
    }
    if scores.partition.seen().is_empty() || scores.partition.unseen().is_empty() {
        return Err(Error::arg(
            "class sets",
            "seen and unseen class sets must both be nonempty",
        ));
    }
    Ok(())
}

/// Fuses, weights and predicts at `(alpha, beta)`, then scores the seen and
/// unseen sides separately.
pub fn evaluate_gzsl(scores: &ScoreSet, alpha: f64, beta: f64) -> Result<GzslReport> {
    check_unit("alpha", alpha)?;
    check_unit("beta", beta)?;
    check_sides(scores)?;
    let bests = scores.fused_bests(alpha);
    let (acc_seen, acc_unseen) = accuracies_at(&bests, scores, beta)?;

    let unseen = scores.partition.unseen();
    let (zsl_pred, zsl_labels): (Vec<ClassId>, Vec<ClassId>) = bests
        .iter()
        .zip(&scores.labels)
        .filter(|(_, &y)| scores.partition.is_unseen(y))
        .map(|(b, &y)| (b.pick(1.0), y))
        .unzip();
    let zsl = per_class_top1(&zsl_pred, &zsl_labels, &unseen)?;

    Ok(GzslReport {
        acc_unseen,
        acc_seen,
        hmean: hmean(acc_seen, acc_unseen),
        zsl,
        alpha,
        beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub acc_seen: f64,
    pub acc_unseen: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub alpha: f64,
    pub points: Vec<SweepPoint>,
    pub ausuc: f64,
}

/// Checks that `values` is strictly increasing within [0, 1] and contains
/// both endpoints.
pub(crate) fn check_unit_grid(name: &'static str, values: &[f64]) -> Result<()> {
    if values.first() != Some(&0.0) || values.last() != Some(&1.0) {
        return Err(Error::arg(name, "must start at 0 and end at 1"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg(name, "must be strictly increasing"));
    }
    Ok(())
}

/// One (seen, unseen) accuracy point per β at fixed `alpha`, plus the AUSUC
/// of the resulting curve.
pub fn sweep_beta(scores: &ScoreSet, alpha: f64, beta_values: &[f64]) -> Result<SweepCurve> {
    check_unit("alpha", alpha)?;
    check_unit_grid("beta_values", beta_values)?;
    check_sides(scores)?;
    let bests = scores.fused_bests(alpha);
    let points = beta_values
        .iter()
        .map(|&beta| {
            let (acc_seen, acc_unseen) = accuracies_at(&bests, scores, beta)?;
            Ok(SweepPoint {
                beta,
                acc_seen,
                acc_unseen,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.acc_seen, p.acc_unseen)).collect();
    let ausuc = compute_ausuc(&pairs)?;
    Ok(SweepCurve { alpha, points, ausuc })
}

/// Points that no other point beats on both axes at once, without exact
/// duplicates, sorted by seen accuracy ascending (unseen descending on ties).
///
/// Keeping weakly dominated points lets the frontier follow the staircase
/// edges of the set, e.g. the corners (0, 1), (1, 1), (1, 0) enclose area 1.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    sorted.dedup();
    let mut frontier: Vec<(f64, f64)> = Vec::new();
    // Best unseen accuracy among points with strictly greater seen accuracy.
    let mut best_right = f64::NEG_INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let seen = sorted[i].0;
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == seen {
            j += 1;
        }
        frontier.extend(sorted[i..j].iter().filter(|p| p.1 >= best_right));
        best_right = best_right.max(sorted[i].1);
        i = j;
    }
    frontier.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    frontier
}

/// Area under the seen/unseen curve: trapezoidal integral over seen accuracy
/// of the Pareto frontier of `points` (pairs of seen, unseen accuracy).
pub fn compute_ausuc(points: &[(f64, f64)]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::arg("points", "empty point list"));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(0.0..=1.0).contains(&p.0) || !(0.0..=1.0).contains(&p.1))
    {
        return Err(Error::arg("points", format!("{p:?} outside [0, 1]^2")));
    }
    let frontier = pareto_frontier(points);
    Ok(frontier
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum())
}

impl SweepCurve {
    /// Writes `sweep.csv` (beta, acc_seen, acc_unseen) and `ausuc.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut csv = String::from("beta,acc_seen,acc_unseen\n");
        for p in &self.points {
            csv.push_str(&format!("{},{},{}\n", p.beta, p.acc_seen, p.acc_unseen));
        }
        textio::write_string(&dir.join("sweep.csv"), &csv)?;
        textio::write_string(&dir.join("ausuc.txt"), &format!("{}\n", self.ausuc))
    }
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepPoint>> {
    let rows = read_headed_csv(path, &["beta", "acc_seen", "acc_unseen"])?;
    Ok(rows
        .into_iter()
        .map(|r| SweepPoint {
            beta: r[0],
            acc_seen: r[1],
            acc_unseen: r[2],
        })
        .collect())
}

pub fn read_ausuc(path: &Path) -> Result<f64> {
    let text = textio::read_to_string(path)?;
    text.trim()
        .parse()
        .map_err(|_| Error::data(path, Some(1), format!("not a number: {:?}", text.trim())))
}

/// Reads a numeric CSV whose first line must equal `header`.
pub(crate) fn read_headed_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = textio::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header.join(",") => {}
        _ => {
            return Err(Error::data(
                path,
                Some(1),
                format!("expected header {:?}", header.join(",")),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::data(path, Some(i + 1), e.to_string()))?;
        if row.len() != header.len() {
            return Err(Error::data(
                path,
                Some(i + 1),
                format!("expected {} fields", header.len()),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}
