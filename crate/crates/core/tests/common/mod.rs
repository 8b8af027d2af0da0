//! Independent reference implementations and fixtures shared by the
//! integration tests.

#![allow(dead_code)]

use std::path::Path;

use gzsl_ensemble::dataset::SynthSpec;
use gzsl_ensemble::ensemble::ClassPartition;
use gzsl_ensemble::linear::LinearMap;
use gzsl_ensemble::scores::ScoreSet;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random probability vector with strictly positive entries.
pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// A random vote-fraction vector with denominator `t`.
pub fn random_votes(rng: &mut impl Rng, n: usize, t: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n];
    for _ in 0..t {
        counts[rng.random_range(0..n)] += 1;
    }
    counts.into_iter().map(|c| c as f64 / t as f64).collect()
}

/// Random cached scores over `seen + unseen` classes where every class has
/// at least one labeled sample.
pub fn random_score_set(rng: &mut impl Rng, seen: usize, unseen: usize, per_class: usize) -> ScoreSet {
    let c = seen + unseen;
    let n = c * per_class;
    let mut dap = Array2::zeros((n, c));
    let mut cyg = Array2::zeros((n, c));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        labels.push(i / per_class);
        let d = random_votes(rng, c, 10);
        let p = random_distribution(rng, c);
        for j in 0..c {
            dap[[i, j]] = d[j];
            cyg[[i, j]] = p[j];
        }
    }
    ScoreSet::new(dap, cyg, labels, ClassPartition::contiguous(seen, c)).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_map(rng: &mut impl Rng, inputs: usize, outputs: usize) -> LinearMap {
    LinearMap {
        weights: random_matrix(rng, inputs, outputs),
        bias: Array1::from_shape_fn(outputs, |_| rng.random_range(-1.0..1.0)),
    }
}

// ---------------------------------------------------------------------------
// Reference computations, written without the library's helpers.

pub fn reference_hmean(s: f64, u: f64) -> f64 {
    if s + u == 0.0 {
        0.0
    } else {
        2.0 * s * u / (s + u)
    }
}

/// Agreement-voting fusion of one sample, computed elementwise.
pub fn reference_fuse(p_dap: &[f64], p_cyg: &[f64], alpha: f64) -> Vec<f64> {
    let first_max = |v: &[f64]| {
        let mut best = 0;
        for i in 1..v.len() {
            if v[i] > v[best] {
                best = i;
            }
        }
        best
    };
    let (a, b) = (first_max(p_dap), first_max(p_cyg));
    (0..p_dap.len())
        .map(|i| {
            if a == b && i == a {
                1.0
            } else {
                alpha * p_cyg[i] + (1.0 - alpha) * p_dap[i]
            }
        })
        .collect()
}

/// Prediction after scaling unseen scores by β and seen scores by 1 − β.
/// On exact zero ties at the extremes, the surviving side wins.
pub fn reference_predict(scores: &[f64], unseen: &[bool], beta: f64) -> usize {
    let weighted: Vec<f64> = scores
        .iter()
        .zip(unseen)
        .map(|(&s, &u)| if u { beta * s } else { (1.0 - beta) * s })
        .collect();
    let eligible = |i: usize| (beta < 1.0 || unseen[i]) && (beta > 0.0 || !unseen[i]);
    let mut best: Option<usize> = None;
    for i in 0..weighted.len() {
        if !eligible(i) {
            continue;
        }
        match best {
            Some(b) if weighted[i] <= weighted[b] => {}
            _ => best = Some(i),
        }
    }
    best.unwrap_or(0)
}

/// Macro-averaged top-1 accuracy over `classes`.
pub fn reference_accuracy(pred: &[usize], labels: &[usize], classes: &[usize]) -> f64 {
    let mut total = 0.0;
    for &c in classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let hits = idx.iter().filter(|&&i| pred[i] == c).count();
        total += hits as f64 / idx.len() as f64;
    }
    total / classes.len() as f64
}

/// (acc_seen, acc_unseen) of cached scores at (α, β).
pub fn reference_accuracies(set: &ScoreSet, alpha: f64, beta: f64) -> (f64, f64) {
    let c = set.num_classes();
    let unseen: Vec<bool> = (0..c).map(|j| set.partition.is_unseen(j)).collect();
    let pred: Vec<usize> = (0..set.len())
        .map(|i| {
            let d: Vec<f64> = set.dap.row(i).to_vec();
            let g: Vec<f64> = set.cyg.row(i).to_vec();
            reference_predict(&reference_fuse(&d, &g, alpha), &unseen, beta)
        })
        .collect();
    let seen_classes: Vec<usize> = (0..c).filter(|&j| !unseen[j]).collect();
    let unseen_classes: Vec<usize> = (0..c).filter(|&j| unseen[j]).collect();
    let split = |classes: &[usize]| {
        let rows: Vec<usize> = (0..set.len()).filter(|&i| classes.contains(&set.labels[i])).collect();
        let p: Vec<usize> = rows.iter().map(|&i| pred[i]).collect();
        let l: Vec<usize> = rows.iter().map(|&i| set.labels[i]).collect();
        reference_accuracy(&p, &l, classes)
    };
    (split(&seen_classes), split(&unseen_classes))
}

/// Exhaustive grid search; ties keep the first point in β-major order.
pub fn reference_calibration(set: &ScoreSet, alphas: &[f64], betas: &[f64]) -> (f64, f64, f64) {
    let mut best = (alphas[0], betas[0], -1.0);
    for &b in betas {
        for &a in alphas {
            let (s, u) = reference_accuracies(set, a, b);
            let h = reference_hmean(s, u);
            if h > best.2 {
                best = (a, b, h);
            }
        }
    }
    best
}

/// Area under the upper-right frontier by brute force: a point is dropped if
/// another point is strictly better on both axes.
pub fn reference_ausuc(points: &[(f64, f64)]) -> f64 {
    let mut keep: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|p| !points.iter().any(|q| q.0 > p.0 && q.1 > p.1))
        .collect();
    keep.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    let mut area = 0.0;
    for i in 1..keep.len() {
        area += (keep[i].0 - keep[i - 1].0) * (keep[i].1 + keep[i - 1].1) / 2.0;
    }
    area
}

/// Central-difference gradient of `f` with respect to every entry of the
/// map, returned as (d_weights, d_bias).
pub fn numeric_gradient(map: &LinearMap, f: impl Fn(&LinearMap) -> f64) -> (Array2<f64>, Array1<f64>) {
    let h = 1e-6;
    let mut dw = Array2::zeros(map.weights.raw_dim());
    for idx in ndarray::indices(map.weights.raw_dim()) {
        let mut plus = map.clone();
        plus.weights[idx] += h;
        let mut minus = map.clone();
        minus.weights[idx] -= h;
        dw[idx] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    let mut db = Array1::zeros(map.bias.len());
    for j in 0..map.bias.len() {
        let mut plus = map.clone();
        plus.bias[j] += h;
        let mut minus = map.clone();
        minus.bias[j] -= h;
        db[j] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    (dw, db)
}

/// Largest relative error between two arrays, with an absolute floor so
/// near-zero entries do not dominate.
pub fn max_relative_error<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `b` may have several columns.
pub fn solve(mut a: Array2<f64>, mut b: Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().partial_cmp(&a[[j, col]].abs()).unwrap())
            .unwrap();
        for k in 0..n {
            a.swap([col, k], [pivot, k]);
        }
        for k in 0..b.ncols() {
            b.swap([col, k], [pivot, k]);
        }
        for row in col + 1..n {
            let f = a[[row, col]] / a[[col, col]];
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            for k in 0..b.ncols() {
                b[[row, k]] -= f * b[[col, k]];
            }
        }
    }
    let mut x = Array2::zeros(b.raw_dim());
    for row in (0..n).rev() {
        for k in 0..b.ncols() {
            let mut v = b[[row, k]];
            for j in row + 1..n {
                v -= a[[row, j]] * x[[j, k]];
            }
            x[[row, k]] = v / a[[row, row]];
        }
    }
    x
}

/// Ordinary least squares `argmin_w |x w - y|²` via the normal equations.
pub fn least_squares(x: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    solve(x.t().dot(x), x.t().dot(y))
}

// ---------------------------------------------------------------------------
// Pipeline fixtures.

/// The synthetic task used by the end-to-end checks.
pub fn end_to_end_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        num_seen: 20,
        num_unseen: 5,
        feature_dim: 16,
        attribute_dim: 8,
        samples_per_class: 50,
        sigma_vis: 0.01,
        sigma_attr: 1.0,
        seed,
    }
}

/// Training flags for the synthetic pipeline. Plain SGD on these small,
/// well-conditioned problems needs larger steps than the reference defaults.
pub const SYNTH_TRAIN_FLAGS: &[&str] = &["--dap-lr", "0.05", "--visual-lr", "2"];

pub fn run_cli(args: &[&str]) -> i32 {
    let mut argv = vec!["gzsl"];
    argv.extend_from_slice(args);
    gzsl_ensemble::cli::run_command(argv)
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// `synth` + `train` + `calibrate` + `eval` + `sweep` into `root/{data,run}`.
/// Returns the run directory.
pub fn full_pipeline(root: &Path, spec: &SynthSpec, threads: usize, extra_train: &[&str]) -> std::path::PathBuf {
    let data = root.join("data");
    let run = root.join("run");
    let seed = spec.seed.to_string();
    let threads = threads.to_string();
    let common = ["--seed", seed.as_str(), "--threads", threads.as_str()];
    let synth_args = [
        "synth".to_string(),
        "--seen".into(),
        spec.num_seen.to_string(),
        "--unseen".into(),
        spec.num_unseen.to_string(),
        "--k".into(),
        spec.feature_dim.to_string(),
        "--l".into(),
        spec.attribute_dim.to_string(),
        "--samples-per-class".into(),
        spec.samples_per_class.to_string(),
        "--sigma-vis".into(),
        spec.sigma_vis.to_string(),
        "--sigma-attr".into(),
        spec.sigma_attr.to_string(),
        "--out".into(),
        p(&data).to_string(),
    ];
    let mut args: Vec<&str> = common.to_vec();
    args.extend(synth_args.iter().map(String::as_str));
    assert_eq!(run_cli(&args), 0, "synth failed");

    let mut args: Vec<&str> = common.to_vec();
    args.extend(["train", "--data", p(&data), "--out", p(&run)]);
    args.extend_from_slice(extra_train);
    assert_eq!(run_cli(&args), 0, "train failed");

    for cmd in ["calibrate", "eval", "sweep"] {
        let mut args: Vec<&str> = common.to_vec();
        args.extend([cmd, "--run", p(&run)]);
        assert_eq!(run_cli(&args), 0, "{cmd} failed");
    }
    run
}
