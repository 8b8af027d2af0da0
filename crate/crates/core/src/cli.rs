//! Batch front end: `synth`, `train`, `calibrate`, `eval` and `sweep`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or
//! validation error, 4 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_grid, unit_steps, CalibrationSummary, GridSpec};
use crate::dataset::{
    generate_synthetic, load_dataset, make_calibration_split, save_dataset, GeneratedFeatures, SynthSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_gzsl, sweep_beta};
use crate::pipeline::{train_run, ModalityConfig, TEST_SCORES, VALIDATION_SCORES};
use crate::scores::ScoreSet;
use crate::textio;
use crate::train::TrainConfig;

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "GZSL_THREADS";

/// Everything a run needs; loadable from `--config` and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// Generate the dataset in memory instead of loading `dataset`.
    pub synth: Option<SynthSpec>,
    pub dropout_rate: f64,
    pub t_passes: usize,
    pub alpha_step: f64,
    pub beta_step: f64,
    pub dap: TrainConfig,
    pub visual: TrainConfig,
    pub ridge: f64,
    pub hallucinator_intercept: bool,
    pub synthetic_per_class: Option<usize>,
    pub pseudo_unseen_count: Option<usize>,
    pub retrain: bool,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModalityConfig::default();
        Self {
            dataset: None,
            synth: None,
            dropout_rate: m.dropout_rate,
            t_passes: m.t_passes,
            alpha_step: 0.01,
            beta_step: 0.01,
            dap: m.dap,
            visual: m.visual,
            ridge: m.ridge,
            hallucinator_intercept: m.hallucinator_intercept,
            synthetic_per_class: None,
            pseudo_unseen_count: None,
            retrain: true,
            output_dir: None,
            seed: 0,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::arg(
                "dropout_rate",
                format!("must be in [0, 1), got {}", self.dropout_rate),
            ));
        }
        if self.t_passes == 0 {
            return Err(Error::arg("t_passes", "must be at least 1"));
        }
        unit_steps("alpha_step", self.alpha_step)?;
        unit_steps("beta_step", self.beta_step)?;
        self.dap.validate().map_err(|e| rename(e, "dap"))?;
        self.visual.validate().map_err(|e| rename(e, "visual"))?;
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::arg("ridge", "must be finite and nonnegative"));
        }
        if self.synthetic_per_class == Some(0) {
            return Err(Error::arg("synthetic_per_class", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::arg("threads", "must be at least 1"));
        }
        if let Some(spec) = &self.synth {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn modality_config(&self) -> ModalityConfig {
        ModalityConfig {
            dropout_rate: self.dropout_rate,
            t_passes: self.t_passes,
            dap: self.dap.clone(),
            visual: self.visual.clone(),
            ridge: self.ridge,
            hallucinator_intercept: self.hallucinator_intercept,
            synthetic_per_class: self.synthetic_per_class,
            retrain: self.retrain,
            seed: self.seed,
        }
    }
}

fn rename(e: Error, section: &str) -> Error {
    match e {
        Error::Argument { name, message } => Error::Argument {
            name,
            message: format!("{message} (in `{section}`)"),
        },
        other => other,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gzsl",
    version,
    about = "Multi-modal MC-dropout ensembles for generalized zero-shot learning"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: $GZSL_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    Synth(SynthArgs),
    /// Fit both modalities and cache validation/test scores.
    Train(TrainArgs),
    /// Grid-search (alpha, beta) on the cached validation scores.
    Calibrate(CalibrateArgs),
    /// Evaluate the cached test scores at the calibrated or given (alpha, beta).
    Eval(EvalArgs),
    /// Sweep beta at fixed alpha and compute AUSUC.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seen: Option<usize>,
    #[arg(long)]
    unseen: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[arg(long)]
    sigma_vis: Option<f64>,
    #[arg(long)]
    sigma_attr: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (or its manifest.json).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Number of MC dropout passes.
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    dap_epochs: Option<usize>,
    #[arg(long)]
    dap_batch_size: Option<usize>,
    #[arg(long)]
    dap_lr: Option<f64>,
    #[arg(long)]
    visual_epochs: Option<usize>,
    #[arg(long)]
    visual_batch_size: Option<usize>,
    #[arg(long)]
    visual_lr: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    /// Number of seen classes held out as pseudo-unseen for calibration.
    #[arg(long)]
    pseudo_unseen: Option<usize>,
    /// Keep the calibration-stage training rows for the final models.
    #[arg(long)]
    no_retrain: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha_step: Option<f64>,
    #[arg(long)]
    beta_step: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta_step: Option<f64>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status. Diagnostics go to stderr.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(cfg: &RunConfig) -> Result<Option<usize>> {
    if cfg.threads.is_some() {
        return Ok(cfg.threads);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::arg(
                "GZSL_THREADS",
                format!("expected a positive integer, got {v:?}"),
            )),
        },
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => textio::read_json::<RunConfig>(path).map_err(|e| match e {
            Error::Data { message, .. } => Error::arg("config", format!("{}: {message}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let threads = thread_count(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::arg("threads", e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Calibrate(a) => calibrate(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Sweep(a) => sweep(cfg, a),
    })
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig, fallback: Option<&Path>) -> Result<PathBuf> {
    flag.or_else(|| cfg.output_dir.clone())
        .or_else(|| fallback.map(Path::to_path_buf))
        .ok_or_else(|| Error::arg("out", "no output directory given"))
}

fn synth(cfg: RunConfig, a: SynthArgs) -> Result<()> {
    let mut spec = cfg.synth.clone().unwrap_or_default();
    spec.seed = cfg.seed;
    if let Some(v) = a.seen {
        spec.num_seen = v;
    }
    if let Some(v) = a.unseen {
        spec.num_unseen = v;
    }
    if let Some(v) = a.k {
        spec.feature_dim = v;
    }
    if let Some(v) = a.l {
        spec.attribute_dim = v;
    }
    if let Some(v) = a.samples_per_class {
        spec.samples_per_class = v;
    }
    if let Some(v) = a.sigma_vis {
        spec.sigma_vis = v;
    }
    if let Some(v) = a.sigma_attr {
        spec.sigma_attr = v;
    }
    let out = output_dir(a.out, &cfg, None)?;
    let (dataset, ground_truth) = generate_synthetic(&spec)?;
    save_dataset(&dataset, &out)?;
    textio::write_matrix_csv(&out.join("ground_truth.csv"), &ground_truth)?;
    println!(
        "wrote {} ({} samples, {} seen + {} unseen classes)",
        out.display(),
        dataset.labels.len(),
        dataset.num_seen,
        dataset.num_unseen()
    );
    Ok(())
}

fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    if let Some(d) = a.data {
        cfg.dataset = Some(d);
    }
    macro_rules! set {
        ($($flag:expr => $field:expr),* $(,)?) => {
            $(if let Some(v) = $flag { $field = v; })*
        };
    }
    set!(
        a.dropout => cfg.dropout_rate,
        a.passes => cfg.t_passes,
        a.dap_epochs => cfg.dap.epochs,
        a.dap_batch_size => cfg.dap.batch_size,
        a.dap_lr => cfg.dap.learning_rate,
        a.visual_epochs => cfg.visual.epochs,
        a.visual_batch_size => cfg.visual.batch_size,
        a.visual_lr => cfg.visual.learning_rate,
        a.ridge => cfg.ridge,
    );
    if a.pseudo_unseen.is_some() {
        cfg.pseudo_unseen_count = a.pseudo_unseen;
    }
    if a.no_retrain {
        cfg.retrain = false;
    }
    cfg.validate()?;
    let out = output_dir(a.out, &cfg, None)?;

    let (mut dataset, generated) = match (&cfg.dataset, &cfg.synth) {
        (Some(path), _) => {
            let ds = load_dataset(path)?;
            let generated = GeneratedFeatures::load(path, &ds)?;
            (ds, generated)
        }
        (None, Some(spec)) => {
            let spec = SynthSpec {
                seed: cfg.seed,
                ..spec.clone()
            };
            (generate_synthetic(&spec)?.0, None)
        }
        (None, None) => return Err(Error::arg("data", "no dataset path or synth spec given")),
    };
    if let Some(count) = cfg.pseudo_unseen_count {
        dataset.splits = make_calibration_split(&dataset, count, cfg.seed)?;
    }

    let run = train_run(&dataset, generated.as_ref(), &cfg.modality_config())?;
    run.save(&out)?;
    let mut effective = cfg.clone();
    effective.output_dir = Some(out.clone());
    textio::write_json(&out.join("run_config.json"), &effective)?;
    println!(
        "wrote {} ({} validation and {} test samples scored)",
        out.display(),
        run.validation.len(),
        run.test.len()
    );
    Ok(())
}

fn calibrate(mut cfg: RunConfig, a: CalibrateArgs) -> Result<()> {
    if let Some(v) = a.alpha_step {
        cfg.alpha_step = v;
    }
    if let Some(v) = a.beta_step {
        cfg.beta_step = v;
    }
    cfg.validate()?;
    let val = ScoreSet::load(&a.run.join(VALIDATION_SCORES))?;
    let grid = GridSpec::uniform(cfg.alpha_step, cfg.beta_step)?;
    let result = calibrate_grid(&val, &grid)?;
    let out = output_dir(a.out, &cfg, Some(&a.run))?;
    result.save(&out, val.len())?;
    println!(
        "alpha* = {}, beta* = {}, validation H = {:.4}",
        result.alpha_star, result.beta_star, result.best.hmean
    );
    Ok(())
}

/// α and β from flags, falling back to the run's `calibration.json`.
fn operating_point(run: &Path, alpha: Option<f64>, beta: Option<f64>) -> Result<(f64, f64)> {
    if let (Some(a), Some(b)) = (alpha, beta) {
        return Ok((a, b));
    }
    let path = run.join("calibration.json");
    if !path.exists() {
        return Err(Error::arg(
            "alpha",
            "no calibration.json in the run directory; pass --alpha and --beta",
        ));
    }
    let cal = CalibrationSummary::load(&path)?;
    Ok((alpha.unwrap_or(cal.alpha_star), beta.unwrap_or(cal.beta_star)))
}

fn eval(cfg: RunConfig, a: EvalArgs) -> Result<()> {
    let (alpha, beta) = operating_point(&a.run, a.alpha, a.beta)?;
    let test = ScoreSet::load(&a.run.join(TEST_SCORES))?;
    let report = evaluate_gzsl(&test, alpha, beta)?;
    let out = output_dir(a.out, &cfg, Some(&a.run))?;
    report.save(&out.join("report.json"))?;
    println!(
        "acc_seen = {:.1}%, acc_unseen = {:.1}%, H = {:.1}%, ZSL = {:.1}%",
        100.0 * report.acc_seen,
        100.0 * report.acc_unseen,
        100.0 * report.hmean,
        100.0 * report.zsl
    );
    Ok(())
}

fn sweep(mut cfg: RunConfig, a: SweepArgs) -> Result<()> {
    if let Some(v) = a.beta_step {
        cfg.beta_step = v;
    }
    let betas = unit_steps("beta_step", cfg.beta_step)?;
    let (alpha, _) = match a.alpha {
        Some(alpha) => (alpha, 0.0),
        None => operating_point(&a.run, None, Some(0.0))?,
    };
    let test = ScoreSet::load(&a.run.join(TEST_SCORES))?;
    let curve = sweep_beta(&test, alpha, &betas)?;
    let out = output_dir(a.out, &cfg, Some(&a.run))?;
    curve.save(&out)?;
    println!("alpha = {alpha}, AUSUC = {:.4}", curve.ausuc);
    Ok(())
}
