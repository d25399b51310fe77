//! The `rpl` command line: dataset preparation, training and plot-data exports.
//!
//! Exit codes: 0 on success, 2 for invalid configuration or arguments,
//! 3 for runtime and numerical failures.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bayes;
use crate::checkpoint;
use crate::config::{self, RunConfig};
use crate::data::{self, Dataset, Grid2D, MnistSplit, SpiralConfig};
use crate::error::{Error, Result};
use crate::heads::Head;
use crate::layers::{Network, Regime};
use crate::metrics::{self, AttackConfig};
use crate::tensor::Tensor;
use crate::trainer;

#[derive(Debug, Parser)]
#[command(name = "rpl", version = config::version(), about = "Radial prediction layers: training and export tool")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a spiral dataset CSV, or verify MNIST files.
    GenData(GenData),
    /// Train a model from a config file or preset.
    Train(Train),
    /// Class probabilities over a 2-d grid.
    ExportGrid(ExportGrid),
    /// Confidence histogram of correct and wrong predictions.
    ExportHist(ExportHist),
    /// Accuracy under FGSM perturbations.
    Attack(Attack),
    /// Per-sample max-class probabilities of a Bayesian model at one point.
    McDist(McDist),
    /// Accuracy of a checkpoint on a dataset.
    Eval(Eval),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DatasetKind {
    Spiral,
    Mnist,
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    #[arg(long, default_value_t = 0.0)]
    pub noise_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 1.0)]
    pub turns: f64,
    /// MNIST directory (default: $RPL_MNIST_DIR or data/mnist).
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Train {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_fraction: Option<f64>,
    /// Print every epoch instead of roughly twenty lines per run.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct ExportGrid {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-1.5, 1.5])]
    pub grid_range: Vec<f64>,
    #[arg(long, default_value_t = 300)]
    pub resolution: usize,
    /// Evaluate an RPL model at another β.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Monte-Carlo samples; required for Bayesian checkpoints.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Report RPL scores without the distance threshold.
    #[arg(long)]
    pub no_threshold: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportHist {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `mnist-test`, `mnist-train`, or a CSV with columns x,y,label.
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Attack {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated ascending list (default 0, 0.05, …, 0.5).
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long, default_value = "mnist-test")]
    pub dataset: String,
    /// Attack only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct McDist {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
    pub point: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Eval {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "mnist-test")]
    pub dataset: String,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub mc_samples: usize,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidLayer { .. } => 2,
        _ => 3,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::ExportGrid(a) => export_grid(a),
        Command::ExportHist(a) => export_hist(a),
        Command::Attack(a) => attack(a),
        Command::McDist(a) => mc_dist(a),
        Command::Eval(a) => eval(a),
    }
}

/// Writes `metadata + body` atomically enough for our purposes (via a buffered file).
fn write_export(path: &Path, metadata: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(metadata.as_bytes())?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Metadata for exports derived from a checkpoint: the hash covers the
/// checkpoint bytes and every flag that affects the output.
fn export_metadata<T: Serialize>(checkpoint: &Path, flags: &T, seed: u64) -> Result<String> {
    #[derive(Serialize)]
    struct Key<'a, T> {
        checkpoint_sha256: String,
        flags: &'a T,
    }
    let bytes = fs::read(checkpoint)?;
    let key = Key { checkpoint_sha256: data::sha256_hex(&bytes), flags };
    Ok(config::metadata_line(&config::hash_json(&key), seed))
}

fn load_checkpoint(path: &Path, beta: Option<f64>) -> Result<Network> {
    let net = checkpoint::load(path)?;
    match beta {
        None => Ok(net),
        Some(b) => match net.head().clone() {
            Head::Rpl(mut rpl) => {
                rpl.beta = b;
                net.with_head(Head::Rpl(rpl))
            }
            Head::Softmax { .. } => Err(Error::InvalidArgument("--beta applies only to RPL checkpoints".into())),
        },
    }
}

fn load_named_dataset(name: &str, mnist_dir: Option<&Path>, classes: usize) -> Result<Dataset> {
    let dir = config::mnist_dir(mnist_dir);
    match name {
        "mnist-test" => data::load_mnist(dir, MnistSplit::Test),
        "mnist-train" => data::load_mnist(dir, MnistSplit::Train),
        path => Dataset::read_csv(File::open(path)?, classes),
    }
}

fn gen_data(a: GenData) -> Result<()> {
    match a.dataset {
        DatasetKind::Spiral => {
            let cfg = SpiralConfig { n_per_class: a.n_per_class, classes: 3, turns: a.turns, noise_std: a.noise_std };
            let clean = data::spiral_generate(&cfg, a.seed)?;
            let (ds, relabeled) = data::inject_label_noise(&clean, a.noise_fraction, a.seed)?;
            fs::create_dir_all(&a.out)?;
            let path = a.out.join("spiral.csv");
            let meta = config::metadata_line(&config::hash_json(&(&cfg, a.noise_fraction)), a.seed);
            write_export(&path, &meta, |w| ds.write_csv(w))?;
            if a.noise_fraction > 0.0 {
                write_export(&a.out.join("spiral_clean.csv"), &meta, |w| clean.write_csv(w))?;
            }
            println!("wrote {} ({} rows, {} relabeled)", path.display(), ds.len(), relabeled.len());
        }
        DatasetKind::Mnist => {
            let dir = config::mnist_dir(a.mnist_dir.as_deref());
            data::verify_mnist(&dir)?;
            let train = data::load_mnist(&dir, MnistSplit::Train)?;
            let test = data::load_mnist(&dir, MnistSplit::Test)?;
            fs::create_dir_all(&a.out)?;
            let mut manifest = String::from("file,sha256\n");
            for (name, digest) in data::MNIST_SHA256 {
                manifest.push_str(&format!("{name},{digest}\n"));
            }
            fs::write(a.out.join("mnist_manifest.csv"), manifest)?;
            println!(
                "verified {}: {} training and {} test images",
                dir.display(),
                train.len(),
                test.len()
            );
        }
    }
    Ok(())
}

fn train(a: Train) -> Result<()> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => RunConfig::from_file(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.beta {
        cfg.model = cfg.model.with_beta(b);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(f) = a.noise_fraction {
        match &mut cfg.dataset {
            config::DatasetConfig::Spiral { noise_fraction, .. } => *noise_fraction = f,
            config::DatasetConfig::Mnist { .. } => {
                return Err(Error::Config("--noise-fraction applies only to spiral datasets".into()))
            }
        }
    }
    cfg.validate()?;
    let outcome = run_training(&cfg, &a.out, a.verbose)?;
    println!("{outcome}");
    Ok(())
}

/// Trains `cfg` and writes `model.ckpt`, `epochs.csv`, `config.json` (and
/// the spiral training set) into `out`. Returns a one-line summary.
pub fn run_training(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<String> {
    let epochs = cfg.train.epochs;
    let every = if verbose { 1 } else { (epochs / 20).max(1) };
    let config::TrainedRun { net, data, log } = cfg.execute(|r| {
        if r.epoch % every == 0 || r.epoch == epochs {
            let test = r.test_acc.map(|a| format!(" test_acc={a:.4}")).unwrap_or_default();
            eprintln!("epoch {:>6} loss={:.5} train_acc={:.4}{test}", r.epoch, r.train_loss, r.train_acc);
        }
    })?;
    fs::create_dir_all(out)?;
    checkpoint::save(&net, out.join("model.ckpt"))?;
    let meta = config::metadata_line(&cfg.hash(), cfg.seed);
    write_export(&out.join("epochs.csv"), &meta, |w| trainer::write_epoch_log(&log, w))?;
    fs::write(out.join("config.json"), cfg.to_json_pretty() + "\n")?;
    if data.train.feature_shape() == [2] {
        write_export(&out.join("train.csv"), &meta, |w| data.train.write_csv(w))?;
    }
    let last = log.last().expect("at least one epoch");
    Ok(format!(
        "trained {} for {} epochs: train_loss={:.5} test_acc={} -> {}",
        if cfg.name.is_empty() { "model" } else { &cfg.name },
        log.len(),
        last.train_loss,
        last.test_acc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into()),
        out.display()
    ))
}

#[derive(Serialize)]
struct GridFlags {
    range: [f64; 2],
    resolution: usize,
    beta: Option<f64>,
    mc_samples: Option<usize>,
    no_threshold: bool,
    seed: u64,
}

/// Probabilities at each grid point: one row of `K` values per point.
pub fn grid_probabilities(net: &Network, points: &Tensor<f32>, mc_samples: Option<usize>, thresholded: bool, seed: u64) -> Result<Vec<Vec<f64>>> {
    match (net.regime(), mc_samples) {
        (Regime::Deterministic, None) => {
            let eval = metrics::evaluate_inputs(net, points)?;
            Ok(if thresholded { eval.probabilities } else { eval.scores })
        }
        (Regime::Deterministic, Some(_)) => Err(Error::RegimeMismatch(
            "--mc-samples needs a Bayesian checkpoint; this one is deterministic".into(),
        )),
        (Regime::Bayesian, None) => Err(Error::RegimeMismatch(
            "this checkpoint is Bayesian; pass --mc-samples N to average N posterior samples".into(),
        )),
        (Regime::Bayesian, Some(n)) => Ok(bayes::mc_predict_with(net, points, n, seed, false, thresholded)?.mean),
    }
}

fn export_grid(a: ExportGrid) -> Result<()> {
    let net = load_checkpoint(&a.checkpoint, a.beta)?;
    if net.spec().input_shape != [2] {
        return Err(Error::InvalidArgument("export-grid needs a model with 2-d inputs".into()));
    }
    let grid = Grid2D::square(a.grid_range[0], a.grid_range[1], a.resolution);
    let points = data::make_grid(&grid)?;
    let probs = grid_probabilities(&net, &points, a.mc_samples, !a.no_threshold, a.seed)?;
    let flags = GridFlags {
        range: [a.grid_range[0], a.grid_range[1]],
        resolution: a.resolution,
        beta: a.beta,
        mc_samples: a.mc_samples,
        no_threshold: a.no_threshold,
        seed: a.seed,
    };
    let meta = export_metadata(&a.checkpoint, &flags, a.seed)?;
    write_export(&a.out, &meta, |w| write_grid_csv(&points, &probs, w))?;
    println!("wrote {} ({} rows)", a.out.display(), probs.len());
    Ok(())
}

/// Rows `x, y, p_class_0 … p_class_{K−1}, sum_p`.
pub fn write_grid_csv(points: &Tensor<f32>, probs: &[Vec<f64>], w: &mut dyn Write) -> Result<()> {
    let k = probs.first().map_or(0, Vec::len);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend((0..k).map(|j| format!("p_class_{j}")));
    header.push("sum_p".into());
    out.write_record(&header)?;
    for (i, p) in probs.iter().enumerate() {
        let pt = points.row(i);
        let mut row = vec![pt[0].to_string(), pt[1].to_string()];
        row.extend(p.iter().map(|v| format!("{v:?}")));
        row.push(format!("{:?}", p.iter().sum::<f64>()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn export_hist(a: ExportHist) -> Result<()> {
    let net = load_checkpoint(&a.checkpoint, a.beta)?;
    let ds = load_named_dataset(&a.dataset, a.mnist_dir.as_deref(), net.head().classes())?;
    let hist = metrics::confidence_histogram(&net, &ds, a.bins)?;
    #[derive(Serialize)]
    struct Flags<'a> {
        dataset: &'a str,
        bins: usize,
        beta: Option<f64>,
    }
    let meta = export_metadata(&a.checkpoint, &Flags { dataset: &a.dataset, bins: a.bins, beta: a.beta }, 0)?;
    write_export(&a.out, &meta, |w| hist.write_csv(w))?;
    println!(
        "wrote {}: {} correct (median confidence {:.4}), {} wrong (median confidence {:.4})",
        a.out.display(),
        hist.correct_confidences.len(),
        hist.median_correct().unwrap_or(f64::NAN),
        hist.wrong_confidences.len(),
        hist.median_wrong().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn attack(a: Attack) -> Result<()> {
    let net = load_checkpoint(&a.checkpoint, None)?;
    let mut ds = load_named_dataset(&a.dataset, a.mnist_dir.as_deref(), net.head().classes())?;
    if let Some(n) = a.limit {
        ds = ds.take(n);
    }
    let cfg = AttackConfig { epsilons: a.epsilons.clone().unwrap_or_else(metrics::default_epsilons), ..Default::default() };
    let curve = metrics::accuracy_vs_epsilon(&net, &ds, &cfg)?;
    #[derive(Serialize)]
    struct Flags<'a> {
        dataset: &'a str,
        epsilons: &'a [f64],
        limit: Option<usize>,
    }
    let meta = export_metadata(&a.checkpoint, &Flags { dataset: &a.dataset, epsilons: &cfg.epsilons, limit: a.limit }, 0)?;
    write_export(&a.out, &meta, |w| metrics::write_curve_csv(&curve, w))?;
    for (e, acc) in &curve {
        println!("epsilon={e:.3} accuracy={acc:.4}");
    }
    Ok(())
}

fn mc_dist(a: McDist) -> Result<()> {
    let net = load_checkpoint(&a.checkpoint, None)?;
    if net.regime() != Regime::Bayesian {
        return Err(Error::RegimeMismatch(
            "mc-dist needs a Bayesian checkpoint (trained with regime \"bayesian\"); this one is deterministic".into(),
        ));
    }
    let point = Tensor::new(vec![1, 2], vec![a.point[0] as f32, a.point[1] as f32])?;
    let pred = bayes::mc_predict(&net, &point, a.samples, a.seed)?;
    let maxes = pred.sample_max(0);
    #[derive(Serialize)]
    struct Flags {
        point: [f64; 2],
        samples: usize,
        seed: u64,
    }
    let meta = export_metadata(&a.checkpoint, &Flags { point: [a.point[0], a.point[1]], samples: a.samples, seed: a.seed }, a.seed)?;
    write_export(&a.out, &meta, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["sample", "max_prob"])?;
        for (i, m) in maxes.iter().enumerate() {
            out.write_record([i.to_string(), format!("{m:?}")])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let mean_max = pred.mean[0].iter().copied().fold(0.0, f64::max);
    println!("wrote {} ({} samples, mean max-class probability {mean_max:.4})", a.out.display(), maxes.len());
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    let net = load_checkpoint(&a.checkpoint, None)?;
    let ds = load_named_dataset(&a.dataset, a.mnist_dir.as_deref(), net.head().classes())?;
    let e = metrics::evaluate_any(&net, &ds, a.mc_samples, 0)?;
    println!(
        "accuracy={:.4} top5={:.4} n={}",
        e.accuracy(ds.labels()),
        e.topk_accuracy(ds.labels(), 5.min(net.head().classes())),
        ds.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::RegimeMismatch("x".into())), 3);
        assert_eq!(exit_code(&Error::Divergence { epoch: 1, step: 0, loss: f64::NAN }), 3);
        assert_eq!(main_with_args(["rpl", "train", "--preset", "nope", "--out", "/nonexistent"]), 2);
        assert_eq!(main_with_args(["rpl", "bogus"]), 2);
    }
}
