//! Argument definitions and command implementations.
//!
//! Commands write their human-readable output to the given writer and their
//! files under `--out`; `main` only maps errors to exit codes.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use orderless_core::metrics::F1Mean;
use orderless_core::training::train_with;
use orderless_core::{
    align_mla, align_pla, generate, sequence_loss, shape_predictions, AlignmentMatrix, GeneratorConfig,
    ModelParameters, OrderingStrategy, PredictionMatrix, TrainConfig,
};

use crate::bench::{benchmark_alignment, InstantClock};
use crate::config::{load_config, ConfigFile};
use crate::experiment::{evaluate_params, run_compare, run_strategy, ExperimentSpec};
use crate::format::{
    load_checkpoint, load_dataset, parse_probability_table, read_text, save_checkpoint, save_dataset,
    write_text, Checkpoint, Dataset,
};
use crate::{report, CliError};

#[derive(Debug, Parser)]
#[command(name = "orderless", version, about = "Orderless sequence losses for multi-label prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Train one strategy and write a checkpoint with its logs.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train several strategies with identical budgets and compare them.
    Compare(CompareArgs),
    /// Align labels against a probability matrix file with MLA and PLA.
    Align(AlignArgs),
    /// Time forward, alignment and backward per sample.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeanArg {
    Geometric,
    Harmonic,
}

impl From<MeanArg> for F1Mean {
    fn from(m: MeanArg) -> Self {
        match m {
            MeanArg::Geometric => F1Mean::Geometric,
            MeanArg::Harmonic => F1Mean::Harmonic,
        }
    }
}

fn strategy_arg(s: &str) -> Result<OrderingStrategy, String> {
    s.parse().map_err(|e: orderless_core::alignment::UnknownStrategy| e.to_string())
}

/// Training flags; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// TOML experiment file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Use spatial attention in the decoder.
    #[arg(long)]
    pub attention: bool,
    /// Feed target labels instead of the decoder's predictions.
    #[arg(long)]
    pub teacher_forcing: bool,
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Dataset file to write.
    #[arg(long, default_value = "dataset.txt")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = strategy_arg)]
    pub strategy: Option<OrderingStrategy>,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Output directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "geometric")]
    pub f1_mean: MeanArg,
    #[arg(long, default_value_t = 10)]
    pub max_steps: usize,
    /// Directory for metrics.csv and per_class.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Dataset file; without it the dataset is generated from the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated strategies (default: all six).
    #[arg(long, value_parser = strategy_arg, value_delimiter = ',')]
    pub strategy: Vec<OrderingStrategy>,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, value_enum, default_value = "geometric")]
    pub f1_mean: MeanArg,
    /// Leave align_ms empty so repeated runs are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignMode {
    Mla,
    Pla,
    Both,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Matrix file: one row of class probabilities per step, end token last.
    pub matrix: PathBuf,
    /// Ground-truth labels, by name or column index, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub labels: Vec<String>,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: AlignMode,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset file; the reference dataset is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parameters to time; without one, a PLA model is trained first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Default config, then the file's `[train]` table, then flags.
pub fn train_config(
    file: &ConfigFile,
    flags: &TrainFlags,
    strategy: Option<OrderingStrategy>,
) -> Result<TrainConfig, CliError> {
    let mut c = match &file.train {
        Some(t) => t.apply(TrainConfig::default())?,
        None => TrainConfig::default(),
    };
    if let Some(s) = strategy {
        c.strategy = s;
    }
    if let Some(v) = flags.seed {
        c.seed = v;
    }
    if let Some(v) = flags.epochs {
        c.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = flags.lr {
        c.learning_rate = v;
    }
    if let Some(v) = flags.hidden {
        c.hidden = v;
    }
    c.use_attention |= flags.attention;
    c.teacher_forcing |= flags.teacher_forcing;
    c.validate()?;
    Ok(c)
}

fn config_file(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    path.map_or_else(|| Ok(ConfigFile::default()), load_config)
}

/// The file's dataset path, or its generator table, or the reference dataset.
fn resolve_dataset(data: Option<&Path>, file: &ConfigFile, seed: Option<u64>) -> Result<Dataset, CliError> {
    if let Some(path) = data.or(file.dataset.as_deref()) {
        return Ok(load_dataset(path)?);
    }
    let mut g = match &file.generator {
        Some(s) => s.apply(GeneratorConfig::default()),
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = seed {
        g.seed = seed;
    }
    let (vocab, samples) = generate(&g)?;
    Ok(Dataset { vocab, samples, seed: Some(g.seed) })
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(format!("write failed: {e}"))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Compare(a) => cmd_compare(&a, out),
        Command::Align(a) => cmd_align(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    }
}

pub fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = config_file(a.config.as_deref())?;
    let mut g = match &file.generator {
        Some(s) => s.apply(GeneratorConfig::default()),
        None => GeneratorConfig::default(),
    };
    if let Some(v) = a.seed {
        g.seed = v;
    }
    if let Some(v) = a.classes {
        g.n_classes = v;
        g.correlation_pairs.retain(|&(x, y, _)| x < v && y < v);
    }
    if let Some(v) = a.samples {
        g.n_samples = v;
    }
    let (vocab, samples) = generate(&g)?;
    let ds = Dataset { vocab, samples, seed: Some(g.seed) };
    save_dataset(&a.out, &ds)?;

    let n = ds.samples.len();
    let total: usize = ds.samples.iter().map(|s| s.labels.len()).sum();
    writeln!(
        out,
        "wrote {} ({} samples, {} classes, {:.2} labels/sample, seed {})",
        a.out.display(),
        n,
        ds.vocab.n_classes(),
        total as f64 / n.max(1) as f64,
        g.seed
    )
    .map_err(io_err)?;
    writeln!(out, "{:>5}  {:<12} {:>7}", "class", "name", "count").map_err(io_err)?;
    for (i, (name, freq)) in ds.vocab.names().iter().zip(ds.vocab.frequencies()).enumerate() {
        writeln!(out, "{i:>5}  {name:<12} {freq:>7}").map_err(io_err)?;
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = config_file(a.flags.config.as_deref())?;
    let config = train_config(&file, &a.flags, a.strategy)?;
    let ds = load_dataset(&a.data)?;
    let (params, log) = train_with(&ds.samples, &ds.vocab, &config, None, &InstantClock::new())?;

    let ck = Checkpoint {
        params,
        strategy: Some(config.strategy),
        use_attention: config.use_attention,
    };
    save_checkpoint(&a.out.join("checkpoint.txt"), &ck)?;
    write_text(&a.out.join("loss.csv"), &report::loss_csv(&log))?;
    write_text(&a.out.join("epochs.csv"), &report::epochs_csv(&log))?;

    let first = log.iteration_losses.first().copied().unwrap_or(f64::NAN);
    writeln!(
        out,
        "{}: {} iterations, loss {:.4} -> {:.4} (last {} mean)",
        config.strategy,
        log.iteration_losses.len(),
        first,
        log.smoothed_final_loss(crate::experiment::SMOOTHING_WINDOW),
        crate::experiment::SMOOTHING_WINDOW
    )
    .map_err(io_err)?;
    if let Some(v) = log.epochs.last().and_then(|e| e.validation.as_ref()) {
        writeln!(out, "validation loss {:.4}", v.loss).map_err(io_err)?;
        write!(out, "{}", report::metrics_table(&v.report)).map_err(io_err)?;
    }
    writeln!(out, "wrote {}", a.out.display()).map_err(io_err)?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    let d = ck.params.dims;
    if d.n_classes != ds.vocab.n_classes() || d.feature != ds.feature_dim() {
        return Err(CliError::Validation(format!(
            "checkpoint expects {} classes and {}-dim features, dataset has {} and {}",
            d.n_classes,
            d.feature,
            ds.vocab.n_classes(),
            ds.feature_dim()
        )));
    }
    if a.max_steps == 0 {
        return Err(CliError::Validation("--max-steps must be >= 1".into()));
    }
    let config = TrainConfig {
        use_attention: ck.use_attention,
        max_decode_steps: a.max_steps,
        ..TrainConfig::default()
    };
    let r = evaluate_params(&ds.samples, &ds.vocab, &ck.params, &config, a.f1_mean.into())?;
    writeln!(out, "{} samples", ds.samples.len()).map_err(io_err)?;
    write!(out, "{}", report::metrics_table(&r)).map_err(io_err)?;
    if let Some(dir) = &a.out {
        write_text(&dir.join("metrics.csv"), &report::metrics_csv(&r))?;
        write_text(&dir.join("per_class.csv"), &report::per_class_csv(&r, &ds.vocab))?;
        writeln!(out, "wrote {}", dir.display()).map_err(io_err)?;
    }
    Ok(())
}

pub fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = config_file(a.flags.config.as_deref())?;
    let train = train_config(&file, &a.flags, None)?;
    let strategies = if !a.strategy.is_empty() {
        a.strategy.clone()
    } else if let Some(names) = &file.strategies {
        names.iter().map(|n| crate::config::parse_strategy(n)).collect::<Result<_, _>>()?
    } else {
        OrderingStrategy::ALL.to_vec()
    };
    let dir = a.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("compare"));
    let spec = ExperimentSpec {
        strategies,
        train,
        out: dir,
        f1_mean: a.f1_mean.into(),
        timing: !a.no_timing,
    };
    spec.validate()?;
    let ds = resolve_dataset(a.data.as_deref(), &file, a.flags.seed)?;
    let runs = run_compare(&ds.samples, &ds.vocab, &spec)?;
    let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
    write_text(&spec.out.join("compare.csv"), &report::compare_csv(&rows))?;
    for r in &runs {
        let name = r.row.strategy.name();
        write_text(&spec.out.join(format!("loss_{name}.csv")), &report::loss_csv(&r.log))?;
        write_text(&spec.out.join(format!("epochs_{name}.csv")), &report::epochs_csv(&r.log))?;
    }
    writeln!(
        out,
        "{} samples, {} epochs, batch {}, seed {}",
        ds.samples.len(),
        spec.train.epochs,
        spec.train.batch_size,
        spec.train.seed
    )
    .map_err(io_err)?;
    write!(out, "{}", report::compare_table(&rows)).map_err(io_err)?;
    writeln!(out, "wrote {}", spec.out.display()).map_err(io_err)?;
    Ok(())
}

/// Resolves `--labels` entries against the table's class names or indices.
fn resolve_labels(names: &[String], classes: &[String]) -> Result<Vec<usize>, CliError> {
    let real = classes.len() - 1;
    names
        .iter()
        .map(|n| {
            let idx = classes[..real]
                .iter()
                .position(|c| c == n)
                .or_else(|| n.parse::<usize>().ok().filter(|&i| i < real));
            idx.ok_or_else(|| CliError::Validation(format!("unknown label {n:?}")))
        })
        .collect()
}

pub fn cmd_align(a: &AlignArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = read_text(&a.matrix)?;
    let table = parse_probability_table(&text).map_err(|e| CliError::Validation(format!("{}: {e}", a.matrix.display())))?;
    let labels = resolve_labels(&a.labels, &table.classes)?;
    let end = table.classes.len() - 1;
    let raw = PredictionMatrix::from_columns(&table.steps).map_err(|e| CliError::Validation(e.to_string()))?;
    let preds = shape_predictions(&raw, labels.len() + 1).map_err(|e| CliError::Validation(e.to_string()))?;
    let modes: &[AlignMode] = match a.mode {
        AlignMode::Both => &[AlignMode::Mla, AlignMode::Pla],
        ref m => std::slice::from_ref(m),
    };
    for &mode in modes {
        let (name, t) = match mode {
            AlignMode::Mla => ("mla", align_mla(&preds, &labels, end)),
            _ => ("pla", align_pla(&preds, &labels, end)),
        };
        let t = t.map_err(|e| CliError::Validation(e.to_string()))?;
        print_alignment(out, name, &preds, &t, &table.classes)?;
    }
    Ok(())
}

fn print_alignment(
    out: &mut dyn Write,
    mode: &str,
    preds: &PredictionMatrix,
    t: &AlignmentMatrix,
    classes: &[String],
) -> Result<(), CliError> {
    let loss = sequence_loss(preds, t).map_err(|e| CliError::Runtime(e.to_string()))? + 0.0;
    let order: Vec<&str> = t.step_to_label.iter().map(|&j| classes[j].as_str()).collect();
    writeln!(out, "{mode}: [{}] loss {loss:.3}", order.join(", ")).map_err(io_err)?;
    for (step, &j) in t.step_to_label.iter().enumerate() {
        let argmax = preds.predicted_labels()[step].map_or("-", |l| classes[l].as_str());
        writeln!(
            out,
            "  t{}: {:<10} p={:.4}  -log p={:.3}  argmax {argmax}",
            step + 1,
            classes[j],
            preds.prob(j, step),
            preds.cost(j, step) + 0.0
        )
        .map_err(io_err)?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = config_file(a.flags.config.as_deref())?;
    let ds = resolve_dataset(a.data.as_deref(), &file, None)?;
    if a.samples == 0 {
        return Err(CliError::Validation("--samples must be >= 1".into()));
    }
    let (params, use_attention): (ModelParameters, bool) = match &a.checkpoint {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            (ck.params, ck.use_attention)
        }
        None => {
            let mut flags = a.flags.clone();
            flags.epochs = flags.epochs.or(Some(1));
            let config = train_config(&file, &flags, Some(OrderingStrategy::Pla))?;
            writeln!(out, "training pla for {} epoch(s) before timing", config.epochs).map_err(io_err)?;
            let run = run_strategy(&ds.samples, &ds.vocab, &config, F1Mean::Geometric, &orderless_core::training::NoClock)?;
            (run.params, config.use_attention)
        }
    };
    let n = a.samples.min(ds.samples.len());
    let b = benchmark_alignment(&ds.samples[..n], &params, &ds.vocab, use_attention, a.repeats)?;
    write!(out, "{}", report::bench_table(&b)).map_err(io_err)?;
    if let Some(dir) = &a.out {
        write_text(&dir.join("bench.csv"), &report::bench_csv(&b))?;
    }
    Ok(())
}
