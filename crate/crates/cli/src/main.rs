use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wbce::feedback::{decode_sparse, encode_csi, write_blob, FeedbackCodebook};
use wbce::harness::{
    complexity_report, gen_dataset, load_dataset, load_lamp, run_sweep, save_lamp, train_on_dataset, with_threads, Dataset,
    DictionaryChoice, EstimatorChoice, ExperimentConfig, Pipeline,
};
use wbce::lamp::{synthesize, OptimizerKind, StageRecord, TrainSchedule};
use wbce::metrics::{nmse, to_db};

#[derive(Parser)]
#[command(name = "wbce", version, about = "Wideband hybrid-field channel estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset of scatterers, channels and received pilots.
    GenDataset {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate every channel of a dataset and report per-sample NMSE.
    Estimate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimatorArg::GmmvAmp)]
        estimator: EstimatorArg,
        /// Index into the config's dictionary list.
        #[arg(long, default_value_t = 0)]
        dictionary: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use the unimpaired observations instead of the front-end output.
        #[arg(long)]
        clean: bool,
        /// Per-sample CSV; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the unrolled network layer by layer on a dataset.
    TrainLamp {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint binary; the manifest is written next to it as `.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        dictionary: usize,
        /// Samples held out at the end of the dataset.
        #[arg(long, default_value_t = 500)]
        validation: usize,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, value_enum)]
        optimizer: Option<OptimizerArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_probe: bool,
    },
    /// Run the SNR / bandwidth / array-size sweep and write the metrics CSV.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compress estimated sparse CSI into fixed-budget bit vectors and measure the loss.
    Feedback {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Retained rows S.
        #[arg(long, default_value_t = 8)]
        support: usize,
        /// Bits per real coefficient Q_f.
        #[arg(long, default_value_t = 4)]
        bits: u32,
        #[arg(long, value_enum, default_value_t = EstimatorArg::GmmvAmp)]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = 0)]
        dictionary: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Concatenated length-prefixed frames.
        #[arg(long)]
        blobs: Option<PathBuf>,
    },
    /// Print closed-form operation counts for the configured dimensions.
    Complexity {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Somp,
    GmmvAmp,
    GmmvLamp,
}

impl From<EstimatorArg> for EstimatorChoice {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Somp => EstimatorChoice::Somp,
            EstimatorArg::GmmvAmp => EstimatorChoice::GmmvAmp,
            EstimatorArg::GmmvLamp => EstimatorChoice::GmmvLamp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Gd,
    Adam,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let config = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn pick_dictionary(config: &ExperimentConfig, index: usize) -> Result<&DictionaryChoice> {
    match config.dictionaries.get(index) {
        Some(d) => Ok(d),
        None => bail!("dictionary index {index} out of range, config lists {}", config.dictionaries.len()),
    }
}

fn csv_writer(output: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match output {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// The dataset's own config supplies the geometry and pilots; the command-line
/// config only contributes estimator settings when given.
fn dataset_config(dataset: &Dataset, overrides: Option<&Path>) -> Result<ExperimentConfig> {
    let mut config = dataset.manifest.config.clone();
    if let Some(p) = overrides {
        let c = load_config(Some(p))?;
        config.dictionaries = c.dictionaries;
        config.amp = c.amp;
        config.layers = c.layers;
        config.somp_sparsity = c.somp_sparsity;
        config.prior = c.prior;
    }
    Ok(config)
}

fn pipeline(config: &ExperimentConfig, dictionary: usize, estimator: EstimatorArg, checkpoint: Option<&Path>) -> Result<Pipeline> {
    let choice = pick_dictionary(config, dictionary)?;
    let lamp = match (estimator, checkpoint) {
        (EstimatorArg::GmmvLamp, Some(p)) => Some(load_lamp(p).with_context(|| format!("loading checkpoint {}", p.display()))?),
        (_, Some(_)) => bail!("--checkpoint only applies to gmmv-lamp"),
        _ => None,
    };
    Ok(Pipeline::new(config, choice, estimator.into(), lamp.as_ref())?)
}

#[derive(Serialize)]
struct EstimateSummary {
    estimator: &'static str,
    dictionary: String,
    samples: usize,
    nmse_db: f64,
}

#[derive(Serialize)]
struct SampleRow {
    sample: usize,
    nmse_db: f64,
}

fn estimate(
    config: Option<&Path>,
    dataset: &Path,
    estimator: EstimatorArg,
    dictionary: usize,
    checkpoint: Option<&Path>,
    clean: bool,
    output: Option<&Path>,
) -> Result<()> {
    let data = load_dataset(dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let config = dataset_config(&data, config)?;
    let p = pipeline(&config, dictionary, estimator, checkpoint)?;
    let errors = p.nmse_per_sample(&data, clean)?;
    let mut w = csv_writer(output)?;
    for (i, e) in errors.iter().enumerate() {
        w.serialize(SampleRow { sample: i, nmse_db: to_db(*e) })?;
    }
    w.flush()?;
    let summary = EstimateSummary {
        estimator: EstimatorChoice::from(estimator).label(),
        dictionary: p.dictionary.label.clone(),
        samples: errors.len(),
        nmse_db: to_db(errors.iter().sum::<f64>() / errors.len() as f64),
    };
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    checkpoint: PathBuf,
    initial_validation_nmse_db: f64,
    final_validation_nmse_db: f64,
    fell_back: bool,
    layer_nmse_db: Vec<f64>,
    stages: Vec<StageRecord>,
}

fn train(config: Option<&Path>, dataset: &Path, out: &Path, dictionary: usize, validation: usize, schedule: TrainSchedule, seed: u64) -> Result<()> {
    let data = load_dataset(dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let config = dataset_config(&data, config)?;
    let choice = pick_dictionary(&config, dictionary)?;
    let report = train_on_dataset(&config, &data, choice, validation, &schedule, seed)?;
    save_lamp(out, &report, &schedule, seed)?;
    print_json(&TrainSummary {
        checkpoint: out.to_path_buf(),
        initial_validation_nmse_db: to_db(report.outcome.initial_validation_loss),
        final_validation_nmse_db: to_db(report.outcome.final_validation_loss),
        fell_back: report.outcome.fell_back,
        layer_nmse_db: report.layer_nmse.into_iter().map(to_db).collect(),
        stages: report.outcome.stages,
    })
}

fn sweep(config: Option<&Path>, output: Option<PathBuf>, threads: Option<usize>) -> Result<()> {
    let mut config = load_config(config)?;
    if let Some(o) = output {
        config.output = o;
    }
    if threads.is_some() {
        config.threads = threads;
    }
    let report = run_sweep(&config)?;
    for f in &report.failures {
        eprintln!(
            "cell failed: estimator={} dictionary={} snr_db={} bandwidth_hz={} n_ap={}: {}",
            f.estimator, f.dictionary, f.snr_db, f.bandwidth_hz, f.n_ap, f.message
        );
    }
    if let Some(path) = &report.output {
        eprintln!("wrote {} rows to {}", report.records.len(), path.display());
    }
    if report.records.is_empty() && !report.failures.is_empty() {
        bail!("every sweep cell failed");
    }
    Ok(())
}

#[derive(Serialize)]
struct FeedbackSummary {
    samples: usize,
    support: usize,
    coeff_bits: u32,
    bits_per_frame: usize,
    estimate_nmse_db: f64,
    feedback_nmse_db: f64,
}

#[allow(clippy::too_many_arguments)]
fn feedback(
    config: Option<&Path>,
    dataset: &Path,
    support: usize,
    bits: u32,
    estimator: EstimatorArg,
    dictionary: usize,
    checkpoint: Option<&Path>,
    blobs: Option<&Path>,
) -> Result<()> {
    let data = load_dataset(dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let config = dataset_config(&data, config)?;
    let p = pipeline(&config, dictionary, estimator, checkpoint)?;
    let m = &p.dictionary.measurements;
    let codebook = FeedbackCodebook::new(support, bits, m.n_atoms(), m.n_subcarriers())?;
    let mut out = Vec::new();
    let (mut est_total, mut fb_total) = (0.0, 0.0);
    for s in &data.samples {
        let x = p.sparse(s, false)?;
        est_total += nmse(&synthesize(&p.dictionary.atoms, &x), &s.h)?;
        let frame = encode_csi(&x, &codebook)?;
        fb_total += nmse(&synthesize(&p.dictionary.atoms, &decode_sparse(&frame)?), &s.h)?;
        out.extend(write_blob(&frame));
    }
    if let Some(path) = blobs {
        fs::write(path, &out).with_context(|| format!("writing {}", path.display()))?;
    }
    let n = data.samples.len() as f64;
    print_json(&FeedbackSummary {
        samples: data.samples.len(),
        support,
        coeff_bits: bits,
        bits_per_frame: codebook.bit_budget(),
        estimate_nmse_db: to_db(est_total / n),
        feedback_nmse_db: to_db(fb_total / n),
    })
}

fn complexity(config: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let config = load_config(config)?;
    let mut w = csv_writer(output)?;
    for row in complexity_report(&config) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn schedule_from(steps: Option<usize>, lr: Option<f64>, batch: Option<usize>, optimizer: Option<OptimizerArg>, no_probe: bool) -> TrainSchedule {
    let mut s = TrainSchedule { optimizer: OptimizerKind::Adam, ..TrainSchedule::default() };
    if let Some(x) = steps {
        s.steps_per_stage = x;
    }
    if let Some(x) = lr {
        s.learning_rate = x;
    }
    if let Some(x) = batch {
        s.batch_size = x;
    }
    if let Some(o) = optimizer {
        s.optimizer = match o {
            OptimizerArg::Gd => OptimizerKind::Gd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        };
    }
    s.run_gradient_probe = !no_probe;
    s
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDataset { config, count, seed, out } => {
            let config = load_config(config.as_deref())?;
            let threads = config.resolved_threads()?;
            if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let manifest = with_threads(threads, || gen_dataset(&config, count, seed, &out))??;
            eprintln!("wrote {} samples to {} (sha256 {})", manifest.count, out.display(), manifest.sha256);
            Ok(())
        }
        Command::Estimate { config, dataset, estimator, dictionary, checkpoint, clean, output } => {
            estimate(config.as_deref(), &dataset, estimator, dictionary, checkpoint.as_deref(), clean, output.as_deref())
        }
        Command::TrainLamp { config, dataset, out, dictionary, validation, steps, lr, batch, optimizer, seed, no_probe } => {
            let schedule = schedule_from(steps, lr, batch, optimizer, no_probe);
            train(config.as_deref(), &dataset, &out, dictionary, validation, schedule, seed)
        }
        Command::Sweep { config, output, threads } => sweep(config.as_deref(), output, threads),
        Command::Feedback { config, dataset, support, bits, estimator, dictionary, checkpoint, blobs } => {
            feedback(config.as_deref(), &dataset, support, bits, estimator, dictionary, checkpoint.as_deref(), blobs.as_deref())
        }
        Command::Complexity { config, output } => complexity(config.as_deref(), output.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
