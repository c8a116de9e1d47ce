//! Monte-Carlo sweeps over (array size, bandwidth, SNR, estimator, dictionary).
//!
//! Trial `t` draws its scatterers from `stream(seed, Scatterers, t)` and its noise
//! from `stream(seed, Noise, t)`, the same for every cell, so cells are compared on
//! common random numbers and any trial can be replayed alone. Trials run in parallel;
//! per-trial results are collected in trial order and summed sequentially, so the
//! output does not depend on the thread count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frontend::{receive, simulate_rx};
use crate::geometry::{channel_matrix, sample_scatterers, ArrayGeometry};
use crate::lamp::LampParams;
use crate::metrics::{nmse, to_db};
use crate::rng::{stream_seed, Stream};

use super::pipeline::{load_lamp, Estimator, PreparedDictionary, Scenario};
use super::{with_threads, ExperimentConfig};

/// Bumped whenever the column set or its meaning changes.
pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const METRICS_COLUMNS: [&str; 10] =
    ["estimator", "dictionary", "snr_db", "bandwidth_hz", "n_ap", "g", "nmse_db", "trials", "wall_time_s", "seed"];

/// One CSV row. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub estimator: String,
    pub dictionary: String,
    pub snr_db: f64,
    pub bandwidth_hz: f64,
    pub n_ap: usize,
    pub g: usize,
    /// Trial-averaged NMSE (linear mean) in dB.
    pub nmse_db: f64,
    pub trials: usize,
    /// Mean estimator time per trial, or 0 when timing is off.
    pub wall_time_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub estimator: String,
    pub dictionary: String,
    pub snr_db: f64,
    pub bandwidth_hz: f64,
    pub n_ap: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<CellFailure>,
    pub output: Option<PathBuf>,
}

struct Pair {
    estimator: String,
    dictionary: usize,
    resolved: std::result::Result<Estimator, String>,
}

type TrialCells = Vec<Option<std::result::Result<(f64, f64), String>>>;

fn run_trial(
    config: &ExperimentConfig,
    scenario: &Scenario,
    dictionaries: &[std::result::Result<PreparedDictionary, String>],
    pairs: &[Pair],
    t: u64,
) -> std::result::Result<TrialCells, String> {
    let geometry = &scenario.geometry;
    let scatterers = sample_scatterers(geometry, &config.scatterers, stream_seed(config.seed, Stream::Scatterers, t)).map_err(|e| e.to_string())?;
    let h = channel_matrix(geometry, &scatterers).map_err(|e| e.to_string())?.h;
    let mut cells = Vec::with_capacity(config.snr_db.len() * pairs.len());
    for &snr in &config.snr_db {
        let received = simulate_rx(&h, &scenario.pilots, snr, stream_seed(config.seed, Stream::Noise, t))
            .and_then(|rx| receive(&rx, &config.quantizer))
            .map_err(|e| e.to_string())?;
        for pair in pairs {
            let (Ok(est), Ok(dict)) = (&pair.resolved, &dictionaries[pair.dictionary]) else {
                cells.push(None);
                continue;
            };
            let start = config.record_wall_time.then(Instant::now);
            let out = est.channel(&received.freq, scenario.scale, dict).and_then(|h_est| nmse(&h_est, &h));
            let secs = start.map_or(0.0, |s| s.elapsed().as_secs_f64());
            cells.push(Some(out.map(|e| (e, secs)).map_err(|e| e.to_string())));
        }
    }
    Ok(cells)
}

fn sweep_geometry(config: &ExperimentConfig, geometry: ArrayGeometry, lamp: &Option<std::result::Result<LampParams, String>>, report: &mut SweepReport) -> Result<()> {
    let scenario = Scenario::new(config, geometry)?;
    let fallback_grid = lamp.as_ref().and_then(|r| r.as_ref().ok()).and_then(|p| p.grid.as_ref());
    let dictionaries: Vec<_> = config
        .dictionaries
        .iter()
        .map(|d| scenario.prepare(config, d, fallback_grid).map_err(|e| e.to_string()))
        .collect();
    let mut pairs = Vec::new();
    for &est in &config.estimators {
        for (di, dict) in dictionaries.iter().enumerate() {
            let resolved = match (dict, lamp, est) {
                (Err(e), _, _) => Err(e.clone()),
                (_, Some(Err(e)), super::EstimatorChoice::GmmvLamp) => Err(e.clone()),
                (Ok(d), lamp, est) => {
                    let ckpt = lamp.as_ref().and_then(|r| r.as_ref().ok());
                    Estimator::resolve(est, config, d, ckpt).map_err(|e| e.to_string())
                }
            };
            pairs.push(Pair { estimator: est.label().to_string(), dictionary: di, resolved });
        }
    }
    let trials: Vec<std::result::Result<TrialCells, String>> =
        (0..config.trials as u64).into_par_iter().map(|t| run_trial(config, &scenario, &dictionaries, &pairs, t)).collect();

    let mut idx = 0;
    for &snr in &config.snr_db {
        for pair in &pairs {
            let dict_label = config.dictionaries[pair.dictionary].label();
            let fail = |message: String| CellFailure {
                estimator: pair.estimator.clone(),
                dictionary: dict_label.clone(),
                snr_db: snr,
                bandwidth_hz: geometry.bandwidth_hz,
                n_ap: geometry.n_ap,
                message,
            };
            let mut acc = (0.0, 0.0);
            let mut failure = None;
            for trial in &trials {
                let cell = match trial {
                    Err(e) => Err(e.clone()),
                    Ok(cells) => match &cells[idx] {
                        None => Err(pair.resolved.as_ref().err().cloned().unwrap_or_else(|| "dictionary unavailable".into())),
                        Some(r) => r.clone(),
                    },
                };
                match cell {
                    Ok((e, s)) => {
                        acc.0 += e;
                        acc.1 += s;
                    }
                    Err(m) => {
                        failure = Some(m);
                        break;
                    }
                }
            }
            idx += 1;
            let n = config.trials as f64;
            let nmse_db = to_db(acc.0 / n);
            match failure {
                Some(m) => report.failures.push(fail(m)),
                None if !nmse_db.is_finite() => report.failures.push(fail(format!("non-finite NMSE ({nmse_db})"))),
                None => report.records.push(MetricsRecord {
                    estimator: pair.estimator.clone(),
                    dictionary: dict_label,
                    snr_db: snr,
                    bandwidth_hz: geometry.bandwidth_hz,
                    n_ap: geometry.n_ap,
                    g: config.pilots.slots,
                    nmse_db,
                    trials: config.trials,
                    wall_time_s: acc.1 / n,
                    seed: config.seed,
                }),
            }
        }
    }
    Ok(())
}

/// Evaluates every cell without writing anything. Cells whose setup or estimation
/// fails are listed in `failures` instead of aborting the sweep.
pub fn evaluate_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let lamp = config.lamp_checkpoint.as_ref().map(|p| load_lamp(p).map_err(|e| format!("checkpoint {}: {e}", p.display())));
    with_threads(config.resolved_threads()?, || {
        let mut report = SweepReport::default();
        for geometry in config.geometries() {
            sweep_geometry(config, geometry, &lamp, &mut report)?;
        }
        Ok(report)
    })?
}

/// Evaluates the sweep and writes its CSV to the resolved output path.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    let mut report = evaluate_sweep(config)?;
    let path = config.resolved_output();
    write_metrics_csv(&path, &report.records)?;
    report.output = Some(path);
    Ok(report)
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(METRICS_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
