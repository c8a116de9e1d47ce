//! Experiment configuration, datasets, Monte-Carlo sweeps and complexity accounting.

mod complexity;
mod dataset;
mod pipeline;
mod sweep;
mod workflow;

pub use complexity::{complexity_report, flop_count, ComplexityRow, Scheme};
pub use dataset::{gen_dataset, load_dataset, Dataset, DatasetManifest, DatasetSample, DATASET_MAGIC, DATASET_VERSION};
pub use pipeline::{auto_prior, load_lamp, sensing_scale, Estimator, PreparedDictionary, Scenario};
pub use sweep::{evaluate_sweep, run_sweep, write_metrics_csv, CellFailure, MetricsRecord, SweepReport, METRICS_COLUMNS, METRICS_SCHEMA_VERSION};
pub use workflow::{save_lamp, train_on_dataset, Pipeline, TrainReport};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{BernoulliGaussianPrior, GmmvAmpConfig};
use crate::frontend::QuantizerConfig;
use crate::geometry::{ArrayGeometry, ScattererProfile};

/// Overrides the directory of every output file.
pub const ENV_OUTPUT_DIR: &str = "WBCE_OUTPUT_DIR";
/// Overrides the worker thread count.
pub const ENV_THREADS: &str = "WBCE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub slots: usize,
    pub rf_chains: usize,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self { slots: 32, rf_chains: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionaryChoice {
    /// Frequency-dependent DFT WRD with `redundancy * N_AP` atoms.
    Dft { redundancy: usize },
    /// Carrier-frequency DFT dictionary reused on every subcarrier.
    Flat { redundancy: usize },
    /// Near-field grid of `atoms` points, loaded from `grid_path` or drawn at random.
    Learnable {
        atoms: usize,
        #[serde(default)]
        grid_path: Option<PathBuf>,
    },
}

impl DictionaryChoice {
    pub fn label(&self) -> String {
        match self {
            Self::Dft { redundancy } => format!("dft_r{redundancy}"),
            Self::Flat { redundancy } => format!("flat_r{redundancy}"),
            Self::Learnable { atoms, .. } => format!("learnable_v{atoms}"),
        }
    }

    pub fn n_atoms(&self, n_ap: usize) -> usize {
        match self {
            Self::Dft { redundancy } | Self::Flat { redundancy } => redundancy * n_ap,
            Self::Learnable { atoms, .. } => *atoms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Somp,
    GmmvAmp,
    GmmvLamp,
}

impl EstimatorChoice {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Somp => "somp",
            Self::GmmvAmp => "gmmv_amp",
            Self::GmmvLamp => "gmmv_lamp",
        }
    }
}

/// Everything needed to reproduce a dataset or a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: ArrayGeometry,
    pub scatterers: ScattererProfile,
    pub pilots: PilotConfig,
    pub quantizer: QuantizerConfig,
    pub dictionaries: Vec<DictionaryChoice>,
    pub estimators: Vec<EstimatorChoice>,
    /// Residual damping defaults to 0.3 here, not the estimator's own 0.9.
    pub amp: GmmvAmpConfig,
    /// Layers of an untrained GMMV-LAMP network (ignored when a checkpoint is given).
    pub layers: usize,
    /// SOMP iteration count; defaults to the number of paths.
    pub somp_sparsity: Option<usize>,
    /// Bernoulli-Gaussian prior for GMMV-AMP; derived from the geometry when absent.
    pub prior: Option<BernoulliGaussianPrior>,
    /// Binary checkpoint; its manifest sits next to it with a `.json` extension.
    pub lamp_checkpoint: Option<PathBuf>,
    pub snr_db: Vec<f64>,
    /// Bandwidths to sweep; empty means the geometry's own.
    pub bandwidths_hz: Vec<f64>,
    /// Array sizes to sweep; empty means the geometry's own.
    pub n_ap_values: Vec<usize>,
    /// SNR of generated datasets.
    pub dataset_snr_db: f64,
    pub trials: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub threads: Option<usize>,
    /// Record mean per-trial estimator time; left at 0 otherwise so CSVs stay reproducible.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry { n_ap: 128, carrier_freq_hz: 70e9, bandwidth_hz: 10e9, n_subcarriers: 64 },
            scatterers: ScattererProfile::hybrid(3, 3),
            pilots: PilotConfig::default(),
            quantizer: QuantizerConfig::impaired(),
            dictionaries: vec![DictionaryChoice::Dft { redundancy: 4 }],
            estimators: vec![EstimatorChoice::GmmvAmp],
            amp: GmmvAmpConfig { damping: 0.3, ..GmmvAmpConfig::default() },
            layers: 5,
            somp_sparsity: None,
            prior: None,
            lamp_checkpoint: None,
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            bandwidths_hz: Vec::new(),
            n_ap_values: Vec::new(),
            dataset_snr_db: 10.0,
            trials: 100,
            seed: 0,
            output: PathBuf::from("results/sweep.csv"),
            threads: None,
            record_wall_time: false,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        for geometry in self.geometries() {
            geometry.validate()?;
            self.scatterers.validate(&geometry)?;
        }
        self.quantizer.validate()?;
        if self.pilots.slots == 0 || self.pilots.rf_chains == 0 {
            return Err(config_err("pilot slots and RF chains must be >= 1"));
        }
        if self.dictionaries.is_empty() || self.estimators.is_empty() {
            return Err(config_err("need at least one dictionary and one estimator"));
        }
        for d in &self.dictionaries {
            match d {
                DictionaryChoice::Dft { redundancy } | DictionaryChoice::Flat { redundancy } if *redundancy == 0 => {
                    return Err(config_err("dictionary redundancy must be >= 1"));
                }
                DictionaryChoice::Learnable { atoms: 0, .. } => return Err(config_err("learnable dictionary needs atoms")),
                _ => {}
            }
        }
        if !(self.amp.damping > 0.0 && self.amp.damping <= 1.0) {
            return Err(config_err("AMP damping must lie in (0, 1]"));
        }
        if self.somp_sparsity == Some(0) {
            return Err(config_err("SOMP sparsity must be >= 1"));
        }
        if let Some(p) = &self.prior {
            p.validate()?;
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(config_err("SNR grid must be non-empty and free of NaN"));
        }
        if self.dataset_snr_db.is_nan() {
            return Err(config_err("dataset SNR is NaN"));
        }
        if self.trials == 0 {
            return Err(config_err("trials must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(config_err("thread count must be >= 1"));
        }
        Ok(())
    }

    /// Every (N_AP, bandwidth) combination of the sweep, array size outermost.
    pub fn geometries(&self) -> Vec<ArrayGeometry> {
        let n_aps = if self.n_ap_values.is_empty() { vec![self.geometry.n_ap] } else { self.n_ap_values.clone() };
        let bws = if self.bandwidths_hz.is_empty() { vec![self.geometry.bandwidth_hz] } else { self.bandwidths_hz.clone() };
        n_aps
            .iter()
            .flat_map(|&n_ap| bws.iter().map(move |&bw| ArrayGeometry { n_ap, bandwidth_hz: bw, ..self.geometry }))
            .collect()
    }

    pub fn sparsity(&self) -> usize {
        self.somp_sparsity.unwrap_or_else(|| self.scatterers.n_paths())
    }

    /// The configured output path, moved into `$WBCE_OUTPUT_DIR` when set.
    pub fn resolved_output(&self) -> PathBuf {
        resolve_output_path(&self.output)
    }

    /// `$WBCE_THREADS` wins over the config; `None` uses the global pool.
    pub fn resolved_threads(&self) -> Result<Option<usize>> {
        match std::env::var(ENV_THREADS) {
            Ok(v) => {
                let n: usize = v.trim().parse().map_err(|_| config_err(format!("{ENV_THREADS}={v} is not a count")))?;
                if n == 0 {
                    return Err(config_err(format!("{ENV_THREADS} must be >= 1")));
                }
                Ok(Some(n))
            }
            Err(_) => Ok(self.threads),
        }
    }
}

pub fn resolve_output_path(path: &Path) -> PathBuf {
    match std::env::var_os(ENV_OUTPUT_DIR) {
        Some(dir) => Path::new(&dir).join(path.file_name().unwrap_or(path.as_os_str())),
        None => path.to_path_buf(),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| config_err(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.geometry.carrier_freq_hz, 70e9);
        assert_eq!(c.geometry.bandwidth_hz, 10e9);
        assert_eq!((c.geometry.n_subcarriers, c.geometry.n_ap), (64, 128));
        assert_eq!((c.pilots.slots, c.pilots.rf_chains), (32, 2));
        assert_eq!(c.scatterers.n_paths(), 6);
        assert_eq!(c.dictionaries, vec![DictionaryChoice::Dft { redundancy: 4 }]);
        assert_eq!(c.layers, 5);
        assert_eq!((c.amp.iterations, c.amp.damping), (80, 0.3));
        assert_eq!(c.quantizer.bits, Some(2));
        assert_eq!(c.quantizer.iq_gain_error, 0.1);
        assert!((c.quantizer.iq_phase_error_rad - 5f64.to_radians()).abs() < 1e-15);
        assert_eq!(c.snr_db.first(), Some(&-10.0));
        assert_eq!(c.snr_db.last(), Some(&10.0));
    }

    #[test]
    fn json_roundtrip_and_partial_documents() {
        let c = ExperimentConfig { seed: 17, dictionaries: vec![DictionaryChoice::Learnable { atoms: 40, grid_path: None }], ..Default::default() };
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let partial = ExperimentConfig::from_json(r#"{"trials": 3, "estimators": ["somp", "gmmv_lamp"]}"#).unwrap();
        assert_eq!(partial.trials, 3);
        assert_eq!(partial.estimators, vec![EstimatorChoice::Somp, EstimatorChoice::GmmvLamp]);
        assert_eq!(partial.geometry, c.geometry);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"trials": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"unknown_field": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"dictionaries": [{"kind": "dft", "redundancy": 0}]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"pilots": {"slots": 0}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"snr_db": []}"#).is_err());
        let mut c = ExperimentConfig::default();
        c.geometry.n_ap = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_geometries_are_ordered() {
        let c = ExperimentConfig { n_ap_values: vec![16, 32], bandwidths_hz: vec![1e9, 5e9], ..Default::default() };
        let gs: Vec<(usize, f64)> = c.geometries().iter().map(|g| (g.n_ap, g.bandwidth_hz)).collect();
        assert_eq!(gs, vec![(16, 1e9), (16, 5e9), (32, 1e9), (32, 5e9)]);
    }

    #[test]
    fn labels() {
        assert_eq!(DictionaryChoice::Dft { redundancy: 2 }.label(), "dft_r2");
        assert_eq!(DictionaryChoice::Flat { redundancy: 4 }.label(), "flat_r4");
        assert_eq!(EstimatorChoice::GmmvLamp.label(), "gmmv_lamp");
    }
}
