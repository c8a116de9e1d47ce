//! Dataset-level estimation and training, shared by the CLI and the bindings.

use std::path::Path;

use crate::error::{domain, Result};
use crate::lamp::{layer_nmse_trace, save_checkpoint, train_lamp, CheckpointManifest, LampParams, LampProblem, TrainOutcome, TrainSchedule};
use crate::metrics::nmse;
use crate::CMat;

use super::dataset::{Dataset, DatasetSample};
use super::pipeline::{Estimator, PreparedDictionary, Scenario};
use super::{DictionaryChoice, EstimatorChoice, ExperimentConfig};

/// Scenario, dictionary and estimator for one dataset configuration.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub scenario: Scenario,
    pub dictionary: PreparedDictionary,
    pub estimator: Estimator,
}

impl Pipeline {
    /// A learnable dictionary takes its grid from the checkpoint when it carries one.
    pub fn new(config: &ExperimentConfig, choice: &DictionaryChoice, estimator: EstimatorChoice, checkpoint: Option<&LampParams>) -> Result<Self> {
        let scenario = Scenario::new(config, config.geometry)?;
        let dictionary = scenario.prepare(config, choice, checkpoint.and_then(|p| p.grid.as_ref()))?;
        let estimator = Estimator::resolve(estimator, config, &dictionary, checkpoint)?;
        Ok(Self { scenario, dictionary, estimator })
    }

    fn observation(sample: &DatasetSample, clean: bool) -> &CMat {
        if clean {
            &sample.y_clean
        } else {
            &sample.y_impaired
        }
    }

    /// Sparse `V x K` estimate of one sample.
    pub fn sparse(&self, sample: &DatasetSample, clean: bool) -> Result<CMat> {
        let y = Self::observation(sample, clean).unscale(self.scenario.scale);
        self.estimator.sparse(&y, &self.dictionary.measurements)
    }

    /// Channel estimate of one sample.
    pub fn channel(&self, sample: &DatasetSample, clean: bool) -> Result<CMat> {
        self.estimator.channel(Self::observation(sample, clean), self.scenario.scale, &self.dictionary)
    }

    /// Linear NMSE per sample.
    pub fn nmse_per_sample(&self, dataset: &Dataset, clean: bool) -> Result<Vec<f64>> {
        dataset.samples.iter().map(|s| nmse(&self.channel(s, clean)?, &s.h)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    /// Validation NMSE after each layer of the returned network.
    pub layer_nmse: Vec<f64>,
    pub dataset_hash: String,
}

/// Trains a `config.layers`-layer network on all but the last `validation` samples.
/// A learnable dictionary choice trains its grid as well.
pub fn train_on_dataset(
    config: &ExperimentConfig,
    dataset: &Dataset,
    choice: &DictionaryChoice,
    validation: usize,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainReport> {
    let n = dataset.samples.len();
    if validation == 0 || validation >= n {
        return Err(domain(format!("validation split {validation} must lie in 1..{n}")));
    }
    let p = Pipeline::new(config, choice, EstimatorChoice::GmmvLamp, None)?;
    let Estimator::GmmvLamp { params } = p.estimator else {
        unreachable!("resolve returns the requested estimator")
    };
    let (problem, init) = match &p.dictionary.grid {
        Some(grid) => {
            let problem = LampProblem::learnable(p.scenario.geometry, p.scenario.sensing())?;
            let init = LampParams::init_for(&problem, config.layers, &params.prior(), Some(grid.clone()))?;
            (problem, init)
        }
        None => (p.scenario.lamp_problem(&p.dictionary)?, *params),
    };
    let samples = dataset.lamp_samples(&p.scenario);
    let (train, val) = samples.split_at(n - validation);
    let outcome = train_lamp(train, val, &problem, init, schedule, seed)?;
    let layer_nmse = layer_nmse_trace(val, &problem, &outcome.params)?;
    Ok(TrainReport { outcome, layer_nmse, dataset_hash: dataset.manifest.sha256.clone() })
}

/// Writes the checkpoint to `path` and its manifest next to it with a `.json`
/// extension, the layout [`super::load_lamp`] reads.
pub fn save_lamp(path: &Path, report: &TrainReport, schedule: &TrainSchedule, seed: u64) -> Result<()> {
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let manifest = CheckpointManifest::new(&report.outcome.params, schedule, seed, report.dataset_hash.clone());
    save_checkpoint(&report.outcome.params, &manifest, path, &path.with_extension("json"))
}
