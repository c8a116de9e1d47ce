//! Per-geometry setup shared by datasets, sweeps and the CLI: pilots, dictionaries,
//! normalised measurement operators and the estimator dispatch.

use std::path::Path;

use crate::dictionary::{
    assemble_measurements, build_dft_wrd, build_flat_dft, build_learnable_wrd, init_learnable_grid, Dictionary, MeasurementSet,
    WrdGrid,
};
use crate::error::{mismatch, Result};
use crate::estimators::{gmmv_amp, somp, BernoulliGaussianPrior, GmmvAmpConfig};
use crate::frontend::{gen_pilots, PilotBlock};
use crate::geometry::ArrayGeometry;
use crate::lamp::{lamp_forward, load_checkpoint, synthesize, LampParams, LampProblem};
use crate::rng::{stream_seed, Stream};
use crate::CMat;

use super::{DictionaryChoice, EstimatorChoice, ExperimentConfig};

/// Observations and operators are divided by this factor before estimation so the
/// measurement matrices have unit-order columns for any pilot power.
/// It is the RMS Frobenius norm of the sensing matrices `S[k]`, which equals the
/// expected column norm of `S[k] d` for any unit-modulus atom `d`.
pub fn sensing_scale(pilots: &PilotBlock) -> f64 {
    let total: f64 = pilots.composed.iter().map(|s| s.norm_squared()).sum();
    (total / pilots.n_subcarriers() as f64).sqrt()
}

/// Bernoulli-Gaussian prior matched to the channel power: about two active atoms per
/// path, with the active-atom variance chosen so `E|H|^2 = 1 / N_AP` per entry.
pub fn auto_prior(n_paths: usize, n_ap: usize, n_atoms: usize) -> BernoulliGaussianPrior {
    let gamma = (2.0 * n_paths as f64 / n_atoms as f64).min(0.5);
    BernoulliGaussianPrior { gamma, epsilon: 1.0 / (n_ap as f64 * gamma * n_atoms as f64) }
}

/// One array configuration with its fixed pilot block.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub pilots: PilotBlock,
    pub scale: f64,
}

impl Scenario {
    /// Pilots depend only on the config seed, so every dataset and sweep of one config
    /// shares them.
    pub fn new(config: &ExperimentConfig, geometry: ArrayGeometry) -> Result<Self> {
        let pilots = gen_pilots(&geometry, config.pilots.slots, config.pilots.rf_chains, stream_seed(config.seed, Stream::Pilots, 0))?;
        let scale = sensing_scale(&pilots);
        Ok(Self { geometry, pilots, scale })
    }

    /// Normalised sensing matrices `S[k] / scale`.
    pub fn sensing(&self) -> Vec<CMat> {
        self.pilots.composed.iter().map(|s| s.unscale(self.scale)).collect()
    }

    pub fn lamp_problem(&self, dictionary: &PreparedDictionary) -> Result<LampProblem> {
        LampProblem::fixed(self.geometry, self.sensing(), dictionary.atoms.clone())
    }

    /// Builds the dictionary and its normalised measurement set. A learnable grid comes
    /// from `grid_path`, else from `fallback_grid`, else from a seeded random draw.
    pub fn prepare(&self, config: &ExperimentConfig, choice: &DictionaryChoice, fallback_grid: Option<&WrdGrid>) -> Result<PreparedDictionary> {
        let (atoms, grid) = match choice {
            DictionaryChoice::Dft { redundancy } => (build_dft_wrd(&self.geometry, *redundancy)?.atoms().to_vec(), None),
            DictionaryChoice::Flat { redundancy } => (build_flat_dft(&self.geometry, *redundancy)?.atoms().to_vec(), None),
            DictionaryChoice::Learnable { atoms, grid_path } => {
                let grid = match (grid_path, fallback_grid) {
                    (Some(p), _) => WrdGrid::load(p)?,
                    (None, Some(g)) => g.clone(),
                    (None, None) => {
                        let d_min = config.scatterers.min_distance_m.min(self.geometry.rayleigh_distance());
                        init_learnable_grid(&self.geometry, *atoms, d_min, stream_seed(config.seed, Stream::Grid, 0))?
                    }
                };
                if grid.len() != *atoms {
                    return Err(mismatch(format!("grid has {} points, dictionary declares {atoms}", grid.len())));
                }
                (build_learnable_wrd(&self.geometry, &grid)?.atoms().to_vec(), Some(grid))
            }
        };
        let measurements = assemble_measurements(&self.pilots, &RawAtoms(&atoms))?.scaled(1.0 / self.scale);
        Ok(PreparedDictionary { label: choice.label(), atoms, measurements, grid })
    }
}

struct RawAtoms<'a>(&'a [CMat]);

impl Dictionary for RawAtoms<'_> {
    fn atoms(&self) -> &[CMat] {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct PreparedDictionary {
    pub label: String,
    pub atoms: Vec<CMat>,
    /// `A[k] = S[k] D[k] / scale`.
    pub measurements: MeasurementSet,
    pub grid: Option<WrdGrid>,
}

/// A configured estimator, ready to run on normalised observations.
#[derive(Debug, Clone)]
pub enum Estimator {
    Somp { sparsity: usize },
    GmmvAmp { prior: BernoulliGaussianPrior, config: GmmvAmpConfig },
    GmmvLamp { params: Box<LampParams> },
}

impl Estimator {
    /// Resolves `choice` for `dictionary`. GMMV-LAMP uses `checkpoint` when given and
    /// otherwise its untrained initialisation with `config.layers` layers.
    pub fn resolve(
        choice: EstimatorChoice,
        config: &ExperimentConfig,
        dictionary: &PreparedDictionary,
        checkpoint: Option<&LampParams>,
    ) -> Result<Self> {
        let n_ap = dictionary.atoms[0].nrows();
        let prior = config.prior.unwrap_or_else(|| auto_prior(config.scatterers.n_paths(), n_ap, dictionary.measurements.n_atoms()));
        Ok(match choice {
            EstimatorChoice::Somp => Self::Somp { sparsity: config.sparsity() },
            EstimatorChoice::GmmvAmp => Self::GmmvAmp { prior, config: config.amp },
            EstimatorChoice::GmmvLamp => {
                let params = match checkpoint {
                    Some(p) => p.clone(),
                    None => LampParams::init(&dictionary.measurements.a, config.layers, &prior, None)?,
                };
                Self::GmmvLamp { params: Box::new(params) }
            }
        })
    }

    /// Sparse estimate `V x K` from the normalised observation `y / scale`.
    pub fn sparse(&self, y: &CMat, m: &MeasurementSet) -> Result<CMat> {
        match self {
            Self::Somp { sparsity } => somp(y, m, *sparsity),
            Self::GmmvAmp { prior, config } => gmmv_amp(y, m, prior, config),
            Self::GmmvLamp { params } => {
                let shape = params.shape();
                if (shape.g, shape.v, shape.k) != (m.n_measurements(), m.n_atoms(), m.n_subcarriers()) {
                    return Err(mismatch(format!(
                        "network is G = {}, V = {}, K = {}; operators are G = {}, V = {}, K = {}",
                        shape.g,
                        shape.v,
                        shape.k,
                        m.n_measurements(),
                        m.n_atoms(),
                        m.n_subcarriers()
                    )));
                }
                Ok(lamp_forward(y, &m.a, params)?.estimate)
            }
        }
    }

    /// Channel estimate `N_AP x K` from the raw received block.
    pub fn channel(&self, y_raw: &CMat, scale: f64, dictionary: &PreparedDictionary) -> Result<CMat> {
        let x = self.sparse(&y_raw.unscale(scale), &dictionary.measurements)?;
        Ok(synthesize(&dictionary.atoms, &x))
    }
}

/// Loads a checkpoint whose manifest sits next to it with a `.json` extension.
pub fn load_lamp(path: &Path) -> Result<LampParams> {
    Ok(load_checkpoint(path, &path.with_extension("json"))?.0)
}
