//! Python bindings. Complex matrices cross the boundary as row-major nested lists
//! of `complex`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use wbce::estimators::{shrinkage_mmse as mmse, BernoulliGaussianPrior};
use wbce::feedback::{decode_sparse as decode, encode_csi as encode, read_blob, write_blob, FeedbackCodebook as Codebook};
use wbce::harness::{self, DictionaryChoice, EstimatorChoice, Pipeline, Scheme};
use wbce::lamp::{gradient_probe as probe, OptimizerKind, TrainSchedule};
use wbce::CMat;

fn err(e: wbce::Error) -> PyErr {
    match e {
        wbce::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_rows(m: &CMat) -> Vec<Vec<Complex64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: Vec<Vec<Complex64>>) -> PyResult<CMat> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(CMat::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

fn to_py_json(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn estimator_choice(name: &str) -> PyResult<EstimatorChoice> {
    match name.replace('-', "_").as_str() {
        "somp" => Ok(EstimatorChoice::Somp),
        "gmmv_amp" => Ok(EstimatorChoice::GmmvAmp),
        "gmmv_lamp" => Ok(EstimatorChoice::GmmvLamp),
        other => Err(PyValueError::new_err(format!("unknown estimator {other:?}"))),
    }
}

fn scheme(name: &str) -> PyResult<Scheme> {
    Scheme::ALL
        .into_iter()
        .find(|s| serde_json::to_value(s).ok().and_then(|v| v.as_str().map(|x| x == name)).unwrap_or(false))
        .ok_or_else(|| PyValueError::new_err(format!("unknown scheme {name:?}")))
}

#[pyclass(module = "wbce", frozen, skip_from_py_object)]
#[derive(Clone)]
struct ArrayGeometry(wbce::geometry::ArrayGeometry);

#[pymethods]
impl ArrayGeometry {
    #[new]
    fn new(n_ap: usize, carrier_freq_hz: f64, bandwidth_hz: f64, n_subcarriers: usize) -> PyResult<Self> {
        wbce::geometry::ArrayGeometry::new(n_ap, carrier_freq_hz, bandwidth_hz, n_subcarriers).map(Self).map_err(err)
    }

    #[getter]
    fn n_ap(&self) -> usize {
        self.0.n_ap
    }

    #[getter]
    fn carrier_freq_hz(&self) -> f64 {
        self.0.carrier_freq_hz
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.0.bandwidth_hz
    }

    #[getter]
    fn n_subcarriers(&self) -> usize {
        self.0.n_subcarriers
    }

    fn rayleigh_distance(&self) -> f64 {
        self.0.rayleigh_distance()
    }

    fn subcarrier_freq(&self, k: usize) -> PyResult<f64> {
        self.0.subcarrier_freq(k).map_err(err)
    }

    fn far_steering(&self, aod_rad: f64, k: usize) -> PyResult<Vec<Complex64>> {
        Ok(wbce::geometry::far_steering(&self.0, aod_rad, k).map_err(err)?.iter().copied().collect())
    }

    fn near_steering(&self, x_m: f64, y_m: f64, k: usize) -> PyResult<Vec<Complex64>> {
        Ok(wbce::geometry::near_steering(&self.0, x_m, y_m, k).map_err(err)?.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "ArrayGeometry(n_ap={}, carrier_freq_hz={}, bandwidth_hz={}, n_subcarriers={})",
            self.0.n_ap, self.0.carrier_freq_hz, self.0.bandwidth_hz, self.0.n_subcarriers
        )
    }
}

#[pyclass(module = "wbce", skip_from_py_object)]
#[derive(Clone)]
struct ExperimentConfig(harness::ExperimentConfig);

#[pymethods]
impl ExperimentConfig {
    /// Defaults, or the given JSON document layered over them.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let c = match json {
            Some(text) => harness::ExperimentConfig::from_json(text).map_err(err)?,
            None => harness::ExperimentConfig::default(),
        };
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let c = harness::ExperimentConfig::load(&path).map_err(err)?;
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry(self.0.geometry)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn trials(&self) -> usize {
        self.0.trials
    }
}

#[pyclass(module = "wbce", frozen)]
struct Dataset(harness::Dataset);

impl Dataset {
    fn sample(&self, i: usize) -> PyResult<&harness::DatasetSample> {
        self.0.samples.get(i).ok_or_else(|| PyValueError::new_err(format!("sample {i} out of range 0..{}", self.0.samples.len())))
    }
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        harness::load_dataset(&path).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.samples.len()
    }

    #[getter]
    fn sha256(&self) -> String {
        self.0.manifest.sha256.clone()
    }

    #[getter]
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig(self.0.manifest.config.clone())
    }

    /// `N_AP x K` channel of sample `i`.
    fn channel(&self, i: usize) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(to_rows(&self.sample(i)?.h))
    }

    /// `G x K` received block of sample `i`.
    #[pyo3(signature = (i, clean = false))]
    fn observation(&self, i: usize, clean: bool) -> PyResult<Vec<Vec<Complex64>>> {
        let s = self.sample(i)?;
        Ok(to_rows(if clean { &s.y_clean } else { &s.y_impaired }))
    }

    /// Scatterer counts `(far, near)` of sample `i`.
    fn path_counts(&self, i: usize) -> PyResult<(usize, usize)> {
        let s = self.sample(i)?;
        let near = s.scatterers.iter().filter(|p| p.is_near()).count();
        Ok((s.scatterers.len() - near, near))
    }
}

#[pyclass(module = "wbce", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct FeedbackCodebook(Codebook);

#[pymethods]
impl FeedbackCodebook {
    #[new]
    fn new(support_size: usize, coeff_bits: u32, v_total: usize, k_total: usize) -> PyResult<Self> {
        Codebook::new(support_size, coeff_bits, v_total, k_total).map(Self).map_err(err)
    }

    fn bit_budget(&self) -> usize {
        self.0.bit_budget()
    }
}

/// Writes a dataset and returns its manifest as a dict.
#[pyfunction]
fn gen_dataset(py: Python<'_>, config: &ExperimentConfig, count: usize, seed: u64, path: PathBuf) -> PyResult<Py<PyAny>> {
    let manifest = py.detach(|| harness::gen_dataset(&config.0, count, seed, &path)).map_err(err)?;
    to_py_json(py, &manifest)
}

/// Runs the sweep, writes its CSV and returns the records as dicts.
#[pyfunction]
fn run_sweep(py: Python<'_>, config: &ExperimentConfig) -> PyResult<Py<PyAny>> {
    let report = py.detach(|| harness::run_sweep(&config.0)).map_err(err)?;
    for f in &report.failures {
        let warn = py.import("warnings")?;
        warn.call_method1("warn", (format!("cell {} / {} at {} dB failed: {}", f.estimator, f.dictionary, f.snr_db, f.message),))?;
    }
    to_py_json(py, &report.records)
}

/// Per-sample linear NMSE of an estimator on a dataset, using the dataset's config.
#[pyfunction]
#[pyo3(signature = (dataset, estimator = "gmmv_amp", dictionary = 0, checkpoint = None, clean = false))]
fn estimate(py: Python<'_>, dataset: &Dataset, estimator: &str, dictionary: usize, checkpoint: Option<PathBuf>, clean: bool) -> PyResult<Vec<f64>> {
    let config = &dataset.0.manifest.config;
    let choice = config.dictionaries.get(dictionary).ok_or_else(|| PyValueError::new_err(format!("dictionary {dictionary} out of range")))?;
    let kind = estimator_choice(estimator)?;
    py.detach(|| {
        let lamp = checkpoint.map(|p| harness::load_lamp(&p)).transpose()?;
        Pipeline::new(config, choice, kind, lamp.as_ref())?.nmse_per_sample(&dataset.0, clean)
    })
    .map_err(err)
}

/// Trains on all but the last `validation` samples, saves the checkpoint (plus its
/// `.json` manifest) and returns the per-layer validation NMSE.
#[pyfunction]
#[pyo3(signature = (dataset, path, validation, steps = 100, learning_rate = 1e-3, batch_size = 200, seed = 0, dictionary = 0, probe = true))]
#[allow(clippy::too_many_arguments)]
fn train_lamp(
    py: Python<'_>,
    dataset: &Dataset,
    path: PathBuf,
    validation: usize,
    steps: usize,
    learning_rate: f64,
    batch_size: usize,
    seed: u64,
    dictionary: usize,
    probe: bool,
) -> PyResult<Vec<f64>> {
    let config = &dataset.0.manifest.config;
    let choice: &DictionaryChoice =
        config.dictionaries.get(dictionary).ok_or_else(|| PyValueError::new_err(format!("dictionary {dictionary} out of range")))?;
    let schedule = TrainSchedule {
        steps_per_stage: steps,
        learning_rate,
        batch_size,
        optimizer: OptimizerKind::Adam,
        run_gradient_probe: probe,
        ..TrainSchedule::default()
    };
    py.detach(|| {
        let report = harness::train_on_dataset(config, &dataset.0, choice, validation, &schedule, seed)?;
        harness::save_lamp(&path, &report, &schedule, seed)?;
        Ok(report.layer_nmse)
    })
    .map_err(err)
}

/// Row-wise Bernoulli-Gaussian MMSE estimate and the active-row posterior probability.
#[pyfunction]
fn shrinkage_mmse(row: Vec<Complex64>, gamma: f64, epsilon: f64, noise: Vec<f64>) -> PyResult<(Vec<Complex64>, f64)> {
    let prior = BernoulliGaussianPrior::new(gamma, epsilon).map_err(err)?;
    mmse(&row, &prior, &noise).map_err(err)
}

/// Uniform `2^bits`-level quantiser over the block range; `None` passes through.
#[pyfunction]
#[pyo3(signature = (samples, bits = None))]
fn quantize(samples: Vec<Vec<Complex64>>, bits: Option<u32>) -> PyResult<Vec<Vec<Complex64>>> {
    Ok(to_rows(&wbce::frontend::quantize(&from_rows(samples)?, bits).map_err(err)?))
}

/// Length-prefixed feedback frame of a `V x K` sparse code.
#[pyfunction]
fn encode_csi<'py>(py: Python<'py>, sparse: Vec<Vec<Complex64>>, codebook: &FeedbackCodebook) -> PyResult<Bound<'py, PyBytes>> {
    let bits = encode(&from_rows(sparse)?, &codebook.0).map_err(err)?;
    Ok(PyBytes::new(py, &write_blob(&bits)))
}

#[pyfunction]
fn decode_csi(blob: &[u8], codebook: &FeedbackCodebook) -> PyResult<Vec<Vec<Complex64>>> {
    let bits = read_blob(blob, &codebook.0).map_err(err)?;
    Ok(to_rows(&decode(&bits).map_err(err)?))
}

#[pyfunction]
fn flop_count(scheme_name: &str, g: u64, v: u64, k: u64, n_ap: u64, iterations: u64) -> PyResult<u64> {
    Ok(harness::flop_count(scheme(scheme_name)?, g, v, k, n_ap, iterations))
}

#[pyfunction]
fn complexity_report(py: Python<'_>, config: &ExperimentConfig) -> PyResult<Py<PyAny>> {
    to_py_json(py, &harness::complexity_report(&config.0))
}

/// Worst relative finite-difference error per parameter class on the probe network.
#[pyfunction]
#[pyo3(signature = (learnable = false, seed = 0))]
fn gradient_probe(learnable: bool, seed: u64) -> PyResult<Vec<(String, f64)>> {
    let report = probe(learnable, seed).map_err(err)?;
    Ok(report.worst.into_iter().map(|(c, e)| (format!("{c:?}"), e)).collect())
}

#[pymodule]
#[pyo3(name = "wbce")]
pub fn wbce_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ArrayGeometry>()?;
    m.add_class::<ExperimentConfig>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<FeedbackCodebook>()?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(train_lamp, m)?)?;
    m.add_function(wrap_pyfunction!(shrinkage_mmse, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(encode_csi, m)?)?;
    m.add_function(wrap_pyfunction!(decode_csi, m)?)?;
    m.add_function(wrap_pyfunction!(flop_count, m)?)?;
    m.add_function(wrap_pyfunction!(complexity_report, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_probe, m)?)?;
    Ok(())
}
