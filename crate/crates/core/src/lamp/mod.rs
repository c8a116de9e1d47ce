//! Unrolled GMMV-LAMP: trainable per-layer matrices `B_t[k]`, a shared
//! Bernoulli-Gaussian prior, learned Onsager map `g_t`, residual momentum map
//! `f_t`, and an optional learnable dictionary grid.

mod checkpoint;
mod grad;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use grad::{gradient_probe, loss_and_gradient, ParamClass, ProbeReport};
pub use train::{train_lamp, OptimizerKind, StageRecord, TrainOutcome, TrainSchedule};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dictionary::{build_learnable_wrd, Dictionary, WrdGrid};
use crate::error::{domain, mismatch, Result};
use crate::estimators::amp::shrink_rows;
use crate::estimators::{AmpState, BernoulliGaussianPrior, ShrinkageKernel};
use crate::geometry::ArrayGeometry;
use crate::metrics::nmse;
use crate::CMat;

/// Activity probability used in place of an initial `gamma = 0`.
pub const GAMMA_INIT_FLOOR: f64 = 1e-3;

/// One training or validation example.
#[derive(Debug, Clone)]
pub struct LampSample {
    /// `G x K` observation.
    pub y: CMat,
    /// `N_AP x K` true channel.
    pub h: CMat,
}

/// Sample-independent operators: the sensing matrices `S[k]` (`G x N_AP`, with any
/// normalisation of the observations already applied) and either a fixed
/// dictionary or a geometry for the learnable grid carried by the parameters.
#[derive(Debug, Clone)]
pub struct LampProblem {
    pub geometry: ArrayGeometry,
    pub sensing: Vec<CMat>,
    pub fixed_atoms: Option<Vec<CMat>>,
}

/// Dictionary and measurement matrices resolved for one parameter set.
#[derive(Debug, Clone)]
pub struct Operators {
    pub atoms: Vec<CMat>,
    pub a: Vec<CMat>,
}

impl LampProblem {
    pub fn fixed(geometry: ArrayGeometry, sensing: Vec<CMat>, atoms: Vec<CMat>) -> Result<Self> {
        let p = Self { geometry, sensing, fixed_atoms: Some(atoms) };
        p.check()?;
        Ok(p)
    }

    pub fn learnable(geometry: ArrayGeometry, sensing: Vec<CMat>) -> Result<Self> {
        let p = Self { geometry, sensing, fixed_atoms: None };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        let k = self.geometry.n_subcarriers;
        if self.sensing.len() != k {
            return Err(mismatch(format!("{} sensing matrices for K = {k}", self.sensing.len())));
        }
        if self.sensing.iter().any(|s| s.ncols() != self.geometry.n_ap || s.nrows() != self.sensing[0].nrows()) {
            return Err(mismatch("sensing matrices must all be G x N_AP"));
        }
        if let Some(atoms) = &self.fixed_atoms {
            if atoms.len() != k || atoms.iter().any(|d| d.nrows() != self.geometry.n_ap || d.ncols() != atoms[0].ncols()) {
                return Err(mismatch("fixed dictionary must hold K matrices of N_AP x V"));
            }
        }
        Ok(())
    }

    pub fn n_measurements(&self) -> usize {
        self.sensing[0].nrows()
    }

    pub fn operators(&self, params: &LampParams) -> Result<Operators> {
        let atoms = match (&params.grid, &self.fixed_atoms) {
            (Some(grid), _) => build_learnable_wrd(&self.geometry, grid)?.atoms().to_vec(),
            (None, Some(atoms)) => atoms.clone(),
            (None, None) => return Err(domain("learnable problem needs parameters with a grid")),
        };
        let a = self.sensing.iter().zip(&atoms).map(|(s, d)| s * d).collect();
        Ok(Operators { atoms, a })
    }
}

/// Trainable state. `gamma = sigmoid(theta_gamma)`, `epsilon = exp(theta_epsilon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LampParams {
    /// `b[t][k]`, each `G x V`.
    pub b: Vec<Vec<CMat>>,
    pub theta_gamma: f64,
    pub theta_epsilon: f64,
    /// `K x K` Onsager maps, `b_t = G_t b_bar_t`.
    pub g: Vec<CMat>,
    /// `K x K` momentum maps, `V_t = V_bar_t + V_{t-1} F_t`.
    pub f: Vec<CMat>,
    pub grid: Option<WrdGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LampShape {
    pub layers: usize,
    pub g: usize,
    pub v: usize,
    pub k: usize,
}

impl LampParams {
    /// `B_t[k] = A[k]`, `G_t = I`, `F_t = 0`; `gamma` is floored at [`GAMMA_INIT_FLOOR`].
    pub fn init(a: &[CMat], layers: usize, prior: &BernoulliGaussianPrior, grid: Option<WrdGrid>) -> Result<Self> {
        prior.validate()?;
        if a.is_empty() {
            return Err(domain("need at least one subcarrier"));
        }
        let k = a.len();
        if let Some(grid) = &grid {
            if grid.len() != a[0].ncols() {
                return Err(mismatch(format!("grid has {} points, A has {} columns", grid.len(), a[0].ncols())));
            }
        }
        let gamma = prior.gamma.clamp(GAMMA_INIT_FLOOR, 1.0 - GAMMA_INIT_FLOOR);
        Ok(Self {
            b: vec![a.to_vec(); layers],
            theta_gamma: (gamma / (1.0 - gamma)).ln(),
            theta_epsilon: prior.epsilon.ln(),
            g: vec![CMat::identity(k, k); layers],
            f: vec![CMat::zeros(k, k); layers],
            grid,
        })
    }

    /// Initialisation for a problem, with `B_t[k]` set from the problem's operators.
    pub fn init_for(problem: &LampProblem, layers: usize, prior: &BernoulliGaussianPrior, grid: Option<WrdGrid>) -> Result<Self> {
        let probe = Self { b: Vec::new(), theta_gamma: 0.0, theta_epsilon: 0.0, g: Vec::new(), f: Vec::new(), grid };
        let ops = problem.operators(&probe)?;
        Self::init(&ops.a, layers, prior, probe.grid)
    }

    pub fn layers(&self) -> usize {
        self.b.len()
    }

    pub fn shape(&self) -> LampShape {
        let first = self.b.first().and_then(|l| l.first());
        LampShape {
            layers: self.layers(),
            g: first.map_or(0, |m| m.nrows()),
            v: first.map_or(0, |m| m.ncols()),
            k: self.g.first().map_or(0, |m| m.nrows()),
        }
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 + (-self.theta_gamma).exp())
    }

    pub fn epsilon(&self) -> f64 {
        self.theta_epsilon.exp()
    }

    pub fn prior(&self) -> BernoulliGaussianPrior {
        BernoulliGaussianPrior { gamma: self.gamma(), epsilon: self.epsilon() }
    }

    fn check(&self, y: &CMat, a: &[CMat], layers: usize) -> Result<()> {
        if layers > self.layers() {
            return Err(domain(format!("requested {layers} layers, parameters hold {}", self.layers())));
        }
        if y.ncols() != a.len() || a.iter().any(|m| m.nrows() != y.nrows()) {
            return Err(mismatch(format!("observation {:?} vs {} measurement matrices", y.shape(), a.len())));
        }
        let k = a.len();
        for t in 0..layers {
            if self.b[t].len() != k || self.b[t].iter().zip(a).any(|(b, a)| b.shape() != a.shape()) {
                return Err(mismatch(format!("layer {} matrices do not match A", t + 1)));
            }
            if self.g[t].shape() != (k, k) || self.f[t].shape() != (k, k) {
                return Err(mismatch(format!("layer {} maps must be {k} x {k}", t + 1)));
            }
        }
        Ok(())
    }
}

/// Everything a layer's backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct LayerTape {
    pub v_prev: CMat,
    pub pseudo: CMat,
    pub noise: Vec<f64>,
    pub kernel: ShrinkageKernel,
    pub exponent: Vec<f64>,
    pub phi: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub b: Vec<Complex64>,
    pub h: CMat,
    pub v: CMat,
}

pub(crate) fn forward_tape(y: &CMat, a: &[CMat], params: &LampParams, layers: usize) -> Result<Vec<LayerTape>> {
    params.check(y, a, layers)?;
    let (g, k_count) = y.shape();
    let v_count = a[0].ncols();
    let prior = params.prior();
    let mut h = CMat::zeros(v_count, k_count);
    let mut v = y.clone();
    let mut tape = Vec::with_capacity(layers);
    for t in 0..layers {
        let mut pseudo = CMat::zeros(v_count, k_count);
        let mut noise = vec![0.0; k_count];
        for k in 0..k_count {
            let vk = v.column(k);
            pseudo.set_column(k, &(h.column(k) + params.b[t][k].adjoint() * vk));
            noise[k] = vk.norm_squared() / g as f64;
        }
        let kernel = ShrinkageKernel::new(&prior, &noise)?;
        let (h_new, b_bar, phi) = shrink_rows(&pseudo, &kernel, g);
        let exponent = (0..v_count)
            .map(|r| {
                let quad: f64 = pseudo.row(r).iter().zip(&kernel.precision).map(|(x, p)| p * x.norm_sqr()).sum();
                kernel.offset - quad
            })
            .collect();
        let b_bar_c = nalgebra::DVector::from_iterator(k_count, b_bar.iter().map(|&x| Complex64::from(x)));
        let b: Vec<Complex64> = (&params.g[t] * b_bar_c).iter().copied().collect();
        let mut v_bar = CMat::zeros(g, k_count);
        for k in 0..k_count {
            v_bar.set_column(k, &(y.column(k) - &a[k] * h_new.column(k) + v.column(k) * b[k]));
        }
        let v_new = v_bar + &v * &params.f[t];
        tape.push(LayerTape {
            v_prev: v,
            pseudo,
            noise,
            kernel,
            exponent,
            phi,
            b_bar,
            b,
            h: h_new.clone(),
            v: v_new.clone(),
        });
        h = h_new;
        v = v_new;
    }
    Ok(tape)
}

/// Result of a forward pass: the final sparse estimate and every layer's iterate.
#[derive(Debug, Clone)]
pub struct LampOutput {
    pub estimate: CMat,
    pub iterates: Vec<AmpState>,
}

/// Runs all layers of `params`. Zero layers return the zero estimate.
pub fn lamp_forward(y: &CMat, a: &[CMat], params: &LampParams) -> Result<LampOutput> {
    lamp_forward_layers(y, a, params, params.layers())
}

pub fn lamp_forward_layers(y: &CMat, a: &[CMat], params: &LampParams, layers: usize) -> Result<LampOutput> {
    let tape = forward_tape(y, a, params, layers)?;
    let estimate = tape.last().map(|l| l.h.clone()).unwrap_or_else(|| CMat::zeros(a.first().map_or(0, |m| m.ncols()), y.ncols()));
    let iterates = tape
        .into_iter()
        .enumerate()
        .map(|(t, l)| AmpState { estimate: l.h, residual: l.v, noise: l.noise, iteration: t + 1 })
        .collect();
    Ok(LampOutput { estimate, iterates })
}

/// `[D[k] x[:, k]]_k`.
pub fn synthesize(atoms: &[CMat], sparse: &CMat) -> CMat {
    let mut out = CMat::zeros(atoms[0].nrows(), atoms.len());
    for (k, d) in atoms.iter().enumerate() {
        out.set_column(k, &(d * sparse.column(k)));
    }
    out
}

/// Batch NMSE of spatial-frequency estimates, averaged in the linear domain.
pub fn loss_nmse(estimates: &[CMat], truths: &[CMat]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(mismatch(format!("{} estimates vs {} references", estimates.len(), truths.len())));
    }
    crate::metrics::mean_nmse(estimates.iter().zip(truths))
}

/// Mean loss of the first `layers` layers over `samples`.
pub fn evaluate(samples: &[LampSample], problem: &LampProblem, params: &LampParams, layers: usize) -> Result<f64> {
    use rayon::prelude::*;
    let ops = problem.operators(params)?;
    let per: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let out = lamp_forward_layers(&s.y, &ops.a, params, layers)?;
            nmse(&synthesize(&ops.atoms, &out.estimate), &s.h)
        })
        .collect::<Result<_>>()?;
    if per.is_empty() {
        return Err(domain("empty sample set"));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Mean NMSE after each layer `1..=T`, linear scale.
pub fn layer_nmse_trace(samples: &[LampSample], problem: &LampProblem, params: &LampParams) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    if samples.is_empty() {
        return Err(domain("empty sample set"));
    }
    let ops = problem.operators(params)?;
    let per: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let out = lamp_forward(&s.y, &ops.a, params)?;
            out.iterates.iter().map(|it| nmse(&synthesize(&ops.atoms, &it.estimate), &s.h)).collect()
        })
        .collect::<Result<_>>()?;
    let mut trace = vec![0.0; params.layers()];
    for row in &per {
        for (acc, x) in trace.iter_mut().zip(row) {
            *acc += x;
        }
    }
    Ok(trace.into_iter().map(|x| x / per.len() as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::MeasurementSet;
    use crate::estimators::{gmmv_amp_trace, GmmvAmpConfig};
    use crate::rng::{complex_normal, rng_from_seed};

    fn random_problem(g: usize, v: usize, k: usize, seed: u64) -> (Vec<CMat>, CMat) {
        let mut rng = rng_from_seed(seed);
        let a: Vec<CMat> = (0..k).map(|_| CMat::from_fn(g, v, |_, _| complex_normal(&mut rng, 1.0 / g as f64))).collect();
        let y = CMat::from_fn(g, k, |_, _| complex_normal(&mut rng, 1.0));
        (a, y)
    }

    #[test]
    fn init_matches_undamped_gmmv_amp() {
        let (a, y) = random_problem(12, 30, 4, 1);
        let prior = BernoulliGaussianPrior::new(0.1, 0.5).unwrap();
        let params = LampParams::init(&a, 6, &prior, None).unwrap();
        let lamp = lamp_forward(&y, &a, &params).unwrap();
        let m = MeasurementSet::new(a).unwrap();
        let amp = gmmv_amp_trace(&y, &m, &prior, &GmmvAmpConfig { iterations: 6, damping: 1.0 }).unwrap();
        for (l, r) in lamp.iterates.iter().zip(&amp) {
            assert!((&l.estimate - &r.estimate).norm() <= 1e-10 * r.estimate.norm().max(1e-300));
            assert!((&l.residual - &r.residual).norm() <= 1e-10 * r.residual.norm());
        }
    }

    #[test]
    fn zero_layers_give_zero() {
        let (a, y) = random_problem(4, 8, 2, 2);
        let params = LampParams::init(&a, 0, &BernoulliGaussianPrior::new(0.5, 1.0).unwrap(), None).unwrap();
        let out = lamp_forward(&y, &a, &params).unwrap();
        assert_eq!(out.estimate, CMat::zeros(8, 2));
        assert!(out.iterates.is_empty());
    }

    #[test]
    fn init_state_and_floor() {
        let (a, _) = random_problem(4, 8, 3, 3);
        let params = LampParams::init(&a, 2, &BernoulliGaussianPrior::new(0.0, 1.0).unwrap(), None).unwrap();
        assert!((params.gamma() - GAMMA_INIT_FLOOR).abs() < 1e-15);
        assert!((params.epsilon() - 1.0).abs() < 1e-15);
        assert_eq!(params.b[1][2], a[2]);
        assert_eq!(params.g[0], CMat::identity(3, 3));
        assert_eq!(params.f[1], CMat::zeros(3, 3));
        assert_eq!(params.shape(), LampShape { layers: 2, g: 4, v: 8, k: 3 });
    }

    #[test]
    fn dimension_errors() {
        let (a, y) = random_problem(4, 8, 2, 4);
        let params = LampParams::init(&a, 2, &BernoulliGaussianPrior::new(0.5, 1.0).unwrap(), None).unwrap();
        assert!(lamp_forward(&CMat::zeros(5, 2), &a, &params).is_err());
        assert!(lamp_forward_layers(&y, &a, &params, 3).is_err());
        let (a2, _) = random_problem(4, 9, 2, 5);
        assert!(lamp_forward(&y, &a2, &params).is_err());
    }

    #[test]
    fn loss_reference_points() {
        let h = CMat::from_fn(3, 2, |i, j| Complex64::new(i as f64 - 1.0, j as f64 + 0.5));
        assert_eq!(loss_nmse(std::slice::from_ref(&h), std::slice::from_ref(&h)).unwrap(), 0.0);
        assert!((loss_nmse(&[CMat::zeros(3, 2)], std::slice::from_ref(&h)).unwrap() - 1.0).abs() < 1e-15);
        let twice = &h * Complex64::from(2.0);
        assert!((loss_nmse(&[twice], std::slice::from_ref(&h)).unwrap() - 1.0).abs() < 1e-15);
        assert!(loss_nmse(std::slice::from_ref(&h), &[CMat::zeros(3, 2)]).is_err());
    }
}
