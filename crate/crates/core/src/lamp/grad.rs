//! Reverse-mode gradients of the LAMP loss.
//!
//! Complex gradients follow `G_z = dL/dRe(z) + j dL/dIm(z)`, so for `w = M z`
//! the input gradient is `M^H G_w` and the matrix gradient `G_w z^H`.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{forward_tape, synthesize, LampParams, LampProblem, LampSample, Operators};
use crate::dictionary::{learnable_atom_derivatives, WrdGrid};
use crate::error::{domain, Error, Result};
use crate::estimators::shrinkage::{EXPONENT_CLAMP, NOISE_FLOOR};
use crate::rng::{complex_normal, rng_from_seed};
use crate::CMat;

/// Samples per reduction chunk; fixed so sums do not depend on the thread count.
const REDUCE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamClass {
    B,
    Gamma,
    Epsilon,
    GMap,
    FMap,
    GridDistance,
    GridAngle,
}

impl ParamClass {
    pub const ALL: [ParamClass; 7] = [
        ParamClass::B,
        ParamClass::Gamma,
        ParamClass::Epsilon,
        ParamClass::GMap,
        ParamClass::FMap,
        ParamClass::GridDistance,
        ParamClass::GridAngle,
    ];
}

/// Gradient with the layout of [`LampParams`]. `a` and `d` hold the raw
/// gradients with respect to `A[k]` and `D[k]` while the grid is being learned.
#[derive(Debug, Clone, PartialEq)]
pub struct LampGrads {
    pub b: Vec<Vec<CMat>>,
    pub theta_gamma: f64,
    pub theta_epsilon: f64,
    pub g: Vec<CMat>,
    pub f: Vec<CMat>,
    pub grid_distance: Vec<f64>,
    pub grid_angle: Vec<f64>,
    pub a: Vec<CMat>,
    pub d: Vec<CMat>,
}

impl LampGrads {
    pub fn zeros_like(params: &LampParams, ops: Option<&Operators>) -> Self {
        let zero = |m: &CMat| CMat::zeros(m.nrows(), m.ncols());
        let grid_len = params.grid.as_ref().map_or(0, WrdGrid::len);
        Self {
            b: params.b.iter().map(|l| l.iter().map(zero).collect()).collect(),
            theta_gamma: 0.0,
            theta_epsilon: 0.0,
            g: params.g.iter().map(zero).collect(),
            f: params.f.iter().map(zero).collect(),
            grid_distance: vec![0.0; grid_len],
            grid_angle: vec![0.0; grid_len],
            a: ops.map_or(Vec::new(), |o| o.a.iter().map(zero).collect()),
            d: ops.map_or(Vec::new(), |o| o.atoms.iter().map(zero).collect()),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (x, y) in self.b.iter_mut().flatten().zip(other.b.iter().flatten()) {
            *x += y;
        }
        self.theta_gamma += other.theta_gamma;
        self.theta_epsilon += other.theta_epsilon;
        for (x, y) in self.g.iter_mut().zip(&other.g).chain(self.f.iter_mut().zip(&other.f)) {
            *x += y;
        }
        for (x, y) in self.a.iter_mut().zip(&other.a).chain(self.d.iter_mut().zip(&other.d)) {
            *x += y;
        }
        for (x, y) in self.grid_distance.iter_mut().zip(&other.grid_distance) {
            *x += y;
        }
        for (x, y) in self.grid_angle.iter_mut().zip(&other.grid_angle) {
            *x += y;
        }
    }

    fn scale(&mut self, s: f64) {
        let c = Complex64::from(s);
        self.b.iter_mut().flatten().for_each(|m| *m *= c);
        self.g.iter_mut().chain(self.f.iter_mut()).chain(self.a.iter_mut()).chain(self.d.iter_mut()).for_each(|m| *m *= c);
        self.theta_gamma *= s;
        self.theta_epsilon *= s;
        self.grid_distance.iter_mut().chain(self.grid_angle.iter_mut()).for_each(|x| *x *= s);
    }

    /// Real coordinates in the order of [`visit_params`].
    pub fn for_each(&mut self, mut f: impl FnMut(ParamClass, Option<usize>, &mut f64)) {
        visit(
            &mut self.b,
            &mut self.theta_gamma,
            &mut self.theta_epsilon,
            &mut self.g,
            &mut self.f,
            &mut self.grid_distance,
            &mut self.grid_angle,
            &mut f,
        );
    }
}

/// Visits every real coordinate of the parameters with its class and 0-based layer.
pub fn visit_params(params: &mut LampParams, mut f: impl FnMut(ParamClass, Option<usize>, &mut f64)) {
    let (mut dist, mut ang) = match params.grid.take() {
        Some(g) => (g.distances, g.angles_rad),
        None => (Vec::new(), Vec::new()),
    };
    let had_grid = !dist.is_empty();
    visit(&mut params.b, &mut params.theta_gamma, &mut params.theta_epsilon, &mut params.g, &mut params.f, &mut dist, &mut ang, &mut f);
    if had_grid {
        params.grid = Some(WrdGrid { distances: dist, angles_rad: ang });
    }
}

#[allow(clippy::too_many_arguments)]
fn visit(
    b: &mut [Vec<CMat>],
    tg: &mut f64,
    te: &mut f64,
    g: &mut [CMat],
    fm: &mut [CMat],
    dist: &mut [f64],
    ang: &mut [f64],
    f: &mut impl FnMut(ParamClass, Option<usize>, &mut f64),
) {
    for (t, layer) in b.iter_mut().enumerate() {
        for m in layer.iter_mut() {
            for z in m.iter_mut() {
                f(ParamClass::B, Some(t), &mut z.re);
                f(ParamClass::B, Some(t), &mut z.im);
            }
        }
    }
    f(ParamClass::Gamma, None, tg);
    f(ParamClass::Epsilon, None, te);
    for (class, maps) in [(ParamClass::GMap, g), (ParamClass::FMap, fm)] {
        for (t, m) in maps.iter_mut().enumerate() {
            for z in m.iter_mut() {
                f(class, Some(t), &mut z.re);
                f(class, Some(t), &mut z.im);
            }
        }
    }
    for x in dist.iter_mut() {
        f(ParamClass::GridDistance, None, x);
    }
    for x in ang.iter_mut() {
        f(ParamClass::GridAngle, None, x);
    }
}

/// Loss and gradient of one sample through the first `layers` layers.
fn sample_gradient(sample: &LampSample, ops: &Operators, params: &LampParams, layers: usize, track_dict: bool) -> Result<(f64, LampGrads)> {
    let tape = forward_tape(&sample.y, &ops.a, params, layers)?;
    let mut grads = LampGrads::zeros_like(params, track_dict.then_some(ops));
    let (g_count, k_count) = sample.y.shape();
    let v_count = ops.a[0].ncols();
    let gf = g_count as f64;
    let h_final = tape.last().map(|l| l.h.clone()).unwrap_or_else(|| CMat::zeros(v_count, k_count));
    let est = synthesize(&ops.atoms, &h_final);
    let denom = sample.h.norm_squared();
    if denom == 0.0 {
        return Err(domain("NMSE undefined for an all-zero reference"));
    }
    let diff = est - &sample.h;
    let loss = diff.norm_squared() / denom;
    let g_est = diff * Complex64::from(2.0 / denom);

    let mut g_h = CMat::zeros(v_count, k_count);
    for k in 0..k_count {
        g_h.set_column(k, &(ops.atoms[k].adjoint() * g_est.column(k)));
        if track_dict {
            grads.d[k] += g_est.column(k) * h_final.column(k).adjoint();
        }
    }
    let mut g_v = CMat::zeros(g_count, k_count);
    let eps = params.epsilon();

    for (t, tp) in tape.iter().enumerate().rev() {
        // V_t = V_bar + V_{t-1} F_t
        grads.f[t] += tp.v_prev.adjoint() * &g_v;
        let mut g_vprev = &g_v * params.f[t].adjoint();

        // v_bar[k] = y[k] - A[k] h[k] + b[k] v_{t-1}[k]
        let mut g_hhat = g_h;
        let mut g_b = nalgebra::DVector::<Complex64>::zeros(k_count);
        for k in 0..k_count {
            let gk = g_v.column(k);
            let back = ops.a[k].adjoint() * gk;
            let mut col = g_hhat.column_mut(k);
            col -= back;
            if track_dict {
                grads.a[k] -= gk * tp.h.column(k).adjoint();
            }
            g_b[k] = tp.v_prev.column(k).dotc(&gk);
            let mut gp = g_vprev.column_mut(k);
            gp += gk * tp.b[k].conj();
        }

        // b = G_t b_bar
        let b_bar_c = nalgebra::DVector::from_iterator(k_count, tp.b_bar.iter().map(|&x| Complex64::from(x)));
        grads.g[t] += &g_b * b_bar_c.transpose();
        let g_bbar: Vec<f64> = (params.g[t].adjoint() * &g_b).iter().map(|z| z.re).collect();

        // b_bar[k] = c_k sum_v phi_v / G
        let c = &tp.kernel.wiener;
        let p = &tp.kernel.precision;
        let phi_sum: f64 = tp.phi.iter().sum();
        let mut g_c: Vec<f64> = g_bbar.iter().map(|gb| gb * phi_sum / gf).collect();
        let g_phisum: f64 = g_bbar.iter().zip(c).map(|(gb, ck)| gb * ck / gf).sum();

        // h[v, k] = phi_v c_k x[v, k]
        let mut g_x = CMat::zeros(v_count, k_count);
        let mut g_l = vec![0.0; k_count];
        let mut g_p = vec![0.0; k_count];
        for v in 0..v_count {
            let phi = tp.phi[v];
            let mut g_phi = g_phisum;
            for k in 0..k_count {
                let x = tp.pseudo[(v, k)];
                let gh = g_hhat[(v, k)];
                g_phi += (gh.conj() * x).re * c[k];
                g_c[k] += (gh.conj() * x).re * phi;
                g_x[(v, k)] = gh * (phi * c[k]);
            }
            // phi = 1 / (1 + exp(e)), e = -theta_gamma + sum_k l_k - sum_k p_k |x_k|^2
            let g_e = if tp.exponent[v].abs() > EXPONENT_CLAMP { 0.0 } else { -phi * (1.0 - phi) * g_phi };
            grads.theta_gamma -= g_e;
            for k in 0..k_count {
                let x = tp.pseudo[(v, k)];
                g_l[k] += g_e;
                g_p[k] -= g_e * x.norm_sqr();
                g_x[(v, k)] -= x * (2.0 * g_e * p[k]);
            }
        }

        // c, p, l as functions of (epsilon, sigma^2[k])
        let mut g_eps = 0.0;
        for k in 0..k_count {
            let raw = tp.noise[k];
            let s = raw.max(NOISE_FLOOR);
            let se = s + eps;
            g_eps += g_c[k] * s / (se * se) + g_p[k] / (se * se) + g_l[k] / se;
            if raw > NOISE_FLOOR {
                let g_s = -g_c[k] * eps / (se * se) - g_p[k] * eps * (2.0 * s + eps) / (s * se).powi(2) - g_l[k] * p[k];
                let mut gp = g_vprev.column_mut(k);
                gp += tp.v_prev.column(k) * Complex64::from(2.0 * g_s / gf);
            }
        }
        grads.theta_epsilon += g_eps * eps;

        // x[k] = h_{t-1}[k] + B_t[k]^H v_{t-1}[k]
        for k in 0..k_count {
            let gx = g_x.column(k);
            grads.b[t][k] += tp.v_prev.column(k) * gx.adjoint();
            let mut gp = g_vprev.column_mut(k);
            gp += &params.b[t][k] * gx;
        }
        g_h = g_x;
        g_v = g_vprev;
    }
    Ok((loss, grads))
}

/// Converts accumulated `A`/`D` gradients into grid-coordinate gradients.
fn finish_grid(grads: &mut LampGrads, problem: &LampProblem, params: &LampParams) -> Result<()> {
    let Some(grid) = &params.grid else {
        return Ok(());
    };
    for k in 0..problem.sensing.len() {
        let g_d = &grads.d[k] + problem.sensing[k].adjoint() * &grads.a[k];
        let (dd, dphi) = learnable_atom_derivatives(&problem.geometry, grid, k)?;
        for v in 0..grid.len() {
            grads.grid_distance[v] += g_d.column(v).dotc(&dd.column(v)).re;
            grads.grid_angle[v] += g_d.column(v).dotc(&dphi.column(v)).re;
        }
    }
    Ok(())
}

/// Mean NMSE loss over `samples` for the first `layers` layers and its gradient.
/// Grid gradients are computed only when `learn_grid` is set and the parameters
/// carry a grid; otherwise they are zero.
pub fn loss_and_gradient(
    samples: &[LampSample],
    problem: &LampProblem,
    params: &LampParams,
    layers: usize,
    learn_grid: bool,
) -> Result<(f64, LampGrads)> {
    if samples.is_empty() {
        return Err(domain("empty sample set"));
    }
    let ops = problem.operators(params)?;
    let track = learn_grid && params.grid.is_some();
    let partials: Vec<(f64, LampGrads)> = samples
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut acc: Option<(f64, LampGrads)> = None;
            for s in chunk {
                let (l, g) = sample_gradient(s, &ops, params, layers, track)?;
                match acc.as_mut() {
                    None => acc = Some((l, g)),
                    Some((al, ag)) => {
                        *al += l;
                        ag.add_assign(&g);
                    }
                }
            }
            Ok(acc.expect("chunks are non-empty"))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grads) = iter.next().expect("at least one chunk");
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    let n = samples.len() as f64;
    loss /= n;
    grads.scale(1.0 / n);
    if track {
        finish_grid(&mut grads, problem, params)?;
    }
    Ok((loss, grads))
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    /// Worst relative error per parameter class.
    pub worst: Vec<(ParamClass, f64)>,
    pub coordinates: usize,
    pub tolerance: f64,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.worst.iter().all(|(_, e)| *e <= self.tolerance)
    }
}

const PROBE_TOLERANCE: f64 = 1e-4;

/// Checks every gradient coordinate against central finite differences on a small
/// random instance (`G = 4`, `V = 8`, `K = 2`, `T = 2`, two samples), with
/// non-trivial `G_t`, `F_t` and, when `learnable` is set, a learnable grid.
pub fn gradient_probe(learnable: bool, seed: u64) -> Result<ProbeReport> {
    let (g, v, k, t) = (4, 8, 2, 2);
    let n_ap = 6;
    let geometry = crate::geometry::ArrayGeometry::new(n_ap, 70e9, 10e9, k)?;
    let mut rng = rng_from_seed(seed);
    let sensing: Vec<CMat> = (0..k).map(|_| CMat::from_fn(g, n_ap, |_, _| complex_normal(&mut rng, 1.0 / n_ap as f64))).collect();
    let (problem, grid) = if learnable {
        let r = geometry.rayleigh_distance().max(0.01);
        let grid = WrdGrid::new(
            (0..v).map(|i| r * (0.3 + 0.15 * i as f64)).collect(),
            (0..v).map(|i| -1.0 + 0.25 * i as f64).collect(),
        )?;
        (LampProblem::learnable(geometry, sensing)?, Some(grid))
    } else {
        let atoms = (0..k).map(|_| CMat::from_fn(n_ap, v, |_, _| complex_normal(&mut rng, 1.0))).collect();
        (LampProblem::fixed(geometry, sensing, atoms)?, None)
    };
    let prior = crate::estimators::BernoulliGaussianPrior::new(0.3, 0.8)?;
    let mut params = LampParams::init_for(&problem, t, &prior, grid)?;
    for layer in 0..t {
        params.g[layer] += CMat::from_fn(k, k, |_, _| complex_normal(&mut rng, 0.04));
        params.f[layer] = CMat::from_fn(k, k, |_, _| complex_normal(&mut rng, 0.04));
        for m in params.b[layer].iter_mut() {
            *m += CMat::from_fn(g, v, |_, _| complex_normal(&mut rng, 0.01));
        }
    }
    let ops = problem.operators(&params)?;
    let samples: Vec<LampSample> = (0..2)
        .map(|_| {
            let x = CMat::from_fn(v, k, |r, _| if r % 3 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
            let x = x.map(|z| z * complex_normal(&mut rng, 1.0));
            let h = synthesize(&ops.atoms, &x);
            let mut y = CMat::zeros(g, k);
            for kk in 0..k {
                y.set_column(kk, &(&problem.sensing[kk] * h.column(kk)));
            }
            let y = y.map(|z| z + complex_normal(&mut rng, 0.05));
            LampSample { y, h }
        })
        .collect();

    let (_, mut grads) = loss_and_gradient(&samples, &problem, &params, t, learnable)?;
    let mut analytic = Vec::new();
    grads.for_each(|c, _, x| analytic.push((c, *x)));

    let step = 1e-6;
    let mut worst: Vec<(ParamClass, f64)> = Vec::new();
    let mut coordinates = 0;
    for (idx, &(class, a)) in analytic.iter().enumerate() {
        if !learnable && matches!(class, ParamClass::GridDistance | ParamClass::GridAngle) {
            continue;
        }
        let eval = |delta: f64| -> Result<f64> {
            let mut p = params.clone();
            let mut i = 0;
            visit_params(&mut p, |_, _, x| {
                if i == idx {
                    *x += delta;
                }
                i += 1;
            });
            super::evaluate(&samples, &problem, &p, t)
        };
        let fd = (eval(step)? - eval(-step)?) / (2.0 * step);
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        if !err.is_finite() {
            return Err(Error::GradientCheck(format!("non-finite gradient for {class:?}")));
        }
        coordinates += 1;
        match worst.iter_mut().find(|(c, _)| *c == class) {
            Some(entry) => entry.1 = entry.1.max(err),
            None => worst.push((class, err)),
        }
    }
    Ok(ProbeReport { worst, coordinates, tolerance: PROBE_TOLERANCE })
}
