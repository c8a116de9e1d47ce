//! Wideband redundant dictionaries (WRDs) and per-subcarrier measurement matrices.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, mismatch, Error, Result};
use crate::frontend::PilotBlock;
use crate::geometry::{near_steering, position_from_polar, relative_distances, steering_at_ratio, ArrayGeometry};
use crate::rng::rng_from_seed;
use crate::CMat;

/// A set of per-subcarrier dictionaries `D[k]`, all `N_AP x V`.
pub trait Dictionary {
    fn atoms(&self) -> &[CMat];

    fn n_atoms(&self) -> usize {
        self.atoms()[0].ncols()
    }

    /// `[D[k] x[:, k]]_k`, mapping a sparse `V x K` code to the spatial-frequency channel.
    fn synthesize(&self, sparse: &CMat) -> Result<CMat> {
        let atoms = self.atoms();
        if sparse.nrows() != self.n_atoms() || sparse.ncols() != atoms.len() {
            return Err(mismatch(format!(
                "sparse code {:?} vs dictionary (V = {}, K = {})",
                sparse.shape(),
                self.n_atoms(),
                atoms.len()
            )));
        }
        let mut out = CMat::zeros(atoms[0].nrows(), atoms.len());
        for (k, d) in atoms.iter().enumerate() {
            out.set_column(k, &(d * sparse.column(k)));
        }
        Ok(out)
    }
}

/// Virtual-angle grid `sin(phi)` of a `rho`-redundant DFT dictionary: `2 v / (rho N)`
/// wrapped into `[-1, 1)`.
pub fn dft_grid(n_ap: usize, redundancy: usize) -> Vec<f64> {
    let n = (redundancy * n_ap) as f64;
    (0..redundancy * n_ap)
        .map(|v| {
            let s = 2.0 * v as f64 / n;
            if s >= 1.0 {
                s - 2.0
            } else {
                s
            }
        })
        .collect()
}

/// Frequency-dependent DFT-based WRD: column `v` at subcarrier `k` is the
/// far-field steering vector of grid point `v` evaluated at `lambda_k`.
#[derive(Debug, Clone)]
pub struct DftWrd {
    pub redundancy: usize,
    pub grid_sin: Vec<f64>,
    atoms: Vec<CMat>,
}

impl Dictionary for DftWrd {
    fn atoms(&self) -> &[CMat] {
        &self.atoms
    }
}

pub fn build_dft_wrd(geometry: &ArrayGeometry, redundancy: usize) -> Result<DftWrd> {
    if redundancy == 0 {
        return Err(domain("redundancy must be >= 1"));
    }
    geometry.validate()?;
    let grid_sin = dft_grid(geometry.n_ap, redundancy);
    let lc = geometry.carrier_wavelength();
    let atoms = (0..geometry.n_subcarriers)
        .map(|k| {
            let ratio = lc / geometry.subcarrier_wavelength(k)?;
            let mut d = CMat::zeros(geometry.n_ap, grid_sin.len());
            for (v, &s) in grid_sin.iter().enumerate() {
                d.set_column(v, &steering_at_ratio(geometry.n_ap, s, ratio));
            }
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DftWrd { redundancy, grid_sin, atoms })
}

/// Frequency-flat baseline: every subcarrier reuses the carrier-frequency dictionary.
pub fn build_flat_dft(geometry: &ArrayGeometry, redundancy: usize) -> Result<DftWrd> {
    build_dft_wrd(&geometry.with_bandwidth(0.0), redundancy)
}

pub const GRID_VERSION: u32 = 1;

/// AoD-distance pairs generating the columns of a learnable WRD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrdGrid {
    pub distances: Vec<f64>,
    pub angles_rad: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridDocument {
    version: u32,
    #[serde(rename = "V")]
    v: usize,
    distances: Vec<f64>,
    angles_rad: Vec<f64>,
}

impl WrdGrid {
    pub fn new(distances: Vec<f64>, angles_rad: Vec<f64>) -> Result<Self> {
        let g = Self { distances, angles_rad };
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.distances.len() != self.angles_rad.len() {
            return Err(mismatch(format!(
                "{} distances vs {} angles",
                self.distances.len(),
                self.angles_rad.len()
            )));
        }
        if self.distances.is_empty() {
            return Err(domain("grid needs at least one atom"));
        }
        if let Some(d) = self.distances.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(domain(format!("grid distance must be positive, got {d}")));
        }
        if let Some(a) = self.angles_rad.iter().find(|a| !(a.abs() < PI / 2.0)) {
            return Err(domain(format!("grid angle must lie in (-pi/2, pi/2), got {a}")));
        }
        Ok(())
    }

    pub fn point(&self, v: usize) -> (f64, f64) {
        position_from_polar(self.distances[v], self.angles_rad[v])
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GridDocument {
            version: GRID_VERSION,
            v: self.len(),
            distances: self.distances.clone(),
            angles_rad: self.angles_rad.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GridDocument = serde_json::from_str(text)?;
        if doc.version != GRID_VERSION {
            return Err(Error::Config(format!("unsupported grid version {}", doc.version)));
        }
        if doc.v != doc.distances.len() {
            return Err(mismatch(format!("V = {} but {} distances", doc.v, doc.distances.len())));
        }
        Self::new(doc.distances, doc.angles_rad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Angles uniform in (-pi/2, pi/2), distances log-uniform in
/// `[min_distance, 2 x Rayleigh distance]`.
pub fn init_learnable_grid(geometry: &ArrayGeometry, v: usize, min_distance_m: f64, seed: u64) -> Result<WrdGrid> {
    if v == 0 {
        return Err(domain("grid needs at least one atom"));
    }
    let hi = 2.0 * geometry.rayleigh_distance();
    if !(min_distance_m > 0.0 && min_distance_m < hi) {
        return Err(domain(format!("distance range [{min_distance_m}, {hi}] is empty")));
    }
    let mut rng = rng_from_seed(seed);
    let (llo, lhi) = (min_distance_m.ln(), hi.ln());
    let mut distances = Vec::with_capacity(v);
    let mut angles = Vec::with_capacity(v);
    let lim = PI / 2.0 * (1.0 - 1e-9);
    for _ in 0..v {
        angles.push(rng.random_range(-lim..lim));
        distances.push(rng.random_range(llo..=lhi).exp());
    }
    WrdGrid::new(distances, angles)
}

/// Data-driven WRD whose columns are near-field steering vectors at the grid points.
#[derive(Debug, Clone)]
pub struct LearnableWrd {
    pub grid: WrdGrid,
    atoms: Vec<CMat>,
}

impl Dictionary for LearnableWrd {
    fn atoms(&self) -> &[CMat] {
        &self.atoms
    }
}

pub fn build_learnable_wrd(geometry: &ArrayGeometry, grid: &WrdGrid) -> Result<LearnableWrd> {
    grid.validate()?;
    let atoms = (0..geometry.n_subcarriers)
        .map(|k| {
            let mut d = CMat::zeros(geometry.n_ap, grid.len());
            for v in 0..grid.len() {
                let (x, y) = grid.point(v);
                d.set_column(v, &near_steering(geometry, x, y, k)?);
            }
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LearnableWrd { grid: grid.clone(), atoms })
}

/// Partial derivatives of the learnable dictionary at subcarrier `k` with respect to
/// each atom's distance and angle: `(dD/dd, dD/dphi)`, column `v` depending only on
/// grid point `v`.
pub fn learnable_atom_derivatives(geometry: &ArrayGeometry, grid: &WrdGrid, k: usize) -> Result<(CMat, CMat)> {
    let lambda = geometry.subcarrier_wavelength(k)?;
    let n = geometry.n_ap;
    let mut dd = CMat::zeros(n, grid.len());
    let mut dphi = CMat::zeros(n, grid.len());
    let (ax0, ay0) = geometry.antenna_position(0);
    for v in 0..grid.len() {
        let (dist, ang) = (grid.distances[v], grid.angles_rad[v]);
        let (x, y) = grid.point(v);
        let rel = relative_distances(geometry, x, y)?;
        let r0 = (x - ax0).hypot(y - ay0);
        let (g0x, g0y) = ((x - ax0) / r0, (y - ay0) / r0);
        for i in 0..n {
            let (ax, ay) = geometry.antenna_position(i);
            let ri = (x - ax).hypot(y - ay);
            // gradient of d_i - d_1 in (x, y)
            let gx = (x - ax) / ri - g0x;
            let gy = (y - ay) / ri - g0y;
            let d_dist = gx * ang.cos() - gy * ang.sin();
            let d_ang = -(gx * ang.sin() + gy * ang.cos()) * dist;
            let k_phase = -2.0 * PI / lambda;
            let atom = Complex64::from_polar(1.0, k_phase * rel[i]);
            let jd = Complex64::new(0.0, k_phase) * atom;
            dd[(i, v)] = jd * d_dist;
            dphi[(i, v)] = jd * d_ang;
        }
    }
    Ok((dd, dphi))
}

/// Per-subcarrier measurement matrices `A[k] = S[k] D[k]`, `G x V`.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub a: Vec<CMat>,
}

impl MeasurementSet {
    pub fn new(a: Vec<CMat>) -> Result<Self> {
        let Some(first) = a.first() else {
            return Err(domain("measurement set needs at least one subcarrier"));
        };
        if a.iter().any(|m| m.shape() != first.shape()) {
            return Err(mismatch("measurement matrices must share one shape"));
        }
        Ok(Self { a })
    }

    pub fn n_measurements(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.a[0].ncols()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.a.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let f = Complex64::from(factor);
        Self { a: self.a.iter().map(|m| m * f).collect() }
    }

    /// Root-mean-square column norm over all subcarriers.
    pub fn rms_column_norm(&self) -> f64 {
        let total: f64 = self.a.iter().map(|m| m.norm_squared()).sum();
        (total / (self.n_atoms() * self.n_subcarriers()) as f64).sqrt()
    }
}

pub fn assemble_measurements<D: Dictionary + ?Sized>(pilots: &PilotBlock, dictionary: &D) -> Result<MeasurementSet> {
    let atoms = dictionary.atoms();
    if atoms.len() != pilots.n_subcarriers() {
        return Err(mismatch(format!(
            "dictionary has {} subcarriers, pilots {}",
            atoms.len(),
            pilots.n_subcarriers()
        )));
    }
    if atoms[0].nrows() != pilots.n_ap() {
        return Err(mismatch(format!("dictionary N_AP {} vs pilots {}", atoms[0].nrows(), pilots.n_ap())));
    }
    MeasurementSet::new(pilots.composed.iter().zip(atoms).map(|(s, d)| s * d).collect())
}
