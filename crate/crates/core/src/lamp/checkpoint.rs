//! Binary parameter planes plus a JSON manifest.
//!
//! Binary layout (little-endian): magic `WBLP`, version, `T`, `G`, `V`, `K`,
//! grid flag (all `u32`), then `f32` planes: for each layer and subcarrier the real
//! and imaginary `G x V` planes of `B_t[k]` (row-major), then per layer the real and
//! imaginary `K x K` planes of `G_t`, then those of `F_t`, then grid distances and
//! angles when the flag is set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{LampParams, LampShape, TrainSchedule};
use crate::dictionary::WrdGrid;
use crate::error::{mismatch, Error, Result};
use crate::CMat;

pub const CHECKPOINT_MAGIC: u32 = u32::from_le_bytes(*b"WBLP");
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub shape: LampShape,
    pub gamma: f64,
    pub epsilon: f64,
    pub has_grid: bool,
    pub schedule: TrainSchedule,
    pub seed: u64,
    pub dataset_hash: String,
}

impl CheckpointManifest {
    pub fn new(params: &LampParams, schedule: &TrainSchedule, seed: u64, dataset_hash: impl Into<String>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            shape: params.shape(),
            gamma: params.gamma(),
            epsilon: params.epsilon(),
            has_grid: params.grid.is_some(),
            schedule: schedule.clone(),
            seed,
            dataset_hash: dataset_hash.into(),
        }
    }
}

fn put_u32(out: &mut impl Write, x: u32) -> Result<()> {
    out.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn put_planes(out: &mut impl Write, m: &CMat) -> Result<()> {
    for part in [|z: &Complex64| z.re, |z: &Complex64| z.im] {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.write_all(&(part(&m[(r, c)]) as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn save_checkpoint(params: &LampParams, manifest: &CheckpointManifest, binary_path: &Path, manifest_path: &Path) -> Result<()> {
    let shape = params.shape();
    if manifest.shape != shape {
        return Err(mismatch("manifest shape differs from parameters"));
    }
    let mut out = BufWriter::new(File::create(binary_path)?);
    for x in [CHECKPOINT_MAGIC, CHECKPOINT_VERSION, shape.layers as u32, shape.g as u32, shape.v as u32, shape.k as u32] {
        put_u32(&mut out, x)?;
    }
    put_u32(&mut out, params.grid.is_some() as u32)?;
    for m in params.b.iter().flatten().chain(&params.g).chain(&params.f) {
        put_planes(&mut out, m)?;
    }
    if let Some(grid) = &params.grid {
        for x in grid.distances.iter().chain(&grid.angles_rad) {
            out.write_all(&(*x as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    std::fs::write(manifest_path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> Reader<R> {
    fn word(&mut self) -> Result<[u8; 4]> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Decode { offset: self.offset, reason: "truncated checkpoint".into() })?;
        self.offset += 4;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.word()?))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.word()?) as f64)
    }

    fn planes(&mut self, rows: usize, cols: usize) -> Result<CMat> {
        let mut m = CMat::zeros(rows, cols);
        for part in 0..2 {
            for r in 0..rows {
                for c in 0..cols {
                    let x = self.f32()?;
                    if part == 0 {
                        m[(r, c)].re = x;
                    } else {
                        m[(r, c)].im = x;
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Loads parameters; the prior comes from the manifest at full precision.
pub fn load_checkpoint(binary_path: &Path, manifest_path: &Path) -> Result<(LampParams, CheckpointManifest)> {
    let manifest: CheckpointManifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    let mut rd = Reader { inner: BufReader::new(File::open(binary_path)?), offset: 0 };
    if rd.u32()? != CHECKPOINT_MAGIC {
        return Err(Error::Decode { offset: 0, reason: "bad magic".into() });
    }
    let version = rd.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Decode { offset: 4, reason: format!("unsupported version {version}") });
    }
    let dims: Vec<usize> = (0..4).map(|_| rd.u32().map(|x| x as usize)).collect::<Result<_>>()?;
    let shape = LampShape { layers: dims[0], g: dims[1], v: dims[2], k: dims[3] };
    let has_grid = rd.u32()? != 0;
    if shape != manifest.shape || has_grid != manifest.has_grid {
        return Err(mismatch("checkpoint header disagrees with manifest"));
    }
    let mut b = Vec::with_capacity(shape.layers);
    for _ in 0..shape.layers {
        b.push((0..shape.k).map(|_| rd.planes(shape.g, shape.v)).collect::<Result<Vec<_>>>()?);
    }
    let g = (0..shape.layers).map(|_| rd.planes(shape.k, shape.k)).collect::<Result<Vec<_>>>()?;
    let f = (0..shape.layers).map(|_| rd.planes(shape.k, shape.k)).collect::<Result<Vec<_>>>()?;
    let grid = if has_grid {
        let d = (0..shape.v).map(|_| rd.f32()).collect::<Result<Vec<_>>>()?;
        let a = (0..shape.v).map(|_| rd.f32()).collect::<Result<Vec<_>>>()?;
        Some(WrdGrid::new(d, a)?)
    } else {
        None
    };
    let mut rest = Vec::new();
    rd.inner.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Decode { offset: rd.offset, reason: "trailing bytes".into() });
    }
    let params = LampParams {
        b,
        theta_gamma: (manifest.gamma / (1.0 - manifest.gamma)).ln(),
        theta_epsilon: manifest.epsilon.ln(),
        g,
        f,
        grid,
    };
    Ok((params, manifest))
}
