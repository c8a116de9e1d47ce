//! Persisted channel datasets.
//!
//! A dataset is a binary file plus a JSON manifest next to it (`.json` extension).
//! Binary layout, little-endian: magic `WBDS`, version, sample count, `N_AP`, `K`, `G`
//! (all `u32`), then per sample: path count (`u32`); per path a kind word (0 far,
//! 1 near) and five `f64` (gain re, gain im, delay, then AoD and 0 for far paths or
//! x and y for near paths); then `H` (`N_AP x K`), `Y_clean` and `Y_impaired`
//! (`G x K`), column-major as `f64` pairs. When the front end is not transparent the
//! quantised time samples of every pilot symbol are also exported in the front-end
//! format to a sibling `.adc` file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::frontend::{receive, simulate_rx, write_quantized, QuantizedHeader};
use crate::geometry::{channel_matrix, sample_scatterers, Scatterer, ScattererKind};
use crate::lamp::LampSample;
use crate::rng::{stream_seed, Stream};
use crate::CMat;

use super::pipeline::Scenario;
use super::ExperimentConfig;

pub const DATASET_MAGIC: u32 = u32::from_le_bytes(*b"WBDS");
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub count: usize,
    pub seed: u64,
    /// File name of the binary, relative to the manifest.
    pub data_file: String,
    pub adc_file: Option<String>,
    /// SHA-256 over the config JSON, count, seed and the binary contents.
    pub sha256: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub scatterers: Vec<Scatterer>,
    pub h: CMat,
    pub y_clean: CMat,
    pub y_impaired: CMat,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<DatasetSample>,
}

impl Dataset {
    /// Training pairs of normalised impaired observations and true channels.
    pub fn lamp_samples(&self, scenario: &Scenario) -> Vec<LampSample> {
        self.samples.iter().map(|s| LampSample { y: s.y_impaired.unscale(scenario.scale), h: s.h.clone() }).collect()
    }
}

struct Generated {
    sample: DatasetSample,
    adc: Vec<CMat>,
}

fn generate_one(config: &ExperimentConfig, scenario: &Scenario, seed: u64, i: u64) -> Result<Generated> {
    let scatterers = sample_scatterers(&scenario.geometry, &config.scatterers, stream_seed(seed, Stream::Scatterers, i))?;
    let h = channel_matrix(&scenario.geometry, &scatterers)?.h;
    let rx = simulate_rx(&h, &scenario.pilots, config.dataset_snr_db, stream_seed(seed, Stream::Noise, i))?;
    let received = receive(&rx, &config.quantizer)?;
    Ok(Generated {
        sample: DatasetSample { scatterers, h, y_clean: rx.clean, y_impaired: received.freq },
        adc: received.time_quantized,
    })
}

fn put_u32(buf: &mut Vec<u8>, x: u32) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, x: f64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &CMat) {
    for z in m.iter() {
        put_f64(buf, z.re);
        put_f64(buf, z.im);
    }
}

fn encode(samples: &[DatasetSample], n_ap: usize, k: usize, g: usize) -> Vec<u8> {
    let mut buf = Vec::new();
    for w in [DATASET_MAGIC, DATASET_VERSION, samples.len() as u32, n_ap as u32, k as u32, g as u32] {
        put_u32(&mut buf, w);
    }
    for s in samples {
        put_u32(&mut buf, s.scatterers.len() as u32);
        for p in &s.scatterers {
            let (kind, a, b) = match p.kind {
                ScattererKind::Far { aod_rad } => (0, aod_rad, 0.0),
                ScattererKind::Near { x_m, y_m } => (1, x_m, y_m),
            };
            put_u32(&mut buf, kind);
            for x in [p.gain.re, p.gain.im, p.delay_s, a, b] {
                put_f64(&mut buf, x);
            }
        }
        put_matrix(&mut buf, &s.h);
        put_matrix(&mut buf, &s.y_clean);
        put_matrix(&mut buf, &s.y_impaired);
    }
    buf
}

fn content_hash(config: &ExperimentConfig, count: usize, seed: u64, data: &[u8]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update((count as u64).to_le_bytes());
    h.update(seed.to_le_bytes());
    h.update(data);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("json")
}

/// Draws `count` samples at `config.dataset_snr_db` on the config's base geometry and
/// writes them to `path` (plus manifest and, for an impaired front end, the ADC
/// export). Sample `i` only depends on `seed` and `i`.
pub fn gen_dataset(config: &ExperimentConfig, count: usize, seed: u64, path: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    if count == 0 {
        return Err(domain("dataset needs at least one sample"));
    }
    let scenario = Scenario::new(config, config.geometry)?;
    let threads = config.resolved_threads()?;
    let generated: Vec<Generated> = super::with_threads(threads, || {
        (0..count as u64).into_par_iter().map(|i| generate_one(config, &scenario, seed, i)).collect::<Result<Vec<_>>>()
    })??;
    let (adc, samples): (Vec<Vec<CMat>>, Vec<DatasetSample>) = generated.into_iter().map(|g| (g.adc, g.sample)).unzip();
    let geometry = config.geometry;
    let data = encode(&samples, geometry.n_ap, geometry.n_subcarriers, config.pilots.slots);
    let sha256 = content_hash(config, count, seed, &data)?;
    std::fs::write(path, &data)?;
    let file_name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let adc_file = if config.quantizer.is_transparent() {
        None
    } else {
        let adc_path = path.with_extension("adc");
        let blocks: Vec<CMat> = adc.into_iter().flatten().collect();
        let header = QuantizedHeader {
            n_ap: geometry.n_ap as u32,
            n_subcarriers: geometry.n_subcarriers as u32,
            n_slots: blocks.len() as u32,
            oversampling: config.quantizer.oversampling as u32,
            bits: config.quantizer.bits.unwrap_or(0),
        };
        let mut out = BufWriter::new(File::create(&adc_path)?);
        write_quantized(&mut out, &header, &blocks)?;
        out.flush()?;
        Some(file_name(&adc_path))
    };
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        count,
        seed,
        data_file: file_name(path),
        adc_file,
        sha256,
        config: config.clone(),
    };
    std::fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

struct Cursor<'a> {
    data: &'a [u8],
    offset: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.offset + N;
        let bytes = self
            .data
            .get(self.offset..end)
            .ok_or_else(|| Error::Decode { offset: self.offset, reason: "truncated dataset".into() })?;
        self.offset = end;
        Ok(bytes.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<CMat> {
        let mut m = CMat::zeros(rows, cols);
        for z in m.iter_mut() {
            *z = Complex64::new(self.f64()?, self.f64()?);
        }
        Ok(m)
    }
}

/// Reads a dataset and checks it against the manifest hash.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(manifest_path(path))?)?;
    let data = std::fs::read(path)?;
    let expected = content_hash(&manifest.config, manifest.count, manifest.seed, &data)?;
    if expected != manifest.sha256 {
        return Err(Error::Decode { offset: 0, reason: "content hash does not match the manifest".into() });
    }
    let mut c = Cursor { data: &data, offset: 0 };
    if c.u32()? != DATASET_MAGIC {
        return Err(Error::Decode { offset: 0, reason: "bad magic".into() });
    }
    let version = c.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Decode { offset: 4, reason: format!("unsupported version {version}") });
    }
    let count = c.u32()? as usize;
    let (n_ap, k, g) = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let n_paths = c.u32()? as usize;
        let mut scatterers = Vec::with_capacity(n_paths);
        for _ in 0..n_paths {
            let at = c.offset;
            let kind = c.u32()?;
            let (re, im, delay, a, b) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?, c.f64()?);
            let gain = Complex64::new(re, im);
            scatterers.push(match kind {
                0 => Scatterer::far(gain, delay, a),
                1 => Scatterer::near(gain, delay, a, b),
                other => return Err(Error::Decode { offset: at, reason: format!("unknown path kind {other}") }),
            });
        }
        let h = c.matrix(n_ap, k)?;
        let y_clean = c.matrix(g, k)?;
        let y_impaired = c.matrix(g, k)?;
        samples.push(DatasetSample { scatterers, h, y_clean, y_impaired });
    }
    if c.offset != data.len() {
        return Err(Error::Decode { offset: c.offset, reason: "trailing bytes".into() });
    }
    Ok(Dataset { manifest, samples })
}
