//! Pilot broadcast through the analog precoder and the impaired receiver chain.
//!
//! Chain per OFDM pilot symbol `g`:
//! frequency row -> oversampled time samples (ideal band-limited interpolation) ->
//! IQ imbalance -> Q-bit quantiser -> naive de-quantiser (polyphase average + DFT).

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, mismatch, Error, Result};
use crate::geometry::ArrayGeometry;
use crate::rng::{complex_normal, rng_from_seed};
use crate::{CMat, CVec};

/// Hybrid-precoded pilot block for `G` slots.
#[derive(Debug, Clone)]
pub struct PilotBlock {
    /// `F_RF[g]`, `N_AP x N_RF`, entries `exp(j xi) / sqrt(N_AP)`.
    pub precoders: Vec<CMat>,
    /// `s[g, k]` stored as column `k` of an `N_RF x K` matrix per slot.
    pub symbols: Vec<CMat>,
    /// `S[k]`, `G x N_AP`, row `g` equal to `(F_RF[g] s[g, k])^T`.
    pub composed: Vec<CMat>,
}

impl PilotBlock {
    pub fn from_parts(precoders: Vec<CMat>, symbols: Vec<CMat>) -> Result<Self> {
        if precoders.is_empty() || precoders.len() != symbols.len() {
            return Err(mismatch("need one symbol block per precoder"));
        }
        let (n_ap, n_rf) = precoders[0].shape();
        let k_count = symbols[0].ncols();
        for (f, s) in precoders.iter().zip(&symbols) {
            if f.shape() != (n_ap, n_rf) || s.shape() != (n_rf, k_count) {
                return Err(mismatch("inconsistent precoder/symbol shapes"));
            }
        }
        let g_count = precoders.len();
        let composed = (0..k_count)
            .map(|k| {
                let mut s_k = CMat::zeros(g_count, n_ap);
                for g in 0..g_count {
                    let x = &precoders[g] * symbols[g].column(k);
                    s_k.set_row(g, &x.transpose());
                }
                s_k
            })
            .collect();
        Ok(Self { precoders, symbols, composed })
    }

    pub fn n_slots(&self) -> usize {
        self.precoders.len()
    }

    pub fn n_ap(&self) -> usize {
        self.precoders[0].nrows()
    }

    pub fn n_rf(&self) -> usize {
        self.precoders[0].ncols()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.composed.len()
    }
}

/// Random-phase analog precoders with Gaussian baseband pilots.
pub fn gen_pilots(geometry: &ArrayGeometry, g_count: usize, n_rf: usize, seed: u64) -> Result<PilotBlock> {
    if g_count == 0 || n_rf == 0 {
        return Err(domain("need at least one pilot slot and one RF chain"));
    }
    let n_ap = geometry.n_ap;
    let k_count = geometry.n_subcarriers;
    let mut rng = rng_from_seed(seed);
    let amp = 1.0 / (n_ap as f64).sqrt();
    let mut precoders = Vec::with_capacity(g_count);
    let mut symbols = Vec::with_capacity(g_count);
    for _ in 0..g_count {
        precoders.push(CMat::from_fn(n_ap, n_rf, |_, _| {
            Complex64::from_polar(amp, rng.random_range(0.0..2.0 * PI))
        }));
        let mut s = CMat::from_fn(n_rf, k_count, |_, _| complex_normal(&mut rng, 1.0));
        // distinct symbol vectors across subcarriers of a slot; continuous draws
        // collide with probability zero but the rule is cheap to enforce
        for k in 1..k_count {
            while (0..k).any(|j| s.column(j) == s.column(k)) {
                for l in 0..n_rf {
                    s[(l, k)] = complex_normal(&mut rng, 1.0);
                }
            }
        }
        symbols.push(s);
    }
    PilotBlock::from_parts(precoders, symbols)
}

/// Noiseless and noisy frequency-domain pilot observations, `G x K`.
#[derive(Debug, Clone)]
pub struct RxBlocks {
    pub clean: CMat,
    pub noisy: CMat,
    pub noise_power: f64,
}

/// Passes channel `h` (`N_AP x K`) through the pilots and adds AWGN at `snr_db`,
/// where SNR is the mean clean-sample power over the noise power of this sample.
/// `f64::INFINITY` disables noise.
pub fn simulate_rx(h: &CMat, pilots: &PilotBlock, snr_db: f64, seed: u64) -> Result<RxBlocks> {
    let k_count = pilots.n_subcarriers();
    if h.nrows() != pilots.n_ap() || h.ncols() != k_count {
        return Err(mismatch(format!(
            "channel {:?} vs pilots (N_AP = {}, K = {k_count})",
            h.shape(),
            pilots.n_ap()
        )));
    }
    let g_count = pilots.n_slots();
    let mut clean = CMat::zeros(g_count, k_count);
    for k in 0..k_count {
        clean.set_column(k, &(&pilots.composed[k] * h.column(k)));
    }
    if snr_db == f64::INFINITY {
        return Ok(RxBlocks { noisy: clean.clone(), clean, noise_power: 0.0 });
    }
    let signal_power = clean.norm_squared() / clean.len() as f64;
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let mut rng = rng_from_seed(seed);
    let noisy = clean.map(|y| y + complex_normal(&mut rng, noise_power));
    Ok(RxBlocks { clean, noisy, noise_power })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantizerConfig {
    /// ADC resolution; `None` is an ideal (infinite-resolution) converter.
    pub bits: Option<u32>,
    pub oversampling: usize,
    pub iq_gain_error: f64,
    pub iq_phase_error_rad: f64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { bits: None, oversampling: 1, iq_gain_error: 0.0, iq_phase_error_rad: 0.0 }
    }
}

impl QuantizerConfig {
    /// 2-bit ADC, 4x oversampling, 10 % gain and 5 degree phase imbalance.
    pub fn impaired() -> Self {
        Self { bits: Some(2), oversampling: 4, iq_gain_error: 0.1, iq_phase_error_rad: 5f64.to_radians() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.bits {
            if !(1..=16).contains(&q) {
                return Err(domain(format!("quantiser bits must be in 1..=16, got {q}")));
            }
        }
        if !matches!(self.oversampling, 1 | 2 | 4) {
            return Err(domain(format!("oversampling must be 1, 2 or 4, got {}", self.oversampling)));
        }
        Ok(())
    }

    pub fn is_transparent(&self) -> bool {
        self.bits.is_none() && self.oversampling == 1 && self.iq_gain_error == 0.0 && self.iq_phase_error_rad == 0.0
    }
}

fn dft_rows(block: &CMat, inverse: bool) -> CMat {
    let (rows, k_count) = block.shape();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(k_count) } else { planner.plan_fft_forward(k_count) };
    let scale = 1.0 / (k_count as f64).sqrt();
    let mut out = CMat::zeros(rows, k_count);
    let mut buf = vec![Complex64::new(0.0, 0.0); k_count];
    for r in 0..rows {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = block[(r, k)];
        }
        fft.process(&mut buf);
        for (k, b) in buf.iter().enumerate() {
            out[(r, k)] = b * scale;
        }
    }
    out
}

/// Row-wise multiplication by the conjugate-transposed unitary DFT matrix.
pub fn freq_to_time(block: &CMat) -> CMat {
    dft_rows(block, true)
}

/// Row-wise unitary DFT; inverse of [`freq_to_time`].
pub fn time_to_freq(block: &CMat) -> CMat {
    dft_rows(block, false)
}

/// `W`-times oversampled time samples of one frequency row, by zero padding to
/// `W K` bins. Row `w` of the result holds polyphase branch `w`
/// (samples `n W + w`), scaled so branch 0 equals [`freq_to_time`].
pub fn oversample(row: &CVec, w: usize) -> Result<CMat> {
    if !matches!(w, 1 | 2 | 4) {
        return Err(domain(format!("unsupported oversampling factor {w}")));
    }
    let k_count = row.len();
    let n = w * k_count;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..k_count].copy_from_slice(row.as_slice());
    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / (k_count as f64).sqrt();
    Ok(CMat::from_fn(w, k_count, |branch, t| buf[t * w + branch] * scale))
}

/// Undoes [`oversample`]: per-branch DFT, polyphase phase-ramp removal, average.
pub fn naive_dequantize(branches: &CMat) -> CVec {
    let (w, k_count) = branches.shape();
    let spectra = time_to_freq(branches);
    let n = (w * k_count) as f64;
    CVec::from_fn(k_count, |k, _| {
        let mut acc = Complex64::new(0.0, 0.0);
        for branch in 0..w {
            let ramp = Complex64::from_polar(1.0, -2.0 * PI * (k * branch) as f64 / n);
            acc += spectra[(branch, k)] * ramp;
        }
        acc / w as f64
    })
}

/// Receiver IQ gain/phase imbalance applied sample-wise.
pub fn apply_iq_imbalance(samples: &CMat, config: &QuantizerConfig) -> CMat {
    let (a, th) = (config.iq_gain_error, config.iq_phase_error_rad / 2.0);
    let direct = Complex64::new(th.cos(), a * th.sin());
    let image = Complex64::new(a * th.cos(), -th.sin());
    samples.map(|y| direct * y + image * y.conj())
}

/// Uniform `2^Q`-level quantiser applied independently to real and imaginary
/// parts. Levels are evenly spaced from the block minimum to the block maximum
/// (both inclusive), taken jointly over real and imaginary parts, so the operation
/// is idempotent. A zero-range block and `bits = None` pass through unchanged.
pub fn quantize(samples: &CMat, bits: Option<u32>) -> Result<CMat> {
    if samples.is_empty() {
        return Err(domain("cannot quantise an empty block"));
    }
    let Some(q) = bits else {
        return Ok(samples.clone());
    };
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
        (lo.min(z.re).min(z.im), hi.max(z.re).max(z.im))
    });
    if !(hi > lo) {
        return Ok(samples.clone());
    }
    let codebook = UniformCodebook::new(lo, hi, q);
    Ok(samples.map(|z| Complex64::new(codebook.quantize(z.re), codebook.quantize(z.im))))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct UniformCodebook {
    lo: f64,
    hi: f64,
    top: u32,
}

impl UniformCodebook {
    pub(crate) fn new(lo: f64, hi: f64, bits: u32) -> Self {
        Self { lo, hi, top: (1u32 << bits) - 1 }
    }

    pub(crate) fn step(&self) -> f64 {
        (self.hi - self.lo) / self.top as f64
    }

    pub(crate) fn index(&self, x: f64) -> u32 {
        let t = ((x - self.lo) / self.step()).round();
        t.clamp(0.0, self.top as f64) as u32
    }

    /// Exact at both ends of the range.
    pub(crate) fn level(&self, m: u32) -> f64 {
        let t = m as f64 / self.top as f64;
        self.lo * (1.0 - t) + self.hi * t
    }

    pub(crate) fn quantize(&self, x: f64) -> f64 {
        self.level(self.index(x))
    }
}

/// Received pilot block after the front end.
#[derive(Debug, Clone)]
pub struct ReceivedBlock {
    /// `G x K` frequency-domain observations handed to the estimator.
    pub freq: CMat,
    /// Per pilot symbol, the `W x K` quantised time samples.
    pub time_quantized: Vec<CMat>,
    pub noise_power: f64,
}

/// Runs the receiver chain on the noisy frequency-domain block.
pub fn receive(rx: &RxBlocks, config: &QuantizerConfig) -> Result<ReceivedBlock> {
    config.validate()?;
    let g_count = rx.noisy.nrows();
    let mut freq = CMat::zeros(g_count, rx.noisy.ncols());
    let mut time_quantized = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let row = rx.noisy.row(g).transpose();
        let samples = oversample(&row, config.oversampling)?;
        let distorted = apply_iq_imbalance(&samples, config);
        let quantized = quantize(&distorted, config.bits)?;
        if !config.is_transparent() {
            freq.set_row(g, &naive_dequantize(&quantized).transpose());
        }
        time_quantized.push(quantized);
    }
    if config.is_transparent() {
        // identity chain: hand the noisy block through untouched
        freq.copy_from(&rx.noisy);
    }
    Ok(ReceivedBlock { freq, time_quantized, noise_power: rx.noise_power })
}

pub const QUANTIZED_MAGIC: u32 = u32::from_le_bytes(*b"WBQD");
pub const QUANTIZED_VERSION: u32 = 1;

/// Header of the quantised time-sample export. `bits = 0` marks an ideal ADC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedHeader {
    pub n_ap: u32,
    pub n_subcarriers: u32,
    pub n_slots: u32,
    pub oversampling: u32,
    pub bits: u32,
}

/// Writes `header` then, for each slot, branch and subcarrier, `re, im` as
/// little-endian `f32`.
pub fn write_quantized<W: Write>(mut out: W, header: &QuantizedHeader, blocks: &[CMat]) -> Result<()> {
    if blocks.len() != header.n_slots as usize {
        return Err(mismatch("slot count differs from header"));
    }
    for word in [
        QUANTIZED_MAGIC,
        QUANTIZED_VERSION,
        header.n_ap,
        header.n_subcarriers,
        header.n_slots,
        header.oversampling,
        header.bits,
    ] {
        out.write_all(&word.to_le_bytes())?;
    }
    let shape = (header.oversampling as usize, header.n_subcarriers as usize);
    for b in blocks {
        if b.shape() != shape {
            return Err(mismatch(format!("block {:?} vs header {shape:?}", b.shape())));
        }
        for w in 0..shape.0 {
            for k in 0..shape.1 {
                out.write_all(&(b[(w, k)].re as f32).to_le_bytes())?;
                out.write_all(&(b[(w, k)].im as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_quantized<R: Read>(mut input: R) -> Result<(QuantizedHeader, Vec<CMat>)> {
    let mut word = [0u8; 4];
    let mut next = |input: &mut R| -> Result<u32> {
        input.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    if next(&mut input)? != QUANTIZED_MAGIC {
        return Err(Error::Decode { offset: 0, reason: "bad magic".into() });
    }
    let version = next(&mut input)?;
    if version != QUANTIZED_VERSION {
        return Err(Error::Decode { offset: 4, reason: format!("unsupported version {version}") });
    }
    let header = QuantizedHeader {
        n_ap: next(&mut input)?,
        n_subcarriers: next(&mut input)?,
        n_slots: next(&mut input)?,
        oversampling: next(&mut input)?,
        bits: next(&mut input)?,
    };
    let (w, k_count) = (header.oversampling as usize, header.n_subcarriers as usize);
    let mut blocks = Vec::with_capacity(header.n_slots as usize);
    let mut pair = [0u8; 8];
    for _ in 0..header.n_slots {
        let mut b = CMat::zeros(w, k_count);
        for r in 0..w {
            for k in 0..k_count {
                input.read_exact(&mut pair)?;
                let re = f32::from_le_bytes(pair[..4].try_into().unwrap());
                let im = f32::from_le_bytes(pair[4..].try_into().unwrap());
                b[(r, k)] = Complex64::new(re as f64, im as f64);
            }
        }
        blocks.push(b);
    }
    Ok((header, blocks))
}
