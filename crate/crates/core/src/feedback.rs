//! Fixed-budget bit-vector codec for sparse CSI.
//!
//! Frame layout, bits packed little-endian within bytes (bit `i` of the frame is
//! bit `i % 8` of byte `i / 8`), every field least-significant bit first:
//!
//! 1. `S` row indices, ascending, `ceil(log2 V)` bits each;
//! 2. real-part scale then imaginary-part scale, IEEE-754 `f32` bit patterns;
//! 3. for each retained row, each subcarrier: real code then imaginary code,
//!    `Q_f` bits each.
//!
//! Blobs prefix the packed bytes with the frame length in bits as a `u32` (LE).

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{domain, mismatch, Error, Result};
use crate::frontend::UniformCodebook;
use crate::CMat;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCodebook {
    pub support_size: usize,
    pub coeff_bits: u32,
    pub v_total: usize,
    pub k_total: usize,
}

impl FeedbackCodebook {
    pub fn new(support_size: usize, coeff_bits: u32, v_total: usize, k_total: usize) -> Result<Self> {
        let c = Self { support_size, coeff_bits, v_total, k_total };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_total == 0 || self.k_total == 0 {
            return Err(domain("codebook needs V >= 1 and K >= 1"));
        }
        if self.support_size == 0 || self.support_size > self.v_total {
            return Err(domain(format!("support size {} must lie in 1..={}", self.support_size, self.v_total)));
        }
        if !(1..=31).contains(&self.coeff_bits) {
            return Err(domain(format!("coefficient bits {} must lie in 1..=31", self.coeff_bits)));
        }
        Ok(())
    }

    pub fn index_bits(&self) -> u32 {
        usize::BITS - (self.v_total - 1).leading_zeros()
    }

    /// `N_f = S ceil(log2 V) + 2 S K Q_f + 64`.
    pub fn bit_budget(&self) -> usize {
        self.support_size * self.index_bits() as usize + 2 * self.support_size * self.k_total * self.coeff_bits as usize + 64
    }
}

/// Packed bit sequence of exactly `codebook.bit_budget()` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector {
    bytes: Vec<u8>,
    len: usize,
    codebook: FeedbackCodebook,
}

impl BitVector {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn codebook(&self) -> &FeedbackCodebook {
        &self.codebook
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bytes[i / 8] >> (i % 8) & 1 == 1
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    fn put(&mut self, value: u64, width: u32) {
        for b in 0..width {
            if self.len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if value >> b & 1 == 1 {
                *self.bytes.last_mut().expect("byte pushed") |= 1 << (self.len % 8);
            }
            self.len += 1;
        }
    }
}

struct BitReader<'a> {
    bits: &'a BitVector,
    pos: usize,
}

impl BitReader<'_> {
    fn take(&mut self, width: u32) -> Result<u64> {
        if self.pos + width as usize > self.bits.len {
            return Err(Error::Decode { offset: self.pos / 8, reason: "frame ends inside a field".into() });
        }
        let mut v = 0u64;
        for b in 0..width {
            if self.bits.bit(self.pos) {
                v |= 1 << b;
            }
            self.pos += 1;
        }
        Ok(v)
    }
}

/// Parsed contents of one bit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackFrame {
    pub indices: Vec<usize>,
    pub scale_re: f32,
    pub scale_im: f32,
    /// Row-major over (retained row, subcarrier, real/imag).
    pub codes: Vec<u32>,
}

impl FeedbackFrame {
    pub fn to_bits(&self, codebook: &FeedbackCodebook) -> Result<BitVector> {
        codebook.validate()?;
        let (s, k) = (codebook.support_size, codebook.k_total);
        if self.indices.len() != s || self.codes.len() != 2 * s * k {
            return Err(mismatch("frame does not match codebook"));
        }
        let mut w = BitWriter { bytes: Vec::with_capacity(codebook.bit_budget().div_ceil(8)), len: 0 };
        for &i in &self.indices {
            w.put(i as u64, codebook.index_bits());
        }
        w.put(self.scale_re.to_bits() as u64, 32);
        w.put(self.scale_im.to_bits() as u64, 32);
        for &c in &self.codes {
            w.put(c as u64, codebook.coeff_bits);
        }
        debug_assert_eq!(w.len, codebook.bit_budget());
        Ok(BitVector { bytes: w.bytes, len: w.len, codebook: *codebook })
    }

    /// Parses and validates a bit vector against its codebook.
    pub fn from_bits(bits: &BitVector) -> Result<Self> {
        let cb = bits.codebook;
        cb.validate()?;
        if bits.len != cb.bit_budget() {
            return Err(Error::Decode { offset: 0, reason: format!("{} bits, expected {}", bits.len, cb.bit_budget()) });
        }
        let mut r = BitReader { bits, pos: 0 };
        let mut indices = Vec::with_capacity(cb.support_size);
        for _ in 0..cb.support_size {
            let at = r.pos / 8;
            let i = r.take(cb.index_bits())? as usize;
            if i >= cb.v_total {
                return Err(Error::Decode { offset: at, reason: format!("row index {i} outside 0..{}", cb.v_total) });
            }
            if indices.last().is_some_and(|&p| p >= i) {
                return Err(Error::Decode { offset: at, reason: "row indices must be strictly ascending".into() });
            }
            indices.push(i);
        }
        let mut scales = [0f32; 2];
        for s in scales.iter_mut() {
            let at = r.pos / 8;
            *s = f32::from_bits(r.take(32)? as u32);
            if !(s.is_finite() && *s >= 0.0) {
                return Err(Error::Decode { offset: at, reason: format!("invalid scale {s}") });
            }
        }
        let mut codes = Vec::with_capacity(2 * cb.support_size * cb.k_total);
        for _ in 0..2 * cb.support_size * cb.k_total {
            codes.push(r.take(cb.coeff_bits)? as u32);
        }
        Ok(Self { indices, scale_re: scales[0], scale_im: scales[1], codes })
    }
}

fn level_codebook(scale: f32, bits: u32) -> UniformCodebook {
    let s = scale as f64;
    UniformCodebook::new(-s, s, bits)
}

/// Keeps the `S` rows of largest energy (ties to the lower index) and quantises
/// their real and imaginary parts on `2^Q_f` uniform levels spanning
/// `[-scale, scale]` inclusive.
pub fn encode_csi(sparse: &CMat, codebook: &FeedbackCodebook) -> Result<BitVector> {
    codebook.validate()?;
    if sparse.shape() != (codebook.v_total, codebook.k_total) {
        return Err(mismatch(format!("sparse code {:?} vs codebook V = {}, K = {}", sparse.shape(), codebook.v_total, codebook.k_total)));
    }
    if sparse.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(domain("sparse code must be finite"));
    }
    let energy: Vec<f64> = sparse.row_iter().map(|r| r.norm_squared()).collect();
    let mut order: Vec<usize> = (0..codebook.v_total).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let mut indices = order[..codebook.support_size].to_vec();
    indices.sort_unstable();

    let max_abs = |f: fn(&Complex64) -> f64| indices.iter().flat_map(|&v| sparse.row(v).iter().map(f).collect::<Vec<_>>()).fold(0.0f64, |m, x| m.max(x.abs()));
    let scale_re = max_abs(|z| z.re) as f32;
    let scale_im = max_abs(|z| z.im) as f32;
    let (cre, cim) = (level_codebook(scale_re, codebook.coeff_bits), level_codebook(scale_im, codebook.coeff_bits));
    let mid = 1u32 << (codebook.coeff_bits - 1);
    let code = |cb: &UniformCodebook, scale: f32, x: f64| if scale == 0.0 { mid } else { cb.index(x) };
    let mut codes = Vec::with_capacity(2 * codebook.support_size * codebook.k_total);
    for &v in &indices {
        for k in 0..codebook.k_total {
            let z = sparse[(v, k)];
            codes.push(code(&cre, scale_re, z.re));
            codes.push(code(&cim, scale_im, z.im));
        }
    }
    FeedbackFrame { indices, scale_re, scale_im, codes }.to_bits(codebook)
}

/// Reconstructs the `V x K` sparse code.
pub fn decode_sparse(bits: &BitVector) -> Result<CMat> {
    let cb = bits.codebook;
    let frame = FeedbackFrame::from_bits(bits)?;
    let (cre, cim) = (level_codebook(frame.scale_re, cb.coeff_bits), level_codebook(frame.scale_im, cb.coeff_bits));
    let value = |c: &UniformCodebook, scale: f32, m: u32| if scale == 0.0 { 0.0 } else { c.level(m) };
    let mut out = CMat::zeros(cb.v_total, cb.k_total);
    for (s, &v) in frame.indices.iter().enumerate() {
        for k in 0..cb.k_total {
            let base = 2 * (s * cb.k_total + k);
            out[(v, k)] = Complex64::new(value(&cre, frame.scale_re, frame.codes[base]), value(&cim, frame.scale_im, frame.codes[base + 1]));
        }
    }
    Ok(out)
}

/// Reconstructs the spatial-frequency CSI `[D[k] x[:, k]]_k`.
pub fn decode_csi<D: Dictionary + ?Sized>(bits: &BitVector, dictionary: &D) -> Result<CMat> {
    let sparse = decode_sparse(bits)?;
    dictionary.synthesize(&sparse)
}

/// Length-prefixed blob: `u32` LE bit count followed by the packed bytes.
pub fn write_blob(bits: &BitVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + bits.bytes.len());
    out.extend_from_slice(&(bits.len as u32).to_le_bytes());
    out.extend_from_slice(&bits.bytes);
    out
}

pub fn read_blob(blob: &[u8], codebook: &FeedbackCodebook) -> Result<BitVector> {
    codebook.validate()?;
    let Some(prefix) = blob.get(..4) else {
        return Err(Error::Decode { offset: blob.len(), reason: "missing length prefix".into() });
    };
    let len = u32::from_le_bytes(prefix.try_into().expect("four bytes")) as usize;
    if len != codebook.bit_budget() {
        return Err(Error::Decode { offset: 0, reason: format!("{len} bits, codebook expects {}", codebook.bit_budget()) });
    }
    let body = &blob[4..];
    if body.len() != len.div_ceil(8) {
        return Err(Error::Decode { offset: 4 + body.len().min(len.div_ceil(8)), reason: format!("{} payload bytes for {len} bits", body.len()) });
    }
    if !len.is_multiple_of(8) && body[body.len() - 1] >> (len % 8) != 0 {
        return Err(Error::Decode { offset: 4 + body.len() - 1, reason: "non-zero padding bits".into() });
    }
    let bits = BitVector { bytes: body.to_vec(), len, codebook: *codebook };
    FeedbackFrame::from_bits(&bits).map_err(|e| match e {
        Error::Decode { offset, reason } => Error::Decode { offset: offset + 4, reason },
        other => other,
    })?;
    Ok(bits)
}
