//! Gray-mapped square 64-QAM with max-log soft demapping.

use num_complex::Complex64;

use crate::channel::{equalize, ChannelRealization};
use crate::error::Result;

pub const BITS_PER_SYMBOL: usize = 6;
pub const ORDER: usize = 64;
/// Average energy of the unnormalized {±1, ±3, ±5, ±7}^2 grid is 42.
pub const NORM: f64 = 0.154_303_349_962_091_9; // 1 / sqrt(42)
const LLR_CLAMP: f64 = 1e6;
const MIN_NOISE: f64 = 1e-12;

/// Amplitude index (0..8, level `2i - 7`) for a 3-bit Gray label.
fn gray_to_index(label: u8) -> usize {
    let mut i = label;
    let mut shift = label >> 1;
    while shift != 0 {
        i ^= shift;
        shift >>= 1;
    }
    i as usize
}

fn index_to_gray(i: usize) -> u8 {
    (i ^ (i >> 1)) as u8
}

fn level(i: usize) -> f64 {
    (2.0 * i as f64 - 7.0) * NORM
}

/// Maps bits (MSB first) `b0 b1 b2` to the in-phase and `b3 b4 b5` to the
/// quadrature axis. Returns the symbols and the number of zero bits
/// appended to reach a multiple of six.
pub fn modulate(bits: &[u8]) -> (Vec<Complex64>, usize) {
    let pad = (BITS_PER_SYMBOL - bits.len() % BITS_PER_SYMBOL) % BITS_PER_SYMBOL;
    let mut padded = bits.to_vec();
    padded.resize(bits.len() + pad, 0);
    let symbols = padded
        .chunks_exact(BITS_PER_SYMBOL)
        .map(|b| {
            let i_label = (b[0] << 2) | (b[1] << 1) | b[2];
            let q_label = (b[3] << 2) | (b[4] << 1) | b[5];
            Complex64::new(level(gray_to_index(i_label)), level(gray_to_index(q_label)))
        })
        .collect();
    (symbols, pad)
}

/// The 64 constellation points indexed by their 6-bit label.
pub fn constellation() -> Vec<Complex64> {
    (0..ORDER as u8)
        .map(|label| {
            let bits: Vec<u8> = (0..6).rev().map(|i| (label >> i) & 1).collect();
            modulate(&bits).0[0]
        })
        .collect()
}

/// Max-log LLRs (positive favours bit 0) for the three bits of one axis.
fn axis_llrs(y: f64, noise_var: f64, out: &mut Vec<f64>) {
    let mut best = [[f64::INFINITY; 2]; 3];
    for i in 0..8 {
        let d = (y - level(i)).powi(2);
        let label = index_to_gray(i);
        for (bit, slot) in best.iter_mut().enumerate() {
            let b = ((label >> (2 - bit)) & 1) as usize;
            slot[b] = slot[b].min(d);
        }
    }
    for [d0, d1] in best {
        out.push(((d1 - d0) / noise_var).clamp(-LLR_CLAMP, LLR_CLAMP));
    }
}

/// Equalizes `y` with the known coefficients, then computes per-bit LLRs
/// using the effective noise variance `sigma^2 / |h|^2`.
pub fn demodulate_soft(y: &[Complex64], real: &ChannelRealization) -> Result<Vec<f64>> {
    let (eq, _) = equalize(y, real)?;
    let mut llrs = Vec::with_capacity(eq.len() * BITS_PER_SYMBOL);
    for (n, z) in eq.iter().enumerate() {
        let gain = real.h_at(n / real.symbols, n % real.symbols).norm_sqr();
        let noise_var = (real.sigma2 / gain.max(MIN_NOISE)).max(MIN_NOISE);
        axis_llrs(z.re, noise_var, &mut llrs);
        axis_llrs(z.im, noise_var, &mut llrs);
    }
    Ok(llrs)
}

/// Nearest-point hard decisions.
pub fn demodulate_hard(y: &[Complex64]) -> Vec<u8> {
    let axis = |v: f64| -> u8 {
        let i = ((v / NORM + 7.0) / 2.0).round().clamp(0.0, 7.0) as usize;
        index_to_gray(i)
    };
    y.iter()
        .flat_map(|z| {
            let (a, b) = (axis(z.re), axis(z.im));
            [(a >> 2) & 1, (a >> 1) & 1, a & 1, (b >> 2) & 1, (b >> 1) & 1, b & 1]
        })
        .collect()
}
