//! Flat-fading physical channel: `y = h x + w` with AWGN, Rayleigh and
//! Rician coefficients, zero-forcing equalization under perfect CSI, and a
//! differentiable variant for the training graph.

use std::fmt;
use std::str::FromStr;

use autodiff::{Real, Tape, Tensor, Var};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelFamily {
    Awgn,
    Rayleigh,
    Rician,
}

impl ChannelFamily {
    pub const ALL: [ChannelFamily; 3] = [Self::Awgn, Self::Rayleigh, Self::Rician];

    pub fn name(self) -> &'static str {
        match self {
            Self::Awgn => "awgn",
            Self::Rayleigh => "rayleigh",
            Self::Rician => "rician",
        }
    }
}

impl fmt::Display for ChannelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awgn" => Ok(Self::Awgn),
            "rayleigh" => Ok(Self::Rayleigh),
            "rician" | "rice" => Ok(Self::Rician),
            other => Err(Error::Config(format!("unknown channel family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingGranularity {
    /// One coefficient per batch item per transmission.
    #[default]
    PerClip,
    PerSymbol,
}

impl FromStr for FadingGranularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "per_clip" | "clip" => Ok(Self::PerClip),
            "per_symbol" | "symbol" => Ok(Self::PerSymbol),
            other => Err(Error::Config(format!("unknown fading granularity '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub family: ChannelFamily,
    /// `+inf` is the noiseless limit.
    pub snr_db: f64,
    /// Linear K-factor; only read for the Rician family.
    pub rician_k: f64,
    pub granularity: FadingGranularity,
    pub seed: u64,
    /// Zero-forcing equalization at the receiver (perfect CSI).
    pub equalize: bool,
}

impl ChannelSpec {
    pub fn new(family: ChannelFamily, snr_db: f64, seed: u64) -> Self {
        Self {
            family,
            snr_db,
            rician_k: 1.0,
            granularity: FadingGranularity::PerClip,
            seed,
            equalize: true,
        }
    }

    pub fn noiseless(family: ChannelFamily, seed: u64) -> Self {
        Self::new(family, f64::INFINITY, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid SNR {} dB", self.snr_db)));
        }
        if !(self.rician_k >= 0.0) {
            return Err(Error::Config(format!("Rician K must be >= 0, got {}", self.rician_k)));
        }
        Ok(())
    }

    /// Complex noise variance for unit signal and fading power.
    pub fn sigma2(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Draws coefficients and noise for `batch` items of `symbols` complex
    /// symbols each. Identical (seed, stream) pairs give identical draws.
    pub fn realize(&self, batch: usize, symbols: usize, stream: u64) -> Result<ChannelRealization> {
        self.validate()?;
        let mut rng = self.rng(stream);
        let per_symbol = self.granularity == FadingGranularity::PerSymbol;
        let n_h = if per_symbol { batch * symbols } else { batch };
        let h: Vec<Complex64> = (0..n_h).map(|_| self.draw_h(&mut rng)).collect();
        let sigma2 = self.sigma2();
        let sd = (sigma2 / 2.0).sqrt();
        let noise = (0..batch * symbols)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re * sd, im * sd)
            })
            .collect();
        Ok(ChannelRealization {
            family: self.family,
            h,
            noise,
            sigma2,
            batch,
            symbols,
            per_symbol,
        })
    }

    fn draw_h(&self, rng: &mut ChaCha8Rng) -> Complex64 {
        let scatter = || {
            let re: f64 = StandardNormal.sample(&mut *rng);
            let im: f64 = StandardNormal.sample(&mut *rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        };
        match self.family {
            ChannelFamily::Awgn => Complex64::new(1.0, 0.0),
            ChannelFamily::Rayleigh => {
                let mut s = scatter;
                s()
            }
            ChannelFamily::Rician => {
                let k = self.rician_k;
                let mut s = scatter;
                let los = (k / (k + 1.0)).sqrt();
                let nlos = (1.0 / (k + 1.0)).sqrt();
                Complex64::new(los, 0.0) + s() * nlos
            }
        }
    }
}

/// Coefficients and noise for one transmission of a `[batch, symbols]` block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub family: ChannelFamily,
    pub h: Vec<Complex64>,
    pub noise: Vec<Complex64>,
    pub sigma2: f64,
    pub batch: usize,
    pub symbols: usize,
    pub per_symbol: bool,
}

pub const MIN_GAIN: f64 = 1e-12;

impl ChannelRealization {
    #[inline]
    pub fn h_at(&self, item: usize, symbol: usize) -> Complex64 {
        if self.per_symbol {
            self.h[item * self.symbols + symbol]
        } else {
            self.h[item]
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.batch * self.symbols {
            return Err(Error::Shape(format!(
                "block of {n} symbols does not match realization {}x{}",
                self.batch, self.symbols
            )));
        }
        Ok(())
    }

    /// `h` as a `[B, 1 | S, 2]` tensor of real pairs.
    fn h_tensor<T: Real>(&self, invert: bool) -> (Tensor<T>, usize) {
        let cols = if self.per_symbol { self.symbols } else { 1 };
        let mut flagged = 0;
        let data = self
            .h
            .iter()
            .flat_map(|&h| {
                let h = if invert {
                    let (g, f) = guarded_inverse(h);
                    flagged += f as usize;
                    g
                } else {
                    h
                };
                [T::from_f64_lossy(h.re), T::from_f64_lossy(h.im)]
            })
            .collect();
        (
            Tensor::from_vec(vec![self.batch, cols, 2], data).expect("consistent h layout"),
            flagged,
        )
    }

    fn noise_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self
            .noise
            .iter()
            .flat_map(|w| [T::from_f64_lossy(w.re), T::from_f64_lossy(w.im)])
            .collect();
        Tensor::from_vec(vec![self.batch, self.symbols, 2], data).expect("consistent noise layout")
    }
}

/// `1/h` with |h| clamped to [`MIN_GAIN`]; the flag marks a clamped symbol.
fn guarded_inverse(h: Complex64) -> (Complex64, bool) {
    let mag = h.norm();
    if mag < MIN_GAIN {
        let phase = if mag > 0.0 { h / mag } else { Complex64::new(1.0, 0.0) };
        ((phase * MIN_GAIN).inv(), true)
    } else {
        (h.inv(), false)
    }
}

/// `y = h x + w` over a flat `[batch * symbols]` block.
pub fn transmit(
    x: &[Complex64],
    batch: usize,
    spec: &ChannelSpec,
    stream: u64,
) -> Result<(Vec<Complex64>, ChannelRealization)> {
    if batch == 0 || x.len() % batch != 0 {
        return Err(Error::Shape(format!("{} symbols cannot split into {batch} items", x.len())));
    }
    let symbols = x.len() / batch;
    let real = spec.realize(batch, symbols, stream)?;
    let y = apply(x, &real)?;
    Ok((y, real))
}

/// Applies an existing realization to a block.
pub fn apply(x: &[Complex64], real: &ChannelRealization) -> Result<Vec<Complex64>> {
    real.check_len(x.len())?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, &xi)| real.h_at(i / real.symbols, i % real.symbols) * xi + real.noise[i])
        .collect())
}

/// Zero-forcing `y / h`. Returns the equalized block and the number of
/// symbols whose gain had to be clamped.
pub fn equalize(y: &[Complex64], real: &ChannelRealization) -> Result<(Vec<Complex64>, usize)> {
    real.check_len(y.len())?;
    if real.family == ChannelFamily::Awgn {
        return Ok((y.to_vec(), 0));
    }
    let mut flagged = 0;
    let out = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let (inv, f) = guarded_inverse(real.h_at(i / real.symbols, i % real.symbols));
            flagged += f as usize;
            yi * inv
        })
        .collect();
    Ok((out, flagged))
}

/// `10 log10(||hX||^2 / ||Y - hX||^2)`; `+inf` when the block is noiseless.
pub fn measure_snr(x: &[Complex64], y: &[Complex64], real: &ChannelRealization) -> Result<f64> {
    real.check_len(x.len())?;
    real.check_len(y.len())?;
    let (mut sig, mut err) = (0.0, 0.0);
    for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
        let hx = real.h_at(i / real.symbols, i % real.symbols) * xi;
        sig += hx.norm_sqr();
        err += (yi - hx).norm_sqr();
    }
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (sig / err).log10())
}

/// Differentiable channel for `x: [B, S, 2]`: multiplies by `h`, adds the
/// drawn noise as a constant and, when requested, equalizes by `1/h`.
pub fn transmit_graph<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    real: &ChannelRealization,
    equalize: bool,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape != [real.batch, real.symbols, 2] {
        return Err(Error::Shape(format!(
            "channel input {shape:?} does not match realization {}x{}",
            real.batch, real.symbols
        )));
    }
    let (h, _) = real.h_tensor(false);
    let hx = tape.complex_mul(x, &h)?;
    let w = tape.constant(real.noise_tensor());
    let y = tape.add(hx, w)?;
    if equalize && real.family != ChannelFamily::Awgn {
        let (inv, _) = real.h_tensor(true);
        return Ok(tape.complex_mul(y, &inv)?);
    }
    Ok(y)
}

pub fn to_complex(pairs: &[f32]) -> Vec<Complex64> {
    pairs
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0] as f64, c[1] as f64))
        .collect()
}
