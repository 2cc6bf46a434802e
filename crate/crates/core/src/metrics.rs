//! Reconstruction quality: MSE, SDR, a segmental-SNR proxy, and an adapter
//! for an external PESQ scorer.

use std::path::Path;
use std::process::Command;

use crate::error::{Error, Result};

pub const PESQ_MIN: f64 = -0.5;
pub const PESQ_MAX: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub mse: f64,
    /// `+inf` for perfect reconstruction.
    pub sdr_db: f64,
    pub pesq: Option<f64>,
    pub proxy_segsnr_db: f64,
}

fn check_lengths(s: &[f32], s_hat: &[f32]) -> Result<()> {
    if s.len() != s_hat.len() {
        return Err(Error::Shape(format!(
            "reference has {} samples, estimate {}",
            s.len(),
            s_hat.len()
        )));
    }
    Ok(())
}

fn energy(x: &[f32]) -> f64 {
    x.iter().map(|&v| (v as f64) * (v as f64)).sum()
}

fn error_energy(s: &[f32], s_hat: &[f32]) -> f64 {
    s.iter()
        .zip(s_hat)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum()
}

pub fn mse(s: &[f32], s_hat: &[f32]) -> Result<f64> {
    check_lengths(s, s_hat)?;
    if s.is_empty() {
        return Err(Error::UndefinedReference("empty signal".into()));
    }
    Ok(error_energy(s, s_hat) / s.len() as f64)
}

/// `10 log10(||s||^2 / ||s - s_hat||^2)`.
pub fn sdr(s: &[f32], s_hat: &[f32]) -> Result<f64> {
    check_lengths(s, s_hat)?;
    let sig = energy(s);
    if sig == 0.0 {
        return Err(Error::UndefinedReference("all-zero reference signal".into()));
    }
    let err = error_energy(s, s_hat);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (sig / err).log10())
}

/// SDR from an MSE and the reference's mean power; the identity that ties
/// the two metrics together.
pub fn sdr_from_mse(mean_power: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (mean_power / mse).log10()
    }
}

pub const SEGSNR_FLOOR_DB: f64 = -10.0;
pub const SEGSNR_CEIL_DB: f64 = 35.0;
const SILENCE: f64 = 1e-8;

/// Mean of per-segment SNRs clamped to [-10, 35] dB over non-overlapping
/// segments, skipping silent reference segments and a trailing remainder.
pub fn segmental_snr(s: &[f32], s_hat: &[f32], seg_len: usize) -> Result<f64> {
    check_lengths(s, s_hat)?;
    if seg_len == 0 || s.len() < seg_len {
        return Err(Error::Shape(format!(
            "segmental SNR needs at least {seg_len} samples, got {}",
            s.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in s.chunks_exact(seg_len).zip(s_hat.chunks_exact(seg_len)) {
        let sig = energy(a);
        if sig < SILENCE {
            continue;
        }
        let err = error_energy(a, b);
        let snr = if err == 0.0 {
            SEGSNR_CEIL_DB
        } else {
            (10.0 * (sig / err).log10()).clamp(SEGSNR_FLOOR_DB, SEGSNR_CEIL_DB)
        };
        total += snr;
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedReference("every segment is silent".into()));
    }
    Ok(total / count as f64)
}

pub const DEFAULT_SEG_LEN: usize = 256;

/// MSE, SDR and segmental SNR for one clip; PESQ left absent.
pub fn score(s: &[f32], s_hat: &[f32]) -> Result<QualityScore> {
    Ok(QualityScore {
        mse: mse(s, s_hat)?,
        sdr_db: sdr(s, s_hat)?,
        pesq: None,
        proxy_segsnr_db: segmental_snr(s, s_hat, DEFAULT_SEG_LEN.min(s.len()))?,
    })
}

/// Runs `<command> <ref.wav> <deg.wav>` and parses one number from stdout.
/// No command means no score; anything else that goes wrong is an error.
pub fn pesq_external(
    reference: &Path,
    degraded: &Path,
    scorer_command: Option<&str>,
) -> Result<Option<f64>> {
    let Some(cmd) = scorer_command.map(str::trim).filter(|c| !c.is_empty()) else {
        return Ok(None);
    };
    let mut parts = cmd.split_whitespace();
    let program = parts.next().expect("non-empty command");
    let output = Command::new(program)
        .args(parts)
        .arg(reference)
        .arg(degraded)
        .output()
        .map_err(|e| Error::Scorer(format!("failed to run '{cmd}': {e}")))?;
    if !output.status.success() {
        return Err(Error::Scorer(format!(
            "'{cmd}' exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::Scorer(format!("unparseable scorer output '{}'", text.trim())))?;
    if !(PESQ_MIN..=PESQ_MAX).contains(&value) {
        return Err(Error::Scorer(format!(
            "score {value} outside [{PESQ_MIN}, {PESQ_MAX}]"
        )));
    }
    Ok(Some(value))
}
