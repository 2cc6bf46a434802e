//! Synthetic speech-like corpus for desk-scale runs and tests.
//!
//! Each clip is a sequence of syllables: a voiced nucleus (harmonic source
//! with a gliding pitch, shaped by two resonances) under a raised-cosine
//! envelope, optionally preceded by a noise burst, separated by short pauses.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::speech::{write_wav, SpeechClip, MANIFEST_NAME};

/// Target RMS of the voiced segments.
const LEVEL: f64 = 0.08;

fn resonance_gain(f: f64, center: f64, bw: f64) -> f64 {
    1.0 / (1.0 + ((f - center) / bw).powi(2))
}

/// One clip of `samples` samples at `rate` Hz.
pub fn synth_clip(seed: u64, samples: usize, rate: u32, id: impl Into<String>) -> SpeechClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = rate as f64;
    let mut out = vec![0.0f64; samples];
    let speaker_f0 = rng.gen_range(95.0..220.0);
    let mut pos = rng.gen_range(0..(samples / 16).max(1));
    let mut phase = 0.0f64;
    let mut lp = 0.0f64;
    while pos < samples {
        // fricative onset
        if rng.gen_bool(0.4) {
            let len = ((rng.gen_range(0.03..0.08) * fs) as usize).min(samples - pos);
            let amp = LEVEL * rng.gen_range(0.2..0.5);
            let mut prev = 0.0;
            for i in 0..len {
                let w: f64 = StandardNormal.sample(&mut rng);
                let hp = w - prev;
                prev = w;
                let env = (PI * i as f64 / len as f64).sin();
                out[pos + i] += amp * env * hp * 0.5;
            }
            pos += len;
        }
        if pos >= samples {
            break;
        }
        let len = ((rng.gen_range(0.08..0.25) * fs) as usize).min(samples - pos);
        let f1 = rng.gen_range(300.0..850.0);
        let f2 = rng.gen_range(900.0..2400.0);
        let f0_start = speaker_f0 * rng.gen_range(0.85..1.15);
        let f0_end = speaker_f0 * rng.gen_range(0.8..1.2);
        let amp = LEVEL * rng.gen_range(0.6..1.4);
        let harmonics: Vec<(usize, f64)> = (1..40)
            .map(|k| {
                let f = k as f64 * speaker_f0;
                (k, (resonance_gain(f, f1, 90.0) + 0.6 * resonance_gain(f, f2, 140.0)) / k as f64)
            })
            .filter(|&(k, _)| (k as f64) * speaker_f0 * 1.25 < fs / 2.0)
            .collect();
        let norm: f64 = harmonics.iter().map(|(_, g)| g * g / 2.0).sum::<f64>().sqrt();
        for i in 0..len {
            let t = i as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * t;
            phase = (phase + TAU * f0 / fs) % (TAU * 1000.0);
            let env = 0.5 - 0.5 * (TAU * t).cos();
            let v: f64 = harmonics.iter().map(|&(k, g)| g * (k as f64 * phase).sin()).sum();
            let breath: f64 = StandardNormal.sample(&mut rng);
            lp = 0.9 * lp + 0.1 * breath;
            out[pos + i] += amp * env * (v / norm + 0.05 * lp);
        }
        pos += len;
        pos += (rng.gen_range(0.02..0.12) * fs) as usize;
    }
    let samples = out.into_iter().map(|v| v.clamp(-0.99, 0.99) as f32).collect();
    SpeechClip::new(samples, rate, id)
}

/// Writes `count` 16 kHz PCM16 clips long enough to give `samples_8k`
/// samples after resampling, plus a manifest listing them.
pub fn write_corpus(dir: &Path, count: usize, samples_8k: usize, seed: u64) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(count);
    for i in 0..count {
        let name = format!("clip_{i:03}.wav");
        let clip = synth_clip(
            seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
            2 * samples_8k,
            16_000,
            name.clone(),
        );
        write_wav(dir.join(&name), &clip)?;
        names.push(name);
    }
    fs::write(dir.join(MANIFEST_NAME), names.join("\n") + "\n")?;
    Ok(names)
}
