//! WAV ingestion, 16 kHz -> 8 kHz resampling, framing and batching.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use autodiff::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const TELEPHONY_RATE_HZ: u32 = 8000;
pub const WIDEBAND_RATE_HZ: u32 = 16000;
const PCM16_SCALE: f32 = 32768.0;

/// Mono speech samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechClip {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub source_id: String,
}

impl SpeechClip {
    pub fn new(samples: Vec<f32>, sample_rate_hz: u32, source_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Reads a PCM16 RIFF/WAVE file. Multi-channel files keep the first channel.
pub fn load_wav(path: impl AsRef<Path>) -> Result<SpeechClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {:?} {}-bit (only PCM16 is supported)",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels.max(1) as usize;
    let mut samples = Vec::with_capacity(reader.len() as usize / channels);
    for (i, s) in reader.into_samples::<i16>().enumerate() {
        let s = s.map_err(|e| wav_error(path, e))?;
        if i % channels == 0 {
            samples.push(s as f32 / PCM16_SCALE);
        }
    }
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(SpeechClip::new(samples, spec.sample_rate, source_id))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() != std::io::ErrorKind::UnexpectedEof => {
            Error::Io(io)
        }
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display()))
        }
        other => Error::WavParse {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Writes a mono PCM16 file, clamping samples to [-1, 1).
pub fn write_wav(path: impl AsRef<Path>, clip: &SpeechClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &clip.samples {
        let q = (s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(|e| wav_error(path, e))?;
    }
    w.finalize().map_err(|e| wav_error(path, e))?;
    Ok(())
}

pub const RESAMPLER_TAPS: usize = 64;

/// Hamming-windowed sinc low-pass with cutoff at a quarter of the input
/// rate, normalized to unit DC gain.
pub fn halfband_lowpass_taps() -> Vec<f64> {
    let n = RESAMPLER_TAPS;
    let center = (n - 1) as f64 / 2.0;
    let fc = 0.25;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - center;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

/// Anti-alias filter then decimate by two; the filter's group delay is
/// compensated so output sample `m` aligns with input sample `2m`.
pub fn resample_to_8k(clip: &SpeechClip) -> Result<SpeechClip> {
    if clip.sample_rate_hz != WIDEBAND_RATE_HZ {
        return Err(Error::UnsupportedRate(clip.sample_rate_hz));
    }
    let taps = halfband_lowpass_taps();
    let delay = RESAMPLER_TAPS / 2;
    let x = &clip.samples;
    let n_out = x.len() / 2;
    let samples = (0..n_out)
        .map(|m| {
            let mut acc = 0.0f64;
            for (k, &h) in taps.iter().enumerate() {
                let idx = (2 * m + delay) as isize - k as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += h * x[idx as usize] as f64;
                }
            }
            acc as f32
        })
        .collect();
    Ok(SpeechClip::new(
        samples,
        TELEPHONY_RATE_HZ,
        clip.source_id.clone(),
    ))
}

/// Loads a clip and brings it to 8 kHz.
pub fn ingest(path: impl AsRef<Path>) -> Result<SpeechClip> {
    let clip = load_wav(path)?;
    match clip.sample_rate_hz {
        TELEPHONY_RATE_HZ => Ok(clip),
        WIDEBAND_RATE_HZ => resample_to_8k(&clip),
        other => Err(Error::UnsupportedRate(other)),
    }
}

/// Framing geometry: `frames * frame_len == samples`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub samples: usize,
    pub frames: usize,
    pub frame_len: usize,
}

impl FrameLayout {
    pub fn new(samples: usize, frames: usize, frame_len: usize) -> Result<Self> {
        if frames == 0 || frame_len == 0 || frames * frame_len != samples {
            return Err(Error::Config(format!(
                "frames ({frames}) x frame length ({frame_len}) must equal W ({samples})"
            )));
        }
        Ok(Self {
            samples,
            frames,
            frame_len,
        })
    }
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            samples: 16_384,
            frames: 128,
            frame_len: 128,
        }
    }
}

/// What to do with clips shorter than W.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShortClips {
    #[default]
    Pad,
    Skip,
}

/// A batch of framed clips, `data: [B, F, L]`.
#[derive(Debug, Clone)]
pub struct FrameBatch {
    pub data: Tensor<f32>,
    pub scale: Vec<f32>,
    pub clip_ids: Vec<String>,
}

impl FrameBatch {
    pub fn batch_size(&self) -> usize {
        self.clip_ids.len()
    }
}

/// Row-major reshape of each clip's first W samples into F rows of L,
/// zero-padding short clips.
pub fn frame(clips: &[SpeechClip], layout: FrameLayout) -> Result<FrameBatch> {
    if clips.is_empty() {
        return Err(Error::Shape("cannot frame an empty set of clips".into()));
    }
    let w = layout.samples;
    let mut data = Vec::with_capacity(clips.len() * w);
    for clip in clips {
        let take = clip.samples.len().min(w);
        data.extend_from_slice(&clip.samples[..take]);
        data.resize(data.len() + (w - take), 0.0);
    }
    Ok(FrameBatch {
        data: Tensor::from_vec(vec![clips.len(), layout.frames, layout.frame_len], data)?,
        scale: vec![1.0; clips.len()],
        clip_ids: clips.iter().map(|c| c.source_id.clone()).collect(),
    })
}

/// Inverse of [`frame`]: one W-sample sequence per batch item.
pub fn deframe(m: &[f32], shape: &[usize], layout: FrameLayout) -> Result<Vec<Vec<f32>>> {
    if shape.len() != 3 || shape[1] != layout.frames || shape[2] != layout.frame_len {
        return Err(Error::Shape(format!(
            "deframe expects [B, {}, {}], got {shape:?}",
            layout.frames, layout.frame_len
        )));
    }
    if m.len() != shape.iter().product::<usize>() {
        return Err(Error::Shape(format!(
            "deframe: {} values for shape {shape:?}",
            m.len()
        )));
    }
    Ok(m.chunks_exact(layout.samples).map(<[f32]>::to_vec).collect())
}

pub const MANIFEST_NAME: &str = "manifest.txt";

/// A directory of speech clips, resampled to 8 kHz on load.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub clips: Vec<SpeechClip>,
    pub layout: FrameLayout,
}

impl Dataset {
    /// Loads every `.wav` in `dir` (sorted by name), or only the files listed
    /// one per line in `dir/manifest.txt` when present.
    pub fn open(dir: impl AsRef<Path>, layout: FrameLayout, short: ShortClips) -> Result<Self> {
        let dir = dir.as_ref();
        let paths = list_wavs(dir)?;
        let mut clips = Vec::with_capacity(paths.len());
        for p in paths {
            let clip = ingest(&p)?;
            if short == ShortClips::Skip && clip.len() < layout.samples {
                continue;
            }
            clips.push(clip);
        }
        if clips.is_empty() {
            return Err(Error::Dataset(format!(
                "no usable .wav clips in {}",
                dir.display()
            )));
        }
        Ok(Self { clips, layout })
    }

    pub fn from_clips(clips: Vec<SpeechClip>, layout: FrameLayout) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::Dataset("empty clip set".into()));
        }
        Ok(Self { clips, layout })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn batches_per_epoch(&self, batch: usize) -> usize {
        self.clips.len() / batch.max(1)
    }

    /// Clip order for one epoch, a deterministic function of (seed, epoch).
    pub fn epoch_order(&self, seed: u64, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.clips.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        order
    }

    /// Full batches for one epoch; the trailing partial batch is dropped.
    pub fn batches(&self, batch: usize, seed: u64, epoch: u64) -> Result<Vec<FrameBatch>> {
        if batch == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let order = self.epoch_order(seed, epoch);
        order
            .chunks_exact(batch)
            .map(|idx| {
                let clips: Vec<SpeechClip> = idx.iter().map(|&i| self.clips[i].clone()).collect();
                frame(&clips, self.layout)
            })
            .collect()
    }

    /// Every clip in stored order, in batches of at most `batch` (the final
    /// batch may be short). Used for evaluation.
    pub fn eval_batches(&self, batch: usize) -> Result<Vec<FrameBatch>> {
        self.clips
            .chunks(batch.max(1))
            .map(|c| frame(c, self.layout))
            .collect()
    }
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", dir.display())));
    }
    let manifest = dir.join(MANIFEST_NAME);
    let mut paths: Vec<PathBuf> = if manifest.is_file() {
        fs::read_to_string(&manifest)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| dir.join(l))
            .collect()
    } else {
        let mut v = Vec::new();
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            let is_wav = p
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if p.is_file() && is_wav {
                v.push(p);
            }
        }
        v
    };
    paths.sort();
    Ok(paths)
}
