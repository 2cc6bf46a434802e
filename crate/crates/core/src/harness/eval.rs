//! Testing sweep: a frozen model (or the classical chain) over every
//! (channel family, SNR, trial) cell, scored against the clean test clips.

use std::path::{Path, PathBuf};

use crate::baseline::Baseline;
use crate::channel::{ChannelFamily, ChannelSpec, FadingGranularity};
use crate::error::{Error, Result};
use crate::metrics::{self, DEFAULT_SEG_LEN};
use crate::model::DeepScModel;
use crate::speech::{deframe, write_wav, Dataset, SpeechClip};

use super::report::{ReportRow, System};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub channels: Vec<ChannelFamily>,
    pub snr_grid: Vec<f64>,
    /// Independent channel draws per test clip per cell.
    pub trials: usize,
    pub batch: usize,
    pub seed: u64,
    pub rician_k: f64,
    pub granularity: FadingGranularity,
    pub equalize: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            channels: ChannelFamily::ALL.to_vec(),
            snr_grid: (0..13).map(|i| -4.0 + 2.0 * i as f64).collect(),
            trials: 2,
            batch: 4,
            seed: 4,
            rician_k: 1.0,
            granularity: FadingGranularity::PerClip,
            equalize: true,
        }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("eval channel set must not be empty".into()));
        }
        if self.snr_grid.is_empty() {
            return Err(Error::Config("eval SNR grid must not be empty".into()));
        }
        if self.trials == 0 || self.batch == 0 {
            return Err(Error::Config("eval trials and batch must be >= 1".into()));
        }
        for &snr in &self.snr_grid {
            self.spec(ChannelFamily::Awgn, snr).validate()?;
        }
        Ok(())
    }

    pub fn spec(&self, family: ChannelFamily, snr_db: f64) -> ChannelSpec {
        let mut s = ChannelSpec::new(family, snr_db, self.seed);
        s.rician_k = self.rician_k;
        s.granularity = self.granularity;
        s.equalize = self.equalize;
        s
    }

    /// RNG stream of one (cell, trial, batch) draw. The top bit separates
    /// the two systems so they never share noise by accident.
    fn stream(&self, system: System, family: usize, snr: usize, trial: usize, batch: usize) -> u64 {
        let cell = (family * self.snr_grid.len() + snr) as u64;
        let tag = match system {
            System::DeepSc => 0,
            System::Baseline => 1u64 << 63,
        };
        tag | (cell << 40) | ((trial as u64) << 20) | batch as u64
    }
}

/// Optional PESQ scoring through an external command.
#[derive(Debug, Clone)]
pub struct PesqSetup {
    pub command: String,
    /// Scratch directory for the reference/degraded WAV pairs.
    pub work_dir: PathBuf,
}

/// Running sums for one report cell.
#[derive(Default)]
struct Cell {
    err: f64,
    power: f64,
    samples: usize,
    segsnr: f64,
    pesq: f64,
    pesq_count: usize,
    clips: usize,
}

impl Cell {
    fn add(&mut self, s: &[f32], s_hat: &[f32], pesq: Option<&PesqSetup>) -> Result<()> {
        let w = s.len();
        self.err += metrics::mse(s, s_hat)? * w as f64;
        self.power += s.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
        self.samples += w;
        self.segsnr += metrics::segmental_snr(s, s_hat, DEFAULT_SEG_LEN.min(w))?;
        self.clips += 1;
        if let Some(p) = pesq {
            if let Some(score) = score_pesq(s, s_hat, p)? {
                self.pesq += score;
                self.pesq_count += 1;
            }
        }
        Ok(())
    }

    fn row(&self, system: System, train: Option<ChannelFamily>, test: ChannelFamily, snr_db: f64) -> ReportRow {
        let mse = self.err / self.samples as f64;
        ReportRow {
            system,
            train_channel: train,
            test_channel: test,
            snr_db,
            mse,
            sdr_db: metrics::sdr_from_mse(self.power / self.samples as f64, mse),
            segsnr_db: self.segsnr / self.clips as f64,
            pesq: (self.pesq_count > 0).then(|| self.pesq / self.pesq_count as f64),
        }
    }
}

fn score_pesq(s: &[f32], s_hat: &[f32], p: &PesqSetup) -> Result<Option<f64>> {
    std::fs::create_dir_all(&p.work_dir)?;
    let r = p.work_dir.join("ref.wav");
    let d = p.work_dir.join("deg.wav");
    write_wav(&r, &SpeechClip::new(s.to_vec(), 8000, "ref"))?;
    let clipped: Vec<f32> = s_hat.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    write_wav(&d, &SpeechClip::new(clipped, 8000, "deg"))?;
    metrics::pesq_external(&r, &d, Some(&p.command))
}

/// Mean power of the test clips at file scale, over the samples the
/// system sees (the first W of each, zero-padded).
pub fn reference_power(test: &Dataset) -> f64 {
    let w = test.layout.samples;
    let total: f64 = test
        .clips
        .iter()
        .map(|c| c.samples.iter().take(w).map(|&v| (v as f64) * (v as f64)).sum::<f64>())
        .sum();
    total / (w * test.len()) as f64
}

/// Frozen-model sweep. `gain` maps file scale to the model's working
/// scale; reconstructions are mapped back before scoring.
pub fn evaluate(
    model: &DeepScModel<f32>,
    train_channel: Option<ChannelFamily>,
    test: &Dataset,
    s: &EvalSettings,
    gain: f64,
    pesq: Option<&PesqSetup>,
) -> Result<Vec<ReportRow>> {
    s.validate()?;
    if test.layout != model.config().layout()? {
        return Err(Error::CheckpointIncompatible(format!(
            "test layout {:?} does not match the model's {:?}",
            test.layout,
            model.config().layout()?
        )));
    }
    let before = model.param_hash();
    let symbols = model.config().symbols_per_clip();
    let g = gain as f32;
    let batches = test.eval_batches(s.batch)?;
    let mut rows = Vec::new();
    for (fi, &family) in s.channels.iter().enumerate() {
        for (si, &snr) in s.snr_grid.iter().enumerate() {
            let spec = s.spec(family, snr);
            let mut cell = Cell::default();
            for trial in 0..s.trials {
                for (bi, b) in batches.iter().enumerate() {
                    let real = spec.realize(b.batch_size(), symbols, s.stream(System::DeepSc, fi, si, trial, bi))?;
                    let mut scaled = b.data.clone();
                    scaled.data_mut().iter_mut().for_each(|v| *v *= g);
                    let (m_hat, _) = model.infer(&scaled, Some((&real, spec.equalize)))?;
                    let refs = deframe(b.data.data(), b.data.shape(), test.layout)?;
                    let mut outs = deframe(m_hat.data(), m_hat.shape(), test.layout)?;
                    for (r, o) in refs.iter().zip(outs.iter_mut()) {
                        o.iter_mut().for_each(|v| *v /= g);
                        cell.add(r, o, pesq)?;
                    }
                }
            }
            rows.push(cell.row(System::DeepSc, train_channel, family, snr));
        }
    }
    if model.param_hash() != before {
        return Err(Error::Contract("evaluation modified the model parameters".into()));
    }
    Ok(rows)
}

/// The classical chain over the same grid and the same test clips.
pub fn run_baseline(test: &Dataset, s: &EvalSettings, pesq: Option<&PesqSetup>) -> Result<Vec<ReportRow>> {
    s.validate()?;
    let chain = Baseline::default();
    let w = test.layout.samples;
    let clips: Vec<SpeechClip> = test
        .clips
        .iter()
        .map(|c| {
            let mut samples: Vec<f32> = c.samples.iter().copied().take(w).collect();
            samples.resize(w, 0.0);
            SpeechClip::new(samples, c.sample_rate_hz, c.source_id.clone())
        })
        .collect();
    let mut rows = Vec::new();
    for (fi, &family) in s.channels.iter().enumerate() {
        for (si, &snr) in s.snr_grid.iter().enumerate() {
            let spec = s.spec(family, snr);
            let mut cell = Cell::default();
            for trial in 0..s.trials {
                for (ci, clip) in clips.iter().enumerate() {
                    let out = chain.transmit(clip, &spec, s.stream(System::Baseline, fi, si, trial, ci))?;
                    cell.add(&clip.samples, &out.recovered.samples, pesq)?;
                }
            }
            rows.push(cell.row(System::Baseline, None, family, snr));
        }
    }
    Ok(rows)
}

/// PESQ scoring is enabled only when a command is configured.
pub fn pesq_setup(command: Option<&str>, out_dir: &Path) -> Option<PesqSetup> {
    command.filter(|c| !c.trim().is_empty()).map(|c| PesqSetup {
        command: c.to_string(),
        work_dir: out_dir.join("pesq_tmp"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus::synth_clip;
    use crate::model::ModelConfig;

    fn setup() -> (DeepScModel<f32>, Dataset, EvalSettings) {
        let cfg = ModelConfig {
            d: 4,
            n: 4,
            frames: 8,
            frame_len: 32,
            blocks: 1,
            reduction: 2,
        };
        let clips = (0..3).map(|i| synth_clip(40 + i, 256, 8000, format!("t{i}"))).collect();
        let data = Dataset::from_clips(clips, cfg.layout().unwrap()).unwrap();
        let s = EvalSettings {
            snr_grid: vec![0.0, 10.0],
            trials: 2,
            batch: 2,
            ..Default::default()
        };
        (DeepScModel::new(cfg, 3).unwrap(), data, s)
    }

    #[test]
    fn grid_rows_and_identity() {
        let (model, data, s) = setup();
        let rows = evaluate(&model, Some(ChannelFamily::Rician), &data, &s, 4.0, None).unwrap();
        assert_eq!(rows.len(), 3 * 2);
        let p = reference_power(&data);
        for r in &rows {
            assert_eq!(r.system, System::DeepSc);
            assert!(r.pesq.is_none());
            let oracle = 10.0 * (p / r.mse).log10();
            assert!((r.sdr_db - oracle).abs() < 1e-9);
        }
        let again = evaluate(&model, Some(ChannelFamily::Rician), &data, &s, 4.0, None).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn baseline_rows_cover_the_grid() {
        let (_, data, mut s) = setup();
        s.snr_grid = vec![-4.0, f64::INFINITY];
        let rows = run_baseline(&data, &s, None).unwrap();
        assert_eq!(rows.len(), 6);
        for r in rows.iter().filter(|r| r.snr_db.is_infinite()) {
            // noiseless: A-law quantization error only
            let q: f64 = data
                .clips
                .iter()
                .flat_map(|c| c.samples.iter())
                .map(|&v| {
                    let d = v as f64 - crate::baseline::alaw::decode(crate::baseline::alaw::encode(v)) as f64;
                    d * d
                })
                .sum::<f64>()
                / (3 * 256) as f64;
            assert!((r.mse - q).abs() <= 1e-12 * q.max(1.0), "{} vs {q}", r.mse);
        }
        let low: Vec<_> = rows.iter().filter(|r| r.snr_db == -4.0).collect();
        assert!(low.iter().all(|r| r.sdr_db < 0.0));
    }

    #[test]
    fn layout_mismatch_is_incompatible() {
        let (model, _, s) = setup();
        let clips = vec![synth_clip(1, 128, 8000, "x")];
        let other = Dataset::from_clips(clips, crate::speech::FrameLayout::new(128, 4, 32).unwrap()).unwrap();
        let err = evaluate(&model, None, &other, &s, 1.0, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
