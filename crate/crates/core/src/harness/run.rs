//! The command-level operations: train, eval, baseline, cross-train.
//! Each reads an [`ExperimentConfig`] and writes into its output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::channel::ChannelFamily;
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, DeepScModel};
use crate::speech::{Dataset, SpeechClip};

use super::config::ExperimentConfig;
use super::corpus::synth_clip;
use super::eval::{self, pesq_setup};
use super::report::{EvalReport, ReportRow, RunMeta};
use super::train::{self, EpochRecord, TrainOutcome};

pub const CHECKPOINT_FILE: &str = "model.dsc";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";

const TEST_SEED_OFFSET: u64 = 500_000;

fn synthetic(cfg: &ExperimentConfig, count: usize, offset: u64, tag: &str) -> Result<Dataset> {
    let layout = cfg.layout()?;
    let clips = (0..count as u64)
        .map(|i| {
            let seed = cfg.synthetic.seed.wrapping_mul(1_000_003).wrapping_add(offset + i);
            synth_clip(seed, layout.samples, 8000, format!("{tag}_{i:03}"))
        })
        .collect();
    Dataset::from_clips(clips, layout)
}

/// Training clips at file scale.
pub fn train_set(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.train_dir {
        Some(dir) => Dataset::open(dir, cfg.layout()?, cfg.short_clips),
        None => synthetic(cfg, cfg.synthetic.train_clips, 0, "train"),
    }
}

pub fn test_set(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.test_dir {
        Some(dir) => Dataset::open(dir, cfg.layout()?, cfg.short_clips),
        None => synthetic(cfg, cfg.synthetic.test_clips, TEST_SEED_OFFSET, "test"),
    }
}

/// The same clips multiplied by `gain`.
pub fn scaled(data: &Dataset, gain: f64) -> Dataset {
    let g = gain as f32;
    let clips = data
        .clips
        .iter()
        .map(|c| SpeechClip::new(c.samples.iter().map(|v| v * g).collect(), c.sample_rate_hz, c.source_id.clone()))
        .collect();
    Dataset {
        clips,
        layout: data.layout,
    }
}

pub fn seeds(cfg: &ExperimentConfig) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("master".to_string(), cfg.seed),
        ("init".to_string(), cfg.train.init_seed),
        ("data".to_string(), cfg.train.data_seed),
        ("channel".to_string(), cfg.train.channel.seed),
        ("eval".to_string(), cfg.eval.seed),
        ("synthetic".to_string(), cfg.synthetic.seed),
    ])
}

fn meta(cfg: &ExperimentConfig) -> RunMeta {
    RunMeta::new(cfg.hash(), seeds(cfg))
}

/// Loss curve at file scale.
fn file_scale(curve: &[EpochRecord], gain: f64) -> Vec<EpochRecord> {
    let g2 = gain * gain;
    curve
        .iter()
        .map(|r| EpochRecord {
            mean_loss: r.mean_loss / g2,
            ..*r
        })
        .collect()
}

/// Trains one model on `family` at the configured SNR.
pub fn train_model(cfg: &ExperimentConfig, family: ChannelFamily, data: &Dataset) -> Result<TrainOutcome> {
    let mut s = cfg.train.clone();
    s.channel.family = family;
    let model = DeepScModel::new(cfg.model, s.init_seed)?;
    train::train(model, &scaled(data, cfg.gain), &s)
}

fn save_outcome(dir: &Path, stem: &str, out: &TrainOutcome, gain: f64) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let ckpt = dir.join(format!("{stem}.dsc"));
    save_checkpoint(&ckpt, &out.model)?;
    let curve = if stem == "model" {
        LOSS_CURVE_FILE.to_string()
    } else {
        format!("loss_curve_{}.csv", stem.trim_start_matches("model_"))
    };
    train::write_loss_curve(&dir.join(curve), &file_scale(&out.curve, gain))?;
    Ok(ckpt)
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<(TrainOutcome, PathBuf)> {
    cfg.validate()?;
    let data = train_set(cfg)?;
    let out = train_model(cfg, cfg.train.channel.family, &data)?;
    let path = save_outcome(&cfg.out_dir, "model", &out, cfg.gain)?;
    Ok((out, path))
}

pub fn load_compatible(cfg: &ExperimentConfig, path: &Path) -> Result<DeepScModel<f32>> {
    let model = load_checkpoint(path)?;
    if *model.config() != cfg.model {
        return Err(Error::CheckpointIncompatible(format!(
            "checkpoint hyperparameters {:?} do not match the configuration {:?}",
            model.config(),
            cfg.model
        )));
    }
    Ok(model)
}

fn deepsc_rows(cfg: &ExperimentConfig, model: &DeepScModel<f32>, family: ChannelFamily, test: &Dataset) -> Result<Vec<ReportRow>> {
    let pesq = pesq_setup(cfg.pesq_cmd.as_deref(), &cfg.out_dir);
    eval::evaluate(model, Some(family), test, &cfg.eval, cfg.gain, pesq.as_ref())
}

fn baseline_rows(cfg: &ExperimentConfig, test: &Dataset) -> Result<Vec<ReportRow>> {
    let pesq = pesq_setup(cfg.pesq_cmd.as_deref(), &cfg.out_dir);
    eval::run_baseline(test, &cfg.eval, pesq.as_ref())
}

/// Evaluates a saved model; the baseline rows are added when enabled.
pub fn run_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let model = load_compatible(cfg, checkpoint)?;
    let test = test_set(cfg)?;
    let mut rows = deepsc_rows(cfg, &model, cfg.train.channel.family, &test)?;
    if cfg.baseline {
        rows.extend(baseline_rows(cfg, &test)?);
    }
    let report = EvalReport::new(rows, meta(cfg));
    report.write(&cfg.out_dir)?;
    Ok(report)
}

pub fn run_baseline(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let test = test_set(cfg)?;
    let report = EvalReport::new(baseline_rows(cfg, &test)?, meta(cfg));
    report.write(&cfg.out_dir)?;
    Ok(report)
}

/// Result of the 3x3 experiment: one trained model per family.
pub struct CrossTrain {
    pub report: EvalReport,
    pub outcomes: Vec<(ChannelFamily, TrainOutcome)>,
}

/// One model per channel family at the configured training SNR, each
/// tested on every family across the grid.
pub fn cross_train(cfg: &ExperimentConfig) -> Result<CrossTrain> {
    cfg.validate()?;
    let data = train_set(cfg)?;
    let test = test_set(cfg)?;
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for family in ChannelFamily::ALL {
        let out = train_model(cfg, family, &data)?;
        save_outcome(&cfg.out_dir, &format!("model_{}", family.name()), &out, cfg.gain)?;
        rows.extend(deepsc_rows(cfg, &out.model, family, &test)?);
        outcomes.push((family, out));
    }
    if cfg.baseline {
        rows.extend(baseline_rows(cfg, &test)?);
    }
    let report = EvalReport::new(rows, meta(cfg));
    report.write(&cfg.out_dir)?;
    Ok(CrossTrain { report, outcomes })
}

/// Merges the reports found in `inputs` into `out_dir`.
pub fn run_report(inputs: &[PathBuf], out_dir: &Path) -> Result<EvalReport> {
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one input directory".into()));
    }
    let reports = inputs.iter().map(|d| EvalReport::read(d)).collect::<Result<Vec<_>>>()?;
    let merged = EvalReport::merge(reports);
    merged.write(out_dir)?;
    Ok(merged)
}
