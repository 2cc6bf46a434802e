//! Training loop: frame, transmit through the simulated channel, decode,
//! MSE against the input, SGD on every parameter at once.

use std::io::Write;
use std::path::Path;

use autodiff::{Sgd, Tape, Tensor};

use crate::channel::{ChannelRealization, ChannelSpec};
use crate::error::{Error, Result};
use crate::model::DeepScModel;
use crate::speech::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub channel: ChannelSpec,
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling; `None` leaves gradients untouched.
    pub clip_norm: Option<f64>,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Improvement below this does not reset patience.
    pub min_delta: f64,
    pub init_seed: u64,
    pub data_seed: u64,
    /// Reuse one channel draw for every step instead of a fresh one.
    pub fixed_channel: bool,
}

impl TrainSettings {
    pub fn new(channel: ChannelSpec) -> Self {
        Self {
            channel,
            lr: 0.001,
            momentum: 0.0,
            clip_norm: None,
            batch: 4,
            max_epochs: 200,
            patience: 5,
            min_delta: 1e-7,
            init_seed: 1,
            data_seed: 2,
            fixed_channel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::Config("gradient clip norm must be > 0".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        self.channel.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Steps taken so far, including this epoch.
    pub steps: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeepScModel<f32>,
    pub curve: Vec<EpochRecord>,
    pub step_losses: Vec<f64>,
    pub stopped_early: bool,
}

/// One update on a framed batch. Returns the loss before the update.
pub fn train_step(
    model: &mut DeepScModel<f32>,
    opt: &mut Sgd,
    m: &Tensor<f32>,
    channel: Option<(&ChannelRealization, bool)>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let mv = tape.constant(m.clone());
    let out = model.forward(&mut tape, &vars, mv, channel)?;
    let loss = tape.mse_loss(out.m_hat, mv)?;
    let value = tape.value(loss)[0] as f64;
    if !value.is_finite() {
        return Ok(value);
    }
    let grads = tape.backward(loss)?;
    for (p, &v) in model.params_mut().iter_mut().zip(&vars) {
        p.zero_grad();
        grads.accumulate_into(v, p)?;
    }
    opt.step(model.params_mut())?;
    Ok(value)
}

/// Loss of the current model on a batch, without updating anything.
pub fn batch_loss(
    model: &DeepScModel<f32>,
    m: &Tensor<f32>,
    channel: Option<(&ChannelRealization, bool)>,
) -> Result<f64> {
    let (m_hat, _) = model.infer(m, channel)?;
    Ok(crate::metrics::mse(m.data(), m_hat.data())?)
}

/// Trains `model` until the epoch-mean loss stops improving or the epoch
/// cap is hit. A non-finite loss aborts with the 0-based step index.
pub fn train(model: DeepScModel<f32>, data: &Dataset, s: &TrainSettings) -> Result<TrainOutcome> {
    s.validate()?;
    if data.batches_per_epoch(s.batch) == 0 {
        return Err(Error::Dataset(format!(
            "{} clips cannot fill a batch of {}",
            data.len(),
            s.batch
        )));
    }
    let mut model = model;
    let mut opt = Sgd::new(s.lr)
        .with_momentum(s.momentum)
        .with_clip_norm(s.clip_norm);
    let symbols = model.config().symbols_per_clip();
    let mut curve = Vec::new();
    let mut step_losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 0..s.max_epochs {
        let batches = data.batches(s.batch, s.data_seed, epoch as u64)?;
        let mut total = 0.0;
        for b in &batches {
            let step = step_losses.len();
            let stream = if s.fixed_channel { 0 } else { step as u64 };
            let real = s.channel.realize(b.batch_size(), symbols, stream)?;
            let loss = train_step(&mut model, &mut opt, &b.data, Some((&real, s.channel.equalize)))?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            step_losses.push(loss);
            total += loss;
        }
        let mean_loss = total / batches.len() as f64;
        curve.push(EpochRecord {
            epoch,
            steps: step_losses.len(),
            mean_loss,
        });
        if mean_loss < best - s.min_delta {
            best = mean_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= s.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        curve,
        step_losses,
        stopped_early,
    })
}

/// `epoch,steps,mean_loss`, one row per epoch.
pub fn write_loss_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,steps,mean_loss")?;
    for r in curve {
        writeln!(f, "{},{},{:e}", r.epoch, r.steps, r.mean_loss)?;
    }
    f.flush()?;
    Ok(())
}
