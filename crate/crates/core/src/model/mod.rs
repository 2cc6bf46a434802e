//! The transceiver network: SE-ResNet speech encoder, CNN + dense channel
//! encoder with power normalization, the differentiable channel, and the
//! mirrored receiver.
//!
//! Shape chain for a batch of `B` clips:
//! `[B,F,L] -> [B,F,L,D] -> [B,F,2N] -> [B,FN,2] -> channel -> [B,FN,2]
//! -> [B,F,2N] -> [B,F,L,D] -> [B,F,L]`.

mod checkpoint;

use std::collections::HashMap;

use autodiff::{Init, Real, Tape, Tensor, Var};
use sha2::{Digest, Sha256};

use crate::channel::{transmit_graph, ChannelRealization};
use crate::error::{Error, Result};
use crate::speech::FrameLayout;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Width of the convolution inside the channel encoder and decoder.
pub const CHANNEL_CONV_WIDTH: usize = 8;
const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Feature channels.
    pub d: usize,
    /// Complex symbols per frame.
    pub n: usize,
    pub frames: usize,
    pub frame_len: usize,
    /// SE-ResNet blocks on each side.
    pub blocks: usize,
    /// SE reduction ratio.
    pub reduction: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 32,
            n: 16,
            frames: 128,
            frame_len: 128,
            blocks: 4,
            reduction: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d", self.d),
            ("n", self.n),
            ("frames", self.frames),
            ("frame_len", self.frame_len),
            ("reduction", self.reduction),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be >= 1")));
        }
        if self.d % self.reduction != 0 {
            return Err(Error::Config(format!(
                "reduction ratio {} must divide d = {}",
                self.reduction, self.d
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<FrameLayout> {
        FrameLayout::new(self.frames * self.frame_len, self.frames, self.frame_len)
    }

    /// Complex channel uses per clip.
    pub fn symbols_per_clip(&self) -> usize {
        self.frames * self.n
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let conv = |cin: usize, cout: usize| KERNEL * KERNEL * cin * cout + cout;
        let dense = |i: usize, o: usize| i * o + o;
        let (d, h, c) = (self.d, self.d / self.reduction, CHANNEL_CONV_WIDTH);
        let se = 2 * conv(d, d) + dense(d, h) + dense(h, d);
        conv(1, d)
            + 2 * self.blocks * se
            + conv(d, c)
            + dense(self.frame_len * c, 2 * self.n)
            + dense(2 * self.n, self.frame_len * c)
            + conv(c, d)
            + conv(d, 1)
    }

    /// `(name, shape, fan_in)` for every parameter, in registration order.
    /// Biases have fan-in 0.
    fn param_specs(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut out = Vec::new();
        let mut conv = |name: &str, cin: usize, cout: usize| {
            out.push((format!("{name}.k"), vec![KERNEL, KERNEL, cin, cout], KERNEL * KERNEL * cin));
            out.push((format!("{name}.b"), vec![cout], 0));
        };
        let (d, h, c) = (self.d, self.d / self.reduction, CHANNEL_CONV_WIDTH);
        let l = self.frame_len;
        conv("enc.lift", 1, d);
        let mut se_names = Vec::new();
        for side in ["enc", "dec"] {
            for i in 0..self.blocks {
                let p = format!("{side}.se{i}");
                conv(&format!("{p}.conv1"), d, d);
                conv(&format!("{p}.conv2"), d, d);
                se_names.push(p);
            }
        }
        conv("chenc.conv", d, c);
        conv("chdec.conv", c, d);
        conv("dec.out", d, 1);
        for p in se_names {
            out.push((format!("{p}.dense1.w"), vec![d, h], d));
            out.push((format!("{p}.dense1.b"), vec![h], 0));
            out.push((format!("{p}.dense2.w"), vec![h, d], h));
            out.push((format!("{p}.dense2.b"), vec![d], 0));
        }
        out.push(("chenc.dense.w".into(), vec![l * c, 2 * self.n], l * c));
        out.push(("chenc.dense.b".into(), vec![2 * self.n], 0));
        out.push(("chdec.dense.w".into(), vec![2 * self.n, l * c], 2 * self.n));
        out.push(("chdec.dense.b".into(), vec![l * c], 0));
        out
    }
}

/// How the SE-ResNet blocks apply their attention gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Attention {
    #[default]
    Learned,
    /// `a = 1`: a plain residual block.
    Bypass,
}

/// Named, ordered parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepScModel<T: Real = f32> {
    config: ModelConfig,
    names: Vec<String>,
    index: HashMap<String, usize>,
    params: Vec<Tensor<T>>,
    pub attention: Attention,
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub m_hat: Var,
    /// Normalized transmit symbols `[B, FN, 2]`.
    pub x: Var,
    /// Received (and, if enabled, equalized) symbols `[B, FN, 2]`.
    pub y: Var,
    /// Mean complex-symbol power per batch item.
    pub tx_power: Vec<f64>,
}

impl<T: Real> DeepScModel<T> {
    /// He-normal weights, zero biases. Each tensor draws from its own seed
    /// derived from `seed` and its position.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut tensors = Vec::new();
        for (i, (name, shape, fan_in)) in config.param_specs().into_iter().enumerate() {
            let init = if fan_in == 0 {
                Init::Zeros
            } else {
                Init::HeNormal {
                    fan_in,
                    seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64),
                }
            };
            tensors.push((name, Tensor::create(&shape, init)?.parameter()));
        }
        Self::from_named(config, tensors)
    }

    /// Rebuilds a model from named tensors; every expected parameter must be
    /// present with the expected shape.
    pub fn from_named(config: ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let mut given: HashMap<String, Tensor<T>> = tensors.into_iter().collect();
        let specs = config.param_specs();
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for (name, shape, _) in specs {
            let t = given.remove(&name).ok_or_else(|| {
                Error::CheckpointIncompatible(format!("missing parameter {name}"))
            })?;
            if t.shape() != shape.as_slice() {
                return Err(Error::CheckpointIncompatible(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            let t = if t.requires_grad() { t } else { t.parameter() };
            names.push(name);
            params.push(t);
        }
        if let Some(extra) = given.keys().next() {
            return Err(Error::CheckpointIncompatible(format!("unexpected parameter {extra}")));
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self {
            config,
            names,
            index,
            params,
            attention: Attention::Learned,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> DeepScModel<U> {
        DeepScModel {
            config: self.config,
            names: self.names.clone(),
            index: self.index.clone(),
            params: self.params.iter().map(|p| p.cast::<U>().parameter()).collect(),
            attention: self.attention,
        }
    }

    /// Registers every parameter as a tape leaf, in order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p)).collect()
    }

    fn var(&self, vars: &[Var], name: &str) -> Var {
        vars[self.index[name]]
    }

    fn conv(&self, tape: &mut Tape<T>, vars: &[Var], x: Var, name: &str) -> Result<Var> {
        let k = self.var(vars, &format!("{name}.k"));
        let b = self.var(vars, &format!("{name}.b"));
        Ok(tape.conv2d(x, k, b)?)
    }

    fn dense(&self, tape: &mut Tape<T>, vars: &[Var], x: Var, name: &str) -> Result<Var> {
        let w = self.var(vars, &format!("{name}.w"));
        let b = self.var(vars, &format!("{name}.b"));
        let xw = tape.matmul(x, w)?;
        Ok(tape.add(xw, b)?)
    }

    fn check_input(&self, tape: &Tape<T>, v: Var, want: &[usize], what: &str) -> Result<usize> {
        let s = tape.shape(v);
        if s.len() != want.len() + 1 || s[1..] != *want {
            return Err(Error::Shape(format!("{what}: expected [B, {want:?}], got {s:?}")));
        }
        Ok(s[0])
    }

    /// `x + y * a` with `y = conv2(relu(conv1(x)))` and the channel gate
    /// `a = sigmoid(dense2(relu(dense1(gap(y)))))`. Returns the output and
    /// the gate `[B, C]` (absent in bypass mode).
    pub fn se_block(&self, tape: &mut Tape<T>, vars: &[Var], x: Var, prefix: &str) -> Result<(Var, Option<Var>)> {
        let s = tape.shape(x).to_vec();
        if s.len() != 4 || s[3] != self.config.d {
            return Err(Error::Shape(format!(
                "SE-ResNet block {prefix} expects {} channels, got {s:?}",
                self.config.d
            )));
        }
        let c1 = self.conv(tape, vars, x, &format!("{prefix}.conv1"))?;
        let r1 = tape.relu(c1);
        let y = self.conv(tape, vars, r1, &format!("{prefix}.conv2"))?;
        if self.attention == Attention::Bypass {
            return Ok((tape.add(x, y)?, None));
        }
        let z = tape.global_avg_pool(y)?;
        let h = self.dense(tape, vars, z, &format!("{prefix}.dense1"))?;
        let h = tape.relu(h);
        let g = self.dense(tape, vars, h, &format!("{prefix}.dense2"))?;
        let a = tape.sigmoid(g);
        let gate = tape.reshape(a, &[s[0], 1, 1, s[3]])?;
        let ya = tape.mul(y, gate)?;
        Ok((tape.add(x, ya)?, Some(a)))
    }

    /// `[B,F,L] -> [B,F,L,D]`.
    pub fn speech_encode(&self, tape: &mut Tape<T>, vars: &[Var], m: Var) -> Result<Var> {
        let c = &self.config;
        let b = self.check_input(tape, m, &[c.frames, c.frame_len], "speech encoder")?;
        let x = tape.reshape(m, &[b, c.frames, c.frame_len, 1])?;
        let mut h = self.conv(tape, vars, x, "enc.lift")?;
        for i in 0..c.blocks {
            h = self.se_block(tape, vars, h, &format!("enc.se{i}"))?.0;
        }
        Ok(h)
    }

    /// `[B,F,L,D] -> [B,FN,2]`, normalized to unit mean symbol power per item.
    pub fn channel_encode(&self, tape: &mut Tape<T>, vars: &[Var], feats: Var) -> Result<Var> {
        let c = &self.config;
        let b = self.check_input(tape, feats, &[c.frames, c.frame_len, c.d], "channel encoder")?;
        let h = self.conv(tape, vars, feats, "chenc.conv")?;
        let h = tape.relu(h);
        let rows = tape.reshape(h, &[b * c.frames, c.frame_len * CHANNEL_CONV_WIDTH])?;
        let u = self.dense(tape, vars, rows, "chenc.dense")?;
        let x = tape.reshape(u, &[b, c.frames * c.n, 2])?;
        Ok(tape.normalize_power(x, 2, T::one())?)
    }

    /// `[B,FN,2] -> [B,F,L,D]`.
    pub fn channel_decode(&self, tape: &mut Tape<T>, vars: &[Var], y: Var) -> Result<Var> {
        let c = &self.config;
        let b = self.check_input(tape, y, &[c.frames * c.n, 2], "channel decoder")?;
        let rows = tape.reshape(y, &[b * c.frames, 2 * c.n])?;
        let h = self.dense(tape, vars, rows, "chdec.dense")?;
        let h = tape.relu(h);
        let h = tape.reshape(h, &[b, c.frames, c.frame_len, CHANNEL_CONV_WIDTH])?;
        let h = self.conv(tape, vars, h, "chdec.conv")?;
        Ok(tape.relu(h))
    }

    /// `[B,F,L,D] -> [B,F,L]`; the final convolution has no activation.
    pub fn speech_decode(&self, tape: &mut Tape<T>, vars: &[Var], feats: Var) -> Result<Var> {
        let c = &self.config;
        let b = self.check_input(tape, feats, &[c.frames, c.frame_len, c.d], "speech decoder")?;
        let mut h = feats;
        for i in 0..c.blocks {
            h = self.se_block(tape, vars, h, &format!("dec.se{i}"))?.0;
        }
        let out = self.conv(tape, vars, h, "dec.out")?;
        Ok(tape.reshape(out, &[b, c.frames, c.frame_len])?)
    }

    /// Transmitter, channel, receiver. `channel = None` is an ideal link.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        m: Var,
        channel: Option<(&ChannelRealization, bool)>,
    ) -> Result<Forward> {
        let feats = self.speech_encode(tape, vars, m)?;
        let x = self.channel_encode(tape, vars, feats)?;
        let y = match channel {
            Some((real, equalize)) => transmit_graph(tape, x, real, equalize)?,
            None => x,
        };
        let symbols = self.config.symbols_per_clip();
        let tx_power = tape
            .value(x)
            .chunks_exact(2 * symbols)
            .map(|c| c.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / symbols as f64)
            .collect();
        let b_hat = self.channel_decode(tape, vars, y)?;
        let m_hat = self.speech_decode(tape, vars, b_hat)?;
        Ok(Forward { m_hat, x, y, tx_power })
    }
}

impl DeepScModel<f32> {
    /// SHA-256 over names, shapes and little-endian parameter bytes.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in self.names.iter().zip(&self.params) {
            h.update(name.as_bytes());
            for &d in p.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in p.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Frozen inference on a framed batch `[B,F,L]`.
    pub fn infer(
        &self,
        m: &Tensor<f32>,
        channel: Option<(&ChannelRealization, bool)>,
    ) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let mv = tape.constant(m.clone());
        let out = self.forward(&mut tape, &vars, mv, channel)?;
        Ok((tape.to_tensor(out.m_hat), tape.to_tensor(out.x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelFamily, ChannelSpec};

    fn tiny() -> ModelConfig {
        ModelConfig {
            d: 8,
            n: 2,
            frames: 4,
            frame_len: 4,
            blocks: 2,
            reduction: 4,
        }
    }

    fn input(cfg: &ModelConfig, b: usize, seed: u64) -> Tensor<f32> {
        Tensor::create(
            &[b, cfg.frames, cfg.frame_len],
            Init::Uniform { lo: -0.5, hi: 0.5, seed },
        )
        .unwrap()
    }

    #[test]
    fn table_one_shapes_and_count() {
        let cfg = ModelConfig::default();
        // hand count: lift 320, SE block 19048 (x8), chenc 2312 + 32800,
        // chdec 33792 + 2336, output conv 289
        assert_eq!(cfg.param_count(), 320 + 8 * 19_048 + 2312 + 32_800 + 33_792 + 2336 + 289);
        assert_eq!(cfg.symbols_per_clip(), 2048);
        let shapes: usize = cfg
            .param_specs()
            .iter()
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum();
        assert_eq!(shapes, cfg.param_count());
    }

    #[test]
    fn shape_chain() {
        let cfg = tiny();
        let model = DeepScModel::<f32>::new(cfg, 1).unwrap();
        assert_eq!(model.param_count(), cfg.param_count());
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let m = tape.constant(input(&cfg, 3, 2));
        let b = model.speech_encode(&mut tape, &vars, m).unwrap();
        assert_eq!(tape.shape(b), &[3, 4, 4, 8]);
        let x = model.channel_encode(&mut tape, &vars, b).unwrap();
        assert_eq!(tape.shape(x), &[3, 8, 2]);
        let bh = model.channel_decode(&mut tape, &vars, x).unwrap();
        assert_eq!(tape.shape(bh), &[3, 4, 4, 8]);
        let mh = model.speech_decode(&mut tape, &vars, bh).unwrap();
        assert_eq!(tape.shape(mh), &[3, 4, 4]);
        let wrong = tape.constant(Tensor::zeros(&[3, 4, 5]).unwrap());
        assert!(matches!(model.speech_encode(&mut tape, &vars, wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn unit_power_for_any_weights() {
        let cfg = tiny();
        for seed in 0..5 {
            let model = DeepScModel::<f32>::new(cfg, seed).unwrap();
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let m = tape.constant(input(&cfg, 4, seed + 10));
            let out = model.forward(&mut tape, &vars, m, None).unwrap();
            for p in out.tx_power {
                assert!((p - 1.0).abs() < 1e-5, "{p}");
            }
        }
    }

    #[test]
    fn zero_model_is_silent() {
        let cfg = tiny();
        let mut model = DeepScModel::<f32>::new(cfg, 3).unwrap();
        for p in model.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let (m_hat, _) = model.infer(&input(&cfg, 2, 4), None).unwrap();
        assert!(m_hat.data().iter().all(|&v| v == 0.0));

        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let z = tape.constant(Tensor::zeros(&[1, 4, 4, 8]).unwrap());
        let (out, _) = model.se_block(&mut tape, &vars, z, "enc.se0").unwrap();
        assert!(tape.value(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gate_in_unit_interval() {
        let cfg = tiny();
        let model = DeepScModel::<f32>::new(cfg, 5).unwrap();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let x = tape.constant(Tensor::create(&[2, 4, 4, 8], Init::Uniform { lo: -3.0, hi: 3.0, seed: 1 }).unwrap());
        let (_, a) = model.se_block(&mut tape, &vars, x, "dec.se1").unwrap();
        assert!(tape.value(a.unwrap()).iter().all(|&v| v > 0.0 && v < 1.0));
    }

    /// Residual branch `y` computed directly from the block's convolutions.
    fn residual_branch(model: &DeepScModel<f32>, x: &Tensor<f32>, prefix: &str) -> Vec<f32> {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let c1 = model.conv(&mut tape, &vars, xv, &format!("{prefix}.conv1")).unwrap();
        let r = tape.relu(c1);
        let y = model.conv(&mut tape, &vars, r, &format!("{prefix}.conv2")).unwrap();
        tape.value(y).to_vec()
    }

    fn block_output(model: &DeepScModel<f32>, x: &Tensor<f32>, prefix: &str) -> Vec<f32> {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let (out, _) = model.se_block(&mut tape, &vars, xv, prefix).unwrap();
        tape.value(out).to_vec()
    }

    #[test]
    fn gate_of_one_is_plain_residual() {
        let cfg = tiny();
        let mut model = DeepScModel::<f32>::new(cfg, 6).unwrap();
        let x = Tensor::create(&[2, 4, 4, 8], Init::Uniform { lo: -1.0, hi: 1.0, seed: 2 }).unwrap();
        let y = residual_branch(&model, &x, "enc.se0");
        let plain: Vec<f32> = x.data().iter().zip(&y).map(|(a, b)| a + b).collect();

        model.attention = Attention::Bypass;
        let bypass = block_output(&model, &x, "enc.se0");
        for (a, b) in bypass.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-6);
        }

        // saturating the gate bias drives a to 1 in f32
        model.attention = Attention::Learned;
        model.get_mut("enc.se0.dense2.w").unwrap().data_mut().fill(0.0);
        model.get_mut("enc.se0.dense2.b").unwrap().data_mut().fill(40.0);
        let gated = block_output(&model, &x, "enc.se0");
        for (a, b) in gated.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gate_logits_halve_the_branch() {
        let cfg = tiny();
        let mut model = DeepScModel::<f32>::new(cfg, 7).unwrap();
        model.get_mut("dec.se0.dense2.w").unwrap().data_mut().fill(0.0);
        model.get_mut("dec.se0.dense2.b").unwrap().data_mut().fill(0.0);
        let x = Tensor::create(&[1, 4, 4, 8], Init::Uniform { lo: -1.0, hi: 1.0, seed: 3 }).unwrap();
        let y = residual_branch(&model, &x, "dec.se0");
        let out = block_output(&model, &x, "dec.se0");
        for ((o, xi), yi) in out.iter().zip(x.data()).zip(&y) {
            assert_eq!(*o, xi + 0.5 * yi);
        }
    }

    #[test]
    fn output_layer_is_linear() {
        let cfg = tiny();
        let model = DeepScModel::<f32>::new(cfg, 8).unwrap();
        let (m_hat, _) = model.infer(&input(&cfg, 2, 9), None).unwrap();
        assert!(m_hat.data().iter().any(|&v| v < 0.0));
        assert!(m_hat.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradients_reach_the_first_layer_through_fading() {
        let cfg = tiny();
        let model = DeepScModel::<f32>::new(cfg, 9).unwrap();
        let m = input(&cfg, 2, 1);
        let real = ChannelSpec::new(ChannelFamily::Rayleigh, 8.0, 4)
            .realize(2, cfg.symbols_per_clip(), 0)
            .unwrap();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let mv = tape.constant(m);
        let out = model.forward(&mut tape, &vars, mv, Some((&real, true))).unwrap();
        let loss = tape.mse_loss(out.m_hat, mv).unwrap();
        assert!(tape.value(loss)[0].is_finite());
        let g = tape.backward(loss).unwrap();
        let first = g.wrt(vars[0]).unwrap();
        assert!(first.iter().map(|v| v * v).sum::<f32>() > 0.0);
    }

    #[test]
    fn noiseless_awgn_is_finite() {
        let cfg = tiny();
        let model = DeepScModel::<f32>::new(cfg, 10).unwrap();
        let real = ChannelSpec::noiseless(ChannelFamily::Awgn, 0)
            .realize(1, cfg.symbols_per_clip(), 0)
            .unwrap();
        let m = input(&cfg, 1, 2);
        let (with, x) = model.infer(&m, Some((&real, true))).unwrap();
        let (without, _) = model.infer(&m, None).unwrap();
        assert_eq!(with, without);
        assert_eq!(x.shape(), &[1, 8, 2]);
    }

    #[test]
    fn scale_invariant_symbols() {
        let cfg = tiny();
        let model = DeepScModel::<f64>::new(cfg, 11).unwrap();
        let feats = Tensor::<f64>::create(&[1, 4, 4, 8], Init::Uniform { lo: 0.0, hi: 1.0, seed: 5 }).unwrap();
        let mut symbols = Vec::new();
        for scale in [1.0, 7.5] {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let f = tape.constant(feats.clone());
            let f = tape.scale(f, scale);
            // biases are zero, so conv, ReLU and dense are positively homogeneous
            let x = model.channel_encode(&mut tape, &vars, f).unwrap();
            symbols.push(tape.value(x).to_vec());
        }
        for (a, b) in symbols[0].iter().zip(&symbols[1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
