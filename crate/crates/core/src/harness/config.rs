//! Experiment configuration: flat `key = value` text grouped under
//! `[section]` headers, `#` comments. Every key can be overridden with
//! `section.key=value` strings (the `--set` flag of the command line).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::channel::{ChannelFamily, ChannelSpec, FadingGranularity};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::speech::{FrameLayout, ShortClips};

use super::eval::EvalSettings;
use super::train::TrainSettings;

/// Where clips come from when no directory is configured.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train_clips: usize,
    pub test_clips: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub synthetic: SyntheticData,
    pub short_clips: ShortClips,
    /// Fixed amplitude gain between file scale and the network's working
    /// scale. Metrics are always reported at file scale.
    pub gain: f64,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub eval: EvalSettings,
    pub baseline: bool,
    pub out_dir: PathBuf,
    pub pesq_cmd: Option<String>,
    /// Master seed; the per-purpose seeds derive from it.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut c = Self {
            train_dir: None,
            test_dir: None,
            synthetic: SyntheticData {
                train_clips: 16,
                test_clips: 8,
                seed: 7,
            },
            short_clips: ShortClips::Pad,
            gain: 1.0,
            model: ModelConfig::default(),
            train: TrainSettings::new(ChannelSpec::new(ChannelFamily::Rician, 8.0, 0)),
            eval: EvalSettings::default(),
            baseline: true,
            out_dir: PathBuf::from("out"),
            pesq_cmd: None,
            seed: 1,
        };
        c.apply_seed();
        c
    }
}

/// `key -> value` per section, in file order of last assignment.
type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_text(text: &str) -> Result<Sections> {
    let mut out = Sections::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", i + 1)))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        out.entry(section.clone())
            .or_default()
            .insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_snr(key: &str, v: &str) -> Result<f64> {
    match v.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        other => {
            let x: f64 = parse(key, other)?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Config(format!("{key}: invalid SNR '{v}'")))
            }
        }
    }
}

/// `start:step:stop` (inclusive) or a comma list; `inf` allowed in lists.
pub fn parse_snr_grid(v: &str) -> Result<Vec<f64>> {
    let v = v.trim();
    let grid = if v.contains(':') {
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("snr grid '{v}': expected start:step:stop")));
        }
        let (start, step, stop): (f64, f64, f64) = (
            parse("snr_grid", parts[0])?,
            parse("snr_grid", parts[1])?,
            parse("snr_grid", parts[2])?,
        );
        if !(step > 0.0) || stop < start {
            return Err(Error::Config(format!("snr grid '{v}' is empty or has a non-positive step")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + step * i as f64).collect()
    } else {
        v.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_snr("snr_grid", s))
            .collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() {
        return Err(Error::Config("snr grid must not be empty".into()));
    }
    Ok(grid)
}

pub fn parse_channels(v: &str) -> Result<Vec<ChannelFamily>> {
    let list = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<ChannelFamily>())
        .collect::<Result<Vec<_>>>()?;
    if list.is_empty() {
        return Err(Error::Config("channel set must not be empty".into()));
    }
    Ok(list)
}

fn fmt_snr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let sections = parse_text(text)?;
        // the master seed first so explicit per-purpose seeds win
        if let Some(v) = sections.get("").and_then(|s| s.get("seed")) {
            c.set("seed", v)?;
        }
        for (section, kv) in &sections {
            for (k, v) in kv {
                let key = if section.is_empty() {
                    k.clone()
                } else {
                    format!("{section}.{k}")
                };
                if key != "seed" {
                    c.set(&key, v)?;
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{assignment}': expected key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Re-derives every per-purpose seed from the master seed.
    pub fn apply_seed(&mut self) {
        let s = self.seed;
        self.train.init_seed = s;
        self.train.data_seed = s.wrapping_add(1);
        self.train.channel.seed = s.wrapping_add(2);
        self.eval.seed = s.wrapping_add(3);
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let opt_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                self.apply_seed();
            }
            "data.train_dir" => self.train_dir = opt_path(v),
            "data.test_dir" => self.test_dir = opt_path(v),
            "data.synthetic_train" => self.synthetic.train_clips = parse(key, v)?,
            "data.synthetic_test" => self.synthetic.test_clips = parse(key, v)?,
            "data.synthetic_seed" => self.synthetic.seed = parse(key, v)?,
            "data.gain" => self.gain = parse(key, v)?,
            "data.short_clips" => {
                self.short_clips = match v {
                    "pad" => ShortClips::Pad,
                    "skip" => ShortClips::Skip,
                    _ => return Err(Error::Config(format!("{key}: expected pad or skip"))),
                }
            }
            "model.d" => self.model.d = parse(key, v)?,
            "model.n" => self.model.n = parse(key, v)?,
            "model.frames" => self.model.frames = parse(key, v)?,
            "model.frame_len" => self.model.frame_len = parse(key, v)?,
            "model.blocks" => self.model.blocks = parse(key, v)?,
            "model.reduction" => self.model.reduction = parse(key, v)?,
            "channel.rician_k" => {
                let k = parse(key, v)?;
                self.train.channel.rician_k = k;
                self.eval.rician_k = k;
            }
            "channel.granularity" => {
                let g: FadingGranularity = v.parse()?;
                self.train.channel.granularity = g;
                self.eval.granularity = g;
            }
            "channel.equalize" => {
                let e = parse_bool(key, v)?;
                self.train.channel.equalize = e;
                self.eval.equalize = e;
            }
            "train.channel" => self.train.channel.family = v.parse()?,
            "train.snr_db" => self.train.channel.snr_db = parse_snr(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.momentum" => self.train.momentum = parse(key, v)?,
            "train.clip_norm" => {
                self.train.clip_norm = match v {
                    "" | "off" | "none" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "train.batch" => self.train.batch = parse(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,
            "train.patience" => self.train.patience = parse(key, v)?,
            "train.min_delta" => self.train.min_delta = parse(key, v)?,
            "train.init_seed" => self.train.init_seed = parse(key, v)?,
            "train.data_seed" => self.train.data_seed = parse(key, v)?,
            "train.channel_seed" => self.train.channel.seed = parse(key, v)?,
            "eval.channels" => self.eval.channels = parse_channels(v)?,
            "eval.snr_grid" => self.eval.snr_grid = parse_snr_grid(v)?,
            "eval.trials" => self.eval.trials = parse(key, v)?,
            "eval.batch" => self.eval.batch = parse(key, v)?,
            "eval.seed" => self.eval.seed = parse(key, v)?,
            "baseline.enabled" => self.baseline = parse_bool(key, v)?,
            "output.dir" => self.out_dir = PathBuf::from(v),
            "output.pesq_cmd" => self.pesq_cmd = (!v.is_empty()).then(|| v.to_string()),
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.layout()?;
        self.train.validate()?;
        self.eval.validate()?;
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(Error::Config(format!("data.gain must be > 0, got {}", self.gain)));
        }
        if self.train.lr <= 0.0 {
            return Err(Error::Config(format!("train.lr must be > 0, got {}", self.train.lr)));
        }
        if self.train_dir.is_none() && self.synthetic.train_clips == 0 {
            return Err(Error::Config("no training data: set data.train_dir or data.synthetic_train".into()));
        }
        if self.test_dir.is_none() && self.synthetic.test_clips == 0 {
            return Err(Error::Config("no test data: set data.test_dir or data.synthetic_test".into()));
        }
        Ok(())
    }

    /// Samples per clip `W = F * L`.
    pub fn layout(&self) -> Result<FrameLayout> {
        self.model.layout()
    }

    /// Canonical text form; parsing it yields an equal configuration.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let m = &self.model;
        let t = &self.train;
        let e = &self.eval;
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "train_dir = {}", path(&self.train_dir));
        let _ = writeln!(s, "test_dir = {}", path(&self.test_dir));
        let _ = writeln!(s, "synthetic_train = {}", self.synthetic.train_clips);
        let _ = writeln!(s, "synthetic_test = {}", self.synthetic.test_clips);
        let _ = writeln!(s, "synthetic_seed = {}", self.synthetic.seed);
        let _ = writeln!(s, "gain = {}", self.gain);
        let short = match self.short_clips {
            ShortClips::Pad => "pad",
            ShortClips::Skip => "skip",
        };
        let _ = writeln!(s, "short_clips = {short}");
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "d = {}\nn = {}\nframes = {}\nframe_len = {}\nblocks = {}\nreduction = {}",
            m.d, m.n, m.frames, m.frame_len, m.blocks, m.reduction);
        let _ = writeln!(s, "\n[channel]");
        let _ = writeln!(s, "rician_k = {}", t.channel.rician_k);
        let gran = match t.channel.granularity {
            FadingGranularity::PerClip => "per_clip",
            FadingGranularity::PerSymbol => "per_symbol",
        };
        let _ = writeln!(s, "granularity = {gran}");
        let _ = writeln!(s, "equalize = {}", t.channel.equalize);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "channel = {}", t.channel.family);
        let _ = writeln!(s, "snr_db = {}", fmt_snr(t.channel.snr_db));
        let clip = t.clip_norm.map(|c| c.to_string()).unwrap_or_else(|| "off".into());
        let _ = writeln!(s, "clip_norm = {clip}");
        let _ = writeln!(s, "lr = {}\nmomentum = {}\nbatch = {}\nmax_epochs = {}\npatience = {}\nmin_delta = {}",
            t.lr, t.momentum, t.batch, t.max_epochs, t.patience, t.min_delta);
        let _ = writeln!(s, "init_seed = {}\ndata_seed = {}\nchannel_seed = {}", t.init_seed, t.data_seed, t.channel.seed);
        let _ = writeln!(s, "\n[eval]");
        let chans: Vec<&str> = e.channels.iter().map(|c| c.name()).collect();
        let _ = writeln!(s, "channels = {}", chans.join(","));
        let grid: Vec<String> = e.snr_grid.iter().map(|&v| fmt_snr(v)).collect();
        let _ = writeln!(s, "snr_grid = {}", grid.join(","));
        let _ = writeln!(s, "trials = {}\nbatch = {}\nseed = {}", e.trials, e.batch, e.seed);
        let _ = writeln!(s, "\n[baseline]\nenabled = {}", self.baseline);
        let _ = writeln!(s, "\n[output]\ndir = {}", self.out_dir.display());
        let _ = writeln!(s, "pesq_cmd = {}", self.pesq_cmd.as_deref().unwrap_or(""));
        s
    }

    /// SHA-256 of the canonical text, first 16 hex digits.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}
