//! Report rows, `results.csv`, run metadata and the text summary.
//!
//! `results.csv` columns: `system,train_channel,test_channel,snr_db,mse,sdr_db,segsnr_db,pesq`.
//! Infinite values (noiseless `snr_db`, perfect `sdr_db`) are written `inf`.
//! `train_channel` is empty for the untrained baseline and `pesq` is empty
//! when no scorer ran. Reals use the shortest text that parses back to the
//! same `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::channel::ChannelFamily;
use crate::error::{Error, Result};
use crate::metrics::{PESQ_MAX, PESQ_MIN};

pub const RESULTS_FILE: &str = "results.csv";
pub const METADATA_FILE: &str = "metadata.txt";
pub const SUMMARY_FILE: &str = "summary.txt";

pub const HEADER: [&str; 8] = [
    "system",
    "train_channel",
    "test_channel",
    "snr_db",
    "mse",
    "sdr_db",
    "segsnr_db",
    "pesq",
];

/// Build identifier baked in at compile time.
pub const BUILD_ID: &str = env!("DEEPSC_BUILD_ID");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum System {
    DeepSc,
    Baseline,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::DeepSc => "deepsc-s",
            System::Baseline => "baseline",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "deepsc-s" => Ok(System::DeepSc),
            "baseline" => Ok(System::Baseline),
            _ => Err(Error::Report(format!("unknown system '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub system: System,
    pub train_channel: Option<ChannelFamily>,
    pub test_channel: ChannelFamily,
    pub snr_db: f64,
    pub mse: f64,
    pub sdr_db: f64,
    pub segsnr_db: f64,
    pub pesq: Option<f64>,
}

/// Provenance of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMeta {
    pub build_id: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub runs: Vec<RunMeta>,
}

pub fn fmt_real(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn parse_real(field: &str, v: &str) -> Result<f64> {
    let x = match v {
        "inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        _ => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Report(format!("{field}: '{v}' is not a real number")))?,
    };
    Ok(x)
}

impl ReportRow {
    fn fields(&self) -> [String; 8] {
        [
            self.system.name().to_string(),
            self.train_channel.map(|c| c.name().to_string()).unwrap_or_default(),
            self.test_channel.name().to_string(),
            fmt_real(self.snr_db),
            fmt_real(self.mse),
            fmt_real(self.sdr_db),
            fmt_real(self.segsnr_db),
            self.pesq.map(fmt_real).unwrap_or_default(),
        ]
    }

    fn from_fields(r: &csv::StringRecord) -> Result<Self> {
        if r.len() != HEADER.len() {
            return Err(Error::Report(format!("expected {} fields, got {}", HEADER.len(), r.len())));
        }
        let family = |v: &str| v.parse::<ChannelFamily>().map_err(|e| Error::Report(e.to_string()));
        let system = System::parse(&r[0])?;
        let train_channel = match &r[1] {
            "" => None,
            v => Some(family(v)?),
        };
        if (system == System::DeepSc) != train_channel.is_some() {
            return Err(Error::Report("train_channel must be set exactly for deepsc-s rows".into()));
        }
        let mse = parse_real("mse", &r[4])?;
        if !(mse >= 0.0) || mse.is_infinite() {
            return Err(Error::Report(format!("mse must be finite and >= 0, got {mse}")));
        }
        let pesq = match &r[7] {
            "" => None,
            v => {
                let p = parse_real("pesq", v)?;
                if !(PESQ_MIN..=PESQ_MAX).contains(&p) {
                    return Err(Error::Report(format!("pesq {p} outside [{PESQ_MIN}, {PESQ_MAX}]")));
                }
                Some(p)
            }
        };
        Ok(Self {
            system,
            train_channel,
            test_channel: family(&r[2])?,
            snr_db: parse_real("snr_db", &r[3])?,
            mse,
            sdr_db: parse_real("sdr_db", &r[5])?,
            segsnr_db: parse_real("segsnr_db", &r[6])?,
            pesq,
        })
    }
}

pub fn write_results(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Strict reader: exact header, typed columns, no ragged rows.
pub fn read_results(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        ?;
    let header = r.headers()?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Report(format!("unexpected header in {}", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(ReportRow::from_fields(&rec)?);
    }
    Ok(rows)
}

impl RunMeta {
    pub fn new(config_hash: impl Into<String>, seeds: BTreeMap<String, u64>) -> Self {
        Self {
            build_id: BUILD_ID.to_string(),
            config_hash: config_hash.into(),
            seeds,
        }
    }
}

fn write_meta(path: &Path, runs: &[RunMeta]) -> Result<()> {
    let mut s = String::new();
    for (i, m) in runs.iter().enumerate() {
        let _ = writeln!(s, "[run.{i}]");
        let _ = writeln!(s, "build_id = {}", m.build_id);
        let _ = writeln!(s, "config_hash = {}", m.config_hash);
        for (k, v) in &m.seeds {
            let _ = writeln!(s, "seed.{k} = {v}");
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn read_meta(path: &Path) -> Result<Vec<RunMeta>> {
    let text = fs::read_to_string(path)?;
    let mut runs: Vec<RunMeta> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if line.starts_with("[run.") {
            runs.push(RunMeta {
                build_id: String::new(),
                config_hash: String::new(),
                seeds: BTreeMap::new(),
            });
            continue;
        }
        let bad = || Error::Report(format!("{}: bad metadata line '{line}'", path.display()));
        let run = runs.last_mut().ok_or_else(bad)?;
        let (k, v) = line.split_once('=').ok_or_else(bad)?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "build_id" => run.build_id = v.to_string(),
            "config_hash" => run.config_hash = v.to_string(),
            _ => {
                let name = k.strip_prefix("seed.").ok_or_else(bad)?;
                run.seeds.insert(name.to_string(), v.parse().map_err(|_| bad())?);
            }
        }
    }
    Ok(runs)
}

impl EvalReport {
    pub fn new(rows: Vec<ReportRow>, meta: RunMeta) -> Self {
        Self { rows, runs: vec![meta] }
    }

    /// Concatenates rows; every source run keeps its own metadata entry.
    pub fn merge(reports: impl IntoIterator<Item = EvalReport>) -> Self {
        let mut out = EvalReport::default();
        for r in reports {
            out.rows.extend(r.rows);
            out.runs.extend(r.runs);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_results(&dir.join(RESULTS_FILE), &self.rows)?;
        write_meta(&dir.join(METADATA_FILE), &self.runs)?;
        fs::write(dir.join(SUMMARY_FILE), self.summary())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let rows = read_results(&dir.join(RESULTS_FILE))?;
        let meta = dir.join(METADATA_FILE);
        let runs = if meta.exists() { read_meta(&meta)? } else { Vec::new() };
        Ok(Self { rows, runs })
    }

    /// Baseline row for the same test cell, if any.
    pub fn baseline_for(&self, r: &ReportRow) -> Option<&ReportRow> {
        self.rows.iter().find(|b| {
            b.system == System::Baseline && b.test_channel == r.test_channel && b.snr_db == r.snr_db
        })
    }

    /// Comparison table. `>` marks cells where DeepSC-S has the higher SDR.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<9} {:<9} {:<9} {:>6} {:>12} {:>9} {:>9} {:>6} {:>11}",
            "system", "train", "test", "snr", "mse", "sdr_db", "segsnr", "pesq", "vs_baseline"
        );
        for r in &self.rows {
            let delta = match (r.system, self.baseline_for(r)) {
                (System::DeepSc, Some(b)) => {
                    let d = r.sdr_db - b.sdr_db;
                    format!("{}{:+.2}", if r.sdr_db > b.sdr_db { ">" } else { " " }, d)
                }
                _ => String::new(),
            };
            let _ = writeln!(
                s,
                "{:<9} {:<9} {:<9} {:>6} {:>12.4e} {:>9.2} {:>9.2} {:>6} {:>11}",
                r.system.name(),
                r.train_channel.map(|c| c.name()).unwrap_or("-"),
                r.test_channel.name(),
                fmt_real(r.snr_db),
                r.mse,
                r.sdr_db,
                r.segsnr_db,
                r.pesq.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into()),
                delta
            );
        }
        let _ = writeln!(s, "segsnr is a segmental-SNR proxy, not PESQ.");
        s
    }
}
