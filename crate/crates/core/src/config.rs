//! Flat `key=value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! gan.gen_width=38
//! gan.schedule=epochs
//! detector.kernels=81,41,21,7,7
//! pipeline.selection=loss
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::gan::{GanConfig, Schedule, SelectionMode, SpectralLoss};

/// Search of the checkpoint that gives the best downstream detector.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    /// How many of the lowest-loss checkpoints are probed.
    pub candidates: usize,
    pub epochs: usize,
    /// Candidates whose validation FAR exceeds this rank below all others.
    pub max_far: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            candidates: 4,
            epochs: 10,
            max_far: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub gan: GanConfig,
    pub detector: DetectorConfig,
    pub selection: SelectionMode,
    pub probe: ProbeConfig,
    /// Share of target healthy segments used for synthesis and training.
    pub split_fraction: f64,
    pub split_seed: u64,
    pub synth_seed: u64,
    /// Source speed held out for GAN validation; the highest speed if unset.
    pub val_speed: Option<u32>,
    /// Cap on validation pairs (`0` keeps all).
    pub max_val_pairs: usize,
    pub deterministic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gan: GanConfig::default(),
            detector: DetectorConfig::default(),
            selection: SelectionMode::Loss,
            probe: ProbeConfig::default(),
            split_fraction: crate::data::HEALTHY_TRAIN_FRACTION,
            split_seed: 0,
            synth_seed: 0,
            val_speed: None,
            max_val_pairs: 64,
            deterministic: true,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Every seed in the run set to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.gan.seed = seed;
        self.detector.seed = seed;
        self.split_seed = seed;
        self.synth_seed = seed;
        self
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let g = &mut self.gan;
        let d = &mut self.detector;
        match key {
            "gan.gen_width" => g.gen_width = num(key, v)?,
            "gan.disc_width" => g.disc_width = num(key, v)?,
            "gan.order" => g.order = num(key, v)?,
            "gan.lambda" => g.lambda = num(key, v)?,
            "gan.batch" => g.batch = num(key, v)?,
            "gan.max_iters" => g.max_iters = num(key, v)?,
            "gan.schedule" => {
                g.schedule = Schedule::parse(v).ok_or_else(|| Error::Config(format!("{key}: unknown `{v}`")))?
            }
            "gan.lr" => g.lr = num(key, v)?,
            "gan.noise_channels" => g.noise_channels = num(key, v)?,
            "gan.checkpoint_every" => g.checkpoint_every = num(key, v)?,
            "gan.seed" => g.seed = num(key, v)?,
            "gan.input_len" => g.input_len = num(key, v)?,
            "gan.stft_window" => g.stft.window_len = num(key, v)?,
            "gan.stft_hop" => g.stft.hop = num(key, v)?,
            "gan.spectral" => {
                g.spectral = SpectralLoss::parse(v).ok_or_else(|| Error::Config(format!("{key}: unknown `{v}`")))?
            }
            "detector.order" => d.order = num(key, v)?,
            "detector.hidden" => d.hidden = num(key, v)?,
            "detector.dense_hidden" => d.dense_hidden = num(key, v)?,
            "detector.kernels" => d.kernels = list(key, v)?,
            "detector.strides" => d.strides = list(key, v)?,
            "detector.padding" => d.padding = num(key, v)?,
            "detector.epochs" => d.epochs = num(key, v)?,
            "detector.lr" => d.lr = num(key, v)?,
            "detector.batch" => d.batch = num(key, v)?,
            "detector.seed" => d.seed = num(key, v)?,
            "detector.input_len" => d.input_len = num(key, v)?,
            "pipeline.selection" => {
                self.selection =
                    SelectionMode::parse(v).ok_or_else(|| Error::Config(format!("{key}: unknown `{v}`")))?
            }
            "pipeline.probe_candidates" => self.probe.candidates = num(key, v)?,
            "pipeline.probe_epochs" => self.probe.epochs = num(key, v)?,
            "pipeline.probe_max_far" => self.probe.max_far = num(key, v)?,
            "pipeline.split_fraction" => self.split_fraction = num(key, v)?,
            "pipeline.split_seed" => self.split_seed = num(key, v)?,
            "pipeline.synth_seed" => self.synth_seed = num(key, v)?,
            "pipeline.val_speed" => {
                self.val_speed = if v == "auto" { None } else { Some(num(key, v)?) }
            }
            "pipeline.max_val_pairs" => self.max_val_pairs = num(key, v)?,
            "pipeline.deterministic" => self.deterministic = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Apply `key=value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split_once('#').map_or(line, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gan.validate()?;
        self.detector.validate()?;
        crate::signal::Stft::new(self.gan.stft)?;
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config("pipeline.split_fraction must lie in (0, 1)".into()));
        }
        if self.gan.input_len != self.detector.input_len {
            return Err(Error::Config("gan.input_len and detector.input_len differ".into()));
        }
        Ok(())
    }

    /// Canonical text; [`Self::apply_text`] on it reproduces `self`.
    pub fn to_text(&self) -> String {
        let g = &self.gan;
        let d = &self.detector;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("gan.gen_width", g.gen_width.to_string());
        kv("gan.disc_width", g.disc_width.to_string());
        kv("gan.order", g.order.to_string());
        kv("gan.lambda", g.lambda.to_string());
        kv("gan.batch", g.batch.to_string());
        kv("gan.max_iters", g.max_iters.to_string());
        kv("gan.schedule", g.schedule.name().into());
        kv("gan.lr", g.lr.to_string());
        kv("gan.noise_channels", g.noise_channels.to_string());
        kv("gan.checkpoint_every", g.checkpoint_every.to_string());
        kv("gan.seed", g.seed.to_string());
        kv("gan.input_len", g.input_len.to_string());
        kv("gan.stft_window", g.stft.window_len.to_string());
        kv("gan.stft_hop", g.stft.hop.to_string());
        kv("gan.spectral", g.spectral.name().into());
        kv("detector.order", d.order.to_string());
        kv("detector.hidden", d.hidden.to_string());
        kv("detector.dense_hidden", d.dense_hidden.to_string());
        kv("detector.kernels", join(&d.kernels));
        kv("detector.strides", join(&d.strides));
        kv("detector.padding", d.padding.to_string());
        kv("detector.epochs", d.epochs.to_string());
        kv("detector.lr", d.lr.to_string());
        kv("detector.batch", d.batch.to_string());
        kv("detector.seed", d.seed.to_string());
        kv("detector.input_len", d.input_len.to_string());
        kv("pipeline.selection", self.selection.name().into());
        kv("pipeline.probe_candidates", self.probe.candidates.to_string());
        kv("pipeline.probe_epochs", self.probe.epochs.to_string());
        kv("pipeline.probe_max_far", self.probe.max_far.to_string());
        kv("pipeline.split_fraction", self.split_fraction.to_string());
        kv("pipeline.split_seed", self.split_seed.to_string());
        kv("pipeline.synth_seed", self.synth_seed.to_string());
        kv(
            "pipeline.val_speed",
            self.val_speed.map_or("auto".into(), |v| v.to_string()),
        );
        kv("pipeline.max_val_pairs", self.max_val_pairs.to_string());
        kv("pipeline.deterministic", self.deterministic.to_string());
        s
    }
}
