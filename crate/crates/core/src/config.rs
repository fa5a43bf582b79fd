//! Resolved run configuration: every command-line flag has a key here.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::keyvalue::KeyValues;
use crate::network::{Mixing, ModelConfig, ModelVariant};
use crate::training::{FineTuneData, OptimizerConfig, OptimizerKind, Schedule, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingKind {
    Conv,
    Recurrent,
}

impl FromStr for MixingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(MixingKind::Conv),
            "recurrent" => Ok(MixingKind::Recurrent),
            _ => Err(Error::Config(format!("unknown encoder_mixing `{s}` (conv | recurrent)"))),
        }
    }
}

impl std::fmt::Display for MixingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MixingKind::Conv => "conv",
            MixingKind::Recurrent => "recurrent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    WarmupInverseSqrt,
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "warmup-inverse-sqrt" => Ok(ScheduleKind::WarmupInverseSqrt),
            _ => Err(Error::Config(format!(
                "unknown schedule `{s}` (constant | warmup-inverse-sqrt)"
            ))),
        }
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::WarmupInverseSqrt => "warmup-inverse-sqrt",
        })
    }
}

/// Flat key set shared by the config file and the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: ModelVariant,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub encoder_mixing: MixingKind,
    pub conv_window: usize,
    pub embed_dim: usize,
    pub decoder_dim: usize,
    pub joint_dim: usize,
    pub vanilla_width_factor: f64,

    pub lambda: f64,
    pub learning_rate: f64,
    pub schedule: ScheduleKind,
    pub warmup_steps: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub fine_tune_data: FineTuneData,
    pub mono_mix_ratio: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub grad_clip: f64,

    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub split: Option<String>,
    pub utt: Option<String>,
    pub spec: Option<String>,
    pub beam: usize,
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let m = ModelConfig::toy(ModelVariant::ConditionalLS, 1, 1, 1);
        RunConfig {
            variant: m.variant,
            hidden_dim: m.hidden_dim,
            encoder_layers: m.encoder_layers,
            encoder_mixing: MixingKind::Conv,
            conv_window: 3,
            embed_dim: m.embed_dim,
            decoder_dim: m.decoder_dim,
            joint_dim: m.joint_dim,
            vanilla_width_factor: m.vanilla_width_factor,
            lambda: t.lambda,
            learning_rate: t.learning_rate,
            schedule: ScheduleKind::Constant,
            warmup_steps: 100,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: t.seed,
            fine_tune_data: t.fine_tune_data,
            mono_mix_ratio: t.mono_mix_ratio,
            optimizer: t.optimizer.kind,
            beta1: t.optimizer.beta1,
            beta2: t.optimizer.beta2,
            grad_clip: t.optimizer.grad_clip,
            data: None,
            out: None,
            init: None,
            model: None,
            split: None,
            utt: None,
            spec: None,
            beam: 10,
            force: false,
        }
    }
}

fn take_path(kv: &mut KeyValues, key: &str, slot: &mut Option<PathBuf>) {
    if let Some(v) = kv.take(key) {
        *slot = Some(PathBuf::from(v));
    }
}

fn take_string(kv: &mut KeyValues, key: &str, slot: &mut Option<String>) {
    if let Some(v) = kv.take(key) {
        *slot = Some(v);
    }
}

impl RunConfig {
    /// Applies every key in `text` on top of `self`.
    pub fn merge_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        let mut kv = KeyValues::parse(text, origin)?;
        kv.take_into("variant", &mut self.variant)?;
        kv.take_into("hidden_dim", &mut self.hidden_dim)?;
        kv.take_into("encoder_layers", &mut self.encoder_layers)?;
        kv.take_into("encoder_mixing", &mut self.encoder_mixing)?;
        kv.take_into("conv_window", &mut self.conv_window)?;
        kv.take_into("embed_dim", &mut self.embed_dim)?;
        kv.take_into("decoder_dim", &mut self.decoder_dim)?;
        kv.take_into("joint_dim", &mut self.joint_dim)?;
        kv.take_into("vanilla_width_factor", &mut self.vanilla_width_factor)?;
        kv.take_into("lambda", &mut self.lambda)?;
        kv.take_into("learning_rate", &mut self.learning_rate)?;
        kv.take_into("schedule", &mut self.schedule)?;
        kv.take_into("warmup_steps", &mut self.warmup_steps)?;
        kv.take_into("epochs", &mut self.epochs)?;
        kv.take_into("batch_size", &mut self.batch_size)?;
        kv.take_into("seed", &mut self.seed)?;
        kv.take_into("fine_tune_data", &mut self.fine_tune_data)?;
        kv.take_into("mono_mix_ratio", &mut self.mono_mix_ratio)?;
        kv.take_into("optimizer", &mut self.optimizer)?;
        kv.take_into("beta1", &mut self.beta1)?;
        kv.take_into("beta2", &mut self.beta2)?;
        kv.take_into("grad_clip", &mut self.grad_clip)?;
        take_path(&mut kv, "data", &mut self.data);
        take_path(&mut kv, "out", &mut self.out);
        take_path(&mut kv, "init", &mut self.init);
        take_path(&mut kv, "model", &mut self.model);
        take_string(&mut kv, "split", &mut self.split);
        take_string(&mut kv, "utt", &mut self.utt);
        take_string(&mut kv, "spec", &mut self.spec);
        kv.take_into("beam", &mut self.beam)?;
        kv.take_into("force", &mut self.force)?;
        kv.finish()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        c.merge_text(text, origin)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Canonical text; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            writeln!(s, "{k} = {v}").unwrap();
        };
        put("variant", &self.variant);
        put("hidden_dim", &self.hidden_dim);
        put("encoder_layers", &self.encoder_layers);
        put("encoder_mixing", &self.encoder_mixing);
        put("conv_window", &self.conv_window);
        put("embed_dim", &self.embed_dim);
        put("decoder_dim", &self.decoder_dim);
        put("joint_dim", &self.joint_dim);
        put("vanilla_width_factor", &self.vanilla_width_factor);
        put("lambda", &self.lambda);
        put("learning_rate", &self.learning_rate);
        put("schedule", &self.schedule);
        put("warmup_steps", &self.warmup_steps);
        put("epochs", &self.epochs);
        put("batch_size", &self.batch_size);
        put("seed", &self.seed);
        put("fine_tune_data", &self.fine_tune_data);
        put("mono_mix_ratio", &self.mono_mix_ratio);
        put("optimizer", &self.optimizer);
        put("beta1", &self.beta1);
        put("beta2", &self.beta2);
        put("grad_clip", &self.grad_clip);
        for (k, v) in [
            ("data", &self.data),
            ("out", &self.out),
            ("init", &self.init),
            ("model", &self.model),
        ] {
            if let Some(p) = v {
                put(k, &p.display());
            }
        }
        for (k, v) in [("split", &self.split), ("utt", &self.utt), ("spec", &self.spec)] {
            if let Some(p) = v {
                put(k, p);
            }
        }
        put("beam", &self.beam);
        put("force", &self.force);
        s
    }

    pub fn mixing(&self) -> Mixing {
        match self.encoder_mixing {
            MixingKind::Conv => Mixing::Conv {
                window: self.conv_window,
            },
            MixingKind::Recurrent => Mixing::Recurrent,
        }
    }

    /// Architecture for features of `input_dim` and the given unit counts.
    pub fn model_config(&self, input_dim: usize, m_units: usize, e_units: usize) -> Result<ModelConfig> {
        let c = ModelConfig {
            variant: self.variant,
            input_dim,
            hidden_dim: self.hidden_dim,
            encoder_layers: self.encoder_layers,
            mixing: self.mixing(),
            embed_dim: self.embed_dim,
            decoder_dim: self.decoder_dim,
            joint_dim: self.joint_dim,
            vanilla_width_factor: self.vanilla_width_factor,
            m_units,
            e_units,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn training(&self) -> Result<TrainingConfig> {
        let t = TrainingConfig {
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            schedule: match self.schedule {
                ScheduleKind::Constant => Schedule::Constant,
                ScheduleKind::WarmupInverseSqrt => Schedule::WarmupInverseSqrt {
                    warmup_steps: self.warmup_steps,
                },
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            fine_tune_data: self.fine_tune_data,
            mono_mix_ratio: self.mono_mix_ratio,
            optimizer: OptimizerConfig {
                kind: self.optimizer,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: 1e-8,
                grad_clip: self.grad_clip,
            },
        };
        t.validate()?;
        Ok(t)
    }
}

/// Architecture file stored next to a checkpoint.
pub fn model_config_text(c: &ModelConfig) -> String {
    let (mixing, window) = match c.mixing {
        Mixing::Conv { window } => (MixingKind::Conv, window),
        Mixing::Recurrent => (MixingKind::Recurrent, 0),
    };
    format!(
        "variant = {}\ninput_dim = {}\nhidden_dim = {}\nencoder_layers = {}\nencoder_mixing = {}\n\
         conv_window = {}\nembed_dim = {}\ndecoder_dim = {}\njoint_dim = {}\nvanilla_width_factor = {}\n\
         m_units = {}\ne_units = {}\n",
        c.variant,
        c.input_dim,
        c.hidden_dim,
        c.encoder_layers,
        mixing,
        window,
        c.embed_dim,
        c.decoder_dim,
        c.joint_dim,
        c.vanilla_width_factor,
        c.m_units,
        c.e_units
    )
}

pub fn parse_model_config(text: &str, origin: &Path) -> Result<ModelConfig> {
    let mut kv = KeyValues::parse(text, origin)?;
    let mut c = ModelConfig::toy(ModelVariant::Conditional, 1, 1, 1);
    let mut mixing = MixingKind::Conv;
    let mut window = 3usize;
    kv.take_into("variant", &mut c.variant)?;
    kv.take_into("input_dim", &mut c.input_dim)?;
    kv.take_into("hidden_dim", &mut c.hidden_dim)?;
    kv.take_into("encoder_layers", &mut c.encoder_layers)?;
    kv.take_into("encoder_mixing", &mut mixing)?;
    kv.take_into("conv_window", &mut window)?;
    kv.take_into("embed_dim", &mut c.embed_dim)?;
    kv.take_into("decoder_dim", &mut c.decoder_dim)?;
    kv.take_into("joint_dim", &mut c.joint_dim)?;
    kv.take_into("vanilla_width_factor", &mut c.vanilla_width_factor)?;
    kv.take_into("m_units", &mut c.m_units)?;
    kv.take_into("e_units", &mut c.e_units)?;
    kv.finish()?;
    c.mixing = match mixing {
        MixingKind::Conv => Mixing::Conv { window },
        MixingKind::Recurrent => Mixing::Recurrent,
    };
    c.validate()?;
    Ok(c)
}
