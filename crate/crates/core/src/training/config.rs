use std::fmt;
use std::str::FromStr;

use super::optim::{OptimizerConfig, OptimizerKind, Schedule};
use crate::error::{Error, Result};

/// Which utterances fine-tuning draws batches from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FineTuneData {
    CsOnly,
    CsPlusMono,
}

impl fmt::Display for FineTuneData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FineTuneData::CsOnly => "cs",
            FineTuneData::CsPlusMono => "cs+mono",
        })
    }
}

impl FromStr for FineTuneData {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cs" => Ok(FineTuneData::CsOnly),
            "cs+mono" => Ok(FineTuneData::CsPlusMono),
            _ => Err(Error::Config(format!("unknown fine_tune_data `{s}` (cs | cs+mono)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Weight of the transducer term in the language-separation loss.
    pub lambda: f64,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub fine_tune_data: FineTuneData,
    /// Probability that a fine-tuning batch is monolingual.
    pub mono_mix_ratio: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda: 0.5,
            learning_rate: 3e-3,
            schedule: Schedule::Constant,
            epochs: 10,
            batch_size: 8,
            seed: 1,
            fine_tune_data: FineTuneData::CsPlusMono,
            mono_mix_ratio: 2.0 / 3.0,
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Adam,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
                grad_clip: 5.0,
            },
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("lambda", self.lambda)?;
        unit("mono_mix_ratio", self.mono_mix_ratio)?;
        unit("beta1", self.optimizer.beta1)?;
        unit("beta2", self.optimizer.beta2)?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Schedule::WarmupInverseSqrt { warmup_steps: 0 } = self.schedule {
            return Err(Error::Config("warmup_steps must be positive".into()));
        }
        if self.optimizer.grad_clip.is_nan() || self.optimizer.grad_clip < 0.0 {
            return Err(Error::Config("grad_clip must be non-negative".into()));
        }
        Ok(())
    }
}
