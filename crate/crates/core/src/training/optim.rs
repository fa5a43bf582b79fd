use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::ParamStore;
use crate::numerics::Tensor;

/// Learning-rate schedule as a function of the 1-based update count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    /// Linear warm-up to the peak over `warmup_steps`, then `1/sqrt(step)` decay.
    WarmupInverseSqrt { warmup_steps: u64 },
}

impl Schedule {
    pub fn lr(&self, peak: f64, step: u64) -> f64 {
        match *self {
            Schedule::Constant => peak,
            Schedule::WarmupInverseSqrt { warmup_steps } => {
                let s = step.max(1) as f64;
                let w = warmup_steps.max(1) as f64;
                peak * (s / w).min((w / s).sqrt())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Constant => "constant",
            Schedule::WarmupInverseSqrt { .. } => "warmup-inverse-sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Descent with first and second moment smoothing.
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::Config(format!("unknown optimizer `{s}` (sgd | adam)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
}

/// Optimizer moments and update count.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ParamStore) -> Self {
        let (m, v) = match config.kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (params.zeros_like(), params.zeros_like()),
        };
        Optimizer { config, step: 0, m, v }
    }

    /// Applies one update with learning rate `lr`. Gradients are clipped in
    /// place to the configured global norm first.
    pub fn apply(&mut self, params: &mut ParamStore, grads: &mut [Vec<f64>], lr: f64) -> Result<()> {
        for (name, g) in params.names().iter().zip(grads.iter()) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        let clip = self.config.grad_clip;
        if clip > 0.0 {
            let norm = grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                grads.iter_mut().flatten().for_each(|x| *x *= s);
            }
        }
        self.step += 1;
        let tensors = params.tensors_mut();
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in tensors.iter_mut().zip(grads.iter()) {
                    p.data_mut().iter_mut().zip(g).for_each(|(w, d)| *w -= lr * d);
                }
            }
            OptimizerKind::Adam => {
                let OptimizerConfig { beta1, beta2, epsilon, .. } = self.config;
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for (i, p) in tensors.iter_mut().enumerate() {
                    let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
                    for (j, w) in p.data_mut().iter_mut().enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }

    /// Moment buffers as named state blocks.
    pub fn state_blocks(&self, params: &ParamStore) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        out.insert("optimizer_step", Tensor::scalar(self.step as f64))?;
        for (i, (name, t)) in params.iter().enumerate() {
            if let (Some(m), Some(v)) = (self.m.get(i), self.v.get(i)) {
                out.insert(&format!("adam_m/{name}"), Tensor::new(t.shape().to_vec(), m.clone())?)?;
                out.insert(&format!("adam_v/{name}"), Tensor::new(t.shape().to_vec(), v.clone())?)?;
            }
        }
        Ok(out)
    }

    pub fn from_state_blocks(config: OptimizerConfig, params: &ParamStore, state: &ParamStore) -> Result<Self> {
        let mut opt = Optimizer::new(config, params);
        let step = state
            .get("optimizer_step")
            .ok_or_else(|| Error::Checkpoint("missing optimizer_step".into()))?;
        opt.step = step.item() as u64;
        if config.kind == OptimizerKind::Adam {
            for (i, name) in params.names().iter().enumerate() {
                let fetch = |key: String| -> Result<Vec<f64>> {
                    let t = state
                        .get(&key)
                        .ok_or_else(|| Error::Checkpoint(format!("missing optimizer block `{key}`")))?;
                    if t.numel() != params.tensors()[i].numel() {
                        return Err(Error::Checkpoint(format!("optimizer block `{key}` has the wrong size")));
                    }
                    Ok(t.data().to_vec())
                };
                opt.m[i] = fetch(format!("adam_m/{name}"))?;
                opt.v[i] = fetch(format!("adam_v/{name}"))?;
            }
        }
        Ok(opt)
    }
}
