//! Randomised self-checks: loss oracles and finite-difference gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignments::{mask_labels, min_ctc_frames, Language, Vocabulary};
use crate::error::Result;
use crate::losses::{ctc_loss, ctc_loss_oracle, ls_loss, rnnt_loss, rnnt_loss_oracle};
use crate::network::{Binder, Mixing, Model, ModelConfig, ModelVariant};
use crate::numerics::{grad_check, Tape, Tensor, Var};

pub const ORACLE_MAX_FRAMES: usize = 6;
pub const ORACLE_MAX_LABELS: usize = 3;
/// Largest class count including blank.
pub const ORACLE_MAX_CLASSES: usize = 4;

fn random_logits(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-3.0..3.0));
    t
}

fn log_softmax_last(t: &Tensor) -> Tensor {
    let w = *t.shape().last().expect("rank >= 1");
    let mut out = t.clone();
    for row in out.data_mut().chunks_mut(w) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

fn random_labels(rng: &mut ChaCha8Rng, classes: usize, max_len: usize) -> Vec<usize> {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| rng.gen_range(1..classes)).collect()
}

/// A random CTC case `(log-probabilities T x C, labels)` that has at least
/// one alignment.
pub fn random_ctc_case(rng: &mut ChaCha8Rng) -> (Tensor, Vec<usize>) {
    let frames = rng.gen_range(1..=ORACLE_MAX_FRAMES);
    let classes = rng.gen_range(2..=ORACLE_MAX_CLASSES);
    let labels = loop {
        let y = random_labels(rng, classes, ORACLE_MAX_LABELS);
        if min_ctc_frames(&y) <= frames {
            break y;
        }
    };
    (log_softmax_last(&random_logits(rng, &[frames, classes])), labels)
}

/// A random transducer case `(log-probabilities T x (U+1) x V, labels)`.
pub fn random_rnnt_case(rng: &mut ChaCha8Rng) -> (Tensor, Vec<usize>) {
    let frames = rng.gen_range(1..=ORACLE_MAX_FRAMES);
    let classes = rng.gen_range(2..=ORACLE_MAX_CLASSES);
    let labels = random_labels(rng, classes, ORACLE_MAX_LABELS);
    let shape = [frames, labels.len() + 1, classes];
    (log_softmax_last(&random_logits(rng, &shape)), labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub instances: usize,
    pub ctc_max_error: f64,
    pub rnnt_max_error: f64,
}

impl OracleReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.ctc_max_error <= tolerance && self.rnnt_max_error <= tolerance
    }
}

fn dp_value(logp: &Tensor, labels: &[usize], rnnt: bool) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.constant(logp.clone());
    let l = if rnnt {
        rnnt_loss(&mut tape, v, labels)?
    } else {
        ctc_loss(&mut tape, v, labels)?
    };
    Ok(tape.value(l).item())
}

/// Largest absolute gap between each dynamic-programming loss and its
/// brute-force enumeration over `instances` random cases per loss.
pub fn oracle_suite(seed: u64, instances: usize) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        instances,
        ctc_max_error: 0.0,
        rnnt_max_error: 0.0,
    };
    for _ in 0..instances {
        let (lp, y) = random_ctc_case(&mut rng);
        let gap = (dp_value(&lp, &y, false)? - ctc_loss_oracle(&lp, &y)?).abs();
        report.ctc_max_error = report.ctc_max_error.max(gap);
        let (lp, y) = random_rnnt_case(&mut rng);
        let gap = (dp_value(&lp, &y, true)? - rnnt_loss_oracle(&lp, &y)?).abs();
        report.rnnt_max_error = report.rnnt_max_error.max(gap);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub ctc: f64,
    pub rnnt: f64,
    pub model: f64,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.ctc.max(self.rnnt).max(self.model)
    }
}

/// Step of the five-point finite-difference stencil.
pub const GRAD_EPSILON: f64 = 1e-2;

/// Worst relative finite-difference error of each loss (through a
/// log-softmax of random logits) over `cases` cases, and of the full
/// two-encoder forward pass with the language-separation loss at tiny size.
pub fn gradient_suite(seed: u64, cases: usize) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradReport {
        ctc: 0.0,
        rnnt: 0.0,
        model: 0.0,
    };
    for _ in 0..cases {
        let (lp, y) = random_ctc_case(&mut rng);
        let err = grad_check(
            |tape, v| {
                let p = tape.log_softmax(v[0], 1)?;
                ctc_loss(tape, p, &y)
            },
            &[lp],
            GRAD_EPSILON,
        )?;
        report.ctc = report.ctc.max(err);
        let (lp, y) = random_rnnt_case(&mut rng);
        let err = grad_check(
            |tape, v| {
                let p = tape.log_softmax(v[0], 2)?;
                rnnt_loss(tape, p, &y)
            },
            &[lp],
            GRAD_EPSILON,
        )?;
        report.rnnt = report.rnnt.max(err);
    }
    report.model = model_gradient_error(rng.gen(), GRAD_EPSILON)?;
    Ok(report)
}

/// Finite-difference check of every parameter of a tiny two-encoder model
/// (3 frames, 2 labels, hidden width 4) under the language-separation loss.
pub fn model_gradient_error(seed: u64, epsilon: f64) -> Result<f64> {
    let cfg = ModelConfig {
        variant: ModelVariant::ConditionalLS,
        input_dim: 3,
        hidden_dim: 4,
        encoder_layers: 1,
        mixing: Mixing::Conv { window: 3 },
        embed_dim: 3,
        decoder_dim: 4,
        joint_dim: 4,
        vanilla_width_factor: 1.5,
        m_units: 2,
        e_units: 2,
    };
    let model = Model::new(cfg, seed)?;
    let vocab = Vocabulary::new(&["m1", "m2"], &["e1", "e2"])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_logits(&mut rng, &[3, 3]);
    let y = [rng.gen_range(1..=2), rng.gen_range(3..=4)];
    let local = |lang| -> Vec<usize> {
        mask_labels(&y, lang, &vocab)
            .iter()
            .map(|&id| vocab.to_local(id, lang).expect("masked"))
            .collect()
    };
    let (ym, ye) = (local(Language::M), local(Language::E));
    grad_check(
        |tape: &mut Tape, vars: &[Var]| {
            let mut b = Binder::bound(model.params(), vars);
            let heads = model.forward(tape, &mut b, &x, &y)?;
            let r = rnnt_loss(tape, heads.rnnt, &y)?;
            let m = ctc_loss(tape, heads.ctc_m.expect("ctc heads"), &ym)?;
            let e = ctc_loss(tape, heads.ctc_e.expect("ctc heads"), &ye)?;
            ls_loss(tape, r, m, e, 0.5)
        },
        model.params().tensors(),
        epsilon,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_cases_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (lp, y) = random_ctc_case(&mut rng);
            assert!(lp.shape()[0] <= ORACLE_MAX_FRAMES && lp.shape()[1] <= ORACLE_MAX_CLASSES);
            assert!(min_ctc_frames(&y) <= lp.shape()[0]);
            let (lp, y) = random_rnnt_case(&mut rng);
            assert_eq!(lp.shape()[1], y.len() + 1);
            assert!(y.len() <= ORACLE_MAX_LABELS);
        }
    }

    #[test]
    fn small_suites_pass() {
        assert!(oracle_suite(3, 20).unwrap().passes(1e-6));
        assert!(gradient_suite(3, 3).unwrap().worst() < 1e-4);
    }
}
