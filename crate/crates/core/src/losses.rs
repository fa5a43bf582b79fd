//! CTC and transducer negative log-likelihoods in log space, their
//! enumeration oracles, and the language-separation multi-task loss.
//!
//! Both DP losses record a single tape node whose gradient with respect to
//! the log-probability input comes from the forward-backward occupancies.
//! Labels are column indices of the posterior input with column 0 as blank.

use crate::alignments::{
    enumerate_ctc_alignments, enumerate_rnnt_paths, min_ctc_frames, RnntStep, BLANK,
    ENUM_MAX_VOCAB,
};
use crate::error::{Error, Result};
use crate::numerics::{log_add_exp, log_sum_exp, Tape, Tensor, Var};

/// `T x C` matrix of per-frame log-probabilities for one CTC head.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcLogPosteriors(Tensor);

impl CtcLogPosteriors {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.rank() != 2 || t.shape()[1] < 2 {
            return Err(Error::InvalidTensor(format!(
                "CTC posteriors must be T x C with C >= 2, got {:?}",
                t.shape()
            )));
        }
        check_normalized(t.data(), t.shape()[1])?;
        Ok(CtcLogPosteriors(t))
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// `T x (U+1) x V` lattice of next-symbol log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RnntLogPosteriors(Tensor);

impl RnntLogPosteriors {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.rank() != 3 || t.shape()[2] < 2 {
            return Err(Error::InvalidTensor(format!(
                "transducer posteriors must be T x (U+1) x V, got {:?}",
                t.shape()
            )));
        }
        check_normalized(t.data(), t.shape()[2])?;
        Ok(RnntLogPosteriors(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

const NORM_TOL: f64 = 1e-9;

fn check_normalized(data: &[f64], width: usize) -> Result<()> {
    for (i, row) in data.chunks(width).enumerate() {
        let total: f64 = row.iter().map(|x| x.exp()).sum();
        if (total - 1.0).abs() > NORM_TOL || row.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidTensor(format!(
                "distribution {i} sums to {total}"
            )));
        }
    }
    Ok(())
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l == BLANK || l >= classes) {
        Some(&bad) => Err(Error::InvalidLabel(bad)),
        None => Ok(()),
    }
}

/// CTC negative log-likelihood of `labels` under a `T x C` log-probability input.
pub fn ctc_loss(tape: &mut Tape, logp: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.shape(logp).to_vec();
    if shape.len() != 2 {
        return Err(Error::InvalidTensor(format!(
            "ctc_loss expects a T x C input, got {shape:?}"
        )));
    }
    let (value, grad) = ctc_forward_backward(tape.value(logp).data(), shape[0], shape[1], labels)?;
    tape.scalar_with_grad(logp, value, grad)
}

fn ctc_forward_backward(
    lp: &[f64],
    frames: usize,
    classes: usize,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    check_labels(labels, classes)?;
    let required = min_ctc_frames(labels);
    if frames < required || frames == 0 {
        return Err(Error::Infeasible {
            frames,
            labels: labels.len(),
            required: required.max(1),
        });
    }
    // Blank-interleaved label sequence.
    let ext: Vec<usize> = std::iter::once(BLANK)
        .chain(labels.iter().flat_map(|&l| [l, BLANK]))
        .collect();
    let s_len = ext.len();
    let ninf = f64::NEG_INFINITY;
    let at = |t: usize, k: usize| lp[t * classes + k];
    let skip_ok = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let mut alpha = vec![ninf; frames * s_len];
    alpha[0] = at(0, ext[0]);
    if s_len > 1 {
        alpha[1] = at(0, ext[1]);
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add_exp(acc, prev[s - 1]);
            }
            if skip_ok(s) {
                acc = log_add_exp(acc, prev[s - 2]);
            }
            cur[s] = if acc == ninf { ninf } else { acc + at(t, ext[s]) };
        }
    }
    let last = (frames - 1) * s_len;
    let mut log_z = alpha[last + s_len - 1];
    if s_len > 1 {
        log_z = log_add_exp(log_z, alpha[last + s_len - 2]);
    }

    let mut beta = vec![ninf; frames * s_len];
    beta[last + s_len - 1] = at(frames - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[last + s_len - 2] = at(frames - 1, ext[s_len - 2]);
    }
    for t in (0..frames - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        for s in 0..s_len {
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = log_add_exp(acc, next[s + 1]);
            }
            if s + 2 < s_len && skip_ok(s + 2) {
                acc = log_add_exp(acc, next[s + 2]);
            }
            cur[s] = if acc == ninf { ninf } else { acc + at(t, ext[s]) };
        }
    }

    let mut grad = vec![0.0; frames * classes];
    if log_z.is_finite() {
        for t in 0..frames {
            for s in 0..s_len {
                let a = alpha[t * s_len + s];
                let b = beta[t * s_len + s];
                if a == ninf || b == ninf {
                    continue;
                }
                let k = ext[s];
                grad[t * classes + k] -= (a + b - at(t, k) - log_z).exp();
            }
        }
    }
    Ok((-log_z, grad))
}

/// Transducer negative log-likelihood of `labels` under a
/// `T x (U+1) x V` log-probability lattice. The path ends with the blank
/// taken from the last frame after all labels are emitted.
pub fn rnnt_loss(tape: &mut Tape, logp: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.shape(logp).to_vec();
    if shape.len() != 3 || shape[1] != labels.len() + 1 {
        return Err(Error::InvalidTensor(format!(
            "rnnt_loss expects T x {} x V for {} labels, got {shape:?}",
            labels.len() + 1,
            labels.len()
        )));
    }
    let (value, grad) = rnnt_forward_backward(tape.value(logp).data(), shape[0], shape[2], labels)?;
    tape.scalar_with_grad(logp, value, grad)
}

fn rnnt_forward_backward(
    lp: &[f64],
    frames: usize,
    classes: usize,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if frames == 0 {
        return Err(Error::InvalidArgument("transducer loss needs T >= 1".into()));
    }
    check_labels(labels, classes)?;
    let u_len = labels.len() + 1;
    let idx = |t: usize, u: usize, k: usize| (t * u_len + u) * classes + k;
    let blank = |t: usize, u: usize| lp[idx(t, u, BLANK)];
    let emit = |t: usize, u: usize| lp[idx(t, u, labels[u])];
    let cell = |t: usize, u: usize| t * u_len + u;

    let mut alpha = vec![f64::NEG_INFINITY; frames * u_len];
    for t in 0..frames {
        for u in 0..u_len {
            alpha[cell(t, u)] = match (t, u) {
                (0, 0) => 0.0,
                (0, u) => alpha[cell(0, u - 1)] + emit(0, u - 1),
                (t, 0) => alpha[cell(t - 1, 0)] + blank(t - 1, 0),
                (t, u) => log_add_exp(
                    alpha[cell(t - 1, u)] + blank(t - 1, u),
                    alpha[cell(t, u - 1)] + emit(t, u - 1),
                ),
            };
        }
    }
    let (tl, ul) = (frames - 1, u_len - 1);
    let log_z = alpha[cell(tl, ul)] + blank(tl, ul);

    let mut beta = vec![f64::NEG_INFINITY; frames * u_len];
    for t in (0..frames).rev() {
        for u in (0..u_len).rev() {
            beta[cell(t, u)] = if t == tl && u == ul {
                blank(t, u)
            } else if t == tl {
                beta[cell(t, u + 1)] + emit(t, u)
            } else if u == ul {
                beta[cell(t + 1, u)] + blank(t, u)
            } else {
                log_add_exp(
                    beta[cell(t + 1, u)] + blank(t, u),
                    beta[cell(t, u + 1)] + emit(t, u),
                )
            };
        }
    }

    let mut grad = vec![0.0; lp.len()];
    if log_z.is_finite() {
        for t in 0..frames {
            for u in 0..u_len {
                let a = alpha[cell(t, u)];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                let after_blank = if t == tl {
                    (u == ul).then_some(0.0)
                } else {
                    Some(beta[cell(t + 1, u)])
                };
                if let Some(b) = after_blank {
                    grad[idx(t, u, BLANK)] -= (a + blank(t, u) + b - log_z).exp();
                }
                if u < ul {
                    let b = beta[cell(t, u + 1)];
                    grad[idx(t, u, labels[u])] -= (a + emit(t, u) + b - log_z).exp();
                }
            }
        }
    }
    Ok((-log_z, grad))
}

fn check_oracle_vocab(classes: usize) -> Result<()> {
    if classes > ENUM_MAX_VOCAB + 1 {
        return Err(Error::CapExceeded(format!(
            "{} non-blank classes exceeds {ENUM_MAX_VOCAB}",
            classes - 1
        )));
    }
    Ok(())
}

/// Brute-force CTC negative log-likelihood over every enumerated alignment.
pub fn ctc_loss_oracle(logp: &Tensor, labels: &[usize]) -> Result<f64> {
    let (frames, classes) = (logp.shape()[0], logp.shape()[1]);
    check_oracle_vocab(classes)?;
    check_labels(labels, classes)?;
    let terms: Vec<f64> = enumerate_ctc_alignments(labels, frames)?
        .iter()
        .map(|z| z.iter().enumerate().map(|(t, &k)| logp.at2(t, k)).sum())
        .collect();
    Ok(-log_sum_exp(&terms))
}

/// Brute-force transducer negative log-likelihood over every enumerated path.
pub fn rnnt_loss_oracle(logp: &Tensor, labels: &[usize]) -> Result<f64> {
    let shape = logp.shape();
    let (frames, u_len, classes) = (shape[0], shape[1], shape[2]);
    if u_len != labels.len() + 1 {
        return Err(Error::InvalidTensor(format!(
            "lattice has {u_len} label positions for {} labels",
            labels.len()
        )));
    }
    check_oracle_vocab(classes)?;
    check_labels(labels, classes)?;
    let lp = logp.data();
    let at = |t: usize, u: usize, k: usize| lp[(t * u_len + u) * classes + k];
    let terms: Vec<f64> = enumerate_rnnt_paths(labels, frames)?
        .iter()
        .map(|path| {
            path.iter()
                .map(|step| match *step {
                    RnntStep::Emit { t, u, label } => at(t, u, label),
                    RnntStep::Blank { t, u } => at(t, u, BLANK),
                })
                .sum()
        })
        .collect();
    Ok(-log_sum_exp(&terms))
}

/// `lambda * rnnt + (1 - lambda) * (ctc_m + ctc_e)`.
pub fn ls_loss(tape: &mut Tape, rnnt: Var, ctc_m: Var, ctc_e: Var, lambda: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let mono = tape.add(ctc_m, ctc_e)?;
    let a = tape.scale(rnnt, lambda);
    let b = tape.scale(mono, 1.0 - lambda);
    tape.add(a, b)
}
