//! Greedy CTC decoding and greedy / beam transducer decoding.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::alignments::{collapse, LabelSeq, Language, Vocabulary, BLANK};
use crate::error::{Error, Result};
use crate::losses::CtcLogPosteriors;
use crate::network::{DecoderState, EncodedUtterance, Model};
use crate::numerics::Tensor;

/// Upper bound on emitted labels per frame of input.
pub const MAX_LABELS_PER_FRAME: usize = 3;

/// A decoded label sequence with the sum of its chosen step log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub labels: LabelSeq,
    pub log_score: f64,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-frame argmax followed by collapse; labels are head columns.
pub fn greedy_ctc_decode(logp: &CtcLogPosteriors) -> LabelSeq {
    let path: Vec<usize> = (0..logp.frames()).map(|t| argmax(logp.row(t))).collect();
    collapse(&path)
}

/// [`greedy_ctc_decode`] mapped back to global bilingual ids.
pub fn greedy_ctc_decode_global(logp: &CtcLogPosteriors, lang: Language, vocab: &Vocabulary) -> Result<LabelSeq> {
    let ids = greedy_ctc_decode(logp)
        .iter()
        .map(|&c| vocab.from_local(c, lang).ok_or(Error::InvalidLabel(c)))
        .collect::<Result<Vec<_>>>()?;
    LabelSeq::new(ids)
}

fn label_cap(frames: usize) -> usize {
    MAX_LABELS_PER_FRAME * frames
}

/// Reference greedy transducer decoder: at each frame emit the argmax while
/// it is a label, otherwise move to the next frame.
pub fn rnnt_greedy(model: &Model, enc: &EncodedUtterance) -> Result<Hypothesis> {
    let cap = label_cap(enc.frames);
    let mut labels = Vec::new();
    let mut score = 0.0;
    let (h, mut state) = model.predict(model.config().start_token(), &model.decoder_initial_state())?;
    let mut dec = model.project_decoder(&h);
    for t in 0..enc.frames {
        loop {
            let lp = model.joint_logp(enc.enc_proj.row(t), &dec);
            let k = argmax(&lp);
            if k == BLANK || labels.len() >= cap {
                score += lp[BLANK];
                break;
            }
            score += lp[k];
            labels.push(k);
            let (h, next) = model.predict(k, &state)?;
            dec = model.project_decoder(&h);
            state = next;
        }
    }
    Ok(Hypothesis {
        labels: LabelSeq::new(labels)?,
        log_score: score,
    })
}

/// Memoised decoder and joint evaluations shared across beam widths.
struct Scorer<'a> {
    model: &'a Model,
    enc: &'a EncodedUtterance,
    decoder: HashMap<Vec<usize>, (Vec<f64>, DecoderState)>,
    joint: HashMap<(usize, Vec<usize>), Vec<f64>>,
}

impl<'a> Scorer<'a> {
    fn new(model: &'a Model, enc: &'a EncodedUtterance) -> Result<Self> {
        let (h, state) = model.predict(model.config().start_token(), &model.decoder_initial_state())?;
        let mut decoder = HashMap::new();
        decoder.insert(Vec::new(), (model.project_decoder(&h), state));
        Ok(Scorer {
            model,
            enc,
            decoder,
            joint: HashMap::new(),
        })
    }

    fn ensure_decoder(&mut self, prefix: &[usize]) -> Result<()> {
        if self.decoder.contains_key(prefix) {
            return Ok(());
        }
        let (last, parent) = prefix.split_last().expect("empty prefix is seeded");
        self.ensure_decoder(parent)?;
        let (h, state) = self.model.predict(*last, &self.decoder[parent].1)?;
        self.decoder
            .insert(prefix.to_vec(), (self.model.project_decoder(&h), state));
        Ok(())
    }

    fn logp(&mut self, t: usize, prefix: &[usize]) -> Result<&[f64]> {
        let key = (t, prefix.to_vec());
        if !self.joint.contains_key(&key) {
            self.ensure_decoder(prefix)?;
            let lp = self.model.joint_logp(self.enc.enc_proj.row(t), &self.decoder[prefix].0);
            self.joint.insert(key.clone(), lp);
        }
        Ok(&self.joint[&key])
    }
}

#[derive(Debug, Clone)]
struct State {
    t: usize,
    prefix: Vec<usize>,
    score: f64,
}

/// Higher score first, then lexicographically smaller prefix, then earlier frame.
fn rank(a: &State, b: &State) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.prefix.cmp(&b.prefix))
        .then_with(|| a.t.cmp(&b.t))
}

/// Step-synchronous beam search of fixed width: every step takes one
/// decision (a label or a blank) for each live hypothesis.
fn beam_pass(scorer: &mut Scorer, width: usize) -> Result<State> {
    let frames = scorer.enc.frames;
    let cap = label_cap(frames);
    let vocab_size = scorer.model.config().output_dim();
    let mut live = vec![State {
        t: 0,
        prefix: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<State> = Vec::new();
    if frames == 0 {
        return Ok(live.pop().expect("seeded"));
    }
    while !live.is_empty() {
        let mut next: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
        for s in &live {
            let lp = scorer.logp(s.t, &s.prefix)?.to_vec();
            let mut offer = |t: usize, prefix: Vec<usize>, score: f64| {
                let slot = next.entry((t, prefix)).or_insert(f64::NEG_INFINITY);
                if score > *slot {
                    *slot = score;
                }
            };
            offer(s.t + 1, s.prefix.clone(), s.score + lp[BLANK]);
            if s.prefix.len() < cap {
                for (k, &v) in lp.iter().enumerate().take(vocab_size).skip(1) {
                    let mut p = s.prefix.clone();
                    p.push(k);
                    offer(s.t, p, s.score + v);
                }
            }
        }
        let mut candidates: Vec<State> = next
            .into_iter()
            .map(|((t, prefix), score)| State { t, prefix, score })
            .collect();
        candidates.sort_by(rank);
        candidates.truncate(width);
        live = Vec::with_capacity(width);
        for c in candidates {
            if c.t == frames {
                finished.push(c);
            } else {
                live.push(c);
            }
        }
    }
    finished.sort_by(rank);
    Ok(finished.swap_remove(0))
}

/// Transducer decoding with `beam` hypotheses. Widths `1..=beam` are
/// searched in turn and the best final hypothesis over all of them is
/// returned, so the score never decreases as the beam grows and `beam = 1`
/// is the greedy search.
pub fn rnnt_beam(model: &Model, enc: &EncodedUtterance, beam: usize) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(Error::InvalidArgument("beam must be at least 1".into()));
    }
    let mut scorer = Scorer::new(model, enc)?;
    let mut best: Option<State> = None;
    for width in 1..=beam {
        let s = beam_pass(&mut scorer, width)?;
        if best.as_ref().is_none_or(|b| rank(&s, b) == Ordering::Less) {
            best = Some(s);
        }
    }
    let best = best.expect("beam >= 1");
    Ok(Hypothesis {
        labels: LabelSeq::new(best.prefix)?,
        log_score: best.score,
    })
}

/// Encodes `x` and runs [`rnnt_beam`].
pub fn rnnt_decode(model: &Model, x: &Tensor, beam: usize) -> Result<Hypothesis> {
    let enc = model.encode_for_decoding(x)?;
    rnnt_beam(model, &enc, beam)
}
