//! Edit-distance statistics, mixed error rates, language-separation
//! evaluation and frame posterior dumps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::alignments::{mask_labels, Language, Vocabulary, BLANK};
use crate::data::Utterance;
use crate::decoding::{greedy_ctc_decode_global, rnnt_beam};
use crate::error::{Error, Result};
use crate::losses::CtcLogPosteriors;
use crate::network::Model;

/// Counts from a minimal edit alignment of a hypothesis against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorStats {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_len: usize,
}

impl ErrorStats {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Errors over `max(1, ref_len)`.
    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.ref_len.max(1) as f64
    }
}

/// Levenshtein alignment; among minimal alignments the one with the fewest
/// insertions is chosen.
pub fn error_stats<T: PartialEq>(hyp: &[T], reference: &[T]) -> ErrorStats {
    let (n, m) = (reference.len(), hyp.len());
    // cell = (edits, insertions), compared lexicographically
    let mut prev: Vec<(usize, usize)> = (0..=m).map(|j| (j, j)).collect();
    for i in 1..=n {
        let mut cur = vec![(i, 0); m + 1];
        for j in 1..=m {
            let sub = (prev[j - 1].0 + usize::from(reference[i - 1] != hyp[j - 1]), prev[j - 1].1);
            let del = (prev[j].0 + 1, prev[j].1);
            let ins = (cur[j - 1].0 + 1, cur[j - 1].1 + 1);
            cur[j] = sub.min(del).min(ins);
        }
        prev = cur;
    }
    let (cost, insertions) = prev[m];
    let deletions = n + insertions - m;
    ErrorStats {
        substitutions: cost - insertions - deletions,
        insertions,
        deletions,
        ref_len: n,
    }
}

/// Error counts on the full mixed sequence and on each language projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MixedErrors {
    pub mixed: ErrorStats,
    /// Language-M projection, scored as characters.
    pub m: ErrorStats,
    /// Language-E projection, scored as words.
    pub e: ErrorStats,
}

impl MixedErrors {
    pub fn mer(&self) -> Option<f64> {
        (self.mixed.ref_len > 0).then(|| self.mixed.rate())
    }

    pub fn cer(&self) -> Option<f64> {
        (self.m.ref_len > 0).then(|| self.m.rate())
    }

    pub fn wer(&self) -> Option<f64> {
        (self.e.ref_len > 0).then(|| self.e.rate())
    }
}

pub fn mixed_error_rate(hyp: &[usize], reference: &[usize], vocab: &Vocabulary) -> MixedErrors {
    let proj = |lang| {
        error_stats(
            &mask_labels(hyp, lang, vocab),
            &mask_labels(reference, lang, vocab),
        )
    };
    MixedErrors {
        mixed: error_stats(hyp, reference),
        m: proj(Language::M),
        e: proj(Language::E),
    }
}

/// Corpus totals. Utterances with an empty reference add no errors to the
/// rate but their insertions still count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub errors: usize,
    pub insertions: usize,
    pub ref_tokens: usize,
    pub utterances: usize,
}

impl Tally {
    pub fn add(&mut self, s: &ErrorStats) {
        if s.ref_len > 0 {
            self.errors += s.errors();
            self.ref_tokens += s.ref_len;
        }
        self.insertions += s.insertions;
        self.utterances += 1;
    }

    /// Total errors over total reference tokens; absent with no reference.
    pub fn rate(&self) -> Option<f64> {
        (self.ref_tokens > 0).then(|| self.errors as f64 / self.ref_tokens as f64)
    }

    /// Insertion rate over total reference tokens.
    pub fn insertion_rate(&self) -> Option<f64> {
        (self.ref_tokens > 0).then(|| self.insertions as f64 / self.ref_tokens as f64)
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |r| format!("{:.2}", 100.0 * r))
}

/// One decoded utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub id: String,
    pub hyp: Vec<usize>,
    pub log_score: f64,
    pub errors: MixedErrors,
}

/// Corpus-level MER / CER / WER.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub mixed: Tally,
    pub m: Tally,
    pub e: Tally,
    pub utterances: Vec<Decoded>,
}

impl EvalReport {
    pub fn mer(&self) -> Option<f64> {
        self.mixed.rate()
    }

    pub fn cer(&self) -> Option<f64> {
        self.m.rate()
    }

    pub fn wer(&self) -> Option<f64> {
        self.e.rate()
    }

    pub fn header() -> &'static str {
        "split\tutts\tMER%\tCER%\tWER%"
    }

    pub fn row(&self, split: &str) -> String {
        format!(
            "{split}\t{}\t{}\t{}\t{}",
            self.utterances.len(),
            pct(self.mer()),
            pct(self.cer()),
            pct(self.wer())
        )
    }

    /// `<utt-id>\t<space-joined surfaces>` per utterance.
    pub fn hypotheses(&self, vocab: &Vocabulary) -> String {
        self.utterances
            .iter()
            .map(|d| format!("{}\t{}\n", d.id, vocab.render(&d.hyp)))
            .collect()
    }
}

/// Beam-decodes every utterance and scores it against its transcript.
pub fn evaluate(model: &Model, utts: &[Utterance], vocab: &Vocabulary, beam: usize) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for u in utts {
        let enc = model.encode_for_decoding(&u.features)?;
        let h = rnnt_beam(model, &enc, beam)?;
        let errors = mixed_error_rate(&h.labels, &u.transcript, vocab);
        report.mixed.add(&errors.mixed);
        report.m.add(&errors.m);
        report.e.add(&errors.e);
        report.utterances.push(Decoded {
            id: u.id.clone(),
            hyp: h.labels.into_vec(),
            log_score: h.log_score,
            errors,
        });
    }
    Ok(report)
}

/// Greedy CTC accuracy of each monolingual sub-net against its projected
/// reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeparationReport {
    pub m: Tally,
    pub e: Tally,
}

impl SeparationReport {
    pub fn tally(&self, lang: Language) -> &Tally {
        match lang {
            Language::M => &self.m,
            Language::E => &self.e,
        }
    }

    pub fn header() -> &'static str {
        "subnet\tutts\tER%\tINS%"
    }

    pub fn rows(&self) -> String {
        Language::BOTH
            .iter()
            .map(|&l| {
                let t = self.tally(l);
                format!("{l}\t{}\t{}\t{}\n", t.utterances, pct(t.rate()), pct(t.insertion_rate()))
            })
            .collect()
    }
}

/// Language separation from precomputed sub-net posteriors, one
/// `(M posteriors, E posteriors, transcript)` triple per utterance.
pub fn language_separation_from_posteriors<'a, I>(items: I, vocab: &Vocabulary) -> Result<SeparationReport>
where
    I: IntoIterator<Item = (&'a CtcLogPosteriors, &'a CtcLogPosteriors, &'a [usize])>,
{
    let mut report = SeparationReport::default();
    for (pm, pe, y) in items {
        for (lang, post) in [(Language::M, pm), (Language::E, pe)] {
            let hyp = greedy_ctc_decode_global(post, lang, vocab)?;
            let s = error_stats(&hyp, &mask_labels(y, lang, vocab));
            match lang {
                Language::M => report.m.add(&s),
                Language::E => report.e.add(&s),
            }
        }
    }
    Ok(report)
}

/// Greedy-decodes both CTC sub-nets of `model` on `utts`.
pub fn eval_language_separation(model: &Model, utts: &[Utterance], vocab: &Vocabulary) -> Result<SeparationReport> {
    if !model.variant().has_ctc_heads() {
        return Err(Error::UnsupportedVariant(format!(
            "{} has no monolingual CTC sub-nets",
            model.variant()
        )));
    }
    let encoded = utts
        .iter()
        .map(|u| model.encode_for_decoding(&u.features))
        .collect::<Result<Vec<_>>>()?;
    let items = encoded.iter().zip(utts).map(|(enc, u)| {
        (
            enc.ctc_m.as_ref().expect("ctc heads"),
            enc.ctc_e.as_ref().expect("ctc heads"),
            &u.transcript[..],
        )
    });
    language_separation_from_posteriors(items, vocab)
}

/// Plot-ready per-frame table of blank and non-blank mass for both sub-nets.
pub fn frame_posterior_table(pm: &CtcLogPosteriors, pe: &CtcLogPosteriors, vocab: &Vocabulary) -> String {
    let mut out = String::from("frame,m_blank,m_nonblank,m_argmax,e_blank,e_nonblank,e_argmax\n");
    for t in 0..pm.frames() {
        write!(out, "{t}").unwrap();
        for (lang, post) in [(Language::M, pm), (Language::E, pe)] {
            let row = post.row(t);
            let blank = row[BLANK].exp();
            let nonblank: f64 = row[1..].iter().map(|v| v.exp()).sum();
            let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
            let surface = vocab
                .from_local(best, lang)
                .and_then(|id| if id == BLANK { Some("<blank>") } else { vocab.surface(id) })
                .unwrap_or("?");
            write!(out, ",{blank:.9},{nonblank:.9},{surface}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes [`frame_posterior_table`] for one utterance to `path`.
pub fn dump_frame_posteriors(model: &Model, x: &crate::numerics::Tensor, vocab: &Vocabulary, path: &Path) -> Result<()> {
    if !model.variant().has_ctc_heads() {
        return Err(Error::UnsupportedVariant(format!(
            "{} has no monolingual CTC sub-nets",
            model.variant()
        )));
    }
    let enc = model.encode_for_decoding(x)?;
    let table = frame_posterior_table(
        enc.ctc_m.as_ref().expect("ctc heads"),
        enc.ctc_e.as_ref().expect("ctc heads"),
        vocab,
    );
    fs::write(path, table).map_err(|e| Error::io(path, e))
}
