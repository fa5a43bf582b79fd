use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::spec::{CorpusSpec, Split, Subset};
use crate::alignments::{Language, LabelSeq, Vocabulary};
use crate::error::Result;
use crate::numerics::Tensor;

/// Frames `[start, end)` spoken in `lang`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub lang: Language,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `T x D` frames.
    pub features: Tensor,
    /// Global bilingual unit ids.
    pub transcript: LabelSeq,
    /// Maximal same-language runs tiling `[0, T)`.
    pub spans: Vec<Span>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.shape()[0]
    }
}

/// A whole generated or loaded corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub splits: BTreeMap<Split, Vec<Utterance>>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Utterance] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Surface strings `m1..`, `e1..` for the default toy vocabulary.
pub fn toy_vocabulary(m_units: usize, e_units: usize) -> Vocabulary {
    let m: Vec<String> = (1..=m_units).map(|i| format!("m{i}")).collect();
    let e: Vec<String> = (1..=e_units).map(|i| format!("e{i}")).collect();
    Vocabulary::new(&m, &e).expect("generated surfaces are distinct")
}

/// One prototype row per unit id (row 0, blank, is unused and zero).
/// Language-M rows are drawn first, then language-E rows, from one stream.
pub fn prototypes(spec: &CorpusSpec) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let units = spec.m_units + spec.e_units;
    let mut t = Tensor::zeros(&[units + 1, spec.feature_dim]);
    for v in &mut t.data_mut()[spec.feature_dim..] {
        *v = StandardNormal.sample(&mut rng);
    }
    t
}

/// Deterministic corpus: a pure function of `spec`.
pub fn generate(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let vocab = toy_vocabulary(spec.m_units, spec.e_units);
    let protos = prototypes(spec);
    let gen = Generator {
        spec,
        vocab: &vocab,
        protos: &protos,
        noise: Normal::new(0.0, spec.sigma).expect("sigma validated"),
    };
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(split.stream());
        let utts = (0..spec.count(split.partition))
            .map(|i| gen.utterance(&mut rng, split, i))
            .collect();
        splits.insert(split, utts);
    }
    Ok(Corpus { vocab, splits })
}

struct Generator<'a> {
    spec: &'a CorpusSpec,
    vocab: &'a Vocabulary,
    protos: &'a Tensor,
    noise: Normal<f64>,
}

impl Generator<'_> {
    fn utterance(&self, rng: &mut ChaCha8Rng, split: Split, index: usize) -> Utterance {
        let r = self.spec.units_per_utterance;
        let n = rng.gen_range(r.lo..=r.hi);
        let langs = match split.subset.language() {
            Some(lang) => vec![lang; n],
            None => self.code_switch_pattern(rng, n),
        };
        let transcript = self.draw_units(rng, &langs);
        let (features, spans) = self.render(rng, &transcript, &langs);
        Utterance {
            id: format!("{split}-{index:05}"),
            features,
            transcript: LabelSeq::new(transcript).expect("units are non-blank"),
            spans,
        }
    }

    /// Language of each token: matrix M with contiguous embedded E spans,
    /// at least one token of each language.
    fn code_switch_pattern(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Language> {
        let n_e = ((1.0 - self.spec.cs_m_fraction) * n as f64).round() as usize;
        let n_e = n_e.clamp(1, n - 1);
        let n_m = n - n_e;
        let r = self.spec.cs_spans;
        let max_spans = r.hi.min(n_e).min(n_m + 1).max(1);
        let spans = rng.gen_range(r.lo.min(max_spans)..=max_spans);
        let e_sizes = random_composition(rng, n_e, spans, 1);
        // M gaps around the spans: interior gaps need at least one token.
        let mut gaps = random_composition(rng, n_m - (spans - 1), spans + 1, 0);
        for g in &mut gaps[1..spans] {
            *g += 1;
        }
        let mut out = Vec::with_capacity(n);
        for k in 0..spans {
            out.extend(std::iter::repeat_n(Language::M, gaps[k]));
            out.extend(std::iter::repeat_n(Language::E, e_sizes[k]));
        }
        out.extend(std::iter::repeat_n(Language::M, gaps[spans]));
        out
    }

    /// Uniform units per language with no two identical neighbours.
    fn draw_units(&self, rng: &mut ChaCha8Rng, langs: &[Language]) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(langs.len());
        for &lang in langs {
            let ids = self.vocab.ids_of(lang);
            let choices: Vec<usize> = ids
                .into_iter()
                .filter(|&id| out.last() != Some(&id))
                .collect();
            let pick = match choices.choose(rng) {
                Some(&id) => id,
                None => out[out.len() - 1],
            };
            out.push(pick);
        }
        out
    }

    fn render(&self, rng: &mut ChaCha8Rng, units: &[usize], langs: &[Language]) -> (Tensor, Vec<Span>) {
        let d = self.spec.feature_dim;
        let r = self.spec.frames_per_unit;
        let mut data = Vec::new();
        let mut spans: Vec<Span> = Vec::new();
        let mut frame = 0;
        for (&unit, &lang) in units.iter().zip(langs) {
            let dur = rng.gen_range(r.lo..=r.hi);
            for _ in 0..dur {
                for &p in self.protos.row(unit) {
                    let v = p + self.noise.sample(rng);
                    data.push(v as f32 as f64);
                }
            }
            match spans.last_mut() {
                Some(s) if s.lang == lang => s.end += dur,
                _ => spans.push(Span {
                    start: frame,
                    end: frame + dur,
                    lang,
                }),
            }
            frame += dur;
        }
        let features = Tensor::new(vec![frame, d], data).expect("row-major frames");
        (features, spans)
    }
}

/// Uniformly random split of `total` into `parts` summands, each at least `min`.
fn random_composition(rng: &mut ChaCha8Rng, total: usize, parts: usize, min: usize) -> Vec<usize> {
    let free = total - parts * min;
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(free)) {
        out.push(min + c - prev);
        prev = c;
    }
    out
}

/// Whether every transcript token of `utt` belongs to the split's language.
pub fn subset_is_pure(utt: &Utterance, subset: Subset, vocab: &Vocabulary) -> bool {
    match subset.language() {
        Some(lang) => utt.transcript.iter().all(|&id| vocab.language(id) == Some(lang)),
        None => Language::BOTH
            .iter()
            .all(|&lang| utt.transcript.iter().any(|&id| vocab.language(id) == Some(lang))),
    }
}
