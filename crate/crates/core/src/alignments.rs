//! Bilingual label-to-frame algebra: collapse, compose, decompose, masking,
//! and exhaustive enumeration of CTC alignments and transducer paths.
//!
//! Unit ids are global across the bilingual vocabulary, with id 0 reserved
//! for blank. A monolingual alignment is an ordinary [`AlignmentSeq`] whose
//! non-blank entries all carry one language tag.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};

pub const BLANK: usize = 0;

/// Upper bounds for the brute-force enumerators.
pub const ENUM_MAX_FRAMES: usize = 8;
pub const ENUM_MAX_LABELS: usize = 4;
pub const ENUM_MAX_VOCAB: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    M,
    E,
}

impl Language {
    pub const BOTH: [Language; 2] = [Language::M, Language::E];

    pub fn tag(self) -> &'static str {
        match self {
            Language::M => "M",
            Language::E => "E",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "M" => Some(Language::M),
            "E" => Some(Language::E),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Language::M => Language::E,
            Language::E => Language::M,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub surface: String,
    pub lang: Language,
}

/// Partitioned bilingual symbol table.
///
/// Ids `1..=|V^M|` are language M and the following `|V^E|` ids are
/// language E. Each language head numbers its own columns `0..=|V^L|` with
/// column 0 as blank; [`Vocabulary::to_local`] and [`Vocabulary::from_local`]
/// translate between the two numberings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    units: Vec<Unit>,
    m_size: usize,
}

pub const BLANK_SURFACE: &str = "<blank>";

impl Vocabulary {
    pub fn new<S: AsRef<str>>(m_units: &[S], e_units: &[S]) -> Result<Self> {
        let units = m_units
            .iter()
            .map(|s| (s, Language::M))
            .chain(e_units.iter().map(|s| (s, Language::E)))
            .map(|(s, lang)| Unit {
                surface: s.as_ref().to_string(),
                lang,
            })
            .collect();
        Self::from_units(units)
    }

    /// Builds a vocabulary from units listed in id order (id 1 first).
    pub fn from_units(units: Vec<Unit>) -> Result<Self> {
        let m_size = units.iter().take_while(|u| u.lang == Language::M).count();
        if units[m_size..].iter().any(|u| u.lang == Language::M) {
            return Err(Error::InvalidArgument(
                "language M units must precede language E units".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for u in &units {
            if u.surface.is_empty() || u.surface.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!(
                    "unit surface `{}` must be non-empty without whitespace",
                    u.surface
                )));
            }
            if u.surface == BLANK_SURFACE || !seen.insert(u.surface.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate or reserved unit surface `{}`",
                    u.surface
                )));
            }
        }
        Ok(Vocabulary { units, m_size })
    }

    /// Number of non-blank units.
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Output dimension of the bilingual head (units plus blank).
    pub fn bilingual_dim(&self) -> usize {
        self.units.len() + 1
    }

    pub fn size_of(&self, lang: Language) -> usize {
        match lang {
            Language::M => self.m_size,
            Language::E => self.units.len() - self.m_size,
        }
    }

    pub fn language(&self, id: usize) -> Option<Language> {
        (id != BLANK).then(|| self.units.get(id - 1).map(|u| u.lang)).flatten()
    }

    pub fn surface(&self, id: usize) -> Option<&str> {
        if id == BLANK {
            return Some(BLANK_SURFACE);
        }
        self.units.get(id - 1).map(|u| u.surface.as_str())
    }

    pub fn id_of(&self, surface: &str) -> Option<usize> {
        self.units
            .iter()
            .position(|u| u.surface == surface)
            .map(|i| i + 1)
    }

    pub fn units(&self) -> impl Iterator<Item = (usize, &Unit)> {
        self.units.iter().enumerate().map(|(i, u)| (i + 1, u))
    }

    pub fn ids_of(&self, lang: Language) -> Vec<usize> {
        self.units()
            .filter(|(_, u)| u.lang == lang)
            .map(|(id, _)| id)
            .collect()
    }

    /// Column of global id `id` in the `lang` head (blank maps to 0).
    pub fn to_local(&self, id: usize, lang: Language) -> Option<usize> {
        if id == BLANK {
            return Some(0);
        }
        match (self.language(id)?, lang) {
            (Language::M, Language::M) => Some(id),
            (Language::E, Language::E) => Some(id - self.m_size),
            _ => None,
        }
    }

    /// Global id of column `col` of the `lang` head.
    pub fn from_local(&self, col: usize, lang: Language) -> Option<usize> {
        if col == 0 {
            return Some(BLANK);
        }
        if col > self.size_of(lang) {
            return None;
        }
        Some(match lang {
            Language::M => col,
            Language::E => col + self.m_size,
        })
    }

    pub fn render(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| self.surface(id).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Blank-free surface label sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LabelSeq(Vec<usize>);

impl LabelSeq {
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        if ids.contains(&BLANK) {
            return Err(Error::InvalidLabel(BLANK));
        }
        Ok(LabelSeq(ids))
    }

    pub fn empty() -> Self {
        LabelSeq(Vec::new())
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for LabelSeq {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Frame-synchronous sequence over units and blank.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AlignmentSeq(Vec<usize>);

impl AlignmentSeq {
    pub fn new(ids: Vec<usize>) -> Self {
        AlignmentSeq(ids)
    }

    pub fn blanks(frames: usize) -> Self {
        AlignmentSeq(vec![BLANK; frames])
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for AlignmentSeq {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Merges runs of repeated non-blank symbols, then drops blanks.
pub fn collapse(z: &[usize]) -> LabelSeq {
    let mut out = Vec::new();
    let mut prev = BLANK;
    for &s in z {
        if s != BLANK && s != prev {
            out.push(s);
        }
        prev = s;
    }
    LabelSeq(out)
}

/// Frame-wise merge of two monolingual alignments.
pub fn compose(zm: &[usize], ze: &[usize]) -> Result<AlignmentSeq> {
    if zm.len() != ze.len() {
        return Err(Error::LengthMismatch(zm.len(), ze.len()));
    }
    zm.iter()
        .zip(ze)
        .enumerate()
        .map(|(t, (&m, &e))| match (m, e) {
            (BLANK, BLANK) => Ok(BLANK),
            (m, BLANK) => Ok(m),
            (BLANK, e) => Ok(e),
            _ => Err(Error::Conflict(t)),
        })
        .collect::<Result<Vec<_>>>()
        .map(AlignmentSeq)
}

/// Splits a bilingual alignment into its two monolingual constituents.
pub fn decompose(z: &[usize], vocab: &Vocabulary) -> (AlignmentSeq, AlignmentSeq) {
    let keep = |lang| {
        z.iter()
            .map(|&s| {
                if vocab.language(s) == Some(lang) {
                    s
                } else {
                    BLANK
                }
            })
            .collect()
    };
    (AlignmentSeq(keep(Language::M)), AlignmentSeq(keep(Language::E)))
}

/// Subsequence of `y` restricted to units of `lang`.
pub fn mask_labels(y: &[usize], lang: Language, vocab: &Vocabulary) -> LabelSeq {
    LabelSeq(
        y.iter()
            .copied()
            .filter(|&s| vocab.language(s) == Some(lang))
            .collect(),
    )
}

/// Shortest alignment length for `y`: one frame per label plus a separating
/// blank between each pair of equal neighbours.
pub fn min_ctc_frames(y: &[usize]) -> usize {
    y.len() + y.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Every length-`frames` alignment that collapses to `y`, by exhaustive
/// filtering of all sequences over blank and the symbols of `y`.
pub fn enumerate_ctc_alignments(y: &[usize], frames: usize) -> Result<BTreeSet<AlignmentSeq>> {
    if frames > ENUM_MAX_FRAMES || y.len() > ENUM_MAX_LABELS {
        return Err(Error::CapExceeded(format!(
            "T={frames} L={} exceeds T<={ENUM_MAX_FRAMES}, L<={ENUM_MAX_LABELS}",
            y.len()
        )));
    }
    let required = min_ctc_frames(y);
    if frames < required {
        return Err(Error::Infeasible {
            frames,
            labels: y.len(),
            required,
        });
    }
    let alphabet: Vec<usize> = std::iter::once(BLANK)
        .chain(y.iter().copied().collect::<BTreeSet<_>>())
        .collect();
    let base = alphabet.len();
    let total = base.pow(frames as u32);
    let mut out = BTreeSet::new();
    let mut z = vec![BLANK; frames];
    for code in 0..total {
        let mut c = code;
        for slot in z.iter_mut() {
            *slot = alphabet[c % base];
            c /= base;
        }
        if *collapse(&z) == *y {
            out.insert(AlignmentSeq(z.clone()));
        }
    }
    Ok(out)
}

/// One move through the transducer lattice at frame `t` after `u` emitted labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RnntStep {
    Emit { t: usize, u: usize, label: usize },
    Blank { t: usize, u: usize },
}

/// Every interleaving of the `L` emissions of `y` with `frames` blank
/// advances whose final move is the blank leaving the last frame.
pub fn enumerate_rnnt_paths(y: &[usize], frames: usize) -> Result<Vec<Vec<RnntStep>>> {
    if frames == 0 {
        return Err(Error::InvalidArgument("transducer paths need T >= 1".into()));
    }
    if frames > ENUM_MAX_FRAMES || y.len() > ENUM_MAX_LABELS {
        return Err(Error::CapExceeded(format!(
            "T={frames} L={} exceeds T<={ENUM_MAX_FRAMES}, L<={ENUM_MAX_LABELS}",
            y.len()
        )));
    }
    let steps = frames + y.len();
    let mut paths = Vec::new();
    // Bit i set means step i is an emission.
    for mask in 0u32..(1u32 << steps) {
        if mask.count_ones() as usize != y.len() || mask & (1 << (steps - 1)) != 0 {
            continue;
        }
        let (mut t, mut u) = (0, 0);
        let mut path = Vec::with_capacity(steps);
        for i in 0..steps {
            if mask & (1 << i) != 0 {
                path.push(RnntStep::Emit { t, u, label: y[u] });
                u += 1;
            } else {
                path.push(RnntStep::Blank { t, u });
                t += 1;
            }
        }
        paths.push(path);
    }
    Ok(paths)
}
