use std::fmt;
use std::str::FromStr;

use crate::alignments::Language;
use crate::error::{Error, Result};
use crate::keyvalue::KeyValues;

/// Train, development or test portion of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Train,
    Dev,
    Test,
}

/// Language content of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subset {
    M,
    E,
    Cs,
}

impl Subset {
    pub fn mono(lang: Language) -> Self {
        match lang {
            Language::M => Subset::M,
            Language::E => Subset::E,
        }
    }

    pub fn language(self) -> Option<Language> {
        match self {
            Subset::M => Some(Language::M),
            Subset::E => Some(Language::E),
            Subset::Cs => None,
        }
    }
}

/// One named split such as `train-m` or `test-cs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Split {
    pub partition: Partition,
    pub subset: Subset,
}

impl Split {
    pub const ALL: [Split; 9] = {
        use Partition::*;
        use Subset::*;
        [
            Split::new(Train, M),
            Split::new(Train, E),
            Split::new(Train, Cs),
            Split::new(Dev, M),
            Split::new(Dev, E),
            Split::new(Dev, Cs),
            Split::new(Test, M),
            Split::new(Test, E),
            Split::new(Test, Cs),
        ]
    };

    pub const fn new(partition: Partition, subset: Subset) -> Self {
        Split { partition, subset }
    }

    pub fn name(self) -> String {
        let p = match self.partition {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        };
        let s = match self.subset {
            Subset::M => "m",
            Subset::E => "e",
            Subset::Cs => "cs",
        };
        format!("{p}-{s}")
    }

    fn index(self) -> u64 {
        Split::ALL.iter().position(|&s| s == self).unwrap() as u64
    }

    pub(crate) fn stream(self) -> u64 {
        1 + self.index()
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split `{s}`")))
    }
}

/// Inclusive integer range `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Range {
    pub lo: usize,
    pub hi: usize,
}

impl Range {
    pub const fn new(lo: usize, hi: usize) -> Self {
        Range { lo, hi }
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl FromStr for Range {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("expected `lo..hi`, got `{s}`"));
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        Ok(Range {
            lo: a.trim().parse().map_err(|_| bad())?,
            hi: b.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// Parameters of the toy two-language world.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub m_units: usize,
    pub e_units: usize,
    pub feature_dim: usize,
    pub frames_per_unit: Range,
    pub sigma: f64,
    pub units_per_utterance: Range,
    /// Share of language-M tokens in code-switched utterances.
    pub cs_m_fraction: f64,
    /// Number of contiguous embedded-E spans per code-switched utterance.
    pub cs_spans: Range,
    pub train_count: usize,
    pub dev_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            m_units: 5,
            e_units: 5,
            feature_dim: 8,
            frames_per_unit: Range::new(2, 4),
            sigma: 0.1,
            units_per_utterance: Range::new(4, 8),
            cs_m_fraction: 0.7,
            cs_spans: Range::new(1, 2),
            train_count: 500,
            dev_count: 50,
            test_count: 100,
            seed: 1,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_units", self.m_units),
            ("e_units", self.e_units),
            ("feature_dim", self.feature_dim),
            ("train_count", self.train_count),
            ("dev_count", self.dev_count),
            ("test_count", self.test_count),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for (name, r) in [
            ("frames_per_unit", self.frames_per_unit),
            ("units_per_utterance", self.units_per_utterance),
            ("cs_spans", self.cs_spans),
        ] {
            if r.lo == 0 || r.lo > r.hi {
                return Err(Error::Config(format!("{name} must be a non-empty positive range, got {r}")));
            }
        }
        if self.units_per_utterance.lo < 2 {
            return Err(Error::Config(
                "units_per_utterance must start at 2 or more so code-switched utterances hold both languages".into(),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if !(self.cs_m_fraction > 0.0 && self.cs_m_fraction < 1.0) {
            return Err(Error::Config(format!(
                "cs_m_fraction must lie strictly between 0 and 1, got {}",
                self.cs_m_fraction
            )));
        }
        Ok(())
    }

    pub fn count(&self, partition: Partition) -> usize {
        match partition {
            Partition::Train => self.train_count,
            Partition::Dev => self.dev_count,
            Partition::Test => self.test_count,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "m_units = {}\ne_units = {}\nfeature_dim = {}\nframes_per_unit = {}\nsigma = {}\n\
             units_per_utterance = {}\ncs_m_fraction = {}\ncs_spans = {}\ntrain_count = {}\n\
             dev_count = {}\ntest_count = {}\nseed = {}\n",
            self.m_units,
            self.e_units,
            self.feature_dim,
            self.frames_per_unit,
            self.sigma,
            self.units_per_utterance,
            self.cs_m_fraction,
            self.cs_spans,
            self.train_count,
            self.dev_count,
            self.test_count,
            self.seed,
        )
    }

    /// Parses `key = value` text; missing keys keep their defaults.
    pub fn from_text(text: &str, origin: &std::path::Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text, origin)?;
        let mut s = CorpusSpec::default();
        kv.take_into("m_units", &mut s.m_units)?;
        kv.take_into("e_units", &mut s.e_units)?;
        kv.take_into("feature_dim", &mut s.feature_dim)?;
        kv.take_into("frames_per_unit", &mut s.frames_per_unit)?;
        kv.take_into("sigma", &mut s.sigma)?;
        kv.take_into("units_per_utterance", &mut s.units_per_utterance)?;
        kv.take_into("cs_m_fraction", &mut s.cs_m_fraction)?;
        kv.take_into("cs_spans", &mut s.cs_spans)?;
        kv.take_into("train_count", &mut s.train_count)?;
        kv.take_into("dev_count", &mut s.dev_count)?;
        kv.take_into("test_count", &mut s.test_count)?;
        kv.take_into("seed", &mut s.seed)?;
        kv.finish()?;
        s.validate()?;
        Ok(s)
    }
}
