//! On-disk corpus layout.
//!
//! ```text
//! <dir>/spec.txt               generator parameters (key = value)
//! <dir>/vocab.txt              <id>\t<surface>\t<M|E>, id 0 is <blank>
//! <dir>/manifest.txt           <split>\t<transcript>\t<spans>\t<feature dir>
//! <dir>/<split>.trn            <utt-id>\t<space-joined unit surfaces>
//! <dir>/<split>.seg            <utt-id>\t<start>:<end>:<M|E> ...
//! <dir>/feats/<split>/<utt-id>.csft
//! ```
//!
//! Feature files hold the magic `CSFT`, little-endian `u32` T and D, then
//! `T * D` little-endian `f32` values, frames in row-major order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::generate::{Corpus, Span, Utterance};
use super::spec::Split;
use crate::alignments::{LabelSeq, Language, Unit, Vocabulary, BLANK_SURFACE};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"CSFT";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn feature_bytes(features: &Tensor) -> Vec<u8> {
    let (t, d) = (features.shape()[0], features.shape()[1]);
    let mut out = Vec::with_capacity(12 + 4 * t * d);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in features.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn parse_features(bytes: &[u8], utt: &str, path: &Path) -> Result<Tensor> {
    let err = |msg: String| Error::FeatureFile {
        utt: utt.to_string(),
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 12 {
        return Err(err(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(err("bad magic".into()));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let want = 12 + 4 * t * d;
    if bytes.len() != want {
        return Err(err(format!(
            "expected {want} bytes for {t} frames of dim {d}, found {}",
            bytes.len()
        )));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(vec![t, d], data).map_err(|e| err(e.to_string()))
}

pub fn vocab_text(vocab: &Vocabulary) -> String {
    let mut s = format!("0\t{BLANK_SURFACE}\t-\n");
    for (id, unit) in vocab.units() {
        s.push_str(&format!("{id}\t{}\t{}\n", unit.surface, unit.lang));
    }
    s
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = read_text(path)?;
    let mut units = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, n, format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        if fields[0].parse::<usize>().ok() != Some(i) {
            return Err(parse_err(path, n, format!("expected id {i}, got `{}`", fields[0])));
        }
        if i == 0 {
            if fields[1] != BLANK_SURFACE {
                return Err(parse_err(path, n, format!("id 0 must be {BLANK_SURFACE}")));
            }
            continue;
        }
        let lang = Language::from_tag(fields[2])
            .ok_or_else(|| parse_err(path, n, format!("unknown language `{}`", fields[2])))?;
        units.push(Unit {
            surface: fields[1].to_string(),
            lang,
        });
    }
    if text.is_empty() {
        return Err(parse_err(path, 1, "empty vocabulary"));
    }
    Vocabulary::from_units(units).map_err(|e| parse_err(path, 0, e.to_string()))
}

fn spans_text(spans: &[Span]) -> String {
    spans
        .iter()
        .map(|s| format!("{}:{}:{}", s.start, s.end, s.lang))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_spans(text: &str, path: &Path, line: usize) -> Result<Vec<Span>> {
    text.split_whitespace()
        .map(|tok| {
            let bad = || parse_err(path, line, format!("bad span `{tok}`"));
            let mut it = tok.split(':');
            let (a, b, l) = (it.next(), it.next(), it.next());
            if it.next().is_some() {
                return Err(bad());
            }
            let start = a.and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let end = b.and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let lang = l.and_then(Language::from_tag).ok_or_else(bad)?;
            Ok(Span { start, end, lang })
        })
        .collect()
}

/// Writes `corpus` under `dir`, creating it.
pub fn write_corpus(corpus: &Corpus, spec_text: &str, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("spec.txt"), spec_text)?;
    write(&dir.join("vocab.txt"), vocab_text(&corpus.vocab))?;
    let mut manifest = String::new();
    for (split, utts) in &corpus.splits {
        let name = split.name();
        let feat_rel = format!("feats/{name}");
        let feat_dir = dir.join(&feat_rel);
        fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
        let mut trn = String::new();
        let mut seg = String::new();
        for u in utts {
            trn.push_str(&format!("{}\t{}\n", u.id, corpus.vocab.render(&u.transcript)));
            seg.push_str(&format!("{}\t{}\n", u.id, spans_text(&u.spans)));
            write(&feat_dir.join(format!("{}.csft", u.id)), feature_bytes(&u.features))?;
        }
        write(&dir.join(format!("{name}.trn")), trn)?;
        write(&dir.join(format!("{name}.seg")), seg)?;
        manifest.push_str(&format!("{name}\t{name}.trn\t{name}.seg\t{feat_rel}\n"));
    }
    write(&dir.join("manifest.txt"), manifest)
}

struct ManifestEntry {
    trn: PathBuf,
    seg: PathBuf,
    feats: PathBuf,
}

fn read_manifest(dir: &Path) -> Result<BTreeMap<Split, ManifestEntry>> {
    let path = dir.join("manifest.txt");
    let text = read_text(&path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(&path, i + 1, format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let split: Split = fields[0]
            .parse()
            .map_err(|e: Error| parse_err(&path, i + 1, e.to_string()))?;
        out.insert(
            split,
            ManifestEntry {
                trn: dir.join(fields[1]),
                seg: dir.join(fields[2]),
                feats: dir.join(fields[3]),
            },
        );
    }
    Ok(out)
}

fn read_split(entry: &ManifestEntry, vocab: &Vocabulary) -> Result<Vec<Utterance>> {
    let trn = read_text(&entry.trn)?;
    let seg = read_text(&entry.seg)?;
    let mut spans_by_id = BTreeMap::new();
    for (i, line) in seg.lines().enumerate() {
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(&entry.seg, i + 1, "missing tab after utterance id"))?;
        spans_by_id.insert(id.to_string(), parse_spans(rest, &entry.seg, i + 1)?);
    }
    let mut utts = Vec::new();
    for (i, line) in trn.lines().enumerate() {
        let n = i + 1;
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(&entry.trn, n, "missing tab after utterance id"))?;
        if id.is_empty() {
            return Err(parse_err(&entry.trn, n, "empty utterance id"));
        }
        let ids = text
            .split_whitespace()
            .map(|s| {
                vocab
                    .id_of(s)
                    .ok_or_else(|| parse_err(&entry.trn, n, format!("unit `{s}` is not in the vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        let transcript = LabelSeq::new(ids).map_err(|e| parse_err(&entry.trn, n, e.to_string()))?;
        let spans = spans_by_id
            .remove(id)
            .ok_or_else(|| parse_err(&entry.trn, n, format!("no spans for `{id}` in {}", entry.seg.display())))?;
        let fpath = entry.feats.join(format!("{id}.csft"));
        let bytes = fs::read(&fpath).map_err(|e| Error::FeatureFile {
            utt: id.to_string(),
            path: fpath.clone(),
            msg: e.to_string(),
        })?;
        let features = parse_features(&bytes, id, &fpath)?;
        if spans.last().map_or(0, |s| s.end) != features.shape()[0] {
            return Err(parse_err(
                &entry.seg,
                0,
                format!("spans of `{id}` do not cover its {} frames", features.shape()[0]),
            ));
        }
        utts.push(Utterance {
            id: id.to_string(),
            features,
            transcript,
            spans,
        });
    }
    Ok(utts)
}

/// Loads every split listed in the manifest.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let vocab = read_vocab(&dir.join("vocab.txt"))?;
    let mut splits = BTreeMap::new();
    for (split, entry) in read_manifest(dir)? {
        splits.insert(split, read_split(&entry, &vocab)?);
    }
    Ok(Corpus { vocab, splits })
}

/// Loads the vocabulary and a single split.
pub fn load_split(dir: &Path, split: Split) -> Result<(Vocabulary, Vec<Utterance>)> {
    let vocab = read_vocab(&dir.join("vocab.txt"))?;
    let manifest = read_manifest(dir)?;
    let entry = manifest.get(&split).ok_or_else(|| {
        Error::Config(format!("split `{split}` is not listed in {}", dir.join("manifest.txt").display()))
    })?;
    let utts = read_split(entry, &vocab)?;
    Ok((vocab, utts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate::generate;
    use crate::data::spec::{CorpusSpec, Partition, Subset};

    fn small() -> CorpusSpec {
        CorpusSpec {
            train_count: 6,
            dev_count: 2,
            test_count: 3,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small();
        let corpus = generate(&spec).unwrap();
        write_corpus(&corpus, &spec.to_text(), dir.path()).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), corpus);
        let split = Split::new(Partition::Test, Subset::Cs);
        let (vocab, utts) = load_split(dir.path(), split).unwrap();
        assert_eq!(vocab, corpus.vocab);
        assert_eq!(utts, corpus.split(split));
    }

    #[test]
    fn truncated_feature_file_names_the_utterance() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&small()).unwrap();
        write_corpus(&corpus, "", dir.path()).unwrap();
        let victim = &corpus.split(Split::new(Partition::Dev, Subset::M))[1].id;
        let path = dir.path().join(format!("feats/dev-m/{victim}.csft"));
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(&err, Error::FeatureFile { utt, .. } if utt == victim), "{err}");
    }

    #[test]
    fn empty_transcript_file_gives_empty_split() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&small()).unwrap();
        write_corpus(&corpus, "", dir.path()).unwrap();
        fs::write(dir.path().join("dev-e.trn"), "").unwrap();
        let (_, utts) = load_split(dir.path(), Split::new(Partition::Dev, Subset::E)).unwrap();
        assert!(utts.is_empty());
    }

    #[test]
    fn unknown_unit_and_bad_records_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&small()).unwrap();
        write_corpus(&corpus, "", dir.path()).unwrap();
        let trn = dir.path().join("test-m.trn");
        let text = fs::read_to_string(&trn).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[1] = lines[1].replacen('m', "z", 2);
        fs::write(&trn, lines.join("\n")).unwrap();
        let err = load_split(dir.path(), Split::new(Partition::Test, Subset::M)).unwrap_err();
        assert!(matches!(&err, Error::Parse { line: 2, .. }), "{err}");
        fs::write(&trn, "no-tab-here\n").unwrap();
        let err = load_split(dir.path(), Split::new(Partition::Test, Subset::M)).unwrap_err();
        assert!(matches!(&err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn feature_codec_rejects_bad_magic() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        let mut bytes = feature_bytes(&t);
        assert_eq!(parse_features(&bytes, "u", Path::new("u.csft")).unwrap(), t);
        bytes[0] = b'X';
        assert!(parse_features(&bytes, "u", Path::new("u.csft")).is_err());
    }

    #[test]
    fn vocab_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = crate::data::generate::toy_vocabulary(3, 2);
        let path = dir.path().join("vocab.txt");
        fs::write(&path, vocab_text(&vocab)).unwrap();
        assert_eq!(read_vocab(&path).unwrap(), vocab);
        fs::write(&path, "0\t<blank>\t-\n1\tm1\tX\n").unwrap();
        assert!(matches!(read_vocab(&path), Err(Error::Parse { line: 2, .. })));
    }
}
