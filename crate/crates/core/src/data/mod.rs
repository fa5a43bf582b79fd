mod files;
mod generate;
mod spec;

pub use files::{
    feature_bytes, load_corpus, load_split, parse_features, read_vocab, vocab_text, write_corpus, FEATURE_MAGIC,
};
pub use generate::{generate, prototypes, subset_is_pure, toy_vocabulary, Corpus, Span, Utterance};
pub use spec::{CorpusSpec, Partition, Range, Split, Subset};
