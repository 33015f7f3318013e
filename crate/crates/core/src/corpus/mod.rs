//! Corpus ingestion: article normalization, climate filtering and
//! near-duplicate removal.

mod article;
mod dedup;
mod lexicon;
mod minhash;

pub use article::{
    normalize_article, normalize_corpus, Article, IngestConfig, IngestOutput, RejectReason,
    Rejection,
};
pub use dedup::{dedup, DedupConfig, DedupError, DedupReport, DuplicateCluster};
pub use lexicon::{
    default_djid_codes, filter_climate, ClimateFilter, FilterError, Lexicon, LexiconCategory,
    LexiconEntry, LexiconError,
};
pub use minhash::{
    estimate_jaccard, exact_jaccard, minhash_signature, shingle_set, MinHashError, MinHashParams,
    MinHashSignature, MinHasher,
};
