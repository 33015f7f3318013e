use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::Article;
use crate::text::word_tokens_lower;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconCategory {
    GeneralClimate,
    Carbon,
    Energy,
    Finance,
    Policy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    pub category: LexiconCategory,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("lexicon term `{0}` is not lowercase and trimmed")]
    NotCanonical(String),
    #[error("lexicon term `{0}` appears more than once")]
    Duplicate(String),
    #[error("lexicon term `{0}` has no word tokens")]
    Empty(String),
    #[error("lexicon JSON: {0}")]
    Parse(String),
}

/// Climate keyword lexicon with whole-token, case-insensitive matching.
/// Multi-word terms match as contiguous token sequences.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    // first token -> (entry index, full token pattern)
    index: HashMap<String, Vec<(usize, Vec<String>)>>,
}

impl Lexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, LexiconError> {
        let mut seen = HashSet::new();
        let mut index: HashMap<String, Vec<(usize, Vec<String>)>> = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            let term = &entry.term;
            if term.trim() != term || term.to_lowercase() != *term {
                return Err(LexiconError::NotCanonical(term.clone()));
            }
            if !seen.insert(term.clone()) {
                return Err(LexiconError::Duplicate(term.clone()));
            }
            let pattern = word_tokens_lower(term);
            let Some(first) = pattern.first().cloned() else {
                return Err(LexiconError::Empty(term.clone()));
            };
            index.entry(first).or_default().push((i, pattern));
        }
        Ok(Self { entries, index })
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let entries: Vec<LexiconEntry> =
            serde_json::from_str(text).map_err(|e| LexiconError::Parse(e.to_string()))?;
        Self::new(entries)
    }

    /// Representative terms for each of the five categories.
    pub fn builtin() -> Self {
        use LexiconCategory::*;
        let terms: &[(&str, LexiconCategory)] = &[
            ("climate change", GeneralClimate),
            ("global warming", GeneralClimate),
            ("greenhouse effect", GeneralClimate),
            ("carbon", Carbon),
            ("co2", Carbon),
            ("carbon tax", Carbon),
            ("carbon capture", Carbon),
            ("renewables", Energy),
            ("solar", Energy),
            ("wind", Energy),
            ("fossil fuels", Energy),
            ("biofuels", Energy),
            ("esg", Finance),
            ("green bonds", Finance),
            ("carbon markets", Finance),
            ("paris agreement", Policy),
            ("kyoto protocol", Policy),
            ("net zero", Policy),
        ];
        let entries = terms
            .iter()
            .map(|&(term, category)| LexiconEntry {
                term: term.to_string(),
                category,
            })
            .collect();
        Self::new(entries).expect("builtin lexicon is canonical")
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First lexicon entry (in lexicon order) occurring in `text`.
    pub fn first_match(&self, text: &str) -> Option<&LexiconEntry> {
        let toks = word_tokens_lower(text);
        let mut best: Option<usize> = None;
        for start in 0..toks.len() {
            let Some(cands) = self.index.get(&toks[start]) else {
                continue;
            };
            for (i, pattern) in cands {
                if toks.len() - start >= pattern.len()
                    && toks[start..start + pattern.len()] == pattern[..]
                {
                    best = Some(best.map_or(*i, |b| b.min(*i)));
                }
            }
        }
        best.map(|i| &self.entries[i])
    }

    pub fn matches(&self, text: &str) -> bool {
        self.first_match(text).is_some()
    }
}

/// The climate subject codes used for the primary filter.
pub fn default_djid_codes() -> BTreeSet<String> {
    [
        "N/ENV", "N/CO2", "N/RNW", "N/BFL", "N/COA", "N/NUK", "N/NGS", "N/AGR", "N/FST",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClimateFilter {
    pub kept: Vec<Article>,
    /// Articles without an allowed code that still match the lexicon.
    pub flagged_by_lexicon: Vec<Article>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("the allowed subject-code set is empty")]
    EmptyAllowList,
}

pub fn filter_climate(
    articles: &[Article],
    djid_allow: &BTreeSet<String>,
    lexicon: &Lexicon,
) -> Result<ClimateFilter, FilterError> {
    if djid_allow.is_empty() {
        return Err(FilterError::EmptyAllowList);
    }
    let mut out = ClimateFilter::default();
    for article in articles {
        if article.djid_codes.iter().any(|c| djid_allow.contains(c)) {
            out.kept.push(article.clone());
        } else if lexicon.matches(&article.headline) || lexicon.matches(&article.body) {
            out.flagged_by_lexicon.push(article.clone());
        }
    }
    Ok(out)
}
