use std::collections::{BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::text::{normalize_block, normalize_line};

/// One normalized news item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub headline: String,
    pub lead: String,
    pub body: String,
    #[serde(default)]
    pub djid_codes: BTreeSet<String>,
    #[serde(default)]
    pub source_id: String,
}

impl Article {
    /// Headline, lead and body joined by newlines.
    pub fn full_text(&self) -> String {
        let mut s = String::with_capacity(self.headline.len() + self.lead.len() + self.body.len() + 2);
        s.push_str(&self.headline);
        s.push('\n');
        if !self.body.starts_with(&self.lead) {
            s.push_str(&self.lead);
            s.push('\n');
        }
        s.push_str(&self.body);
        s
    }

    /// Text used for shingling: headline then body.
    pub fn dedup_text(&self) -> String {
        format!("{}\n{}", self.headline, self.body)
    }

    #[cfg(test)]
    fn to_raw(&self) -> Map<String, Value> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("Article always serializes to an object"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    #[serde(default)]
    pub min_timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    pub max_timestamp: Option<DateTime<Utc>>,
    /// A body line repeated verbatim in at least this many articles of one
    /// source is boilerplate.
    #[serde(default = "default_boilerplate_min")]
    pub boilerplate_min_articles: usize,
}

fn default_boilerplate_min() -> usize {
    10
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            min_timestamp: None,
            max_timestamp: None,
            boilerplate_min_articles: default_boilerplate_min(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum RejectReason {
    MissingField(String),
    BadTimestamp(String),
    OutOfRange(String),
    EmptyAfterNormalization(String),
    DuplicateId,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::MissingField(field) => write!(f, "missing mandatory field `{field}`"),
            RejectReason::BadTimestamp(ts) => write!(f, "unparseable timestamp `{ts}`"),
            RejectReason::OutOfRange(ts) => write!(f, "timestamp {ts} outside configured range"),
            RejectReason::EmptyAfterNormalization(field) => {
                write!(f, "`{field}` empty after normalization")
            }
            RejectReason::DuplicateId => write!(f, "duplicate id"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("article {}: {reason}", id.as_deref().unwrap_or("<no id>"))]
pub struct Rejection {
    pub id: Option<String>,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestOutput {
    pub articles: Vec<Article>,
    pub rejections: Vec<Rejection>,
    /// (source_id, line) pairs removed as cross-article boilerplate.
    pub boilerplate_lines: Vec<(String, String)>,
}

fn is_copyright_line(line: &str) -> bool {
    let lower = line.to_lowercase();
    lower.starts_with("copyright")
        || lower.starts_with("(c) ")
        || lower.starts_with('\u{00A9}')
        || lower.contains("all rights reserved")
}

fn strip_copyright(block: &str) -> String {
    block
        .lines()
        .filter(|l| !is_copyright_line(l))
        .collect::<Vec<_>>()
        .join("\n")
}

fn mandatory_str<'a>(
    raw: &'a Map<String, Value>,
    field: &str,
    id: Option<&String>,
) -> Result<&'a str, Rejection> {
    raw.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| Rejection {
            id: id.cloned(),
            reason: RejectReason::MissingField(field.to_string()),
        })
}

/// Normalize one raw record into an [`Article`].
///
/// Applies the per-article rules (Unicode NFC, whitespace collapse,
/// copyright-line removal) and the optional timestamp range check. The
/// cross-article boilerplate rule needs the whole corpus and lives in
/// [`normalize_corpus`].
pub fn normalize_article(
    raw: &Map<String, Value>,
    config: &IngestConfig,
) -> Result<Article, Rejection> {
    let id = raw
        .get("id")
        .and_then(Value::as_str)
        .map(|s| normalize_line(s))
        .filter(|s| !s.is_empty())
        .ok_or(Rejection {
            id: None,
            reason: RejectReason::MissingField("id".into()),
        })?;
    let reject = |reason| Rejection {
        id: Some(id.clone()),
        reason,
    };

    let ts_raw = mandatory_str(raw, "timestamp", Some(&id))?;
    let timestamp = DateTime::parse_from_rfc3339(ts_raw.trim())
        .map_err(|_| reject(RejectReason::BadTimestamp(ts_raw.to_string())))?
        .with_timezone(&Utc);
    let below = config.min_timestamp.is_some_and(|min| timestamp < min);
    let above = config.max_timestamp.is_some_and(|max| timestamp > max);
    if below || above {
        return Err(reject(RejectReason::OutOfRange(timestamp.to_rfc3339())));
    }

    let headline = normalize_line(mandatory_str(raw, "headline", Some(&id))?);
    if headline.is_empty() {
        return Err(reject(RejectReason::EmptyAfterNormalization("headline".into())));
    }
    let body = strip_copyright(&normalize_block(mandatory_str(raw, "body", Some(&id))?));
    if body.is_empty() {
        return Err(reject(RejectReason::EmptyAfterNormalization("body".into())));
    }
    let lead = raw
        .get("lead")
        .and_then(Value::as_str)
        .map(|l| strip_copyright(&normalize_line(l)))
        .filter(|l| !l.is_empty())
        .unwrap_or_else(|| first_line(&body));

    let djid_codes = match raw.get("djid_codes") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(Value::as_str)
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect(),
        _ => BTreeSet::new(),
    };
    let source_id = raw
        .get("source_id")
        .and_then(Value::as_str)
        .map(normalize_line)
        .unwrap_or_default();

    Ok(Article {
        id,
        timestamp,
        headline,
        lead,
        body,
        djid_codes,
        source_id,
    })
}

fn first_line(body: &str) -> String {
    body.lines().next().unwrap_or_default().to_string()
}

/// Normalize a whole corpus: per-article rules, duplicate-id rejection, then
/// removal of lines repeated byte-identically across at least
/// `boilerplate_min_articles` articles of the same source.
pub fn normalize_corpus(raws: &[Map<String, Value>], config: &IngestConfig) -> IngestOutput {
    let mut out = IngestOutput::default();
    let mut seen = HashSet::new();
    for raw in raws {
        match normalize_article(raw, config) {
            Ok(article) => {
                if seen.insert(article.id.clone()) {
                    out.articles.push(article);
                } else {
                    out.rejections.push(Rejection {
                        id: Some(article.id),
                        reason: RejectReason::DuplicateId,
                    });
                }
            }
            Err(rejection) => out.rejections.push(rejection),
        }
    }

    let threshold = config.boilerplate_min_articles.max(1);
    let mut line_counts: HashMap<(&str, &str), usize> = HashMap::new();
    for article in &out.articles {
        let distinct: HashSet<&str> = article.body.lines().collect();
        for line in distinct {
            *line_counts.entry((article.source_id.as_str(), line)).or_default() += 1;
        }
    }
    let boilerplate: HashSet<(String, String)> = line_counts
        .into_iter()
        .filter(|&(_, n)| n >= threshold)
        .map(|((s, l), _)| (s.to_string(), l.to_string()))
        .collect();
    let mut listed: Vec<_> = boilerplate.iter().cloned().collect();
    listed.sort();
    out.boilerplate_lines = listed;

    if !boilerplate.is_empty() {
        let mut kept = Vec::with_capacity(out.articles.len());
        for mut article in std::mem::take(&mut out.articles) {
            let source = article.source_id.clone();
            let is_bp = |l: &str| boilerplate.contains(&(source.clone(), l.to_string()));
            let body: Vec<&str> = article.body.lines().filter(|l| !is_bp(l)).collect();
            let body = body.join("\n");
            if body.is_empty() {
                out.rejections.push(Rejection {
                    id: Some(article.id),
                    reason: RejectReason::EmptyAfterNormalization("body".into()),
                });
                continue;
            }
            if is_bp(&article.lead) {
                article.lead = first_line(&body);
            }
            article.body = body;
            kept.push(article);
        }
        out.articles = kept;
    }
    out
}
