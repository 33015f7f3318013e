//! Text normalization and tokenization shared by every stage.
//!
//! All stages agree on one tokenizer: whitespace-delimited tokens of
//! normalized text. Annotation masks, quote checks and shingles are all
//! computed against it.

use unicode_normalization::UnicodeNormalization;

/// NFC-normalize a single line, map every Unicode whitespace character to an
/// ASCII space, collapse runs and trim.
pub fn normalize_line(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    let mut pending_space = false;
    for ch in nfc.chars() {
        if ch.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(ch);
    }
    out
}

/// Normalize a multi-line block: each line via [`normalize_line`], empty
/// lines dropped, joined with `\n`.
pub fn normalize_block(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    nfc.split(['\n', '\r', '\u{2028}', '\u{2029}'])
        .map(normalize_line)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Collapse all whitespace (including newlines) to single spaces.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The corpus-wide tokenizer used for annotation masks and shingles.
pub fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Lowercased alphanumeric word tokens, used for lexicon matching.
///
/// Any non-alphanumeric character is a separator, so `net-zero` yields
/// `net`, `zero` and `carbonated` never yields `carbon`.
pub fn word_tokens_lower(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}
