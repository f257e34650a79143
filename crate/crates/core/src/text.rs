//! Term normalization shared by the schema validator and the keyword index.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Lowercases, folds accents and drops every non-alphanumeric character.
///
/// `"E-176"` and `"E176"` both become `"e176"`; `"Criticity_Level"` becomes
/// `"criticitylevel"`.
pub fn normalize(term: &str) -> String {
    term.nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric())
        .collect()
}

/// Case-insensitive identifier equality.
pub fn ident_eq(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b) || (a.to_lowercase() == b.to_lowercase())
}

/// Whitespace-separated word tokens, lowercased, with surrounding punctuation trimmed.
pub(crate) fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}
