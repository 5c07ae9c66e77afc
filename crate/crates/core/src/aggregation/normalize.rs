use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

/// Maps raw agent output to a canonical answer so equal answers vote together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Normalizer {
    /// Exactly one integer in the text, printed in minimal decimal form.
    #[default]
    Integer,
    /// Trimmed, whitespace-collapsed, lowercased text.
    VerbatimTrim,
}

impl Normalizer {
    pub fn id(&self) -> &'static str {
        match self {
            Normalizer::Integer => "integer",
            Normalizer::VerbatimTrim => "verbatim-trim",
        }
    }

    /// Canonical answer, or `None` when the text is unparseable.
    pub fn apply(&self, raw: &str) -> Option<String> {
        match self {
            Normalizer::Integer => normalize_integer(raw),
            Normalizer::VerbatimTrim => {
                let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
                (!collapsed.is_empty()).then(|| collapsed.to_lowercase())
            }
        }
    }
}

impl fmt::Display for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Normalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer" => Ok(Normalizer::Integer),
            "verbatim-trim" => Ok(Normalizer::VerbatimTrim),
            other => Err(Error::UnknownNormalizer(other.to_string())),
        }
    }
}

/// Normalizes `raw` with the normalizer named `normalizer_id`.
///
/// `Ok(None)` means the text is unparseable; an unknown normalizer is an error.
pub fn normalize_answer(raw: &str, normalizer_id: &str) -> Result<Option<String>> {
    Ok(normalizer_id.parse::<Normalizer>()?.apply(raw))
}

fn integer_token() -> &'static Regex {
    static TOKEN: OnceLock<Regex> = OnceLock::new();
    // Comma-grouped thousands first so "1,000" is one token.
    TOKEN.get_or_init(|| Regex::new(r"[+-]?\d{1,3}(?:,\d{3})+|[+-]?\d+").expect("valid regex"))
}

fn normalize_integer(raw: &str) -> Option<String> {
    let mut tokens = integer_token().find_iter(raw.trim());
    let token = tokens.next()?.as_str();
    if tokens.next().is_some() {
        return None;
    }
    let negative = token.starts_with('-');
    let digits: String = token.chars().filter(char::is_ascii_digit).collect();
    let digits = digits.trim_start_matches('0');
    Some(match (digits.is_empty(), negative) {
        (true, _) => "0".to_string(),
        (false, true) => format!("-{digits}"),
        (false, false) => digits.to_string(),
    })
}
