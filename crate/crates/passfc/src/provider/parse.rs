//! Strict parsers for the prompt response formats.
//!
//! All parsers are pure functions of the input text. They tolerate leading
//! and trailing prose around the first balanced bracketed/braced payload,
//! because models routinely wrap the demanded format in chatter.

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error: {message}")]
pub struct ParseError {
    pub message: String,
}

impl ParseError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// Extracts the first balanced `open..close` region, respecting single- and
/// double-quoted strings with backslash escapes.
fn balanced_region(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, ch) in text[start..].char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == q {
                quote = None;
            }
            continue;
        }
        match ch {
            '\'' | '"' => quote = Some(ch),
            c if c == open => depth += 1,
            c if c == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + ch.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Quoted strings inside `region`, in order of appearance.
fn quoted_strings(region: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = region.char_indices().peekable();
    while let Some((_, ch)) = chars.next() {
        if ch == '\'' || ch == '"' {
            let quote = ch;
            let mut item = String::new();
            let mut escaped = false;
            let mut closed = false;
            for (_, c) in chars.by_ref() {
                if escaped {
                    item.push(c);
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == quote {
                    closed = true;
                    break;
                } else {
                    item.push(c);
                }
            }
            if closed {
                out.push(item);
            }
        }
    }
    out
}

/// Parses the `['a', 'b', '-c']` response format shared by the CSS, XLE, and
/// SQG prompts. The literal answer `None` (XLE's no-language case) yields an
/// empty list.
pub fn parse_bracketed_list(text: &str) -> Result<Vec<String>, ParseError> {
    let trimmed = text.trim();
    let lowered = trimmed.trim_end_matches(['.', '!']).trim().to_ascii_lowercase();
    if lowered == "none" {
        return Ok(Vec::new());
    }
    let region = balanced_region(trimmed, '[', ']').ok_or_else(|| {
        ParseError::new(format!(
            "no balanced bracketed list in {}",
            snippet(trimmed)
        ))
    })?;
    let inner = &region[1..region.len() - 1];
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    let quoted = quoted_strings(region);
    if !quoted.is_empty() {
        return Ok(quoted);
    }
    // Unquoted fallback: split on commas.
    Ok(inner
        .split(',')
        .map(|s| s.trim().trim_matches(['\'', '"']).to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

/// Canonical serialization matching the prompts' `['a', 'b']` format.
pub fn serialize_bracketed_list(items: &[String]) -> String {
    let quoted: Vec<String> = items
        .iter()
        .map(|s| format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")))
        .collect();
    format!("[{}]", quoted.join(", "))
}

/// Parses the first balanced braced object, verifying `required_keys` are all
/// present. Surplus keys are preserved in their original order (the grounding
/// prompt returns entity descriptors as extra keys).
pub fn parse_object(text: &str, required_keys: &[&str]) -> Result<Map<String, Value>, ParseError> {
    let region = balanced_region(text, '{', '}')
        .ok_or_else(|| ParseError::new(format!("no balanced object in {}", snippet(text))))?;
    let value: Value = serde_json::from_str(region)
        .map_err(|e| ParseError::new(format!("object is not valid JSON: {e}")))?;
    let map = match value {
        Value::Object(map) => map,
        _ => return Err(ParseError::new("payload is not a JSON object")),
    };
    for key in required_keys {
        if !map.contains_key(*key) {
            return Err(ParseError::new(format!("missing required key {key:?}")));
        }
    }
    Ok(map)
}

/// Parses the decomposition response: a list of `{"claim": "..."}` objects.
pub fn parse_claim_list(text: &str) -> Result<Vec<String>, ParseError> {
    let region = balanced_region(text, '[', ']')
        .ok_or_else(|| ParseError::new(format!("no balanced claim list in {}", snippet(text))))?;
    let value: Value = serde_json::from_str(region)
        .map_err(|e| ParseError::new(format!("claim list is not valid JSON: {e}")))?;
    let items = match value {
        Value::Array(items) => items,
        _ => return Err(ParseError::new("payload is not a JSON list")),
    };
    let mut claims = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        match item {
            Value::Object(map) => match map.get("claim").and_then(Value::as_str) {
                Some(claim) if !claim.trim().is_empty() => claims.push(claim.to_string()),
                _ => {
                    return Err(ParseError::new(format!(
                        "claim list element {i} lacks a non-empty \"claim\" key"
                    )))
                }
            },
            Value::String(s) if !s.trim().is_empty() => claims.push(s),
            _ => {
                return Err(ParseError::new(format!(
                    "claim list element {i} is neither an object nor a string"
                )))
            }
        }
    }
    Ok(claims)
}

fn snippet(text: &str) -> String {
    let short: String = text.chars().take(80).collect();
    format!("{short:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_css_style_list() {
        let got = parse_bracketed_list("['url1', 'url2', '-url3']").unwrap();
        assert_eq!(got, vec!["url1", "url2", "-url3"]);
    }

    #[test]
    fn none_answer_is_empty_list() {
        assert_eq!(parse_bracketed_list("None").unwrap(), Vec::<String>::new());
        assert_eq!(parse_bracketed_list(" none.\n").unwrap(), Vec::<String>::new());
    }

    #[test]
    fn tolerates_prose_prefix() {
        assert_eq!(parse_bracketed_list("sure! ['a']").unwrap(), vec!["a"]);
    }

    #[test]
    fn tolerates_stray_dot_typo_from_prompt_example() {
        // The CSS prompt's own example output contains `.'britannica.com'`.
        let got = parse_bracketed_list(
            "['.gov.fr', '.paris.fr', '.unesco.org', .'britannica.com', '-tripadvisor.com', '-reddit.com']",
        )
        .unwrap();
        assert_eq!(
            got,
            vec![
                ".gov.fr",
                ".paris.fr",
                ".unesco.org",
                "britannica.com",
                "-tripadvisor.com",
                "-reddit.com"
            ]
        );
    }

    #[test]
    fn empty_list_and_missing_list() {
        assert_eq!(parse_bracketed_list("[]").unwrap(), Vec::<String>::new());
        assert!(parse_bracketed_list("no list here").is_err());
        assert!(parse_bracketed_list("[unclosed").is_err());
    }

    #[test]
    fn serializer_round_trips_through_parser() {
        let items = vec!["a".to_string(), "-b.com".to_string(), "it's".to_string()];
        let text = serialize_bracketed_list(&items);
        assert_eq!(parse_bracketed_list(&text).unwrap(), items);
    }

    #[test]
    fn parse_object_keeps_surplus_keys_in_order() {
        // Shape of the grounding prompt's example output.
        let text = r#"{"reasoning": "r", "revised_claim": "c", "time": "Now", "Universal Studios Singapore": "located within Resorts World Sentosa, Singapore"}"#;
        let map = parse_object(text, &["reasoning", "revised_claim", "time"]).unwrap();
        let keys: Vec<&String> = map.keys().collect();
        assert_eq!(
            keys,
            vec!["reasoning", "revised_claim", "time", "Universal Studios Singapore"]
        );
        assert_eq!(map["time"], "Now");
    }

    #[test]
    fn parse_object_empty_and_embedded() {
        assert!(parse_object("{}", &[]).unwrap().is_empty());
        let bare = parse_object(r#"{"a": 1, "b": [1, 2]}"#, &["a"]).unwrap();
        let wrapped =
            parse_object("of course!\nhere: {\"a\": 1, \"b\": [1, 2]} hope it helps", &["a"])
                .unwrap();
        assert_eq!(bare, wrapped);
    }

    #[test]
    fn parse_object_reports_missing_keys() {
        let err = parse_object(r#"{"a": 1}"#, &["a", "b"]).unwrap_err();
        assert!(err.message.contains("\"b\""));
    }

    #[test]
    fn claim_list_happy_path() {
        let text = r#"[{"claim": "The Earth orbits the Sun."}, {"claim": "Water boils at 100C at sea level."}]"#;
        let got = parse_claim_list(text).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], "The Earth orbits the Sun.");
    }

    #[test]
    fn claim_list_rejects_missing_key() {
        assert!(parse_claim_list(r#"[{"fact": "x"}]"#).is_err());
    }

    #[test]
    fn balanced_region_respects_quotes() {
        // A bracket inside a quoted string must not close the region.
        let got = parse_bracketed_list(r#"['a ] b', 'c']"#).unwrap();
        assert_eq!(got, vec!["a ] b", "c"]);
    }
}
