//! Prompt-template registry.
//!
//! Templates are stored verbatim as data files under `templates/` and
//! rendered with Python-format semantics: `{name}` substitutes a variable,
//! `{{` and `}}` escape literal braces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TemplateError;

/// Reserved variable key: when present, its value is appended to the rendered
/// prompt as a corrective instruction for a format-retry attempt.
pub const CORRECTIVE_NOTE_KEY: &str = "_corrective_note";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    Decompose,
    Ground,
    Css,
    Xle,
    Sqg,
    Verify,
    Reflect,
    Summarize,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Decompose,
        TemplateId::Ground,
        TemplateId::Css,
        TemplateId::Xle,
        TemplateId::Sqg,
        TemplateId::Verify,
        TemplateId::Reflect,
        TemplateId::Summarize,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TemplateId::Decompose => "decompose",
            TemplateId::Ground => "ground",
            TemplateId::Css => "css",
            TemplateId::Xle => "xle",
            TemplateId::Sqg => "sqg",
            TemplateId::Verify => "verify",
            TemplateId::Reflect => "reflect",
            TemplateId::Summarize => "summarize",
        }
    }

    pub fn from_name(name: &str) -> Option<TemplateId> {
        Self::ALL.iter().copied().find(|t| t.name() == name)
    }

    pub fn text(&self) -> &'static str {
        match self {
            TemplateId::Decompose => include_str!("../../templates/decompose.txt"),
            TemplateId::Ground => include_str!("../../templates/ground.txt"),
            TemplateId::Css => include_str!("../../templates/css.txt"),
            TemplateId::Xle => include_str!("../../templates/xle.txt"),
            TemplateId::Sqg => include_str!("../../templates/sqg.txt"),
            TemplateId::Verify => include_str!("../../templates/verify.txt"),
            TemplateId::Reflect => include_str!("../../templates/reflect.txt"),
            TemplateId::Summarize => include_str!("../../templates/summarize.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Placeholder names appearing in the template body.
pub fn placeholders(id: TemplateId) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let text = id.text();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'{' {
                    i += 2;
                    continue;
                }
                if let Some(end) = text[i + 1..].find('}') {
                    let name = &text[i + 1..i + 1 + end];
                    if is_placeholder_name(name) {
                        out.insert(name.to_string());
                    }
                    i += end + 2;
                    continue;
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    out
}

fn is_placeholder_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Renders a template with Python-format escaping rules. Every placeholder
/// must have a binding; surplus bindings are ignored.
pub fn render(id: TemplateId, variables: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    let text = id.text();
    let mut out = String::with_capacity(text.len());
    let mut chars = text.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        match ch {
            '{' => {
                if matches!(chars.peek(), Some((_, '{'))) {
                    chars.next();
                    out.push('{');
                    continue;
                }
                let rest = &text[i + 1..];
                let end = rest.find('}').ok_or_else(|| {
                    TemplateError::new(id, "unterminated placeholder brace".to_string())
                })?;
                let name = &rest[..end];
                if !is_placeholder_name(name) {
                    return Err(TemplateError::new(
                        id,
                        format!("malformed placeholder {{{name}}}"),
                    ));
                }
                let value = variables.get(name).ok_or_else(|| {
                    TemplateError::new(id, format!("unbound placeholder {{{name}}}"))
                })?;
                out.push_str(value);
                // Skip past the placeholder body and closing brace.
                for _ in 0..end + 1 {
                    chars.next();
                }
            }
            '}' => {
                if matches!(chars.peek(), Some((_, '}'))) {
                    chars.next();
                }
                out.push('}');
            }
            _ => out.push(ch),
        }
    }
    if let Some(note) = variables.get(CORRECTIVE_NOTE_KEY) {
        out.push_str("\n\n");
        out.push_str(note);
    }
    Ok(out)
}
