//! Operator-structured search queries: the node tree, deterministic
//! rendering to engine syntax, a parser for model-emitted query strings, and
//! the composition of executable per-language strings with domain and cutoff
//! suffixes.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("query render error: {0}")]
pub struct RenderError(pub String);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("query parse error: {0}")]
pub struct QueryParseError(pub String);

/// One node of an operator-structured query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryNode {
    Term { value: String },
    /// Exact-match phrase, rendered in double quotes.
    Phrase { value: String },
    /// Quoted phrase containing `*` wildcards.
    WildcardPhrase { value: String },
    OrGroup { children: Vec<QueryNode> },
    AndGroup { children: Vec<QueryNode> },
    Not { child: Box<QueryNode> },
    Before { date: NaiveDate },
    After { date: NaiveDate },
    Loc { value: String },
}

impl QueryNode {
    pub fn term(value: impl Into<String>) -> Self {
        QueryNode::Term { value: value.into() }
    }
    pub fn phrase(value: impl Into<String>) -> Self {
        QueryNode::Phrase { value: value.into() }
    }
    pub fn wildcard_phrase(value: impl Into<String>) -> Self {
        QueryNode::WildcardPhrase { value: value.into() }
    }
    pub fn or_group(children: Vec<QueryNode>) -> Self {
        QueryNode::OrGroup { children }
    }
    pub fn and_group(children: Vec<QueryNode>) -> Self {
        QueryNode::AndGroup { children }
    }
    #[allow(clippy::should_implement_trait)] // constructor named for the operator
    pub fn not(child: QueryNode) -> Self {
        QueryNode::Not { child: Box::new(child) }
    }
    pub fn before(date: NaiveDate) -> Self {
        QueryNode::Before { date }
    }
    pub fn after(date: NaiveDate) -> Self {
        QueryNode::After { date }
    }
    pub fn loc(value: impl Into<String>) -> Self {
        QueryNode::Loc { value: value.into() }
    }

    fn validate(&self) -> Result<(), RenderError> {
        match self {
            QueryNode::Term { value } => {
                if value.is_empty() {
                    return Err(RenderError("empty term".into()));
                }
                if value.chars().any(char::is_whitespace) {
                    return Err(RenderError(format!("term {value:?} contains whitespace")));
                }
                if value.contains('"') || value.contains('(') || value.contains(')') {
                    return Err(RenderError(format!("term {value:?} contains reserved characters")));
                }
                if value.starts_with('-') {
                    return Err(RenderError(format!(
                        "term {value:?} starts with '-'; use a not node"
                    )));
                }
                if value == "OR" {
                    return Err(RenderError("bare OR is an operator, not a term".into()));
                }
                Ok(())
            }
            QueryNode::Phrase { value } => {
                if value.is_empty() {
                    return Err(RenderError("empty phrase".into()));
                }
                if value.contains('"') {
                    return Err(RenderError(format!("phrase {value:?} contains a double quote")));
                }
                if value.contains('*') {
                    return Err(RenderError(format!(
                        "phrase {value:?} contains '*'; use wildcard_phrase"
                    )));
                }
                Ok(())
            }
            QueryNode::WildcardPhrase { value } => {
                if value.contains('"') {
                    return Err(RenderError(format!("phrase {value:?} contains a double quote")));
                }
                if !value.contains('*') {
                    return Err(RenderError(format!(
                        "wildcard phrase {value:?} has no '*' wildcard"
                    )));
                }
                Ok(())
            }
            QueryNode::OrGroup { children } | QueryNode::AndGroup { children } => {
                if children.len() < 2 {
                    return Err(RenderError("groups need at least two children".into()));
                }
                // Groups are associative; the canonical tree keeps them flat.
                if matches!(self, QueryNode::AndGroup { .. })
                    && children.iter().any(|c| matches!(c, QueryNode::AndGroup { .. }))
                {
                    return Err(RenderError(
                        "nested and_group must be flattened into its parent".into(),
                    ));
                }
                if matches!(self, QueryNode::OrGroup { .. })
                    && children.iter().any(|c| matches!(c, QueryNode::OrGroup { .. }))
                {
                    return Err(RenderError(
                        "nested or_group must be flattened into its parent".into(),
                    ));
                }
                children.iter().try_for_each(QueryNode::validate)
            }
            QueryNode::Not { child } => {
                if matches!(**child, QueryNode::Not { .. }) {
                    return Err(RenderError("double negation is not renderable".into()));
                }
                child.validate()
            }
            QueryNode::Before { .. } | QueryNode::After { .. } => Ok(()),
            QueryNode::Loc { value } => {
                if value.is_empty() {
                    return Err(RenderError("empty loc".into()));
                }
                if value.contains('"') {
                    return Err(RenderError(format!("loc {value:?} contains a double quote")));
                }
                Ok(())
            }
        }
    }

    fn render_nested(&self, out: &mut String) {
        match self {
            QueryNode::OrGroup { .. } | QueryNode::AndGroup { .. } => {
                out.push('(');
                self.render_bare(out);
                out.push(')');
            }
            _ => self.render_bare(out),
        }
    }

    fn render_bare(&self, out: &mut String) {
        match self {
            QueryNode::Term { value } => out.push_str(value),
            QueryNode::Phrase { value } | QueryNode::WildcardPhrase { value } => {
                out.push('"');
                out.push_str(value);
                out.push('"');
            }
            QueryNode::OrGroup { children } => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" OR ");
                    }
                    child.render_nested(out);
                }
            }
            QueryNode::AndGroup { children } => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    match child {
                        // Or-groups keep parentheses inside an and-group so
                        // re-parsing preserves the intended precedence.
                        QueryNode::OrGroup { .. } => child.render_nested(out),
                        _ => child.render_bare(out),
                    }
                }
            }
            QueryNode::Not { child } => {
                out.push('-');
                child.render_nested(out);
            }
            QueryNode::Before { date } => {
                out.push_str("before:");
                out.push_str(&date.format("%Y-%m-%d").to_string());
            }
            QueryNode::After { date } => {
                out.push_str("after:");
                out.push_str(&date.format("%Y-%m-%d").to_string());
            }
            QueryNode::Loc { value } => {
                out.push_str("loc:\"");
                out.push_str(value);
                out.push('"');
            }
        }
    }

    pub fn render(&self) -> Result<String, RenderError> {
        render_query(self)
    }
}

/// Deterministic rendering using the engine operator syntax: quotes for
/// phrases, ALL-CAPS OR, `-` negation, `*` wildcards inside quoted phrases,
/// `before:`/`after:YYYY-MM-DD`, `loc:"..."`.
pub fn render_query(node: &QueryNode) -> Result<String, RenderError> {
    node.validate()?;
    let mut out = String::new();
    node.render_bare(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Quoted(String),
    Open,
    Close,
    Or,
    Neg,
    Before(NaiveDate),
    After(NaiveDate),
    Loc(String),
}

fn tokenize(input: &str) -> Result<Vec<Token>, QueryParseError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '(' => {
                tokens.push(Token::Open);
                i += 1;
            }
            ')' => {
                tokens.push(Token::Close);
                i += 1;
            }
            '"' => {
                let mut value = String::new();
                i += 1;
                let mut closed = false;
                while i < chars.len() {
                    if chars[i] == '"' {
                        closed = true;
                        i += 1;
                        break;
                    }
                    value.push(chars[i]);
                    i += 1;
                }
                if !closed {
                    return Err(QueryParseError("unterminated quoted phrase".into()));
                }
                tokens.push(Token::Quoted(value));
            }
            '-' => {
                // Negation only when glued to a following token.
                if i + 1 < chars.len() && !chars[i + 1].is_whitespace() {
                    tokens.push(Token::Neg);
                    i += 1;
                } else {
                    return Err(QueryParseError("dangling '-'".into()));
                }
            }
            _ => {
                let mut word = String::new();
                while i < chars.len()
                    && !chars[i].is_whitespace()
                    && !matches!(chars[i], '(' | ')' | '"')
                {
                    word.push(chars[i]);
                    i += 1;
                }
                // loc: may be glued to a quoted value.
                if word == "loc:" && i < chars.len() && chars[i] == '"' {
                    let mut value = String::new();
                    i += 1;
                    let mut closed = false;
                    while i < chars.len() {
                        if chars[i] == '"' {
                            closed = true;
                            i += 1;
                            break;
                        }
                        value.push(chars[i]);
                        i += 1;
                    }
                    if !closed {
                        return Err(QueryParseError("unterminated loc phrase".into()));
                    }
                    tokens.push(Token::Loc(value));
                    continue;
                }
                tokens.push(classify_word(word));
            }
        }
    }
    Ok(tokens)
}

fn classify_word(word: String) -> Token {
    if word == "OR" {
        return Token::Or;
    }
    if let Some(rest) = word.strip_prefix("before:") {
        if let Ok(date) = NaiveDate::parse_from_str(rest, "%Y-%m-%d") {
            return Token::Before(date);
        }
    }
    if let Some(rest) = word.strip_prefix("after:") {
        if let Ok(date) = NaiveDate::parse_from_str(rest, "%Y-%m-%d") {
            return Token::After(date);
        }
    }
    if let Some(rest) = word.strip_prefix("loc:") {
        if !rest.is_empty() {
            return Token::Loc(rest.to_string());
        }
    }
    Token::Word(word)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    /// One unit: an atom, a negation, or a parenthesized group.
    fn parse_unit(&mut self) -> Result<QueryNode, QueryParseError> {
        match self.next() {
            Some(Token::Word(w)) => Ok(QueryNode::term(w)),
            Some(Token::Quoted(q)) => {
                if q.contains('*') {
                    Ok(QueryNode::wildcard_phrase(q))
                } else {
                    Ok(QueryNode::phrase(q))
                }
            }
            Some(Token::Before(d)) => Ok(QueryNode::before(d)),
            Some(Token::After(d)) => Ok(QueryNode::after(d)),
            Some(Token::Loc(v)) => Ok(QueryNode::loc(v)),
            Some(Token::Neg) => Ok(QueryNode::not(self.parse_unit()?)),
            Some(Token::Open) => {
                let inner = self.parse_sequence(true)?;
                match self.next() {
                    Some(Token::Close) => Ok(inner),
                    _ => Err(QueryParseError("missing closing parenthesis".into())),
                }
            }
            Some(Token::Close) => Err(QueryParseError("unexpected ')'".into())),
            Some(Token::Or) => Err(QueryParseError("OR without a left operand".into())),
            None => Err(QueryParseError("empty query".into())),
        }
    }

    /// A whitespace-joined sequence with OR binding between adjacent units.
    fn parse_sequence(&mut self, in_group: bool) -> Result<QueryNode, QueryParseError> {
        let mut units: Vec<QueryNode> = Vec::new();
        loop {
            match self.peek() {
                None => break,
                Some(Token::Close) => {
                    if in_group {
                        break;
                    }
                    return Err(QueryParseError("unbalanced ')'".into()));
                }
                Some(Token::Or) => {
                    self.next();
                    let left = units
                        .pop()
                        .ok_or_else(|| QueryParseError("OR without a left operand".into()))?;
                    let right = self.parse_unit()?;
                    // OR is associative: flatten both operands.
                    let mut children = match left {
                        QueryNode::OrGroup { children } => children,
                        other => vec![other],
                    };
                    match right {
                        QueryNode::OrGroup { children: more } => children.extend(more),
                        other => children.push(other),
                    }
                    units.push(QueryNode::OrGroup { children });
                }
                _ => units.push(self.parse_unit()?),
            }
        }
        match units.len() {
            0 => Err(QueryParseError("empty query".into())),
            1 => Ok(units.pop().expect("one unit")),
            _ => {
                // Redundantly parenthesized and-groups left at this level are
                // equivalent to their children; flatten them so the tree
                // stays renderable.
                let mut flat = Vec::with_capacity(units.len());
                for unit in units {
                    match unit {
                        QueryNode::AndGroup { children } => flat.extend(children),
                        other => flat.push(other),
                    }
                }
                Ok(QueryNode::and_group(flat))
            }
        }
    }
}

/// Parses an engine-syntax query string into a node tree. Inverse of
/// [`render_query`] on its own output.
pub fn parse_query(input: &str) -> Result<QueryNode, QueryParseError> {
    let tokens = tokenize(input)?;
    let mut parser = Parser { tokens, pos: 0 };
    let node = parser.parse_sequence(false)?;
    if parser.pos != parser.tokens.len() {
        return Err(QueryParseError("trailing tokens after query".into()));
    }
    node.validate()
        .map_err(|e| QueryParseError(format!("parsed tree invalid: {e}")))?;
    Ok(node)
}

/// Allow/deny domain suffix lists constraining retrieval.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainPolicy {
    pub allow: Vec<String>,
    pub deny: Vec<String>,
}

impl DomainPolicy {
    /// Normalizes and deduplicates both lists; a domain present on both sides
    /// stays denied.
    pub fn new<A, D>(allow: A, deny: D) -> Self
    where
        A: IntoIterator,
        A::Item: AsRef<str>,
        D: IntoIterator,
        D::Item: AsRef<str>,
    {
        let deny: Vec<String> = dedup_preserve(
            deny.into_iter()
                .filter_map(|d| normalize_domain(d.as_ref())),
        );
        let allow: Vec<String> = dedup_preserve(
            allow
                .into_iter()
                .filter_map(|d| normalize_domain(d.as_ref()))
                .filter(|d| !deny.contains(d)),
        );
        Self { allow, deny }
    }

    pub fn is_empty(&self) -> bool {
        self.allow.is_empty() && self.deny.is_empty()
    }

    /// Merges user-preferred domains into the allow list; user entries win
    /// over model-denied ones.
    pub fn merge_user_domains<I>(&mut self, domains: I)
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        for domain in domains {
            if let Some(d) = normalize_domain(domain.as_ref()) {
                self.deny.retain(|x| *x != d);
                if !self.allow.contains(&d) {
                    self.allow.push(d);
                }
            }
        }
    }
}

fn dedup_preserve(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items.filter(|d| seen.insert(d.clone())).collect()
}

/// Lowercases and strips scheme, leading `-`, `*.`, leading dots, paths, and
/// ports; returns `None` when nothing usable remains.
pub fn normalize_domain(raw: &str) -> Option<String> {
    let mut s = raw.trim().to_ascii_lowercase();
    if let Some(stripped) = s.strip_prefix('-') {
        s = stripped.to_string();
    }
    if let Some((_, rest)) = s.split_once("://") {
        s = rest.to_string();
    }
    if let Some((host, _)) = s.split_once('/') {
        s = host.to_string();
    }
    if let Some((host, _)) = s.split_once(':') {
        s = host.to_string();
    }
    let s = s.trim_start_matches("*.").trim_matches('.').to_string();
    if s.is_empty() || !s.contains(|c: char| c.is_ascii_alphanumeric()) {
        None
    } else {
        Some(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Precision,
    Recall,
}

/// The per-round search plan: two complementary queries, the domain policy,
/// the language set (source first), and the evidence cutoff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub id: String,
    pub precision_query: QueryNode,
    pub recall_query: QueryNode,
    pub policy: DomainPolicy,
    pub languages: Vec<String>,
    pub cutoff: Option<NaiveDate>,
}

impl QueryPlan {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.languages.is_empty() {
            return Err(RenderError("plan needs at least the source language".into()));
        }
        if self.languages.len() > 3 {
            return Err(RenderError(
                "plan allows at most source + two expansion languages".into(),
            ));
        }
        Ok(())
    }
}

/// One executable engine query string bound to a search language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutableQuery {
    pub text: String,
    pub language: String,
    pub kind: QueryKind,
}

/// Allow-lists longer than this are chunked into separate searches to stay
/// under engine query-length limits.
const ALLOW_CHUNK: usize = 4;

/// Renders every (language x query) combination, appending `-site:` clauses
/// for denied domains, a `(site:a OR site:b)` group per allow-chunk, and the
/// cutoff as a `before:` clause. Source language first, precision before
/// recall.
pub fn compose_executable(plan: &QueryPlan) -> Result<Vec<ExecutableQuery>, RenderError> {
    plan.validate()?;
    let rendered = [
        (QueryKind::Precision, render_query(&plan.precision_query)?),
        (QueryKind::Recall, render_query(&plan.recall_query)?),
    ];
    let allow_chunks: Vec<Option<&[String]>> = if plan.policy.allow.is_empty() {
        vec![None]
    } else {
        plan.policy.allow.chunks(ALLOW_CHUNK).map(Some).collect()
    };
    let mut out = Vec::new();
    for language in &plan.languages {
        for (kind, base) in &rendered {
            for chunk in &allow_chunks {
                let mut text = base.clone();
                for deny in &plan.policy.deny {
                    text.push_str(" -site:");
                    text.push_str(deny);
                }
                if let Some(chunk) = chunk {
                    if chunk.len() == 1 {
                        text.push_str(&format!(" site:{}", chunk[0]));
                    } else {
                        let sites: Vec<String> =
                            chunk.iter().map(|d| format!("site:{d}")).collect();
                        text.push_str(&format!(" ({})", sites.join(" OR ")));
                    }
                }
                if let Some(cutoff) = plan.cutoff {
                    text.push_str(&format!(" before:{}", cutoff.format("%Y-%m-%d")));
                }
                out.push(ExecutableQuery {
                    text,
                    language: language.clone(),
                    kind: *kind,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::date;

    fn roundtrip(node: &QueryNode) -> QueryNode {
        let rendered = render_query(node).expect("render");
        parse_query(&rendered).unwrap_or_else(|e| panic!("reparse of {rendered:?}: {e}"))
    }

    #[test]
    fn operator_table_rows_render_byte_exact() {
        let cases: Vec<(QueryNode, &str)> = vec![
            (QueryNode::phrase("nikola tesla"), r#""nikola tesla""#),
            (
                QueryNode::or_group(vec![QueryNode::term("tesla"), QueryNode::term("edison")]),
                "tesla OR edison",
            ),
            (
                QueryNode::and_group(vec![
                    QueryNode::term("tesla"),
                    QueryNode::not(QueryNode::term("motors")),
                ]),
                "tesla -motors",
            ),
            (
                QueryNode::and_group(vec![
                    QueryNode::term("tesla"),
                    QueryNode::wildcard_phrase("rock * roll"),
                ]),
                r#"tesla "rock * roll""#,
            ),
            (
                QueryNode::and_group(vec![
                    QueryNode::or_group(vec![QueryNode::term("tesla"), QueryNode::term("edison")]),
                    QueryNode::term("alternating"),
                    QueryNode::term("current"),
                ]),
                "(tesla OR edison) alternating current",
            ),
            (
                QueryNode::and_group(vec![
                    QueryNode::term("apple"),
                    QueryNode::before(date(2007, 6, 29)),
                ]),
                "apple before:2007-06-29",
            ),
            (
                QueryNode::and_group(vec![
                    QueryNode::term("apple"),
                    QueryNode::after(date(2007, 6, 29)),
                ]),
                "apple after:2007-06-29",
            ),
            (
                QueryNode::and_group(vec![
                    QueryNode::loc("san francisco"),
                    QueryNode::term("apple"),
                ]),
                r#"loc:"san francisco" apple"#,
            ),
        ];
        for (node, expected) in cases {
            let rendered = render_query(&node).expect("render");
            assert_eq!(rendered, expected);
            assert_eq!(roundtrip(&node), node, "round trip of {expected:?}");
        }
    }

    #[test]
    fn or_of_groups_round_trips() {
        let node = QueryNode::or_group(vec![
            QueryNode::and_group(vec![QueryNode::term("a"), QueryNode::term("b")]),
            QueryNode::term("c"),
        ]);
        assert_eq!(render_query(&node).unwrap(), "(a b) OR c");
        assert_eq!(roundtrip(&node), node);
    }

    #[test]
    fn negated_group_round_trips() {
        let node = QueryNode::and_group(vec![
            QueryNode::term("x"),
            QueryNode::not(QueryNode::or_group(vec![
                QueryNode::term("a"),
                QueryNode::term("b"),
            ])),
        ]);
        assert_eq!(render_query(&node).unwrap(), "x -(a OR b)");
        assert_eq!(roundtrip(&node), node);
    }

    #[test]
    fn invalid_nodes_are_rejected() {
        assert!(render_query(&QueryNode::term("two words")).is_err());
        assert!(render_query(&QueryNode::phrase(r#"has"quote"#)).is_err());
        assert!(render_query(&QueryNode::wildcard_phrase("no star")).is_err());
        assert!(render_query(&QueryNode::or_group(vec![QueryNode::term("one")])).is_err());
        assert!(render_query(&QueryNode::not(QueryNode::not(QueryNode::term("x")))).is_err());
        assert!(render_query(&QueryNode::and_group(vec![
            QueryNode::term("a"),
            QueryNode::and_group(vec![QueryNode::term("b"), QueryNode::term("c")]),
        ]))
        .is_err());
    }

    #[test]
    fn parser_handles_plain_questions() {
        let node = parse_query("How many operating nuclear reactors are in the United States?")
            .expect("parse");
        match &node {
            QueryNode::AndGroup { children } => assert_eq!(children.len(), 10),
            other => panic!("expected and_group, got {other:?}"),
        }
        assert_eq!(
            render_query(&node).unwrap(),
            "How many operating nuclear reactors are in the United States?"
        );
    }

    #[test]
    fn parser_rejects_malformed_input() {
        assert!(parse_query("").is_err());
        assert!(parse_query("(unclosed").is_err());
        assert!(parse_query("\"unclosed").is_err());
        assert!(parse_query("OR nothing").is_err());
        assert!(parse_query("a OR").is_err());
    }

    #[test]
    fn invalid_date_operator_degrades_to_term() {
        let node = parse_query("apple before:2020").unwrap();
        assert_eq!(
            node,
            QueryNode::and_group(vec![
                QueryNode::term("apple"),
                QueryNode::term("before:2020"),
            ])
        );
        // And it renders back to the same string.
        assert_eq!(render_query(&node).unwrap(), "apple before:2020");
    }

    #[test]
    fn domain_normalization() {
        assert_eq!(normalize_domain(".gov.fr"), Some("gov.fr".into()));
        assert_eq!(normalize_domain("-Reddit.com"), Some("reddit.com".into()));
        assert_eq!(normalize_domain("*.wikipedia.org"), Some("wikipedia.org".into()));
        assert_eq!(
            normalize_domain("https://www.eia.gov/page"),
            Some("www.eia.gov".into())
        );
        assert_eq!(normalize_domain("  "), None);
        assert_eq!(normalize_domain("-"), None);
    }

    #[test]
    fn policy_keeps_conflicts_denied_but_user_wins() {
        let mut policy = DomainPolicy::new(["a.com", "b.com"], ["b.com", "c.com"]);
        assert_eq!(policy.allow, vec!["a.com"]);
        assert_eq!(policy.deny, vec!["b.com", "c.com"]);
        policy.merge_user_domains(["c.com"]);
        assert_eq!(policy.deny, vec!["b.com"]);
        assert!(policy.allow.contains(&"c.com".to_string()));
    }

    fn simple_plan() -> QueryPlan {
        QueryPlan {
            id: "p1".into(),
            precision_query: QueryNode::and_group(vec![
                QueryNode::term("covid"),
                QueryNode::term("deaths"),
            ]),
            recall_query: QueryNode::term("covid"),
            policy: DomainPolicy::default(),
            languages: vec!["en".into()],
            cutoff: None,
        }
    }

    #[test]
    fn compose_appends_deny_and_cutoff() {
        let mut plan = simple_plan();
        plan.policy = DomainPolicy::new(Vec::<String>::new(), ["reddit.com"]);
        plan.cutoff = Some(date(2020, 10, 30));
        let out = compose_executable(&plan).unwrap();
        assert_eq!(
            out[0].text,
            "covid deaths -site:reddit.com before:2020-10-30"
        );
    }

    #[test]
    fn compose_empty_policy_leaves_query_unchanged() {
        let out = compose_executable(&simple_plan()).unwrap();
        assert_eq!(out[0].text, "covid deaths");
        assert_eq!(out[1].text, "covid");
        assert!(!out.iter().any(|q| q.text.contains("site:")));
    }

    #[test]
    fn compose_cardinality_and_order() {
        let mut plan = simple_plan();
        plan.languages = vec!["en".into(), "es".into(), "pt".into()];
        let out = compose_executable(&plan).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(out[0].language, "en");
        assert_eq!(out[0].kind, QueryKind::Precision);
        assert_eq!(out[1].language, "en");
        assert_eq!(out[1].kind, QueryKind::Recall);
        assert_eq!(out[2].language, "es");
        assert_eq!(out[4].language, "pt");
    }

    #[test]
    fn compose_chunks_long_allow_lists() {
        let mut plan = simple_plan();
        plan.policy = DomainPolicy::new(
            ["a.com", "b.com", "c.com", "d.com", "e.com"],
            Vec::<String>::new(),
        );
        let out = compose_executable(&plan).unwrap();
        // 2 queries x 2 allow chunks.
        assert_eq!(out.len(), 4);
        assert!(out[0]
            .text
            .ends_with("(site:a.com OR site:b.com OR site:c.com OR site:d.com)"));
        assert!(out[1].text.ends_with(" site:e.com"));
    }
}
