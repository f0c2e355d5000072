//! Line-oriented response grammar for relationship proposals.
//!
//! ```text
//! HIER <src> -> <tgt> | <conf>
//! MATH <tgt> = <expr> | <conf>
//! TEMP <src> < <tgt> | <conf>        (or <=)
//! SEM <tgt> IN {v1, v2, ...} | <conf>
//! SEM <tgt> = <value> IF <expr> <cmp> <expr> | <conf>
//! ```
//!
//! The confidence suffix is optional (default 1.0). Column names that are not
//! plain identifiers are written in backticks. Blank lines, `#` comments and
//! list bullets are ignored; anything else that fails to parse is dropped and
//! counted.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::expr::{is_plain_ident, Condition, Expr};
use crate::graph::{Edge, Rule, TemporalRelation};
use crate::table::ColumnMeta;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedProposal {
    pub edges: Vec<Edge>,
    /// Lines that were malformed or referenced unknown columns.
    pub dropped: usize,
}

pub fn parse_proposal(raw: &str, metas: &[ColumnMeta]) -> ParsedProposal {
    let columns: BTreeSet<&str> = metas.iter().map(|m| m.name.as_str()).collect();
    let mut out = ParsedProposal::default();
    for line in raw.lines() {
        let line = strip_bullet(line.trim());
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_line(line, &columns) {
            Some(edges) => out.edges.extend(edges),
            None => out.dropped += 1,
        }
    }
    out
}

fn strip_bullet(line: &str) -> &str {
    for b in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(b) {
            return rest.trim_start();
        }
    }
    line
}

fn parse_line(line: &str, columns: &BTreeSet<&str>) -> Option<Vec<Edge>> {
    let (tag, rest) = line.split_once(char::is_whitespace)?;
    let (body, confidence) = split_confidence(rest)?;
    let edge = |s: &str, t: &str, rule: Rule| {
        let mut e = Edge::new(s, t, rule, confidence);
        e.votes = 1;
        e
    };
    match tag.to_ascii_uppercase().as_str() {
        "HIER" => {
            let (s, t) = split_outside(body, "->")?;
            let (s, t) = (column(s, columns)?, column(t, columns)?);
            (s != t).then(|| vec![edge(s, t, Rule::HierMap)])
        }
        "MATH" => {
            let (t, formula) = split_outside(body, "=")?;
            let t = column(t, columns)?;
            let expr = Expr::parse(formula).ok()?;
            let vars = expr.vars();
            if vars.is_empty() || vars.contains(t) || vars.iter().any(|v| !columns.contains(v.as_str())) {
                return None;
            }
            let rule = Rule::Formula { expr };
            Some(vars.iter().map(|v| edge(v, t, rule.clone())).collect())
        }
        "TEMP" => {
            let (s, t, relation) = match split_outside(body, "<=") {
                Some((s, t)) => (s, t, TemporalRelation::BeforeOrEqual),
                None => {
                    let (s, t) = split_outside(body, "<")?;
                    (s, t, TemporalRelation::Before)
                }
            };
            let (s, t) = (column(s, columns)?, column(t, columns)?);
            let rule = Rule::TemporalOrder {
                relation,
                offset_target: None,
            };
            (s != t).then(|| vec![edge(s, t, rule)])
        }
        "SEM" => {
            if let Some((t, set)) = split_outside(body, " IN ") {
                let t = column(t, columns)?;
                let allowed = parse_set(set)?;
                return Some(vec![edge(t, t, Rule::DomainSet { allowed })]);
            }
            let (t, rest) = split_outside(body, "=")?;
            let t = column(t, columns)?;
            let (value, cond) = split_outside(rest, " IF ")?;
            let value = parse_value(value)?;
            let condition = Condition::parse(cond).ok()?;
            let vars = condition.vars();
            if vars.is_empty() || vars.contains(t) || vars.iter().any(|v| !columns.contains(v.as_str())) {
                return None;
            }
            let rule = Rule::ConditionImplies { condition, value };
            Some(vars.iter().map(|v| edge(v, t, rule.clone())).collect())
        }
        _ => None,
    }
}

/// Splits off a trailing `| <confidence>` at the last `|` outside quotes,
/// backticks and braces.
fn split_confidence(s: &str) -> Option<(&str, f64)> {
    let Some(&at) = positions_outside(s, "|").last() else {
        return Some((s.trim(), 1.0));
    };
    let conf: f64 = s[at + 1..].trim().parse().ok()?;
    (0.0..=1.0).contains(&conf).then(|| (s[..at].trim(), conf))
}

/// Byte offsets of `pat` that are not inside `"..."`, `` `...` `` or `{...}`.
fn positions_outside(s: &str, pat: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let (mut quote, mut tick, mut depth, mut escaped) = (false, false, 0usize, false);
    for (i, c) in s.char_indices() {
        if quote {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => quote = false,
                _ => {}
            }
            continue;
        }
        if tick {
            tick = c != '`';
            continue;
        }
        match c {
            '"' => quote = true,
            '`' => tick = true,
            '{' => depth += 1,
            '}' => depth = depth.saturating_sub(1),
            _ if depth == 0 && s[i..].starts_with(pat) => out.push(i),
            _ => {}
        }
    }
    out
}

fn split_outside<'a>(s: &'a str, pat: &str) -> Option<(&'a str, &'a str)> {
    let at = *positions_outside(s, pat).first()?;
    Some((&s[..at], &s[at + pat.len()..]))
}

fn column<'a>(raw: &'a str, columns: &BTreeSet<&str>) -> Option<&'a str> {
    let raw = raw.trim();
    let name = raw
        .strip_prefix('`')
        .and_then(|r| r.strip_suffix('`'))
        .unwrap_or(raw);
    (!name.is_empty() && columns.contains(name)).then_some(name)
}

fn parse_value(raw: &str) -> Option<String> {
    let raw = raw.trim();
    if let Some(inner) = raw.strip_prefix('"') {
        let inner = inner.strip_suffix('"')?;
        let mut out = String::new();
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => out.push(chars.next()?),
                '"' => return None,
                c => out.push(c),
            }
        }
        return Some(out);
    }
    (!raw.is_empty() && !raw.contains(['"', '{', '}'])).then(|| raw.to_string())
}

fn parse_set(raw: &str) -> Option<BTreeSet<String>> {
    let inner = raw.trim().strip_prefix('{')?.strip_suffix('}')?;
    let mut out = BTreeSet::new();
    let mut start = 0;
    let mut cuts = positions_outside(inner, ",");
    cuts.push(inner.len());
    for cut in cuts {
        out.insert(parse_value(&inner[start..cut])?);
        start = cut + 1;
    }
    (!out.is_empty()).then_some(out)
}

fn fmt_column(name: &str) -> String {
    if is_plain_ident(name) {
        name.to_string()
    } else {
        format!("`{name}`")
    }
}

fn fmt_value(v: &str) -> String {
    let plain = !v.is_empty()
        && v.trim() == v
        && !v.contains(['"', '{', '}', ',', '|', '`', '\\', '\n', '\r'])
        && !v.contains(" IF ")
        && !v.contains(" IN ");
    if plain {
        v.to_string()
    } else {
        let escaped: String = v
            .chars()
            .flat_map(|c| match c {
                '"' | '\\' => vec!['\\', c],
                c => vec![c],
            })
            .collect();
        format!("\"{escaped}\"")
    }
}

/// Renders edges in the response grammar. Formula and conditional edges that
/// share a target and rule are emitted once. `parse_proposal` inverts this.
pub fn render_proposal(edges: &[Edge]) -> String {
    let mut out = String::new();
    let mut grouped: BTreeSet<(String, String)> = BTreeSet::new();
    for e in edges {
        let conf = e.confidence;
        match &e.rule {
            Rule::HierMap => {
                let _ = writeln!(out, "HIER {} -> {} | {conf}", fmt_column(&e.source), fmt_column(&e.target));
            }
            Rule::Formula { expr } => {
                if grouped.insert((e.target.clone(), e.rule.canonical())) {
                    let _ = writeln!(out, "MATH {} = {expr} | {conf}", fmt_column(&e.target));
                }
            }
            Rule::TemporalOrder { relation, .. } => {
                let _ = writeln!(
                    out,
                    "TEMP {} {} {} | {conf}",
                    fmt_column(&e.source),
                    relation.symbol(),
                    fmt_column(&e.target)
                );
            }
            Rule::DomainSet { allowed } => {
                let set: Vec<String> = allowed.iter().map(|v| fmt_value(v)).collect();
                let _ = writeln!(out, "SEM {} IN {{{}}} | {conf}", fmt_column(&e.target), set.join(", "));
            }
            Rule::ConditionImplies { condition, value } => {
                if grouped.insert((e.target.clone(), e.rule.canonical())) {
                    let _ = writeln!(
                        out,
                        "SEM {} = {} IF {condition} | {conf}",
                        fmt_column(&e.target),
                        fmt_value(value)
                    );
                }
            }
        }
    }
    out
}
