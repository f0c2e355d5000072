//! Data-driven edge validation: a row-level satisfaction score σ per edge,
//! pruning below a threshold, and discovery scoring against ground truth.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Env;
use crate::graph::{Edge, EdgeKey, EdgeKind, Graph, GraphError, Rule, TemporalRelation, ValidatedGraph};
use crate::table::{Column, ColumnKind, Table, Value};

pub const DEFAULT_THETA: f64 = 0.90;
/// Absolute tolerance for formula checks.
pub const ATOL: f64 = 1e-6;
/// Relative tolerance for formula checks.
pub const RTOL: f64 = 1e-4;
/// Share of distinct source values above which a hierarchy is flagged trivial.
const TRIVIAL_FD_SHARE: f64 = 0.95;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("edge {from} -> {target}: {reason}")]
    KindMismatch {
        from: String,
        target: String,
        reason: String,
    },
    #[error("threshold must lie in (0, 1], got {0}")]
    BadTheta(f64),
    #[error("predicted and ground-truth graphs have different columns")]
    NodeMismatch,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Rows satisfying a rule out of the rows where it could be checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Satisfaction {
    pub satisfied: usize,
    pub total: usize,
}

impl Satisfaction {
    /// Satisfaction rate; 0 when no row could be checked.
    pub fn rate(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.satisfied as f64 / self.total as f64
        }
    }
}

/// Name-indexed view of a table for expression evaluation.
pub(crate) struct RowEnv<'a> {
    pub columns: &'a HashMap<&'a str, &'a Column>,
    pub row: usize,
}

impl Env for RowEnv<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.columns.get(name).map(|c| c.value(self.row))
    }
}

pub(crate) fn column_index(table: &Table) -> HashMap<&str, &Column> {
    table.columns().iter().map(|c| (c.name(), c)).collect()
}

fn col<'a>(table: &'a Table, name: &str) -> Result<&'a Column, ValidateError> {
    table
        .column(name)
        .map_err(|_| ValidateError::UnknownColumn(name.to_string()))
}

fn mismatch(edge: &Edge, reason: impl Into<String>) -> ValidateError {
    ValidateError::KindMismatch {
        from: edge.source.clone(),
        target: edge.target.clone(),
        reason: reason.into(),
    }
}

/// Modal target per source key, fitted over rows where no key or target
/// cell is missing. Ties go to the smallest value.
#[derive(Debug, Clone, Default)]
pub struct ModalMap {
    pub map: HashMap<Vec<Value>, Value>,
    /// Rows agreeing with the modal target of their key.
    pub agreement: Satisfaction,
    pub distinct_keys: usize,
}

pub fn fit_modal_map(sources: &[&Column], target: &Column) -> ModalMap {
    let mut counts: HashMap<Vec<Value>, HashMap<Value, usize>> = HashMap::new();
    let mut total = 0;
    for row in 0..target.len() {
        if target.is_missing(row) || sources.iter().any(|c| c.is_missing(row)) {
            continue;
        }
        total += 1;
        let key: Vec<Value> = sources.iter().map(|c| c.value(row)).collect();
        *counts.entry(key).or_default().entry(target.value(row)).or_default() += 1;
    }
    let mut satisfied = 0;
    let distinct_keys = counts.len();
    let map = counts
        .into_iter()
        .map(|(key, targets)| {
            let (value, n) = modal(targets);
            satisfied += n;
            (key, value)
        })
        .collect();
    ModalMap {
        map,
        agreement: Satisfaction { satisfied, total },
        distinct_keys,
    }
}

/// Most frequent value, ties to the smallest.
pub(crate) fn modal(counts: HashMap<Value, usize>) -> (Value, usize) {
    counts
        .into_iter()
        .min_by(|(va, na), (vb, nb)| nb.cmp(na).then_with(|| va.cmp(vb)))
        .expect("nonempty counts")
}

pub fn validate_hierarchical(edge: &Edge, table: &Table) -> Result<Satisfaction, ValidateError> {
    let (s, t) = (col(table, &edge.source)?, col(table, &edge.target)?);
    if s.kind() == ColumnKind::Timestamp || t.kind() == ColumnKind::Timestamp {
        return Err(mismatch(edge, "hierarchies need categorical or numeric columns"));
    }
    Ok(fit_modal_map(&[s], t).agreement)
}

pub fn validate_mathematical(edge: &Edge, table: &Table) -> Result<Satisfaction, ValidateError> {
    let Rule::Formula { expr } = &edge.rule else {
        return Err(mismatch(edge, "mathematical edge without a formula"));
    };
    let target = col(table, &edge.target)?;
    for name in expr.vars().iter().map(String::as_str).chain([edge.target.as_str()]) {
        if col(table, name)?.kind() != ColumnKind::Numeric {
            return Err(mismatch(edge, format!("column `{name}` is not numeric")));
        }
    }
    let columns = column_index(table);
    let mut sat = Satisfaction::default();
    for row in 0..table.n_rows() {
        let Some(t) = target.f64_at(row) else { continue };
        let Ok(v) = expr.eval(&RowEnv { columns: &columns, row }) else {
            continue;
        };
        sat.total += 1;
        if formula_holds(t, v) {
            sat.satisfied += 1;
        }
    }
    Ok(sat)
}

pub fn formula_holds(target: f64, value: f64) -> bool {
    (target - value).abs() <= ATOL + RTOL * target.abs()
}

pub fn validate_temporal(edge: &Edge, table: &Table) -> Result<Satisfaction, ValidateError> {
    let Rule::TemporalOrder { relation, .. } = &edge.rule else {
        return Err(mismatch(edge, "temporal edge without an ordering rule"));
    };
    let (s, t) = (col(table, &edge.source)?, col(table, &edge.target)?);
    let (Some(sv), Some(tv)) = (s.timestamps(), t.timestamps()) else {
        return Err(mismatch(edge, "temporal edges need timestamp columns"));
    };
    Ok(temporal_satisfaction(*relation, sv, tv))
}

pub(crate) fn temporal_satisfaction(relation: TemporalRelation, s: &[Option<i64>], t: &[Option<i64>]) -> Satisfaction {
    let mut sat = Satisfaction::default();
    for (a, b) in s.iter().zip(t) {
        if let (Some(a), Some(b)) = (a, b) {
            sat.total += 1;
            sat.satisfied += usize::from(relation.holds(*a, *b));
        }
    }
    sat
}

pub fn validate_semantic(edge: &Edge, table: &Table) -> Result<Satisfaction, ValidateError> {
    let target = col(table, &edge.target)?;
    let mut sat = Satisfaction::default();
    match &edge.rule {
        Rule::DomainSet { allowed } => {
            for row in 0..target.len() {
                let v = target.value(row);
                if v.is_missing() {
                    continue;
                }
                sat.total += 1;
                sat.satisfied += usize::from(allowed.iter().any(|a| v.matches_token(a)));
            }
        }
        Rule::ConditionImplies { condition, value } => {
            for name in condition.vars() {
                col(table, &name)?;
            }
            let columns = column_index(table);
            for row in 0..target.len() {
                let v = target.value(row);
                if v.is_missing() {
                    continue;
                }
                if let Ok(true) = condition.eval(&RowEnv { columns: &columns, row }) {
                    sat.total += 1;
                    sat.satisfied += usize::from(v.matches_token(value));
                }
            }
        }
        _ => return Err(mismatch(edge, "semantic edge without a semantic rule")),
    }
    Ok(sat)
}

/// Dispatches to the validator for the edge's kind.
pub fn satisfaction(edge: &Edge, table: &Table) -> Result<Satisfaction, ValidateError> {
    match edge.kind {
        EdgeKind::Hierarchical => validate_hierarchical(edge, table),
        EdgeKind::Mathematical => validate_mathematical(edge, table),
        EdgeKind::Temporal => validate_temporal(edge, table),
        EdgeKind::Semantic => validate_semantic(edge, table),
    }
}

pub fn score_edge(edge: &Edge, table: &Table) -> Result<f64, ValidateError> {
    satisfaction(edge, table).map(Satisfaction::rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
    pub score: f64,
    pub satisfied: usize,
    pub checked: usize,
    pub kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub theta: f64,
    pub edges: Vec<EdgeScore>,
    pub n_candidates: usize,
    /// Edges with σ ≥ θ.
    pub n_validated: usize,
    /// `(|E_cand| − |E_val|) / |E_cand|`, counting σ-pruning only.
    pub hallucination_rate: f64,
    /// Edges dropped afterwards to break cycles.
    pub removed_for_cycles: Vec<EdgeKey>,
}

/// Scores every candidate edge, keeps those with σ ≥ θ and breaks any
/// remaining cycles.
pub fn prune(candidate: &Graph, table: &Table, theta: f64) -> Result<(ValidatedGraph, ValidationReport), ValidateError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(ValidateError::BadTheta(theta));
    }
    for n in &candidate.nodes {
        col(table, n)?;
    }
    let m = table.n_rows() as f64;
    let scored: Vec<(Edge, EdgeScore)> = candidate
        .edges
        .par_iter()
        .map(|e| {
            let (sat, mut note) = match satisfaction(e, table) {
                Ok(s) => (s, None),
                Err(err) => (Satisfaction::default(), Some(err.to_string())),
            };
            if e.kind == EdgeKind::Hierarchical && note.is_none() {
                let s = table.column(&e.source).expect("checked above");
                let distinct: BTreeSet<Value> = s.values().into_iter().filter(|v| !v.is_missing()).collect();
                if distinct.len() as f64 > TRIVIAL_FD_SHARE * m {
                    note = Some("trivial FD: source is nearly unique".into());
                }
            }
            let score = sat.rate();
            let mut edge = e.clone();
            edge.score = Some(score);
            let row = EdgeScore {
                source: e.source.clone(),
                target: e.target.clone(),
                kind: e.kind,
                score,
                satisfied: sat.satisfied,
                checked: sat.total,
                kept: score >= theta,
                note,
            };
            (edge, row)
        })
        .collect();

    let mut survivors = Graph::new(candidate.nodes.clone())?;
    let mut rows = Vec::with_capacity(scored.len());
    for (edge, row) in scored {
        if row.kept {
            survivors.edges.push(edge);
        }
        rows.push(row);
    }
    let n_candidates = candidate.len();
    let n_validated = survivors.len();
    let (dag, removed) = survivors.to_dag();
    let report = ValidationReport {
        theta,
        edges: rows,
        n_candidates,
        n_validated,
        hallucination_rate: if n_candidates == 0 {
            0.0
        } else {
            (n_candidates - n_validated) as f64 / n_candidates as f64
        },
        removed_for_cycles: removed.iter().map(Edge::key).collect(),
    };
    Ok((ValidatedGraph::new(dag)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: Vec<EdgeKey>,
    pub missed: Vec<EdgeKey>,
    pub spurious: Vec<EdgeKey>,
}

/// Precision, recall and F1 of `predicted` against `truth`, matching edges
/// on `(source, target, kind)`.
pub fn score_discovery(predicted: &Graph, truth: &Graph) -> Result<DiscoveryScore, ValidateError> {
    let nodes = |g: &Graph| g.nodes.iter().cloned().collect::<BTreeSet<_>>();
    if nodes(predicted) != nodes(truth) {
        return Err(ValidateError::NodeMismatch);
    }
    let pred: BTreeSet<EdgeKey> = predicted.edges.iter().map(Edge::key).collect();
    let gold: BTreeSet<EdgeKey> = truth.edges.iter().map(Edge::key).collect();
    let matched: Vec<EdgeKey> = pred.intersection(&gold).cloned().collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(matched.len(), pred.len());
    let recall = ratio(matched.len(), gold.len());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(DiscoveryScore {
        precision,
        recall,
        f1,
        missed: gold.difference(&pred).cloned().collect(),
        spurious: pred.difference(&gold).cloned().collect(),
        matched,
    })
}
