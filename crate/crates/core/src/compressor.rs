//! Graph-guided compression: keep the columns nothing depends on, fit a
//! deterministic reconstructor for every other column, and rebuild full
//! tables from compressed ones in topological order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Condition, Env, Expr};
use crate::graph::{json_error, Edge, EdgeKey, EdgeKind, GraphError, Rule, TemporalRelation, ValidatedGraph};
use crate::table::{Column, ColumnKind, ColumnMeta, Table, TableError, Value};
use crate::validator::{fit_modal_map, modal};

/// Relative tolerance for numeric equality in round-trip checks.
pub const ROUNDTRIP_RTOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("graph column `{0}` is not in the table")]
    UnknownColumn(String),
    #[error("compressed table does not match the plan: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupEntry {
    pub key: Vec<Value>,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reconstructor {
    /// Modal target per tuple of source values. Unseen tuples fall back to
    /// the single-source maps in order, then to the overall modal value.
    Lookup {
        target: String,
        sources: Vec<String>,
        entries: Vec<LookupEntry>,
        per_source: Vec<Vec<LookupEntry>>,
        fallback: Value,
    },
    FormulaEval {
        target: String,
        expr: Expr,
    },
    /// `target = max(bases) + offset`, with the offset clamped to ≥ 1 s for
    /// strict orderings and ≥ 0 otherwise.
    TimeOffset {
        target: String,
        bases: Vec<String>,
        offset_column: String,
        relation: TemporalRelation,
    },
    /// First rule whose condition holds wins; otherwise `default`.
    ConditionalAssign {
        target: String,
        rules: Vec<(Condition, String)>,
        default: Value,
    },
}

impl Reconstructor {
    pub fn target(&self) -> &str {
        match self {
            Reconstructor::Lookup { target, .. }
            | Reconstructor::FormulaEval { target, .. }
            | Reconstructor::TimeOffset { target, .. }
            | Reconstructor::ConditionalAssign { target, .. } => target,
        }
    }

    /// Columns read when reconstructing.
    pub fn inputs(&self) -> BTreeSet<String> {
        match self {
            Reconstructor::Lookup { sources, .. } => sources.iter().cloned().collect(),
            Reconstructor::FormulaEval { expr, .. } => expr.vars(),
            Reconstructor::TimeOffset { bases, offset_column, .. } => {
                let mut s: BTreeSet<String> = bases.iter().cloned().collect();
                s.insert(offset_column.clone());
                s
            }
            Reconstructor::ConditionalAssign { rules, .. } => rules.iter().flat_map(|(c, _)| c.vars()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedOffset {
    pub column: String,
    pub bases: Vec<String>,
    pub target: String,
    pub relation: TemporalRelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    /// Schema of the full table, in column order.
    pub metas: Vec<ColumnMeta>,
    pub keep: Vec<String>,
    pub compress: Vec<String>,
    pub derived_offsets: Vec<DerivedOffset>,
    /// In topological order.
    pub reconstructors: Vec<Reconstructor>,
    /// Graph edges guaranteed by construction after decompression.
    pub enforced: Vec<EdgeKey>,
}

/// A compressed table together with the names of its derived offset columns.
#[derive(Debug, Clone)]
pub struct CompressedTable {
    pub table: Table,
    pub offset_columns: Vec<String>,
}

fn best_edge<'a>(edges: &[&'a Edge]) -> Option<&'a Edge> {
    edges.iter().copied().max_by(|a, b| {
        a.strength()
            .total_cmp(&b.strength())
            .then_with(|| a.confidence.total_cmp(&b.confidence))
            .then_with(|| b.rule.canonical().cmp(&a.rule.canonical()))
    })
}

fn offset_name(target: &str, taken: &BTreeSet<String>) -> String {
    let mut name = format!("{target}__offset");
    while taken.contains(&name) {
        name.push('_');
    }
    name
}

/// Partitions columns into kept and compressed ones and fits a
/// reconstructor for each compressed column. For a column with several kinds
/// of incoming edge the priority is formula, time offset, lookup, then
/// conditional assignment; the other edges are not enforced.
pub fn build_plan(graph: &ValidatedGraph, table: &Table) -> Result<CompressionPlan, CompressError> {
    for n in &graph.nodes {
        if table.index_of(n).is_none() {
            return Err(CompressError::UnknownColumn(n.clone()));
        }
    }
    let keep_set = graph.independent_set();
    // Columns absent from the graph are kept as well.
    let keep: Vec<String> = table
        .names()
        .into_iter()
        .filter(|n| keep_set.contains(*n) || !graph.has_node(n))
        .map(str::to_string)
        .collect();
    let compress: Vec<String> = table
        .names()
        .into_iter()
        .filter(|n| !keep.iter().any(|k| k == n))
        .map(str::to_string)
        .collect();

    let mut taken: BTreeSet<String> = table.names().into_iter().map(str::to_string).collect();
    let mut derived_offsets = Vec::new();
    let mut reconstructors = Vec::new();
    let mut enforced = Vec::new();
    let kind_of = |n: &str| table.column(n).map(Column::kind).ok();

    for target in graph.topological_order()? {
        if keep.contains(&target) {
            continue;
        }
        let incoming: Vec<&Edge> = graph.incoming(&target).collect();
        let parents: BTreeSet<&str> = incoming.iter().map(|e| e.source.as_str()).collect();
        let of_kind = |k: EdgeKind| -> Vec<&Edge> { incoming.iter().copied().filter(|e| e.kind == k).collect() };

        // Formula: every variable must be a parent so it is rebuilt first.
        let formulas: Vec<&Edge> = of_kind(EdgeKind::Mathematical)
            .into_iter()
            .filter(|e| match &e.rule {
                Rule::Formula { expr } => expr.vars().iter().all(|v| parents.contains(v.as_str())),
                _ => false,
            })
            .collect();
        if kind_of(&target) == Some(ColumnKind::Numeric) {
            if let Some(best) = best_edge(&formulas) {
                let Rule::Formula { expr } = &best.rule else { unreachable!() };
                enforced.extend(
                    formulas
                        .iter()
                        .filter(|e| e.rule == best.rule)
                        .map(|e| e.key()),
                );
                reconstructors.push(Reconstructor::FormulaEval {
                    target: target.clone(),
                    expr: expr.clone(),
                });
                continue;
            }
        }

        let temporal: Vec<&Edge> = of_kind(EdgeKind::Temporal)
            .into_iter()
            .filter(|e| kind_of(&e.source) == Some(ColumnKind::Timestamp))
            .collect();
        if kind_of(&target) == Some(ColumnKind::Timestamp) && !temporal.is_empty() {
            let bases: Vec<String> = temporal
                .iter()
                .map(|e| e.source.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let strict = temporal.iter().any(|e| {
                matches!(
                    e.rule,
                    Rule::TemporalOrder {
                        relation: TemporalRelation::Before,
                        ..
                    }
                )
            });
            let relation = if strict {
                TemporalRelation::Before
            } else {
                TemporalRelation::BeforeOrEqual
            };
            let column = offset_name(&target, &taken);
            taken.insert(column.clone());
            derived_offsets.push(DerivedOffset {
                column: column.clone(),
                bases: bases.clone(),
                target: target.clone(),
                relation,
            });
            enforced.extend(temporal.iter().map(|e| e.key()));
            reconstructors.push(Reconstructor::TimeOffset {
                target: target.clone(),
                bases,
                offset_column: column,
                relation,
            });
            continue;
        }

        let hier = of_kind(EdgeKind::Hierarchical);
        if !hier.is_empty() {
            let sources: Vec<&str> = hier.iter().map(|e| e.source.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
            enforced.extend(hier.iter().map(|e| e.key()));
            reconstructors.push(fit_lookup(table, &sources, &target)?);
            continue;
        }

        let conditional: Vec<&Edge> = of_kind(EdgeKind::Semantic)
            .into_iter()
            .filter(|e| match &e.rule {
                Rule::ConditionImplies { condition, .. } => {
                    condition.vars().iter().all(|v| parents.contains(v.as_str()))
                }
                _ => false,
            })
            .collect();
        if !conditional.is_empty() {
            let mut rules: Vec<(Condition, String)> = Vec::new();
            for e in &conditional {
                if let Rule::ConditionImplies { condition, value } = &e.rule {
                    if !rules.iter().any(|(c, v)| c == condition && v == value) {
                        rules.push((condition.clone(), value.clone()));
                    }
                }
            }
            let default = conditional_default(table, &rules, &target)?;
            enforced.extend(conditional.iter().map(|e| e.key()));
            reconstructors.push(Reconstructor::ConditionalAssign {
                target: target.clone(),
                rules,
                default,
            });
            continue;
        }

        let sources: Vec<&str> = parents.into_iter().collect();
        reconstructors.push(fit_lookup(table, &sources, &target)?);
    }

    Ok(CompressionPlan {
        metas: table.metas(),
        keep,
        compress,
        derived_offsets,
        reconstructors,
        enforced,
    })
}

fn entries(map: HashMap<Vec<Value>, Value>) -> Vec<LookupEntry> {
    let mut out: Vec<LookupEntry> = map.into_iter().map(|(key, value)| LookupEntry { key, value }).collect();
    out.sort_by(|a, b| a.key.cmp(&b.key));
    out
}

fn overall_modal(column: &Column, rows: impl Iterator<Item = usize>) -> Value {
    let mut counts: HashMap<Value, usize> = HashMap::new();
    for r in rows {
        let v = column.value(r);
        if !v.is_missing() {
            *counts.entry(v).or_default() += 1;
        }
    }
    if counts.is_empty() {
        Value::Missing
    } else {
        modal(counts).0
    }
}

fn fit_lookup(table: &Table, sources: &[&str], target: &str) -> Result<Reconstructor, CompressError> {
    let t = table.column(target)?;
    let cols = sources.iter().map(|s| table.column(s)).collect::<Result<Vec<_>, _>>()?;
    let per_source = if cols.len() > 1 {
        cols.iter().map(|c| entries(fit_modal_map(&[c], t).map)).collect()
    } else {
        Vec::new()
    };
    Ok(Reconstructor::Lookup {
        target: target.to_string(),
        sources: sources.iter().map(|s| s.to_string()).collect(),
        entries: entries(fit_modal_map(&cols, t).map),
        per_source,
        fallback: overall_modal(t, 0..t.len()),
    })
}

/// Modal target among rows where no rule fires.
fn conditional_default(table: &Table, rules: &[(Condition, String)], target: &str) -> Result<Value, CompressError> {
    let t = table.column(target)?;
    let columns = crate::validator::column_index(table);
    let quiet = (0..table.n_rows()).filter(|&row| {
        let env = crate::validator::RowEnv { columns: &columns, row };
        !rules.iter().any(|(c, _)| matches!(c.eval(&env), Ok(true)))
    });
    let v = overall_modal(t, quiet);
    Ok(if v.is_missing() {
        overall_modal(t, 0..t.len())
    } else {
        v
    })
}

impl CompressionPlan {
    /// Schema of the compressed table: kept columns in table order, then
    /// offset columns.
    pub fn compressed_metas(&self) -> Vec<ColumnMeta> {
        let mut out: Vec<ColumnMeta> = self
            .metas
            .iter()
            .filter(|m| self.keep.contains(&m.name))
            .cloned()
            .collect();
        for d in &self.derived_offsets {
            out.push(ColumnMeta::new(
                d.column.clone(),
                format!("seconds from {} to {}", d.bases.join("/"), d.target),
                ColumnKind::Numeric,
            ));
        }
        out
    }

    pub fn offset_columns(&self) -> Vec<String> {
        self.derived_offsets.iter().map(|d| d.column.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CompressError> {
        serde_json::from_str(text).map_err(|e| json_error(text, &e).into())
    }

    pub fn save(&self, path: &Path) -> Result<(), CompressError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| CompressError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CompressError> {
        let text = std::fs::read_to_string(path).map_err(|source| CompressError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Projects `table` onto the kept columns and appends offset columns.
pub fn compress(table: &Table, plan: &CompressionPlan) -> Result<CompressedTable, CompressError> {
    let keep: Vec<&str> = plan.keep.iter().map(String::as_str).collect();
    let metas = plan.compressed_metas();
    let mut out = table.select(&keep)?;
    let mut extra = Vec::new();
    for d in &plan.derived_offsets {
        let target = timestamps(table, &d.target)?;
        let bases = d
            .bases
            .iter()
            .map(|b| timestamps(table, b))
            .collect::<Result<Vec<_>, _>>()?;
        let values = (0..table.n_rows())
            .map(|r| {
                let base = bases.iter().map(|b| b[r]).collect::<Option<Vec<i64>>>()?.into_iter().max()?;
                Some((target[r]? - base) as f64)
            })
            .collect();
        let meta = metas.iter().find(|m| m.name == d.column).expect("offset meta");
        extra.push(Column::numeric(meta.clone(), values));
    }
    if !extra.is_empty() {
        out = out.with_columns(extra)?;
    }
    Ok(CompressedTable {
        table: out,
        offset_columns: plan.offset_columns(),
    })
}

fn timestamps<'a>(table: &'a Table, name: &str) -> Result<&'a [Option<i64>], CompressError> {
    table
        .column(name)?
        .timestamps()
        .ok_or_else(|| CompressError::SchemaMismatch(format!("`{name}` is not a timestamp column")))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecompressStats {
    /// Rows per lookup target whose source tuple was not in the fitted map.
    pub lookup_misses: BTreeMap<String, usize>,
}

struct Working<'a> {
    columns: &'a HashMap<String, Vec<Value>>,
    row: usize,
}

impl Env for Working<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.columns.get(name).map(|c| c[self.row].clone())
    }
}

/// Rebuilds the full table by applying reconstructors in topological order.
pub fn decompress(compressed: &Table, plan: &CompressionPlan) -> Result<(Table, DecompressStats), CompressError> {
    let expected = plan.compressed_metas();
    if compressed.n_cols() != expected.len() {
        return Err(CompressError::SchemaMismatch(format!(
            "expected {} columns, got {}",
            expected.len(),
            compressed.n_cols()
        )));
    }
    let mut cols: HashMap<String, Vec<Value>> = HashMap::new();
    for m in &expected {
        let c = compressed
            .column(&m.name)
            .map_err(|_| CompressError::SchemaMismatch(format!("missing column `{}`", m.name)))?;
        if c.kind() != m.kind {
            return Err(CompressError::SchemaMismatch(format!("column `{}` has kind {:?}", m.name, c.kind())));
        }
        cols.insert(m.name.clone(), c.values());
    }
    let n = compressed.n_rows();
    let mut stats = DecompressStats::default();
    let kind_of: HashMap<&str, ColumnKind> = plan.metas.iter().map(|m| (m.name.as_str(), m.kind)).collect();

    for rec in &plan.reconstructors {
        let values: Vec<Value> = match rec {
            Reconstructor::FormulaEval { expr, .. } => (0..n)
                .map(|row| {
                    expr.eval(&Working { columns: &cols, row })
                        .map_or(Value::Missing, Value::Number)
                })
                .collect(),
            Reconstructor::TimeOffset {
                bases,
                offset_column,
                relation,
                ..
            } => {
                let floor = match relation {
                    TemporalRelation::Before => 1.0,
                    TemporalRelation::BeforeOrEqual => 0.0,
                };
                (0..n)
                    .map(|row| {
                        let base = bases
                            .iter()
                            .map(|b| match cols[b][row] {
                                Value::Timestamp(t) => Some(t),
                                _ => None,
                            })
                            .collect::<Option<Vec<i64>>>()
                            .and_then(|v| v.into_iter().max());
                        match (base, cols[offset_column][row].as_f64()) {
                            (Some(b), Some(off)) => Value::Timestamp(b + off.max(floor).round() as i64),
                            _ => Value::Missing,
                        }
                    })
                    .collect()
            }
            Reconstructor::Lookup {
                target,
                sources,
                entries,
                per_source,
                fallback,
            } => {
                let map: HashMap<&[Value], &Value> = entries.iter().map(|e| (e.key.as_slice(), &e.value)).collect();
                let singles: Vec<HashMap<&Value, &Value>> = per_source
                    .iter()
                    .map(|es| es.iter().map(|e| (&e.key[0], &e.value)).collect())
                    .collect();
                let mut misses = 0;
                let out = (0..n)
                    .map(|row| {
                        let key: Vec<Value> = sources.iter().map(|s| cols[s][row].clone()).collect();
                        if let Some(v) = map.get(key.as_slice()) {
                            return (*v).clone();
                        }
                        misses += 1;
                        singles
                            .iter()
                            .zip(&key)
                            .find_map(|(m, k)| m.get(k).map(|v| (*v).clone()))
                            .unwrap_or_else(|| fallback.clone())
                    })
                    .collect();
                if misses > 0 {
                    stats.lookup_misses.insert(target.clone(), misses);
                }
                out
            }
            Reconstructor::ConditionalAssign {
                target, rules, default, ..
            } => {
                let kind = kind_of.get(target.as_str()).copied().unwrap_or(ColumnKind::Categorical);
                (0..n)
                    .map(|row| {
                        let env = Working { columns: &cols, row };
                        rules
                            .iter()
                            .find(|(c, _)| matches!(c.eval(&env), Ok(true)))
                            .and_then(|(_, v)| Value::from_token(v, kind))
                            .unwrap_or_else(|| default.clone())
                    })
                    .collect()
            }
        };
        cols.insert(rec.target().to_string(), values);
    }

    let mut columns = Vec::with_capacity(plan.metas.len());
    for m in &plan.metas {
        let values = cols
            .get(&m.name)
            .ok_or_else(|| CompressError::SchemaMismatch(format!("no reconstructor for `{}`", m.name)))?;
        columns.push(Column::from_values(m.clone(), values)?);
    }
    Ok((Table::new(columns)?, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    /// Share of rows reproduced exactly, per column.
    pub per_column: BTreeMap<String, f64>,
    pub pass: bool,
}

pub fn values_match(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x == y || (x - y).abs() <= ROUNDTRIP_RTOL * x.abs().max(y.abs()),
        _ => a == b,
    }
}

/// Compares `table` with `decompress(compress(table))` column by column.
pub fn verify_roundtrip(table: &Table, plan: &CompressionPlan) -> Result<RoundtripReport, CompressError> {
    let compressed = compress(table, plan)?;
    let (back, _) = decompress(&compressed.table, plan)?;
    let n = table.n_rows();
    let mut per_column = BTreeMap::new();
    for c in table.columns() {
        let d = back.column(c.name())?;
        let ok = (0..n).filter(|&r| values_match(&c.value(r), &d.value(r))).count();
        per_column.insert(c.name().to_string(), if n == 0 { 1.0 } else { ok as f64 / n as f64 });
    }
    let pass = per_column.values().all(|&r| r == 1.0);
    Ok(RoundtripReport { per_column, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::table::parse_timestamp;

    fn cat(name: &str, values: &[&str]) -> Column {
        let v: Vec<Option<&str>> = values.iter().map(|s| Some(*s)).collect();
        Column::categorical(ColumnMeta::new(name, "", ColumnKind::Categorical), &v)
    }

    fn chain_table() -> Table {
        Table::new(vec![
            cat("city", &["LA", "SF", "Austin", "Dallas", "LA", "Toronto"]),
            cat("state", &["CA", "CA", "TX", "TX", "CA", "ON"]),
            cat("country", &["US", "US", "US", "US", "US", "CA"]),
        ])
        .unwrap()
    }

    fn chain_graph() -> ValidatedGraph {
        let g = Graph::new(["city", "state", "country"])
            .unwrap()
            .with_edge(Edge::hier("city", "state", 1.0))
            .unwrap()
            .with_edge(Edge::hier("state", "country", 1.0))
            .unwrap();
        ValidatedGraph::new(g).unwrap()
    }

    #[test]
    fn hierarchy_chain_plan() {
        let t = chain_table();
        let plan = build_plan(&chain_graph(), &t).unwrap();
        assert_eq!(plan.keep, vec!["city"]);
        assert_eq!(plan.compress, vec!["state", "country"]);
        let targets: Vec<&str> = plan.reconstructors.iter().map(Reconstructor::target).collect();
        assert_eq!(targets, vec!["state", "country"]);
        assert!(matches!(&plan.reconstructors[0], Reconstructor::Lookup { sources, .. } if sources == &["city"]));
        assert!(verify_roundtrip(&t, &plan).unwrap().pass);
    }

    #[test]
    fn unseen_source_uses_fallback() {
        let t = chain_table();
        let plan = build_plan(&chain_graph(), &t).unwrap();
        let synth = Table::new(vec![cat("city", &["LA", "Atlantis"])]).unwrap();
        let (full, stats) = decompress(&synth, &plan).unwrap();
        assert_eq!(stats.lookup_misses["state"], 1);
        assert_eq!(full.value(1, 1), Value::Category("CA".into()));
        assert_eq!(full.value(1, 2), Value::Category("US".into()));
        assert_eq!(full.names(), vec!["city", "state", "country"]);
    }

    #[test]
    fn edgeless_plan_is_identity() {
        let t = chain_table();
        let g = ValidatedGraph::new(Graph::new(["city", "state", "country"]).unwrap()).unwrap();
        let plan = build_plan(&g, &t).unwrap();
        assert_eq!(plan.keep.len(), 3);
        assert!(plan.reconstructors.is_empty());
        let c = compress(&t, &plan).unwrap();
        assert_eq!(c.table.to_csv_string(), t.to_csv_string());
        assert!(verify_roundtrip(&t, &plan).unwrap().pass);
    }

    #[test]
    fn time_offset_round_trip() {
        let day = |s: &str| parse_timestamp(s).unwrap();
        let meta = |n: &str| ColumnMeta::new(n, "", ColumnKind::Timestamp);
        let t = Table::new(vec![
            Column::timestamp(meta("order_date"), vec![Some(day("2021-01-01"))]),
            Column::timestamp(meta("ship_date"), vec![Some(day("2021-01-04"))]),
        ])
        .unwrap();
        let rule = Rule::TemporalOrder {
            relation: TemporalRelation::Before,
            offset_target: None,
        };
        let g = Graph::new(["order_date", "ship_date"])
            .unwrap()
            .with_edge(Edge::new("order_date", "ship_date", rule, 1.0))
            .unwrap();
        let plan = build_plan(&ValidatedGraph::new(g).unwrap(), &t).unwrap();
        assert_eq!(plan.offset_columns(), vec!["ship_date__offset"]);
        let c = compress(&t, &plan).unwrap();
        assert_eq!(c.table.names(), vec!["order_date", "ship_date__offset"]);
        assert_eq!(c.table.value(0, 1), Value::Number(259_200.0));
        let (back, _) = decompress(&c.table, &plan).unwrap();
        assert_eq!(back.value(0, 1), Value::Timestamp(day("2021-01-04")));

        // A negative sampled offset is clamped so the strict order holds.
        let synth = Table::new(vec![
            Column::timestamp(meta("order_date"), vec![Some(day("2021-01-01"))]),
            Column::numeric(ColumnMeta::new("ship_date__offset", "", ColumnKind::Numeric), vec![Some(-50.0)]),
        ])
        .unwrap();
        let (back, _) = decompress(&synth, &plan).unwrap();
        assert_eq!(back.value(0, 1), Value::Timestamp(day("2021-01-01") + 1));
    }

    #[test]
    fn partial_agreement_shows_in_roundtrip_rates() {
        let mut countries = vec!["US"; 20];
        countries[3] = "MX";
        let cities: Vec<&str> = (0..20).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        let t = Table::new(vec![cat("city", &cities), cat("country", &countries)]).unwrap();
        let g = Graph::new(["city", "country"])
            .unwrap()
            .with_edge(Edge::hier("city", "country", 1.0))
            .unwrap();
        let plan = build_plan(&ValidatedGraph::new(g).unwrap(), &t).unwrap();
        let report = verify_roundtrip(&t, &plan).unwrap();
        assert!(!report.pass);
        assert_eq!(report.per_column["country"], 0.95);
        assert_eq!(report.per_column["city"], 1.0);
    }

    #[test]
    fn plan_json_round_trip() {
        let t = chain_table();
        let plan = build_plan(&chain_graph(), &t).unwrap();
        assert_eq!(CompressionPlan::from_json(&plan.to_json()).unwrap(), plan);
        assert!(CompressionPlan::from_json("{\"metas\": [").is_err());
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let t = chain_table();
        let plan = build_plan(&chain_graph(), &t).unwrap();
        assert!(matches!(decompress(&t, &plan), Err(CompressError::SchemaMismatch(_))));
    }
}
