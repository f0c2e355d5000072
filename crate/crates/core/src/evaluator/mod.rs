//! Fidelity, consistency, privacy and utility metrics for a synthetic table
//! measured against the real one.

mod classifier;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeKind, Graph};
use crate::table::{Column, ColumnKind, Table};
use crate::validator::{fit_modal_map, satisfaction, ValidateError};
use crate::{derive_seed, seeded_rng};

pub use classifier::{auc, FeatureSpace, Logistic};

/// Ridge penalty for the classifier-based metrics.
const RIDGE: f64 = 1.0;
const C2ST_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("correlation needs at least two columns")]
    TooFewColumns,
    #[error("{0} table is empty")]
    EmptyTable(&'static str),
    #[error("label `{0}` must be a categorical column present in both tables")]
    Label(String),
    #[error("training data for `{0}` has a single class")]
    SingleClass(String),
    #[error("class `{0}` of the test labels never appears in the training data")]
    ClassMissing(String),
    #[error(transparent)]
    Validate(#[from] ValidateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub column: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub left: String,
    pub right: String,
    pub real: f64,
    pub synth: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetric {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
    pub score: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn check_schema(real: &Table, synth: &Table) -> Result<(), MetricError> {
    for c in real.columns() {
        let other = synth
            .column(c.name())
            .map_err(|_| MetricError::SchemaMismatch(format!("synthetic table lacks `{}`", c.name())))?;
        if other.kind() != c.kind() {
            return Err(MetricError::SchemaMismatch(format!("`{}` is {:?} vs {:?}", c.name(), c.kind(), other.kind())));
        }
    }
    if synth.n_cols() != real.n_cols() {
        return Err(MetricError::SchemaMismatch(format!("{} columns vs {}", real.n_cols(), synth.n_cols())));
    }
    Ok(())
}

fn present_f64(c: &Column) -> Vec<f64> {
    (0..c.len()).filter_map(|r| c.f64_at(r)).collect()
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn frequencies(c: &Column) -> (BTreeMap<&str, usize>, usize) {
    let mut counts = BTreeMap::new();
    let mut n = 0;
    for r in 0..c.len() {
        if let Some(v) = c.category_at(r) {
            *counts.entry(v).or_insert(0) += 1;
            n += 1;
        }
    }
    (counts, n)
}

/// Total-variation distance between the category frequencies of two columns.
pub fn total_variation(a: &Column, b: &Column) -> f64 {
    let (fa, na) = frequencies(a);
    let (fb, nb) = frequencies(b);
    match (na, nb) {
        (0, 0) => return 0.0,
        (0, _) | (_, 0) => return 1.0,
        _ => {}
    }
    let keys: BTreeSet<&str> = fa.keys().chain(fb.keys()).copied().collect();
    0.5 * keys
        .into_iter()
        .map(|k| {
            let p = *fa.get(k).unwrap_or(&0) as f64 / na as f64;
            let q = *fb.get(k).unwrap_or(&0) as f64 / nb as f64;
            (p - q).abs()
        })
        .sum::<f64>()
}

/// Per-column density scores: 100·(1 − KS) for numeric and timestamp
/// columns, 100·(1 − TV) for categorical ones.
pub fn density_breakdown(real: &Table, synth: &Table) -> Result<Vec<ColumnScore>, MetricError> {
    check_schema(real, synth)?;
    Ok(real
        .columns()
        .par_iter()
        .map(|c| {
            let s = synth.column(c.name()).expect("schema checked");
            let d = match c.kind() {
                ColumnKind::Categorical => total_variation(c, s),
                _ => ks_statistic(&present_f64(c), &present_f64(s)),
            };
            ColumnScore {
                column: c.name().to_string(),
                score: 100.0 * (1.0 - d),
            }
        })
        .collect())
}

pub fn density_score(real: &Table, synth: &Table) -> Result<f64, MetricError> {
    Ok(mean(density_breakdown(real, synth)?.into_iter().map(|c| c.score)).unwrap_or(100.0))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    }
}

fn cramers_v(pairs: &[(&str, &str)]) -> f64 {
    let n = pairs.len() as f64;
    let mut joint: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut rows: BTreeMap<&str, f64> = BTreeMap::new();
    let mut cols: BTreeMap<&str, f64> = BTreeMap::new();
    for &(a, b) in pairs {
        *joint.entry((a, b)).or_default() += 1.0;
        *rows.entry(a).or_default() += 1.0;
        *cols.entry(b).or_default() += 1.0;
    }
    let k = rows.len().min(cols.len());
    if k < 2 {
        return 0.0;
    }
    let mut chi2 = 0.0;
    for (a, ra) in &rows {
        for (b, cb) in &cols {
            let expected = ra * cb / n;
            let observed = joint.get(&(*a, *b)).copied().unwrap_or(0.0);
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    (chi2 / (n * (k - 1) as f64)).sqrt().min(1.0)
}

fn correlation_ratio(pairs: &[(&str, f64)]) -> f64 {
    let n = pairs.len() as f64;
    if pairs.is_empty() {
        return 0.0;
    }
    let grand = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut groups: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for &(g, y) in pairs {
        let e = groups.entry(g).or_default();
        e.0 += y;
        e.1 += 1.0;
    }
    let between: f64 = groups.values().map(|(s, c)| c * (s / c - grand).powi(2)).sum();
    let total: f64 = pairs.iter().map(|p| (p.1 - grand).powi(2)).sum();
    if total <= 0.0 {
        0.0
    } else {
        (between / total).sqrt().min(1.0)
    }
}

/// Association between two columns over rows where both are present:
/// Pearson r, Cramér's V, or the correlation ratio for mixed pairs.
pub fn association(a: &Column, b: &Column) -> f64 {
    let rows = (0..a.len()).filter(|&r| !a.is_missing(r) && !b.is_missing(r));
    match (a.kind() == ColumnKind::Categorical, b.kind() == ColumnKind::Categorical) {
        (false, false) => {
            let (x, y): (Vec<f64>, Vec<f64>) = rows.map(|r| (a.f64_at(r).unwrap(), b.f64_at(r).unwrap())).unzip();
            pearson(&x, &y)
        }
        (true, true) => {
            let pairs: Vec<(&str, &str)> = rows.map(|r| (a.category_at(r).unwrap(), b.category_at(r).unwrap())).collect();
            cramers_v(&pairs)
        }
        (true, false) => {
            let pairs: Vec<(&str, f64)> = rows.map(|r| (a.category_at(r).unwrap(), b.f64_at(r).unwrap())).collect();
            correlation_ratio(&pairs)
        }
        (false, true) => association(b, a),
    }
}

pub fn correlation_breakdown(real: &Table, synth: &Table) -> Result<Vec<PairScore>, MetricError> {
    check_schema(real, synth)?;
    if real.n_cols() < 2 {
        return Err(MetricError::TooFewColumns);
    }
    let cols = real.columns();
    let pairs: Vec<(usize, usize)> = (0..cols.len()).flat_map(|i| (i + 1..cols.len()).map(move |j| (i, j))).collect();
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&cols[i], &cols[j]);
            let r = association(a, b);
            let s = association(synth.column(a.name()).unwrap(), synth.column(b.name()).unwrap());
            PairScore {
                left: a.name().to_string(),
                right: b.name().to_string(),
                real: r,
                synth: s,
                score: (100.0 * (1.0 - (r - s).abs() / 2.0)).clamp(0.0, 100.0),
            }
        })
        .collect())
}

pub fn correlation_score(real: &Table, synth: &Table) -> Result<f64, MetricError> {
    Ok(mean(correlation_breakdown(real, synth)?.into_iter().map(|p| p.score)).expect("at least one pair"))
}

fn edge_metric(source: &str, target: &str, kind: EdgeKind, score: f64) -> EdgeMetric {
    EdgeMetric {
        source: source.to_string(),
        target: target.to_string(),
        kind,
        score,
    }
}

/// Per hierarchical edge: share of synthetic rows whose target equals the
/// modal target the real table maps their source to.
pub fn hcs_breakdown(synth: &Table, graph: &Graph, real: &Table) -> Result<Vec<EdgeMetric>, MetricError> {
    let mut out = Vec::new();
    for e in graph.edges.iter().filter(|e| e.kind == EdgeKind::Hierarchical) {
        let col = |t: &Table, name: &str| -> Result<Column, MetricError> {
            t.column(name).cloned().map_err(|_| MetricError::SchemaMismatch(format!("unknown column `{name}`")))
        };
        let (rs, rt) = (col(real, &e.source)?, col(real, &e.target)?);
        let (ss, st) = (col(synth, &e.source)?, col(synth, &e.target)?);
        let fitted = fit_modal_map(&[&rs], &rt);
        let (mut hit, mut total) = (0usize, 0usize);
        for r in 0..synth.n_rows() {
            if ss.is_missing(r) || st.is_missing(r) {
                continue;
            }
            total += 1;
            if fitted.map.get(&vec![ss.value(r)]) == Some(&st.value(r)) {
                hit += 1;
            }
        }
        let rate = if total == 0 { 0.0 } else { hit as f64 / total as f64 };
        out.push(edge_metric(&e.source, &e.target, e.kind, 100.0 * rate));
    }
    Ok(out)
}

pub fn hcs(synth: &Table, graph: &Graph, real: &Table) -> Result<Option<f64>, MetricError> {
    Ok(mean(hcs_breakdown(synth, graph, real)?.into_iter().map(|e| e.score)))
}

/// Per mathematical or temporal edge: row satisfaction rate under the
/// validator's tolerances.
pub fn mdi_breakdown(synth: &Table, graph: &Graph) -> Result<Vec<EdgeMetric>, MetricError> {
    graph
        .edges
        .iter()
        .filter(|e| matches!(e.kind, EdgeKind::Mathematical | EdgeKind::Temporal))
        .map(|e| Ok(edge_metric(&e.source, &e.target, e.kind, 100.0 * satisfaction(e, synth)?.rate())))
        .collect()
}

pub fn mdi(synth: &Table, graph: &Graph) -> Result<Option<f64>, MetricError> {
    Ok(mean(mdi_breakdown(synth, graph)?.into_iter().map(|e| e.score)))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Cell {
    Missing,
    Bin(usize),
    Cat(String),
}

/// Discretizes a column: categories stay as they are, numbers fall into
/// bins cut at the deciles of `reference`.
fn discretize(reference: &Column, column: &Column) -> Vec<Cell> {
    if reference.kind() == ColumnKind::Categorical {
        return (0..column.len())
            .map(|r| column.category_at(r).map_or(Cell::Missing, |v| Cell::Cat(v.to_string())))
            .collect();
    }
    let mut sorted = present_f64(reference);
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..10).filter_map(|k| sorted.get(k * sorted.len() / 10).copied()).collect();
    cuts.dedup();
    (0..column.len())
        .map(|r| column.f64_at(r).map_or(Cell::Missing, |x| Cell::Bin(cuts.partition_point(|&c| c <= x))))
        .collect()
}

/// Jensen–Shannon divergence in bits between two count tables.
fn jsd<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let np: f64 = p.values().sum();
    let nq: f64 = q.values().sum();
    if np == 0.0 || nq == 0.0 {
        return if np == nq { 0.0 } else { 1.0 };
    }
    let kl_half = |a: &BTreeMap<K, f64>, na: f64, b: &BTreeMap<K, f64>, nb: f64| -> f64 {
        a.iter()
            .map(|(k, &ca)| {
                let pa = ca / na;
                let pb = b.get(k).map_or(0.0, |&cb| cb / nb);
                pa * (2.0 * pa / (pa + pb)).log2()
            })
            .sum()
    };
    (0.5 * kl_half(p, np, q, nq) + 0.5 * kl_half(q, nq, p, np)).clamp(0.0, 1.0)
}

pub fn dsi_breakdown(real: &Table, synth: &Table, graph: &Graph) -> Result<Vec<EdgeMetric>, MetricError> {
    let col = |t: &Table, name: &str| -> Result<Column, MetricError> {
        t.column(name).cloned().map_err(|_| MetricError::SchemaMismatch(format!("unknown column `{name}`")))
    };
    graph
        .edges
        .iter()
        .map(|e| {
            let (rs, rt) = (col(real, &e.source)?, col(real, &e.target)?);
            let (ss, st) = (col(synth, &e.source)?, col(synth, &e.target)?);
            let joint = |s: Vec<Cell>, t: Vec<Cell>| {
                let mut counts: BTreeMap<(Cell, Cell), f64> = BTreeMap::new();
                for pair in s.into_iter().zip(t) {
                    *counts.entry(pair).or_default() += 1.0;
                }
                counts
            };
            let p = joint(discretize(&rs, &rs), discretize(&rt, &rt));
            let q = joint(discretize(&rs, &ss), discretize(&rt, &st));
            Ok(edge_metric(&e.source, &e.target, e.kind, 100.0 * (1.0 - jsd(&p, &q))))
        })
        .collect()
}

pub fn dsi(real: &Table, synth: &Table, graph: &Graph) -> Result<Option<f64>, MetricError> {
    Ok(mean(dsi_breakdown(real, synth, graph)?.into_iter().map(|e| e.score)))
}

enum GowerField {
    Numeric { scale: f64, values: [Vec<Option<f64>>; 3] },
    Categorical { values: [Vec<Option<u32>>; 3] },
}

impl GowerField {
    fn distance(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        fn missing_rule<T>(x: &Option<T>, y: &Option<T>) -> Option<f64> {
            match (x.is_some(), y.is_some()) {
                (false, false) => Some(0.0),
                (true, true) => None,
                _ => Some(1.0),
            }
        }
        match self {
            GowerField::Numeric { scale, values } => {
                let (x, y) = (&values[a.0][a.1], &values[b.0][b.1]);
                missing_rule(x, y).unwrap_or_else(|| ((x.unwrap() - y.unwrap()).abs() / scale).min(1.0))
            }
            GowerField::Categorical { values } => {
                let (x, y) = (&values[a.0][a.1], &values[b.0][b.1]);
                missing_rule(x, y).unwrap_or(if x == y { 0.0 } else { 1.0 })
            }
        }
    }
}

fn evenly_spaced(table: &Table, n: usize) -> Table {
    let m = table.n_rows();
    if n >= m {
        return table.clone();
    }
    table.take_rows(&(0..n).map(|i| i * m / n).collect::<Vec<_>>())
}

/// Share of synthetic rows nearer (Gower distance) to a training row than to
/// any holdout row, ties counting one half, as a percentage. The larger of
/// the two reference tables is thinned to evenly spaced rows to match the
/// smaller one.
pub fn dcr(train: &Table, holdout: &Table, synth: &Table) -> Result<f64, MetricError> {
    if holdout.n_rows() == 0 {
        return Err(MetricError::EmptyTable("holdout"));
    }
    if train.n_rows() == 0 {
        return Err(MetricError::EmptyTable("train"));
    }
    if synth.n_rows() == 0 {
        return Err(MetricError::EmptyTable("synthetic"));
    }
    check_schema(train, holdout)?;
    check_schema(train, synth)?;
    // Equal reference sizes, so that a generator that does not copy scores 50.
    let size = train.n_rows().min(holdout.n_rows());
    let (train, holdout) = (&evenly_spaced(train, size), &evenly_spaced(holdout, size));
    let tables = [train, holdout, synth];
    let fields: Vec<GowerField> = train
        .columns()
        .iter()
        .map(|c| {
            let cols: Vec<&Column> = tables.iter().map(|t| t.column(c.name()).unwrap()).collect();
            if c.kind() == ColumnKind::Categorical {
                let mut codes: BTreeMap<String, u32> = BTreeMap::new();
                let values = std::array::from_fn(|i| {
                    (0..cols[i].len())
                        .map(|r| {
                            cols[i].category_at(r).map(|v| {
                                let next = codes.len() as u32;
                                *codes.entry(v.to_string()).or_insert(next)
                            })
                        })
                        .collect()
                });
                GowerField::Categorical { values }
            } else {
                let v = present_f64(c);
                let n = v.len().max(1) as f64;
                let m = v.iter().sum::<f64>() / n;
                let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
                let values = std::array::from_fn(|i| (0..cols[i].len()).map(|r| cols[i].f64_at(r)).collect());
                GowerField::Numeric {
                    scale: if sd > 1e-12 { sd } else { 1.0 },
                    values,
                }
            }
        })
        .collect();
    let width = fields.len().max(1) as f64;
    let nearest = |query: usize, table: usize, n: usize| -> f64 {
        (0..n)
            .map(|r| fields.iter().map(|f| f.distance((2, query), (table, r))).sum::<f64>() / width)
            .fold(f64::INFINITY, f64::min)
    };
    let credit: f64 = (0..synth.n_rows())
        .into_par_iter()
        .map(|q| {
            let dt = nearest(q, 0, train.n_rows());
            let dh = nearest(q, 1, holdout.n_rows());
            if dt < dh {
                1.0
            } else if dt == dh {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    Ok(100.0 * credit / synth.n_rows() as f64)
}

/// Classifier two-sample test: cross-validated AUC of real-vs-synthetic
/// discrimination, mapped so that 100 means indistinguishable.
pub fn c2st(real: &Table, synth: &Table, seed: u64) -> Result<f64, MetricError> {
    if real.n_rows() == 0 {
        return Err(MetricError::EmptyTable("real"));
    }
    if synth.n_rows() == 0 {
        return Err(MetricError::EmptyTable("synthetic"));
    }
    check_schema(real, synth)?;
    let space = FeatureSpace::fit(real, Some(synth), &[]);
    let x = ndarray::concatenate(ndarray::Axis(0), &[space.encode(real).view(), space.encode(synth).view()]).expect("same width");
    let labels: Vec<bool> = (0..x.nrows()).map(|r| r < real.n_rows()).collect();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(&mut seeded_rng(derive_seed(seed, "c2st")));
    let folds = C2ST_FOLDS.min(x.nrows()).max(2);
    let aucs: Vec<f64> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (test, fit): (Vec<usize>, Vec<usize>) = (0..order.len()).partition(|i| i % folds == k);
            let test: Vec<usize> = test.into_iter().map(|i| order[i]).collect();
            let fit: Vec<usize> = fit.into_iter().map(|i| order[i]).collect();
            let model = Logistic::fit(&x.select(ndarray::Axis(0), &fit), &fit.iter().map(|&r| labels[r]).collect::<Vec<_>>(), RIDGE);
            let p = model.predict_proba(&x.select(ndarray::Axis(0), &test));
            auc(&p, &test.iter().map(|&r| labels[r]).collect::<Vec<_>>())
        })
        .collect();
    let mean_auc = mean(aucs).expect("at least two folds");
    Ok((100.0 * (1.0 - 2.0 * (mean_auc - 0.5))).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    pub auc: f64,
    pub f1: f64,
}

fn labels_of<'a>(table: &'a Table, label: &str) -> Result<&'a Column, MetricError> {
    table
        .column(label)
        .ok()
        .filter(|c| c.kind() == ColumnKind::Categorical)
        .ok_or_else(|| MetricError::Label(label.to_string()))
}

/// Train on `synth_train`, test on `real_test`: binary AUC (one-vs-rest
/// macro AUC for more classes) and macro F1.
pub fn tstr(synth_train: &Table, real_test: &Table, label: &str) -> Result<Utility, MetricError> {
    check_schema(real_test, synth_train)?;
    let (ytr_col, yte_col) = (labels_of(synth_train, label)?, labels_of(real_test, label)?);
    let train_rows: Vec<usize> = (0..synth_train.n_rows()).filter(|&r| !ytr_col.is_missing(r)).collect();
    let test_rows: Vec<usize> = (0..real_test.n_rows()).filter(|&r| !yte_col.is_missing(r)).collect();
    if test_rows.is_empty() {
        return Err(MetricError::EmptyTable("test"));
    }
    let ytr: Vec<&str> = train_rows.iter().map(|&r| ytr_col.category_at(r).unwrap()).collect();
    let yte: Vec<&str> = test_rows.iter().map(|&r| yte_col.category_at(r).unwrap()).collect();
    let train_classes: BTreeSet<&str> = ytr.iter().copied().collect();
    let test_classes: BTreeSet<&str> = yte.iter().copied().collect();
    if train_classes.len() < 2 {
        return Err(MetricError::SingleClass(label.to_string()));
    }
    if let Some(c) = test_classes.difference(&train_classes).next() {
        return Err(MetricError::ClassMissing(c.to_string()));
    }
    let train = synth_train.take_rows(&train_rows);
    let test = real_test.take_rows(&test_rows);
    let space = FeatureSpace::fit(&train, None, &[label]);
    let (xtr, xte) = (space.encode(&train), space.encode(&test));
    let classes: Vec<&str> = train_classes.into_iter().collect();

    let (auc_value, predicted): (f64, Vec<&str>) = if classes.len() == 2 {
        let positive = classes[1];
        let model = Logistic::fit(&xtr, &ytr.iter().map(|&y| y == positive).collect::<Vec<_>>(), RIDGE);
        let p = model.predict_proba(&xte);
        let a = auc(&p, &yte.iter().map(|&y| y == positive).collect::<Vec<_>>());
        (a, p.iter().map(|&q| if q >= 0.5 { positive } else { classes[0] }).collect())
    } else {
        let probs: Vec<Vec<f64>> = classes
            .par_iter()
            .map(|&c| Logistic::fit(&xtr, &ytr.iter().map(|&y| y == c).collect::<Vec<_>>(), RIDGE).predict_proba(&xte))
            .collect();
        let a = mean(
            classes
                .iter()
                .zip(&probs)
                .filter(|(c, _)| test_classes.contains(**c))
                .map(|(&c, p)| auc(p, &yte.iter().map(|&y| y == c).collect::<Vec<_>>())),
        )
        .unwrap_or(0.5);
        let pred = (0..yte.len())
            .map(|r| {
                let best = (0..classes.len()).max_by(|&i, &j| probs[i][r].total_cmp(&probs[j][r]).then(j.cmp(&i))).unwrap();
                classes[best]
            })
            .collect();
        (a, pred)
    };
    let f1 = mean(test_classes.iter().map(|&c| {
        let tp = yte.iter().zip(&predicted).filter(|(y, p)| **y == c && **p == c).count() as f64;
        let fp = yte.iter().zip(&predicted).filter(|(y, p)| **y != c && **p == c).count() as f64;
        let fn_ = yte.iter().zip(&predicted).filter(|(y, p)| **y == c && **p != c).count() as f64;
        2.0 * tp / (2.0 * tp + fp + fn_)
    }))
    .expect("nonempty test classes");
    Ok(Utility { auc: auc_value, f1 })
}

#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    /// Real data the generator was fitted on.
    pub real: &'a Table,
    pub synth: &'a Table,
    /// Real rows withheld from fitting; enables DCR and is the TSTR test set.
    pub holdout: Option<&'a Table>,
    pub graph: Option<&'a Graph>,
    pub label: Option<&'a str>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub n_real: usize,
    pub n_synth: usize,
    pub density: f64,
    pub correlation: f64,
    pub hcs: Option<f64>,
    pub mdi: Option<f64>,
    pub dsi: Option<f64>,
    pub dcr: Option<f64>,
    pub c2st: f64,
    pub tstr_label: Option<String>,
    pub tstr_auc: Option<f64>,
    pub tstr_f1: Option<f64>,
    pub per_column: Vec<ColumnScore>,
    pub per_pair: Vec<PairScore>,
    pub per_edge_hcs: Vec<EdgeMetric>,
    pub per_edge_mdi: Vec<EdgeMetric>,
    pub per_edge_dsi: Vec<EdgeMetric>,
}

pub fn evaluate(inputs: &EvalInputs) -> Result<EvalReport, MetricError> {
    let EvalInputs {
        real,
        synth,
        holdout,
        graph,
        label,
        seed,
    } = *inputs;
    let per_column = density_breakdown(real, synth)?;
    let per_pair = correlation_breakdown(real, synth)?;
    let empty = Graph::default();
    let g = graph.unwrap_or(&empty);
    let per_edge_hcs = hcs_breakdown(synth, g, real)?;
    let per_edge_mdi = mdi_breakdown(synth, g)?;
    let per_edge_dsi = dsi_breakdown(real, synth, g)?;
    let dcr_value = holdout.map(|h| dcr(real, h, synth)).transpose()?;
    let utility = label.map(|l| tstr(synth, holdout.unwrap_or(real), l)).transpose()?;
    Ok(EvalReport {
        seed,
        n_real: real.n_rows(),
        n_synth: synth.n_rows(),
        density: mean(per_column.iter().map(|c| c.score)).unwrap_or(100.0),
        correlation: mean(per_pair.iter().map(|p| p.score)).expect("at least one pair"),
        hcs: mean(per_edge_hcs.iter().map(|e| e.score)),
        mdi: mean(per_edge_mdi.iter().map(|e| e.score)),
        dsi: mean(per_edge_dsi.iter().map(|e| e.score)),
        dcr: dcr_value,
        c2st: c2st(real, synth, seed)?,
        tstr_label: label.map(str::to_string),
        tstr_auc: utility.map(|u| u.auc),
        tstr_f1: utility.map(|u| u.f1),
        per_column,
        per_pair,
        per_edge_hcs,
        per_edge_mdi,
        per_edge_dsi,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"));
        let mut out = String::new();
        let headline = [
            ("density", Some(self.density)),
            ("correlation", Some(self.correlation)),
            ("hcs", self.hcs),
            ("mdi", self.mdi),
            ("dsi", self.dsi),
            ("dcr", self.dcr),
            ("c2st", Some(self.c2st)),
            ("tstr_auc", self.tstr_auc),
            ("tstr_f1", self.tstr_f1),
        ];
        writeln!(out, "{:<14} {:>8}", "metric", "score").unwrap();
        for (name, v) in headline {
            writeln!(out, "{name:<14} {:>8}", fmt(v)).unwrap();
        }
        let width = self.per_column.iter().map(|c| c.column.len()).max().unwrap_or(6).max(6);
        writeln!(out, "\n{:<width$} {:>8}", "column", "density").unwrap();
        for c in &self.per_column {
            writeln!(out, "{:<width$} {:>8.2}", c.column, c.score).unwrap();
        }
        let edges: Vec<(&str, &EdgeMetric)> = self
            .per_edge_hcs
            .iter()
            .map(|e| ("hcs", e))
            .chain(self.per_edge_mdi.iter().map(|e| ("mdi", e)))
            .chain(self.per_edge_dsi.iter().map(|e| ("dsi", e)))
            .collect();
        if !edges.is_empty() {
            let labels: Vec<String> = edges.iter().map(|(_, e)| format!("{} -> {}", e.source, e.target)).collect();
            let width = labels.iter().map(String::len).max().unwrap_or(4).max(4);
            writeln!(out, "\n{:<6} {:<width$} {:>8}", "metric", "edge", "score").unwrap();
            for ((metric, e), label) in edges.iter().zip(&labels) {
                writeln!(out, "{metric:<6} {label:<width$} {:>8.2}", e.score).unwrap();
            }
        }
        out
    }
}
