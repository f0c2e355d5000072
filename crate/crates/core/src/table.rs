//! Mixed-type tables: column metadata, typed values, CSV ingestion and
//! train/holdout splitting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeded_rng;

/// Output format for timestamps; also one of the accepted input formats.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Share of non-empty cells that must parse for a kind to be inferred.
const INFER_THRESHOLD: f64 = 0.95;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("header/metadata mismatch: {0}")]
    HeaderMismatch(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("metadata error: {0}")]
    Metadata(String),
    #[error("empty table")]
    Empty,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("column `{column}` has {actual} rows, expected {expected}")]
    RaggedColumns {
        column: String,
        expected: usize,
        actual: usize,
    },
    #[error("value {value:?} does not match kind {kind:?} of column `{column}`")]
    KindMismatch {
        column: String,
        kind: ColumnKind,
        value: Value,
    },
    #[error("holdout fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("need at least 2 rows to split, got {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kind: ColumnKind,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>, description: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            kind,
        }
    }
}

/// A single cell. Numbers are always finite.
///
/// Equality, ordering and hashing are total: numbers compare with
/// `f64::total_cmp`, so `Value` can key hash maps and break ties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    Category(String),
    /// Seconds since the Unix epoch, UTC.
    Timestamp(i64),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    /// Numeric view: numbers as-is, timestamps as epoch seconds.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            Value::Timestamp(t) => Some(*t as f64),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(s) => Some(s),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Missing => 0,
            Value::Number(_) => 1,
            Value::Timestamp(_) => 2,
            Value::Category(_) => 3,
        }
    }

    /// Whether this value matches a textual token such as a domain-set member
    /// or the right-hand side of a conditional rule.
    pub fn matches_token(&self, token: &str) -> bool {
        match self {
            Value::Category(s) => s == token,
            Value::Number(x) => token.trim().parse::<f64>().is_ok_and(|t| t == *x),
            Value::Timestamp(t) => parse_timestamp(token).is_some_and(|p| p == *t),
            Value::Missing => false,
        }
    }

    /// Parses a textual token into a value of the given kind.
    pub fn from_token(token: &str, kind: ColumnKind) -> Option<Value> {
        match kind {
            ColumnKind::Categorical => Some(Value::Category(token.to_string())),
            ColumnKind::Numeric => parse_number(token).map(Value::Number),
            ColumnKind::Timestamp => parse_timestamp(token).map(Value::Timestamp),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.total_cmp(b),
            (Value::Timestamp(a), Value::Timestamp(b)) => a.cmp(b),
            (Value::Category(a), Value::Category(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Number(x) => x.to_bits().hash(state),
            Value::Timestamp(t) => t.hash(state),
            Value::Category(s) => s.hash(state),
            Value::Missing => {}
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Category(s) => f.write_str(s),
            Value::Timestamp(t) => f.write_str(&format_timestamp(*t)),
            Value::Missing => Ok(()),
        }
    }
}

/// Per-column string interner for categorical data.
#[derive(Debug, Clone, Default)]
pub struct Levels {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Levels {
    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&code) = self.index.get(s) {
            return code;
        }
        let code = self.names.len() as u32;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), code);
        code
    }

    pub fn code_of(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn name(&self, code: u32) -> &str {
        &self.names[code as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical {
        codes: Vec<Option<u32>>,
        levels: Levels,
    },
    Timestamp(Vec<Option<i64>>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
            ColumnData::Timestamp(v) => v.len(),
        }
    }

    fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
            ColumnData::Timestamp(_) => ColumnKind::Timestamp,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    meta: ColumnMeta,
    data: ColumnData,
}

impl Column {
    pub fn numeric(meta: ColumnMeta, values: Vec<Option<f64>>) -> Self {
        debug_assert!(values.iter().flatten().all(|x| x.is_finite()));
        Self {
            meta: ColumnMeta {
                kind: ColumnKind::Numeric,
                ..meta
            },
            data: ColumnData::Numeric(values),
        }
    }

    pub fn timestamp(meta: ColumnMeta, values: Vec<Option<i64>>) -> Self {
        Self {
            meta: ColumnMeta {
                kind: ColumnKind::Timestamp,
                ..meta
            },
            data: ColumnData::Timestamp(values),
        }
    }

    pub fn categorical<S: AsRef<str>>(meta: ColumnMeta, values: &[Option<S>]) -> Self {
        let mut levels = Levels::default();
        let codes = values
            .iter()
            .map(|v| v.as_ref().map(|s| levels.intern(s.as_ref())))
            .collect();
        Self {
            meta: ColumnMeta {
                kind: ColumnKind::Categorical,
                ..meta
            },
            data: ColumnData::Categorical { codes, levels },
        }
    }

    /// Builds a column from tagged values; every value must match `meta.kind`
    /// or be `Missing`.
    pub fn from_values(meta: ColumnMeta, values: &[Value]) -> Result<Self, TableError> {
        let mismatch = |v: &Value| TableError::KindMismatch {
            column: meta.name.clone(),
            kind: meta.kind,
            value: v.clone(),
        };
        match meta.kind {
            ColumnKind::Numeric => {
                let mut out = Vec::with_capacity(values.len());
                for v in values {
                    out.push(match v {
                        Value::Number(x) if x.is_finite() => Some(*x),
                        Value::Missing => None,
                        other => return Err(mismatch(other)),
                    });
                }
                Ok(Column::numeric(meta, out))
            }
            ColumnKind::Timestamp => {
                let mut out = Vec::with_capacity(values.len());
                for v in values {
                    out.push(match v {
                        Value::Timestamp(t) => Some(*t),
                        Value::Missing => None,
                        other => return Err(mismatch(other)),
                    });
                }
                Ok(Column::timestamp(meta, out))
            }
            ColumnKind::Categorical => {
                let mut out: Vec<Option<&str>> = Vec::with_capacity(values.len());
                for v in values {
                    out.push(match v {
                        Value::Category(s) => Some(s.as_str()),
                        Value::Missing => None,
                        other => return Err(mismatch(other)),
                    });
                }
                Ok(Column::categorical(meta, &out))
            }
        }
    }

    pub fn meta(&self) -> &ColumnMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.meta.kind
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, row: usize) -> Value {
        match &self.data {
            ColumnData::Numeric(v) => v[row].map_or(Value::Missing, Value::Number),
            ColumnData::Timestamp(v) => v[row].map_or(Value::Missing, Value::Timestamp),
            ColumnData::Categorical { codes, levels } => codes[row]
                .map_or(Value::Missing, |c| Value::Category(levels.name(c).to_string())),
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Timestamp(v) => v[row].is_none(),
            ColumnData::Categorical { codes, .. } => codes[row].is_none(),
        }
    }

    /// Numeric view of a cell: numbers as-is, timestamps as epoch seconds.
    pub fn f64_at(&self, row: usize) -> Option<f64> {
        match &self.data {
            ColumnData::Numeric(v) => v[row],
            ColumnData::Timestamp(v) => v[row].map(|t| t as f64),
            ColumnData::Categorical { .. } => None,
        }
    }

    pub fn category_at(&self, row: usize) -> Option<&str> {
        match &self.data {
            ColumnData::Categorical { codes, levels } => codes[row].map(|c| levels.name(c)),
            _ => None,
        }
    }

    pub fn numbers(&self) -> Option<&[Option<f64>]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn timestamps(&self) -> Option<&[Option<i64>]> {
        match &self.data {
            ColumnData::Timestamp(v) => Some(v),
            _ => None,
        }
    }

    pub fn values(&self) -> Vec<Value> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// New column holding the given rows (repeats allowed).
    pub fn take(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Timestamp(v) => ColumnData::Timestamp(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical { codes, levels } => ColumnData::Categorical {
                codes: rows.iter().map(|&i| codes[i]).collect(),
                levels: levels.clone(),
            },
        };
        Column {
            meta: self.meta.clone(),
            data,
        }
    }

    fn render(&self, row: usize) -> String {
        self.value(row).to_string()
    }
}

/// A column-major table. Immutable once built.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<Column>,
    rows: usize,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self, TableError> {
        let rows = columns.first().map_or(0, Column::len);
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if c.name().is_empty() {
                return Err(TableError::Metadata("empty column name".into()));
            }
            if !seen.insert(c.name().to_string()) {
                return Err(TableError::DuplicateColumn(c.name().to_string()));
            }
            if c.len() != rows {
                return Err(TableError::RaggedColumns {
                    column: c.name().to_string(),
                    expected: rows,
                    actual: c.len(),
                });
            }
            debug_assert_eq!(c.data.kind(), c.meta.kind);
        }
        Ok(Self { columns, rows })
    }

    /// Builds a table from row-major values.
    pub fn from_rows(metas: Vec<ColumnMeta>, rows: &[Vec<Value>]) -> Result<Self, TableError> {
        let mut columns = Vec::with_capacity(metas.len());
        for (j, meta) in metas.into_iter().enumerate() {
            let mut values = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() <= j {
                    return Err(TableError::RaggedColumns {
                        column: meta.name.clone(),
                        expected: rows.len(),
                        actual: row.len(),
                    });
                }
                values.push(row[j].clone());
            }
            columns.push(Column::from_values(meta, &values)?);
        }
        Table::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn metas(&self) -> Vec<ColumnMeta> {
        self.columns.iter().map(|c| c.meta.clone()).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(Column::name).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column, TableError> {
        self.columns
            .iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))
    }

    pub fn value(&self, row: usize, col: usize) -> Value {
        self.columns[col].value(row)
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(row)).collect()
    }

    /// New table holding the given rows (in the given order, repeats allowed).
    pub fn take_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            rows: rows.len(),
        }
    }

    /// Projection onto the named columns, in the order given.
    pub fn select(&self, names: &[&str]) -> Result<Table, TableError> {
        let columns = names
            .iter()
            .map(|n| self.column(n).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        Table::new(columns)
    }

    /// Appends columns; lengths must match.
    pub fn with_columns(&self, extra: Vec<Column>) -> Result<Table, TableError> {
        let mut columns = self.columns.clone();
        columns.extend(extra);
        Table::new(columns)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.names())?;
        let mut record = Vec::with_capacity(self.n_cols());
        for i in 0..self.rows {
            record.clear();
            record.extend(self.columns.iter().map(|c| c.render(i)));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| TableError::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// One entry of the metadata file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEntry {
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ColumnKind>,
}

/// Metadata file: column name → description and (optional) kind.
pub type Metadata = BTreeMap<String, MetaEntry>;

pub fn metadata_of(metas: &[ColumnMeta]) -> Metadata {
    metas
        .iter()
        .map(|m| {
            (
                m.name.clone(),
                MetaEntry {
                    description: m.description.clone(),
                    kind: Some(m.kind),
                },
            )
        })
        .collect()
}

pub fn parse_metadata(text: &str) -> Result<Metadata, TableError> {
    serde_json::from_str(text).map_err(|e| TableError::Metadata(e.to_string()))
}

/// Cells that could not be parsed as their column's kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub parse_warnings: usize,
    pub per_column: BTreeMap<String, usize>,
}

pub fn load_table(csv_path: &Path, metadata_path: &Path) -> Result<(Table, LoadReport), TableError> {
    let meta_text = read_to_string(metadata_path)?;
    let metadata = parse_metadata(&meta_text)?;
    let file = File::open(csv_path).map_err(|e| io_err(csv_path, e))?;
    read_table(file, &metadata)
}

/// Parses CSV text against a metadata map. Unparseable cells become
/// `Missing` and are counted in the report.
pub fn read_table<R: Read>(csv: R, metadata: &Metadata) -> Result<(Table, LoadReport), TableError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let missing: Vec<&str> = metadata
        .keys()
        .filter(|k| !header.contains(k))
        .map(String::as_str)
        .collect();
    let extra: Vec<&str> = header
        .iter()
        .filter(|h| !metadata.contains_key(*h))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(TableError::HeaderMismatch(format!(
            "absent from CSV header: [{}]; absent from metadata: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    {
        let mut seen = std::collections::HashSet::new();
        for h in &header {
            if !seen.insert(h) {
                return Err(TableError::DuplicateColumn(h.clone()));
            }
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(TableError::RaggedColumns {
                column: format!("row {}", raw[0].len() + 1),
                expected: header.len(),
                actual: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            raw[j].push(cell.to_string());
        }
    }
    if raw.first().is_none_or(Vec::is_empty) {
        return Err(TableError::Empty);
    }

    let mut report = LoadReport::default();
    let mut columns = Vec::with_capacity(header.len());
    for (name, cells) in header.iter().zip(&raw) {
        let entry = &metadata[name];
        let kind = entry.kind.unwrap_or_else(|| {
            let refs: Vec<&str> = cells.iter().map(String::as_str).collect();
            infer_column_kind(&refs)
        });
        let meta = ColumnMeta::new(name.clone(), entry.description.clone(), kind);
        let (column, bad) = parse_column(meta, cells);
        if bad > 0 {
            report.per_column.insert(name.clone(), bad);
            report.parse_warnings += bad;
        }
        columns.push(column);
    }
    Ok((Table::new(columns)?, report))
}

fn parse_column(meta: ColumnMeta, cells: &[String]) -> (Column, usize) {
    let mut bad = 0;
    let column = match meta.kind {
        ColumnKind::Numeric => {
            let values = cells
                .iter()
                .map(|c| {
                    if c.trim().is_empty() {
                        return None;
                    }
                    let v = parse_number(c);
                    bad += usize::from(v.is_none());
                    v
                })
                .collect();
            Column::numeric(meta, values)
        }
        ColumnKind::Timestamp => {
            let values = cells
                .iter()
                .map(|c| {
                    if c.trim().is_empty() {
                        return None;
                    }
                    let v = parse_timestamp(c);
                    bad += usize::from(v.is_none());
                    v
                })
                .collect();
            Column::timestamp(meta, values)
        }
        ColumnKind::Categorical => {
            let values: Vec<Option<&str>> = cells
                .iter()
                .map(|c| (!c.is_empty()).then_some(c.as_str()))
                .collect();
            Column::categorical(meta, &values)
        }
    };
    (column, bad)
}

/// Writes `table` as CSV plus its metadata JSON.
pub fn write_table(table: &Table, csv_path: &Path, metadata_path: &Path) -> Result<(), TableError> {
    let file = File::create(csv_path).map_err(|e| io_err(csv_path, e))?;
    table.write_csv(std::io::BufWriter::new(file))?;
    let meta = serde_json::to_string_pretty(&metadata_of(&table.metas()))
        .map_err(|e| TableError::Metadata(e.to_string()))?;
    std::fs::write(metadata_path, meta + "\n").map_err(|e| io_err(metadata_path, e))
}

pub fn infer_column_kind(values: &[&str]) -> ColumnKind {
    let cells: Vec<&str> = values
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if cells.is_empty() {
        return ColumnKind::Categorical;
    }
    let share = |ok: usize| ok as f64 / cells.len() as f64;
    let numeric = cells.iter().filter(|c| parse_number(c).is_some()).count();
    if share(numeric) >= INFER_THRESHOLD {
        return ColumnKind::Numeric;
    }
    let stamps = cells.iter().filter(|c| parse_timestamp(c).is_some()).count();
    if share(stamps) >= INFER_THRESHOLD {
        return ColumnKind::Timestamp;
    }
    ColumnKind::Categorical
}

pub fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Accepts ISO-8601 dates and date-times (with or without offset) and
/// `YYYY-MM-DD HH:MM:SS`. Fractional seconds are floored.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    if let Some(stripped) = s.strip_suffix('Z') {
        if let Ok(dt) = NaiveDateTime::parse_from_str(stripped, "%Y-%m-%dT%H:%M:%S%.f") {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_timestamp(t: i64) -> String {
    match DateTime::from_timestamp(t, 0) {
        Some(dt) => dt.format(TIMESTAMP_FORMAT).to_string(),
        None => t.to_string(),
    }
}

/// Deterministic shuffled split. The first part has `round(m·(1−fraction))`
/// rows; both parts keep the original relative row order.
pub fn split_holdout(table: &Table, fraction: f64, seed: u64) -> Result<(Table, Table), TableError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(TableError::BadFraction(fraction));
    }
    let m = table.n_rows();
    if m < 2 {
        return Err(TableError::TooFewRows(m));
    }
    let n_first = ((m as f64) * (1.0 - fraction)).round() as usize;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let (first, second) = idx.split_at(n_first.min(m));
    let mut first = first.to_vec();
    let mut second = second.to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((table.take_rows(&first), table.take_rows(&second)))
}

fn read_to_string(path: &Path) -> Result<String, TableError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> TableError {
    TableError::Io {
        path: path.display().to_string(),
        source,
    }
}
