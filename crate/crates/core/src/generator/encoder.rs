//! Numeric encoding of compressed tables for the diffusion model:
//! standardized numerics (signed `log1p` first for offset columns), one-hot
//! categories, and constant columns carried outside the model.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::table::{Column, ColumnKind, ColumnMeta, Table, Value};

use super::GenError;

/// Columns with at most this many distinct values are snapped back onto
/// their observed values when decoding.
const GRID_MAX: usize = 32;
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Codec {
    Numeric {
        mean: f64,
        std: f64,
        /// Observed range in original units.
        min: f64,
        max: f64,
        /// Signed `log1p` applied before standardizing.
        log: bool,
        integer: bool,
        /// Sorted distinct values when there are few of them.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<f64>>,
    },
    Categorical {
        levels: Vec<String>,
    },
    Constant {
        value: Value,
    },
}

impl Codec {
    pub fn width(&self) -> usize {
        match self {
            Codec::Numeric { .. } => 1,
            Codec::Categorical { levels } => levels.len(),
            Codec::Constant { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub metas: Vec<ColumnMeta>,
    pub codecs: Vec<Codec>,
}

fn signed_log1p(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

fn signed_expm1(y: f64) -> f64 {
    y.signum() * y.abs().exp_m1()
}

fn numeric_codec(values: &[f64], log: bool) -> Codec {
    let t: Vec<f64> = values
        .iter()
        .map(|&x| if log { signed_log1p(x) } else { x })
        .collect();
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let std = (t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(std >= MIN_STD) {
        return Codec::Constant {
            value: Value::Number(values[0]),
        };
    }
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    Codec::Numeric {
        mean,
        std,
        min,
        max,
        log,
        integer: values.iter().all(|x| x.fract() == 0.0),
        grid: (distinct.len() <= GRID_MAX).then_some(distinct),
    }
}

fn snap(grid: &[f64], x: f64) -> f64 {
    let i = grid.partition_point(|&g| g < x);
    match (i.checked_sub(1).map(|j| grid[j]), grid.get(i)) {
        (Some(lo), Some(&hi)) => {
            if x - lo <= hi - x {
                lo
            } else {
                hi
            }
        }
        (Some(lo), None) => lo,
        (None, Some(&hi)) => hi,
        (None, None) => x,
    }
}

impl Encoder {
    /// Fits one codec per column. `offset_columns` get the log transform.
    pub fn fit(table: &Table, offset_columns: &[String]) -> Result<Self, GenError> {
        if table.n_rows() < 2 {
            return Err(GenError::TooFewRows(table.n_rows()));
        }
        let mut codecs = Vec::with_capacity(table.n_cols());
        for c in table.columns() {
            let codec = match c.kind() {
                ColumnKind::Categorical => {
                    let mut levels: Vec<String> = (0..c.len())
                        .filter_map(|r| c.category_at(r).map(str::to_string))
                        .collect();
                    levels.sort();
                    levels.dedup();
                    match levels.len() {
                        0 => Codec::Constant { value: Value::Missing },
                        1 => Codec::Constant {
                            value: Value::Category(levels.remove(0)),
                        },
                        _ => Codec::Categorical { levels },
                    }
                }
                ColumnKind::Numeric | ColumnKind::Timestamp => {
                    let values: Vec<f64> = (0..c.len()).filter_map(|r| c.f64_at(r)).collect();
                    if values.is_empty() {
                        Codec::Constant { value: Value::Missing }
                    } else {
                        let log = offset_columns.iter().any(|o| o == c.name());
                        match numeric_codec(&values, log) {
                            Codec::Constant { .. } => Codec::Constant { value: c.value(
                                (0..c.len()).find(|&r| !c.is_missing(r)).expect("has a value"),
                            ) },
                            other => other,
                        }
                    }
                }
            };
            codecs.push(codec);
        }
        Ok(Self {
            metas: table.metas(),
            codecs,
        })
    }

    /// Width of the encoded representation.
    pub fn dim(&self) -> usize {
        self.codecs.iter().map(Codec::width).sum()
    }

    /// Encodes rows; missing cells map to the column mean (0) or all-zero
    /// one-hot blocks.
    pub fn encode(&self, table: &Table) -> Result<Array2<f64>, GenError> {
        let n = table.n_rows();
        let mut out = Array2::zeros((n, self.dim()));
        let mut offset = 0;
        for (meta, codec) in self.metas.iter().zip(&self.codecs) {
            let c: &Column = table
                .column(&meta.name)
                .map_err(|_| GenError::Schema(format!("missing column `{}`", meta.name)))?;
            match codec {
                Codec::Numeric { mean, std, log, .. } => {
                    for r in 0..n {
                        if let Some(x) = c.f64_at(r) {
                            let t = if *log { signed_log1p(x) } else { x };
                            out[[r, offset]] = (t - mean) / std;
                        }
                    }
                }
                Codec::Categorical { levels } => {
                    for r in 0..n {
                        if let Some(v) = c.category_at(r) {
                            if let Ok(k) = levels.binary_search_by(|l| l.as_str().cmp(v)) {
                                out[[r, offset + k]] = 1.0;
                            }
                        }
                    }
                }
                Codec::Constant { .. } => {}
            }
            offset += codec.width();
        }
        Ok(out)
    }

    /// Decodes encoded rows back into a table with the original schema.
    /// Categories decode by argmax; numerics are clamped to the observed
    /// range, rounded when integral and snapped onto small value sets.
    pub fn decode(&self, x: &Array2<f64>) -> Result<Table, GenError> {
        if x.ncols() != self.dim() {
            return Err(GenError::Schema(format!("expected width {}, got {}", self.dim(), x.ncols())));
        }
        let n = x.nrows();
        let mut columns = Vec::with_capacity(self.codecs.len());
        let mut offset = 0;
        for (meta, codec) in self.metas.iter().zip(&self.codecs) {
            let column = match codec {
                Codec::Numeric {
                    mean,
                    std,
                    min,
                    max,
                    log,
                    integer,
                    grid,
                } => {
                    let vals: Vec<f64> = (0..n)
                        .map(|r| {
                            let t = x[[r, offset]] * std + mean;
                            let mut v = if *log { signed_expm1(t) } else { t };
                            if !v.is_finite() {
                                v = if t > 0.0 { *max } else { *min };
                            }
                            v = v.clamp(*min, *max);
                            if let Some(g) = grid {
                                v = snap(g, v);
                            } else if *integer {
                                v = v.round();
                            }
                            v
                        })
                        .collect();
                    match meta.kind {
                        ColumnKind::Timestamp => {
                            Column::timestamp(meta.clone(), vals.iter().map(|v| Some(v.round() as i64)).collect())
                        }
                        _ => Column::numeric(meta.clone(), vals.into_iter().map(Some).collect()),
                    }
                }
                Codec::Categorical { levels } => {
                    let names: Vec<Option<&str>> = (0..n)
                        .map(|r| {
                            let mut best = 0;
                            for k in 1..levels.len() {
                                if x[[r, offset + k]] > x[[r, offset + best]] {
                                    best = k;
                                }
                            }
                            Some(levels[best].as_str())
                        })
                        .collect();
                    Column::categorical(meta.clone(), &names)
                }
                Codec::Constant { value } => Column::from_values(meta.clone(), &vec![value.clone(); n])?,
            };
            offset += codec.width();
            columns.push(column);
        }
        Ok(Table::new(columns)?)
    }
}
