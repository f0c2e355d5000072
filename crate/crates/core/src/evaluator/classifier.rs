//! Ridge-regularized logistic regression fitted by Newton iterations, the
//! AUC statistic, and the feature encoding shared by the classifier-based
//! metrics.

use ndarray::{Array1, Array2, Axis};

use crate::table::{ColumnKind, Table};

/// One-hot categories and standardized numerics (timestamps as seconds),
/// with squared numeric terms appended so the linear model can see
/// differences in spread as well as location.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    columns: Vec<(String, Feature)>,
}

#[derive(Debug, Clone)]
enum Feature {
    Numeric { mean: f64, std: f64 },
    Categorical { levels: Vec<String> },
}

impl FeatureSpace {
    /// Fits on `reference`, skipping the columns in `exclude`. Categories are
    /// the union over `reference` and `extra`.
    pub fn fit(reference: &Table, extra: Option<&Table>, exclude: &[&str]) -> Self {
        let mut columns = Vec::new();
        for c in reference.columns() {
            if exclude.contains(&c.name()) {
                continue;
            }
            let feature = match c.kind() {
                ColumnKind::Categorical => {
                    let mut levels: Vec<String> = (0..c.len()).filter_map(|r| c.category_at(r).map(str::to_string)).collect();
                    if let Some(other) = extra.and_then(|t| t.column(c.name()).ok()) {
                        levels.extend((0..other.len()).filter_map(|r| other.category_at(r).map(str::to_string)));
                    }
                    levels.sort();
                    levels.dedup();
                    Feature::Categorical { levels }
                }
                _ => {
                    let v: Vec<f64> = (0..c.len()).filter_map(|r| c.f64_at(r)).collect();
                    let n = v.len().max(1) as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                    Feature::Numeric {
                        mean,
                        std: if std > 1e-12 { std } else { 1.0 },
                    }
                }
            };
            columns.push((c.name().to_string(), feature));
        }
        Self { columns }
    }

    pub fn dim(&self) -> usize {
        self.columns
            .iter()
            .map(|(_, f)| match f {
                Feature::Numeric { .. } => 2,
                Feature::Categorical { levels } => levels.len(),
            })
            .sum()
    }

    /// Encoded rows. Missing numerics encode as the mean; unseen or missing
    /// categories as an all-zero block.
    pub fn encode(&self, table: &Table) -> Array2<f64> {
        let n = table.n_rows();
        let mut out = Array2::zeros((n, self.dim()));
        let mut at = 0;
        for (name, f) in &self.columns {
            let c = table.column(name).ok();
            match f {
                Feature::Numeric { mean, std } => {
                    for r in 0..n {
                        let z = c.and_then(|c| c.f64_at(r)).map_or(0.0, |x| (x - mean) / std);
                        out[[r, at]] = z;
                        out[[r, at + 1]] = z * z;
                    }
                    at += 2;
                }
                Feature::Categorical { levels } => {
                    for r in 0..n {
                        if let Some(v) = c.and_then(|c| c.category_at(r)) {
                            if let Ok(k) = levels.binary_search_by(|l| l.as_str().cmp(v)) {
                                out[[r, at + k]] = 1.0;
                            }
                        }
                    }
                    at += levels.len();
                }
            }
        }
        out
    }
}

/// Binary logistic regression with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct Logistic {
    weights: Array1<f64>,
    intercept: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Solves `a·x = b` for symmetric positive definite `a` (Cholesky).
fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[[i, k]] * y[k]).sum();
        y[i] = (b[i] - s) / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[[k, i]] * x[k]).sum();
        x[i] = (y[i] - s) / l[[i, i]];
    }
    Some(x)
}

impl Logistic {
    /// Fits by Newton's method on the ridge-penalized log-likelihood.
    pub fn fit(x: &Array2<f64>, y: &[bool], lambda: f64) -> Self {
        let (n, d) = x.dim();
        let mut xi = Array2::<f64>::ones((n, d + 1));
        xi.slice_mut(ndarray::s![.., ..d]).assign(x);
        let yv = Array1::from_iter(y.iter().map(|&b| f64::from(u8::from(b))));
        let mut w = Array1::<f64>::zeros(d + 1);
        for _ in 0..50 {
            let p = xi.dot(&w).mapv(sigmoid);
            let mut grad = xi.t().dot(&(&p - &yv));
            let weights = p.mapv(|q| (q * (1.0 - q)).max(1e-12).sqrt());
            let xw = &xi * &weights.view().insert_axis(Axis(1));
            let mut hess = xw.t().dot(&xw);
            for j in 0..d {
                hess[[j, j]] += lambda;
                grad[j] += lambda * w[j];
            }
            hess[[d, d]] += 1e-9;
            let Some(step) = solve_spd(&hess, &grad) else { break };
            w -= &step;
            if step.iter().all(|s| s.abs() < 1e-9) {
                break;
            }
        }
        Self {
            intercept: w[d],
            weights: w.slice(ndarray::s![..d]).to_owned(),
        }
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Vec<f64> {
        x.dot(&self.weights).iter().map(|z| sigmoid(z + self.intercept)).collect()
    }
}

/// Area under the ROC curve by the rank-sum statistic, averaging tied ranks.
/// Returns 0.5 when only one class is present.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return 0.5;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&k| labels[idx[k]]).count() as f64 * avg;
        i = j + 1;
    }
    (rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_by_pair_counting() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4];
        let labels = [false, false, true, true, true];
        // Oracle: fraction of (pos, neg) pairs ordered correctly, ties 1/2.
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if labels[i] && !labels[j] {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((auc(&scores, &labels) - num / den).abs() < 1e-12);
        assert_eq!(auc(&[1.0, 2.0], &[true, true]), 0.5);
    }

    #[test]
    fn cholesky_solves() {
        let a = ndarray::arr2(&[[4.0, 1.0], [1.0, 3.0]]);
        let b = ndarray::arr1(&[1.0, 2.0]);
        let x = solve_spd(&a, &b).unwrap();
        let back = a.dot(&x);
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_separates_shifted_classes() {
        let n = 200;
        let x = Array2::from_shape_fn((n, 1), |(r, _)| if r < n / 2 { r as f64 / 100.0 } else { 3.0 + r as f64 / 100.0 });
        let y: Vec<bool> = (0..n).map(|r| r >= n / 2).collect();
        let model = Logistic::fit(&x, &y, 1.0);
        let p = model.predict_proba(&x);
        assert!(auc(&p, &y) > 0.99);
        assert!(p[0] < 0.5 && p[n - 1] > 0.5);
    }
}
