//! Score-based diffusion over encoded compressed tables, using the
//! elucidated (EDM) parameterization: log-normal training noise levels,
//! input/output preconditioning and a deterministic Heun sampler.

mod encoder;
mod nn;

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::json_error;
use crate::table::{Table, TableError};
use crate::{derive_seed, seeded_rng};

pub use encoder::{Codec, Encoder};
pub use nn::{Grads, Layer, Mlp, RmsProp};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("need at least 2 rows to fit an encoder, got {0}")]
    TooFewRows(usize),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (loss {loss}, lr {lr}, batch {batch})")]
    Diverged {
        epoch: usize,
        loss: f64,
        lr: f64,
        batch: usize,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub sampler_steps: usize,
    pub seed: u64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_data: f64,
    /// Mean and std of `ln σ` during training.
    pub p_mean: f64,
    pub p_std: f64,
    /// Step-spacing exponent of the sampler.
    pub rho: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            hidden_width: 256,
            hidden_layers: 3,
            sampler_steps: 50,
            seed: 0,
            sigma_min: 0.002,
            sigma_max: 80.0,
            sigma_data: 1.0,
            p_mean: -1.2,
            p_std: 1.2,
            rho: 7.0,
        }
    }
}

impl GenConfig {
    pub fn check(&self) -> Result<(), GenError> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("learning_rate", self.learning_rate),
            ("hidden_width", self.hidden_width as f64),
            ("hidden_layers", self.hidden_layers as f64),
            ("sampler_steps", self.sampler_steps as f64),
            ("sigma_min", self.sigma_min),
            ("sigma_data", self.sigma_data),
            ("p_std", self.p_std),
            ("rho", self.rho),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(GenError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sigma_max <= self.sigma_min {
            return Err(GenError::Config("sigma_max must exceed sigma_min".into()));
        }
        Ok(())
    }
}

/// EDM preconditioning coefficients `(c_skip, c_out, c_in, c_noise)`.
pub fn precondition(sigma: f64, sigma_data: f64) -> (f64, f64, f64, f64) {
    let s2 = sigma * sigma + sigma_data * sigma_data;
    (
        sigma_data * sigma_data / s2,
        sigma * sigma_data / s2.sqrt(),
        1.0 / s2.sqrt(),
        sigma.ln() / 4.0,
    )
}

fn net_input(x_noisy: &Array2<f64>, sigmas: &[f64], sigma_data: f64) -> Array2<f64> {
    let (n, d) = x_noisy.dim();
    let mut input = Array2::zeros((n, d + 1));
    for r in 0..n {
        let (_, _, c_in, c_noise) = precondition(sigmas[r], sigma_data);
        for c in 0..d {
            input[[r, c]] = c_in * x_noisy[[r, c]];
        }
        input[[r, d]] = c_noise;
    }
    input
}

/// Denoising loss on one batch and its parameter gradient. The network is
/// trained to predict `(x − c_skip·(x + n)) / c_out`, which equals the EDM
/// loss with its standard weighting.
pub fn loss_and_grad(net: &Mlp, x: &Array2<f64>, sigmas: &[f64], noise: &Array2<f64>, sigma_data: f64) -> (f64, Grads) {
    let (n, d) = x.dim();
    let x_noisy = x + noise;
    let input = net_input(&x_noisy, sigmas, sigma_data);
    let (out, trace) = net.forward_traced(&input);
    let mut grad = Array2::zeros((n, d));
    let mut loss = 0.0;
    let scale = 1.0 / (n * d) as f64;
    for r in 0..n {
        let (c_skip, c_out, _, _) = precondition(sigmas[r], sigma_data);
        for c in 0..d {
            let target = (x[[r, c]] - c_skip * x_noisy[[r, c]]) / c_out;
            let diff = out[[r, c]] - target;
            loss += diff * diff * scale;
            grad[[r, c]] = 2.0 * diff * scale;
        }
    }
    (loss, net.backward(&trace, &grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    pub config: GenConfig,
    pub encoder: Encoder,
    /// `None` when every column is constant.
    pub net: Option<Mlp>,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Fits the denoiser on the encoded table. Deterministic in `config.seed`.
pub fn train(table: &Table, encoder: &Encoder, config: &GenConfig) -> Result<DiffusionModel, GenError> {
    config.check()?;
    let x = encoder.encode(table)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GenError::Schema("encoded table has non-finite values".into()));
    }
    let d = encoder.dim();
    if d == 0 {
        return Ok(DiffusionModel {
            config: config.clone(),
            encoder: encoder.clone(),
            net: None,
            loss_curve: Vec::new(),
        });
    }
    let mut rng = seeded_rng(derive_seed(config.seed, "train"));
    let mut dims = vec![d + 1];
    dims.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
    dims.push(d);
    let mut net = Mlp::new(&dims, &mut rng);
    let mut opt = RmsProp::new(net.n_params());
    let n = x.nrows();
    let batch = config.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = (config.epochs * steps_per_epoch) as f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let sigmas: Vec<f64> = (0..chunk.len())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (config.p_mean + config.p_std * z).exp()
                })
                .collect();
            let noise = Array2::from_shape_fn(xb.dim(), |(r, _)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sigmas[r]
            });
            let (loss, grads) = loss_and_grad(&net, &xb, &sigmas, &noise, config.sigma_data);
            // Linear decay to a tenth of the base rate.
            let lr = config.learning_rate * (1.0 - 0.9 * step as f64 / total_steps);
            if !loss.is_finite() {
                return Err(GenError::Diverged {
                    epoch,
                    loss,
                    lr,
                    batch,
                });
            }
            opt.step(&mut net, &grads, lr);
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
        }
        loss_curve.push(epoch_loss / n as f64);
    }
    Ok(DiffusionModel {
        config: config.clone(),
        encoder: encoder.clone(),
        net: Some(net),
        loss_curve,
    })
}

impl DiffusionModel {
    /// Preconditioned denoiser `D(x; σ)`.
    fn denoise(&self, net: &Mlp, x: &Array2<f64>, sigma: f64) -> Array2<f64> {
        let sd = self.config.sigma_data;
        let sigmas = vec![sigma; x.nrows()];
        let f = net.forward(&net_input(x, &sigmas, sd));
        let (c_skip, c_out, _, _) = precondition(sigma, sd);
        x * c_skip + f * c_out
    }

    /// Noise levels from `σ_max` down to `σ_min`, then 0.
    pub fn schedule(&self, steps: usize) -> Vec<f64> {
        let c = &self.config;
        let (lo, hi) = (c.sigma_min.powf(1.0 / c.rho), c.sigma_max.powf(1.0 / c.rho));
        let mut t: Vec<f64> = (0..steps)
            .map(|i| {
                let frac = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 0.0 };
                (hi + frac * (lo - hi)).powf(c.rho)
            })
            .collect();
        t.push(0.0);
        t
    }

    /// Encoded samples from the deterministic Heun sampler.
    pub fn sample_encoded(&self, n: usize, seed: u64, steps: usize) -> Array2<f64> {
        let d = self.encoder.dim();
        let Some(net) = &self.net else {
            return Array2::zeros((n, d));
        };
        let mut rng = seeded_rng(derive_seed(seed, "sample"));
        let t = self.schedule(steps);
        let mut x = Array2::from_shape_fn((n, d), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * t[0]
        });
        for i in 0..steps {
            let (ti, tn) = (t[i], t[i + 1]);
            let slope = (&x - &self.denoise(net, &x, ti)) / ti;
            let euler = &x + &(&slope * (tn - ti));
            x = if tn > 0.0 {
                let slope2 = (&euler - &self.denoise(net, &euler, tn)) / tn;
                &x + &((slope + slope2) * (0.5 * (tn - ti)))
            } else {
                euler
            };
        }
        x
    }

    /// Samples `n` rows of the compressed table.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Table, GenError> {
        self.sample_with_steps(n, seed, self.config.sampler_steps)
    }

    pub fn sample_with_steps(&self, n: usize, seed: u64, steps: usize) -> Result<Table, GenError> {
        if n == 0 || steps == 0 {
            return Err(GenError::Config("sample size and step count must be positive".into()));
        }
        self.encoder.decode(&self.sample_encoded(n, seed, steps))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GenError> {
        let model: DiffusionModel =
            serde_json::from_str(text).map_err(|e| GenError::Checkpoint(json_error(text, &e).to_string()))?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<(), GenError> {
        self.config.check()?;
        if self.encoder.metas.len() != self.encoder.codecs.len() {
            return Err(GenError::Checkpoint("encoder metas and codecs differ in length".into()));
        }
        let d = self.encoder.dim();
        if let Some(net) = &self.net {
            if net.layers.is_empty() || net.input_dim() != d + 1 || net.output_dim() != d {
                return Err(GenError::Checkpoint("network shape does not match the encoder".into()));
            }
            for pair in net.layers.windows(2) {
                if pair[0].outputs != pair[1].inputs {
                    return Err(GenError::Checkpoint("inconsistent layer widths".into()));
                }
            }
            for l in &net.layers {
                if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                    return Err(GenError::Checkpoint("layer parameter count mismatch".into()));
                }
            }
        } else if d != 0 {
            return Err(GenError::Checkpoint("missing network".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), GenError> {
        std::fs::write(path, self.to_json()).map_err(|source| GenError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path).map_err(|source| GenError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Baseline that resamples every column independently from its own
/// empirical distribution: marginals survive, joint structure does not.
pub fn independent_sample(table: &Table, n: usize, seed: u64) -> Result<Table, GenError> {
    let m = table.n_rows();
    if m == 0 {
        return Err(GenError::TooFewRows(0));
    }
    let mut rng = seeded_rng(derive_seed(seed, "independent"));
    let columns = table
        .columns()
        .iter()
        .map(|c| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
            c.take(&idx)
        })
        .collect();
    Ok(Table::new(columns)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Column, ColumnKind, ColumnMeta, Value};

    fn small_config() -> GenConfig {
        GenConfig {
            epochs: 5,
            batch_size: 64,
            hidden_width: 32,
            hidden_layers: 2,
            sampler_steps: 10,
            ..GenConfig::default()
        }
    }

    fn toy_table(n: usize) -> Table {
        let mut rng = seeded_rng(3);
        let a: Vec<Option<f64>> = (0..n).map(|_| Some(rng.random_range(0.0..10.0))).collect();
        let c: Vec<Option<&str>> = a
            .iter()
            .map(|x| Some(if x.unwrap() > 5.0 { "hi" } else { "lo" }))
            .collect();
        Table::new(vec![
            Column::numeric(ColumnMeta::new("a", "", ColumnKind::Numeric), a),
            Column::categorical(ColumnMeta::new("c", "", ColumnKind::Categorical), &c),
        ])
        .unwrap()
    }

    #[test]
    fn preconditioning_identities() {
        for sigma in [0.002, 0.5, 1.0, 80.0] {
            let (c_skip, c_out, c_in, _) = precondition(sigma, 1.0);
            // Unit-variance data and noise give unit-variance network input.
            assert!((c_in * c_in * (1.0 + sigma * sigma) - 1.0).abs() < 1e-12);
            assert!((c_out * c_out - c_skip * sigma * sigma).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_endpoints() {
        let t = toy_table(64);
        let enc = Encoder::fit(&t, &[]).unwrap();
        let model = train(&t, &enc, &GenConfig { epochs: 1, ..small_config() }).unwrap();
        let s = model.schedule(50);
        assert_eq!(s.len(), 51);
        assert!((s[0] - 80.0).abs() < 1e-9);
        assert!((s[49] - 0.002).abs() < 1e-12);
        assert_eq!(s[50], 0.0);
        assert!(s.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let t = toy_table(400);
        let enc = Encoder::fit(&t, &[]).unwrap();
        let cfg = GenConfig { epochs: 20, ..small_config() };
        let a = train(&t, &enc, &cfg).unwrap();
        let b = train(&t, &enc, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.loss_curve.last().unwrap() < a.loss_curve.first().unwrap());
        let s1 = a.sample(100, 9).unwrap();
        let s2 = a.sample(100, 9).unwrap();
        assert_eq!(s1.to_csv_string(), s2.to_csv_string());
        for r in 0..100 {
            assert!(["hi", "lo"].contains(&s1.value(r, 1).as_category().unwrap()));
            assert!(s1.value(r, 0).as_f64().unwrap().is_finite());
        }
    }

    #[test]
    fn output_shape_matches_data_dim() {
        let t = toy_table(50);
        let enc = Encoder::fit(&t, &[]).unwrap();
        let model = train(&t, &enc, &GenConfig { epochs: 1, ..small_config() }).unwrap();
        let net = model.net.as_ref().unwrap();
        for n in [1, 13] {
            let out = net.forward(&Array2::zeros((n, enc.dim() + 1)));
            assert_eq!(out.dim(), (n, enc.dim()));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let t = toy_table(50);
        let enc = Encoder::fit(&t, &[]).unwrap();
        let model = train(&t, &enc, &GenConfig { epochs: 1, ..small_config() }).unwrap();
        let back = DiffusionModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert!(DiffusionModel::from_json("{\"config\":").is_err());
    }

    #[test]
    fn bad_config_is_rejected() {
        let t = toy_table(10);
        let enc = Encoder::fit(&t, &[]).unwrap();
        assert!(train(&t, &enc, &GenConfig { epochs: 0, ..small_config() }).is_err());
        assert!(train(&t, &enc, &GenConfig { learning_rate: f64::NAN, ..small_config() }).is_err());
    }

    #[test]
    fn independent_sampler_keeps_marginal_support() {
        let t = toy_table(30);
        let s = independent_sample(&t, 200, 4).unwrap();
        assert_eq!(s.n_rows(), 200);
        let real: Vec<Value> = t.columns()[0].values();
        for v in s.columns()[0].values() {
            assert!(real.contains(&v));
        }
        assert_eq!(
            independent_sample(&t, 50, 4).unwrap().to_csv_string(),
            independent_sample(&t, 50, 4).unwrap().to_csv_string()
        );
    }
}
