//! Fully connected network with SiLU hidden activations and hand-written
//! backpropagation.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs × outputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn w(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.inputs, self.outputs), self.weights.clone()).expect("layer shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Trace {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `dims` lists layer widths from
    /// input to output.
    pub fn new(dims: &[usize], rng: &mut crate::Rng) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let limit = (6.0 / (i + o) as f64).sqrt();
                Layer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o).map(|_| rng.random_range(-limit..limit)).collect(),
                    bias: vec![0.0; o],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn matrices(&self) -> Vec<(Array2<f64>, Array1<f64>)> {
        self.layers
            .iter()
            .map(|l| (l.w(), Array1::from_vec(l.bias.clone())))
            .collect()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_traced(x).0
    }

    pub fn forward_traced(&self, x: &Array2<f64>) -> (Array2<f64>, Trace) {
        let mats = self.matrices();
        let last = mats.len() - 1;
        let mut trace = Trace {
            inputs: Vec::with_capacity(mats.len()),
            pre: Vec::with_capacity(last),
        };
        let mut h = x.clone();
        for (i, (w, b)) in mats.iter().enumerate() {
            let z = h.dot(w) + b;
            trace.inputs.push(h);
            if i == last {
                return (z, trace);
            }
            h = z.mapv(silu);
            trace.pre.push(z);
        }
        unreachable!("loop returns at the output layer")
    }

    /// Parameter gradients given the gradient of the loss w.r.t. the output.
    pub fn backward(&self, trace: &Trace, grad_out: &Array2<f64>) -> Grads {
        let mats = self.matrices();
        let n = mats.len();
        let mut gw = vec![Array2::zeros((0, 0)); n];
        let mut gb = vec![Array1::zeros(0); n];
        let mut g = grad_out.clone();
        for i in (0..n).rev() {
            gw[i] = trace.inputs[i].t().dot(&g);
            gb[i] = g.sum_axis(Axis(0));
            if i > 0 {
                let mut back = g.dot(&mats[i].0.t());
                back.zip_mut_with(&trace.pre[i - 1], |d, &z| *d *= silu_grad(z));
                g = back;
            }
        }
        Grads { weights: gw, bias: gb }
    }

    /// Flattened parameters, layer by layer (weights then bias).
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("parameter count");
            }
        }
    }
}

impl Grads {
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// RMSProp: per-parameter step scaled by a running RMS of past gradients,
/// no momentum term.
#[derive(Debug, Clone)]
pub struct RmsProp {
    decay: f64,
    eps: f64,
    mean_sq: Vec<f64>,
}

impl RmsProp {
    pub fn new(n_params: usize) -> Self {
        Self {
            decay: 0.99,
            eps: 1e-8,
            mean_sq: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads, lr: f64) {
        let mut k = 0;
        for (layer, (gw, gb)) in net.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
            let grads = gw.iter().chain(gb.iter());
            for (p, g) in layer.weights.iter_mut().chain(layer.bias.iter_mut()).zip(grads) {
                let v = &mut self.mean_sq[k];
                *v = self.decay * *v + (1.0 - self.decay) * g * g;
                *p -= lr * g / (v.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn shapes() {
        let net = Mlp::new(&[4, 8, 8, 3], &mut seeded_rng(1));
        assert_eq!(net.n_params(), 4 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
        for batch in [1, 7] {
            let y = net.forward(&Array2::zeros((batch, 4)));
            assert_eq!(y.dim(), (batch, 3));
        }
    }

    #[test]
    fn params_round_trip() {
        let mut net = Mlp::new(&[3, 5, 2], &mut seeded_rng(2));
        let p = net.params();
        let doubled: Vec<f64> = p.iter().map(|x| x * 2.0).collect();
        net.set_params(&doubled);
        assert_eq!(net.params(), doubled);
    }

    #[test]
    fn silu_derivative() {
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }
}
