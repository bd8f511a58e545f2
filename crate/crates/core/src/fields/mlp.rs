//! Small fully connected networks with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
}

/// Dense layer, `weight` is row-major `[out_dim][in_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    touched: bool,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            touched: false,
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weight.chunks_exact(self.in_dim).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi)
        }));
    }

    pub fn touched(&self) -> bool {
        self.touched
    }

    pub(crate) fn mark_touched(&mut self, touched: bool) {
        self.touched |= touched;
    }

    pub fn clear(&mut self) {
        self.weight.iter_mut().for_each(|x| *x = 0.0);
        self.bias.iter_mut().for_each(|x| *x = 0.0);
        self.touched = false;
    }
}

/// ReLU hidden layers followed by a configurable output activation.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyMlp {
    pub layers: Vec<Dense>,
    pub output: Activation,
}

/// Layer inputs of one forward pass plus the final output.
#[derive(Clone, Debug, Default)]
pub struct MlpTrace {
    activations: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl TinyMlp {
    /// `widths` lists every layer width from input to output.
    pub fn new<R: Rng>(widths: &[usize], output: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| {
                let mut layer = Dense::zeros(w[0], w[1]);
                let bound = 1.0 / (w[0] as f64).sqrt();
                layer.weight.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
                layer.bias.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
                layer
            })
            .collect();
        Self { layers, output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.layers.iter_mut().for_each(Dense::clear);
        z
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_traced(x).0
    }

    pub fn forward_traced(&self, x: &[f64]) -> (Vec<f64>, MlpTrace) {
        assert_eq!(x.len(), self.input_dim(), "MLP input width mismatch");
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.apply(activations.last().unwrap(), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if self.output == Activation::Sigmoid {
                out.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            activations.push(out);
        }
        (activations.last().unwrap().clone(), MlpTrace { activations })
    }

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, trace: &MlpTrace, d_out: &[f64], grads: &mut TinyMlp) -> Vec<f64> {
        let n = self.layers.len();
        let mut delta: Vec<f64> = match self.output {
            Activation::Identity => d_out.to_vec(),
            Activation::Sigmoid => d_out
                .iter()
                .zip(&trace.activations[n])
                .map(|(g, y)| g * y * (1.0 - y))
                .collect(),
        };
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let input = &trace.activations[i];
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                row.iter_mut().zip(input).for_each(|(w, x)| *w += d * x);
            }
            g.touched = true;
            let mut d_in = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                    d_in.iter_mut().zip(row).for_each(|(di, w)| *di += d * w);
                }
            }
            if i > 0 {
                // ReLU mask from the post-activation values.
                d_in.iter_mut()
                    .zip(input)
                    .for_each(|(di, a)| if *a <= 0.0 { *di = 0.0 });
            }
            delta = d_in;
        }
        delta
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}
