//! Sinusoidal frequency encoding.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Maps each input coordinate `x` to `[x, sin(2^k π x), cos(2^k π x)]` for
/// `k = 0..L`. Layout: the raw input (optional), then for every frequency
/// all sines followed by all cosines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyEncoding {
    pub num_frequencies: usize,
    pub include_input: bool,
}

impl FrequencyEncoding {
    pub fn new(num_frequencies: usize, include_input: bool) -> Self {
        Self {
            num_frequencies,
            include_input,
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * (2 * self.num_frequencies + usize::from(self.include_input))
    }

    pub fn encode_into(&self, x: &[f64], out: &mut Vec<f64>) {
        if self.include_input {
            out.extend_from_slice(x);
        }
        for k in 0..self.num_frequencies {
            let freq = PI * (1u64 << k) as f64;
            out.extend(x.iter().map(|v| (freq * v).sin()));
            out.extend(x.iter().map(|v| (freq * v).cos()));
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim(x.len()));
        self.encode_into(x, &mut out);
        out
    }

    /// Row-major `[output_dim][input_dim]` Jacobian.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut jac = vec![0.0; self.output_dim(d) * d];
        let mut row = 0;
        if self.include_input {
            for i in 0..d {
                jac[(row + i) * d + i] = 1.0;
            }
            row += d;
        }
        for k in 0..self.num_frequencies {
            let freq = PI * (1u64 << k) as f64;
            for i in 0..d {
                jac[(row + i) * d + i] = freq * (freq * x[i]).cos();
                jac[(row + d + i) * d + i] = -freq * (freq * x[i]).sin();
            }
            row += 2 * d;
        }
        jac
    }
}
