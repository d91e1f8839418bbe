//! Small dense-layer helpers shared by the encoder and the probes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-a..=a));
        Dense {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    /// Row-wise `x W^T + b` for an `n x in` batch.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }

    pub fn forward_vec(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    /// `self -= lr * grad`
    pub fn step(&mut self, grad: &Dense, lr: f64) {
        self.weight.scaled_add(-lr, &grad.weight);
        self.bias.scaled_add(-lr, &grad.bias);
    }

    pub fn add_assign(&mut self, other: &Dense) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }

    pub fn scale(&mut self, factor: f64) {
        self.weight *= factor;
        self.bias *= factor;
    }

    /// Accumulate the parameter gradient for a batch and return the input gradient.
    pub fn backward(
        &self,
        input: ArrayView2<'_, f64>,
        d_out: ArrayView2<'_, f64>,
        grad: &mut Dense,
    ) -> Array2<f64> {
        grad.weight += &d_out.t().dot(&input);
        grad.bias += &d_out.sum_axis(Axis(0));
        d_out.dot(&self.weight)
    }
}

pub fn relu_inplace(z: &mut Array2<f64>) {
    z.mapv_inplace(|v| v.max(0.0));
}

/// Zero the entries of `grad` whose pre-activation was not positive.
pub fn relu_backward_inplace(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    grad.zip_mut_with(pre, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Numerically stable softmax of a logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]`, computed with log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}
