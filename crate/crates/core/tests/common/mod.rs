//! Independent reference implementations used by several test targets.
#![allow(dead_code)]

use gaitopt_core::{ContextVector, KernelConfig};
use nalgebra::{DMatrix, DVector};

fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Product Matérn 5/2 covariance written out from scratch.
pub fn reference_kernel(a: &[f64], b: &[f64], cfg: &KernelConfig) -> f64 {
    let p = cfg.lengthscales.len() - cfg.context_dims;
    let dist = |lo: usize, hi: usize| {
        (lo..hi)
            .map(|d| ((a[d] - b[d]) / cfg.lengthscales[d]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    cfg.signal_variance * matern52(dist(0, p)) * matern52(dist(p, cfg.lengthscales.len()))
}

/// GP posterior by explicit inversion of the noisy covariance matrix.
pub struct DenseOracle {
    inputs: Vec<Vec<f64>>,
    cfg: KernelConfig,
    k_inv: DMatrix<f64>,
    y: DVector<f64>,
    mean: f64,
    scale: f64,
}

impl DenseOracle {
    pub fn new(inputs: &[Vec<f64>], targets: &[f64], cfg: &KernelConfig, jitter: f64) -> Self {
        let n = inputs.len();
        let mean = targets.iter().sum::<f64>() / n as f64;
        let sd = (targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let scale = if sd > 1e-12 { sd } else { 1.0 };
        let k = DMatrix::from_fn(n, n, |i, j| {
            reference_kernel(&inputs[i], &inputs[j], cfg)
                + if i == j {
                    cfg.noise_variance + jitter
                } else {
                    0.0
                }
        });
        Self {
            inputs: inputs.to_vec(),
            cfg: cfg.clone(),
            k_inv: k.try_inverse().expect("covariance invertible"),
            y: DVector::from_iterator(n, targets.iter().map(|t| (t - mean) / scale)),
            mean,
            scale,
        }
    }

    pub fn posterior(&self, q: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|x| reference_kernel(q, x, &self.cfg)),
        );
        let m = (ks.transpose() * &self.k_inv * &self.y)[(0, 0)];
        let v = reference_kernel(q, q, &self.cfg) - (ks.transpose() * &self.k_inv * &ks)[(0, 0)];
        (self.mean + self.scale * m, self.scale * v.max(0.0).sqrt())
    }
}

/// Context count applying both band inequalities directly.
pub fn brute_force_count(history: &[ContextVector], current: &ContextVector) -> usize {
    let mut n = 0;
    for c in history {
        let load_ok = c.load >= current.load - 0.2 * 40.0 && c.load <= current.load + 0.2 * 40.0;
        let slope_ok = c.slope >= current.slope - 0.1 * 0.5 && c.slope <= current.slope + 0.1 * 0.5;
        if load_ok && slope_ok {
            n += 1;
        }
    }
    n
}

/// Relative error with an absolute fallback for values near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
