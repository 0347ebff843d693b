//! Gaussian-process regression over normalized `(parameters, context)` inputs.
//!
//! Targets are standardized per fit. Hyperparameters (ARD lengthscales,
//! signal variance, noise variance) maximize the log marginal likelihood by
//! L-BFGS in a bounded log parametrization, started from the supplied
//! configuration and from a number of random restarts.

mod kernel;
mod lbfgs;

pub use kernel::{kernel_eval, matern52, KernelConfig, NOISE_FLOOR};

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use kernel::{block_log_lengthscale_grad, factors};

/// Diagonal jitter ladder tried on top of the noise variance.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Random restarts in addition to the start from the supplied hyperparameters.
    pub restarts: usize,
    pub max_iterations: usize,
    pub lengthscale_bounds: (f64, f64),
    /// Lengthscale bounds of the context block.
    pub context_lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    /// Equal bounds pin the noise variance.
    pub noise_variance_bounds: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 60,
            lengthscale_bounds: (0.2, 10.0),
            context_lengthscale_bounds: (0.5, 10.0),
            signal_variance_bounds: (0.05, 20.0),
            noise_variance_bounds: (1e-2, 0.5),
        }
    }
}

/// A conditioned Gaussian process.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    standardized: DVector<f64>,
    target_mean: f64,
    target_scale: f64,
    cfg: KernelConfig,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    log_likelihood: f64,
}

fn standardize(targets: &[f64]) -> (DVector<f64>, f64, f64) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let z = DVector::from_iterator(targets.len(), targets.iter().map(|y| (y - mean) / scale));
    (z, mean, scale)
}

/// Signal covariance matrix (no noise) of `inputs`.
fn signal_matrix(inputs: &[Vec<f64>], cfg: &KernelConfig) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_eval(&inputs[i], &inputs[j], cfg);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn factorize(signal: &DMatrix<f64>, noise: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    JITTER_LADDER.iter().find_map(|&jitter| {
        let mut k = signal.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += noise + jitter;
        }
        k.cholesky().map(|c| (c, jitter))
    })
}

fn log_likelihood(chol: &Cholesky<f64, Dyn>, alpha: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * y.dot(alpha) - log_det - 0.5 * n * (2.0 * PI).ln()
}

fn validate_data(inputs: &[Vec<f64>], targets: &[f64], cfg: &KernelConfig) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::GpFit("no training data".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::GpFit("inputs and targets differ in length".into()));
    }
    if !cfg.is_valid() {
        return Err(Error::GpFit("invalid kernel configuration".into()));
    }
    if inputs
        .iter()
        .any(|x| x.len() != cfg.dims() || x.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::GpFit(
            "inputs must be finite with the kernel's dimension".into(),
        ));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::GpFit("targets must be finite".into()));
    }
    Ok(())
}

/// Hyperparameters in log space, in the order `[ln l_1.., ln s2_f, ln s2_n]`.
fn to_log(cfg: &KernelConfig) -> Vec<f64> {
    let mut v: Vec<f64> = cfg.lengthscales.iter().map(|l| l.ln()).collect();
    v.push(cfg.signal_variance.ln());
    v.push(cfg.noise_variance.ln());
    v
}

fn from_log(template: &KernelConfig, v: &[f64]) -> KernelConfig {
    let d = template.dims();
    KernelConfig {
        lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
        context_dims: template.context_dims,
        signal_variance: v[d].exp(),
        noise_variance: v[d + 1].exp().max(NOISE_FLOOR),
    }
}

/// Log marginal likelihood and its gradient with respect to the log hyperparameters.
fn likelihood_and_gradient(
    inputs: &[Vec<f64>],
    y: &DVector<f64>,
    cfg: &KernelConfig,
) -> Option<(f64, Vec<f64>)> {
    let n = inputs.len();
    let d = cfg.dims();
    let p = cfg.param_dims();
    let signal = signal_matrix(inputs, cfg);
    let mut k = signal.clone();
    for i in 0..n {
        k[(i, i)] += cfg.noise_variance;
    }
    let chol = k.cholesky()?;
    let alpha = chol.solve(y);
    let lml = log_likelihood(&chol, &alpha, y);
    let k_inv = chol.inverse();
    // W = alpha alpha^T - K^-1
    let w = &alpha * alpha.transpose() - k_inv;

    let mut grad = vec![0.0; d + 2];
    let mut block = vec![0.0; d];
    for i in 0..n {
        for j in 0..i {
            let (kx, kc) = factors(&inputs[i], &inputs[j], cfg);
            let (a, b) = (&inputs[i], &inputs[j]);
            block_log_lengthscale_grad(&a[..p], &b[..p], &cfg.lengthscales[..p], &mut block[..p]);
            if cfg.context_dims > 0 {
                block_log_lengthscale_grad(
                    &a[p..],
                    &b[p..],
                    &cfg.lengthscales[p..],
                    &mut block[p..],
                );
            }
            // symmetric pair counted twice, times the 1/2 of the gradient formula
            let wij = w[(i, j)];
            for (dim, g) in block.iter().enumerate() {
                let other = if dim < p { kc } else { kx };
                grad[dim] += wij * cfg.signal_variance * other * g;
            }
        }
    }
    let mut trace_w = 0.0;
    let mut signal_term = 0.0;
    for i in 0..n {
        for j in 0..n {
            signal_term += w[(i, j)] * signal[(i, j)];
        }
        trace_w += w[(i, i)];
    }
    grad[d] = 0.5 * signal_term;
    grad[d + 1] = 0.5 * cfg.noise_variance * trace_w;
    Some((lml, grad))
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    fn new(cfg: &KernelConfig, opts: &FitOptions) -> Self {
        let (p, c) = (opts.lengthscale_bounds, opts.context_lengthscale_bounds);
        let block = |d: usize| if d < cfg.param_dims() { p } else { c };
        let mut lo: Vec<f64> = (0..cfg.dims()).map(|d| block(d).0.ln()).collect();
        let mut hi: Vec<f64> = (0..cfg.dims()).map(|d| block(d).1.ln()).collect();
        lo.push(opts.signal_variance_bounds.0.ln());
        hi.push(opts.signal_variance_bounds.1.ln());
        lo.push(opts.noise_variance_bounds.0.max(NOISE_FLOOR).ln());
        hi.push(opts.noise_variance_bounds.1.max(NOISE_FLOOR).ln());
        Self { lo, hi }
    }

    fn free(&self) -> Vec<usize> {
        (0..self.lo.len())
            .filter(|&i| self.hi[i] > self.lo[i])
            .collect()
    }

    fn to_unconstrained(&self, i: usize, v: f64) -> f64 {
        let s = ((v - self.lo[i]) / (self.hi[i] - self.lo[i])).clamp(1e-6, 1.0 - 1e-6);
        (s / (1.0 - s)).ln()
    }

    fn from_unconstrained(&self, i: usize, u: f64) -> (f64, f64) {
        let s = sigmoid(u);
        let width = self.hi[i] - self.lo[i];
        (self.lo[i] + width * s, width * s * (1.0 - s))
    }
}

impl GpModel {
    /// Conditions on the data with fixed hyperparameters.
    pub fn condition(inputs: Vec<Vec<f64>>, targets: Vec<f64>, cfg: KernelConfig) -> Result<Self> {
        validate_data(&inputs, &targets, &cfg)?;
        let (standardized, target_mean, target_scale) = standardize(&targets);
        let signal = signal_matrix(&inputs, &cfg);
        let (chol, jitter) = factorize(&signal, cfg.noise_variance).ok_or_else(|| {
            Error::GpFit("covariance not positive definite after maximum jitter".into())
        })?;
        let alpha = chol.solve(&standardized);
        let log_likelihood = log_likelihood(&chol, &alpha, &standardized);
        Ok(Self {
            inputs,
            targets,
            standardized,
            target_mean,
            target_scale,
            cfg,
            chol,
            alpha,
            jitter,
            log_likelihood,
        })
    }

    /// Fits hyperparameters by maximizing the log marginal likelihood, then conditions.
    pub fn fit(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        initial: &KernelConfig,
        opts: &FitOptions,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        validate_data(&inputs, &targets, initial)?;
        let (y, _, _) = standardize(&targets);
        let bounds = Bounds::new(initial, opts);
        let free = bounds.free();

        // pinned coordinates come from the bounds, free ones from the start point
        let pin = |mut v: Vec<f64>| {
            for i in 0..v.len() {
                v[i] = v[i].clamp(bounds.lo[i], bounds.hi[i]);
            }
            v
        };
        let clamped = from_log(initial, &pin(to_log(initial)));
        let mut starts = vec![to_log(&clamped)];
        for _ in 0..opts.restarts {
            let mut v = to_log(initial);
            let d = initial.dims();
            for (i, x) in v.iter_mut().enumerate() {
                let (lo, hi) = if i < d {
                    (0.1f64.ln(), 2.0f64.ln())
                } else if i == d {
                    (0.5f64.ln(), 2.0f64.ln())
                } else {
                    (1e-4f64.ln(), 1e-1f64.ln())
                };
                *x = rng.random_range(lo..hi);
            }
            starts.push(pin(v));
        }

        let mut best: Option<(Vec<f64>, f64)> = None;
        for start in starts {
            let base = start.clone();
            let mut objective = |u: &[f64]| {
                let mut v = base.clone();
                let mut chain = vec![0.0; free.len()];
                for (k, &i) in free.iter().enumerate() {
                    let (val, dv) = bounds.from_unconstrained(i, u[k]);
                    v[i] = val;
                    chain[k] = dv;
                }
                let cfg = from_log(initial, &v);
                let (lml, grad) = likelihood_and_gradient(&inputs, &y, &cfg)?;
                let g = free
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| -grad[i] * chain[k])
                    .collect();
                Some((-lml, g))
            };
            let u0: Vec<f64> = free
                .iter()
                .map(|&i| bounds.to_unconstrained(i, start[i]))
                .collect();
            if let Some((u, f)) = lbfgs::minimize(&mut objective, u0, opts.max_iterations, 1e-6) {
                if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                    let mut v = start.clone();
                    for (k, &i) in free.iter().enumerate() {
                        v[i] = bounds.from_unconstrained(i, u[k]).0;
                    }
                    best = Some((v, f));
                }
            }
        }

        let initial_model = Self::condition(inputs.clone(), targets.clone(), clamped);
        match best {
            Some((v, _)) => {
                let fitted = Self::condition(inputs, targets, from_log(initial, &v));
                match (fitted, initial_model) {
                    (Ok(f), Ok(i)) if i.log_likelihood > f.log_likelihood => Ok(i),
                    (Ok(f), _) => Ok(f),
                    (Err(_), Ok(i)) => Ok(i),
                    (Err(e), Err(_)) => Err(e),
                }
            }
            None => initial_model,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Jitter added to the diagonal on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Posterior mean and standard deviation of the latent function, in target units.
    pub fn posterior(&self, query: &[f64]) -> (f64, f64) {
        let k_star = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|x| kernel_eval(query, x, &self.cfg)),
        );
        let mean = k_star.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .unwrap_or_else(|| DVector::zeros(k_star.len()));
        let prior = kernel_eval(query, query, &self.cfg);
        let var = (prior - v.norm_squared()).max(0.0);
        (
            self.target_mean + self.target_scale * mean,
            self.target_scale * var.sqrt(),
        )
    }

    /// Standardized training targets.
    pub fn standardized_targets(&self) -> &DVector<f64> {
        &self.standardized
    }
}
