use serde::{Deserialize, Serialize};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Product Matérn 5/2 kernel over `(parameters, context)` inputs.
///
/// The first `lengthscales.len() - context_dims` coordinates are parameters,
/// the trailing `context_dims` coordinates are context. Each block gets its
/// own ARD Matérn 5/2 factor; the product is scaled by `signal_variance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub lengthscales: Vec<f64>,
    pub context_dims: usize,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

/// Smallest admissible observation noise variance.
pub const NOISE_FLOOR: f64 = 1e-6;

impl KernelConfig {
    pub fn new(param_dims: usize, context_dims: usize) -> Self {
        Self {
            lengthscales: vec![0.3; param_dims + context_dims],
            context_dims,
            signal_variance: 1.0,
            noise_variance: 0.05,
        }
    }

    pub fn dims(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn param_dims(&self) -> usize {
        self.dims() - self.context_dims
    }

    pub fn is_valid(&self) -> bool {
        self.context_dims <= self.dims()
            && self.lengthscales.iter().all(|l| l.is_finite() && *l > 0.0)
            && self.signal_variance.is_finite()
            && self.signal_variance > 0.0
            && self.noise_variance.is_finite()
            && self.noise_variance >= NOISE_FLOOR
    }
}

/// Matérn 5/2 correlation as a function of the scaled distance.
pub fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_distance(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `(k_param, k_context)` correlation factors.
pub(crate) fn factors(a: &[f64], b: &[f64], cfg: &KernelConfig) -> (f64, f64) {
    let p = cfg.param_dims();
    let kx = matern52(scaled_distance(&a[..p], &b[..p], &cfg.lengthscales[..p]));
    let kc = if cfg.context_dims == 0 {
        1.0
    } else {
        matern52(scaled_distance(&a[p..], &b[p..], &cfg.lengthscales[p..]))
    };
    (kx, kc)
}

/// Prior covariance between two normalized inputs (noise excluded).
pub fn kernel_eval(a: &[f64], b: &[f64], cfg: &KernelConfig) -> f64 {
    let (kx, kc) = factors(a, b, cfg);
    cfg.signal_variance * kx * kc
}

/// Derivative of one Matérn block with respect to `ln(lengthscale_d)` for every
/// dimension of the block, written into `out`.
pub(crate) fn block_log_lengthscale_grad(a: &[f64], b: &[f64], ls: &[f64], out: &mut [f64]) {
    let r = scaled_distance(a, b, ls);
    let s = SQRT5 * r;
    // dk/dln(l_d) = 5/3 (1 + sqrt5 r) exp(-sqrt5 r) (delta_d / l_d)^2
    let common = 5.0 / 3.0 * (1.0 + s) * (-s).exp();
    for (d, o) in out.iter_mut().enumerate() {
        let q = (a[d] - b[d]) / ls[d];
        *o = common * q * q;
    }
}
