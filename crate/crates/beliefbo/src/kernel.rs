//! Stationary ARD kernels and GP hyperparameters.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    SquaredExponential,
    Matern52,
}

/// Kernel hyperparameters plus observation noise and constant mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    /// Per-dimension ARD lengthscales, strictly positive.
    pub lengthscales: Array1<f64>,
    /// Signal variance `sigma_f^2`.
    pub outputscale: f64,
    /// Observation noise variance `sigma_eps^2`.
    pub noise: f64,
    /// Constant mean on the standardized output scale.
    pub mean: f64,
    pub kernel: KernelKind,
}

impl GpHyperparams {
    pub fn new(
        lengthscales: Array1<f64>,
        outputscale: f64,
        noise: f64,
        mean: f64,
        kernel: KernelKind,
    ) -> Result<Self> {
        if lengthscales.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter("lengthscales must be > 0".into()));
        }
        if !(outputscale > 0.0) || !(noise > 0.0) {
            return Err(Error::InvalidParameter(
                "outputscale and noise must be > 0".into(),
            ));
        }
        if !mean.is_finite() {
            return Err(Error::InvalidParameter("mean must be finite".into()));
        }
        Ok(Self {
            lengthscales,
            outputscale,
            noise,
            mean,
            kernel,
        })
    }

    /// Hyperprior medians: unit lengthscales and scales, zero mean.
    pub fn median(dim: usize, kernel: KernelKind) -> Self {
        Self {
            lengthscales: Array1::ones(dim),
            outputscale: 1.0,
            noise: 1.0,
            mean: 0.0,
            kernel,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

fn scaled_sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>, ls: &Array1<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let d = (x[i] - y[i]) / ls[i];
        s += d * d;
    }
    s
}

fn corr(kind: KernelKind, r2: f64) -> f64 {
    match kind {
        KernelKind::SquaredExponential => (-0.5 * r2).exp(),
        KernelKind::Matern52 => {
            let r = r2.sqrt();
            (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * (-SQRT5 * r).exp()
        }
    }
}

/// Covariance between two points.
pub fn kernel_eval(x: ArrayView1<f64>, y: ArrayView1<f64>, hp: &GpHyperparams) -> Result<f64> {
    if x.len() != hp.dim() || y.len() != hp.dim() {
        return Err(Error::DimensionMismatch {
            expected: hp.dim(),
            got: if x.len() != hp.dim() { x.len() } else { y.len() },
        });
    }
    Ok(hp.outputscale * corr(hp.kernel, scaled_sq_dist(x, y, &hp.lengthscales)))
}

/// Symmetric Gram matrix `K(X, X)` without noise.
pub fn gram(x: ArrayView2<f64>, hp: &GpHyperparams) -> Array2<f64> {
    let n = x.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = hp.outputscale;
        for j in (i + 1)..n {
            let v = hp.outputscale
                * corr(
                    hp.kernel,
                    scaled_sq_dist(x.row(i), x.row(j), &hp.lengthscales),
                );
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Cross-covariance `K(A, B)` with `A: a×d`, `B: b×d`.
pub fn cross(a: ArrayView2<f64>, b: ArrayView2<f64>, hp: &GpHyperparams) -> Array2<f64> {
    let mut k = Array2::zeros((a.nrows(), b.nrows()));
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            k[[i, j]] = hp.outputscale
                * corr(
                    hp.kernel,
                    scaled_sq_dist(a.row(i), b.row(j), &hp.lengthscales),
                );
        }
    }
    k
}

/// Gradient of `k(x, y)` with respect to `x`.
pub fn kernel_grad_x(
    x: ArrayView1<f64>,
    y: ArrayView1<f64>,
    hp: &GpHyperparams,
) -> Array1<f64> {
    let r2 = scaled_sq_dist(x, y, &hp.lengthscales);
    let mut g = Array1::zeros(x.len());
    match hp.kernel {
        KernelKind::SquaredExponential => {
            let k = hp.outputscale * (-0.5 * r2).exp();
            for i in 0..x.len() {
                let ls2 = hp.lengthscales[i] * hp.lengthscales[i];
                g[i] = -k * (x[i] - y[i]) / ls2;
            }
        }
        KernelKind::Matern52 => {
            // dk/dx = -(5/3) * sigma_f^2 * exp(-sqrt5 r) * (1 + sqrt5 r) * (x-y)/l^2
            let r = r2.sqrt();
            let c = -(5.0 / 3.0) * hp.outputscale * (-SQRT5 * r).exp() * (1.0 + SQRT5 * r);
            for i in 0..x.len() {
                let ls2 = hp.lengthscales[i] * hp.lengthscales[i];
                g[i] = c * (x[i] - y[i]) / ls2;
            }
        }
    }
    g
}

/// Partial derivatives of the Gram matrix with respect to `log lengthscale_i`
/// and `log outputscale`, used by the evidence gradient.
pub(crate) fn gram_grad_log_ls(
    x: ArrayView2<f64>,
    hp: &GpHyperparams,
    dim: usize,
) -> Array2<f64> {
    let n = x.nrows();
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let r2 = scaled_sq_dist(x.row(i), x.row(j), &hp.lengthscales);
            let di = (x[[i, dim]] - x[[j, dim]]) / hp.lengthscales[dim];
            let v = match hp.kernel {
                KernelKind::SquaredExponential => {
                    hp.outputscale * (-0.5 * r2).exp() * di * di
                }
                KernelKind::Matern52 => {
                    let r = r2.sqrt();
                    hp.outputscale * (5.0 / 3.0) * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp() * di * di
                }
            };
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}
