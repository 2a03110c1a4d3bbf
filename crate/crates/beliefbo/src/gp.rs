//! Exact GP machinery: log evidence with hyperpriors, MAP fitting, and the
//! analytic posterior used as an oracle by the pathwise sampler.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{cross, gram, gram_grad_log_ls, GpHyperparams, KernelKind};
use crate::linalg::Cholesky;
use crate::rng;
use crate::space::Dataset;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Joint Gaussian over function values at a set of query points.
#[derive(Debug, Clone)]
pub struct PosteriorGaussian {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

impl PosteriorGaussian {
    pub fn std(&self) -> Array1<f64> {
        Array1::from_iter((0..self.mean.len()).map(|i| self.cov[[i, i]].max(0.0).sqrt()))
    }
}

/// Log marginal likelihood of the standardized outputs plus the log
/// hyperprior: LogNormal(0,1) on each lengthscale, the outputscale and the
/// noise, Normal(0,1) on the constant mean.
pub fn log_evidence(data: &Dataset, hp: &GpHyperparams) -> Result<f64> {
    Ok(lml(data, hp)? + log_hyperprior(hp))
}

fn lml(data: &Dataset, hp: &GpHyperparams) -> Result<f64> {
    let n = data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut a = gram(data.x().view(), hp);
    for i in 0..n {
        a[[i, i]] += hp.noise;
    }
    let ch = Cholesky::with_jitter(&a)?;
    let r = data.y_std() - hp.mean;
    let alpha = ch.solve_vec(r.view());
    Ok(-0.5 * r.dot(&alpha) - 0.5 * ch.log_det() - 0.5 * n as f64 * LN_2PI)
}

fn log_hyperprior(hp: &GpHyperparams) -> f64 {
    let lognormal = |v: f64| -> f64 {
        let lv = v.ln();
        -lv - 0.5 * lv * lv - 0.5 * LN_2PI
    };
    let mut lp = 0.0;
    for &l in hp.lengthscales.iter() {
        lp += lognormal(l);
    }
    lp += lognormal(hp.outputscale);
    lp += lognormal(hp.noise);
    lp += -0.5 * hp.mean * hp.mean - 0.5 * LN_2PI;
    lp
}

/// Packed optimization coordinates: log lengthscales, log outputscale,
/// log noise, then the mean (linear).
fn pack(hp: &GpHyperparams) -> Array1<f64> {
    let d = hp.dim();
    let mut z = Array1::zeros(d + 3);
    for i in 0..d {
        z[i] = hp.lengthscales[i].ln();
    }
    z[d] = hp.outputscale.ln();
    z[d + 1] = hp.noise.ln();
    z[d + 2] = hp.mean;
    z
}

fn unpack(z: &Array1<f64>, dim: usize, kernel: KernelKind) -> GpHyperparams {
    GpHyperparams {
        lengthscales: Array1::from_iter((0..dim).map(|i| z[i].exp())),
        outputscale: z[dim].exp(),
        noise: z[dim + 1].exp(),
        mean: z[dim + 2],
        kernel,
    }
}

/// Objective value and gradient in packed coordinates.
pub(crate) fn evidence_and_grad(
    data: &Dataset,
    hp: &GpHyperparams,
) -> Result<(f64, Array1<f64>)> {
    let d = hp.dim();
    let n = data.len();
    let mut grad = Array1::zeros(d + 3);

    // hyperprior part: d/dlog v = -1 - log v for lognormal terms
    for i in 0..d {
        grad[i] = -1.0 - hp.lengthscales[i].ln();
    }
    grad[d] = -1.0 - hp.outputscale.ln();
    grad[d + 1] = -1.0 - hp.noise.ln();
    grad[d + 2] = -hp.mean;

    if n == 0 {
        return Ok((log_hyperprior(hp), grad));
    }

    let k_signal = gram(data.x().view(), hp);
    let mut a = k_signal.clone();
    for i in 0..n {
        a[[i, i]] += hp.noise;
    }
    let ch = Cholesky::with_jitter(&a)?;
    let r = data.y_std() - hp.mean;
    let alpha = ch.solve_vec(r.view());
    let value = -0.5 * r.dot(&alpha) - 0.5 * ch.log_det() - 0.5 * n as f64 * LN_2PI
        + log_hyperprior(hp);

    let a_inv = ch.solve_mat(&Array2::eye(n));
    // dLML/dtheta = 0.5 * (alpha' G alpha - tr(A^-1 G))
    let dir = |g: &Array2<f64>| -> f64 {
        let quad = alpha.dot(&g.dot(&alpha));
        let tr = (g * &a_inv).sum();
        0.5 * (quad - tr)
    };
    for i in 0..d {
        grad[i] += dir(&gram_grad_log_ls(data.x().view(), hp, i));
    }
    grad[d] += dir(&k_signal);
    let mut noise_mat = Array2::zeros((n, n));
    for i in 0..n {
        noise_mat[[i, i]] = hp.noise;
    }
    grad[d + 1] += dir(&noise_mat);
    grad[d + 2] += alpha.sum();

    Ok((value, grad))
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub hp: GpHyperparams,
    pub log_evidence: f64,
    /// True when every restart failed numerically and the hyperprior medians
    /// were returned instead.
    pub fallback: bool,
}

/// MAP hyperparameters by multi-start projected gradient ascent in log space.
pub fn fit_map(data: &Dataset, restarts: usize, seed: u64) -> Result<FitOutcome> {
    fit_map_from(data, restarts, seed, None)
}

/// Same as [`fit_map`] but with an optional warm-start point used as the
/// first restart (the engine passes the previous iteration's fit).
pub fn fit_map_from(
    data: &Dataset,
    restarts: usize,
    seed: u64,
    warm: Option<&GpHyperparams>,
) -> Result<FitOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = data.dim();
    let kernel = warm.map_or(KernelKind::SquaredExponential, |h| h.kernel);
    let restarts = restarts.max(1);

    let starts: Vec<Array1<f64>> = (0..restarts)
        .map(|idx| {
            if idx == 0 {
                pack(warm.unwrap_or(&GpHyperparams::median(dim, kernel)))
            } else {
                let mut r = rng::stream(seed, &[rng::tag::FIT, idx as u64]);
                let mut z = Array1::zeros(dim + 3);
                for v in z.iter_mut() {
                    *v = r.sample::<f64, _>(StandardNormal);
                }
                z
            }
        })
        .collect();

    let results: Vec<Option<(f64, Array1<f64>)>> = starts
        .par_iter()
        .map(|z0| ascend(data, z0, dim, kernel))
        .collect();

    let mut best: Option<(f64, Array1<f64>)> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|(bv, _)| r.0 > *bv) {
            best = Some(r);
        }
    }
    match best {
        Some((value, z)) => Ok(FitOutcome {
            hp: unpack(&z, dim, kernel),
            log_evidence: value,
            fallback: false,
        }),
        None => {
            let hp = GpHyperparams::median(dim, kernel);
            let value = log_evidence(data, &hp).unwrap_or(f64::NEG_INFINITY);
            Ok(FitOutcome {
                hp,
                log_evidence: value,
                fallback: true,
            })
        }
    }
}

/// Armijo backtracking ascent. Returns the best point reached, or None when
/// even the starting point is numerically infeasible.
fn ascend(
    data: &Dataset,
    z0: &Array1<f64>,
    dim: usize,
    kernel: KernelKind,
) -> Option<(f64, Array1<f64>)> {
    const MAX_ITERS: usize = 200;
    const Z_LO: f64 = -12.0;
    const Z_HI: f64 = 8.0;
    let clamp = |mut z: Array1<f64>| -> Array1<f64> {
        for i in 0..=(dim + 1) {
            z[i] = z[i].clamp(Z_LO, Z_HI);
        }
        z[dim + 2] = z[dim + 2].clamp(-30.0, 30.0);
        z
    };

    let mut z = clamp(z0.clone());
    let (mut value, mut grad) = evidence_and_grad(data, &unpack(&z, dim, kernel)).ok()?;
    if !value.is_finite() {
        return None;
    }
    let mut step = 0.5;
    for _ in 0..MAX_ITERS {
        let gnorm2 = grad.dot(&grad);
        if gnorm2.sqrt() < 1e-6 {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let cand = clamp(&z + &(&grad * step));
            if let Ok((v, g)) = evidence_and_grad(data, &unpack(&cand, dim, kernel)) {
                if v.is_finite() && v >= value + 1e-4 * step * gnorm2 {
                    z = cand;
                    value = v;
                    grad = g;
                    improved = true;
                    step = (step * 1.5).min(1.0);
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some((value, z))
}

/// Exact posterior over function values at the query rows, on the
/// standardized output scale.
pub fn analytic_posterior(
    data: &Dataset,
    hp: &GpHyperparams,
    xq: ArrayView2<f64>,
) -> Result<PosteriorGaussian> {
    let prior_cov = gram(xq, hp);
    if data.is_empty() {
        return Ok(PosteriorGaussian {
            mean: Array1::from_elem(xq.nrows(), hp.mean),
            cov: prior_cov,
        });
    }
    let n = data.len();
    let mut a = gram(data.x().view(), hp);
    for i in 0..n {
        a[[i, i]] += hp.noise;
    }
    let ch = Cholesky::with_jitter(&a)?;
    let r = data.y_std() - hp.mean;
    let alpha = ch.solve_vec(r.view());
    let kqx = cross(xq, data.x().view(), hp);
    let mean = kqx.dot(&alpha) + hp.mean;
    let solve = ch.solve_mat(&kqx.t().to_owned());
    let mut cov = &prior_cov - &kqx.dot(&solve);
    // enforce symmetry against round-off
    let covt = cov.t().to_owned();
    cov = (&cov + &covt) * 0.5;
    Ok(PosteriorGaussian { mean, cov })
}

/// Posterior mean and variance at each query row (diagonal only), cheap for
/// large candidate batches.
pub fn analytic_mean_var(
    data: &Dataset,
    hp: &GpHyperparams,
    xq: ArrayView2<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let k = xq.nrows();
    if data.is_empty() {
        return Ok((
            Array1::from_elem(k, hp.mean),
            Array1::from_elem(k, hp.outputscale),
        ));
    }
    let n = data.len();
    let mut a = gram(data.x().view(), hp);
    for i in 0..n {
        a[[i, i]] += hp.noise;
    }
    let ch = Cholesky::with_jitter(&a)?;
    let r = data.y_std() - hp.mean;
    let alpha = ch.solve_vec(r.view());
    let kqx = cross(xq, data.x().view(), hp);
    let mean = kqx.dot(&alpha) + hp.mean;
    let solve = ch.solve_mat(&kqx.t().to_owned());
    let mut var = Array1::zeros(k);
    for i in 0..k {
        let reduction = kqx.row(i).dot(&solve.column(i));
        var[i] = (hp.outputscale - reduction).max(0.0);
    }
    Ok((mean, var))
}

/// Sample a function from the GP prior at fixed inputs (test helper for
/// generate-and-recover checks and oracles).
pub fn sample_function_values(
    x: ArrayView2<f64>,
    hp: &GpHyperparams,
    seed: u64,
) -> Result<Array1<f64>> {
    let n = x.nrows();
    let k = gram(x, hp);
    let ch = Cholesky::with_jitter(&k)?;
    let mut r = rng::stream(seed, &[rng::tag::NOISE]);
    let z = Array1::from_iter((0..n).map(|_| r.sample::<f64, _>(StandardNormal)));
    // lower-triangular multiply
    let mut out = Array1::zeros(n);
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..=i {
            s += ch_lower(&ch, i, j) * z[j];
        }
        out[i] = s + hp.mean;
    }
    Ok(out)
}

fn ch_lower(ch: &Cholesky, i: usize, j: usize) -> f64 {
    ch.lower_entry(i, j)
}
