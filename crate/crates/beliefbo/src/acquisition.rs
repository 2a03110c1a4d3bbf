//! Monte Carlo acquisition functions over a weighted ensemble: smoothed
//! LogEI, max-value entropy search, Thompson sampling, the multi-start
//! acquisition optimizer and sequential-greedy batching.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::belief::{McBudget, WeightedEnsemble};
use crate::error::{Error, Result};
use crate::kernel::GpHyperparams;
use crate::pathwise::{eval_draws, eval_draws_with_grads, fantasy_extend_all};
use crate::rng::{self, tag};
use crate::sobol::sobol_points;
use crate::space::{Dataset, SearchSpace};

/// Softplus temperature for LogEI smoothing on standardized outputs.
pub const DEFAULT_LOGEI_TEMPERATURE: f64 = 1e-3;
/// Log-domain floor keeping acquisition values finite.
pub const LOG_FLOOR: f64 = -1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquisitionKind {
    LogEi,
    /// Max-value entropy search with `optimal_values` sampled maxima and
    /// `noise_samples` noise draws per (path, maximum).
    Mes {
        optimal_values: usize,
        noise_samples: usize,
    },
    ThompsonSampling,
}

/// Noiseless incumbent estimate: the best ensemble-weighted posterior mean
/// among observed inputs.
#[derive(Debug, Clone)]
pub struct Incumbent {
    /// Standardized units.
    pub value: f64,
    /// Normalized coordinates of the observed input attaining the maximum.
    pub location: Array1<f64>,
}

pub fn incumbent(ensemble: &WeightedEnsemble, data: &Dataset) -> Result<Incumbent> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    incumbent_over(ensemble, data.x().view())
}

fn incumbent_over(ensemble: &WeightedEnsemble, xs: ArrayView2<f64>) -> Result<Incumbent> {
    let vals = eval_draws(ensemble.draws(), xs);
    let w = ensemble.weights();
    let z = ensemble.z();
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0;
    for i in 0..xs.nrows() {
        let m = vals.row(i).dot(w) / z;
        if m > best {
            best = m;
            best_i = i;
        }
    }
    Ok(Incumbent {
        value: best,
        location: xs.row(best_i).to_owned(),
    })
}

/// Generic acquisition surface over normalized inputs.
pub trait AcquisitionFn: Sync {
    fn eval_batch(&self, x: ArrayView2<f64>) -> Array1<f64>;

    fn eval_one(&self, x: ArrayView1<f64>) -> f64 {
        self.eval_batch(x.insert_axis(Axis(0)))[0]
    }

    /// Value plus analytic gradient where available; `None` gradient makes
    /// the optimizer fall back to central differences.
    fn value_and_grad(&self, x: ArrayView1<f64>) -> (f64, Option<Array1<f64>>) {
        (self.eval_one(x), None)
    }
}

/// `log softplus_tau(z)`, stable across the whole range.
fn log_softplus(z: f64, tau: f64) -> f64 {
    let u = z / tau;
    let v = if u > 30.0 {
        (z + tau * (-u).exp().ln_1p()).ln()
    } else if u < -30.0 {
        tau.ln() + u
    } else {
        (tau * u.exp().ln_1p()).ln()
    };
    v.max(LOG_FLOOR)
}

/// Derivative of `log softplus_tau` with respect to `z`.
fn log_softplus_grad(z: f64, tau: f64) -> f64 {
    let u = z / tau;
    if u > 30.0 {
        let sp = z + tau * (-u).exp().ln_1p();
        1.0 / sp
    } else if u < -30.0 {
        1.0 / tau
    } else {
        let sig = 1.0 / (1.0 + (-u).exp());
        sig / (tau * u.exp().ln_1p())
    }
}

/// Smoothed weighted Monte Carlo LogEI.
pub struct LogEiAcquisition<'a> {
    ensemble: &'a WeightedEnsemble,
    incumbent: f64,
    temperature: f64,
}

impl<'a> LogEiAcquisition<'a> {
    pub fn new(ensemble: &'a WeightedEnsemble, incumbent: f64) -> Self {
        Self::with_temperature(ensemble, incumbent, DEFAULT_LOGEI_TEMPERATURE)
    }

    pub fn with_temperature(
        ensemble: &'a WeightedEnsemble,
        incumbent: f64,
        temperature: f64,
    ) -> Self {
        Self {
            ensemble,
            incumbent,
            temperature,
        }
    }

    fn from_values(&self, values: ArrayView1<f64>) -> f64 {
        let lw = self.ensemble.log_weights();
        let log_z = self.ensemble.z().ln();
        let mut max_t = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(values.len());
        for (l, &v) in values.iter().enumerate() {
            let t = lw[l] + log_softplus(v - self.incumbent, self.temperature);
            max_t = max_t.max(t);
            terms.push(t);
        }
        if !max_t.is_finite() {
            return LOG_FLOOR;
        }
        let sum: f64 = terms.iter().map(|&t| (t - max_t).exp()).sum();
        (max_t + sum.ln() - log_z).max(LOG_FLOOR)
    }
}

impl AcquisitionFn for LogEiAcquisition<'_> {
    fn eval_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let vals = eval_draws(self.ensemble.draws(), x);
        Array1::from_iter((0..x.nrows()).map(|i| self.from_values(vals.row(i))))
    }

    fn value_and_grad(&self, x: ArrayView1<f64>) -> (f64, Option<Array1<f64>>) {
        let (values, grads) = eval_draws_with_grads(self.ensemble.draws(), x);
        let lw = self.ensemble.log_weights();
        let log_z = self.ensemble.z().ln();
        let l = values.len();
        let mut terms = Array1::from_elem(l, f64::NEG_INFINITY);
        let mut max_t = f64::NEG_INFINITY;
        for i in 0..l {
            let t = lw[i] + log_softplus(values[i] - self.incumbent, self.temperature);
            terms[i] = t;
            max_t = max_t.max(t);
        }
        if !max_t.is_finite() {
            return (LOG_FLOOR, Some(Array1::zeros(x.len())));
        }
        let relative = terms.mapv(|t| (t - max_t).exp());
        let sum = relative.sum();
        let value = (max_t + sum.ln() - log_z).max(LOG_FLOOR);
        // d/dx = sum_l softmax_l * d log_softplus/dz (z_l) * dv_l/dx
        let mut grad = Array1::zeros(x.len());
        for i in 0..l {
            let coeff = relative[i] / sum
                * log_softplus_grad(values[i] - self.incumbent, self.temperature);
            if coeff != 0.0 {
                grad += &(&grads.column(i) * coeff);
            }
        }
        (value, Some(grad))
    }
}

/// Convenience wrapper matching the operation signature.
pub fn acq_logei(x: ArrayView1<f64>, ensemble: &WeightedEnsemble, inc: &Incumbent) -> f64 {
    LogEiAcquisition::new(ensemble, inc.value).eval_one(x)
}

/// Exact LogEI under a Gaussian posterior (oracle route; no sample paths).
///
/// `log( s * (z Phi(z) + phi(z)) )` with `z = (mean - incumbent)/s`,
/// asymptotics for deep-negative `z`.
pub fn analytic_log_ei(mean: f64, var: f64, incumbent: f64) -> f64 {
    let s = var.max(0.0).sqrt();
    if s == 0.0 {
        let imp = (mean - incumbent).max(0.0);
        return if imp > 0.0 { imp.ln() } else { LOG_FLOOR };
    }
    let z = (mean - incumbent) / s;
    let log_phi = |z: f64| -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let v = if z > -8.0 {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let inner = z * normal.cdf(z) + log_phi(z).exp();
        if inner > 0.0 {
            inner.ln()
        } else {
            LOG_FLOOR
        }
    } else {
        // z Phi(z) + phi(z) ~ phi(z)/z^2 (1 - 3/z^2 + 15/z^4)
        let z2 = z * z;
        log_phi(z) - z2.ln() + (1.0 - 3.0 / z2 + 15.0 / (z2 * z2)).ln()
    };
    (s.ln() + v).max(LOG_FLOOR)
}

/// Exact LogEI on the analytic Gaussian posterior. This is the oracle route:
/// it never touches sample paths, so it can independently check the Monte
/// Carlo acquisition's argmax.
pub struct AnalyticLogEiAcquisition<'a> {
    data: &'a Dataset,
    hp: &'a GpHyperparams,
    pub incumbent: f64,
}

impl<'a> AnalyticLogEiAcquisition<'a> {
    /// Incumbent defaults to the best posterior mean among observed inputs.
    pub fn new(data: &'a Dataset, hp: &'a GpHyperparams) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (means, _) = crate::gp::analytic_mean_var(data, hp, data.x().view())?;
        let incumbent = means.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        Ok(Self {
            data,
            hp,
            incumbent,
        })
    }
}

impl AcquisitionFn for AnalyticLogEiAcquisition<'_> {
    fn eval_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let (means, vars) =
            crate::gp::analytic_mean_var(self.data, self.hp, x).expect("posterior feasible");
        Array1::from_iter(
            means
                .iter()
                .zip(vars.iter())
                .map(|(&m, &v)| analytic_log_ei(m, v, self.incumbent)),
        )
    }
}

/// Optimal-value samples for MES: `optimal_values` ensemble members drawn
/// with probability proportional to their weights, returning the cached
/// maximum and log weight of each.
pub fn sample_optimal_values(
    ensemble: &mut WeightedEnsemble,
    count: usize,
    budget: &McBudget,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if count > ensemble.len() {
        return Err(Error::NotEnoughDraws {
            requested: count,
            available: ensemble.len(),
        });
    }
    ensemble.ensure_argmax_cache(budget, rng::derive_seed(seed, &[tag::ARGMAX]));
    let weights = ensemble.weights().clone();
    let log_weights = ensemble.log_weights().clone();
    let cache = ensemble.argmax_cache().expect("cache just built");
    let z = weights.sum();
    let mut r = rng::stream(seed, &[tag::MES_NOISE, 0]);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = r.random::<f64>() * z;
        let mut acc = 0.0;
        let mut idx = weights.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        out.push((cache[idx].1, log_weights[idx]));
    }
    Ok(out)
}

/// Weighted MC max-value entropy search.
///
/// Implements the triple-sum estimator over sampled maxima `f*_j`, ensemble
/// values `f_l(x)` and noise draws `y = f_l(x) + eps_k`, normalized by
/// `Z_J * Z_L * K`. The conditional `p(y | f, f*)` is the noise-smoothed
/// upper-truncated Gaussian: mean clamped to `min(f, f*)`, renormalized by
/// `Phi((f* - min(f, f*))/sigma)`, and evaluated at `min(y, f*)` so the
/// score stays finite when noise pushes a sample past the maximum.
pub struct MesAcquisition<'a> {
    ensemble: &'a WeightedEnsemble,
    optimal_values: Vec<(f64, f64)>,
    noise_sd: f64,
    noise_samples: usize,
    seed: u64,
}

impl<'a> MesAcquisition<'a> {
    pub fn new(
        ensemble: &'a WeightedEnsemble,
        optimal_values: Vec<(f64, f64)>,
        hp: &GpHyperparams,
        noise_samples: usize,
        seed: u64,
    ) -> Self {
        assert!(noise_samples >= 1);
        assert!(!optimal_values.is_empty());
        Self {
            ensemble,
            optimal_values,
            noise_sd: hp.noise.sqrt(),
            noise_samples,
            seed,
        }
    }

    /// Noise draws used at a point; keyed by the point's bits so that one
    /// acquisition object is a deterministic function while separate seeds
    /// give fresh Monte Carlo repetitions.
    pub fn noise_draws(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let mut path: Vec<u64> = vec![tag::MES_NOISE, 1];
        for v in x.iter() {
            path.push(v.to_bits());
        }
        let mut r = rng::stream(self.seed, &path);
        (0..self.noise_samples)
            .map(|_| self.noise_sd * r.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn from_values(&self, x: ArrayView1<f64>, values: ArrayView1<f64>) -> f64 {
        let eps = self.noise_draws(x);
        let lw = self.ensemble.log_weights();
        let z_l = self.ensemble.z();
        let z_j: f64 = self.optimal_values.iter().map(|(_, lj)| lj.exp()).sum();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let var = self.noise_sd * self.noise_sd;
        let log_norm_const = -(self.noise_sd).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();

        let mut total = 0.0;
        for (fstar, lj) in &self.optimal_values {
            let rho_j = lj.exp();
            if rho_j == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for (l, &v) in values.iter().enumerate() {
                let rho_l = lw[l].exp();
                if rho_l == 0.0 {
                    continue;
                }
                let m = v.min(*fstar);
                let log_trunc_z = normal.cdf((fstar - m) / self.noise_sd).ln();
                let mut s = 0.0;
                for &e in &eps {
                    let y = v + e;
                    let yc = y.min(*fstar);
                    // log p(y | f, f*) - log p(y | f)
                    let a = log_norm_const - 0.5 * (yc - m) * (yc - m) / var - log_trunc_z;
                    let b = log_norm_const - 0.5 * e * e / var;
                    s += a - b;
                }
                inner += rho_l * s;
            }
            total += rho_j * inner;
        }
        total / (z_j * z_l * self.noise_samples as f64)
    }
}

impl AcquisitionFn for MesAcquisition<'_> {
    fn eval_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let vals = eval_draws(self.ensemble.draws(), x);
        let rows: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map(|i| self.from_values(x.row(i), vals.row(i)))
            .collect();
        Array1::from_vec(rows)
    }
}

/// Operation wrapper: weighted MES value at one point.
pub fn acq_mes(
    x: ArrayView1<f64>,
    ensemble: &mut WeightedEnsemble,
    optimal_values: usize,
    noise_samples: usize,
    hp: &GpHyperparams,
    budget: &McBudget,
    seed: u64,
) -> Result<f64> {
    let fstars = sample_optimal_values(ensemble, optimal_values, budget, seed)?;
    let acq = MesAcquisition::new(ensemble, fstars, hp, noise_samples, seed);
    Ok(acq.eval_one(x))
}

/// Thompson step: pick one draw with probability proportional to its weight
/// and return the argmax of that path.
pub fn thompson_next(
    ensemble: &WeightedEnsemble,
    space: &SearchSpace,
    budget: &McBudget,
    seed: u64,
) -> Array1<f64> {
    assert!(!ensemble.is_empty());
    let weights = ensemble.weights();
    let z = ensemble.z();
    let mut r = rng::stream(seed, &[tag::THOMPSON]);
    let u: f64 = r.random::<f64>() * z;
    let mut acc = 0.0;
    let mut idx = weights.len() - 1;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            idx = i;
            break;
        }
    }
    let (x, _) = crate::belief::locate_argmax(
        &ensemble.draws()[idx],
        space,
        budget.argmax_candidates_per_dim * space.dim(),
        rng::derive_seed(seed, &[tag::THOMPSON, idx as u64]),
    );
    x
}

/// Multi-start maximization of an acquisition surface on the unit cube:
/// Sobol screening, then gradient ascent (analytic or finite-difference)
/// from the top `restarts` candidates. Candidate sets and start sets are
/// nested in `restarts`, so enlarging the budget never lowers the result.
pub fn optimize_acq(
    acq: &dyn AcquisitionFn,
    space: &SearchSpace,
    restarts: usize,
    budget: &McBudget,
    seed: u64,
) -> Array1<f64> {
    let dim = space.dim();
    let n_cand = budget.acq_candidates_per_dim * dim;
    let cand = sobol_points(n_cand, dim, rng::derive_seed(seed, &[tag::ACQ_OPT]));
    let vals = acq.eval_batch(cand.view());
    let mut order: Vec<usize> = (0..n_cand).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal));

    let starts: Vec<usize> = order.iter().take(restarts.max(1)).copied().collect();
    let refined: Vec<(Array1<f64>, f64)> = starts
        .par_iter()
        .map(|&s| ascend_acq(acq, cand.row(s).to_owned(), budget.acq_ascent_steps))
        .collect();

    let mut best_x = cand.row(order[0]).to_owned();
    let mut best_v = vals[order[0]];
    for (x, v) in refined {
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    best_x
}

fn ascend_acq(acq: &dyn AcquisitionFn, mut x: Array1<f64>, steps: usize) -> (Array1<f64>, f64) {
    let dim = x.len();
    let grad_at = |x: &Array1<f64>| -> (f64, Array1<f64>) {
        let (v, g) = acq.value_and_grad(x.view());
        match g {
            Some(g) => (v, g),
            None => {
                let mut g = Array1::zeros(dim);
                let h = 1e-5;
                for i in 0..dim {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] = (x[i] + h).min(1.0);
                    xm[i] = (x[i] - h).max(0.0);
                    let denom = xp[i] - xm[i];
                    if denom > 0.0 {
                        g[i] = (acq.eval_one(xp.view()) - acq.eval_one(xm.view())) / denom;
                    }
                }
                (v, g)
            }
        }
    };

    let (mut value, mut grad) = grad_at(&x);
    let mut step = 0.05;
    for _ in 0..steps {
        let gnorm = grad.dot(&grad).sqrt();
        if gnorm < 1e-12 || step < 1e-12 {
            break;
        }
        let mut improved = false;
        for _ in 0..10 {
            let cand = (&x + &(&grad * (step / gnorm))).mapv(|v| v.clamp(0.0, 1.0));
            let (v, _) = acq.value_and_grad(cand.view());
            if v > value {
                let (_, g) = grad_at(&cand);
                x = cand;
                value = v;
                grad = g;
                step *= 1.3;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, value)
}

/// Sequential greedy batch selection.
///
/// Each selected point is followed by a fantasy update: one ensemble member
/// is drawn with probability proportional to its weight, its noisy value at
/// the selection becomes a shared fantasy observation, and every path is
/// Matheron-extended on it (fresh per-path update noise). The incumbent for
/// subsequent selections is taken over observed plus pending inputs.
pub fn greedy_batch(
    kind: AcquisitionKind,
    ensemble: &WeightedEnsemble,
    data: &Dataset,
    hp: &GpHyperparams,
    space: &SearchSpace,
    q: usize,
    budget: &McBudget,
    seed: u64,
) -> Result<Vec<Array1<f64>>> {
    assert!(q >= 1);
    let mut current = ensemble.clone();
    let mut selected: Vec<Array1<f64>> = Vec::with_capacity(q);

    for j in 0..q {
        let sel_seed = if j == 0 {
            seed
        } else {
            rng::derive_seed(seed, &[tag::ACQ_OPT, j as u64])
        };
        let x_next = match kind {
            AcquisitionKind::LogEi => {
                let inc = if selected.is_empty() {
                    incumbent(&current, data)?
                } else {
                    let mut xs = data.x().clone();
                    for s in &selected {
                        xs.push_row(s.view()).expect("dims match");
                    }
                    incumbent_over(&current, xs.view())?
                };
                let acq = LogEiAcquisition::new(&current, inc.value);
                optimize_acq(&acq, space, budget.acq_restarts, budget, sel_seed)
            }
            AcquisitionKind::Mes {
                optimal_values,
                noise_samples,
            } => {
                let fstars =
                    sample_optimal_values(&mut current, optimal_values, budget, sel_seed)?;
                let acq = MesAcquisition::new(&current, fstars, hp, noise_samples, sel_seed);
                optimize_acq(&acq, space, budget.acq_restarts, budget, sel_seed)
            }
            AcquisitionKind::ThompsonSampling => {
                thompson_next(&current, space, budget, sel_seed)
            }
        };
        selected.push(x_next.clone());

        if j + 1 < q {
            let fseed = rng::derive_seed(seed, &[tag::FANTASY, j as u64]);
            let mut r = rng::stream(fseed, &[0]);
            let weights = current.weights();
            let u: f64 = r.random::<f64>() * current.z();
            let mut acc = 0.0;
            let mut idx = weights.len() - 1;
            for (i, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            let base = current.draws()[idx].eval_one(x_next.view());
            let y_fantasy = base + hp.noise.sqrt() * r.sample::<f64, _>(StandardNormal);
            let extended =
                fantasy_extend_all(current.draws(), x_next.view(), y_fantasy, hp, fseed)?;
            current = current.replace_draws(extended);
        }
    }
    Ok(selected)
}
