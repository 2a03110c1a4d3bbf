//! Decoupled posterior sampling: random-Fourier-feature prior draws plus the
//! deterministic Matheron data update, giving continuous differentiable
//! sample paths.
//!
//! A path is `f(x) = c + scale * sum_i w_i cos(psi_i . x + b_i)` with an
//! optional correction `k_n(x)' v` once data is observed. Frequencies come
//! from the kernel's spectral density: Gaussian for the squared exponential,
//! multivariate t with 5 degrees of freedom for Matérn-5/2. Frequency and
//! phase generation uses scrambled Sobol through the inverse CDF (quasi-MC is
//! restricted to the basis; path weights stay pseudo-random).

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::Result;
use crate::kernel::{cross, gram, kernel_grad_x, GpHyperparams, KernelKind};
use crate::linalg::Cholesky;
use crate::rng::{self, tag};
use crate::sobol;
use crate::space::Dataset;

/// Shared cosine-feature basis approximating a stationary kernel.
#[derive(Debug)]
pub struct RffBasis {
    /// m×d frequency matrix, already divided by the ARD lengthscales.
    frequencies: Array2<f64>,
    /// Phases in `[0, 2pi)`.
    phases: Array1<f64>,
    /// `sqrt(2 sigma_f^2 / m)`.
    scale: f64,
    kernel: KernelKind,
}

impl RffBasis {
    pub fn feature_count(&self) -> usize {
        self.frequencies.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn frequencies(&self) -> &Array2<f64> {
        &self.frequencies
    }

    /// Feature matrix `Phi(X)`: k×m with entries `scale * cos(psi . x + b)`.
    pub fn features(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut t = x.dot(&self.frequencies.t());
        for mut row in t.rows_mut() {
            row += &self.phases;
        }
        t.mapv_inplace(|v| v.cos());
        t * self.scale
    }

    /// Kernel value implied by the finite basis (exact over the weight
    /// distribution): `Phi(x) . Phi(x')`.
    pub fn implied_kernel(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        let fx = self.features(x.insert_axis(Axis(0)));
        let fy = self.features(y.insert_axis(Axis(0)));
        fx.row(0).dot(&fy.row(0))
    }
}

/// Draw frequencies and phases for `m` features.
///
/// Deterministic given the seed; distinct seeds give independently scrambled
/// sequences.
pub fn sample_basis(hp: &GpHyperparams, m: usize, seed: u64) -> RffBasis {
    assert!(m >= 1, "need at least one feature");
    let d = hp.dim();
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let chi5 = ChiSquared::new(5.0).unwrap();
    // dims 0..d: frequency coordinates, d: Matérn mixing variable, d+1: phase
    let u = sobol::sobol_points(m, d + 2, rng::derive_seed(seed, &[tag::BASIS]));
    let clamp = |v: f64| v.clamp(1e-7, 1.0 - 1e-7);

    let mut freq = Array2::zeros((m, d));
    let mut phases = Array1::zeros(m);
    for i in 0..m {
        let mix = match hp.kernel {
            KernelKind::SquaredExponential => 1.0,
            KernelKind::Matern52 => {
                // multivariate t_5: Gaussian row divided by sqrt(chi^2_5 / 5)
                let s = chi5.inverse_cdf(clamp(u[[i, d]]));
                (s / 5.0).sqrt()
            }
        };
        for j in 0..d {
            let z = std_normal.inverse_cdf(clamp(u[[i, j]]));
            freq[[i, j]] = z / (mix * hp.lengthscales[j]);
        }
        phases[i] = std::f64::consts::TAU * u[[i, d + 1]];
    }
    RffBasis {
        frequencies: freq,
        phases,
        scale: (2.0 * hp.outputscale / m as f64).sqrt(),
        kernel: hp.kernel,
    }
}

/// One continuous sample path.
#[derive(Debug, Clone)]
pub struct FunctionDraw {
    basis: Arc<RffBasis>,
    weights: Array1<f64>,
    mean: f64,
    update: Option<MatheronUpdate>,
}

/// Data-dependent correction of Eq.-style pathwise conditioning. Stores the
/// per-draw noisy targets so the update can be extended for fantasy points.
#[derive(Debug, Clone)]
pub struct MatheronUpdate {
    x_train: Arc<Array2<f64>>,
    /// `y_std - eps_tilde`, the targets the corrected path regresses to.
    targets: Array1<f64>,
    /// `v = (K + noise I)^-1 (targets - fhat(X))`.
    solve: Array1<f64>,
    hp: Arc<GpHyperparams>,
}

impl FunctionDraw {
    pub fn basis(&self) -> &Arc<RffBasis> {
        &self.basis
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn is_conditioned(&self) -> bool {
        self.update.is_some()
    }

    /// A draw with explicit weights (test helper for hand-built paths).
    pub fn from_parts(basis: Arc<RffBasis>, weights: Array1<f64>, mean: f64) -> Self {
        assert_eq!(weights.len(), basis.feature_count());
        Self {
            basis,
            weights,
            mean,
            update: None,
        }
    }

    /// Evaluate the path at a batch of points (standardized output scale).
    pub fn eval(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let phi = self.basis.features(x);
        let mut vals = phi.dot(&self.weights) + self.mean;
        if let Some(up) = &self.update {
            let kq = cross(x, up.x_train.view(), &up.hp);
            vals += &kq.dot(&up.solve);
        }
        vals
    }

    pub fn eval_one(&self, x: ArrayView1<f64>) -> f64 {
        self.eval(x.insert_axis(Axis(0)))[0]
    }

    /// Path value and gradient at a single point.
    pub fn value_and_grad(&self, x: ArrayView1<f64>) -> (f64, Array1<f64>) {
        let basis = &self.basis;
        let t = basis.frequencies.dot(&x) + &basis.phases;
        let mut value = self.mean;
        let mut ws = Array1::zeros(t.len());
        for i in 0..t.len() {
            value += basis.scale * self.weights[i] * t[i].cos();
            ws[i] = basis.scale * self.weights[i] * t[i].sin();
        }
        let mut grad = -basis.frequencies.t().dot(&ws);
        if let Some(up) = &self.update {
            for (i, xi) in up.x_train.rows().into_iter().enumerate() {
                let kv = crate::kernel::kernel_eval(x, xi, &up.hp).expect("dims match");
                value += kv * up.solve[i];
                grad += &(kernel_grad_x(x, xi, &up.hp) * up.solve[i]);
            }
        }
        (value, grad)
    }

    pub fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.value_and_grad(x).1
    }
}

/// Sample `count` prior paths sharing one basis. Weight streams are keyed by
/// draw index, so any contiguous prefix is reproducible.
pub fn draw_prior(
    basis: &Arc<RffBasis>,
    hp: &GpHyperparams,
    count: usize,
    seed: u64,
) -> Vec<FunctionDraw> {
    draw_prior_offset(basis, hp, count, seed, 0)
}

/// As [`draw_prior`] but starting at a given draw index (used when rejection
/// sampling streams additional paths beyond the pilot batch).
pub fn draw_prior_offset(
    basis: &Arc<RffBasis>,
    hp: &GpHyperparams,
    count: usize,
    seed: u64,
    first_index: u64,
) -> Vec<FunctionDraw> {
    let m = basis.feature_count();
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, &[tag::PRIOR_WEIGHTS, first_index + i as u64]);
            let weights = Array1::from_iter((0..m).map(|_| r.sample::<f64, _>(StandardNormal)));
            FunctionDraw {
                basis: Arc::clone(basis),
                weights,
                mean: hp.mean,
                update: None,
            }
        })
        .collect()
}

/// Matheron-condition a batch of prior draws on the dataset. The Gram factor
/// is shared; the noise draw is fresh per path, keyed by `(seed, index)`.
pub fn matheron_condition_all(
    draws: &[FunctionDraw],
    data: &Dataset,
    hp: &GpHyperparams,
    seed: u64,
) -> Result<Vec<FunctionDraw>> {
    if data.is_empty() {
        return Ok(draws.to_vec());
    }
    let n = data.len();
    let mut a = gram(data.x().view(), hp);
    for i in 0..n {
        a[[i, i]] += hp.noise;
    }
    let ch = Cholesky::with_jitter(&a)?;
    let x_train = Arc::new(data.x().clone());
    let hp_arc = Arc::new(hp.clone());

    let prior_at_x = eval_draws(draws, data.x().view());
    let noise_sd = hp.noise.sqrt();
    let mut out = Vec::with_capacity(draws.len());
    for (idx, draw) in draws.iter().enumerate() {
        let mut r = rng::stream(seed, &[tag::MATHERON, idx as u64]);
        let eps =
            Array1::from_iter((0..n).map(|_| noise_sd * r.sample::<f64, _>(StandardNormal)));
        let targets = data.y_std() - &eps;
        let resid = &targets - &prior_at_x.column(idx);
        let solve = ch.solve_vec(resid.view());
        let mut cond = draw.clone();
        cond.update = Some(MatheronUpdate {
            x_train: Arc::clone(&x_train),
            targets,
            solve,
            hp: Arc::clone(&hp_arc),
        });
        out.push(cond);
    }
    Ok(out)
}

/// Condition a single draw (see [`matheron_condition_all`]).
pub fn matheron_condition(
    draw: &FunctionDraw,
    data: &Dataset,
    hp: &GpHyperparams,
    seed: u64,
) -> Result<FunctionDraw> {
    Ok(matheron_condition_all(std::slice::from_ref(draw), data, hp, seed)?
        .pop()
        .expect("one draw in, one out"))
}

/// Extend every draw's update with a shared fantasy observation at `x_new`
/// (standardized value `y_new`), refreshing per-draw update noise for the new
/// point. Draws must already be conditioned on a common training set.
pub fn fantasy_extend_all(
    draws: &[FunctionDraw],
    x_new: ArrayView1<f64>,
    y_new: f64,
    hp: &GpHyperparams,
    seed: u64,
) -> Result<Vec<FunctionDraw>> {
    let old_x: Arc<Array2<f64>> = match &draws[0].update {
        Some(up) => Arc::clone(&up.x_train),
        None => Arc::new(Array2::zeros((0, x_new.len()))),
    };
    let mut x_ext = old_x.as_ref().clone();
    x_ext.push_row(x_new).expect("dim matches");
    let x_ext = Arc::new(x_ext);
    let n = x_ext.nrows();

    let mut a = gram(x_ext.view(), hp);
    for i in 0..n {
        a[[i, i]] += hp.noise;
    }
    let ch = Cholesky::with_jitter(&a)?;
    let hp_arc = Arc::new(hp.clone());
    let noise_sd = hp.noise.sqrt();

    // prior part of each draw at the extended inputs
    let bare: Vec<FunctionDraw> = draws
        .iter()
        .map(|d| FunctionDraw {
            basis: Arc::clone(&d.basis),
            weights: d.weights.clone(),
            mean: d.mean,
            update: None,
        })
        .collect();
    let prior_at_x = eval_draws(&bare, x_ext.view());

    let mut out = Vec::with_capacity(draws.len());
    for (idx, draw) in draws.iter().enumerate() {
        let mut r = rng::stream(seed, &[tag::FANTASY, idx as u64]);
        let eps_new = noise_sd * r.sample::<f64, _>(StandardNormal);
        let mut targets = Array1::zeros(n);
        if let Some(up) = &draw.update {
            targets.slice_mut(ndarray::s![..n - 1]).assign(&up.targets);
        }
        targets[n - 1] = y_new - eps_new;
        let resid = &targets - &prior_at_x.column(idx);
        let solve = ch.solve_vec(resid.view());
        let mut cond = draw.clone();
        cond.update = Some(MatheronUpdate {
            x_train: Arc::clone(&x_ext),
            targets,
            solve,
            hp: Arc::clone(&hp_arc),
        });
        out.push(cond);
    }
    Ok(out)
}

/// Evaluate many draws at many points in two matrix products. Returns k×L.
///
/// Requires all draws to share a basis, and either all unconditioned or all
/// conditioned on the same training inputs (the way ensembles are built).
pub fn eval_draws(draws: &[FunctionDraw], x: ArrayView2<f64>) -> Array2<f64> {
    assert!(!draws.is_empty());
    let basis = &draws[0].basis;
    let shared = draws.iter().all(|d| {
        Arc::ptr_eq(&d.basis, basis)
            && match (&d.update, &draws[0].update) {
                (None, None) => true,
                (Some(a), Some(b)) => Arc::ptr_eq(&a.x_train, &b.x_train),
                _ => false,
            }
    });
    if !shared {
        let mut out = Array2::zeros((x.nrows(), draws.len()));
        for (j, d) in draws.iter().enumerate() {
            out.column_mut(j).assign(&d.eval(x));
        }
        return out;
    }

    let m = basis.feature_count();
    let l = draws.len();
    let phi = basis.features(x);
    let mut w = Array2::zeros((m, l));
    for (j, d) in draws.iter().enumerate() {
        w.column_mut(j).assign(&d.weights);
    }
    let mut vals = phi.dot(&w);
    for (j, d) in draws.iter().enumerate() {
        if d.mean != 0.0 {
            vals.column_mut(j).mapv_inplace(|v| v + d.mean);
        }
    }
    if let Some(up0) = &draws[0].update {
        let kq = cross(x, up0.x_train.view(), &up0.hp);
        let nrows = up0.x_train.nrows();
        let mut solves = Array2::zeros((nrows, l));
        for (j, d) in draws.iter().enumerate() {
            solves
                .column_mut(j)
                .assign(&d.update.as_ref().unwrap().solve);
        }
        vals += &kq.dot(&solves);
    }
    vals
}

/// Values and gradients of all draws at a single point: `(L, d×L)`.
pub fn eval_draws_with_grads(
    draws: &[FunctionDraw],
    x: ArrayView1<f64>,
) -> (Array1<f64>, Array2<f64>) {
    assert!(!draws.is_empty());
    let basis = &draws[0].basis;
    let d = x.len();
    let l = draws.len();
    let m = basis.feature_count();

    let t = basis.frequencies.dot(&x) + &basis.phases;
    let cos_t = t.mapv(f64::cos) * basis.scale;
    let sin_t = t.mapv(f64::sin) * basis.scale;

    let mut w = Array2::zeros((m, l));
    for (j, dr) in draws.iter().enumerate() {
        w.column_mut(j).assign(&dr.weights);
    }
    let mut values = cos_t.dot(&w);
    for (j, dr) in draws.iter().enumerate() {
        values[j] += dr.mean;
    }
    // grad of the cosine part: -F' (sin .* w)
    let mut ws = Array2::zeros((m, l));
    for (j, _) in draws.iter().enumerate() {
        let col = &w.column(j) * &sin_t;
        ws.column_mut(j).assign(&col);
    }
    let mut grads = -basis.frequencies.t().dot(&ws);

    if draws.iter().any(|dr| dr.update.is_some()) {
        for (j, dr) in draws.iter().enumerate() {
            if let Some(up) = &dr.update {
                for (i, xi) in up.x_train.rows().into_iter().enumerate() {
                    let kv = crate::kernel::kernel_eval(x, xi, &up.hp).expect("dims match");
                    values[j] += kv * up.solve[i];
                    let g = kernel_grad_x(x, xi, &up.hp);
                    for r in 0..d {
                        grads[[r, j]] += g[r] * up.solve[i];
                    }
                }
            }
        }
    }
    (values, grads)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::analytic_posterior;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn se_hp(d: usize) -> GpHyperparams {
        GpHyperparams::median(d, KernelKind::SquaredExponential)
    }

    #[test]
    fn basis_is_deterministic_given_seed() {
        let hp = se_hp(2);
        let a = sample_basis(&hp, 64, 9);
        let b = sample_basis(&hp, 64, 9);
        assert_eq!(a.frequencies, b.frequencies);
        assert_eq!(a.phases, b.phases);
        let c = sample_basis(&hp, 64, 10);
        assert_ne!(a.frequencies, c.frequencies);
    }

    #[test]
    fn se_frequency_moments_match_unit_gaussian() {
        let hp = se_hp(3);
        let basis = sample_basis(&hp, 100_000, 4);
        let f = basis.frequencies();
        let n = f.nrows() as f64;
        for i in 0..3 {
            for j in i..3 {
                let cov = f.column(i).dot(&f.column(j)) / n;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov - want).abs() < 0.02,
                    "cov[{i},{j}] = {cov} too far from {want}"
                );
            }
        }
    }

    #[test]
    fn ard_lengthscales_scale_frequencies() {
        let hp =
            GpHyperparams::new(array![0.5, 2.0], 1.0, 0.1, 0.0, KernelKind::SquaredExponential)
                .unwrap();
        let basis = sample_basis(&hp, 50_000, 4);
        let f = basis.frequencies();
        let n = f.nrows() as f64;
        let v0 = f.column(0).dot(&f.column(0)) / n;
        let v1 = f.column(1).dot(&f.column(1)) / n;
        assert!((v0 - 4.0).abs() < 0.15, "var along short lengthscale {v0}");
        assert!((v1 - 0.25).abs() < 0.02, "var along long lengthscale {v1}");
    }

    #[test]
    fn prior_draw_covariance_approximates_kernel() {
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 1024, 7));
        let draws = draw_prior(&basis, &hp, 4096, 21);
        let grid = sobol::sobol_points(10, 1, 1);
        let vals = eval_draws(&draws, grid.view());
        let l = draws.len() as f64;
        let mut max_err: f64 = 0.0;
        for i in 0..10 {
            let mi = vals.row(i).mean().unwrap();
            for j in i..10 {
                let mj = vals.row(j).mean().unwrap();
                let emp = (&vals.row(i).to_owned() - mi)
                    .dot(&(&vals.row(j).to_owned() - mj))
                    / (l - 1.0);
                let k = crate::kernel::kernel_eval(grid.row(i), grid.row(j), &hp).unwrap();
                max_err = max_err.max((emp - k).abs());
            }
        }
        assert!(max_err < 0.05, "cov error {max_err}");
    }

    #[test]
    fn prior_draw_mean_is_constant_within_clt_bound() {
        let mut hp = se_hp(2);
        hp.mean = 0.7;
        let basis = Arc::new(sample_basis(&hp, 256, 3));
        let draws = draw_prior(&basis, &hp, 4096, 5);
        let pts = sobol::sobol_points(5, 2, 8);
        let vals = eval_draws(&draws, pts.view());
        let bound = 4.0 * hp.outputscale.sqrt() / (4096f64).sqrt();
        for i in 0..5 {
            let m = vals.row(i).mean().unwrap();
            assert!(
                (m - 0.7).abs() < bound,
                "mean {m} outside CLT band around 0.7"
            );
        }
    }

    #[test]
    fn marginals_are_gaussian_by_ks_test() {
        // weight-space exactness: for a fixed basis the marginal at any x is
        // exactly N(c, Phi(x).Phi(x)); KS at alpha = 0.01, L = 4096
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 128, 13));
        let draws = draw_prior(&basis, &hp, 4096, 2);
        let x = array![[0.37]];
        let mut vals = eval_draws(&draws, x.view()).row(0).to_vec();
        let var = basis.implied_kernel(x.row(0), x.row(0));
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len() as f64;
        let normal = Normal::new(0.0, var.sqrt()).unwrap();
        let mut d_stat: f64 = 0.0;
        for (i, v) in vals.iter().enumerate() {
            let cdf = normal.cdf(*v);
            let hi = (i as f64 + 1.0) / n - cdf;
            let lo = cdf - i as f64 / n;
            d_stat = d_stat.max(hi.max(lo));
        }
        let crit = 1.628 / n.sqrt();
        assert!(d_stat < crit, "KS statistic {d_stat} >= {crit}");
    }

    #[test]
    fn conditioning_on_empty_data_is_identity() {
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 64, 1));
        let draw = draw_prior(&basis, &hp, 1, 3).pop().unwrap();
        let data = Dataset::empty(1);
        let cond = matheron_condition(&draw, &data, &hp, 11).unwrap();
        let x = sobol::sobol_points(7, 1, 2);
        assert_eq!(draw.eval(x.view()), cond.eval(x.view()));
    }

    #[test]
    fn near_noiseless_conditioning_interpolates_training_targets() {
        let mut hp = se_hp(1);
        hp.noise = 1e-12;
        let data = Dataset::from_parts(array![[0.2], [0.6], [0.9]], array![1.0, -0.5, 0.25])
            .unwrap();
        let basis = Arc::new(sample_basis(&hp, 512, 5));
        let draws = draw_prior(&basis, &hp, 3, 8);
        let conds = matheron_condition_all(&draws, &data, &hp, 17).unwrap();
        for cond in &conds {
            let at_train = cond.eval(data.x().view());
            for i in 0..data.len() {
                assert_abs_diff_eq!(at_train[i], data.y_std()[i], epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn conditioned_ensemble_matches_analytic_posterior() {
        let mut hp = se_hp(1);
        hp.lengthscales = array![0.35];
        hp.noise = 0.05;
        let data = Dataset::from_parts(
            array![[0.1], [0.35], [0.55], [0.7], [0.92]],
            array![0.2, 1.1, -0.4, 0.6, -0.9],
        )
        .unwrap();
        let basis = Arc::new(sample_basis(&hp, 1024, 6));
        let draws = draw_prior(&basis, &hp, 2048, 9);
        let conds = matheron_condition_all(&draws, &data, &hp, 31).unwrap();
        let grid = sobol::sobol_points(12, 1, 14);
        let vals = eval_draws(&conds, grid.view());
        let post = analytic_posterior(&data, &hp, grid.view()).unwrap();
        let l = conds.len() as f64;
        for i in 0..grid.nrows() {
            let mean = vals.row(i).mean().unwrap();
            let var = vals.row(i).mapv(|v| (v - mean) * (v - mean)).sum() / (l - 1.0);
            assert!(
                (mean - post.mean[i]).abs() < 0.08,
                "mean mismatch at {i}: {mean} vs {}",
                post.mean[i]
            );
            assert!(
                (var.sqrt() - post.std()[i]).abs() < 0.08,
                "std mismatch at {i}"
            );
        }
    }

    #[test]
    fn zero_weight_draw_is_flat_with_zero_gradient() {
        let hp = se_hp(2);
        let basis = Arc::new(sample_basis(&hp, 32, 2));
        let draw = FunctionDraw::from_parts(Arc::clone(&basis), Array1::zeros(32), 0.0);
        let x = array![0.3, 0.8];
        let (v, g) = draw.value_and_grad(x.view());
        assert_eq!(v, 0.0);
        assert_eq!(g, array![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut hp = se_hp(3);
        hp.noise = 0.1;
        let data = Dataset::from_parts(
            array![[0.2, 0.5, 0.1], [0.8, 0.3, 0.9], [0.4, 0.9, 0.6]],
            array![0.5, -1.0, 0.7],
        )
        .unwrap();
        for kernel in [KernelKind::SquaredExponential, KernelKind::Matern52] {
            let mut h = hp.clone();
            h.kernel = kernel;
            let basis = Arc::new(sample_basis(&h, 256, 4));
            let draw = draw_prior(&basis, &h, 1, 6).pop().unwrap();
            let cond = matheron_condition(&draw, &data, &h, 12).unwrap();
            let x = array![0.31, 0.62, 0.47];
            let (_, g) = cond.value_and_grad(x.view());
            let step = 1e-5;
            for i in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let fd = (cond.eval_one(xp.view()) - cond.eval_one(xm.view())) / (2.0 * step);
                let rel = (g[i] - fd).abs() / fd.abs().max(1e-6);
                assert!(rel < 1e-3, "kernel {kernel:?} dim {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn batch_eval_equals_scalar_evals() {
        let hp = se_hp(2);
        let basis = Arc::new(sample_basis(&hp, 64, 3));
        let draws = draw_prior(&basis, &hp, 5, 4);
        let x = array![[0.1, 0.9], [0.5, 0.5], [0.8, 0.2]];
        let batch = eval_draws(&draws, x.view());
        for (j, d) in draws.iter().enumerate() {
            for i in 0..3 {
                assert_abs_diff_eq!(batch[[i, j]], d.eval_one(x.row(i)), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn batched_grads_match_single_draw_grads() {
        let mut hp = se_hp(2);
        hp.noise = 0.2;
        let data =
            Dataset::from_parts(array![[0.3, 0.4], [0.7, 0.6]], array![1.0, -1.0]).unwrap();
        let basis = Arc::new(sample_basis(&hp, 128, 8));
        let draws = draw_prior(&basis, &hp, 4, 9);
        let conds = matheron_condition_all(&draws, &data, &hp, 23).unwrap();
        let x = array![0.55, 0.25];
        let (vals, grads) = eval_draws_with_grads(&conds, x.view());
        for (j, d) in conds.iter().enumerate() {
            let (v, g) = d.value_and_grad(x.view());
            assert_abs_diff_eq!(vals[j], v, epsilon = 1e-10);
            for r in 0..2 {
                assert_abs_diff_eq!(grads[[r, j]], g[r], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn fantasy_extension_interpolates_the_fantasy_value() {
        let mut hp = se_hp(1);
        hp.noise = 1e-10;
        let data = Dataset::from_parts(array![[0.2], [0.8]], array![0.5, -0.5]).unwrap();
        let basis = Arc::new(sample_basis(&hp, 256, 2));
        let draws = draw_prior(&basis, &hp, 8, 3);
        let conds = matheron_condition_all(&draws, &data, &hp, 7).unwrap();
        let x_new = array![0.5];
        let y_new = 2.0;
        let ext = fantasy_extend_all(&conds, x_new.view(), y_new, &hp, 77).unwrap();
        for d in &ext {
            assert_abs_diff_eq!(d.eval_one(x_new.view()), y_new, epsilon = 1e-3);
        }
        // old training targets still honored
        for d in &ext {
            let at_train = d.eval(data.x().view());
            for i in 0..2 {
                assert_abs_diff_eq!(at_train[i], data.y_std()[i], epsilon = 1e-3);
            }
        }
    }
}
