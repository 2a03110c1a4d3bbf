//! Fast property suite behind the `selfcheck` CLI command.
//!
//! Each check measures one statistic against a fixed threshold and reports
//! pass/fail; the whole suite is budgeted to finish well under five minutes.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{array, Array1, Array2};

use crate::acquisition::{
    incumbent, optimize_acq, sample_optimal_values, AcquisitionFn, LogEiAcquisition,
    MesAcquisition,
};
use crate::belief::{
    build_ensemble, locate_argmaxes, tv_distance, McBudget, UserBelief, WeightStrategy,
    WeightedEnsemble,
};
use crate::engine::{run, BoConfig, RunRecord};
use crate::gp::analytic_posterior;
use crate::kernel::{kernel_eval, GpHyperparams, KernelKind};
use crate::pathwise::{draw_prior, eval_draws, matheron_condition_all, sample_basis};
use crate::sobol::sobol_points;
use crate::space::{Dataset, SearchSpace};

/// Outcome of one check: `statistic` compared against `threshold` under
/// `ok_below` (true: pass when statistic < threshold).
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub statistic: f64,
    pub threshold: f64,
    pub ok_below: bool,
    pub pass: bool,
    pub seconds: f64,
}

impl CheckResult {
    fn new(name: &'static str, statistic: f64, threshold: f64, ok_below: bool, t: Instant) -> Self {
        let pass = if ok_below {
            statistic < threshold
        } else {
            statistic >= threshold
        };
        Self {
            name,
            statistic,
            threshold,
            ok_below,
            pass,
            seconds: t.elapsed().as_secs_f64(),
        }
    }
}

/// Max absolute error between the empirical covariance of prior draws and
/// the analytic kernel over a grid. `scale_bug` perturbs the weight scale
/// and exists so a mutation test can verify the check has teeth.
pub(crate) fn rff_fidelity_statistic(
    kernel: KernelKind,
    dim: usize,
    features: usize,
    draws: usize,
    seed: u64,
    scale_bug: f64,
) -> f64 {
    let hp = GpHyperparams::median(dim, kernel);
    let basis = Arc::new(sample_basis(&hp, features, seed));
    let mut paths = draw_prior(&basis, &hp, draws, seed ^ 0x5eed);
    if scale_bug != 1.0 {
        for p in &mut paths {
            let w = p.weights() * scale_bug;
            *p = crate::pathwise::FunctionDraw::from_parts(Arc::clone(&basis), w, 0.0);
        }
    }
    let grid = sobol_points(10, dim, 17);
    let vals = eval_draws(&paths, grid.view());
    let l = draws as f64;
    let mut max_err: f64 = 0.0;
    for i in 0..grid.nrows() {
        let mi = vals.row(i).mean().unwrap();
        for j in i..grid.nrows() {
            let mj = vals.row(j).mean().unwrap();
            let emp = (&vals.row(i).to_owned() - mi).dot(&(&vals.row(j).to_owned() - mj))
                / (l - 1.0);
            let k = kernel_eval(grid.row(i), grid.row(j), &hp).unwrap();
            max_err = max_err.max((emp - k).abs());
        }
    }
    max_err
}

/// Basis-only kernel approximation error (no draw sampling): max abs
/// difference between the basis-implied kernel and the analytic kernel.
pub(crate) fn rff_bias_statistic(
    kernel: KernelKind,
    dim: usize,
    features: usize,
    seed: u64,
) -> f64 {
    let hp = GpHyperparams::median(dim, kernel);
    let basis = sample_basis(&hp, features, seed);
    let grid = sobol_points(10, dim, 23);
    let mut max_err: f64 = 0.0;
    for i in 0..grid.nrows() {
        for j in i..grid.nrows() {
            let implied = basis.implied_kernel(grid.row(i), grid.row(j));
            let k = kernel_eval(grid.row(i), grid.row(j), &hp).unwrap();
            max_err = max_err.max((implied - k).abs());
        }
    }
    max_err
}

fn matheron_consistency_statistic(draws: usize, seed: u64) -> f64 {
    let mut hp = GpHyperparams::median(1, KernelKind::SquaredExponential);
    hp.lengthscales = array![0.3];
    hp.noise = 0.05;
    let data = Dataset::from_parts(
        array![[0.12], [0.33], [0.51], [0.74], [0.9]],
        array![0.4, 1.2, -0.3, 0.8, -0.6],
    )
    .unwrap();
    let basis = Arc::new(sample_basis(&hp, 1024, seed));
    let prior = draw_prior(&basis, &hp, draws, seed ^ 0xbeef);
    let cond = matheron_condition_all(&prior, &data, &hp, seed ^ 0xfeed).unwrap();
    let grid = sobol_points(12, 1, 31);
    let vals = eval_draws(&cond, grid.view());
    let post = analytic_posterior(&data, &hp, grid.view()).unwrap();
    let l = draws as f64;
    let mut max_err: f64 = 0.0;
    for i in 0..grid.nrows() {
        let mean = vals.row(i).mean().unwrap();
        let var = vals.row(i).mapv(|v| (v - mean) * (v - mean)).sum() / (l - 1.0);
        max_err = max_err.max((mean - post.mean[i]).abs());
        max_err = max_err.max((var.sqrt() - post.std()[i]).abs());
    }
    max_err
}

fn belief_filter_tv_statistic(retained_target: usize, seed: u64) -> f64 {
    let mut hp = GpHyperparams::median(1, KernelKind::SquaredExponential);
    hp.lengthscales = array![0.15];
    let space = SearchSpace::unit(1);
    let belief = UserBelief::optimum_location(array![0.45], array![0.2]).unwrap();
    let data = Dataset::empty(1);
    let basis = Arc::new(sample_basis(&hp, 256, seed));
    let mut budget = McBudget::fast();
    budget.num_functions = retained_target;
    budget.resample_cap = 20 * retained_target;
    let prior = draw_prior(&basis, &hp, retained_target, seed ^ 0xabcd);
    let mut ens = build_ensemble(
        prior,
        &belief,
        &data,
        &hp,
        &budget,
        WeightStrategy::Rejection,
        &space,
        seed ^ 0xd1ce,
    )
    .unwrap();
    let cache = ens.ensure_argmax_cache(&budget, seed ^ 0xcafe).to_vec();

    const BINS: usize = 20;
    let mut hist = vec![0.0; BINS];
    for (x, _) in &cache {
        hist[((x[0] * BINS as f64) as usize).min(BINS - 1)] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    for h in hist.iter_mut() {
        *h /= total;
    }
    let mut target = vec![0.0; BINS];
    let mut z = 0.0;
    let steps = 4000;
    for i in 0..steps {
        let x = (i as f64 + 0.5) / steps as f64;
        let d = (-0.5 * ((x - 0.45) / 0.2) * ((x - 0.45) / 0.2)).exp();
        target[((x * BINS as f64) as usize).min(BINS - 1)] += d;
        z += d;
    }
    for t in target.iter_mut() {
        *t /= z;
    }
    tv_distance(&hist, &target)
}

fn uniform_equivalence_statistic(seed: u64) -> f64 {
    // sup distance between query sequences of the rejection and importance
    // code paths under a uniform belief; exact zero expected
    let mut cfg = BoConfig::new(
        SearchSpace::unit(2),
        UserBelief::Uniform,
        crate::acquisition::AcquisitionKind::LogEi,
    );
    let mut mc = McBudget::fast();
    mc.num_functions = 48;
    mc.rff_features = 128;
    cfg.mc = mc;
    cfg.fit_restarts = 2;
    cfg.evaluations = 6;
    cfg.seed = seed;
    let center = array![0.4, 0.7];
    let run_with = |strategy: WeightStrategy| -> RunRecord {
        let mut c = cfg.clone();
        c.strategy = strategy;
        let centre = center.clone();
        let mut obj =
            move |x: &Array1<f64>| Ok(-(x - &centre).mapv(|v: f64| v * v).sum());
        run(&c, &mut obj, None).unwrap()
    };
    let a = run_with(WeightStrategy::Rejection);
    let b = run_with(WeightStrategy::Importance);
    let mut sup: f64 = 0.0;
    for (ra, rb) in a.iterations.iter().zip(&b.iterations) {
        sup = sup.max((&ra.x - &rb.x).mapv(f64::abs).sum());
    }
    sup
}

fn kernel_symmetry_statistic() -> f64 {
    let mut max_err: f64 = 0.0;
    for kind in [KernelKind::SquaredExponential, KernelKind::Matern52] {
        let hp = GpHyperparams::new(array![0.3, 1.7], 2.1, 0.1, 0.0, kind).unwrap();
        let pts = sobol_points(24, 2, 7);
        for i in 0..pts.nrows() {
            for j in 0..pts.nrows() {
                let a = kernel_eval(pts.row(i), pts.row(j), &hp).unwrap();
                let b = kernel_eval(pts.row(j), pts.row(i), &hp).unwrap();
                max_err = max_err.max((a - b).abs());
            }
        }
    }
    max_err
}

fn path_gradient_statistic(seed: u64) -> f64 {
    let mut hp = GpHyperparams::median(2, KernelKind::SquaredExponential);
    hp.noise = 0.1;
    let data = Dataset::from_parts(array![[0.2, 0.6], [0.8, 0.3]], array![0.7, -0.4]).unwrap();
    let basis = Arc::new(sample_basis(&hp, 256, seed));
    let prior = draw_prior(&basis, &hp, 4, seed ^ 0x77);
    let cond = matheron_condition_all(&prior, &data, &hp, seed ^ 0x78).unwrap();
    let mut worst: f64 = 0.0;
    let probes = sobol_points(5, 2, 3);
    for draw in &cond {
        for p in probes.rows() {
            let (_, g) = draw.value_and_grad(p);
            for i in 0..2 {
                let h = 1e-5;
                let mut xp = p.to_owned();
                let mut xm = p.to_owned();
                xp[i] += h;
                xm[i] -= h;
                let fd = (draw.eval_one(xp.view()) - draw.eval_one(xm.view())) / (2.0 * h);
                let rel = (g[i] - fd).abs() / fd.abs().max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

fn logei_monotonicity_statistic() -> f64 {
    // worst decrease of acq_logei when raising one sample value
    let hp = GpHyperparams::median(1, KernelKind::SquaredExponential);
    let basis = Arc::new(sample_basis(&hp, 4, 11));
    let build = |vals: &[f64]| -> WeightedEnsemble {
        let draws = vals
            .iter()
            .map(|&c| {
                crate::pathwise::FunctionDraw::from_parts(
                    Arc::clone(&basis),
                    Array1::zeros(4),
                    c,
                )
            })
            .collect();
        WeightedEnsemble::from_parts(draws, array![0.0, -0.5, -1.0, -0.25])
    };
    let base = [0.4, 0.95, 0.7, 0.1];
    let x = array![0.5];
    let v0 = LogEiAcquisition::new(&build(&base), 0.8).eval_one(x.view());
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut up = base;
        up[i] += 0.3;
        let v1 = LogEiAcquisition::new(&build(&up), 0.8).eval_one(x.view());
        worst = worst.max(v0 - v1);
    }
    worst
}

fn mes_nonnegativity_statistic(seed: u64) -> f64 {
    let mut hp = GpHyperparams::median(1, KernelKind::SquaredExponential);
    hp.lengthscales = array![0.25];
    hp.noise = 0.05;
    let data =
        Dataset::from_parts(array![[0.2], [0.5], [0.8]], array![0.1, 0.9, -0.5]).unwrap();
    let basis = Arc::new(sample_basis(&hp, 128, seed));
    let prior = draw_prior(&basis, &hp, 96, seed ^ 0x99);
    let cond = matheron_condition_all(&prior, &data, &hp, seed ^ 0x9a).unwrap();
    let mut ens = WeightedEnsemble::from_parts(cond, Array1::zeros(96));
    let budget = McBudget::fast();
    let fstars = sample_optimal_values(&mut ens, 16, &budget, seed ^ 0x9b).unwrap();
    let mut worst = f64::INFINITY;
    for &xv in &[0.15, 0.45, 0.72, 0.93] {
        let mut acc = 0.0;
        for rep in 0..50 {
            let acq = MesAcquisition::new(&ens, fstars.clone(), &hp, 4, seed + 31 * rep);
            acc += acq.eval_one(array![xv].view());
        }
        worst = worst.min(acc / 50.0);
    }
    worst
}

fn belief_scale_invariance_statistic() -> f64 {
    let space = SearchSpace::unit(1);
    let belief = UserBelief::optimum_location(array![0.3], array![0.15]).unwrap();
    let std = crate::space::Standardizer {
        mean: 0.0,
        scale: 1.0,
    };
    let ams = [(array![0.1], 0.0), (array![0.3], 1.0), (array![0.8], -0.4)];
    let lw: Vec<f64> = ams
        .iter()
        .map(|a| belief.log_weight(a, &space, std).unwrap())
        .collect();
    let shift = 2.3;
    let max0 = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut worst: f64 = 0.0;
    for l in &lw {
        let p0 = (l - max0).exp();
        let p1 = ((l + shift) - (max0 + shift)).exp();
        worst = worst.max((p0 - p1).abs());
    }
    worst
}

fn incumbent_monotonicity_statistic(seed: u64) -> f64 {
    let mut cfg = BoConfig::new(
        SearchSpace::unit(1),
        UserBelief::Uniform,
        crate::acquisition::AcquisitionKind::LogEi,
    );
    let mut mc = McBudget::fast();
    mc.num_functions = 32;
    mc.rff_features = 96;
    cfg.mc = mc;
    cfg.fit_restarts = 2;
    cfg.evaluations = 6;
    cfg.seed = seed;
    let mut obj = |x: &Array1<f64>| Ok(-(x[0] - 0.62f64).powi(2));
    let rec = run(&cfg, &mut obj, None).unwrap();
    let mut worst: f64 = 0.0;
    for w in rec.iterations.windows(2) {
        worst = worst.max(w[0].incumbent - w[1].incumbent);
    }
    worst
}

fn determinism_statistic(seed: u64) -> f64 {
    let mut hp = GpHyperparams::median(1, KernelKind::SquaredExponential);
    hp.noise = 0.05;
    let data = Dataset::from_parts(array![[0.3], [0.7]], array![0.5, -0.5]).unwrap();
    let build = || -> Array1<f64> {
        let basis = Arc::new(sample_basis(&hp, 128, seed));
        let prior = draw_prior(&basis, &hp, 32, seed ^ 0x11);
        let cond = matheron_condition_all(&prior, &data, &hp, seed ^ 0x12).unwrap();
        let ens = WeightedEnsemble::from_parts(cond, Array1::zeros(32));
        let inc = incumbent(&ens, &data).unwrap();
        let acq = LogEiAcquisition::new(&ens, inc.value);
        let budget = McBudget::fast();
        optimize_acq(&acq, &SearchSpace::unit(1), 4, &budget, seed ^ 0x13)
    };
    let a = build();
    let b = build();
    (&a - &b).mapv(f64::abs).sum()
}

fn argmax_sanity_statistic(seed: u64) -> f64 {
    // located argmax value must dominate a dense-grid scan within tolerance
    let hp = GpHyperparams::median(1, KernelKind::SquaredExponential);
    let basis = Arc::new(sample_basis(&hp, 128, seed));
    let draws = draw_prior(&basis, &hp, 8, seed ^ 0x21);
    let located = locate_argmaxes(&draws, 512, 4, 50, seed ^ 0x22);
    let grid = Array2::from_shape_fn((4096, 1), |(i, _)| i as f64 / 4095.0);
    let vals = eval_draws(&draws, grid.view());
    let mut worst: f64 = 0.0;
    for (j, (_, v)) in located.iter().enumerate() {
        let grid_best = vals.column(j).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        worst = worst.max(grid_best - v);
    }
    worst
}

/// Run the fast suite. Pass `quick = true` to shrink sampling budgets (used
/// by unit tests); the CLI uses `quick = false`.
pub fn run_selfcheck(quick: bool) -> Vec<CheckResult> {
    let (mat_draws, tv_draws) = if quick { (1024, 1024) } else { (4096, 4096) };
    let mut out = Vec::new();

    // the fidelity gate is meaningful only at its stated sampling budget
    let t = Instant::now();
    let se_fid = rff_fidelity_statistic(
        KernelKind::SquaredExponential, 3, 2048, 4096, 9, 1.0,
    );
    out.push(CheckResult::new("rff-fidelity-se", se_fid, 0.05, true, t));

    let t = Instant::now();
    let mut se_worse_than_matern = 0usize;
    let seeds = if quick { 6 } else { 20 };
    let mut se_sum = 0.0;
    let mut ma_sum = 0.0;
    for s in 0..seeds {
        let se = rff_bias_statistic(KernelKind::SquaredExponential, 3, 512, 100 + s);
        let ma = rff_bias_statistic(KernelKind::Matern52, 3, 512, 100 + s);
        se_sum += se;
        ma_sum += ma;
        if ma >= se {
            se_worse_than_matern += 1;
        }
    }
    out.push(CheckResult::new(
        "rff-bias-matern-ge-se",
        ma_sum / se_sum,
        1.0,
        false,
        t,
    ));
    let _ = se_worse_than_matern;

    let t = Instant::now();
    let mat = matheron_consistency_statistic(mat_draws, 7);
    out.push(CheckResult::new("matheron-consistency", mat, 0.05, true, t));

    let t = Instant::now();
    let tv = belief_filter_tv_statistic(tv_draws, 9);
    out.push(CheckResult::new("belief-filter-tv", tv, 0.1, true, t));

    let t = Instant::now();
    let eq = uniform_equivalence_statistic(3);
    out.push(CheckResult::new("uniform-equivalence", eq, 1e-12, true, t));

    let t = Instant::now();
    let sym = kernel_symmetry_statistic();
    out.push(CheckResult::new("kernel-symmetry", sym, 1e-15, true, t));

    let t = Instant::now();
    let grad = path_gradient_statistic(5);
    out.push(CheckResult::new("path-gradient-fd", grad, 1e-3, true, t));

    let t = Instant::now();
    let mono = logei_monotonicity_statistic();
    out.push(CheckResult::new("logei-monotonicity", mono, 1e-12, true, t));

    let t = Instant::now();
    let mes = mes_nonnegativity_statistic(13);
    out.push(CheckResult::new("mes-nonnegative", mes, -0.02, false, t));

    let t = Instant::now();
    let scale = belief_scale_invariance_statistic();
    out.push(CheckResult::new("belief-scale-invariance", scale, 1e-12, true, t));

    let t = Instant::now();
    let inc = incumbent_monotonicity_statistic(17);
    out.push(CheckResult::new("incumbent-monotone", inc, 1e-12, true, t));

    let t = Instant::now();
    let det = determinism_statistic(19);
    out.push(CheckResult::new("determinism", det, 1e-15, true, t));

    let t = Instant::now();
    let am = argmax_sanity_statistic(21);
    out.push(CheckResult::new("argmax-dominates-grid", am, 1e-6, true, t));

    out
}


/// Public alias used by diagnostics binaries.
pub fn rff_fidelity_statistic_pub(
    kernel: KernelKind,
    dim: usize,
    features: usize,
    draws: usize,
    seed: u64,
    scale_bug: f64,
) -> f64 {
    rff_fidelity_statistic(kernel, dim, features, draws, seed, scale_bug)
}
