//! User beliefs over function properties and the belief-weighted ensemble.
//!
//! A belief scores a whole sample path by one of its properties: the location
//! of its argmax or its (noiseless) maximal value. Scores act as likelihoods
//! on prior draws; rejection resampling or importance weighting then turns a
//! batch of prior paths into a weighted ensemble targeting the belief-tilted
//! posterior. Weights are always computed on prior paths, before the data
//! update, and are invariant to rescaling of the belief density.

use ndarray::Array1;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::GpHyperparams;
use crate::pathwise::{
    draw_prior_offset, eval_draws, matheron_condition_all, FunctionDraw,
};
use crate::rng::{self, tag};
use crate::sobol::sobol_points;
use crate::space::{Dataset, SearchSpace, Standardizer};

/// Belief over a function property, specified in original units.
#[derive(Debug, Clone, PartialEq)]
pub enum UserBelief {
    Uniform,
    /// Gaussian over the optimizer location, truncated to the search space.
    OptimumLocation {
        mean: Array1<f64>,
        /// Per-dimension standard deviation, original units.
        std: Array1<f64>,
    },
    /// Gaussian over the optimal (noiseless) value, raw output units.
    OptimalValue { mean: f64, std: f64 },
}

impl UserBelief {
    pub fn optimum_location(mean: Array1<f64>, std: Array1<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: std.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("belief mean must be finite".into()));
        }
        if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter("belief std must be > 0".into()));
        }
        Ok(Self::OptimumLocation { mean, std })
    }

    pub fn optimal_value(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std > 0.0) || !std.is_finite() {
            return Err(Error::InvalidParameter(
                "optimal-value belief needs finite mean and std > 0".into(),
            ));
        }
        Ok(Self::OptimalValue { mean, std })
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Self::Uniform)
    }

    /// Mode of a location belief in original units, if any.
    pub fn location_mode(&self) -> Option<&Array1<f64>> {
        match self {
            Self::OptimumLocation { mean, .. } => Some(mean),
            _ => None,
        }
    }

    /// Unnormalized log density of the optimizer-location belief at a
    /// normalized point. Strictly finite on the cube.
    pub fn log_density_location(&self, x_norm: &Array1<f64>, space: &SearchSpace) -> f64 {
        match self {
            Self::OptimumLocation { mean, std } => {
                let mut q = 0.0;
                for i in 0..x_norm.len() {
                    let range = space.upper()[i] - space.lower()[i];
                    let mu = (mean[i] - space.lower()[i]) / range;
                    let sd = std[i] / range;
                    let z = (x_norm[i] - mu) / sd;
                    q += z * z;
                }
                -0.5 * q
            }
            _ => 0.0,
        }
    }

    /// Unnormalized log score of one path given its cached prior argmax
    /// (normalized location, standardized value).
    pub fn log_weight(
        &self,
        argmax: &(Array1<f64>, f64),
        space: &SearchSpace,
        standardizer: Standardizer,
    ) -> Result<f64> {
        let lw = match self {
            Self::Uniform => 0.0,
            Self::OptimumLocation { .. } => self.log_density_location(&argmax.0, space),
            Self::OptimalValue { mean, std } => {
                let raw = standardizer.to_raw(argmax.1);
                let z = (raw - mean) / std;
                -0.5 * z * z
            }
        };
        if lw.is_nan() {
            return Err(Error::NonFiniteDensity(format!("{self:?}")));
        }
        Ok(lw)
    }
}

/// Monte Carlo budgets for ensembles and inner optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct McBudget {
    /// Ensemble size L.
    pub num_functions: usize,
    /// RFF feature count m.
    pub rff_features: usize,
    /// Maximum prior draws consumed by rejection resampling.
    pub resample_cap: usize,
    /// Optimal-value samples J for entropy-search acquisitions.
    pub optimal_values: usize,
    /// Noise samples K per (draw, optimal value).
    pub noise_samples: usize,
    /// Sobol candidates per dimension for inner argmax search.
    pub argmax_candidates_per_dim: usize,
    pub argmax_ascent_starts: usize,
    pub argmax_ascent_steps: usize,
    /// Sobol candidates per dimension for acquisition optimization.
    pub acq_candidates_per_dim: usize,
    pub acq_restarts: usize,
    pub acq_ascent_steps: usize,
}

impl McBudget {
    /// Budgets used for the synthetic benchmark experiments.
    pub fn paper_synthetic() -> Self {
        Self {
            num_functions: 768,
            rff_features: 2048,
            resample_cap: 150_000,
            optimal_values: 32,
            noise_samples: 8,
            argmax_candidates_per_dim: 512,
            argmax_ascent_starts: 4,
            argmax_ascent_steps: 50,
            acq_candidates_per_dim: 1024,
            acq_restarts: 8,
            acq_ascent_steps: 50,
        }
    }

    /// Reduced budgets for tests and the fast self-check suite.
    pub fn fast() -> Self {
        Self {
            num_functions: 128,
            rff_features: 512,
            resample_cap: 4096,
            optimal_values: 16,
            noise_samples: 4,
            argmax_candidates_per_dim: 128,
            argmax_ascent_starts: 2,
            argmax_ascent_steps: 30,
            acq_candidates_per_dim: 256,
            acq_restarts: 4,
            acq_ascent_steps: 40,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.num_functions,
            self.rff_features,
            self.resample_cap,
            self.optimal_values,
            self.noise_samples,
            self.argmax_candidates_per_dim,
            self.argmax_ascent_starts,
            self.argmax_ascent_steps,
            self.acq_candidates_per_dim,
            self.acq_restarts,
            self.acq_ascent_steps,
        ];
        if fields.iter().any(|&v| v == 0) {
            return Err(Error::InvalidParameter(
                "all Monte Carlo budget fields must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for McBudget {
    fn default() -> Self {
        Self::paper_synthetic()
    }
}

/// How belief scores enter the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightStrategy {
    /// Retain prior paths with probability `rho / max rho`, then condition;
    /// retained paths carry unit weight.
    Rejection,
    /// Condition every path and keep `rho` as an importance weight.
    Importance,
}

/// Conditioned sample paths with belief weights.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble {
    draws: Vec<FunctionDraw>,
    /// Log weights shifted so the maximum is zero.
    log_weights: Array1<f64>,
    /// `exp(log_weights)`, in (0, 1].
    weights: Array1<f64>,
    /// Per-draw argmax of the conditioned paths (normalized point,
    /// standardized value). Filled on demand.
    argmax_cache: Option<Vec<(Array1<f64>, f64)>>,
    degenerate: bool,
}

impl WeightedEnsemble {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> &[FunctionDraw] {
        &self.draws
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn log_weights(&self) -> &Array1<f64> {
        &self.log_weights
    }

    /// Normalizer `Z = sum of weights`; positive by construction.
    pub fn z(&self) -> f64 {
        self.weights.sum()
    }

    /// True when a degenerate belief forced the uniform-weight fallback.
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn argmax_cache(&self) -> Option<&[(Array1<f64>, f64)]> {
        self.argmax_cache.as_deref()
    }

    /// Locate (and cache) the argmax of every conditioned draw.
    pub fn ensure_argmax_cache(&mut self, budget: &McBudget, seed: u64) -> &[(Array1<f64>, f64)] {
        if self.argmax_cache.is_none() {
            let dim = dim_of(&self.draws);
            let cache = locate_argmaxes(
                &self.draws,
                budget.argmax_candidates_per_dim * dim,
                budget.argmax_ascent_starts,
                budget.argmax_ascent_steps,
                seed,
            );
            self.argmax_cache = Some(cache);
        }
        self.argmax_cache.as_deref().unwrap()
    }

    /// Replace the draws (fantasy batching); invalidates the argmax cache
    /// but keeps weights, which were fixed by the prior-path scores.
    pub(crate) fn replace_draws(&self, draws: Vec<FunctionDraw>) -> Self {
        assert_eq!(draws.len(), self.draws.len());
        Self {
            draws,
            log_weights: self.log_weights.clone(),
            weights: self.weights.clone(),
            argmax_cache: None,
            degenerate: self.degenerate,
        }
    }

    /// Build directly from conditioned draws and log weights (test helper).
    pub fn from_parts(draws: Vec<FunctionDraw>, log_weights: Array1<f64>) -> Self {
        assert_eq!(draws.len(), log_weights.len());
        let max = log_weights.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let shifted = log_weights.mapv(|v| v - max);
        let weights = shifted.mapv(f64::exp);
        Self {
            draws,
            log_weights: shifted,
            weights,
            argmax_cache: None,
            degenerate: false,
        }
    }
}

fn dim_of(draws: &[FunctionDraw]) -> usize {
    draws[0].basis().dim()
}

/// Best point of one path: Sobol screening followed by projected gradient
/// ascent from the top candidates. Returns the normalized location and the
/// standardized value.
pub fn locate_argmax(
    draw: &FunctionDraw,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> (Array1<f64>, f64) {
    assert!(budget >= 1);
    debug_assert_eq!(space.dim(), draw.basis().dim());
    locate_argmaxes(std::slice::from_ref(draw), budget, 4, 50, seed)
        .pop()
        .expect("one draw in, one out")
}

/// Batched argmax search over draws sharing a basis. Candidates are shared;
/// ascent runs per draw in parallel.
pub fn locate_argmaxes(
    draws: &[FunctionDraw],
    candidates: usize,
    starts: usize,
    steps: usize,
    seed: u64,
) -> Vec<(Array1<f64>, f64)> {
    let dim = dim_of(draws);
    let cand = sobol_points(candidates.max(1), dim, rng::derive_seed(seed, &[tag::ARGMAX]));
    let vals = eval_draws(draws, cand.view());

    draws
        .par_iter()
        .enumerate()
        .map(|(j, draw)| {
            let col = vals.column(j);
            let mut order: Vec<usize> = (0..col.len()).collect();
            order.sort_by(|&a, &b| col[b].partial_cmp(&col[a]).unwrap());
            let mut best_x = cand.row(order[0]).to_owned();
            let mut best_v = col[order[0]];
            for &s in order.iter().take(starts.max(1)) {
                let (x, v) = ascend_path(draw, cand.row(s).to_owned(), steps);
                if v > best_v {
                    best_v = v;
                    best_x = x;
                }
            }
            (best_x, best_v)
        })
        .collect()
}

/// Projected gradient ascent on one path inside the unit cube.
fn ascend_path(draw: &FunctionDraw, mut x: Array1<f64>, steps: usize) -> (Array1<f64>, f64) {
    let (mut value, mut grad) = draw.value_and_grad(x.view());
    let mut step = 0.1;
    for _ in 0..steps {
        let gnorm = grad.dot(&grad).sqrt();
        if gnorm < 1e-10 || step < 1e-12 {
            break;
        }
        let mut improved = false;
        for _ in 0..10 {
            let cand = (&x + &(&grad * (step / gnorm))).mapv(|v| v.clamp(0.0, 1.0));
            let (v, g) = draw.value_and_grad(cand.view());
            if v > value {
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

/// Score one path under a belief (unnormalized density at its prior argmax).
pub fn belief_weight(
    belief: &UserBelief,
    draw: &FunctionDraw,
    space: &SearchSpace,
    standardizer: Standardizer,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    let argmax = locate_argmax(draw, space, budget, seed);
    Ok(belief.log_weight(&argmax, space, standardizer)?.exp())
}

/// Assemble a weighted ensemble from prior draws.
///
/// Rejection: retain each prior path with probability `rho / max rho` (max
/// over the pilot batch, i.e. the draws passed in), streaming further prior
/// paths from the shared basis until `budget.num_functions` paths are
/// retained or `budget.resample_cap` paths have been considered. Retained
/// paths are conditioned and carry unit weights.
///
/// Importance: condition the passed draws and keep `rho` as weights.
///
/// A belief whose scores all underflow to zero (or a rejection pass that
/// retains nothing) falls back to uniform weights and sets the degenerate
/// flag.
pub fn build_ensemble(
    prior_draws: Vec<FunctionDraw>,
    belief: &UserBelief,
    data: &Dataset,
    hp: &GpHyperparams,
    budget: &McBudget,
    strategy: WeightStrategy,
    space: &SearchSpace,
    seed: u64,
) -> Result<WeightedEnsemble> {
    if prior_draws.is_empty() {
        return Err(Error::InvalidParameter("need at least one prior draw".into()));
    }
    budget.validate()?;
    let standardizer = data.standardizer();

    if belief.is_uniform() {
        // rho = 1 for every path under either strategy
        let draws = matheron_condition_all(&prior_draws, data, hp, seed)?;
        let n = draws.len();
        return Ok(WeightedEnsemble {
            draws,
            log_weights: Array1::zeros(n),
            weights: Array1::ones(n),
            argmax_cache: None,
            degenerate: false,
        });
    }

    let argmax_budget = budget.argmax_candidates_per_dim * dim_of(&prior_draws);
    let score = |draws: &[FunctionDraw], block: u64| -> Result<Vec<f64>> {
        let cache = locate_argmaxes(
            draws,
            argmax_budget,
            budget.argmax_ascent_starts,
            budget.argmax_ascent_steps,
            rng::derive_seed(seed, &[tag::PRIOR_WEIGHTS, block]),
        );
        cache
            .iter()
            .map(|am| belief.log_weight(am, space, standardizer))
            .collect()
    };

    let pilot_scores = score(&prior_draws, 0)?;
    let log_max = pilot_scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));

    match strategy {
        WeightStrategy::Importance => {
            let draws = matheron_condition_all(&prior_draws, data, hp, seed)?;
            if !log_max.is_finite() {
                let n = draws.len();
                return Ok(WeightedEnsemble {
                    draws,
                    log_weights: Array1::zeros(n),
                    weights: Array1::ones(n),
                    argmax_cache: None,
                    degenerate: true,
                });
            }
            let log_weights = Array1::from_iter(pilot_scores.iter().map(|&s| s - log_max));
            let weights = log_weights.mapv(f64::exp);
            Ok(WeightedEnsemble {
                draws,
                log_weights,
                weights,
                argmax_cache: None,
                degenerate: false,
            })
        }
        WeightStrategy::Rejection => {
            let target = budget.num_functions;
            let mut retained: Vec<FunctionDraw> = Vec::with_capacity(target);
            if log_max.is_finite() {
                let consider = |draws: Vec<FunctionDraw>,
                                    scores: Vec<f64>,
                                    first_index: u64,
                                    retained: &mut Vec<FunctionDraw>| {
                    for (i, (draw, s)) in draws.into_iter().zip(scores).enumerate() {
                        if retained.len() >= target {
                            break;
                        }
                        let p = (s - log_max).exp();
                        let mut r =
                            rng::stream(seed, &[tag::REJECTION, first_index + i as u64]);
                        if r.random::<f64>() < p {
                            retained.push(draw);
                        }
                    }
                };
                let pilot_len = prior_draws.len();
                let basis = std::sync::Arc::clone(prior_draws[0].basis());
                consider(prior_draws.clone(), pilot_scores, 0, &mut retained);
                let mut drawn = pilot_len;
                let mut block = 1u64;
                while retained.len() < target && drawn < budget.resample_cap {
                    let count = pilot_len.min(budget.resample_cap - drawn);
                    let extra = draw_prior_offset(
                        &basis,
                        hp,
                        count,
                        rng::derive_seed(seed, &[tag::EXTRA_DRAWS]),
                        drawn as u64,
                    );
                    let scores = score(&extra, block)?;
                    consider(extra, scores, drawn as u64, &mut retained);
                    drawn += count;
                    block += 1;
                }
            }
            if retained.is_empty() {
                let draws = matheron_condition_all(&prior_draws, data, hp, seed)?;
                let n = draws.len();
                return Ok(WeightedEnsemble {
                    draws,
                    log_weights: Array1::zeros(n),
                    weights: Array1::ones(n),
                    argmax_cache: None,
                    degenerate: true,
                });
            }
            let draws = matheron_condition_all(&retained, data, hp, seed)?;
            let n = draws.len();
            Ok(WeightedEnsemble {
                draws,
                log_weights: Array1::zeros(n),
                weights: Array1::ones(n),
                argmax_cache: None,
                degenerate: false,
            })
        }
    }
}

/// Histogram TV distance helper shared by tests and the self-check suite.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelKind;
    use crate::pathwise::{draw_prior, sample_basis};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::sync::Arc;

    fn se_hp(d: usize) -> GpHyperparams {
        let mut hp = GpHyperparams::median(d, KernelKind::SquaredExponential);
        hp.lengthscales = Array1::from_elem(d, 0.15);
        hp.noise = 0.05;
        hp
    }

    #[test]
    fn paper_budget_matches_reported_settings() {
        let b = McBudget::paper_synthetic();
        assert_eq!(b.rff_features, 2048);
        assert_eq!(b.num_functions, 768);
        assert_eq!(b.resample_cap, 150_000);
        assert_eq!(b.optimal_values, 32);
        let hp = se_hp(1);
        let basis = sample_basis(&hp, b.rff_features, 1);
        assert_eq!(basis.feature_count(), 2048);
    }

    #[test]
    fn single_cosine_peak_is_located() {
        // one feature: f(x) = scale * w * cos(2*pi*x + pi), peak at x = 0.5
        let basis = Arc::new(crate::pathwise::test_support::basis_with(
            array![[std::f64::consts::TAU]],
            array![std::f64::consts::PI],
            (2.0f64).sqrt(),
            KernelKind::SquaredExponential,
        ));
        let draw = FunctionDraw::from_parts(Arc::clone(&basis), array![1.0], 0.0);
        let space = SearchSpace::unit(1);
        let (x, v) = locate_argmax(&draw, &space, 256, 3);
        assert!((x[0] - 0.5).abs() < 1e-3, "peak at {x}, want 0.5");
        assert_abs_diff_eq!(v, (2.0f64).sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn constant_draw_returns_the_constant() {
        let hp = se_hp(2);
        let basis = Arc::new(sample_basis(&hp, 16, 2));
        let draw = FunctionDraw::from_parts(basis, Array1::zeros(16), 1.25);
        let space = SearchSpace::unit(2);
        let (_, v) = locate_argmax(&draw, &space, 64, 1);
        assert_eq!(v, 1.25);
    }

    #[test]
    fn doubling_budget_never_decreases_value() {
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 128, 7));
        let space = SearchSpace::unit(1);
        for idx in 0..5 {
            let draw = draw_prior(&basis, &hp, idx + 1, 9).pop().unwrap();
            let mut prev = f64::NEG_INFINITY;
            for budget in [32, 64, 128, 256] {
                let (_, v) = locate_argmax(&draw, &space, budget, 13);
                assert!(
                    v >= prev - 1e-12,
                    "budget {budget} value {v} below previous {prev}"
                );
                prev = v;
            }
        }
    }

    #[test]
    fn uniform_weight_is_one() {
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 32, 1));
        let draw = draw_prior(&basis, &hp, 1, 2).pop().unwrap();
        let space = SearchSpace::unit(1);
        let w = belief_weight(
            &UserBelief::Uniform,
            &draw,
            &space,
            Standardizer { mean: 0.0, scale: 1.0 },
            64,
            1,
        )
        .unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn weight_is_maximal_for_draw_peaking_at_the_mode() {
        let space = SearchSpace::unit(1);
        let belief = UserBelief::optimum_location(array![0.5], array![0.25]).unwrap();
        let std = Standardizer { mean: 0.0, scale: 1.0 };
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 96, 3));
        let draws = draw_prior(&basis, &hp, 64, 4);
        let cache = locate_argmaxes(&draws, 256, 2, 30, 5);
        let mut best_at_mode: Option<f64> = None;
        let mut max_weight = f64::NEG_INFINITY;
        for (i, am) in cache.iter().enumerate() {
            let w = belief.log_weight(am, &space, std).unwrap().exp();
            max_weight = max_weight.max(w);
            if (am.0[0] - 0.5).abs() < 0.02 {
                best_at_mode = Some(best_at_mode.unwrap_or(0.0).max(w));
            }
            let _ = i;
        }
        if let Some(w) = best_at_mode {
            assert!(w >= max_weight - 1e-9);
        }
        // the mode itself scores exp(0) = 1, the max possible
        let at_mode = belief
            .log_weight(&(array![0.5], 0.0), &space, std)
            .unwrap()
            .exp();
        assert_eq!(at_mode, 1.0);
        assert!(max_weight <= 1.0 + 1e-12);
    }

    #[test]
    fn weights_agree_with_dense_grid_argmax_oracle() {
        let space = SearchSpace::unit(1);
        let belief = UserBelief::optimum_location(array![0.4], array![0.2]).unwrap();
        let std = Standardizer { mean: 0.0, scale: 1.0 };
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 128, 11));
        let draws = draw_prior(&basis, &hp, 16, 12);
        // oracle: brute-force argmax over a 10^4-point grid, polished by a
        // gradient-free ternary search inside the winning basin
        let grid = Array2::from_shape_fn((10_000, 1), |(i, _)| i as f64 / 9_999.0);
        let vals = eval_draws(&draws, grid.view());
        for (j, draw) in draws.iter().enumerate() {
            let col = vals.column(j);
            let mut bi = 0;
            for i in 0..col.len() {
                if col[i] > col[bi] {
                    bi = i;
                }
            }
            let h = 1.0 / 9_999.0;
            let mut lo = (grid[[bi, 0]] - h).max(0.0);
            let mut hi = (grid[[bi, 0]] + h).min(1.0);
            for _ in 0..200 {
                let a = lo + (hi - lo) / 3.0;
                let b = hi - (hi - lo) / 3.0;
                if draw.eval_one(array![a].view()) < draw.eval_one(array![b].view()) {
                    lo = a;
                } else {
                    hi = b;
                }
            }
            let xo = array![0.5 * (lo + hi)];
            let vo = draw.eval_one(xo.view());
            let oracle_w = belief
                .log_weight(&(xo, vo), &space, std)
                .unwrap()
                .exp();
            let w = belief_weight(&belief, draw, &space, std, 512, 7).unwrap();
            assert!(
                (w - oracle_w).abs() < 1e-6,
                "draw {j}: weight {w} vs oracle {oracle_w}"
            );
        }
    }

    #[test]
    fn uniform_belief_matches_plain_conditioning_under_both_strategies() {
        let hp = se_hp(1);
        let data =
            Dataset::from_parts(array![[0.2], [0.7]], array![0.4, -0.6]).unwrap();
        let basis = Arc::new(sample_basis(&hp, 64, 2));
        let draws = draw_prior(&basis, &hp, 32, 3);
        let space = SearchSpace::unit(1);
        let budget = McBudget::fast();
        let seed = 19;
        let vanilla = matheron_condition_all(&draws, &data, &hp, seed).unwrap();
        for strategy in [WeightStrategy::Rejection, WeightStrategy::Importance] {
            let ens = build_ensemble(
                draws.clone(),
                &UserBelief::Uniform,
                &data,
                &hp,
                &budget,
                strategy,
                &space,
                seed,
            )
            .unwrap();
            assert_eq!(ens.len(), 32);
            assert!(ens.weights().iter().all(|&w| w == 1.0));
            let x = array![[0.45]];
            let a = eval_draws(ens.draws(), x.view());
            let b = eval_draws(&vanilla, x.view());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejection_histogram_tracks_the_location_belief() {
        // 1D, no data: retained-draw argmaxes should follow pi itself
        let space = SearchSpace::unit(1);
        let belief = UserBelief::optimum_location(array![0.45], array![0.2]).unwrap();
        let hp = se_hp(1);
        let data = Dataset::empty(1);
        let basis = Arc::new(sample_basis(&hp, 256, 5));
        let mut budget = McBudget::fast();
        budget.num_functions = 2048;
        budget.resample_cap = 30_000;
        let draws = draw_prior(&basis, &hp, 2048, 6);
        let mut ens = build_ensemble(
            draws, &belief, &data, &hp, &budget,
            WeightStrategy::Rejection, &space, 23,
        )
        .unwrap();
        assert!(!ens.degenerate());
        assert!(ens.len() >= 1024, "retained only {}", ens.len());
        let cache = ens.ensure_argmax_cache(&budget, 9).to_vec();

        const BINS: usize = 20;
        let mut hist = vec![0.0; BINS];
        for (x, _) in &cache {
            let b = ((x[0] * BINS as f64) as usize).min(BINS - 1);
            hist[b] += 1.0;
        }
        let total: f64 = hist.iter().sum();
        for h in hist.iter_mut() {
            *h /= total;
        }
        // binned truncated Gaussian via fine quadrature
        let mut target = vec![0.0; BINS];
        let mut z = 0.0;
        let steps = 2000;
        for i in 0..steps {
            let x = (i as f64 + 0.5) / steps as f64;
            let d = (-0.5 * ((x - 0.45) / 0.2) * ((x - 0.45) / 0.2)).exp();
            target[((x * BINS as f64) as usize).min(BINS - 1)] += d;
            z += d;
        }
        for t in target.iter_mut() {
            *t /= z;
        }
        let tv = tv_distance(&hist, &target);
        assert!(tv < 0.1, "TV distance {tv} >= 0.1");
    }

    #[test]
    fn optimal_value_belief_filters_draw_maxima() {
        // tight belief over a high value: retained maxima concentrate there
        let space = SearchSpace::unit(1);
        let hp = se_hp(1);
        let data = Dataset::empty(1);
        let basis = Arc::new(sample_basis(&hp, 256, 8));
        let belief = UserBelief::optimal_value(2.0, 0.1).unwrap();
        let mut budget = McBudget::fast();
        budget.num_functions = 256;
        budget.resample_cap = 20_000;
        let draws = draw_prior(&basis, &hp, 512, 10);
        let mut ens = build_ensemble(
            draws, &belief, &data, &hp, &budget,
            WeightStrategy::Rejection, &space, 31,
        )
        .unwrap();
        assert!(!ens.degenerate());
        let cache = ens.ensure_argmax_cache(&budget, 3).to_vec();
        let mut maxima: Vec<f64> = cache.iter().map(|(_, v)| *v).collect();
        maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q10 = maxima[maxima.len() / 10];
        let q90 = maxima[maxima.len() * 9 / 10];
        assert!(q10 > 1.6, "10% quantile {q10} too low");
        assert!(q90 < 2.4, "90% quantile {q90} too high");
    }

    #[test]
    fn weights_are_scale_invariant() {
        // multiplying the unnormalized density by a constant shifts every
        // log weight equally, so retention probabilities and normalized
        // weights are unchanged
        let space = SearchSpace::unit(1);
        let belief = UserBelief::optimum_location(array![0.3], array![0.15]).unwrap();
        let std = Standardizer { mean: 0.0, scale: 1.0 };
        let ams = [
            (array![0.1], 0.0),
            (array![0.3], 1.0),
            (array![0.8], -0.4),
        ];
        let lw: Vec<f64> = ams
            .iter()
            .map(|a| belief.log_weight(a, &space, std).unwrap())
            .collect();
        let shift = 3.7; // log of an arbitrary positive constant
        let max0 = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, l) in lw.iter().enumerate() {
            let p0 = (l - max0).exp();
            let p1 = ((l + shift) - (max0 + shift)).exp();
            assert_abs_diff_eq!(p0, p1, epsilon = 1e-14);
            let _ = i;
        }
    }

    #[test]
    fn weights_do_not_depend_on_the_conditioning_data() {
        let space = SearchSpace::unit(1);
        let belief = UserBelief::optimum_location(array![0.6], array![0.2]).unwrap();
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 64, 4));
        let draws = draw_prior(&basis, &hp, 24, 5);
        let budget = McBudget::fast();
        let d1 = Dataset::from_parts(array![[0.25]], array![1.0]).unwrap();
        let d2 =
            Dataset::from_parts(array![[0.1], [0.5], [0.9]], array![-2.0, 0.0, 2.0]).unwrap();
        let e1 = build_ensemble(
            draws.clone(), &belief, &d1, &hp, &budget,
            WeightStrategy::Importance, &space, 42,
        )
        .unwrap();
        let e2 = build_ensemble(
            draws, &belief, &d2, &hp, &budget,
            WeightStrategy::Importance, &space, 42,
        )
        .unwrap();
        assert_eq!(e1.log_weights(), e2.log_weights());
    }

    #[test]
    fn wide_location_belief_equalizes_weights() {
        let space = SearchSpace::unit(2);
        let hp = se_hp(2);
        let basis = Arc::new(sample_basis(&hp, 64, 6));
        let draws = draw_prior(&basis, &hp, 32, 7);
        let budget = McBudget::fast();
        let data = Dataset::empty(2);
        let belief =
            UserBelief::optimum_location(array![0.5, 0.5], array![1e6, 1e6]).unwrap();
        let ens = build_ensemble(
            draws, &belief, &data, &hp, &budget,
            WeightStrategy::Importance, &space, 3,
        )
        .unwrap();
        let z = ens.z();
        let n = ens.len() as f64;
        for &w in ens.weights() {
            assert!((w / z - 1.0 / n).abs() < 1e-6);
        }
    }

    #[test]
    fn underflowing_belief_falls_back_to_uniform_with_flag() {
        let space = SearchSpace::unit(1);
        let hp = se_hp(1);
        let basis = Arc::new(sample_basis(&hp, 64, 9));
        let draws = draw_prior(&basis, &hp, 16, 11);
        let budget = McBudget::fast();
        let data = Dataset::empty(1);
        // sigma subnormal: every squared z overflows, all log scores are -inf
        let belief = UserBelief::optimum_location(array![0.5], array![1e-320]).unwrap();
        for strategy in [WeightStrategy::Rejection, WeightStrategy::Importance] {
            let ens = build_ensemble(
                draws.clone(), &belief, &data, &hp, &budget, strategy, &space, 13,
            )
            .unwrap();
            assert!(ens.degenerate());
            assert!(ens.weights().iter().all(|&w| w == 1.0));
            assert!(ens.z() > 0.0);
        }
    }
}
