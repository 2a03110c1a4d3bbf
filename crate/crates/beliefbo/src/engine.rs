//! Outer optimization loop: initialization, per-iteration model fit,
//! ensemble construction, acquisition maximization and bookkeeping.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2};

use crate::acquisition::{greedy_batch, AcquisitionKind};
use crate::belief::{build_ensemble, McBudget, UserBelief, WeightStrategy};
use crate::error::{Error, Result};
use crate::gp::{fit_map_from, FitOutcome};
use crate::kernel::{GpHyperparams, KernelKind};
use crate::pathwise::{draw_prior, sample_basis};
use crate::rng::{self, tag};
use crate::sobol::sobol_points;
use crate::space::{Dataset, SearchSpace};

#[derive(Debug, Clone)]
pub struct BoConfig {
    pub space: SearchSpace,
    pub belief: UserBelief,
    pub acquisition: AcquisitionKind,
    /// Total evaluation budget, including the initial design.
    pub evaluations: usize,
    /// Points proposed per iteration (sequential greedy when > 1).
    pub batch_size: usize,
    pub mc: McBudget,
    pub kernel: KernelKind,
    pub strategy: WeightStrategy,
    /// Initial design size; the first point is the belief mode when the
    /// belief is over the optimizer location and `init_with_mode` holds.
    pub init_count: usize,
    pub init_with_mode: bool,
    /// Hyperparameter MAP restarts per iteration.
    pub fit_restarts: usize,
    pub seed: u64,
}

impl BoConfig {
    pub fn new(space: SearchSpace, belief: UserBelief, acquisition: AcquisitionKind) -> Self {
        Self {
            space,
            belief,
            acquisition,
            evaluations: 10,
            batch_size: 1,
            mc: McBudget::default(),
            kernel: KernelKind::SquaredExponential,
            strategy: WeightStrategy::Rejection,
            init_count: 3,
            init_with_mode: true,
            fit_restarts: 8,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.evaluations < 1 || self.batch_size < 1 || self.init_count < 1 {
            return Err(Error::InvalidParameter(
                "evaluations, batch size and init count must be >= 1".into(),
            ));
        }
        self.mc.validate()?;
        if let AcquisitionKind::Mes {
            optimal_values,
            noise_samples,
        } = self.acquisition
        {
            if optimal_values < 1 || noise_samples < 1 {
                return Err(Error::InvalidParameter(
                    "MES sample counts must be >= 1".into(),
                ));
            }
            if optimal_values > self.mc.num_functions {
                return Err(Error::NotEnoughDraws {
                    requested: optimal_values,
                    available: self.mc.num_functions,
                });
            }
        }
        if let Some(mode) = self.belief.location_mode() {
            if mode.len() != self.space.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.space.dim(),
                    got: mode.len(),
                });
            }
        }
        Ok(())
    }
}

/// One evaluation's bookkeeping. Positions are original units.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub x: Array1<f64>,
    pub y: f64,
    /// Best observed objective value so far.
    pub incumbent: f64,
    pub seconds: f64,
    pub flags: Vec<String>,
}

/// Full run history; the queried inputs determine regret curves when the
/// benchmark's optimum is known.
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    /// Set when the objective failed and the loop halted early.
    pub halted: Option<String>,
}

impl RunRecord {
    pub fn queries(&self) -> Vec<Array1<f64>> {
        self.iterations.iter().map(|r| r.x.clone()).collect()
    }

    pub fn best_observed(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.incumbent)
    }
}

/// Initial design: the belief mode (for location beliefs) followed by
/// scrambled Sobol points; plain Sobol otherwise. Normalized coordinates.
pub fn initial_design(config: &BoConfig) -> Vec<Array1<f64>> {
    let dim = config.space.dim();
    let mode_first = config.init_with_mode && config.belief.location_mode().is_some();
    let n_sobol = if mode_first {
        config.init_count - 1
    } else {
        config.init_count
    };
    let mut points = Vec::with_capacity(config.init_count);
    if mode_first {
        let mode = config.belief.location_mode().unwrap();
        let norm = config
            .space
            .normalize(mode.view())
            .expect("validated dimensions")
            .mapv(|v| v.clamp(0.0, 1.0));
        points.push(norm);
    }
    let sob = sobol_points(
        n_sobol,
        dim,
        rng::derive_seed(config.seed, &[tag::INIT_DESIGN]),
    );
    for i in 0..n_sobol {
        points.push(sob.row(i).to_owned());
    }
    points
}

/// Outcome of one optimization step.
pub struct StepResult {
    /// Proposed normalized points (batch size many).
    pub points: Vec<Array1<f64>>,
    pub hp: GpHyperparams,
    pub flags: Vec<String>,
}

/// One iteration of the loop: refit hyperparameters, draw a fresh basis and
/// prior paths, build the belief-weighted ensemble, maximize the acquisition.
/// Deterministic given `(config.seed, data.len())`.
pub fn step(config: &BoConfig, data: &Dataset, warm: Option<&GpHyperparams>) -> Result<StepResult> {
    let it_seed = rng::derive_seed(config.seed, &[data.len() as u64]);
    let fit_seed = rng::derive_seed(it_seed, &[1]);
    let basis_seed = rng::derive_seed(it_seed, &[2]);
    let draws_seed = rng::derive_seed(it_seed, &[3]);
    let ens_seed = rng::derive_seed(it_seed, &[4]);
    let acq_seed = rng::derive_seed(it_seed, &[5]);

    let mut flags = Vec::new();
    let median = GpHyperparams::median(config.space.dim(), config.kernel);
    let warm_hp = warm.unwrap_or(&median);
    let FitOutcome { hp, fallback, .. } =
        fit_map_from(data, config.fit_restarts, fit_seed, Some(warm_hp))?;
    if fallback {
        flags.push("fit_fallback".to_string());
    }

    let basis = Arc::new(sample_basis(&hp, config.mc.rff_features, basis_seed));
    let prior_draws = draw_prior(&basis, &hp, config.mc.num_functions, draws_seed);
    let ensemble = build_ensemble(
        prior_draws,
        &config.belief,
        data,
        &hp,
        &config.mc,
        config.strategy,
        &config.space,
        ens_seed,
    )?;
    if ensemble.degenerate() {
        flags.push("belief_degenerate".to_string());
    }

    let points = match greedy_batch(
        config.acquisition,
        &ensemble,
        data,
        &hp,
        &config.space,
        config.batch_size,
        &config.mc,
        acq_seed,
    ) {
        Ok(points) => points,
        Err(_) => {
            // acquisition optimization failed outright: fall back to Sobol
            flags.push("acq_fallback".to_string());
            let sob = sobol_points(config.batch_size, config.space.dim(), acq_seed);
            (0..config.batch_size).map(|i| sob.row(i).to_owned()).collect()
        }
    };
    Ok(StepResult { points, hp, flags })
}

/// Run the full loop against an objective in original units.
///
/// With `resume`, the recorded evaluations are replayed into the dataset and
/// the loop continues toward the configured budget; per-step randomness is
/// keyed by the dataset size, so a single-point-per-iteration run continues
/// exactly as if it had never stopped.
pub fn run(
    config: &BoConfig,
    objective: &mut dyn FnMut(&Array1<f64>) -> Result<f64>,
    resume: Option<RunRecord>,
) -> Result<RunRecord> {
    config.validate()?;
    let dim = config.space.dim();
    let mut record = resume.unwrap_or_else(|| RunRecord {
        seed: config.seed,
        ..RunRecord::default()
    });
    record.halted = None;

    let mut data = Dataset::empty(dim);
    for rec in &record.iterations {
        let norm = config.space.normalize(rec.x.view())?;
        data.push(norm.view(), rec.y)?;
    }

    let init = initial_design(config);
    let mut warm: Option<GpHyperparams> = None;

    while data.len() < config.evaluations {
        let started = Instant::now();
        let n = data.len();
        let (points, flags) = if n < config.init_count {
            (vec![init[n].clone()], Vec::new())
        } else {
            let out = step(config, &data, warm.as_ref())?;
            warm = Some(out.hp);
            (out.points, out.flags)
        };
        let seconds = started.elapsed().as_secs_f64();
        let per_point = seconds / points.len() as f64;

        for p in points {
            if data.len() >= config.evaluations {
                break;
            }
            let x_orig = config.space.denormalize(p.view())?;
            let y = match objective(&x_orig) {
                Ok(y) => y,
                Err(e) => {
                    record.halted = Some(e.to_string());
                    return Ok(record);
                }
            };
            data.push(p.view(), y)?;
            let incumbent = record
                .iterations
                .last()
                .map_or(y, |r| r.incumbent.max(y));
            record.iterations.push(IterationRecord {
                iteration: record.iterations.len(),
                x: x_orig,
                y,
                incumbent,
                seconds: per_point,
                flags: flags.clone(),
            });
        }
    }
    Ok(record)
}

/// Queried points of a record as a matrix (test/report helper).
pub fn queries_matrix(record: &RunRecord, dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((record.iterations.len(), dim));
    for (i, rec) in record.iterations.iter().enumerate() {
        m.row_mut(i).assign(&rec.x);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn quadratic_objective(center: Array1<f64>) -> impl FnMut(&Array1<f64>) -> Result<f64> {
        move |x: &Array1<f64>| Ok(-(x - &center).mapv(|v| v * v).sum())
    }

    fn fast_config(belief: UserBelief, dim: usize, seed: u64) -> BoConfig {
        let mut cfg = BoConfig::new(
            SearchSpace::unit(dim),
            belief,
            AcquisitionKind::LogEi,
        );
        let mut mc = McBudget::fast();
        mc.num_functions = 48;
        mc.rff_features = 128;
        mc.resample_cap = 1024;
        cfg.mc = mc;
        cfg.fit_restarts = 2;
        cfg.seed = seed;
        cfg
    }

    #[test]
    fn initial_design_starts_at_the_location_mode() {
        let belief =
            UserBelief::optimum_location(array![0.3, 1.2], array![0.2, 0.2]).unwrap();
        let mut cfg = fast_config(belief, 2, 1);
        cfg.evaluations = 3;
        let pts = initial_design(&cfg);
        assert_eq!(pts.len(), 3);
        // mode clipped to the cube: (0.3, 1.2) -> (0.3, 1.0)
        assert_eq!(pts[0], array![0.3, 1.0]);
    }

    #[test]
    fn initial_design_uniform_is_all_sobol() {
        let mut cfg = fast_config(UserBelief::Uniform, 2, 3);
        cfg.init_count = 3;
        let pts = initial_design(&cfg);
        assert_eq!(pts.len(), 3);
        let sob = sobol_points(3, 2, rng::derive_seed(3, &[tag::INIT_DESIGN]));
        for i in 0..3 {
            assert_eq!(pts[i], sob.row(i).to_owned());
        }
    }

    #[test]
    fn single_init_uses_only_the_mode() {
        let belief =
            UserBelief::optimum_location(array![0.6], array![0.25]).unwrap();
        let mut cfg = fast_config(belief, 1, 2);
        cfg.init_count = 1;
        let pts = initial_design(&cfg);
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0], array![0.6]);
    }

    #[test]
    fn zero_bo_iterations_record_only_the_initial_design() {
        let mut cfg = fast_config(UserBelief::Uniform, 1, 5);
        cfg.evaluations = 3;
        cfg.init_count = 3;
        let mut obj = quadratic_objective(array![0.5]);
        let rec = run(&cfg, &mut obj, None).unwrap();
        assert_eq!(rec.iterations.len(), 3);
        assert!(rec.halted.is_none());
    }

    #[test]
    fn identical_config_and_seed_give_bit_identical_queries() {
        let mut cfg = fast_config(UserBelief::Uniform, 2, 7);
        cfg.evaluations = 6;
        let mut o1 = quadratic_objective(array![0.4, 0.7]);
        let mut o2 = quadratic_objective(array![0.4, 0.7]);
        let r1 = run(&cfg, &mut o1, None).unwrap();
        let r2 = run(&cfg, &mut o2, None).unwrap();
        for (a, b) in r1.iterations.iter().zip(&r2.iterations) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn uniform_belief_strategies_produce_identical_traces() {
        // the belief machinery is a strict generalization: with a uniform
        // belief, rejection and importance paths coincide query-for-query
        let mut cfg_r = fast_config(UserBelief::Uniform, 1, 11);
        cfg_r.evaluations = 6;
        cfg_r.strategy = WeightStrategy::Rejection;
        let mut cfg_i = cfg_r.clone();
        cfg_i.strategy = WeightStrategy::Importance;
        let mut o1 = quadratic_objective(array![0.3]);
        let mut o2 = quadratic_objective(array![0.3]);
        let r1 = run(&cfg_r, &mut o1, None).unwrap();
        let r2 = run(&cfg_i, &mut o2, None).unwrap();
        for (a, b) in r1.iterations.iter().zip(&r2.iterations) {
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn queries_stay_inside_the_space() {
        let space = SearchSpace::new(array![-2.0, 3.0], array![1.0, 9.0]).unwrap();
        let belief =
            UserBelief::optimum_location(array![-1.0, 7.0], array![0.5, 1.0]).unwrap();
        let mut cfg = fast_config(belief, 2, 13);
        cfg.space = space.clone();
        cfg.evaluations = 6;
        let center = array![-1.0, 7.0];
        let mut obj = move |x: &Array1<f64>| {
            assert!(space.contains(x.view()), "query {x} left the space");
            Ok(-(x - &center).mapv(|v| v * v).sum())
        };
        let rec = run(&cfg, &mut obj, None).unwrap();
        assert_eq!(rec.iterations.len(), 6);
    }

    #[test]
    fn incumbent_is_monotone_nondecreasing() {
        let mut cfg = fast_config(UserBelief::Uniform, 1, 17);
        cfg.evaluations = 7;
        let mut obj = quadratic_objective(array![0.8]);
        let rec = run(&cfg, &mut obj, None).unwrap();
        for w in rec.iterations.windows(2) {
            assert!(w[1].incumbent >= w[0].incumbent);
        }
    }

    #[test]
    fn resume_reproduces_the_uninterrupted_trajectory() {
        let mut cfg = fast_config(UserBelief::Uniform, 1, 19);
        cfg.evaluations = 5;
        let mut obj = quadratic_objective(array![0.6]);
        let partial = run(&cfg, &mut obj, None).unwrap();

        let mut cfg_full = cfg.clone();
        cfg_full.evaluations = 8;
        let mut obj2 = quadratic_objective(array![0.6]);
        let full = run(&cfg_full, &mut obj2, None).unwrap();

        let mut obj3 = quadratic_objective(array![0.6]);
        let resumed = run(&cfg_full, &mut obj3, Some(partial)).unwrap();
        assert_eq!(resumed.iterations.len(), 8);
        for (a, b) in full.iterations.iter().zip(&resumed.iterations) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn objective_failure_halts_gracefully() {
        let mut cfg = fast_config(UserBelief::Uniform, 1, 23);
        cfg.evaluations = 6;
        let mut calls = 0;
        let mut obj = move |x: &Array1<f64>| {
            calls += 1;
            if calls > 4 {
                return Err(Error::ObjectiveFailed("sensor offline".into()));
            }
            Ok(-x.mapv(|v| v * v).sum())
        };
        let rec = run(&cfg, &mut obj, None).unwrap();
        assert_eq!(rec.iterations.len(), 4);
        assert!(rec.halted.as_deref().unwrap().contains("sensor offline"));
    }

    #[test]
    fn location_belief_guides_the_first_post_init_query() {
        // data sits far from the prior mass (the belief region is genuinely
        // unexplored): the first optimized query should land inside the
        // belief's 2-sigma ball in most runs
        let mode = array![0.8, 0.8];
        let sigma = 0.15;
        let far_points = [array![0.1, 0.1], array![0.3, 0.15], array![0.15, 0.35]];
        let mut hits = 0;
        let total = 20;
        for seed in 0..total {
            let belief = UserBelief::optimum_location(
                mode.clone(),
                array![sigma, sigma],
            )
            .unwrap();
            let mut cfg = fast_config(belief, 2, 100 + seed);
            cfg.mc.num_functions = 96;
            cfg.mc.rff_features = 256;
            cfg.mc.resample_cap = 4096;
            cfg.evaluations = 4;
            let mut obj = quadratic_objective(array![0.2, 0.2]);
            let mut pre = RunRecord {
                seed: cfg.seed,
                ..RunRecord::default()
            };
            for (i, x) in far_points.iter().enumerate() {
                let y = obj(x).unwrap();
                pre.iterations.push(IterationRecord {
                    iteration: i,
                    x: x.clone(),
                    y,
                    incumbent: y,
                    seconds: 0.0,
                    flags: Vec::new(),
                });
            }
            let rec = run(&cfg, &mut obj, Some(pre)).unwrap();
            let q = &rec.iterations[3].x;
            let dist = (q - &mode).mapv(|v| v * v).sum().sqrt();
            if dist <= 2.0 * sigma * (2.0f64).sqrt() {
                hits += 1;
            }
        }
        assert!(
            hits * 100 >= total * 80,
            "only {hits}/{total} first queries landed in the prior ball"
        );
    }

    #[test]
    fn batch_runs_consume_the_budget_in_batches() {
        let mut cfg = fast_config(UserBelief::Uniform, 1, 29);
        cfg.evaluations = 7;
        cfg.batch_size = 3;
        let mut obj = quadratic_objective(array![0.5]);
        let rec = run(&cfg, &mut obj, None).unwrap();
        assert_eq!(rec.iterations.len(), 7);
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let mut cfg = fast_config(UserBelief::Uniform, 1, 1);
        cfg.evaluations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = fast_config(UserBelief::Uniform, 1, 1);
        cfg.acquisition = AcquisitionKind::Mes {
            optimal_values: 10_000,
            noise_samples: 4,
        };
        assert!(cfg.validate().is_err());
        let belief = UserBelief::optimum_location(array![0.5], array![0.1]).unwrap();
        let mut cfg = fast_config(belief, 2, 1);
        cfg.evaluations = 3;
        assert!(cfg.validate().is_err());
    }
}
