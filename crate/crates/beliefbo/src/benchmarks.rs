//! Synthetic benchmark suite with calibrated observation noise, known optima
//! (maximization convention: classic minimization forms are negated), and
//! prior construction for well- and poorly-located beliefs.

use ndarray::{array, Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::belief::UserBelief;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::space::SearchSpace;

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const HARTMANN6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

const HARTMANN6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

const HARTMANN3_A: [[f64; 3]; 4] = [
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
];

const HARTMANN3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    Hartmann3,
    Hartmann4,
    Hartmann6,
    Levy,
    Rosenbrock,
    StyblinskiTang,
}

/// A registered benchmark: bounds, noise level and the known maximizer.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub name: &'static str,
    pub display_name: &'static str,
    pub dim: usize,
    pub noise_sd: f64,
    objective: Objective,
    lower: f64,
    upper: f64,
    x_star: Array1<f64>,
    f_star: f64,
}

impl BenchmarkSpec {
    pub fn space(&self) -> SearchSpace {
        SearchSpace::new(
            Array1::from_elem(self.dim, self.lower),
            Array1::from_elem(self.dim, self.upper),
        )
        .expect("registry bounds are valid")
    }

    /// Known maximizer, original units.
    pub fn x_star(&self) -> &Array1<f64> {
        &self.x_star
    }

    /// Known maximum of the noiseless objective.
    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// Noiseless objective value (maximization sign).
    pub fn noiseless(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_bounds(x)?;
        Ok(self.raw(x))
    }

    fn check_bounds(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        for (i, &v) in x.iter().enumerate() {
            if !(self.lower..=self.upper).contains(&v) {
                return Err(Error::OutOfBounds { dim: i, value: v });
            }
        }
        Ok(())
    }

    fn raw(&self, x: ArrayView1<f64>) -> f64 {
        match self.objective {
            Objective::Hartmann3 => hartmann(&HARTMANN3_A, &HARTMANN3_P, x),
            Objective::Hartmann6 => hartmann(&HARTMANN6_A, &HARTMANN6_P, x),
            Objective::Hartmann4 => {
                // 4-D variant: first four columns, rescaled
                let mut outer = 0.0;
                for i in 0..4 {
                    let mut s = 0.0;
                    for j in 0..4 {
                        let d = x[j] - HARTMANN6_P[i][j];
                        s += HARTMANN6_A[i][j] * d * d;
                    }
                    outer += HARTMANN_ALPHA[i] * (-s).exp();
                }
                -(1.1 - outer) / 0.839
            }
            Objective::Levy => {
                let d = x.len();
                let w = |v: f64| 1.0 + (v - 1.0) / 4.0;
                let pi = std::f64::consts::PI;
                let w1 = w(x[0]);
                let mut f = (pi * w1).sin().powi(2);
                for i in 0..d - 1 {
                    let wi = w(x[i]);
                    f += (wi - 1.0).powi(2) * (1.0 + 10.0 * (pi * wi + 1.0).sin().powi(2));
                }
                let wd = w(x[d - 1]);
                f += (wd - 1.0).powi(2) * (1.0 + (2.0 * pi * wd).sin().powi(2));
                -f
            }
            Objective::Rosenbrock => {
                let mut f = 0.0;
                for i in 0..x.len() - 1 {
                    f += 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2);
                }
                -f
            }
            Objective::StyblinskiTang => {
                let s: f64 = x
                    .iter()
                    .map(|&v| v.powi(4) - 16.0 * v * v + 5.0 * v)
                    .sum();
                -0.5 * s
            }
        }
    }
}

fn hartmann<const D: usize>(a: &[[f64; D]; 4], p: &[[f64; D]; 4], x: ArrayView1<f64>) -> f64 {
    let mut f = 0.0;
    for i in 0..4 {
        let mut s = 0.0;
        for j in 0..D {
            let d = x[j] - p[i][j];
            s += a[i][j] * d * d;
        }
        f += HARTMANN_ALPHA[i] * (-s).exp();
    }
    f
}

/// All registered benchmarks. Optima were frozen from a brute-force search
/// plus local refinement; the test suite re-derives them.
pub fn registry() -> Vec<BenchmarkSpec> {
    vec![
        BenchmarkSpec {
            name: "hartmann3",
            display_name: "Hartmann (3D)",
            dim: 3,
            noise_sd: 0.25,
            objective: Objective::Hartmann3,
            lower: 0.0,
            upper: 1.0,
            x_star: array![0.11458886, 0.55564889, 0.85254698],
            f_star: 3.8627797873,
        },
        BenchmarkSpec {
            name: "hartmann4",
            display_name: "Hartmann (4D)",
            dim: 4,
            noise_sd: 0.25,
            objective: Objective::Hartmann4,
            lower: 0.0,
            upper: 1.0,
            x_star: array![0.18739527, 0.19415152, 0.55791777, 0.26477963],
            f_star: 3.1344941412,
        },
        BenchmarkSpec {
            name: "levy5",
            display_name: "Levy (5D)",
            dim: 5,
            noise_sd: 0.5,
            objective: Objective::Levy,
            lower: -5.0,
            upper: 5.0,
            x_star: Array1::ones(5),
            f_star: 0.0,
        },
        BenchmarkSpec {
            name: "hartmann6",
            display_name: "Hartmann (6D)",
            dim: 6,
            noise_sd: 0.25,
            objective: Objective::Hartmann6,
            lower: 0.0,
            upper: 1.0,
            x_star: array![
                0.20168948, 0.15001102, 0.47687402, 0.27533242, 0.31165150, 0.65730055
            ],
            f_star: 3.3223680114,
        },
        BenchmarkSpec {
            name: "rosenbrock6",
            display_name: "Rosenbrock (6D)",
            dim: 6,
            noise_sd: 5.0,
            objective: Objective::Rosenbrock,
            lower: -2.048,
            upper: 2.048,
            x_star: Array1::ones(6),
            f_star: 0.0,
        },
        BenchmarkSpec {
            name: "stybtang7",
            display_name: "Stybtang (7D)",
            dim: 7,
            noise_sd: 1.0,
            objective: Objective::StyblinskiTang,
            lower: -4.0,
            upper: 4.0,
            x_star: Array1::from_elem(7, -2.903534164957),
            f_star: 274.163159926398,
        },
    ]
}

pub fn lookup(name: &str) -> Option<BenchmarkSpec> {
    registry().into_iter().find(|b| b.name == name)
}

/// Noisy evaluation: `f(x) + noise_sd * z` with `z` standard normal.
pub fn evaluate<R: Rng>(spec: &BenchmarkSpec, x: ArrayView1<f64>, rng: &mut R) -> Result<f64> {
    let f = spec.noiseless(x)?;
    Ok(f + spec.noise_sd * rng.sample::<f64, _>(StandardNormal))
}

/// Objective closure with a deterministic per-evaluation noise stream.
pub fn noisy_objective(
    spec: BenchmarkSpec,
    seed: u64,
) -> impl FnMut(&Array1<f64>) -> Result<f64> {
    let mut count: u64 = 0;
    move |x: &Array1<f64>| {
        let mut r = rng::stream(seed, &[tag::NOISE, count]);
        count += 1;
        evaluate(&spec, x.view(), &mut r)
    }
}

/// Prior quality following the synthetic-benchmark protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorQuality {
    Good,
    Bad,
}

/// Construction of a location belief around a benchmark's known optimum.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    pub quality: PriorQuality,
    /// Offset length as a fraction of the normalized range; the offset is
    /// `q * sqrt(d)` in normalized units.
    pub offset_fraction: f64,
    /// Belief standard deviation in normalized units, applied per dimension.
    pub sigma: f64,
    pub seed: u64,
}

impl PriorSpec {
    pub fn good(seed: u64) -> Self {
        Self {
            quality: PriorQuality::Good,
            offset_fraction: 0.1,
            sigma: 0.25,
            seed,
        }
    }

    pub fn bad(seed: u64) -> Self {
        Self {
            quality: PriorQuality::Bad,
            offset_fraction: 1.0,
            sigma: 0.25,
            seed,
        }
    }
}

/// Gaussian location belief offset from the optimum by `q*sqrt(d)` along a
/// random direction. Good priors resample the direction until the mode lies
/// inside the space; bad priors land outside and are clipped to the nearest
/// boundary point.
pub fn build_prior(spec: &BenchmarkSpec, pspec: &PriorSpec) -> Result<UserBelief> {
    let space = spec.space();
    let d = spec.dim;
    let x_star_norm = space.normalize(spec.x_star.view())?;
    let c = pspec.offset_fraction * (d as f64).sqrt();
    let mut r = rng::stream(pspec.seed, &[tag::NOISE, 0x9d]);

    let mut mode_norm = Array1::zeros(d);
    for attempt in 0..10_000 {
        let mut dir = Array1::zeros(d);
        for v in dir.iter_mut() {
            *v = r.sample::<f64, _>(StandardNormal);
        }
        let norm = dir.dot(&dir).sqrt();
        if norm == 0.0 {
            continue;
        }
        mode_norm = &x_star_norm + &(&dir * (c / norm));
        let inside = mode_norm.iter().all(|&v| (0.0..=1.0).contains(&v));
        match pspec.quality {
            PriorQuality::Good if inside => break,
            PriorQuality::Bad => {
                // guaranteed outside for q = 1; clip along the shortest path
                mode_norm.mapv_inplace(|v| v.clamp(0.0, 1.0));
                break;
            }
            _ => {
                if attempt == 9_999 {
                    return Err(Error::InvalidParameter(
                        "could not place the prior mode inside the space".into(),
                    ));
                }
            }
        }
    }

    let mean = space.denormalize(mode_norm.view())?;
    let std = space.range() * pspec.sigma;
    UserBelief::optimum_location(mean, std)
}

/// Gaussian belief over the optimal value centered at the true optimum.
pub fn build_maxvalue_prior(spec: &BenchmarkSpec, sigma: f64) -> Result<UserBelief> {
    UserBelief::optimal_value(spec.f_star, sigma)
}

/// Simple regret curve: `r_n = f_star - max_{i<=n} f(x_i)` over noiseless
/// values of the queried points.
pub fn simple_regret(spec: &BenchmarkSpec, queries: &[Array1<f64>]) -> Result<Vec<f64>> {
    let mut best = f64::NEG_INFINITY;
    let mut out = Vec::with_capacity(queries.len());
    for x in queries {
        best = best.max(spec.noiseless(x.view())?);
        out.push(spec.f_star - best);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sobol::sobol_points;
    use approx::assert_abs_diff_eq;

    #[test]
    fn registry_matches_reported_noise_and_bounds() {
        let names: Vec<&str> = registry().iter().map(|b| b.name).collect();
        assert_eq!(
            names,
            vec!["hartmann3", "hartmann4", "levy5", "hartmann6", "rosenbrock6", "stybtang7"]
        );
        let h4 = lookup("hartmann4").unwrap();
        assert_eq!(h4.noise_sd, 0.25);
        let levy = lookup("levy5").unwrap();
        assert_eq!((levy.lower, levy.upper, levy.noise_sd), (-5.0, 5.0, 0.5));
        let ros = lookup("rosenbrock6").unwrap();
        assert_eq!((ros.lower, ros.upper, ros.noise_sd), (-2.048, 2.048, 5.0));
        let st = lookup("stybtang7").unwrap();
        assert_eq!((st.lower, st.upper, st.noise_sd), (-4.0, 4.0, 1.0));
        assert!(lookup("nope").is_none());
    }

    #[test]
    fn rosenbrock_and_levy_peak_at_ones() {
        let ros = lookup("rosenbrock6").unwrap();
        assert_abs_diff_eq!(ros.noiseless(Array1::ones(6).view()).unwrap(), 0.0);
        let levy = lookup("levy5").unwrap();
        assert_abs_diff_eq!(
            levy.noiseless(Array1::ones(5).view()).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let h4 = lookup("hartmann4").unwrap();
        let x = array![0.5, 0.5, 0.5, 1.5];
        assert!(matches!(
            h4.noiseless(x.view()),
            Err(Error::OutOfBounds { dim: 3, .. })
        ));
    }

    /// Brute-force maximum: Sobol screening plus coordinate-wise golden
    /// section refinement. Independent of the registry's frozen values.
    fn brute_force_max(spec: &BenchmarkSpec, points: usize, seed: u64) -> (Array1<f64>, f64) {
        let space = spec.space();
        let cand = sobol_points(points, spec.dim, seed);
        let mut best_x = Array1::zeros(spec.dim);
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..points {
            let x = space.denormalize(cand.row(i)).unwrap();
            let v = spec.raw(x.view());
            if v > best_v {
                best_v = v;
                best_x = x;
            }
        }
        // coordinate-wise golden-section sweeps, starting at full range so
        // separable objectives can hop between basins per coordinate
        let gr = (5.0f64.sqrt() - 1.0) / 2.0;
        let range = spec.upper - spec.lower;
        for sweep in 0..40 {
            let width = range / (1.4f64.powi(sweep));
            for j in 0..spec.dim {
                let mut lo = (best_x[j] - width).max(spec.lower);
                let mut hi = (best_x[j] + width).min(spec.upper);
                for _ in 0..40 {
                    let a = hi - gr * (hi - lo);
                    let b = lo + gr * (hi - lo);
                    let mut xa = best_x.clone();
                    xa[j] = a;
                    let mut xb = best_x.clone();
                    xb[j] = b;
                    if spec.raw(xa.view()) < spec.raw(xb.view()) {
                        lo = a;
                    } else {
                        hi = b;
                    }
                }
                best_x[j] = 0.5 * (lo + hi);
                best_v = spec.raw(best_x.view());
            }
        }
        (best_x, best_v)
    }

    #[test]
    fn hartmann6_table_location_attains_the_brute_force_optimum() {
        let h6 = lookup("hartmann6").unwrap();
        let (_, brute) = brute_force_max(&h6, 1_000_000, 3);
        let at_table = h6
            .noiseless(array![0.20, 0.15, 0.48, 0.28, 0.31, 0.66].view())
            .unwrap();
        assert!(
            (at_table - brute).abs() < 1e-2,
            "table location {at_table} vs brute-force optimum {brute}"
        );
        assert_abs_diff_eq!(brute, h6.f_star(), epsilon = 1e-5);
    }

    #[test]
    fn frozen_optima_match_brute_force_search() {
        for name in ["hartmann3", "hartmann4", "stybtang7"] {
            let spec = lookup(name).unwrap();
            let (bx, bv) = brute_force_max(&spec, 200_000, 7);
            assert!(
                (bv - spec.f_star()).abs() < 1e-4,
                "{name}: brute {bv} vs frozen {}",
                spec.f_star()
            );
            let v_at_frozen = spec.noiseless(spec.x_star().view()).unwrap();
            assert!(
                (v_at_frozen - bv).abs() < 1e-4,
                "{name}: frozen location value {v_at_frozen} vs brute {bv}"
            );
            let _ = bx;
        }
    }

    #[test]
    fn noise_calibration_matches_reported_sigma() {
        let h4 = lookup("hartmann4").unwrap();
        let x = array![0.3, 0.4, 0.5, 0.6];
        let f = h4.noiseless(x.view()).unwrap();
        let mut obj = noisy_objective(h4.clone(), 99);
        let n = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let y = obj(&x).unwrap() - f;
            sum += y;
            sumsq += y * y;
        }
        let var = (sumsq - sum * sum / n as f64) / (n as f64 - 1.0);
        let want = h4.noise_sd * h4.noise_sd;
        assert!(
            (var - want).abs() < 0.1 * want,
            "sample variance {var} vs {want}"
        );
    }

    #[test]
    fn noise_stream_is_deterministic_per_seed() {
        let h4 = lookup("hartmann4").unwrap();
        let x = array![0.2, 0.2, 0.2, 0.2];
        let mut a = noisy_objective(h4.clone(), 5);
        let mut b = noisy_objective(h4.clone(), 5);
        let mut c = noisy_objective(h4, 6);
        let va: Vec<f64> = (0..4).map(|_| a(&x).unwrap()).collect();
        let vb: Vec<f64> = (0..4).map(|_| b(&x).unwrap()).collect();
        let vc: Vec<f64> = (0..4).map(|_| c(&x).unwrap()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn good_prior_offset_has_the_stated_length() {
        let h4 = lookup("hartmann4").unwrap();
        let space = h4.space();
        for seed in 0..20 {
            let belief = build_prior(&h4, &PriorSpec::good(seed)).unwrap();
            let mode = belief.location_mode().unwrap();
            let mode_norm = space.normalize(mode.view()).unwrap();
            let x_norm = space.normalize(h4.x_star().view()).unwrap();
            let dist = (&mode_norm - &x_norm).mapv(|v| v * v).sum().sqrt();
            assert_abs_diff_eq!(dist, 0.1 * 2.0, epsilon = 1e-9);
            assert!(mode_norm.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn hartmann_prior_sigma_is_quarter_range() {
        let h6 = lookup("hartmann6").unwrap();
        let belief = build_prior(&h6, &PriorSpec::good(1)).unwrap();
        match belief {
            UserBelief::OptimumLocation { std, .. } => {
                for &s in std.iter() {
                    assert_abs_diff_eq!(s, 0.25);
                }
            }
            other => panic!("expected location belief, got {other:?}"),
        }
    }

    #[test]
    fn bad_prior_mode_sits_on_the_boundary() {
        for name in ["hartmann4", "levy5", "stybtang7"] {
            let spec = lookup(name).unwrap();
            let space = spec.space();
            for seed in 0..10 {
                let belief = build_prior(&spec, &PriorSpec::bad(seed)).unwrap();
                let mode = belief.location_mode().unwrap();
                let mode_norm = space.normalize(mode.view()).unwrap();
                let on_boundary = mode_norm
                    .iter()
                    .any(|&v| v.abs() < 1e-12 || (v - 1.0).abs() < 1e-12);
                assert!(on_boundary, "{name} seed {seed}: mode {mode_norm} interior");
                assert!(mode_norm.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
            }
        }
    }

    #[test]
    fn maxvalue_prior_centers_at_the_optimum() {
        let h6 = lookup("hartmann6").unwrap();
        match build_maxvalue_prior(&h6, 0.5).unwrap() {
            UserBelief::OptimalValue { mean, std } => {
                assert_eq!(mean, h6.f_star());
                assert_eq!(std, 0.5);
            }
            other => panic!("expected value belief, got {other:?}"),
        }
        assert!(build_maxvalue_prior(&h6, 0.0).is_err());
        assert!(build_maxvalue_prior(&h6, -1.0).is_err());
    }

    #[test]
    fn wide_value_prior_acts_uniform_on_weights() {
        let h6 = lookup("hartmann6").unwrap();
        let belief = build_maxvalue_prior(&h6, 1e12).unwrap();
        let space = h6.space();
        let std = crate::space::Standardizer { mean: 0.0, scale: 1.0 };
        let w1 = belief
            .log_weight(&(Array1::from_elem(6, 0.2), 1.0), &space, std)
            .unwrap();
        let w2 = belief
            .log_weight(&(Array1::from_elem(6, 0.8), -2.0), &space, std)
            .unwrap();
        assert!((w1 - w2).abs() < 1e-12);
    }

    #[test]
    fn regret_curve_is_nonincreasing_and_hits_zero_at_the_optimum() {
        let h4 = lookup("hartmann4").unwrap();
        let queries = vec![
            array![0.5, 0.5, 0.5, 0.5],
            h4.x_star().clone(),
            array![0.9, 0.9, 0.9, 0.9],
        ];
        let curve = simple_regret(&h4, &queries).unwrap();
        assert_eq!(curve.len(), 3);
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(curve[1].abs() < 1e-9);
        assert!(curve[2].abs() < 1e-9);
        assert!(simple_regret(&h4, &[]).unwrap().is_empty());
    }
}
