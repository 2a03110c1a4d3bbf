use std::sync::Arc;
use beliefbo::gp::analytic_posterior;
use beliefbo::kernel::{GpHyperparams, KernelKind};
use beliefbo::pathwise::{draw_prior, eval_draws, matheron_condition_all, sample_basis};
use beliefbo::sobol::sobol_points;
use beliefbo::space::Dataset;
use ndarray::array;

fn stat(draws: usize, seed: u64) -> f64 {
    let mut hp = GpHyperparams::median(1, KernelKind::SquaredExponential);
    hp.lengthscales = array![0.3];
    hp.noise = 0.05;
    let data = Dataset::from_parts(
        array![[0.12], [0.33], [0.51], [0.74], [0.9]],
        array![0.4, 1.2, -0.3, 0.8, -0.6],
    ).unwrap();
    let basis = Arc::new(sample_basis(&hp, 8192, seed));
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

fn main() {
    for seed in 0..10u64 {
        let e4 = stat(4096, seed);
        let e16 = stat(16384, seed);
        println!("seed {seed}: err4096 {e4:.4} err16384 {e16:.4} ratio {:.3}", e16 / e4);
    }
}
