use beliefbo::kernel::KernelKind;

fn main() {
    for seed in 0..12u64 {
        let s = beliefbo::selfcheck::rff_fidelity_statistic_pub(
            KernelKind::SquaredExponential, 3, 2048, 4096, seed, 1.0,
        );
        println!("seed {seed}: {s:.4}");
    }
}
