use anchored_regression::diagnostics::{
    estimate_rademacher, estimate_smallball, isotropy_deviation, SupportSpaceBasis,
};
use anchored_regression::experiment::make_ground_truth;
use anchored_regression::sketch::{sample_complex_gaussian, sample_real_gaussian};

fn basis(d: usize, r: usize, seed: u64) -> SupportSpaceBasis {
    let (_, m0) = make_ground_truth(d, d, r, 1.0, seed).unwrap();
    SupportSpaceBasis::from_matrix(&m0, r).unwrap()
}

#[test]
fn smallball_does_not_fall_when_n_doubles() {
    let (d, r) = (8, 2);
    let b = basis(d, r, 2);
    let n = 4 * r * 2 * d;
    let mean = |n: usize| {
        (0..10u64)
            .map(|s| {
                let e = sample_real_gaussian(d, d, n, 70 + s).unwrap();
                estimate_smallball(&e, &b, 128, s).unwrap()
            })
            .sum::<f64>()
            / 10.0
    };
    let (lo, hi) = (mean(n), mean(2 * n));
    assert!(hi >= lo, "{hi} < {lo}");
}

#[test]
fn isotropy_deviation_scales_like_inverse_sqrt_n() {
    let (d, n) = (16, 512);
    let mut ratios = 0.0;
    for s in 0..20u64 {
        let small = isotropy_deviation(&sample_complex_gaussian(d, d, n, 500 + s).unwrap()).unwrap();
        let large = isotropy_deviation(&sample_complex_gaussian(d, d, 4 * n, 600 + s).unwrap()).unwrap();
        ratios += (large.0 / small.0 + large.1 / small.1) / 2.0;
    }
    let ratio = ratios / 20.0;
    assert!((0.3..=0.8).contains(&ratio), "{ratio}");
}

#[test]
fn rademacher_within_bound() {
    let (d, r, trials) = (16, 2, 200);
    let b = basis(d, r, 8);
    let bound = (((2 * d * r) as f64).sqrt()) * (1.0 + 5.0 / (trials as f64).sqrt());
    for seed in 0..5u64 {
        let e = sample_complex_gaussian(d, d, 256, seed).unwrap();
        let est = estimate_rademacher(&e, &b, trials, seed).unwrap();
        assert!(est.mean <= bound, "seed {seed}: {} > {bound}", est.mean);
    }
}
