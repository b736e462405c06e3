use anchored_regression::anchor::{anchor_error, spectral_init};
use anchored_regression::experiment::make_ground_truth;
use anchored_regression::operator::{forward_raw, gram_map};
use anchored_regression::sketch::sample_complex_gaussian;

fn spectral_error(d: usize, r: usize, n: usize, seed: u64) -> f64 {
    let (_, m0) = make_ground_truth(d, d, r, 1.0, seed).unwrap();
    let e = sample_complex_gaussian(d, d, n, seed).unwrap();
    let m = forward_raw(&m0, &e).unwrap();
    let anchor = spectral_init(&e, &m, r).unwrap();
    anchor_error(&anchor, &m0).unwrap() / m0.frobenius_norm()
}

#[test]
fn gram_map_is_unbiased() {
    let (d, r, n) = (8, 2, 100_000);
    let (_, m0) = make_ground_truth(d, d, r, 1.0, 21).unwrap();
    let e = sample_complex_gaussian(d, d, n, 21).unwrap();
    let g = gram_map(&m0, &e).unwrap();
    let rel = (&g - &m0).frobenius_norm() / m0.frobenius_norm();
    assert!(rel <= 0.05, "{rel}");
}

#[test]
fn spectral_init_at_guaranteed_sample_size() {
    let (d, r) = (32usize, 2usize);
    let n = (8.0 * (r * r) as f64 * (2 * d) as f64 * 64f64.ln().powi(3)).ceil() as usize;
    let bound = 0.5 / (r as f64).sqrt();
    let ok = (0..50u64)
        .filter(|&seed| spectral_error(d, r, n, 300 + seed) <= bound)
        .count();
    assert!(ok >= 45, "{ok}/50 seeds within {bound}");
}

#[test]
fn spectral_error_falls_with_n() {
    let (d, r, k) = (16, 2, 500);
    let mean = |n: usize| (0..10u64).map(|s| spectral_error(d, r, n, 40 + s)).sum::<f64>() / 10.0;
    let errs: Vec<f64> = [2 * k, 4 * k, 8 * k].iter().map(|&n| mean(n)).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}
