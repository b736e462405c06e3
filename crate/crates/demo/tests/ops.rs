use anchored_demo::{certify_mub, recover, snr_curve};

#[test]
fn noiseless_rank_one_recovers() {
    let rec = recover(16, 1, 128, 1.0, None, 3, 10_000).unwrap();
    assert_eq!(rec.n, 128);
    assert!(rec.rel_error < 1e-4, "{}", rec.rel_error);
    assert!(!rec.trace.is_empty());
    assert!(rec.trace[0].rel_error > rec.rel_error);
}

#[test]
fn oracle_anchor_starts_at_truth() {
    let rec = recover(8, 1, 16, 0.0, None, 1, 10).unwrap();
    assert!(rec.anchor_error < 1e-12);
}

#[test]
fn noise_hurts() {
    let pts = snr_curve(12, 1, 96, &[5.0, 60.0], 4, 6000).unwrap();
    assert_eq!(pts.len(), 2);
    assert!(pts[1].rel_error < pts[0].rel_error);
}

#[test]
fn mub_certification() {
    let ok = certify_mub(3, 0.0).unwrap();
    assert!(ok.passed && ok.atoms == 12);
    assert!(!certify_mub(3, 0.05).unwrap().passed);
    assert!(certify_mub(4, 0.0).is_err());
}

#[test]
fn bad_dimensions_rejected() {
    assert!(recover(0, 1, 4, 1.0, None, 0, 10).is_err());
    assert!(recover(8, 9, 16, 1.0, None, 0, 10).is_err());
    assert!(recover(128, 1, 16, 1.0, None, 0, 10).is_err());
}

#[test]
fn zero_samples_rejected() {
    assert!(recover(8, 1, 0, 1.0, None, 0, 10).is_err());
}
