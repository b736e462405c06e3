// build with: wasm-pack build --target web --out-dir www/pkg crates/demo
use serde::Serialize;
use wasm_bindgen::prelude::*;

use anchored_regression::anchor::{interpolate_anchor, oracle_anchor, spectral_init};
use anchored_regression::experiment::make_ground_truth;
use anchored_regression::operator::{add_noise, forward_raw, sigma_for_snr, SnrMode};
use anchored_regression::rng::derive_seed;
use anchored_regression::sketch::{build_mub_design, certify_design, sample_complex_gaussian};
use anchored_regression::solver::{relative_error, solve, SolverConfig};
use anchored_regression::Result;

const MAX_DIM: usize = 64;

#[derive(Serialize, Debug)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub rel_error: f64,
}

#[derive(Serialize, Debug)]
pub struct Recovery {
    pub n: usize,
    pub anchor_error: f64,
    pub rel_error: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

fn check_dims(d: usize, r: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM || r == 0 || r > d {
        return Err(anchored_regression::Error::InvalidArgument(format!(
            "need 1 <= r <= d <= {MAX_DIM}, got d={d}, r={r}"
        )));
    }
    Ok(())
}

/// One recovery from `n` complex Gaussian sketches. `snr_db = None` is noiseless.
pub fn recover(
    d: usize,
    r: usize,
    n: usize,
    alpha: f64,
    snr_db: Option<f64>,
    seed: u64,
    max_iters: usize,
) -> Result<Recovery> {
    check_dims(d, r)?;
    if n == 0 {
        return Err(anchored_regression::Error::InvalidArgument("need n >= 1".into()));
    }
    let (truth, m0) = make_ground_truth(d, d, r, 1.0, seed)?;
    let e = sample_complex_gaussian(d, d, n, seed)?;
    let clean = forward_raw(&m0, &e)?;
    let m = match snr_db {
        Some(s) => add_noise(
            &clean,
            sigma_for_snr(&clean, s, SnrMode::Aggregate),
            derive_seed(seed, &[s.to_bits()]),
        )?,
        None => clean,
    };
    let spectral = spectral_init(&e, &m, r)?;
    let anchor = if alpha == 0.0 {
        oracle_anchor(&truth)?
    } else {
        interpolate_anchor(&spectral, &truth, alpha, r)?
    };
    let cfg = SolverConfig {
        max_iters,
        trace_every: (max_iters / 100).max(1),
        ..SolverConfig::default()
    };
    let out = solve(&anchor, &e, &m, &cfg, None, Some(&m0))?;
    Ok(Recovery {
        n,
        anchor_error: relative_error(&anchor.factors, &m0)?,
        rel_error: relative_error(&out.factors, &m0)?,
        iterations: out.iterations,
        trace: out
            .trace
            .points
            .iter()
            .map(|p| TracePoint {
                iteration: p.iteration,
                objective: p.objective,
                rel_error: p.rel_error.unwrap_or(f64::NAN),
            })
            .collect(),
    })
}

#[derive(Serialize, Debug)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub rel_error: f64,
}

/// Relative error against SNR for one problem instance.
pub fn snr_curve(d: usize, r: usize, n: usize, snrs: &[f64], seed: u64, max_iters: usize) -> Result<Vec<SnrPoint>> {
    snrs.iter()
        .map(|&s| {
            recover(d, r, n, 1.0, Some(s), seed, max_iters).map(|rec| SnrPoint {
                snr_db: s,
                rel_error: rec.rel_error,
            })
        })
        .collect()
}

#[derive(Serialize, Debug)]
pub struct Certification {
    pub dim: usize,
    pub atoms: usize,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Certify the mutually-unbiased-bases design in prime dimension `d`, with the
/// first weight moved by `perturb` (and renormalised).
pub fn certify_mub(d: usize, perturb: f64) -> Result<Certification> {
    let mut design = build_mub_design(d)?;
    design.weights[0] += perturb;
    let total: f64 = design.weights.iter().sum();
    design.weights.iter_mut().for_each(|w| *w /= total);
    let cert = certify_design(&design)?;
    Ok(Certification {
        dim: d,
        atoms: design.len(),
        max_deviation: cert.max_deviation,
        passed: cert.passed,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON [`Recovery`]; a negative or non-finite `snr_db` means noiseless.
#[wasm_bindgen(js_name = recover)]
pub fn recover_js(
    d: usize,
    r: usize,
    n: usize,
    alpha: f64,
    snr_db: f64,
    seed: u32,
    max_iters: usize,
) -> std::result::Result<String, JsError> {
    let snr = (snr_db.is_finite() && snr_db >= 0.0).then_some(snr_db);
    to_js(recover(d, r, n, alpha, snr, seed as u64, max_iters))
}

#[wasm_bindgen(js_name = snrCurve)]
pub fn snr_curve_js(
    d: usize,
    r: usize,
    n: usize,
    snrs: Vec<f64>,
    seed: u32,
    max_iters: usize,
) -> std::result::Result<String, JsError> {
    to_js(snr_curve(d, r, n, &snrs, seed as u64, max_iters))
}

#[wasm_bindgen(js_name = certifyMub)]
pub fn certify_mub_js(d: usize, perturb: f64) -> std::result::Result<String, JsError> {
    to_js(certify_mub(d, perturb))
}
