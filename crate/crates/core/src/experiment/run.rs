use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::{ExperimentKind, ExperimentSpec, ModelSpec, Sampler};
use super::truth::{make_ground_truth, make_ground_truth_with};
use crate::anchor::{interpolate_anchor, oracle_anchor, spectral_init, AnchorEstimate};
use crate::diagnostics::{
    condition_report, estimate_rademacher, tail_probability, verify_moments, wishart_envelope, ConditionParams,
    ConditionReport, MomentMethod, MomentReport, MonteCarloEstimate, SupportSpaceBasis, TailCheck, MAX_ENUMERATION,
};
use crate::error::{Error, Result};
use crate::operator::{add_noise, forward_raw, sigma_for_snr};
use crate::rng::{derive_seed, f64_key};
use crate::sketch::{load_design, DesignCertificate, SketchModel};
use crate::solver::{relative_error, solve, SolverTrace};

/// One solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub experiment: ExperimentKind,
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub n: usize,
    pub model: String,
    pub alpha: f64,
    /// `inf` for noiseless solves.
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    /// `NaN` when the solver diverged.
    pub rel_error: f64,
    pub iters: usize,
    pub wall_ms: u64,
}

impl TrialRow {
    pub fn diverged(&self) -> bool {
        self.rel_error.is_nan()
    }

    fn cell_cmp(&self, other: &Self) -> Ordering {
        (self.r, self.n)
            .cmp(&(other.r, other.n))
            .then(self.alpha.total_cmp(&other.alpha))
            .then(self.snr_db.total_cmp(&other.snr_db))
    }
}

/// Per-cell summary over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment: ExperimentKind,
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub n: usize,
    pub model: String,
    pub alpha: f64,
    pub snr_db: f64,
    pub median_log10_err: f64,
    pub p90_log10_err: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    /// Sorted by cell, then trial.
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Solver trace of trial 0 in the first cell (single runs only).
    pub trace: Option<SolverTrace>,
}

impl ExperimentResult {
    pub fn divergences(&self) -> usize {
        self.rows.iter().filter(|r| r.diverged()).count()
    }
}

/// Nearest-rank percentile (`0 < p <= 1`) of an ascending slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && p > 0.0 && p <= 1.0);
    let k = (p * sorted.len() as f64).ceil() as usize;
    sorted[k.clamp(1, sorted.len()) - 1]
}

/// `log10` of a relative error; zero maps to the log of the smallest normal
/// double and a diverged solve (`NaN`) to `+inf`.
pub fn log10_error(e: f64) -> f64 {
    if e.is_nan() {
        f64::INFINITY
    } else {
        e.max(f64::MIN_POSITIVE).log10()
    }
}

/// Median and 90th percentile of `log10(rel_error)` per cell. `rows` must be
/// sorted by cell.
pub fn aggregate(rows: &[TrialRow]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for cell in rows.chunk_by(|a, b| a.cell_cmp(b) == Ordering::Equal) {
        let mut logs: Vec<f64> = cell.iter().map(|r| log10_error(r.rel_error)).collect();
        logs.sort_by(f64::total_cmp);
        let first = &cell[0];
        out.push(AggregateRow {
            experiment: first.experiment,
            d1: first.d1,
            d2: first.d2,
            r: first.r,
            n: first.n,
            model: first.model.clone(),
            alpha: first.alpha,
            snr_db: first.snr_db,
            median_log10_err: nearest_rank(&logs, 0.5),
            p90_log10_err: nearest_rank(&logs, 0.9),
        });
    }
    out
}

fn model_key(model: &ModelSpec) -> u64 {
    let bytes = model.to_string().into_bytes();
    let words: Vec<u64> = bytes.iter().map(|&b| b as u64).collect();
    derive_seed(0, &words)
}

/// Seed of the problem instance (ground truth, sketches) for one trial.
///
/// It depends on the structural cell parameters and the trial index but not on
/// the anchor weight or the SNR, so those sweeps compare matched instances.
pub fn trial_seed(spec: &ExperimentSpec, r: usize, n: usize, trial: usize) -> u64 {
    derive_seed(
        spec.master_seed,
        &[
            spec.d1 as u64,
            spec.d2 as u64,
            r as u64,
            n as u64,
            model_key(&spec.model),
            f64_key(spec.kappa),
            trial as u64,
        ],
    )
}

fn noise_levels(spec: &ExperimentSpec) -> Vec<Option<f64>> {
    if spec.snr_db.is_empty() {
        return vec![None];
    }
    let mut levels = Vec::with_capacity(spec.snr_db.len() + 1);
    if spec.include_noiseless {
        levels.push(None);
    }
    levels.extend(spec.snr_db.iter().map(|&s| Some(s)));
    levels
}

struct JobOutput {
    rows: Vec<TrialRow>,
    trace: Option<SolverTrace>,
}

fn select_anchor(
    spectral: &AnchorEstimate,
    truth: &crate::operator::FactorPair,
    alpha: f64,
    r: usize,
) -> Result<AnchorEstimate> {
    if alpha == 1.0 {
        Ok(spectral.clone())
    } else if alpha == 0.0 {
        oracle_anchor(truth)
    } else {
        interpolate_anchor(spectral, truth, alpha, r)
    }
}

fn run_job(spec: &ExperimentSpec, sampler: &Sampler, r: usize, trial: usize, keep_trace: bool) -> Result<JobOutput> {
    let n = spec.n.resolve(spec.d1, spec.d2, r)?;
    let seed = trial_seed(spec, r, n, trial);
    let (truth, m0) = make_ground_truth(spec.d1, spec.d2, r, spec.kappa, seed)?;
    let e = sampler.sample(n, seed)?;
    let clean = forward_raw(&m0, &e)?;
    let mut rows = Vec::new();
    let mut trace = None;
    for level in noise_levels(spec) {
        let m = match level {
            None => clean.clone(),
            Some(snr) => {
                let sigma = sigma_for_snr(&clean, snr, spec.snr_mode);
                add_noise(&clean, sigma, derive_seed(seed, &[f64_key(snr)]))?
            }
        };
        let spectral = spectral_init(&e, &m, r)?;
        for &alpha in &spec.alphas {
            let anchor = select_anchor(&spectral, &truth, alpha, r)?;
            let started = spec.record_wall_time.then(std::time::Instant::now);
            let truth_for_trace = keep_trace.then_some(&m0);
            let (rel_error, iters) = match solve(&anchor, &e, &m, &spec.solver, None, truth_for_trace) {
                Ok(out) => {
                    if keep_trace && trace.is_none() {
                        trace = Some(out.trace.clone());
                    }
                    (relative_error(&out.factors, &m0)?, out.iterations)
                }
                Err(Error::Divergence { iteration }) => {
                    log::warn!("r={r} alpha={alpha} trial={trial}: diverged at iteration {iteration}");
                    (f64::NAN, iteration)
                }
                Err(e) => return Err(e),
            };
            rows.push(TrialRow {
                experiment: spec.experiment,
                d1: spec.d1,
                d2: spec.d2,
                r,
                n,
                model: spec.model.to_string(),
                alpha,
                snr_db: level.unwrap_or(f64::INFINITY),
                trial,
                seed,
                rel_error,
                iters,
                wall_ms: started.map_or(0, |t| t.elapsed().as_millis() as u64),
            });
        }
    }
    Ok(JobOutput { rows, trace })
}

/// Run independent jobs on `workers` threads (all cores when `None`).
fn run_parallel<T: Send>(
    count: usize,
    workers: Option<usize>,
    job: impl Fn(usize) -> T + Sync + Send,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        Ok(pool.install(|| (0..count).into_par_iter().map(job).collect()))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok((0..count).map(job).collect())
    }
}

fn run_solves(spec: &ExperimentSpec, workers: Option<usize>) -> Result<ExperimentResult> {
    spec.validate()?;
    let sampler = spec.model.sampler(spec.d1, spec.d2)?;
    let jobs: Vec<(usize, usize)> = spec
        .ranks
        .iter()
        .flat_map(|&r| (0..spec.trials).map(move |t| (r, t)))
        .collect();
    let single = spec.experiment == ExperimentKind::SingleRun;
    let outputs = run_parallel(jobs.len(), workers, |k| {
        let (r, t) = jobs[k];
        run_job(spec, &sampler, r, t, single && k == 0)
    })?;
    let mut rows = Vec::new();
    let mut trace = None;
    for out in outputs {
        let out = out?;
        rows.extend(out.rows);
        if trace.is_none() {
            trace = out.trace;
        }
    }
    rows.sort_by(|a, b| a.cell_cmp(b).then(a.trial.cmp(&b.trial)));
    let aggregates = aggregate(&rows);
    Ok(ExperimentResult {
        spec: spec.clone(),
        rows,
        aggregates,
        trace,
    })
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.experiment != kind {
        return Err(Error::invalid(format!(
            "spec describes '{}', not '{kind}'",
            spec.experiment
        )));
    }
    Ok(())
}

/// Noiseless recovery over the `(r, alpha)` grid.
pub fn run_phase_transition(spec: &ExperimentSpec, workers: Option<usize>) -> Result<ExperimentResult> {
    expect_kind(spec, ExperimentKind::PhaseTransition)?;
    run_solves(spec, workers)
}

/// Noisy recovery over the SNR grid (plus a noiseless row when requested).
pub fn run_snr_sweep(spec: &ExperimentSpec, workers: Option<usize>) -> Result<ExperimentResult> {
    expect_kind(spec, ExperimentKind::SnrSweep)?;
    run_solves(spec, workers)
}

/// Every `(r, alpha, snr)` combination of the spec, keeping the first solver trace.
pub fn run_single(spec: &ExperimentSpec, workers: Option<usize>) -> Result<ExperimentResult> {
    expect_kind(spec, ExperimentKind::SingleRun)?;
    run_solves(spec, workers)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignCheckReport {
    pub path: String,
    pub dim: usize,
    pub atoms: usize,
    pub strength: u32,
    pub certificate: DesignCertificate,
}

/// Load and certify a design file.
pub fn run_check_design(path: &Path) -> Result<DesignCheckReport> {
    let loaded = load_design(path)?;
    Ok(DesignCheckReport {
        path: path.display().to_string(),
        dim: loaded.design.dim,
        atoms: loaded.design.len(),
        strength: loaded.design.strength,
        certificate: loaded.certificate,
    })
}

pub const TAIL_TAUS: [f64; 2] = [0.1, 0.5];
pub const TAIL_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentsRun {
    pub r: usize,
    pub seed: u64,
    pub moments: MomentReport,
    pub tails: Vec<TailCheck>,
}

/// Moment identities and tail bounds for a rank-`r` test matrix per rank in the spec.
/// Design models are enumerated exactly when small enough.
pub fn run_verify_moments(spec: &ExperimentSpec) -> Result<Vec<MomentsRun>> {
    expect_kind(spec, ExperimentKind::VerifyMoments)?;
    spec.validate()?;
    let sampler = spec.model.sampler(spec.d1, spec.d2)?;
    let model = sampler.model();
    let real = matches!(model, SketchModel::RealGaussian);
    spec.ranks
        .iter()
        .map(|&r| {
            let seed = trial_seed(spec, r, 0, 0);
            let (_, h) = make_ground_truth_with(spec.d1, spec.d2, r, spec.kappa, seed, real)?;
            let method = match &model {
                SketchModel::Design { a, b } if a.design().len() * b.design().len() <= MAX_ENUMERATION => {
                    MomentMethod::Exact
                }
                _ => MomentMethod::MonteCarlo {
                    samples: spec.mc_samples,
                    seed,
                },
            };
            let moments = verify_moments(&model, &h, method)?;
            let tails = TAIL_TAUS
                .iter()
                .map(|&tau| tail_probability(&model, &h, tau, TAIL_SAMPLES, derive_seed(seed, &[f64_key(tau)])))
                .collect::<Result<Vec<_>>>()?;
            Ok(MomentsRun {
                r,
                seed,
                moments,
                tails,
            })
        })
        .collect()
}

pub const DIAGNOSE_RADEMACHER_TRIALS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRun {
    pub r: usize,
    pub n: usize,
    pub alpha: f64,
    pub trial: usize,
    pub seed: u64,
    pub conditions: ConditionReport,
    pub rademacher: MonteCarloEstimate,
    /// `sqrt((d1 + d2) r)`.
    pub rademacher_bound: f64,
    /// `3 max(sqrt(4d/n), 4d/n)` for each side.
    pub isotropy_envelope: (f64, f64),
}

/// Sufficient-condition diagnostics for each `(r, alpha, trial)` of the spec.
pub fn run_diagnose(spec: &ExperimentSpec, params: ConditionParams) -> Result<Vec<DiagnoseRun>> {
    expect_kind(spec, ExperimentKind::Diagnose)?;
    spec.validate()?;
    let sampler = spec.model.sampler(spec.d1, spec.d2)?;
    let mut out = Vec::new();
    for &r in &spec.ranks {
        let n = spec.n.resolve(spec.d1, spec.d2, r)?;
        for trial in 0..spec.trials {
            let seed = trial_seed(spec, r, n, trial);
            let (truth, m0) = make_ground_truth(spec.d1, spec.d2, r, spec.kappa, seed)?;
            let e = sampler.sample(n, seed)?;
            let m = forward_raw(&m0, &e)?;
            let spectral = spectral_init(&e, &m, r)?;
            let basis = SupportSpaceBasis::from_matrix(&m0, r)?;
            let rademacher = estimate_rademacher(&e, &basis, DIAGNOSE_RADEMACHER_TRIALS, seed)?;
            for &alpha in &spec.alphas {
                let anchor = select_anchor(&spectral, &truth, alpha, r)?;
                let p = ConditionParams {
                    seed: derive_seed(params.seed, &[seed]),
                    ..params
                };
                out.push(DiagnoseRun {
                    r,
                    n,
                    alpha,
                    trial,
                    seed,
                    conditions: condition_report(&e, &anchor, &m0, p)?,
                    rademacher,
                    rademacher_bound: (((spec.d1 + spec.d2) * r) as f64).sqrt(),
                    isotropy_envelope: (wishart_envelope(spec.d1, n), wishart_envelope(spec.d2, n)),
                });
            }
        }
    }
    Ok(out)
}
