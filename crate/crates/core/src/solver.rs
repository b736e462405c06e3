//! Subgradient descent on the anchored objective in the factored space.

use serde::{Deserialize, Serialize};

use crate::anchor::AnchorEstimate;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::operator::{evaluate, FactorPair, MeasurementVector, DEFAULT_RESIDUAL_TOL};
use crate::sketch::SketchEnsemble;

/// Step-size schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StepRule {
    /// `eta0 / sqrt(t + 1)`.
    InvSqrt {
        eta0: f64,
    },
    Constant {
        eta: f64,
    },
    /// `eta0 * decay^t`.
    Geometric {
        eta0: f64,
        decay: f64,
    },
    /// `(f(Z_t) - f_target) / ||G_t||^2`, clipped to `[0, eta_max]`.
    Polyak {
        f_target: f64,
        eta_max: f64,
    },
}

impl StepRule {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepRule::InvSqrt { eta0 } => eta0 > 0.0 && eta0.is_finite(),
            StepRule::Constant { eta } => eta > 0.0 && eta.is_finite(),
            StepRule::Geometric { eta0, decay } => eta0 > 0.0 && eta0.is_finite() && decay > 0.0 && decay <= 1.0,
            StepRule::Polyak { f_target, eta_max } => f_target.is_finite() && eta_max > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid step rule {self:?}")))
        }
    }
}

/// Step size at iteration `t`. `objective` is `f(Z_t)` and `grad_sq` is `||G_t||^2`;
/// both are used by the Polyak rule only.
pub fn step_size(rule: &StepRule, t: usize, objective: f64, grad_sq: f64) -> f64 {
    match *rule {
        StepRule::InvSqrt { eta0 } => eta0 / ((t + 1) as f64).sqrt(),
        StepRule::Constant { eta } => eta,
        StepRule::Geometric { eta0, decay } => eta0 * decay.powi(t.min(i32::MAX as usize) as i32),
        StepRule::Polyak { f_target, eta_max } => {
            if grad_sq <= 0.0 {
                return 0.0;
            }
            ((objective - f_target) / grad_sq).clamp(0.0, eta_max)
        }
    }
}

/// Default schedule: `Geometric { eta0: DEFAULT_ETA0, decay: DEFAULT_DECAY }`.
///
/// The update is equivariant under `M0 -> c M0` (factors and subgradient both
/// scale by `sqrt(c)`), so the step needs no normalisation by the anchor.
pub const DEFAULT_ETA0: f64 = 0.2;
pub const DEFAULT_DECAY: f64 = 0.997;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// `None` selects the scale-aware default from the anchor.
    pub step_rule: Option<StepRule>,
    /// Residuals below `residual_tol * (1 + |m_i|)` are treated as zero.
    pub residual_tol: f64,
    /// Stop once the best objective improves by less than `stop_tol` (relative)
    /// over `stop_window` iterations. The test is skipped before `min_iters`.
    pub stop_tol: f64,
    pub stop_window: usize,
    pub min_iters: usize,
    /// Record a trace point every `trace_every` iterations (0 disables).
    pub trace_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            step_rule: None,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            stop_tol: 1e-10,
            stop_window: 50,
            min_iters: 2_000,
            trace_every: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.residual_tol >= 0.0) || !(self.stop_tol >= 0.0) {
            return Err(Error::invalid("tolerances must be >= 0"));
        }
        if let Some(rule) = &self.step_rule {
            rule.validate()?;
        }
        Ok(())
    }

    /// The step rule actually used.
    pub fn resolved_rule(&self) -> StepRule {
        self.step_rule.unwrap_or(StepRule::Geometric {
            eta0: DEFAULT_ETA0,
            decay: DEFAULT_DECAY,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub best_objective: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub rel_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub points: Vec<TracePoint>,
}

impl SolverTrace {
    pub fn best_is_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].best_objective <= w[0].best_objective)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    /// Best-objective iterate.
    pub factors: FactorPair,
    pub best_objective: f64,
    /// Iterations performed.
    pub iterations: usize,
    pub trace: SolverTrace,
    pub step_rule: StepRule,
}

/// `||X Y^* - M0||_F / ||M0||_F`.
pub fn relative_error(z: &FactorPair, m0: &ComplexMatrix) -> Result<f64> {
    if z.x.rows() != m0.rows() || z.y.rows() != m0.cols() {
        return Err(Error::ShapeMismatch {
            op: "relative_error",
            expected: m0.shape(),
            found: (z.x.rows(), z.y.rows()),
        });
    }
    let denom = m0.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok((&z.product() - m0).frobenius_norm() / denom)
}

/// Run subgradient descent from `init` (the anchor itself by default) and
/// return the best iterate seen.
///
/// `truth`, when given, is only used to fill the relative-error column of the trace.
pub fn solve(
    anchor: &AnchorEstimate,
    e: &SketchEnsemble,
    m: &MeasurementVector,
    cfg: &SolverConfig,
    init: Option<&FactorPair>,
    truth: Option<&ComplexMatrix>,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let rule = cfg.resolved_rule();
    rule.validate()?;
    let mut z = init.cloned().unwrap_or_else(|| anchor.factors.clone());
    if z.rank() != anchor.rank() {
        return Err(Error::invalid(format!(
            "initial point has rank {} but anchor has rank {}",
            z.rank(),
            anchor.rank()
        )));
    }

    let mut best = z.clone();
    let mut best_f = f64::INFINITY;
    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_iters + 1);
    let mut trace = SolverTrace::default();
    let mut iterations = 0;

    for t in 0..cfg.max_iters {
        let ev = evaluate(&z, &anchor.factors, e, m, cfg.residual_tol)?;
        if !ev.objective.is_finite() {
            return Err(Error::Divergence { iteration: t });
        }
        if ev.objective < best_f {
            best_f = ev.objective;
            best.clone_from(&z);
        }
        history.push(best_f);
        let grad_sq = ev.gradient.norm().powi(2);
        let eta = step_size(&rule, t, ev.objective, grad_sq);

        if cfg.trace_every > 0 && t % cfg.trace_every == 0 {
            trace.points.push(TracePoint {
                iteration: t,
                objective: ev.objective,
                best_objective: best_f,
                grad_norm: grad_sq.sqrt(),
                step: eta,
                rel_error: truth.map(|m0| relative_error(&z, m0)).transpose()?,
            });
        }

        iterations = t + 1;
        if cfg.stop_window > 0 && t >= cfg.stop_window.max(cfg.min_iters) {
            let past = history[t - cfg.stop_window];
            if past - best_f <= cfg.stop_tol * best_f.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        if grad_sq == 0.0 || eta == 0.0 {
            break;
        }
        z = z.step(-eta, &ev.gradient);
    }

    Ok(SolveOutcome {
        factors: best,
        best_objective: best_f,
        iterations,
        trace,
        step_rule: rule,
    })
}
