use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::SnrMode;
use crate::sketch::{self, build_mub_design, into_certified, load_design, CertifiedDesign, SketchEnsemble};
use crate::solver::SolverConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PhaseTransition,
    SnrSweep,
    SingleRun,
    CheckDesign,
    VerifyMoments,
    Diagnose,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PhaseTransition => "phase-transition",
            ExperimentKind::SnrSweep => "snr-sweep",
            ExperimentKind::SingleRun => "single-run",
            ExperimentKind::CheckDesign => "check-design",
            ExperimentKind::VerifyMoments => "verify-moments",
            ExperimentKind::Diagnose => "diagnose",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of sketches, fixed or tied to the problem size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleRule {
    Fixed(usize),
    /// `n = d1 d2 / k`.
    ProductOver(usize),
    /// `n = k r (d1 + d2)`.
    PerDof(usize),
}

impl SampleRule {
    pub fn resolve(self, d1: usize, d2: usize, r: usize) -> Result<usize> {
        let n = match self {
            SampleRule::Fixed(n) => n,
            SampleRule::ProductOver(k) if k > 0 => d1 * d2 / k,
            SampleRule::PerDof(k) => k * r * (d1 + d2),
            SampleRule::ProductOver(_) => 0,
        };
        if n == 0 {
            return Err(Error::invalid(format!("sample rule {self:?} gives n = 0")));
        }
        Ok(n)
    }
}

impl FromStr for SampleRule {
    type Err = Error;

    /// `256`, `d1d2/4` or `dof*4`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse sample rule '{s}'"));
        if let Some(k) = s.strip_prefix("d1d2/") {
            return k.parse().map(SampleRule::ProductOver).map_err(|_| bad());
        }
        if let Some(k) = s.strip_prefix("dof*") {
            return k.parse().map(SampleRule::PerDof).map_err(|_| bad());
        }
        s.parse().map(SampleRule::Fixed).map_err(|_| bad())
    }
}

/// Sketch distribution selected by name: `real-gaussian`, `complex-gaussian`,
/// `mub` (mutually unbiased bases, prime dimensions) or `design:<path>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    RealGaussian,
    ComplexGaussian,
    Mub,
    DesignFile(PathBuf),
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::RealGaussian => f.write_str("real-gaussian"),
            ModelSpec::ComplexGaussian => f.write_str("complex-gaussian"),
            ModelSpec::Mub => f.write_str("mub"),
            ModelSpec::DesignFile(p) => write!(f, "design:{}", p.display()),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real-gaussian" => Ok(ModelSpec::RealGaussian),
            "complex-gaussian" => Ok(ModelSpec::ComplexGaussian),
            "mub" => Ok(ModelSpec::Mub),
            _ => match s.strip_prefix("design:") {
                Some(p) if !p.is_empty() => Ok(ModelSpec::DesignFile(PathBuf::from(p))),
                _ => Err(Error::invalid(format!("unknown model '{s}'"))),
            },
        }
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

/// A model bound to concrete dimensions, ready to draw ensembles.
#[derive(Clone, Debug)]
pub enum Sampler {
    RealGaussian {
        d1: usize,
        d2: usize,
    },
    ComplexGaussian {
        d1: usize,
        d2: usize,
    },
    Design {
        a: Arc<CertifiedDesign>,
        b: Arc<CertifiedDesign>,
    },
}

impl Sampler {
    pub fn sample(&self, n: usize, seed: u64) -> Result<SketchEnsemble> {
        match self {
            Sampler::RealGaussian { d1, d2 } => sketch::sample_real_gaussian(*d1, *d2, n, seed),
            Sampler::ComplexGaussian { d1, d2 } => sketch::sample_complex_gaussian(*d1, *d2, n, seed),
            Sampler::Design { a, b } => sketch::sample_design(a.clone(), b.clone(), n, seed),
        }
    }

    pub fn model(&self) -> sketch::SketchModel {
        match self {
            Sampler::RealGaussian { .. } => sketch::SketchModel::RealGaussian,
            Sampler::ComplexGaussian { .. } => sketch::SketchModel::ComplexGaussian,
            Sampler::Design { a, b } => sketch::SketchModel::Design {
                a: a.clone(),
                b: b.clone(),
            },
        }
    }
}

impl ModelSpec {
    pub fn sampler(&self, d1: usize, d2: usize) -> Result<Sampler> {
        Ok(match self {
            ModelSpec::RealGaussian => Sampler::RealGaussian { d1, d2 },
            ModelSpec::ComplexGaussian => Sampler::ComplexGaussian { d1, d2 },
            ModelSpec::Mub => {
                let a = Arc::new(into_certified(build_mub_design(d1)?)?);
                let b = if d2 == d1 {
                    a.clone()
                } else {
                    Arc::new(into_certified(build_mub_design(d2)?)?)
                };
                Sampler::Design { a, b }
            }
            ModelSpec::DesignFile(path) => {
                let loaded = load_design(path)?;
                if !loaded.certificate.passed {
                    return Err(Error::UncertifiedDesign {
                        deviation: loaded.certificate.max_deviation,
                    });
                }
                let c = Arc::new(into_certified(loaded.design)?);
                if c.dim() != d1 || c.dim() != d2 {
                    return Err(Error::invalid(format!(
                        "design dimension {} does not match d1 = {d1}, d2 = {d2}",
                        c.dim()
                    )));
                }
                Sampler::Design { a: c.clone(), b: c }
            }
        })
    }
}

/// Full description of one experiment; serialised into the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    pub d1: usize,
    pub d2: usize,
    pub ranks: Vec<usize>,
    pub n: SampleRule,
    pub model: ModelSpec,
    /// Condition number of the ground truth.
    #[serde(default = "one")]
    pub kappa: f64,
    pub alphas: Vec<f64>,
    /// SNR grid in dB; empty means noiseless.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    /// Add a noiseless row to an SNR sweep.
    #[serde(default)]
    pub include_noiseless: bool,
    #[serde(default)]
    pub snr_mode: SnrMode,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Write measured wall time into the per-trial CSV; otherwise the column is 0
    /// so reruns are byte-identical.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Monte Carlo sample count for moment checks and tail probabilities.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn default_mc() -> usize {
    1_000_000
}

impl ExperimentSpec {
    /// Built-in configurations. `desk` runs at d = 32; `full` at d = 128.
    pub fn preset(kind: ExperimentKind, name: &str) -> Result<Self> {
        let d = match name {
            "desk" => 32,
            "full" => 128,
            "tiny" => 8,
            _ => return Err(Error::invalid(format!("unknown preset '{name}' (desk, full, tiny)"))),
        };
        let mut spec = ExperimentSpec {
            experiment: kind,
            d1: d,
            d2: d,
            ranks: vec![1, 2, 4, 8],
            n: SampleRule::ProductOver(4),
            model: ModelSpec::ComplexGaussian,
            kappa: 1.0,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            snr_db: Vec::new(),
            include_noiseless: false,
            snr_mode: SnrMode::Aggregate,
            trials: 20,
            master_seed: 0,
            solver: SolverConfig::default(),
            record_wall_time: false,
            mc_samples: default_mc(),
            output: None,
        };
        if name == "tiny" {
            spec.ranks = vec![1, 2];
            spec.trials = 3;
        }
        match kind {
            ExperimentKind::PhaseTransition => {}
            ExperimentKind::SnrSweep => {
                spec.ranks = vec![2];
                spec.alphas = vec![1.0];
                spec.snr_db = (1..=10).map(|k| 5.0 * k as f64).collect();
                spec.include_noiseless = true;
            }
            ExperimentKind::SingleRun => {
                spec.ranks = vec![1];
                spec.alphas = vec![1.0];
                spec.trials = 1;
            }
            ExperimentKind::CheckDesign | ExperimentKind::VerifyMoments => {
                spec.d1 = 4;
                spec.d2 = 4;
                spec.ranks = vec![2];
                spec.model = ModelSpec::RealGaussian;
                spec.trials = 1;
            }
            ExperimentKind::Diagnose => {
                spec.d1 = 16;
                spec.d2 = 16;
                spec.ranks = vec![2];
                spec.n = SampleRule::PerDof(4);
                spec.model = ModelSpec::RealGaussian;
                spec.alphas = vec![1.0];
                spec.trials = 1;
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if self.ranks.is_empty() || self.alphas.is_empty() {
            return Err(Error::invalid("rank and alpha grids must be nonempty"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if let Some(&r) = self.ranks.iter().find(|&&r| r == 0 || r > self.d1.min(self.d2)) {
            return Err(Error::invalid(format!("rank {r} outside 1..={}", self.d1.min(self.d2))));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::invalid(format!("alpha {a} outside [0, 1]")));
        }
        if !(self.kappa >= 1.0) || !self.kappa.is_finite() {
            return Err(Error::invalid(format!("kappa {} must be >= 1", self.kappa)));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("SNR values must be finite"));
        }
        if self.experiment == ExperimentKind::SnrSweep && self.snr_db.is_empty() {
            return Err(Error::invalid("an SNR sweep needs a nonempty SNR grid"));
        }
        if self.experiment == ExperimentKind::PhaseTransition && !self.snr_db.is_empty() {
            return Err(Error::invalid("the phase transition is noiseless; drop the SNR grid"));
        }
        for &r in &self.ranks {
            self.n.resolve(self.d1, self.d2, r)?;
        }
        self.solver.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
