use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use anchored_regression::diagnostics::{ConditionParams, DEFAULT_SMALLBALL_TRIALS};
use anchored_regression::experiment::{
    aggregate_csv, emit_outputs, emit_report, run_check_design, run_diagnose, run_phase_transition, run_single,
    run_snr_sweep, run_verify_moments, ExperimentKind, ExperimentSpec, ModelSpec, SampleRule,
};
use anchored_regression::operator::SnrMode;
use anchored_regression::solver::StepRule;
use anchored_regression::{Error, Result};

/// Worker-count override for the trial pool.
const WORKERS_ENV: &str = "ANCHORED_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "anchored",
    version,
    about = "Low-rank matrix recovery from rank-one sketches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve every cell of a small spec and keep the first solver trace.
    SingleRun(ExperimentArgs),
    /// Noiseless recovery error over a grid of ranks and anchor weights.
    PhaseTransition(ExperimentArgs),
    /// Recovery error against SNR.
    SnrSweep(ExperimentArgs),
    /// Load a design file and certify its second moment.
    CheckDesign {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check moment identities and tail bounds of the sketch model.
    VerifyMoments(ExperimentArgs),
    /// Evaluate the recovery conditions for sampled problem instances.
    Diagnose {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long, default_value_t = 10.0)]
        c1: f64,
        #[arg(long, default_value_t = 10.0)]
        c2: f64,
        #[arg(long, default_value_t = DEFAULT_SMALLBALL_TRIALS)]
        smallball_trials: usize,
    },
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON experiment spec; flags given alongside override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in spec used when no config is given (tiny, desk, full).
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long)]
    d2: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// Sample count: a number, `d1d2/K` or `dof*K`.
    #[arg(long)]
    n: Option<String>,
    /// real-gaussian, complex-gaussian, mub or design:<path>.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Add (true) or drop (false) the noiseless row of an SNR sweep.
    #[arg(long)]
    include_noiseless: Option<bool>,
    /// aggregate or per-sample.
    #[arg(long)]
    snr_mode: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// inv-sqrt:ETA0, constant:ETA, geometric:ETA0:DECAY or polyak:F_TARGET:ETA_MAX.
    #[arg(long)]
    step: Option<String>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Record wall time per trial (makes the per-trial CSV non-reproducible).
    #[arg(long)]
    wall_time: bool,
}

fn parse_step(s: &str) -> Result<StepRule> {
    let bad = || Error::InvalidArgument(format!("cannot parse step rule '{s}'"));
    let mut parts = s.split(':');
    let kind = parts.next().ok_or_else(bad)?;
    let nums: Vec<f64> = parts
        .map(|p| p.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let rule = match (kind, nums.as_slice()) {
        ("inv-sqrt", [eta0]) => StepRule::InvSqrt { eta0: *eta0 },
        ("constant", [eta]) => StepRule::Constant { eta: *eta },
        ("geometric", [eta0, decay]) => StepRule::Geometric {
            eta0: *eta0,
            decay: *decay,
        },
        ("polyak", [f_target, eta_max]) => StepRule::Polyak {
            f_target: *f_target,
            eta_max: *eta_max,
        },
        _ => return Err(bad()),
    };
    Ok(rule)
}

fn build_spec(kind: ExperimentKind, a: &ExperimentArgs) -> Result<ExperimentSpec> {
    let mut spec = match &a.config {
        Some(path) => ExperimentSpec::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentSpec::preset(kind, &a.preset)?,
    };
    if spec.experiment != kind {
        return Err(Error::InvalidArgument(format!(
            "config describes '{}' but the subcommand is '{kind}'",
            spec.experiment
        )));
    }
    if let Some(v) = a.seed {
        spec.master_seed = v;
    }
    if let Some(v) = a.trials {
        spec.trials = v;
    }
    if let Some(v) = a.d1 {
        spec.d1 = v;
    }
    if let Some(v) = a.d2 {
        spec.d2 = v;
    }
    if let Some(v) = &a.ranks {
        spec.ranks = v.clone();
    }
    if let Some(v) = &a.n {
        spec.n = SampleRule::from_str(v)?;
    }
    if let Some(v) = &a.model {
        spec.model = ModelSpec::from_str(v)?;
    }
    if let Some(v) = a.kappa {
        spec.kappa = v;
    }
    if let Some(v) = &a.alphas {
        spec.alphas = v.clone();
    }
    if let Some(v) = &a.snr {
        spec.snr_db = v.clone();
    }
    if let Some(v) = a.include_noiseless {
        spec.include_noiseless = v;
    }
    if let Some(v) = &a.snr_mode {
        spec.snr_mode = match v.as_str() {
            "aggregate" => SnrMode::Aggregate,
            "per-sample" => SnrMode::PerSample,
            _ => return Err(Error::InvalidArgument(format!("unknown SNR mode '{v}'"))),
        };
    }
    if let Some(v) = a.max_iters {
        spec.solver.max_iters = v;
    }
    if let Some(v) = &a.step {
        spec.solver.step_rule = Some(parse_step(v)?);
    }
    if let Some(v) = a.mc_samples {
        spec.mc_samples = v;
    }
    if a.wall_time {
        spec.record_wall_time = true;
    }
    if let Some(out) = &a.out {
        spec.output = Some(out.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn workers() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

/// Exit status of a completed command.
enum Outcome {
    Ok,
    Diverged(usize),
}

fn solve_command(kind: ExperimentKind, a: &ExperimentArgs) -> Result<Outcome> {
    let spec = build_spec(kind, a)?;
    let w = workers()?;
    let result = match kind {
        ExperimentKind::PhaseTransition => run_phase_transition(&spec, w)?,
        ExperimentKind::SnrSweep => run_snr_sweep(&spec, w)?,
        _ => run_single(&spec, w)?,
    };
    if let Some(dir) = &spec.output {
        let paths = emit_outputs(&result, dir)?;
        eprintln!("wrote {}", paths.trials.display());
    }
    print!("{}", aggregate_csv(&result.aggregates));
    match result.divergences() {
        0 => Ok(Outcome::Ok),
        k => Ok(Outcome::Diverged(k)),
    }
}

fn print_report<T: serde::Serialize>(spec: Option<&ExperimentSpec>, report: &T, name: &str) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    if let Some(spec) = spec {
        if let Some(dir) = &spec.output {
            let path = emit_report(spec, report, dir, name)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::SingleRun(a) => solve_command(ExperimentKind::SingleRun, &a),
        Command::PhaseTransition(a) => solve_command(ExperimentKind::PhaseTransition, &a),
        Command::SnrSweep(a) => solve_command(ExperimentKind::SnrSweep, &a),
        Command::CheckDesign { file, out } => {
            let report = run_check_design(&file)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("design_check.json"), serde_json::to_string_pretty(&report)?)?;
            }
            if report.certificate.passed {
                Ok(Outcome::Ok)
            } else {
                Err(Error::UncertifiedDesign {
                    deviation: report.certificate.max_deviation,
                })
            }
        }
        Command::VerifyMoments(a) => {
            let spec = build_spec(ExperimentKind::VerifyMoments, &a)?;
            let report = run_verify_moments(&spec)?;
            print_report(Some(&spec), &report, "moments.json")?;
            Ok(Outcome::Ok)
        }
        Command::Diagnose {
            exp,
            rho,
            c1,
            c2,
            smallball_trials,
        } => {
            let spec = build_spec(ExperimentKind::Diagnose, &exp)?;
            let params = ConditionParams {
                rho,
                c1,
                c2,
                smallball_trials,
                seed: spec.master_seed,
            };
            let report = run_diagnose(&spec, params)?;
            print_report(Some(&spec), &report, "diagnose.json")?;
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Diverged(k)) => {
            eprintln!("error: {k} solve(s) diverged");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
