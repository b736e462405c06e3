use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{AggregateRow, ExperimentResult, TrialRow};
use super::spec::{ExperimentKind, ExperimentSpec};
use crate::error::{Error, Result};

pub const TRIAL_HEADER: &str = "experiment,d1,d2,r,n,model,alpha,snr_db,trial,seed,rel_error,iters,wall_ms";
pub const AGGREGATE_HEADER: &str = "experiment,d1,d2,r,n,model,alpha,snr_db,median_log10_err,p90_log10_err";

pub const TRIALS_FILE: &str = "trials.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const PLOT_FILE: &str = "plot.py";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_FILE: &str = "trace.json";

/// `v<crate version>` followed by `git describe` output when the build saw a repository.
pub fn version_string() -> String {
    match option_env!("ANCHORED_GIT_DESCRIBE") {
        Some(d) if !d.is_empty() => format!("v{}-{d}", env!("CARGO_PKG_VERSION")),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

pub fn trials_csv(rows: &[TrialRow]) -> String {
    let mut s = String::from(TRIAL_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.d1,
            r.d2,
            r.r,
            r.n,
            r.model,
            r.alpha,
            r.snr_db,
            r.trial,
            r.seed,
            r.rel_error,
            r.iters,
            r.wall_ms
        );
    }
    s
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(AGGREGATE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.experiment, r.d1, r.d2, r.r, r.n, r.model, r.alpha, r.snr_db, r.median_log10_err, r.p90_log10_err
        );
    }
    s
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("line {line}: bad {name} '{v}'")))
}

/// Parse a per-trial CSV written by [`trials_csv`].
pub fn parse_trials_csv(text: &str) -> Result<Vec<TrialRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRIAL_HEADER) {
        return Err(Error::invalid("per-trial CSV header does not match"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 13 {
                return Err(Error::invalid(format!("line {line}: expected 13 fields")));
            }
            let experiment: ExperimentKind = serde_json::from_value(serde_json::Value::String(f[0].into()))?;
            Ok(TrialRow {
                experiment,
                d1: parse_field(line, "d1", f[1])?,
                d2: parse_field(line, "d2", f[2])?,
                r: parse_field(line, "r", f[3])?,
                n: parse_field(line, "n", f[4])?,
                model: f[5].to_string(),
                alpha: parse_field(line, "alpha", f[6])?,
                snr_db: parse_field(line, "snr_db", f[7])?,
                trial: parse_field(line, "trial", f[8])?,
                seed: parse_field(line, "seed", f[9])?,
                rel_error: parse_field(line, "rel_error", f[10])?,
                iters: parse_field(line, "iters", f[11])?,
                wall_ms: parse_field(line, "wall_ms", f[12])?,
            })
        })
        .collect()
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
# Usage: python3 plot.py [aggregate.csv] [out.png]
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

src = sys.argv[1] if len(sys.argv) > 1 else "aggregate.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else "plot.png"
with open(src) as fh:
    rows = list(csv.DictReader(fh))
if not rows:
    sys.exit("no rows in " + src)

kind = rows[0]["experiment"]
if kind == "snr-sweep":
    fig, ax = plt.subplots()
    for (r, alpha) in sorted({(int(x["r"]), float(x["alpha"])) for x in rows}):
        pts = sorted(
            (float(x["snr_db"]), float(x["p90_log10_err"]))
            for x in rows
            if int(x["r"]) == r and float(x["alpha"]) == alpha and x["snr_db"] != "inf"
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"r={r}, alpha={alpha}")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("log10 relative error (90th percentile)")
    ax.legend()
else:
    ranks = sorted({int(x["r"]) for x in rows})
    alphas = sorted({float(x["alpha"]) for x in rows})
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, col, title in zip(axes, ["median_log10_err", "p90_log10_err"], ["median", "90th percentile"]):
        grid = [[float("nan")] * len(ranks) for _ in alphas]
        for x in rows:
            grid[alphas.index(float(x["alpha"]))][ranks.index(int(x["r"]))] = float(x[col])
        im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(ranks)), [str(r) for r in ranks])
        ax.set_yticks(range(len(alphas)), [str(a) for a in alphas])
        ax.set_xlabel("r")
        ax.set_ylabel("alpha")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, label="log10 relative error")
fig.tight_layout()
fig.savefig(dst, dpi=150)
"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub master_seed: u64,
    pub spec: ExperimentSpec,
    pub files: Vec<String>,
    pub divergences: usize,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug)]
pub struct OutputPaths {
    pub trials: PathBuf,
    pub aggregate: PathBuf,
    pub plot: PathBuf,
    pub manifest: PathBuf,
    pub trace: Option<PathBuf>,
}

/// Write the per-trial CSV, aggregate CSV, plot script, manifest and (single
/// runs) the solver trace into `dir`, creating it if needed.
pub fn emit_outputs(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<OutputPaths> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let paths = OutputPaths {
        trials: dir.join(TRIALS_FILE),
        aggregate: dir.join(AGGREGATE_FILE),
        plot: dir.join(PLOT_FILE),
        manifest: dir.join(MANIFEST_FILE),
        trace: result.trace.as_ref().map(|_| dir.join(TRACE_FILE)),
    };
    fs::write(&paths.trials, trials_csv(&result.rows))?;
    fs::write(&paths.aggregate, aggregate_csv(&result.aggregates))?;
    fs::write(&paths.plot, PLOT_SCRIPT)?;
    let mut files = vec![TRIALS_FILE, AGGREGATE_FILE, PLOT_FILE];
    if let (Some(trace), Some(p)) = (&result.trace, &paths.trace) {
        fs::write(p, serde_json::to_string_pretty(trace)?)?;
        files.push(TRACE_FILE);
    }
    let manifest = Manifest {
        version: version_string(),
        master_seed: result.spec.master_seed,
        spec: result.spec.clone(),
        files: files.iter().map(|s| s.to_string()).collect(),
        divergences: result.divergences(),
    };
    fs::write(&paths.manifest, serde_json::to_string_pretty(&manifest)?)?;
    Ok(paths)
}

/// Write a JSON report (diagnostics, moment checks) plus a manifest into `dir`.
pub fn emit_report<T: Serialize>(
    spec: &ExperimentSpec,
    report: &T,
    dir: impl AsRef<Path>,
    name: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(report)?)?;
    let manifest = Manifest {
        version: version_string(),
        master_seed: spec.master_seed,
        spec: spec.clone(),
        files: vec![name.to_string()],
        divergences: 0,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run::{aggregate, run_phase_transition, run_single};

    fn small(kind: ExperimentKind) -> ExperimentSpec {
        let mut s = ExperimentSpec::preset(kind, "tiny").unwrap();
        s.solver.max_iters = 100;
        s
    }

    #[test]
    fn csv_schema_and_round_trip() {
        let res = run_phase_transition(&small(ExperimentKind::PhaseTransition), Some(1)).unwrap();
        let text = trials_csv(&res.rows);
        assert_eq!(text.lines().next().unwrap(), TRIAL_HEADER);
        let back = parse_trials_csv(&text).unwrap();
        assert_eq!(back, res.rows);
        // aggregates are recomputable from the per-trial CSV alone
        assert_eq!(aggregate(&back), res.aggregates);
        let agg = aggregate_csv(&res.aggregates);
        assert!(agg.starts_with("experiment,d1,d2,r,n,model,alpha,snr_db,median_log10_err,p90_log10_err\n"));
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(parse_trials_csv("a,b\n").is_err());
        let bad = format!("{TRIAL_HEADER}\nphase-transition,1,2\n");
        assert!(parse_trials_csv(&bad).is_err());
    }

    #[test]
    fn emit_writes_files_and_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small(ExperimentKind::SingleRun);
        let res = run_single(&spec, None).unwrap();
        let paths = emit_outputs(&res, dir.path()).unwrap();
        for p in [&paths.trials, &paths.aggregate, &paths.plot, &paths.manifest] {
            assert!(p.exists());
        }
        assert!(paths.trace.unwrap().exists());
        let m = Manifest::load(&paths.manifest).unwrap();
        assert_eq!(m.spec, spec);
        assert_eq!(m.master_seed, spec.master_seed);
        assert!(m.version.starts_with('v'));
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let res = run_single(&small(ExperimentKind::SingleRun), None).unwrap();
        assert!(emit_outputs(&res, file.join("sub")).is_err());
    }
}
