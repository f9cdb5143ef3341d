//! The `verify` and `sweep` commands, independent of argument parsing.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use immse_core::identity::{convergence_sweep, verify_identity, Backend, IdentityError, SweepAxis};
use immse_core::{IdentityReport, ScenarioConfig};
use serde_json::{json, Value};

use crate::config::{ConfigError, LoadedConfig, Scenario};
use crate::output::{self, OutputDir, OutputError, RunManifest, StageTiming};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario '{label}': {source}")]
    Identity { label: String, source: IdentityError },
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Usage(String),
}

/// Command-line values that replace those in the scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub h: Option<f64>,
    pub tol_z: Option<f64>,
    pub backend: Option<Backend>,
}

impl Overrides {
    pub fn apply(&self, s: &mut ScenarioConfig) {
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.n {
            s.budgets.n_outer = v;
        }
        if let Some(v) = self.k {
            s.budgets.k_inner = v;
        }
        if let Some(v) = self.m {
            s.budgets.m_steps = v;
        }
        if let Some(v) = self.h {
            s.budgets.h = Some(v);
        }
        if let Some(v) = self.tol_z {
            s.tolerance.z = v;
        }
        if let Some(v) = self.backend {
            s.backend = v;
        }
    }

    fn to_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        if let Some(v) = self.seed {
            put("seed", json!(v));
        }
        if let Some(v) = self.n {
            put("N", json!(v));
        }
        if let Some(v) = self.k {
            put("K", json!(v));
        }
        if let Some(v) = self.m {
            put("m", json!(v));
        }
        if let Some(v) = self.h {
            put("h", json!(v));
        }
        if let Some(v) = self.tol_z {
            put("tol_z", json!(v));
        }
        if let Some(v) = self.backend {
            put("backend", serde_json::to_value(v).unwrap_or(Value::Null));
        }
        Value::Object(m)
    }
}

pub fn parse_backend(s: &str) -> Result<Backend, String> {
    match s {
        "auto" => Ok(Backend::Auto),
        "monte-carlo" | "mc" => Ok(Backend::MonteCarlo),
        "oracle" => Ok(Backend::Oracle),
        other => Err(format!("unknown backend '{other}' (auto, monte-carlo, oracle)")),
    }
}

/// Comma-separated numbers; an empty list is an error.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, RunError> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    if items.is_empty() {
        return Err(RunError::Usage("--grid is empty".into()));
    }
    items
        .iter()
        .map(|x| {
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| RunError::Usage(format!("--grid: '{x}' is not a number")))
        })
        .collect()
}

struct Stages(Vec<StageTiming>);

impl Stages {
    fn time<T>(&mut self, name: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push(StageTiming {
            stage: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn load(source: &str, overrides: &Overrides) -> Result<(LoadedConfig, Vec<Scenario>), RunError> {
    let loaded = LoadedConfig::resolve(source)?;
    let mut scenarios = loaded.scenarios()?;
    for s in &mut scenarios {
        overrides.apply(&mut s.config);
        s.config.validate().map_err(|source| RunError::Identity {
            label: s.config.label.clone(),
            source,
        })?;
    }
    Ok((loaded, scenarios))
}

/// Runs `task` on every index with up to `jobs` worker threads; results
/// come back in index order.
fn run_indexed<T: Send>(count: usize, jobs: usize, task: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, count.max(1));
    if jobs == 1 {
        return (0..count).map(task).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let value = task(i);
                slots.lock().expect("no worker panicked")[i] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|v| v.expect("every index ran"))
        .collect()
}

fn summary_line(r: &IdentityReport) -> String {
    let mut line = format!(
        "{:<4} {} [{}] lhs={:.6} rhs={:.6} (mmse {:.6}, correction {:.6}) gap={:.3e} se={:.3e}",
        output::verdict_str(r.verdict).to_uppercase(),
        r.label,
        r.kind,
        r.lhs.value,
        r.rhs_total,
        r.rhs_mmse.value,
        r.rhs_correction.value,
        r.gap,
        r.combined_se,
    );
    if let Some(d) = &r.diagnosis {
        line.push_str(" : ");
        line.push_str(d);
    }
    line
}

pub struct VerifyOptions<'a> {
    pub source: &'a str,
    pub overrides: Overrides,
    pub jobs: usize,
    pub out: &'a Path,
    pub dump_paths: Option<usize>,
}

/// Returns the reports; the exit code follows from their verdicts.
pub fn cmd_verify(opts: &VerifyOptions<'_>, stdout: &mut dyn Write) -> Result<Vec<IdentityReport>, RunError> {
    let mut stages = Stages(Vec::new());
    let (loaded, scenarios) = stages.time("load", || load(opts.source, &opts.overrides))?;

    let start = Instant::now();
    let results = run_indexed(scenarios.len(), opts.jobs, |i| {
        let s = &scenarios[i];
        let t0 = Instant::now();
        let r = verify_identity(s.kind, &s.config);
        (r, t0.elapsed().as_secs_f64())
    });
    let mut reports = Vec::with_capacity(results.len());
    for (s, (r, secs)) in scenarios.iter().zip(results) {
        stages.0.push(StageTiming {
            stage: format!("verify:{}", s.config.label),
            seconds: secs,
        });
        reports.push(r.map_err(|source| RunError::Identity {
            label: s.config.label.clone(),
            source,
        })?);
    }
    stages.0.push(StageTiming {
        stage: "verify".into(),
        seconds: start.elapsed().as_secs_f64(),
    });

    let mut dir = OutputDir::create(opts.out)?;
    stages.time("write", || -> Result<(), RunError> {
        dir.write_bytes("report.json", output::report_json(&loaded.config_hash, &reports).as_bytes())?;
        dir.write_csv("summary.csv", |w| output::write_summary_csv(w, &reports))?;
        if let Some(count) = opts.dump_paths {
            for s in &scenarios {
                let Some(system) = s.path_system() else { continue };
                let rho = reports
                    .iter()
                    .find(|r| r.label == s.config.label)
                    .and_then(|r| r.rho)
                    .unwrap_or(1.0);
                let name = format!("paths-{}.csv", output::slug(&s.config.label));
                dir.write_with(&name, |w| output::write_path_dump(w, &system, rho, count, s.config.seed))?;
            }
        }
        Ok(())
    })?;
    dir.write_manifest(RunManifest {
        tool: output::TOOL,
        version: output::VERSION,
        command: "verify".into(),
        config_source: loaded.source.clone(),
        config_hash: loaded.config_hash.clone(),
        overrides: opts.overrides.to_json(),
        seeds: scenarios.iter().map(|s| s.config.seed).collect(),
        stages: stages.0,
        outputs: Vec::new(),
    })?;

    for r in &reports {
        let _ = writeln!(stdout, "{}", summary_line(r));
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    let _ = writeln!(
        stdout,
        "{passed}/{} passed; reports in {}",
        reports.len(),
        opts.out.display()
    );
    Ok(reports)
}

pub struct SweepOptions<'a> {
    pub source: &'a str,
    pub overrides: Overrides,
    pub axis: &'a str,
    pub grid: &'a str,
    pub out: &'a Path,
}

/// One row per (scenario, grid point); the CSV also goes to `stdout`.
pub fn cmd_sweep(opts: &SweepOptions<'_>, stdout: &mut dyn Write) -> Result<Vec<(f64, IdentityReport)>, RunError> {
    let axis: SweepAxis = opts
        .axis
        .parse()
        .map_err(|e: IdentityError| RunError::Usage(e.to_string()))?;
    let grid = parse_grid(opts.grid)?;
    let mut stages = Stages(Vec::new());
    let (loaded, scenarios) = stages.time("load", || load(opts.source, &opts.overrides))?;

    let mut rows = Vec::new();
    for s in &scenarios {
        let reports = stages
            .time(format!("sweep:{}", s.config.label), || {
                convergence_sweep(s.kind, &s.config, axis, &grid)
            })
            .map_err(|source| RunError::Identity {
                label: s.config.label.clone(),
                source,
            })?;
        rows.extend(grid.iter().copied().zip(reports));
    }

    let mut dir = OutputDir::create(opts.out)?;
    let reports: Vec<IdentityReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    dir.write_bytes("sweep.json", output::report_json(&loaded.config_hash, &reports).as_bytes())?;
    dir.write_csv("sweep.csv", |w| output::write_sweep_csv(w, axis.name(), &rows))?;
    dir.write_manifest(RunManifest {
        tool: output::TOOL,
        version: output::VERSION,
        command: format!("sweep --axis {} --grid {}", axis.name(), opts.grid),
        config_source: loaded.source.clone(),
        config_hash: loaded.config_hash.clone(),
        overrides: opts.overrides.to_json(),
        seeds: scenarios.iter().map(|s| s.config.seed).collect(),
        stages: stages.0,
        outputs: Vec::new(),
    })?;

    let mut buf = Vec::new();
    output::write_sweep_csv(&mut buf, axis.name(), &rows).map_err(|e| OutputError::Invalid(e.to_string()))?;
    let _ = stdout.write_all(&buf);
    Ok(rows)
}

pub fn exit_code(reports: &[IdentityReport]) -> i32 {
    if reports.iter().all(IdentityReport::passed) {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.5, 1,2").unwrap(), vec![0.5, 1.0, 2.0]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid(" , ").is_err());
        assert!(parse_grid("1,x").is_err());
    }

    #[test]
    fn indexed_runs_keep_order() {
        let v = run_indexed(7, 3, |i| i * i);
        assert_eq!(v, vec![0, 1, 4, 9, 16, 25, 36]);
        assert!(run_indexed(0, 4, |i| i).is_empty());
    }
}
