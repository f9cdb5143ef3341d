//! Report files: JSON documents, CSV summaries, path dumps and the run
//! manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use immse_core::identity::Verdict;
use immse_core::{DiscreteSystemSpec, Ensemble, IdentityReport};
use serde::Serialize;

pub const TOOL: &str = "immse";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Columns of `summary.csv`.
pub const SUMMARY_COLUMNS: [&str; 13] = [
    "label", "kind", "backend", "rho", "snr", "t", "lhs", "rhs_mmse", "rhs_corr", "rhs", "gap", "se", "verdict",
];

/// Columns of `sweep.csv`: the axis and grid value, then the summary columns.
pub const SWEEP_PREFIX: [&str; 2] = ["axis", "value"];

pub const DUMP_COLUMNS: [&str; 8] = ["path_index", "i", "w", "z", "g", "y", "S", "D"];

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Serialize)]
pub struct ReportDocument<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: &'a str,
    pub reports: &'a [IdentityReport],
}

/// Pretty JSON with a trailing newline. Contains no timing data, so equal
/// inputs give equal bytes.
pub fn report_json(config_hash: &str, reports: &[IdentityReport]) -> String {
    let doc = ReportDocument {
        tool: TOOL,
        version: VERSION,
        config_hash,
        reports,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("reports serialize");
    s.push('\n');
    s
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
    }
}

pub fn summary_row(r: &IdentityReport) -> Vec<String> {
    vec![
        r.label.clone(),
        r.kind.name().to_string(),
        r.backend.to_string(),
        num(r.rho),
        num(r.snr),
        num(r.t),
        r.lhs.value.to_string(),
        r.rhs_mmse.value.to_string(),
        r.rhs_correction.value.to_string(),
        r.rhs_total.to_string(),
        r.gap.to_string(),
        r.combined_se.to_string(),
        verdict_str(r.verdict).to_string(),
    ]
}

pub fn write_summary_csv<W: Write>(out: W, reports: &[IdentityReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in reports {
        w.write_record(summary_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, axis: &str, rows: &[(f64, IdentityReport)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_PREFIX.iter().chain(SUMMARY_COLUMNS.iter()))?;
    for (value, r) in rows {
        let mut rec = vec![axis.to_string(), value.to_string()];
        rec.extend(summary_row(r));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// First `count` paths of the scenario's ensemble, one row per step.
pub fn write_path_dump<W: Write>(
    out: W,
    system: &DiscreteSystemSpec,
    rho: f64,
    count: usize,
    seed: u64,
) -> Result<(), OutputError> {
    let validated = system.clone().validate().map_err(|e| {
        OutputError::Invalid(e.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    let ensemble =
        Ensemble::new(&validated, rho, count, seed).map_err(|e| OutputError::Invalid(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| OutputError::Invalid(e.to_string());
    w.write_record(DUMP_COLUMNS).map_err(to_err)?;
    for k in 0..count {
        let noise = ensemble.noise(k);
        let p = ensemble.path(k);
        for i in 0..validated.n() {
            w.write_record([
                k.to_string(),
                (i + 1).to_string(),
                noise.w_at(i).to_string(),
                p.z[i].to_string(),
                p.g[i].to_string(),
                p.y[i].to_string(),
                p.s[i].to_string(),
                p.d[i].to_string(),
            ])
            .map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| OutputError::Invalid(e.to_string()))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_source: String,
    pub config_hash: String,
    pub overrides: serde_json::Value,
    pub seeds: Vec<u64>,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<String>,
}

/// Collects files written into one output directory.
pub struct OutputDir {
    root: PathBuf,
    pub written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, OutputError> {
        std::fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, OutputError> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<PathBuf, OutputError>
    where
        F: FnOnce(std::io::BufWriter<std::fs::File>) -> Result<(), OutputError>,
    {
        let path = self.path(name);
        let file = std::fs::File::create(&path).map_err(io_err(&path))?;
        f(std::io::BufWriter::new(file))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_csv<F>(&mut self, name: &str, f: F) -> Result<PathBuf, OutputError>
    where
        F: FnOnce(std::io::BufWriter<std::fs::File>) -> csv::Result<()>,
    {
        let path = self.path(name);
        self.write_with(name, |w| f(w).map_err(csv_err(&path)))
    }

    pub fn write_manifest(&mut self, mut manifest: RunManifest) -> Result<PathBuf, OutputError> {
        manifest.outputs = self.written.clone();
        manifest.outputs.push("manifest.json".into());
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        self.write_bytes("manifest.json", text.as_bytes())
    }
}

/// File-name-safe form of a label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}
