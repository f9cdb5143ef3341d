use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use immse::catalog;
use immse::run::{self, Overrides, SweepOptions, VerifyOptions};

const OUTPUT_HELP: &str = "\
Output files (in --out):
  report.json   tool, version, config_hash and one object per report
  summary.csv   label,kind,backend,rho,snr,t,lhs,rhs_mmse,rhs_corr,rhs,gap,se,verdict
  sweep.csv     axis,value followed by the summary.csv columns, one row per grid point
  paths-*.csv   path_index,i,w,z,g,y,S,D (with --dump-paths)
  manifest.json config hash, seeds, overrides, per-stage wall-clock seconds, file list

Values are in the form of the scenario's parameter: d/drho for rho scenarios,
d/dsnr for snr scenarios, d/dt for de Bruijn scenarios.

Exit status: 0 all verdicts pass, 1 some verdict fails, 2 configuration or usage error.";

#[derive(Parser)]
#[command(name = "immse", version, about = "Numerical checks of I-MMSE identities for Gaussian channels with feedback and memory", after_help = OUTPUT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify every scenario in a config file or a builtin scenario.
    #[command(after_help = OUTPUT_HELP)]
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the first N simulated paths of each scenario.
        #[arg(long, value_name = "N")]
        dump_paths: Option<usize>,
    },
    /// Re-run scenarios along one axis and write a long-format CSV.
    #[command(after_help = OUTPUT_HELP)]
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// One of N, K, m, h, rho, snr, t.
        #[arg(long)]
        axis: String,
        /// Comma-separated grid values (decreasing for h, increasing otherwise).
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
    },
    /// List the builtin scenarios.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON scenario file, or a builtin name (optionally with a
    /// -snr<v>, -rho<v> or -t<v> suffix).
    source: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Outer paths.
    #[arg(long)]
    n: Option<usize>,
    /// Inner prior draws per path.
    #[arg(long)]
    k: Option<usize>,
    /// Euler steps for continuous-time scenarios.
    #[arg(long)]
    m: Option<usize>,
    /// Finite-difference step.
    #[arg(long)]
    h: Option<f64>,
    /// Pass threshold in standard errors.
    #[arg(long = "tol-z")]
    tol_z: Option<f64>,
    /// auto, monte-carlo or oracle.
    #[arg(long, value_parser = run::parse_backend)]
    backend: Option<immse_core::identity::Backend>,
    /// Scenarios run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "immse-out")]
    out: PathBuf,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            n: self.n,
            k: self.k,
            m: self.m,
            h: self.h,
            tol_z: self.tol_z,
            backend: self.backend,
        }
    }
}

fn list(json: bool) -> i32 {
    let all = catalog::builtins();
    if json {
        let entries: Vec<_> = all
            .iter()
            .map(|b| {
                serde_json::json!({
                    "name": b.name,
                    "identity": b.identity,
                    "description": b.description,
                    "config": b.config(),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&entries).expect("catalog serializes"));
    } else {
        let width = all.iter().map(|b| b.name.len()).max().unwrap_or(0);
        for b in &all {
            println!("{:<width$}  {:<16}  {}", b.name, b.identity, b.description);
        }
    }
    run::EXIT_PASS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let code = match cli.command {
        Command::List { json } => list(json),
        Command::Verify { run, dump_paths } => {
            let opts = VerifyOptions {
                source: &run.source,
                overrides: run.overrides(),
                jobs: run.jobs,
                out: &run.out,
                dump_paths,
            };
            match run::cmd_verify(&opts, &mut stdout) {
                Ok(reports) => run::exit_code(&reports),
                Err(e) => {
                    eprintln!("error: {e}");
                    run::EXIT_ERROR
                }
            }
        }
        Command::Sweep { run, axis, grid } => {
            let opts = SweepOptions {
                source: &run.source,
                overrides: run.overrides(),
                axis: &axis,
                grid: &grid,
                out: &run.out,
            };
            match run::cmd_sweep(&opts, &mut stdout) {
                Ok(rows) => {
                    let reports: Vec<_> = rows.into_iter().map(|(_, r)| r).collect();
                    run::exit_code(&reports)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    run::EXIT_ERROR
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
