//! Command-line entry points: `simulate`, `predict`, `verify` and `gen-demand`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{predict_bench, BenchProblem};
use crate::config::{Policy, RunConfig};
use crate::error::{Error, Result};
use crate::field::DemandField;
use crate::fuzz::run_corpus;
use crate::io::{load_field, version_string, write_field, write_manifest, write_metrics, Manifest, RunRecord};
use crate::sim::{run, synthetic_field};

/// Fleet sizes and run lengths swept by `simulate --scalability`.
pub const SCALABILITY_GRID: [(usize, usize); 3] = [(10, 960), (20, 480), (30, 320)];

#[derive(Parser, Debug)]
#[command(name = "gpddf", version, about = "Decentralized GP demand fusion and active sensing for a vehicle fleet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the closed-loop fleet simulation and write metrics and a manifest.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Record per-vehicle wall time in the metrics CSV.
        #[arg(long)]
        timing: bool,
        /// Sweep the fleet-size grid (10, 960), (20, 480), (30, 320).
        #[arg(long)]
        scalability: bool,
    },
    /// Compare FGP, GP-DDF and GP-DDF+ on one fixed dataset.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 2000)]
        data_size: usize,
        #[arg(long, default_value_t = 200)]
        query_size: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Repeat the benchmark with twice the data.
        #[arg(long)]
        double: bool,
    },
    /// Fuzz the decentralized protocol against the centralized oracles.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
    /// Generate a synthetic demand field CSV.
    GenDemand {
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Configuration file plus per-key overrides.
#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid size as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    vehicles: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    support_size: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Demand field CSV to use instead of a synthetic field.
    #[arg(long)]
    field: Option<PathBuf>,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad grid dimension {v:?}: {e}"));
    Ok((dim(r)?, dim(c)?))
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some((rows, cols)) = self.grid {
            cfg.rows = rows;
            cfg.cols = cols;
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field.clone() { cfg.$field = v; })* };
        }
        set!(seed, policy, out, vehicles, users, steps, horizon, support_size);
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.field.is_some() {
            cfg.field = self.field.clone();
        }
        Ok(cfg)
    }
}

/// Loads the configured field file (adopting its grid size) or generates one.
fn field_for(cfg: &mut RunConfig) -> Result<DemandField> {
    match cfg.field.clone() {
        Some(path) => {
            let field = load_field(&path, None)?;
            cfg.rows = field.rows;
            cfg.cols = field.cols;
            Ok(field)
        }
        None => synthetic_field(cfg),
    }
}

enum Failure {
    Usage(Error),
    Runtime(Error),
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn runtime<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

/// Parses `argv` (program name first) and runs the subcommand, returning the
/// process exit code: 0 on success, 1 on runtime failure or verification
/// breach, 2 on usage or configuration errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> std::result::Result<i32, Failure> {
    match command {
        Command::Simulate { run, timing, scalability } => {
            let mut cfg = usage(run.config())?;
            cfg.record_wall_time |= timing;
            let field = usage(field_for(&mut cfg))?;
            usage(cfg.validate())?;
            runtime(simulate(&cfg, field, scalability))?;
            Ok(0)
        }
        Command::Predict { run, data_size, query_size, reps, double } => {
            let mut cfg = usage(run.config())?;
            let field = usage(field_for(&mut cfg))?;
            usage(cfg.validate())?;
            let sizes = if double { vec![data_size, 2 * data_size] } else { vec![data_size] };
            println!("{:<8} {:>6} {:>16} {:>10}", "method", "|D|", "per-vehicle ms", "rmse");
            for n in sizes {
                let problem = usage(BenchProblem::new(&cfg, &field, n, query_size))?;
                for row in runtime(predict_bench(&problem, reps))? {
                    println!("{:<8} {:>6} {:>16.3} {:>10.4}", row.method, row.data_size, row.per_vehicle_ms, row.rmse);
                }
            }
            Ok(0)
        }
        Command::Verify { seed, instances } => {
            if instances == 0 {
                return Err(Failure::Usage(Error::Invalid("instances must be positive".into())));
            }
            let report = runtime(run_corpus(seed, instances))?;
            println!("{} multi-vehicle instances, seed {seed}", report.instances);
            for (name, value, tol) in report.rows() {
                let verdict = if value <= tol { "ok" } else { "BREACH" };
                println!("{verdict:<6} {name:<32} max {value:.3e} (tolerance {tol:.0e})");
            }
            println!("info   variance ordering excess     max {:.3e}", report.variance_excess);
            println!("info   PIC covariance min eigenvalue / trace {:.3e}", report.pic_min_eig);
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::GenDemand { run } => {
            let cfg = usage(run.config())?;
            usage(cfg.validate())?;
            let field = runtime(synthetic_field(&cfg))?;
            let path = run.out.unwrap_or_else(|| PathBuf::from("demand.csv"));
            runtime(write_field(&path, &field))?;
            println!("wrote {} regions to {}", field.len(), path.display());
            Ok(0)
        }
    }
}

fn simulate(cfg: &RunConfig, field: DemandField, scalability: bool) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    let grid: Vec<(usize, usize)> = if scalability { SCALABILITY_GRID.to_vec() } else { vec![(cfg.vehicles, cfg.steps)] };
    let mut runs = Vec::with_capacity(grid.len());
    for &(vehicles, steps) in &grid {
        let cfg = RunConfig { vehicles, steps, ..cfg.clone() };
        cfg.validate()?;
        let name = if scalability { format!("metrics_k{vehicles}_l{steps}.csv") } else { "metrics.csv".to_string() };
        let result = run(&cfg, field.clone())?;
        write_metrics(&cfg.out.join(&name), &result.rows)?;
        let f = result.final_row();
        println!(
            "{} K={vehicles} L={steps}: rmse {:.4} kld {:.4} pickups {} cruise {:.2} wait {:.2}",
            result.policy, f.rmse, f.kld, f.total_pickups, f.avg_cruise, f.avg_wait
        );
        runs.push(RunRecord::new(&cfg, &result, &name));
    }
    let manifest = Manifest {
        version: version_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        runs,
        scalability_grid: scalability.then_some(grid),
    };
    write_manifest(&manifest_path(&cfg.out), &manifest)
}

fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.json")
}
