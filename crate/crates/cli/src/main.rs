//! `droc` command-line driver.
//!
//! Every subcommand reads one JSON config (`--config`) that carries
//! `"schema": 1` and writes its outputs into `--out` (default `out/`).
//!
//! Config documents by subcommand:
//!
//! * `partition`: `{"schema": 1, "samples": [[..], ..], "support": {"lower": [..],
//!   "upper": [..]}, "regions": {"fixed": 4} | {"elbow": {"k_max": 8}}, "seed": 0}`.
//!   Writes `result.csv` (one row per region) and `summary.json` (the
//!   partition scheme and nominal distribution).
//! * `solve`: `{"schema": 1, "instance": <Instance>}` where the instance has
//!   the keys `decision`, `objective`, `partition`, `nominal`, `ambiguity`.
//!   Writes `result.csv` (decision coordinates), `summary.json` and, with
//!   `--lp`, `program.lp`.
//! * `tune`: `{"schema": 1, "samples": .., "model": {"method": {"method": "droc",
//!   "partition": .., "cone": ..}, "objective": .., "decision": .., "tol": 1e-8},
//!   "epsilons": [..], "rhos": [..], "beta": 0.15, "kboot": 50, "seed": 0}`.
//!   Writes the candidate table to `result.csv` and the winner to `summary.json`.
//! * `benchmark`: a benchmark config (`problem`, `partition`, `cone`,
//!   `n_grid`, `trials`, `methods`, `parameters`, `seed`, ...). Writes
//!   `result.csv`, `summary.json` and one `<metric>.svg` per metric
//!   (`decision`, `certificate`, `actual_cost`, `certificate_gap`).
//! * `oracle`: `{"schema": 1, "instance": <Instance>, "x": [..]}`; `--density`
//!   adds evenly spaced interior points per coordinate to each region grid.
//!   Prints the worst-case value and distribution as JSON and writes it to
//!   `summary.json`.
//!
//! `--seed` and `--tol` override the values found in the config.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use droc_core::bench::{self, BenchConfig, Metric};
use droc_core::calibrate::{bootstrap_tune, candidate_grid, DroModel, TuneResult};
use droc_core::model::{AxisBox, Instance};
use droc_core::oracle::{product_grid, worst_case_expectation, FiniteInstance};
use droc_core::partition::{build_nominal, partition_from_data, RegionCount};
use droc_core::reformulate::{build_any, solve_reduced};
use droc_core::DroError;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

const DEFAULT_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "droc", version, about = "Partition-based optimal-transport DRO")]
struct Cli {
    /// JSON config with "schema": 1.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Relative solver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster samples and fit the region tree.
    Partition,
    /// Solve one instance.
    Solve {
        /// Also write the program in LP format.
        #[arg(long)]
        lp: bool,
    },
    /// Bootstrap selection of (epsilon, rho).
    Tune,
    /// Monte Carlo comparison of DROC, DROW and SAA.
    Benchmark,
    /// Brute-force worst case of a fixed decision.
    Oracle {
        /// Extra interior grid points per coordinate and region.
        #[arg(long, default_value_t = 0)]
        density: usize,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] DroError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

type CliResult<T> = Result<T, CliError>;

#[derive(Deserialize)]
struct PartitionConfig {
    samples: Vec<Vec<f64>>,
    support: AxisBox,
    regions: RegionCount,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
struct SolveConfig {
    instance: Instance,
    tol: Option<f64>,
}

#[derive(Deserialize)]
struct TuneConfig {
    samples: Vec<Vec<f64>>,
    model: DroModel,
    epsilons: Vec<f64>,
    rhos: Vec<f64>,
    beta: f64,
    kboot: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
struct OracleConfig {
    instance: Instance,
    x: Vec<f64>,
}

fn read_config<T: DeserializeOwned>(cli: &Cli) -> CliResult<T> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <json> is required".into()))?;
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text)?;
    match value.get("schema").and_then(Value::as_u64) {
        Some(1) => Ok(serde_json::from_value(value)?),
        Some(v) => Err(CliError::Usage(format!("unsupported config schema {v}"))),
        None => Err(CliError::Usage("config is missing \"schema\": 1".into())),
    }
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn run_partition(cli: &Cli) -> CliResult<()> {
    let cfg: PartitionConfig = read_config(cli)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let scheme = partition_from_data(&cfg.samples, &cfg.support, cfg.regions, seed)?;
    let nominal = build_nominal(&cfg.samples, &scheme)?;
    let mut w = csv::Writer::from_path(cli.out.join("result.csv"))?;
    w.write_record(["region", "lower", "upper", "count", "weight"])?;
    for (i, r) in scheme.regions.iter().enumerate() {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            i.to_string(),
            join(&r.lower),
            join(&r.upper),
            nominal.atoms[i].len().to_string(),
            nominal.weights[i].to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&cli.out, "summary.json", &json!({ "partition": scheme, "nominal": nominal }))?;
    println!("{} regions", scheme.len());
    Ok(())
}

fn run_solve(cli: &Cli, lp: bool) -> CliResult<()> {
    let cfg: SolveConfig = read_config(cli)?;
    let tol = cli.tol.or(cfg.tol).unwrap_or(DEFAULT_TOL);
    let prog = build_any(&cfg.instance)?;
    if lp {
        fs::write(cli.out.join("program.lp"), prog.to_lp_string())?;
    }
    let sol = solve_reduced(&prog, tol)?;
    let mut w = csv::Writer::from_path(cli.out.join("result.csv"))?;
    w.write_record(["coordinate", "value"])?;
    for (k, v) in sol.x.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    write_json(
        &cli.out,
        "summary.json",
        &json!({
            "x": sol.x,
            "certificate": sol.certificate,
            "status": sol.solution.status,
            "iterations": sol.solution.iterations,
            "max_violation": sol.solution.max_violation,
            "variables": prog.num_vars(),
        }),
    )?;
    println!("certificate {}", sol.certificate);
    Ok(())
}

fn tune_summary(r: &TuneResult) -> Value {
    json!({
        "selected": r.selected,
        "candidate": r.candidate,
        "threshold": r.threshold,
        "kboot": r.kboot,
        "x": r.solution.as_ref().map(|s| s.x.clone()),
        "certificate": r.solution.as_ref().map(|s| s.certificate),
    })
}

fn run_tune(cli: &Cli) -> CliResult<()> {
    let mut cfg: TuneConfig = read_config(cli)?;
    if let Some(tol) = cli.tol {
        cfg.model.tol = tol;
    }
    let seed = cli.seed.unwrap_or(cfg.seed);
    let grid = candidate_grid(&cfg.epsilons, &cfg.rhos);
    let (result, found) = match bootstrap_tune(&cfg.samples, &cfg.model, &grid, cfg.beta, cfg.kboot, seed)
    {
        Ok(r) => (r, true),
        Err(DroError::NoReliableCandidate(r)) => (*r, false),
        Err(e) => return Err(e.into()),
    };
    result.write_csv(&cli.out.join("result.csv"))?;
    write_json(&cli.out, "summary.json", &tune_summary(&result))?;
    if found {
        let c = result.candidate.as_ref().expect("selected candidate");
        println!("selected epsilon {} rho {}", c.epsilon, c.rho);
        Ok(())
    } else {
        Err(DroError::NoReliableCandidate(Box::new(result)).into())
    }
}

fn run_benchmark(cli: &Cli) -> CliResult<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <json> is required".into()))?;
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    let mut config = BenchConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(tol) = cli.tol {
        config.tol = tol;
    }
    let result = bench::run_benchmark(&config)?;
    bench::emit_csv(&result, &cli.out.join("result.csv"))?;
    for metric in [Metric::Decision, Metric::Certificate, Metric::ActualCost, Metric::CertificateGap] {
        bench::emit_svg_boxplot(&result, metric, &cli.out.join(format!("{}.svg", metric.name())))?;
    }
    let summary = bench::summarize(&result);
    write_json(&cli.out, "summary.json", &summary)?;
    for g in &summary.groups {
        println!(
            "{} N={} solved {}/{} reliability {}",
            g.method.name(),
            g.n,
            g.solved,
            g.trials,
            g.reliability.map_or("-".into(), |r| format!("{r:.3}"))
        );
    }
    Ok(())
}

fn interior(lo: f64, hi: f64, density: usize) -> Vec<f64> {
    (1..=density)
        .map(|k| lo + (hi - lo) * k as f64 / (density + 1) as f64)
        .collect()
}

fn run_oracle(cli: &Cli, density: usize) -> CliResult<()> {
    let cfg: OracleConfig = read_config(cli)?;
    let inst = &cfg.instance;
    let grids = inst
        .partition
        .regions
        .iter()
        .zip(&inst.nominal.atoms)
        .map(|(r, atoms)| {
            let extra: Vec<Vec<f64>> =
                (0..r.dim()).map(|c| interior(r.lower[c], r.upper[c], density)).collect();
            product_grid(r, atoms, &extra)
        })
        .collect();
    let fi = FiniteInstance::new(inst, grids)?;
    let wc = worst_case_expectation(&cfg.x, &fi)?;
    let report = json!({
        "value": wc.value,
        "p": wc.p,
        "grids": fi.grids,
        "masses": wc.masses,
    });
    write_json(&cli.out, "summary.json", &report)?;
    println!("{}", serde_json::to_string(&json!({ "value": wc.value, "p": wc.p }))?);
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(tol) = cli.tol {
        if tol.is_nan() || tol <= 0.0 {
            return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
        }
    }
    if cli.config.is_none() {
        return Err(CliError::Usage("--config <json> is required".into()));
    }
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Partition => run_partition(cli),
        Command::Solve { lp } => run_solve(cli, *lp),
        Command::Tune => run_tune(cli),
        Command::Benchmark => run_benchmark(cli),
        Command::Oracle { density } => run_oracle(cli, *density),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
