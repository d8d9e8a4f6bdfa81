mod config;
mod output;

use ccsgs::closed_test::{self, AlgorithmRegistry, AnalysisData, IntersectionBoundsTable};
use ccsgs::design;
use ccsgs::graph::members;
use ccsgs::sim::{self, PowerResult, SimConfig, SimResult};
use clap::{Parser, Subcommand};
use config::ConfigFile;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad config, data or arguments (exit 2).
    Input(String),
    /// A numerical procedure failed (exit 3).
    Numerical(String),
}

impl From<ccsgs::Error> for CliError {
    fn from(e: ccsgs::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "ccsgs", version, about = "Group-sequential designs for nested populations with correlated closed testing")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive intersection bounds and the design report.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (bounds.json, bounds.csv, report.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        algorithm: Option<u8>,
    },
    /// Finalize the bounds of one analysis from its observed information.
    Update {
        #[arg(long)]
        config: PathBuf,
        /// Bounds table written by `plan` or a previous `update`.
        #[arg(long)]
        table: PathBuf,
        /// Analysis data (JSON).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        algorithm: Option<u8>,
    },
    /// Run the closed test on the statistics observed so far.
    Test {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        table: PathBuf,
        /// Analysis data files in analysis order.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep subgroup prevalence and write CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        p_min: Option<f64>,
        #[arg(long)]
        p_max: Option<f64>,
        #[arg(long)]
        p_step: Option<f64>,
        #[arg(long)]
        algorithm: Option<u8>,
    },
    /// Estimate FWER under every null configuration and power by simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        algorithm: Option<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Plan { config, out, algorithm } => plan(&config, out, algorithm),
        Command::Update {
            config,
            table,
            data,
            out,
            algorithm,
        } => update(&config, &table, &data, out, algorithm),
        Command::Test { config, table, data, out } => test(&config, &table, &data, out),
        Command::Sweep {
            config,
            out,
            p_min,
            p_max,
            p_step,
            algorithm,
        } => sweep(&config, out, [p_min, p_max, p_step], algorithm),
        Command::Simulate {
            config,
            out,
            reps,
            seed,
            algorithm,
        } => simulate(&config, out, reps, seed, algorithm),
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &ConfigFile) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Input("no output directory: pass --out or set \"output\"".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_table(dir: &Path, table: &IntersectionBoundsTable) -> Result<(), CliError> {
    output::write_json(&dir.join("bounds.json"), table)?;
    write_bytes(&dir.join("bounds.csv"), &output::bounds_csv(table)?)
}

fn plan(path: &Path, out: Option<PathBuf>, algorithm: Option<u8>) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path)?;
    let dir = out_dir(out, &cfg)?;
    let alg = cfg.algorithm(algorithm)?;
    let (report, table) = design::design_report(&cfg.design(), &alg)?;
    write_table(&dir, &table)?;
    output::write_json(&dir.join("report.json"), &report)?;
    print!("{}", output::report_text(&report));
    print!("{}", output::table_text(&table));
    Ok(())
}

fn update(
    path: &Path,
    table_path: &Path,
    data_path: &Path,
    out: Option<PathBuf>,
    algorithm: Option<u8>,
) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path)?;
    let table: IntersectionBoundsTable = read_json(table_path)?;
    let data: AnalysisData = read_json(data_path)?;
    let name = match algorithm.or(cfg.algorithm) {
        Some(_) => cfg.algorithm(algorithm)?,
        None => table.algorithm.clone(),
    };
    let alg = AlgorithmRegistry::default().create(&name)?;
    let dir = out_dir(out, &cfg)?;
    let design = cfg.design().closed_test_design()?;
    let updated = closed_test::update(&design, alg.as_ref(), &table, &data)?;
    write_table(&dir, &updated)?;
    print!("{}", output::table_text(&updated));
    Ok(())
}

fn test(path: &Path, table_path: &Path, data: &[PathBuf], out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path)?;
    let table: IntersectionBoundsTable = read_json(table_path)?;
    let observed: Vec<AnalysisData> = data.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    let graph = cfg.design().graph()?;
    let outcome = closed_test::closed_test(&table, &observed, &graph)?;
    match out {
        Some(p) => output::write_json(&p, &outcome)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&outcome).map_err(|e| CliError::Input(e.to_string()))?
        ),
    }
    Ok(())
}

fn grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && min > 0.0 && max <= 1.0 && min <= max) {
        return Err(CliError::Input(format!(
            "bad prevalence range {min}..{max} step {step}"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    // rounded to 10 decimals so 0.1 steps print as 0.3, 0.4, ...
    Ok((0..=n)
        .map(|i| ((min + i as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

fn sweep(path: &Path, out: Option<PathBuf>, range: [Option<f64>; 3], algorithm: Option<u8>) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path)?;
    let section = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Input(format!("{}: no \"sweep\" section", path.display())))?;
    let p_min = range[0].or(section.p_min).unwrap_or(0.3);
    let p_max = range[1].or(section.p_max).unwrap_or(0.8);
    let p_step = range[2].or(section.p_step).unwrap_or(0.1);
    let alg = cfg.algorithm(algorithm)?;
    let rows = design::prevalence_sweep(&cfg.design(), &grid(p_min, p_max, p_step)?, section.subgroup_effect, &alg)?;
    let bytes = output::sweep_csv(&rows)?;
    match out {
        Some(p) => write_bytes(&p, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

#[derive(Serialize)]
struct FwerRecord {
    /// 1-based populations whose null hypothesis is true.
    null: Vec<usize>,
    #[serde(flatten)]
    result: SimResult,
}

#[derive(Serialize)]
struct SimulationOutput {
    algorithm: String,
    alpha: f64,
    seed: u64,
    replications: u64,
    information: Vec<Vec<f64>>,
    fwer: Vec<FwerRecord>,
    power: Vec<PowerResult>,
}

fn simulate(
    path: &Path,
    out: Option<PathBuf>,
    reps: Option<u64>,
    seed: Option<u64>,
    algorithm: Option<u8>,
) -> Result<(), CliError> {
    let cfg = ConfigFile::load(path)?;
    let spec = cfg.design();
    let alg_name = cfg.algorithm(algorithm)?;
    let alg = AlgorithmRegistry::default().create(&alg_name)?;
    let section = cfg.simulation.clone();
    let replications = reps
        .or(section.as_ref().and_then(|s| s.replications))
        .unwrap_or(100_000);
    let seed = seed.or(cfg.seed).unwrap_or(1);

    let (_, planned) = design::design_report(&spec, &alg_name)?;
    let design = spec.closed_test_design()?;
    let actual = section
        .and_then(|s| s.actual_information)
        .unwrap_or_else(|| planned.information.clone());
    let table = sim::finalize_table(&design, alg.as_ref(), &planned, &actual)?;
    let unit = spec.unit_drifts()?;
    let pops = spec.populations();
    let drift_for = |null_mask: usize| -> Vec<Vec<f64>> {
        (0..pops)
            .map(|i| {
                actual[i]
                    .iter()
                    .map(|n| if null_mask >> i & 1 == 1 { 0.0 } else { unit[i] * n.sqrt() })
                    .collect()
            })
            .collect()
    };
    let config_for = |null_mask: usize| SimConfig {
        replications,
        seed,
        information: actual.clone(),
        drift: drift_for(null_mask),
        table: table.clone(),
        threads: None,
    };
    let mut fwer = Vec::new();
    for mask in 1..1usize << pops {
        fwer.push(FwerRecord {
            null: members(mask).iter().map(|i| i + 1).collect(),
            result: sim::estimate_fwer(&config_for(mask))?,
        });
    }
    let power = sim::estimate_power(&config_for(0))?;
    let record = SimulationOutput {
        algorithm: alg_name,
        alpha: spec.alpha,
        seed,
        replications,
        information: actual,
        fwer,
        power,
    };
    match out {
        Some(p) => output::write_json(&p, &record)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&record).map_err(|e| CliError::Input(e.to_string()))?
        ),
    }
    Ok(())
}
