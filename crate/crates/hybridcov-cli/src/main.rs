//! Command-line driver: runs experiment configs, lists presets, and checks
//! itself.
//!
//! Exit codes: 0 on success, 1 for config or argument problems, 2 when a run
//! or the selftest fails at the numerical level.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hybridcov::analysis::rho_ds_upper_bound;
use hybridcov::channel::ScenarioConfig;
use hybridcov::experiment::{
    csv_string, emit_csv, load_config, parse_csv, run_experiment, Algorithm, ExperimentSpec,
    Preset,
};

#[derive(Parser)]
#[command(
    name = "hybridcov",
    version,
    about = "Monte-Carlo experiments for spatial covariance estimation under hybrid sensing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON experiment config (schema 1) and emit a CSV result table.
    Run {
        /// Path to the config file.
        config: PathBuf,
        /// Override the run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the Monte-Carlo trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Write the CSV here, overriding the config's output path; without
        /// either, results go to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: one per core). The output bytes never
        /// depend on this.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in presets with their default trial counts.
    ListPresets,
    /// Run a quick internal consistency suite.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            seed,
            trials,
            out,
            threads,
        } => run(&config, seed, trials, out, threads),
        Command::ListPresets => {
            list_presets();
            0
        }
        Command::Selftest => selftest(),
    };
    ExitCode::from(code)
}

fn run(
    config: &PathBuf,
    seed: Option<u64>,
    trials: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> u8 {
    let mut spec = match load_config(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(t) = trials {
        spec.trials = t;
    }
    if let Some(p) = out {
        spec.output_path = Some(p);
    }
    if let Err(e) = spec.validate() {
        eprintln!("invalid spec: {e}");
        return 1;
    }
    let table = {
        let work = || run_experiment(&spec);
        let outcome = match threads {
            Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                Ok(pool) => pool.install(work),
                Err(e) => {
                    eprintln!("thread pool: {e}");
                    return 1;
                }
            },
            None => work(),
        };
        match outcome {
            Ok(t) => t,
            Err(e) => {
                eprintln!("{e}");
                return 1;
            }
        }
    };
    let emitted = match &spec.output_path {
        Some(p) => emit_csv(&table, p).map(|()| eprintln!("wrote {}", p.display())),
        None => {
            print!("{}", csv_string(&table));
            Ok(())
        }
    };
    if let Err(e) = emitted {
        eprintln!("{e}");
        return 2;
    }
    if let Some(msg) = &table.failure {
        eprintln!("run stopped early: {msg}");
        return 2;
    }
    0
}

fn list_presets() {
    println!("{:<7} {:>6}  description", "preset", "trials");
    for p in Preset::ALL {
        let trials = p
            .spec()
            .map(|s| s.trials.to_string())
            .unwrap_or_else(|| "-".to_string());
        println!("{:<7} {:>6}  {}", p.name(), trials, p.describe());
    }
}

fn selftest() -> u8 {
    let checks: [(&str, fn() -> Result<(), String>); 5] = [
        ("limit-bound-closed-form", bound_check),
        ("unitary-recovery-exact", unitary_check),
        ("deterministic-bytes", determinism_check),
        ("csv-round-trip", csv_check),
        ("analysis-smoke", analysis_check),
    ];
    let mut failed = false;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("ok   {name}"),
            Err(detail) => {
                failed = true;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed {
        2
    } else {
        0
    }
}

fn bound_check() -> Result<(), String> {
    let cases = [((64, 8, 8, 0), 0.5), ((64, 8, 8, 7), 1.0)];
    for ((n, m, l, l_o), want) in cases {
        let got = rho_ds_upper_bound(n, m, l, l_o).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("bound({n},{m},{l},{l_o}) = {got}, want {want}"));
        }
    }
    Ok(())
}

fn tiny_spec() -> ExperimentSpec {
    ExperimentSpec {
        preset: Preset::Custom,
        scenario: ScenarioConfig {
            n: 16,
            m: 4,
            d: 16,
            l: 2,
            t: 4,
            snr_db: 10.0,
            on_grid: true,
            mimo: None,
            wideband: None,
        },
        algorithms: vec![Algorithm::Somp, Algorithm::Dcomp],
        trials: 2,
        t_sweep: vec![2, 4],
        snr_sweep: vec![10.0],
        seed: 11,
        output_path: None,
    }
}

fn unitary_check() -> Result<(), String> {
    let mut spec = tiny_spec();
    spec.scenario.m = 16;
    spec.scenario.snr_db = 300.0;
    spec.snr_sweep = vec![300.0];
    spec.t_sweep = vec![3];
    spec.trials = 1;
    spec.algorithms = Algorithm::NARROWBAND.to_vec();
    let table = run_experiment(&spec).map_err(|e| e.to_string())?;
    for r in table.rows.iter().filter(|r| r.metric == "eta") {
        if (r.mean - 1.0).abs() > 1e-6 {
            return Err(format!("{} eta = {}", r.algorithm, r.mean));
        }
    }
    Ok(())
}

fn determinism_check() -> Result<(), String> {
    let spec = tiny_spec();
    let a = csv_string(&run_experiment(&spec).map_err(|e| e.to_string())?);
    let b = csv_string(&run_experiment(&spec).map_err(|e| e.to_string())?);
    if a != b {
        return Err("two identical runs differed".to_string());
    }
    Ok(())
}

fn csv_check() -> Result<(), String> {
    let table = run_experiment(&tiny_spec()).map_err(|e| e.to_string())?;
    let back = parse_csv(&csv_string(&table)).map_err(|e| e.to_string())?;
    if back.rows != table.rows {
        return Err("rows changed across a render/parse cycle".to_string());
    }
    Ok(())
}

fn analysis_check() -> Result<(), String> {
    let mut spec = Preset::Fig2.spec().expect("preset defaults");
    spec.trials = 2;
    spec.t_sweep = vec![1];
    let table = run_experiment(&spec).map_err(|e| e.to_string())?;
    if let Some(f) = table.failure {
        return Err(f);
    }
    if table.rows.is_empty() {
        return Err("no rows".to_string());
    }
    for r in &table.rows {
        if !r.mean.is_finite() {
            return Err(format!("{}/{} mean {}", r.algorithm, r.metric, r.mean));
        }
    }
    Ok(())
}
