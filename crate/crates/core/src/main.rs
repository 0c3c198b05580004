use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hyseek::hybrid::read_arc;
use hyseek::scenario::{
    compare_average, run, sweep, verify_gap, write_run, ScenarioConfig, ScenarioError, SweepGrid,
};
use hyseek::synergistic::GapOptions;
use hyseek::uncertainty::{theta_jump_times, verify_adt, verify_att};

/// Hybrid minimum-seeking experiments.
#[derive(Parser)]
#[command(name = "hyseek", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its arc, summary and plot tables.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Cartesian product of a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the closed loop with its averaged system for several ε.
    CompareAverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        phases: usize,
        /// Largest acceptable ratio between consecutive deviations.
        #[arg(long, default_value_t = 0.7)]
        max_ratio: f64,
    },
    /// Estimate the synergy gap of the scenario's family and compare with δ.
    VerifyGap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Check the dwell-time and activation-time bounds on a written arc.
    CheckDwell {
        #[arg(long)]
        arc: PathBuf,
        #[arg(long)]
        chi1: Option<f64>,
        #[arg(long)]
        chi2: Option<f64>,
        #[arg(long)]
        t_circ: Option<f64>,
    },
}

/// 0: checks pass, 1: a check failed.
type Outcome = Result<bool, ScenarioError>;

fn load(config: &Path, seed: Option<u64>) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::from_file(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn simulate(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Outcome {
    let cfg = load(config, seed)?;
    let rec = run(&cfg)?;
    let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
    write_run(&rec, &dir)?;
    print!("{}", rec.summary.to_text());
    println!("out = {}", dir.display());
    Ok(rec.summary.passes())
}

fn do_sweep(config: &Path, grid: &Path, out: Option<PathBuf>) -> Outcome {
    let cfg = load(config, None)?;
    let grid = SweepGrid::from_file(grid)?;
    let report = sweep(&cfg, &grid)?;
    let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let path = dir.join("sweep.csv");
    std::fs::write(&path, report.to_csv()).map_err(|e| io(&path, e))?;
    println!("runs = {}", report.rows.len() + report.failures.len());
    println!("failed = {}", report.failures.len());
    println!("nu = {}", report.nu);
    println!("success_rate = {}", report.success_rate());
    println!("out = {}", path.display());
    for (p, e) in &report.failures {
        eprintln!("seed {} eps {}: {e}", p.seed, p.eps);
    }
    Ok(report.failures.is_empty() && report.rows.iter().all(|r| r.summary.passes()))
}

fn io(path: &Path, e: std::io::Error) -> ScenarioError {
    ScenarioError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn do_compare(config: &Path, eps: &[f64], phases: usize, max_ratio: f64) -> Outcome {
    let cfg = load(config, None)?;
    let rows = compare_average(&cfg, eps, phases)?;
    println!("eps,deviation,ratio");
    for r in &rows {
        let ratio = r.ratio.map(|v| v.to_string()).unwrap_or_default();
        println!("{},{},{}", r.eps, r.deviation, ratio);
    }
    Ok(rows.iter().all(|r| r.ratio.is_none_or(|q| q <= max_ratio)))
}

fn do_gap(config: &Path, samples: usize) -> Outcome {
    let cfg = load(config, None)?;
    let opts = GapOptions {
        samples,
        ..GapOptions::default()
    };
    let rep = verify_gap(&cfg, &opts)?;
    println!("scenario = {}", cfg.scenario.name());
    println!("gap = {}", rep.gap);
    println!("delta = {}", rep.delta);
    println!("critical_points = {}", rep.critical_points.len());
    println!("result = {}", if rep.passes() { "pass" } else { "fail" });
    Ok(rep.passes())
}

fn do_dwell(path: &Path, chi1: Option<f64>, chi2: Option<f64>, t_circ: Option<f64>) -> Outcome {
    let file = read_arc(path)?;
    let param = |flag: Option<f64>, key: &str| -> Result<f64, ScenarioError> {
        match flag {
            Some(v) => Ok(v),
            None => file
                .metadata
                .get(key)
                .ok_or_else(|| ScenarioError::Config(format!("`{key}` not in arc metadata; pass --{key}")))?
                .parse()
                .map_err(|_| ScenarioError::Config(format!("bad `{key}` in arc metadata"))),
        }
    };
    let chi1 = param(chi1, "chi1")?;
    let chi2 = param(chi2, "chi2")?;
    let t_circ = param(t_circ, "t_circ")?;
    let arc = &file.arc;
    let eb = arc
        .channel("in_eb")
        .ok_or_else(|| ScenarioError::Config("arc has no `in_eb` channel".into()))?;
    let times: Vec<f64> = arc.times().iter().map(|t| t.t).collect();
    let jumps = theta_jump_times(arc);
    let adt = verify_adt(&jumps, chi1);
    let att = verify_att(&times, &eb, chi2, t_circ);
    let pf = |b: bool| if b { "pass" } else { "fail" };
    println!("gain_jumps = {}", jumps.len());
    println!("adt = {}", pf(adt));
    println!("att = {}", pf(att));
    Ok(adt && att)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, seed, out } => simulate(&config, seed, out),
        Command::Sweep { config, grid, out } => do_sweep(&config, &grid, out),
        Command::CompareAverage {
            config,
            eps,
            phases,
            max_ratio,
        } => do_compare(&config, &eps, phases, max_ratio),
        Command::VerifyGap { config, samples } => do_gap(&config, samples),
        Command::CheckDwell {
            arc,
            chi1,
            chi2,
            t_circ,
        } => do_dwell(&arc, chi1, chi2, t_circ),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
