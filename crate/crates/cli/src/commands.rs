use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pe_consensus::{
    diameter, gamma_max, gamma_min_1d, run_sweep, simulate, validate_hypotheses,
    verify_trajectory, Trajectory,
};
use thiserror::Error;

use crate::config::{ConfigError, LoadedConfig};
use crate::svg;

#[derive(Debug, Parser)]
#[command(name = "pe-consensus", version, about = "Consensus dynamics under persistently exciting communication")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation; writes trajectory.csv, observables.csv and, for d = 1, trajectory.svg
    Simulate(SimulateArgs),
    /// Monte Carlo sweep over mu; writes sweep.csv, fit.json and loglog.svg
    Sweep(SweepArgs),
    /// Re-check a trajectory CSV and print a JSON report
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding `output_dir`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed, overriding `model.seed`
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// PE level, overriding `schedule.mu`
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trials per mu, overriding `sweep.trials`
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run configuration the trajectory was produced with
    #[arg(long)]
    pub config: PathBuf,
    /// Trajectory CSV as written by `simulate`
    pub trajectory: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("simulation failed: {0}")]
    Simulation(pe_consensus::Error),
    #[error("check `{0}` failed")]
    CheckFailed(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Simulation(_) => 3,
            CliError::CheckFailed(_) => 4,
            CliError::Output { .. } => 1,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Verify(args) => cmd_verify(&args),
    }
}

fn output_dir(common: &Common, loaded: &LoadedConfig) -> Result<PathBuf, CliError> {
    let dir = common.out.clone().unwrap_or_else(|| loaded.config.output_dir.clone());
    fs::create_dir_all(&dir).map_err(|source| CliError::Output {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let wrap = |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    f(&mut w).and_then(|_| w.flush()).map_err(wrap)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let loaded = LoadedConfig::read(&args.common.config)?;
    let sim = loaded.simulation(args.mu, args.common.seed)?;
    validate_hypotheses(&sim.model, &sim.initial)
        .map_err(|e| loaded.error(Some("kernel"), "kind", e.to_string()))?;
    let traj = simulate(&sim.initial, &sim.ensemble, &sim.model, &sim.settings)
        .map_err(CliError::Simulation)?;

    let dir = output_dir(&args.common, &loaded)?;
    let traj_path = dir.join("trajectory.csv");
    write_file(&traj_path, |w| traj.write_csv(w))?;
    let obs_path = dir.join("observables.csv");
    write_file(&obs_path, |w| write_observables(w, &traj))?;
    println!("wrote {} ({} samples)", traj_path.display(), traj.len());
    println!("wrote {}", obs_path.display());
    if traj.first().dim() == 1 {
        let svg_path = dir.join("trajectory.svg");
        write_file(&svg_path, |w| w.write_all(svg::trajectory(&traj).as_bytes()))?;
        println!("wrote {}", svg_path.display());
    }
    let last = traj.last();
    println!(
        "stopped at t = {} ({:?}), diameter {} -> {}",
        last.t(),
        traj.stop_reason().expect("simulated trajectories carry a stop reason"),
        diameter(traj.first()),
        diameter(last)
    );
    Ok(())
}

fn write_observables<W: Write>(w: &mut W, traj: &Trajectory) -> io::Result<()> {
    let one_d = traj.first().dim() == 1;
    if one_d {
        writeln!(w, "t,diameter,gamma_max,gamma_min")?;
    } else {
        writeln!(w, "t,diameter,gamma_max")?;
    }
    for s in traj.samples() {
        write!(w, "{},{},{}", s.t(), diameter(s), gamma_max(s))?;
        if one_d {
            let lo = gamma_min_1d(s).expect("one-dimensional sample");
            write!(w, ",{lo}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let loaded = LoadedConfig::read(&args.common.config)?;
    let spec = loaded.sweep_spec(args.common.seed, args.trials)?;
    let distinct: BTreeSet<u64> = spec.mu_values.iter().map(|m| m.to_bits()).collect();
    if distinct.len() < 2 {
        eprintln!("warning: a single mu value gives no log-log fit");
    }
    let result = run_sweep(&spec).map_err(CliError::Simulation)?;

    let dir = output_dir(&args.common, &loaded)?;
    let csv_path = dir.join("sweep.csv");
    write_file(&csv_path, |w| result.write_csv(w))?;
    let fit_path = dir.join("fit.json");
    write_file(&fit_path, |w| writeln!(w, "{}", result.fit_json()))?;
    let svg_path = dir.join("loglog.svg");
    write_file(&svg_path, |w| w.write_all(svg::loglog(&result.rows, result.fit).as_bytes()))?;

    println!("{:>10} {:>12} {:>12} {:>12}", "mu", "mean_time", "std", "unconverged");
    for r in &result.rows {
        println!("{:>10} {:>12.4} {:>12.4} {:>12}", r.mu, r.mean_time, r.std, r.n_unconverged);
    }
    if let Some(f) = result.fit {
        println!("slope {:.4}, intercept {:.4}, r^2 {:.5}", f.slope, f.intercept, f.r_squared);
    }
    for p in [&csv_path, &fit_path, &svg_path] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let loaded = LoadedConfig::read(&args.config)?;
    let input = |message: String| CliError::Input {
        path: args.trajectory.clone(),
        message,
    };
    let file = File::open(&args.trajectory).map_err(|e| input(e.to_string()))?;
    let traj = Trajectory::read_csv(BufReader::new(file)).map_err(|e| input(e.to_string()))?;
    let bounds = validate_hypotheses(&loaded.config.model(), traj.first())
        .map_err(|e| input(e.to_string()))?;
    let reports = verify_trajectory(&traj, &bounds, loaded.config.schedule.period)
        .map_err(|e| input(e.to_string()))?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    // A closed pipe on stdout should not mask the verdict.
    let _ = writeln!(io::stdout().lock(), "{json}");
    match reports.iter().find(|r| !r.pass) {
        Some(r) => Err(CliError::CheckFailed(r.check.clone())),
        None => Ok(()),
    }
}
