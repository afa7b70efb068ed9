//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal failure, 2 configuration error (including
//! unreadable input files), 3 output I/O error, 4 calibration non-convergence.

use crate::error::Error;
use crate::experiment::calibrate::{calibrate, CalibrationTargets};
use crate::experiment::{classical_baseline, error_budget, fibre_comparison, run_campaign, CampaignConfig};
use crate::linkgeom::{loss_profile, write_loss_csv};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "teleport-sim", version, about = "Ground-to-satellite qubit teleportation simulator")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Campaign configuration (TOML). Built-in calibrated defaults when absent.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte Carlo campaign and write all figure data.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Override the configured random seed.
        #[arg(long, value_name = "U64")]
        seed: Option<u64>,
    },
    /// Uplink loss over the reference pass, one row per second.
    LossProfile {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit the free model parameters to published observables.
    Calibrate {
        /// Calibration targets (TOML). Published values when absent.
        #[arg(long, value_name = "PATH")]
        targets: Option<PathBuf>,
        /// Base campaign configuration; overrides the one named in the targets file.
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// One-source-at-a-time fidelity deficits.
    ErrorBudget {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write error_budget.csv into this directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Measure-and-resend fidelity over Haar-random inputs.
    ClassicalBaseline {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, value_name = "U64", default_value_t = 7)]
        seed: u64,
    },
    /// Waiting time for one event through a direct fibre link.
    FibreCompare {
        /// Source event rate, Hz.
        #[arg(long, default_value_t = 8210.0)]
        rate: f64,
        #[arg(long, default_value_t = 1200.0)]
        distance_km: f64,
        #[arg(long, default_value_t = 0.2)]
        loss_db_per_km: f64,
    },
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: 3,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::InvalidParameter { .. } => 2,
            Error::Io { .. } => 3,
            Error::NonConvergence { .. } => 4,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Reads an input file; an unreadable input is a configuration error.
fn load_config(args: &ConfigArgs) -> std::result::Result<CampaignConfig, Failure> {
    match &args.config {
        None => Ok(CampaignConfig::default()),
        Some(p) => CampaignConfig::load(p).map_err(input_failure),
    }
}

fn input_failure(e: Error) -> Failure {
    match e {
        Error::Io { path, source } => Failure::config(format!("cannot read {path}: {source}")),
        other => other.into(),
    }
}

fn prepare_out(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
}

fn write_loss(cfg: &CampaignConfig, path: &Path) -> CliResult {
    let rows = loss_profile(&cfg.geometry, &cfg.link, cfg.orbit_duration, 1.0)?;
    write_loss_csv(&rows, create(path)?).map_err(|e| Failure::io(path, e))?;
    log::info!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn write_budget(cfg: &CampaignConfig, dir: Option<&Path>) -> std::result::Result<crate::experiment::ErrorBudget, Failure> {
    let budget = error_budget(cfg)?;
    if let Some(dir) = dir {
        prepare_out(dir)?;
        let path = dir.join("error_budget.csv");
        budget.write_csv(create(&path)?).map_err(|e| Failure::io(&path, e))?;
        log::info!("wrote {}", path.display());
    }
    Ok(budget)
}

fn simulate(config: &ConfigArgs, out: &Path, seed: Option<u64>) -> CliResult {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    prepare_out(out)?;
    log::info!("running {} orbits, seed {}", cfg.orbits.len(), cfg.seed);
    let result = run_campaign(&cfg)?;
    let json = out.join("campaign_result.json");
    result.write_json(&json).map_err(|e| Failure::io(&json, e))?;
    let fig3 = out.join("fig3_fidelities.csv");
    result
        .write_fidelity_csv(create(&fig3)?)
        .map_err(|e| Failure::io(&fig3, e))?;
    write_loss(&cfg, &out.join("fig2_loss.csv"))?;
    write_budget(&cfg, Some(out))?;
    println!("total counts {}", result.total_counts);
    for s in &result.states {
        match (s.fidelity, s.sigma) {
            (Some(f), Some(e)) => println!("{:>2}  F = {f:.3} ± {e:.3}  ({} / {})", s.state.label(), s.correct, s.correct + s.wrong),
            _ => println!("{:>2}  no events", s.state.label()),
        }
    }
    println!("mean F = {:.3} ± {:.3}", result.mean_fidelity, result.mean_sigma);
    Ok(())
}

fn run_calibrate(targets: Option<&Path>, config: &ConfigArgs, out: &Path) -> CliResult {
    let (t, base) = match targets {
        Some(p) => {
            let t = CalibrationTargets::load(p).map_err(input_failure)?;
            let base = match &config.config {
                Some(_) => load_config(config)?,
                None => t
                    .base_config(p.parent().unwrap_or(Path::new(".")))
                    .map_err(input_failure)?,
            };
            (t, base)
        }
        None => (CalibrationTargets::default(), load_config(config)?),
    };
    prepare_out(out)?;
    let fit = match calibrate(&base, &t) {
        Ok(fit) => fit,
        Err(Error::NonConvergence {
            iterations,
            residual,
            best,
        }) => {
            write_json(&out.join("calibration_best.json"), &*best)?;
            return Err(Error::NonConvergence {
                iterations,
                residual,
                best,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    write_json(&out.join("calibration.json"), &fit)?;
    let toml_path = out.join("calibrated_campaign.toml");
    let text = fit.parameters.apply(&base).to_toml_string()?;
    std::fs::write(&toml_path, text).map_err(|e| Failure::io(&toml_path, e))?;

    let a = serde_json::to_value(fit.achieved).expect("plain numbers");
    let g = serde_json::to_value(fit.targets).expect("plain numbers");
    println!("{:<26} {:>14} {:>14}", "observable", "target", "achieved");
    for (k, v) in g.as_object().expect("struct") {
        println!("{k:<26} {:>14.6} {:>14.6}", v.as_f64().unwrap_or(f64::NAN), a[k].as_f64().unwrap_or(f64::NAN));
    }
    println!("residual {:.3e} after {} iterations", fit.residual, fit.sweeps);
    let p = serde_json::to_value(fit.parameters).expect("plain numbers");
    for (k, v) in p.as_object().expect("struct") {
        println!("{k} = {v}");
    }
    if !fit.within_tolerance {
        return Err(Failure {
            code: 4,
            message: format!("fit stalled at residual {:.3e}; targets look infeasible", fit.residual),
        });
    }
    Ok(())
}

fn dispatch(command: &Command) -> CliResult {
    match command {
        Command::Simulate { config, out, seed } => simulate(config, &out.out, *seed),
        Command::LossProfile { config, out } => {
            let cfg = load_config(config)?;
            prepare_out(&out.out)?;
            write_loss(&cfg, &out.out.join("fig2_loss.csv"))
        }
        Command::Calibrate { targets, config, out } => run_calibrate(targets.as_deref(), config, &out.out),
        Command::ErrorBudget { config, out } => {
            let cfg = load_config(config)?;
            let budget = write_budget(&cfg, out.as_deref())?;
            for row in &budget.rows {
                println!("{:<24} {:.4}", row.source.label(), row.deficit);
            }
            Ok(())
        }
        Command::ClassicalBaseline { samples, seed } => {
            let f = classical_baseline(*samples, &mut ChaCha8Rng::seed_from_u64(*seed))?;
            println!("classical measure-and-resend fidelity {f:.5} over {samples} samples");
            Ok(())
        }
        Command::FibreCompare {
            rate,
            distance_km,
            loss_db_per_km,
        } => {
            let c = fibre_comparison(*rate, *distance_km, *loss_db_per_km)?;
            println!("loss {:.1} dB, transmittance {:.3e}", c.loss_db, c.transmittance);
            println!("waiting time {:.3e} s = {:.3e} years", c.waiting_time_s, c.waiting_time_years);
            Ok(())
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> ExitCode {
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Entry point of the `teleport-sim` binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    run(&cli)
}
