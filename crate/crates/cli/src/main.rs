//! Command-line front end: run a scenario in one mode or compare two modes,
//! writing per-step CSV logs and JSON reports.

mod config;
mod error;
mod output;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vessel_cbf::{Mode, Outcome, ScenarioConfig, SimLog};

use crate::error::CliError;
use crate::report::{CompareReport, ModeSummary, RunReport};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_BREAKDOWN: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "vessel-cbf", version, about = "Towing-vessel tracking with a barrier-function safety filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Reference,
    Qp,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Reference => Mode::ReferenceOnly,
            ModeArg::Qp => Mode::QpFiltered,
        }
    }
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// Override the step size, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the simulated duration, s.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario in one mode.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulate the same scenario in two modes side by side.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, num_args = 2, default_values = ["reference", "qp"])]
        modes: Vec<ModeArg>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    let result = match cli.command {
        Command::Run { scenario, mode, out, overrides } => cmd_run(&scenario, mode, &out, &overrides),
        Command::Compare { scenario, out, modes, overrides } => {
            cmd_compare(&scenario, &out, &modes, &overrides)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn prepare(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, CliError> {
    let mut cfg = config::load(path)?;
    if let Some(dt) = overrides.dt {
        cfg.dt = dt;
    }
    if let Some(d) = overrides.duration {
        cfg.duration = d;
    }
    config::validate(&cfg, path)?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn simulate(cfg: &ScenarioConfig, path: &Path) -> Result<SimLog, CliError> {
    vessel_cbf::harness::run(cfg).map_err(|source| CliError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}

fn write_run(cfg: &ScenarioConfig, log: &SimLog, out: &Path) -> Result<RunReport, CliError> {
    let label = log.mode.label();
    let csv_path = out.join(format!("{label}.csv"));
    output::write_csv(log, &csv_path)?;
    Ok(RunReport::build(cfg, log, csv_path.display().to_string()))
}

fn exit_for(logs: &[&SimLog]) -> u8 {
    if logs.iter().all(|l| matches!(l.outcome, Outcome::Completed)) {
        EXIT_OK
    } else {
        EXIT_BREAKDOWN
    }
}

fn cmd_run(
    scenario: &Path,
    mode: Option<ModeArg>,
    out: &Path,
    overrides: &Overrides,
) -> Result<u8, CliError> {
    let mut cfg = prepare(scenario, overrides)?;
    if let Some(m) = mode {
        cfg.mode = m.into();
    }
    ensure_dir(out)?;
    let log = simulate(&cfg, scenario)?;
    let report = write_run(&cfg, &log, out)?;
    output::write_json(&report, &out.join(format!("{}_report.json", log.mode.label())))?;
    print!("{}", report.summary());
    Ok(exit_for(&[&log]))
}

fn cmd_compare(
    scenario: &Path,
    out: &Path,
    modes: &[ModeArg],
    overrides: &Overrides,
) -> Result<u8, CliError> {
    let [a, b] = modes else {
        return Err(CliError::Usage("--modes takes exactly two modes".into()));
    };
    if a == b {
        return Err(CliError::Usage("--modes must name two different modes".into()));
    }
    let base = prepare(scenario, overrides)?;
    ensure_dir(out)?;
    let configs = [a, b].map(|m| ScenarioConfig { mode: (*m).into(), ..base.clone() });
    let (la, lb) = std::thread::scope(|s| {
        let ha = s.spawn(|| simulate(&configs[0], scenario));
        let hb = s.spawn(|| simulate(&configs[1], scenario));
        (
            ha.join().expect("simulation thread panicked"),
            hb.join().expect("simulation thread panicked"),
        )
    });
    let logs = [la?, lb?];
    let mut runs = Vec::with_capacity(2);
    for (cfg, log) in configs.iter().zip(&logs) {
        runs.push(write_run(cfg, log, out)?);
    }
    let report = CompareReport {
        summary: logs.iter().map(ModeSummary::build).collect(),
        runs,
    };
    output::write_json(&report, &out.join("compare.json"))?;
    for r in &report.runs {
        print!("{}", r.summary());
    }
    print!("{}", report.table());
    Ok(exit_for(&[&logs[0], &logs[1]]))
}
