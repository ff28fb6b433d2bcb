//! The `behexec` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::catalog::{system, ALL_BEHAVIORS, SYSTEMS};
use crate::mission::{parse_mission, MissionOutcome, Session, SessionOptions, TimingMode};
use crate::report::{metrics_csv, metrics_table, systems_table, ResourceSampler, SystemRow};

/// Set by the interrupt handler installed in `main`.
pub static ABORT: AtomicBool = AtomicBool::new(false);

pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ABORTED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "behexec",
    version,
    about = "Run behavior missions on a simulated quadrotor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a mission file against an occupancy grid.
    Run(RunArgs),
    /// List behavior systems and their behaviors.
    Behaviors,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    mission: PathBuf,
    #[arg(long)]
    grid: PathBuf,
    /// Step a virtual clock by this many seconds (default 0.01).
    #[arg(long, value_name = "SECONDS", conflicts_with = "real_time")]
    virtual_dt: Option<f64>,
    /// Run against the wall clock, each behavior on its own thread.
    #[arg(long)]
    real_time: bool,
    /// Execution frequency override, e.g. `FOLLOW_PATH=20`.
    #[arg(long = "freq", value_name = "BEHAVIOR=HZ", value_parser = parse_freq)]
    freq: Vec<(String, f64)>,
    /// Write per-behavior metrics as CSV.
    #[arg(long, value_name = "PATH")]
    metrics_out: Option<PathBuf>,
    /// Comma-separated behavior systems to register (default: all).
    #[arg(long, value_delimiter = ',')]
    systems: Vec<String>,
    #[arg(long, default_value = "warn")]
    log_level: log::LevelFilter,
    /// Time the monitoring checks with the wall clock in virtual runs.
    #[arg(long)]
    wall_timing: bool,
    /// Abort missions running longer than this.
    #[arg(long, value_name = "SECONDS", default_value_t = 3600.0)]
    max_duration: f64,
}

fn parse_freq(s: &str) -> Result<(String, f64), String> {
    let (name, hz) = s
        .split_once('=')
        .ok_or_else(|| format!("expected BEHAVIOR=HZ, got `{s}`"))?;
    if !ALL_BEHAVIORS.contains(&name) {
        return Err(format!("unknown behavior `{name}`"));
    }
    let hz: f64 = hz.parse().map_err(|_| format!("`{hz}` is not a number"))?;
    if !(hz.is_finite() && hz > 0.0) {
        return Err(format!("frequency must be positive, got {hz}"));
    }
    Ok((name.to_string(), hz))
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli_run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock(), &ABORT)
}

/// [`cli_run`] with explicit streams: the event log goes to `out`, the
/// reports and diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, abort: &AtomicBool) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_COMPLETED
            };
        }
    };
    match cli.command {
        Command::Behaviors => {
            for s in SYSTEMS {
                let _ = writeln!(out, "{}: {}", s.name, s.behaviors.join(" "));
            }
            EXIT_COMPLETED
        }
        Command::Run(args) => match run(&args, out, err, abort) {
            Ok(code) => code,
            Err(message) => {
                let _ = writeln!(err, "error: {message}");
                EXIT_ERROR
            }
        },
    }
}

fn read(path: &Path, what: &str) -> Result<String, String> {
    std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {what} file {}: {e}", path.display()))
}

fn run(
    args: &RunArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
    abort: &AtomicBool,
) -> Result<i32, String> {
    let _ = env_logger::Builder::new()
        .filter_level(args.log_level)
        .target(env_logger::Target::Stderr)
        .try_init();

    let mission_text = read(&args.mission, "mission")?;
    let grid_text = read(&args.grid, "grid")?;
    if !(args.max_duration.is_finite() && args.max_duration > 0.0) {
        return Err(format!(
            "--max-duration must be positive, got {}",
            args.max_duration
        ));
    }
    let timing = if args.real_time {
        TimingMode::RealTime { dt: 0.01 }
    } else {
        TimingMode::Virtual {
            dt: args.virtual_dt.unwrap_or(0.01),
        }
    };
    let mut opts = SessionOptions {
        timing,
        wall_timing: args.wall_timing,
        max_duration: Duration::from_secs_f64(args.max_duration),
        ..SessionOptions::default()
    };
    if !args.systems.is_empty() {
        opts.systems = args.systems.clone();
    }
    opts.catalog.frequencies = args.freq.clone();

    // Behaviors must be registered before the grid is published.
    let session = Session::new(&opts).map_err(|e| e.to_string())?;
    session
        .load_grid(&grid_text)
        .map_err(|e| format!("{}: {e}", args.grid.display()))?;
    let mission = parse_mission(&mission_text, &session.configs())
        .map_err(|e| format!("{}: {e}", args.mission.display()))?;

    let sampler = args
        .real_time
        .then(|| ResourceSampler::start(Duration::from_secs(1)));
    let mut write_failed = None;
    let report = session.run(
        &mission,
        &mut |event| {
            if let Err(e) = writeln!(out, "{}", event.to_json()).and_then(|_| out.flush()) {
                write_failed.get_or_insert(e);
            }
        },
        abort,
    );
    let usage = sampler.and_then(ResourceSampler::finish);
    if let Some(e) = write_failed {
        log::warn!("event log incomplete: {e}");
    }

    let rows: Vec<SystemRow> = opts
        .systems
        .iter()
        .filter_map(|name| system(name))
        .map(|s| SystemRow {
            system: s.name.to_string(),
            behaviors: s.behaviors.len(),
            usage,
        })
        .collect();
    let mut summary = format!(
        "mission {} after {:.3} s ({} steps)\n",
        report.outcome.as_str(),
        report.duration_s,
        report.ticks
    );
    if report.tolerated_failures > 0 {
        summary += &format!("tolerated failures: {}\n", report.tolerated_failures);
    }
    if let Some(reason) = &report.abort_reason {
        summary += &format!("abort reason: {reason}\n");
    }
    let _ = write!(
        err,
        "{summary}\n{}\n{}",
        metrics_table(&report.metrics, report.duration_s),
        systems_table(&rows)
    );

    if let Some(path) = &args.metrics_out {
        std::fs::write(path, metrics_csv(&report.metrics))
            .map_err(|e| format!("cannot write metrics file {}: {e}", path.display()))?;
    }
    Ok(match report.outcome {
        MissionOutcome::Completed => EXIT_COMPLETED,
        MissionOutcome::Aborted => EXIT_ABORTED,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freq_values() {
        assert_eq!(parse_freq("LAND=20"), Ok(("LAND".into(), 20.0)));
        assert!(parse_freq("LAND").is_err());
        assert!(parse_freq("NOPE=1").is_err());
        assert!(parse_freq("LAND=0").is_err());
        assert!(parse_freq("LAND=x").is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let abort = AtomicBool::new(false);
        assert_eq!(
            run_with(["behexec", "run"], &mut out, &mut err, &abort),
            EXIT_ERROR
        );
        assert_eq!(
            run_with(["behexec", "--help"], &mut out, &mut err, &abort),
            EXIT_COMPLETED
        );
        let args = [
            "behexec",
            "run",
            "--mission",
            "m",
            "--grid",
            "g",
            "--real-time",
            "--virtual-dt",
            "0.1",
        ];
        assert_eq!(run_with(args, &mut out, &mut err, &abort), EXIT_ERROR);
    }

    #[test]
    fn missing_file_is_named() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let abort = AtomicBool::new(false);
        let code = run_with(
            [
                "behexec",
                "run",
                "--mission",
                "/nonexistent/m.txt",
                "--grid",
                "/nonexistent/g.txt",
            ],
            &mut out,
            &mut err,
            &abort,
        );
        assert_eq!(code, EXIT_ERROR);
        assert!(String::from_utf8(err)
            .unwrap()
            .contains("/nonexistent/m.txt"));
    }
}
