use std::path::PathBuf;
use std::process::ExitCode;

use airgam::evaluation::Protocol;
use airgam::pipeline::{error_exit_code, run, Command, Options};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "airgam",
    version,
    about = "Weather-normalized additive models for air quality"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    PreLd,
    Ld,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the pre-lockdown model per station with forward selection.
    Fit,
    /// Temporal cross-validation.
    Validate {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
    },
    /// Weather-normalized lockdown reductions per station and class.
    Reduce,
    /// Lockdown models by refitting intercept and weekday terms.
    Transfer,
    /// Convex mixture of the pre-lockdown and lockdown models after the lockdown.
    Mix,
    /// Hypothetical lockdown-year scenario with the lockdown model.
    Scenario,
    /// Write synthetic observations and stations from the config.
    Synth,
}

fn main() -> ExitCode {
    env_logger_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let Some(config) = cli.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    let command = match cli.command {
        Cmd::Fit => Command::Fit,
        Cmd::Validate {
            protocol: ProtocolArg::PreLd,
        } => Command::Validate(Protocol::PreLd),
        Cmd::Validate {
            protocol: ProtocolArg::Ld,
        } => Command::Validate(Protocol::Ld),
        Cmd::Reduce => Command::Reduce,
        Cmd::Transfer => Command::Transfer,
        Cmd::Mix => Command::Mix,
        Cmd::Scenario => Command::Scenario,
        Cmd::Synth => Command::Synth,
    };
    let options = Options {
        config,
        out: cli.out,
        seed: cli.seed,
        jobs: cli.jobs,
    };
    match run(command, &options) {
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("warning: {}: {}", f.station_id, f.error);
            }
            eprintln!(
                "{}: {} station(s) ok, {} failed; outputs in {}",
                command.name(),
                outcome.stations_ok,
                outcome.failures.len(),
                outcome.out_dir.display()
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}

fn env_logger_init() {
    struct Stderr;
    impl log::Log for Stderr {
        fn enabled(&self, m: &log::Metadata) -> bool {
            m.level() <= log::Level::Warn
        }
        fn log(&self, r: &log::Record) {
            if self.enabled(r.metadata()) {
                eprintln!("{}: {}", r.level().as_str().to_lowercase(), r.args());
            }
        }
        fn flush(&self) {}
    }
    static LOGGER: Stderr = Stderr;
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(log::LevelFilter::Warn);
}
