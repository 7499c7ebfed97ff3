use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use aero_core::{AsmOptions, PartitionId, Schedule};
use aero_tools::commands::{self, WcetArgs};
use aero_tools::config::{parse_level, RunConfig};
use aero_tools::formats;
use aero_tools::units::parse_duration;
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aero",
    version,
    about = "Partitioned soft-processor simulator and toolchain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble into <base>.bin, <base>.dat and <base>.lst.
    Asm {
        input: PathBuf,
        #[arg(short, long = "output", value_name = "BASE")]
        output: PathBuf,
        /// Slots between a register write and its first reader.
        #[arg(long, default_value_t = 2)]
        hazard_distance: usize,
        /// Let the source use r14 and emt (r15).
        #[arg(long)]
        allow_reserved: bool,
    },
    /// Simulate one or more configurations; several run in parallel.
    Run {
        #[arg(short, long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Override the configured horizon (cycles, or `ms` suffix).
        #[arg(long)]
        horizon: Option<String>,
        /// Override the configured trace file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Override the trace level: events, retire or pipeline.
        #[arg(long)]
        level: Option<String>,
    },
    /// Effective WCET of a task confined to a partition.
    Wcet {
        #[arg(long = "tau-a0")]
        tau_a0: String,
        /// Execution time per grant; taken from --config when omitted.
        #[arg(long = "tau-p")]
        tau_p: Option<String>,
        /// Grant-to-grant spacing; taken from --config when omitted.
        #[arg(long = "ep")]
        e_p: Option<String>,
        /// Bare numbers are milliseconds.
        #[arg(long)]
        ms: bool,
        #[arg(long)]
        csv: bool,
        #[arg(long, default_value_t = Schedule::DEFAULT_CLOCK_HZ)]
        clock_hz: u64,
        /// Read tau_p and the observed grant spacing from a schedule.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        partition: u8,
    },
    /// Check a schedule: exit 0 valid, 1 conflict, 2 invalid parameters.
    Validate { schedule: PathBuf },
    /// Print the grant table predicted from a schedule.
    Timeline {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        horizon: String,
    },
    /// Pair UART markers in a trace and report iteration lengths.
    Measure {
        trace: PathBuf,
        #[arg(long)]
        partition: u8,
        #[arg(long, default_value = "0x018", value_parser = parse_addr)]
        marker: u16,
        #[arg(long, default_value_t = Schedule::DEFAULT_CLOCK_HZ)]
        clock_hz: u64,
    },
}

fn parse_addr(text: &str) -> Result<u16, String> {
    let parsed = match text.strip_prefix("0x") {
        Some(hex) => u16::from_str_radix(hex, 16),
        None => text.parse(),
    };
    parsed.map_err(|e| e.to_string())
}

fn partition(index: u8) -> Result<PartitionId> {
    PartitionId::new(index).with_context(|| format!("no partition {index}"))
}

fn run_one(
    path: &Path,
    horizon: Option<&str>,
    trace: Option<&Path>,
    level: Option<&str>,
) -> Result<(String, bool)> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(h) = horizon {
        cfg.horizon = parse_duration(h, cfg.schedule.clock_hz)?;
    }
    if let Some(t) = trace {
        cfg.trace = Some(t.to_path_buf());
    }
    if let Some(l) = level {
        cfg.level = parse_level(l)?;
    }
    let report = commands::cmd_run(&cfg).with_context(|| format!("{}", path.display()))?;
    Ok((
        commands::run_summary(&report, cfg.schedule.clock_hz),
        report.fault.is_none(),
    ))
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Asm {
            input,
            output,
            hazard_distance,
            allow_reserved,
        } => {
            let opts = AsmOptions {
                hazard_distance,
                allow_reserved_registers: allow_reserved,
                ..Default::default()
            };
            let art = commands::cmd_asm(&input, &output, &opts)?;
            eprintln!(
                "{} code words, {} data words -> {}, {}, {}",
                art.code_words,
                art.data_words,
                art.bin.display(),
                art.dat.display(),
                art.lst.display()
            );
        }
        Command::Run {
            configs,
            horizon,
            trace,
            level,
        } => {
            if configs.len() > 1 && trace.is_some() {
                anyhow::bail!("--trace applies to a single configuration");
            }
            let results: Vec<Result<(String, bool)>> = thread::scope(|s| {
                let handles: Vec<_> = configs
                    .iter()
                    .map(|c| {
                        s.spawn(|| {
                            run_one(c, horizon.as_deref(), trace.as_deref(), level.as_deref())
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect()
            });
            let mut ok = true;
            for (path, result) in configs.iter().zip(results) {
                if configs.len() > 1 {
                    println!("== {}", path.display());
                }
                match result {
                    Ok((summary, clean)) => {
                        print!("{summary}");
                        ok &= clean;
                    }
                    Err(e) => {
                        eprintln!("error: {e:#}");
                        ok = false;
                    }
                }
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Wcet {
            tau_a0,
            tau_p,
            e_p,
            ms,
            csv,
            clock_hz,
            config,
            partition: index,
        } => {
            let (tau_p, e_p, clock_hz) = match config {
                Some(path) => {
                    let cfg = RunConfig::load(&path)?;
                    let (exec, spacing) =
                        commands::observed_access(&cfg.schedule, partition(index)?)?;
                    let hz = cfg.schedule.clock_hz;
                    (
                        tau_p.unwrap_or_else(|| format!("{exec}")),
                        e_p.unwrap_or_else(|| format!("{spacing}")),
                        hz,
                    )
                }
                None => (
                    tau_p.context("--tau-p is required without --config")?,
                    e_p.context("--ep is required without --config")?,
                    clock_hz,
                ),
            };
            print!(
                "{}",
                commands::cmd_wcet(&WcetArgs {
                    tau_a0,
                    tau_p,
                    e_p,
                    ms,
                    clock_hz,
                    csv
                })?
            );
        }
        Command::Validate { schedule } => {
            let cfg = RunConfig::load(&schedule)?;
            let (code, report) = commands::cmd_validate(&cfg.schedule);
            if code == 0 {
                println!("{report}");
            } else {
                eprintln!("{report}");
            }
            return Ok(ExitCode::from(code as u8));
        }
        Command::Timeline { config, horizon } => {
            let cfg = RunConfig::load(&config)?;
            let horizon = parse_duration(&horizon, cfg.schedule.clock_hz)?;
            print!("{}", commands::cmd_timeline(&cfg.schedule, horizon)?);
        }
        Command::Measure {
            trace,
            partition: index,
            marker,
            clock_hz,
        } => {
            let file = std::fs::File::open(&trace)
                .with_context(|| format!("cannot open {}", trace.display()))?;
            let t = formats::read_trace(file)?;
            print!(
                "{}",
                commands::cmd_measure(&t, marker, partition(index)?, clock_hz)?
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
