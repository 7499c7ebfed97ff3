//! The subcommands, as library functions. Each returns its report as text
//! and leaves printing and exit codes to the binary.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use aero_core::memsys::AccessAudit;
use aero_core::swcu::ScheduleError;
use aero_core::wcet::{self, WcetQuery};
use aero_core::{
    assemble, grant_timeline, validate_schedule, AsmOptions, Fault, GrantRow, Machine, PartitionId,
    Schedule, Trace, MAX_PARTITIONS,
};
use anyhow::{bail, Context, Result};

use crate::config::RunConfig;
use crate::formats;
use crate::units::{cycles_to_ms, format_ms, parse_duration};

/// Files written by [`cmd_asm`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsmArtifacts {
    pub bin: PathBuf,
    pub dat: PathBuf,
    pub lst: PathBuf,
    pub code_words: usize,
    pub data_words: usize,
}

fn with_extension(base: &Path, ext: &str) -> PathBuf {
    let mut name = base.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

/// Assembles `input` into `<base>.bin`, `<base>.dat` and `<base>.lst`.
pub fn cmd_asm(input: &Path, base: &Path, opts: &AsmOptions) -> Result<AsmArtifacts> {
    let src =
        fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let out = match assemble(&src, opts) {
        Ok(out) => out,
        Err(e) => bail!("{}: {e}", input.display()),
    };
    let art = AsmArtifacts {
        bin: with_extension(base, "bin"),
        dat: with_extension(base, "dat"),
        lst: with_extension(base, "lst"),
        code_words: out.code.len(),
        data_words: out.data.words.len(),
    };
    let create =
        |p: &Path| fs::File::create(p).with_context(|| format!("cannot create {}", p.display()));
    formats::write_bin(&out.code, &mut create(&art.bin)?)?;
    formats::write_dat(&out.data, &mut create(&art.dat)?)?;
    fs::write(&art.lst, &out.listing)
        .with_context(|| format!("cannot write {}", art.lst.display()))?;
    Ok(art)
}

/// Outcome of one simulation.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub rows: Vec<GrantRow>,
    /// `(cycle, partition, value)` for every UART write.
    pub uart: Vec<(u64, PartitionId, u32)>,
    pub retired: [u64; MAX_PARTITIONS],
    pub cycles: u64,
    pub fault: Option<Fault>,
    pub audit: AccessAudit,
    pub trace: Trace,
}

/// Validates the schedule, loads every program and simulates the horizon.
/// The trace file, if configured, is written before returning.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport> {
    validate_schedule(&cfg.schedule)?;
    let images = cfg.images()?;
    let mut m = Machine::new(&images, &cfg.schedule, cfg.level)?;
    m.set_samples(cfg.load_samples()?);
    let fault = m.run_until(cfg.horizon).err();
    let report = RunReport {
        rows: m.trace.grant_rows(m.cycle()),
        uart: m
            .trace
            .of_kind(aero_core::EventKind::UartTx)
            .filter_map(|e| Some((e.cycle, e.partition?, e.value.unwrap_or(0))))
            .collect(),
        retired: m.retired,
        cycles: m.cycle(),
        fault,
        audit: m.mem.audit,
        trace: m.trace,
    };
    if let Some(path) = &cfg.trace {
        let file = fs::File::create(path)
            .with_context(|| format!("cannot create trace {}", path.display()))?;
        formats::write_trace(&report.trace, &mut BufWriter::new(file))?;
    }
    Ok(report)
}

fn partition_name(p: Option<PartitionId>) -> String {
    match p {
        Some(p) => format!("p{p}"),
        None => "idle".into(),
    }
}

pub fn grant_table(rows: &[GrantRow], clock_hz: u64) -> String {
    let mut out = format!(
        "{:<9} {:>12} {:>12} {:>12} {:>12}\n",
        "partition", "E_start", "E_end", "cycles", "ms"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<9} {:>12} {:>12} {:>12} {:>12}",
            partition_name(r.partition),
            r.start,
            r.end,
            r.len(),
            cycles_to_ms(r.len(), clock_hz)
        );
    }
    out
}

pub fn run_summary(report: &RunReport, clock_hz: u64) -> String {
    let mut out = format!("simulated {} cycles\n\ngrants\n", report.cycles);
    out += &grant_table(&report.rows, clock_hz);
    out += "\nuart\n";
    for (cycle, p, v) in &report.uart {
        let _ = writeln!(out, "{cycle:>12} p{p} {v}");
    }
    out += "\nretired\n";
    for p in PartitionId::all() {
        let _ = writeln!(out, "p{p} {}", report.retired[p.index()]);
    }
    let _ = writeln!(
        out,
        "\ndata accesses: {} reads, {} writes, {} outside the accessor's segment",
        report.audit.reads, report.audit.writes, report.audit.foreign
    );
    if let Some(f) = &report.fault {
        let _ = writeln!(out, "fault: {f}");
    }
    out
}

/// Grant table predicted from the schedule alone.
pub fn cmd_timeline(schedule: &Schedule, horizon: u64) -> Result<String> {
    validate_schedule(schedule)?;
    Ok(grant_table(
        &grant_timeline(schedule, horizon),
        schedule.clock_hz,
    ))
}

/// Exit status of `validate`: 0 valid, 1 conflict, 2 bad parameters.
pub fn cmd_validate(schedule: &Schedule) -> (i32, String) {
    match validate_schedule(schedule) {
        Ok(r) => {
            let mut out = String::from("schedule ok");
            match r.hyperperiod {
                Some(h) => {
                    let _ = write!(out, ": grants repeat every {h} cycles");
                }
                None => {
                    let _ = write!(out, ": no conflict up to cycle {}", r.checked_until);
                }
            }
            if let Some(n) = r.nominal_hyperperiod {
                let _ = write!(out, " (lcm of periods {n})");
            }
            (0, out)
        }
        Err(e @ ScheduleError::Conflict(_)) => (1, e.to_string()),
        Err(e @ ScheduleError::InvalidParameter(_)) => (2, e.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WcetArgs {
    pub tau_a0: String,
    pub tau_p: String,
    pub e_p: String,
    /// Bare numbers are milliseconds rather than cycles.
    pub ms: bool,
    pub clock_hz: u64,
    pub csv: bool,
}

fn in_ms(text: &str, ms: bool) -> String {
    let t = text.trim();
    if ms && !t.ends_with("ms") {
        format!("{t}ms")
    } else {
        t.to_string()
    }
}

fn ms_value(text: &str, clock_hz: u64) -> Result<f64> {
    let t = text.trim();
    match t.strip_suffix("ms") {
        Some(ms) => ms
            .trim()
            .parse()
            .with_context(|| format!("`{t}` is not a duration")),
        None => {
            let cycles: u64 = t
                .parse()
                .with_context(|| format!("`{t}` is not a duration"))?;
            Ok(cycles as f64 * 1000.0 / clock_hz as f64)
        }
    }
}

pub fn cmd_wcet(args: &WcetArgs) -> Result<String> {
    if args.clock_hz == 0 {
        bail!("clock_hz must be positive");
    }
    let texts = [&args.tau_a0, &args.tau_p, &args.e_p].map(|t| in_ms(t, args.ms));
    let cycles: Result<Vec<u64>> = texts
        .iter()
        .map(|t| parse_duration(t, args.clock_hz))
        .collect();
    let Ok(cycles) = cycles else {
        // Milliseconds that fall between cycles: evaluate on reals.
        let [a, p, e] = texts;
        let (a, p, e) = (
            ms_value(&a, args.clock_hz)?,
            ms_value(&p, args.clock_hz)?,
            ms_value(&e, args.clock_hz)?,
        );
        let ms = wcet::effective_wcet_f64(a, p, e)?;
        return Ok(if args.csv {
            format!(
                "tau_a0_ms,tau_p_ms,e_p_ms,effective_ms\n{a},{p},{e},{}\n",
                format_ms(ms)
            )
        } else {
            format!("effective WCET: {} ms\n", format_ms(ms))
        });
    };
    let q = WcetQuery::new(cycles[0], cycles[1], cycles[2])?;
    let eff = q.effective()?;
    let hz = args.clock_hz;
    if args.csv {
        return Ok(format!(
            "tau_a0_cycles,tau_p_cycles,e_p_cycles,accesses,effective_cycles,effective_ms\n{},{},{},{},{eff},{}\n",
            q.tau_a0,
            q.tau_p,
            q.e_p,
            q.accesses(),
            cycles_to_ms(eff, hz)
        ));
    }
    let mut out = String::new();
    for (name, c) in [("tau_a0", q.tau_a0), ("tau_p", q.tau_p), ("e_p", q.e_p)] {
        let _ = writeln!(
            out,
            "{name:<10} {c:>12} cycles  {:>12} ms",
            cycles_to_ms(c, hz)
        );
    }
    let _ = writeln!(out, "{:<10} {:>12}", "accesses", q.accesses());
    if args.ms {
        let _ = writeln!(
            out,
            "effective WCET: {} ms ({eff} cycles)",
            cycles_to_ms(eff, hz)
        );
    } else {
        let _ = writeln!(
            out,
            "effective WCET: {eff} cycles ({} ms)",
            cycles_to_ms(eff, hz)
        );
    }
    Ok(out)
}

/// `tau_p` and the longest observed grant-to-grant spacing of `p`, read off
/// the grant timeline over two repetitions of the schedule.
pub fn observed_access(schedule: &Schedule, p: PartitionId) -> Result<(u64, u64)> {
    let report = validate_schedule(schedule)?;
    let slot = schedule
        .slot(p)
        .with_context(|| format!("partition {p} is not enabled"))?;
    let span = report
        .hyperperiod
        .unwrap_or(report.checked_until)
        .max(slot.period);
    let starts: Vec<u64> = grant_timeline(schedule, 2 * span + slot.period)
        .iter()
        .filter(|r| r.partition == Some(p))
        .map(|r| r.start)
        .collect();
    let e_p = starts
        .windows(2)
        .map(|w| w[1] - w[0])
        .max()
        .with_context(|| format!("partition {p} is granted fewer than twice"))?;
    Ok((slot.exec_time, e_p))
}

pub fn cmd_measure(trace: &Trace, marker: u16, p: PartitionId, clock_hz: u64) -> Result<String> {
    let m = wcet::measure_wcet(trace, marker, p)?;
    Ok(format!(
        "iterations {}\nmax {} cycles ({} ms)\nmin {} cycles ({} ms)\n",
        m.iterations.len(),
        m.max,
        cycles_to_ms(m.max, clock_hz),
        m.min,
        cycles_to_ms(m.min, clock_hz)
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wcet_args(a: &str, p: &str, e: &str, ms: bool) -> WcetArgs {
        WcetArgs {
            tau_a0: a.into(),
            tau_p: p.into(),
            e_p: e.into(),
            ms,
            clock_hz: 50_000_000,
            csv: false,
        }
    }

    #[test]
    fn wcet_report() {
        let out = cmd_wcet(&wcet_args("7.99926", "4", "16.0004", true)).unwrap();
        assert!(
            out.ends_with("effective WCET: 19.99966 ms (999983 cycles)\n"),
            "{out}"
        );
        let out = cmd_wcet(&wcet_args("10", "4", "16", false)).unwrap();
        assert!(
            out.ends_with("effective WCET: 34 cycles (0.00068 ms)\n"),
            "{out}"
        );
        let out = cmd_wcet(&wcet_args("399963", "12ms", "32ms", false)).unwrap();
        assert!(out.contains("effective WCET: 399963 cycles"), "{out}");
        let out = cmd_wcet(&wcet_args("0.1", "0.03", "1", true)).unwrap();
        assert!(
            out.ends_with("effective WCET: 3.01 ms (150500 cycles)\n"),
            "{out}"
        );
        let out = cmd_wcet(&wcet_args("0.00000001", "1", "2", true)).unwrap();
        assert_eq!(out, "effective WCET: 0.00000001 ms\n");
        assert!(cmd_wcet(&wcet_args("10", "20", "16", false)).is_err());
        let csv = cmd_wcet(&WcetArgs {
            csv: true,
            ..wcet_args("10", "4", "16", false)
        })
        .unwrap();
        assert_eq!(csv.lines().nth(1), Some("10,4,16,3,34,0.00068"));
    }

    #[test]
    fn validate_exit_codes() {
        let slot = |period, exec_time, offset| aero_core::PartitionSlot {
            period,
            exec_time,
            offset,
            enabled: true,
        };
        let mut s = Schedule {
            partitions: vec![slot(110, 100, 10)],
            ..Default::default()
        };
        assert_eq!(cmd_validate(&s).0, 0);
        s.partitions.push(slot(110, 100, 10));
        assert_eq!(cmd_validate(&s).0, 1);
        s.partitions[1].exec_time = 0;
        assert_eq!(cmd_validate(&s).0, 2);
    }

    #[test]
    fn observed_spacing_includes_switches() {
        let slot = |period, exec_time, offset| aero_core::PartitionSlot {
            period,
            exec_time,
            offset,
            enabled: true,
        };
        let s = Schedule {
            partitions: vec![slot(300, 100, 10), slot(300, 100, 110)],
            ..Default::default()
        };
        let p0 = PartitionId::new(0).unwrap();
        assert_eq!(observed_access(&s, p0).unwrap(), (100, 290));
    }
}
