//! Run configuration: a TOML file with global keys and one
//! `[partition.N]` table per partition.
//!
//! ```toml
//! switch_window = 10
//! clock_hz = 50_000_000
//! horizon_cycles = 2_400_040
//! trace = "run.csv"
//! trace_level = "events"
//!
//! [partition.0]
//! period_cycles = 800_020
//! exec_cycles = "4ms"
//! offset_cycles = 10
//! source = "benchmark.s"
//! ```
//!
//! Durations are cycles, or strings with an `ms` suffix converted at
//! `clock_hz`. A partition's program is either `image` (a `.bin`) with an
//! optional `data` (`.dat`), or `source`, assembled on load. Relative paths
//! are resolved against the configuration file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use aero_core::cpu::Sample;
use aero_core::{
    assemble, AsmOptions, PartitionImage, PartitionSlot, Schedule, TraceLevel, MAX_PARTITIONS,
};
use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crate::formats;
use crate::units::parse_duration;

#[derive(Deserialize)]
#[serde(untagged)]
enum Duration {
    Cycles(u64),
    Text(String),
}

impl Duration {
    fn cycles(&self, clock_hz: u64) -> Result<u64> {
        match self {
            Duration::Cycles(c) => Ok(*c),
            Duration::Text(t) => parse_duration(t, clock_hz),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    period_cycles: Duration,
    exec_cycles: Duration,
    offset_cycles: Duration,
    #[serde(default = "enabled_default")]
    enabled: bool,
    image: Option<PathBuf>,
    data: Option<PathBuf>,
    source: Option<PathBuf>,
}

fn enabled_default() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    switch_window: Option<Duration>,
    clock_hz: Option<u64>,
    horizon_cycles: Option<Duration>,
    trace: Option<PathBuf>,
    trace_level: Option<String>,
    samples: Option<PathBuf>,
    #[serde(default)]
    partition: BTreeMap<String, RawPartition>,
}

/// Where a partition's program comes from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Program {
    /// Nothing loaded: the partition fetches no-ops.
    #[default]
    Empty,
    Image {
        code: PathBuf,
        data: Option<PathBuf>,
    },
    Source(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub schedule: Schedule,
    /// Indexed by partition; one entry per schedule slot.
    pub programs: Vec<Program>,
    pub horizon: u64,
    pub trace: Option<PathBuf>,
    pub level: TraceLevel,
    pub samples: Option<PathBuf>,
}

pub fn parse_level(name: &str) -> Result<TraceLevel> {
    Ok(match name {
        "events" => TraceLevel::Events,
        "retire" => TraceLevel::Retire,
        "pipeline" => TraceLevel::Pipeline,
        other => bail!("unknown trace level `{other}` (expected events, retire or pipeline)"),
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        RunConfig::parse(&text, dir).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let raw: RawConfig = toml::from_str(text)?;
        let clock_hz = raw.clock_hz.unwrap_or(Schedule::DEFAULT_CLOCK_HZ);
        let switch_window = match &raw.switch_window {
            Some(d) => d.cycles(clock_hz).context("switch_window")?,
            None => Schedule::DEFAULT_SWITCH_WINDOW,
        };
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };

        let mut slots: Vec<Option<(PartitionSlot, Program)>> = Vec::new();
        for (key, part) in raw.partition {
            let index: usize = key
                .parse()
                .ok()
                .filter(|i| *i < MAX_PARTITIONS)
                .with_context(|| {
                    format!("partition `{key}`: index must be 0..{}", MAX_PARTITIONS - 1)
                })?;
            let field = |d: &Duration, name: &str| {
                d.cycles(clock_hz)
                    .with_context(|| format!("partition {index}: {name}"))
            };
            let slot = PartitionSlot {
                period: field(&part.period_cycles, "period_cycles")?,
                exec_time: field(&part.exec_cycles, "exec_cycles")?,
                offset: field(&part.offset_cycles, "offset_cycles")?,
                enabled: part.enabled,
            };
            let program = match (part.image, part.data, part.source) {
                (None, None, None) => Program::Empty,
                (Some(code), data, None) => Program::Image {
                    code: resolve(code),
                    data: data.map(resolve),
                },
                (None, None, Some(src)) => Program::Source(resolve(src)),
                (None, Some(_), None) => bail!("partition {index}: `data` needs an `image`"),
                _ => bail!("partition {index}: give either `image`/`data` or `source`, not both"),
            };
            if slots.len() <= index {
                slots.resize(index + 1, None);
            }
            slots[index] = Some((slot, program));
        }

        let disabled = PartitionSlot {
            period: 0,
            exec_time: 0,
            offset: 0,
            enabled: false,
        };
        let (partitions, programs) = slots
            .into_iter()
            .map(|s| s.unwrap_or((disabled, Program::Empty)))
            .unzip();
        Ok(RunConfig {
            schedule: Schedule {
                partitions,
                switch_window,
                clock_hz,
            },
            programs,
            horizon: match &raw.horizon_cycles {
                Some(d) => d.cycles(clock_hz).context("horizon_cycles")?,
                None => 0,
            },
            trace: raw.trace.map(resolve),
            level: parse_level(raw.trace_level.as_deref().unwrap_or("events"))?,
            samples: raw.samples.map(resolve),
        })
    }

    /// Reads or assembles every partition's program.
    pub fn images(&self) -> Result<Vec<PartitionImage>> {
        self.programs
            .iter()
            .enumerate()
            .map(|(i, p)| load_program(p).with_context(|| format!("partition {i}")))
            .collect()
    }

    pub fn load_samples(&self) -> Result<Vec<Sample>> {
        match &self.samples {
            None => Ok(Vec::new()),
            Some(path) => {
                let file = fs::File::open(path)
                    .with_context(|| format!("cannot open samples {}", path.display()))?;
                formats::read_samples(file)
            }
        }
    }
}

pub fn load_program(program: &Program) -> Result<PartitionImage> {
    match program {
        Program::Empty => Ok(PartitionImage::default()),
        Program::Image { code, data } => {
            let mut f = fs::File::open(code)
                .with_context(|| format!("cannot open image {}", code.display()))?;
            let code = formats::read_bin(&mut f)?;
            let data = match data {
                Some(path) => {
                    let mut f = fs::File::open(path)
                        .with_context(|| format!("cannot open data {}", path.display()))?;
                    formats::read_dat(&mut f)?
                }
                None => Default::default(),
            };
            Ok(PartitionImage { code, data })
        }
        Program::Source(path) => {
            let src = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let out = assemble(&src, &AsmOptions::default())
                .with_context(|| format!("{}", path.display()))?;
            Ok(out.image())
        }
    }
}
