//! Effective WCET of a task confined to a partition, trace measurements, and
//! the total-WCET comparison between architectures.
//!
//! A task needing `tau_a0` cycles on a whole core gets `tau_p` cycles of
//! access every `e_p` cycles, so it completes in its `n = ceil(tau_a0 / tau_p)`
//! th access:
//!
//! ```text
//! tau_an = (n - 1) * e_p + (tau_a0 - (n - 1) * tau_p)
//! ```
//!
//! `e_p` is the grant-to-grant spacing as observed, switch overheads included.

use alloc::vec::Vec;
use core::fmt;

use crate::trace::{EventKind, Trace};
use crate::PartitionId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WcetError {
    /// An input is zero or negative.
    NonPositive(&'static str),
    /// `tau_p > e_p`.
    AccessExceedsPeriod,
    NotFinite,
    Overflow,
    /// Fewer than two markers in the trace.
    InsufficientData(usize),
}

impl fmt::Display for WcetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WcetError::NonPositive(what) => write!(f, "{what} must be positive"),
            WcetError::AccessExceedsPeriod => {
                f.write_str("partition execution time exceeds its periodicity")
            }
            WcetError::NotFinite => f.write_str("inputs must be finite"),
            WcetError::Overflow => f.write_str("result does not fit in 64 bits"),
            WcetError::InsufficientData(n) => {
                write!(f, "need at least 2 markers, trace has {n}")
            }
        }
    }
}

impl core::error::Error for WcetError {}

/// Parameters of one effective-WCET evaluation, in cycles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WcetQuery {
    pub tau_a0: u64,
    pub tau_p: u64,
    pub e_p: u64,
}

impl WcetQuery {
    pub fn new(tau_a0: u64, tau_p: u64, e_p: u64) -> Result<WcetQuery, WcetError> {
        for (v, name) in [(tau_a0, "tau_a0"), (tau_p, "tau_p"), (e_p, "e_p")] {
            if v == 0 {
                return Err(WcetError::NonPositive(name));
            }
        }
        if tau_p > e_p {
            return Err(WcetError::AccessExceedsPeriod);
        }
        Ok(WcetQuery { tau_a0, tau_p, e_p })
    }

    /// Number of the grant in which the task completes.
    pub fn accesses(&self) -> u64 {
        self.tau_a0.div_ceil(self.tau_p)
    }

    pub fn effective(&self) -> Result<u64, WcetError> {
        let k = self.accesses() - 1;
        let waited = k.checked_mul(self.e_p).ok_or(WcetError::Overflow)?;
        let rest = self.tau_a0 - k * self.tau_p;
        waited.checked_add(rest).ok_or(WcetError::Overflow)
    }
}

/// Effective WCET in cycles.
pub fn effective_wcet(tau_a0: u64, tau_p: u64, e_p: u64) -> Result<u64, WcetError> {
    WcetQuery::new(tau_a0, tau_p, e_p)?.effective()
}

/// Effective WCET on real-valued times (any unit, e.g. ms).
pub fn effective_wcet_f64(tau_a0: f64, tau_p: f64, e_p: f64) -> Result<f64, WcetError> {
    if !(tau_a0.is_finite() && tau_p.is_finite() && e_p.is_finite()) {
        return Err(WcetError::NotFinite);
    }
    for (v, name) in [(tau_a0, "tau_a0"), (tau_p, "tau_p"), (e_p, "e_p")] {
        if v <= 0.0 {
            return Err(WcetError::NonPositive(name));
        }
    }
    if tau_p > e_p {
        return Err(WcetError::AccessExceedsPeriod);
    }
    let k = ceil(tau_a0 / tau_p) - 1.0;
    Ok(k * e_p + (tau_a0 - k * tau_p))
}

// `f64::ceil` lives in std.
fn ceil(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t < x {
        t + 1.0
    } else {
        t
    }
}

/// Cycles covered by start/completion marker pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Measurement {
    /// Length of every complete pair, counting both marker cycles.
    pub iterations: Vec<u64>,
    pub max: u64,
    pub min: u64,
}

/// Pairs consecutive writes of `partition` to `marker_addr` as
/// (start, completion) and measures each pair inclusively.
pub fn measure_wcet(
    trace: &Trace,
    marker_addr: u16,
    partition: PartitionId,
) -> Result<Measurement, WcetError> {
    let cycles: Vec<u64> = trace
        .of_kind(EventKind::UartTx)
        .filter(|e| e.partition == Some(partition) && e.addr == Some(marker_addr))
        .map(|e| e.cycle)
        .collect();
    if cycles.len() < 2 {
        return Err(WcetError::InsufficientData(cycles.len()));
    }
    let iterations: Vec<u64> = cycles
        .chunks_exact(2)
        .map(|pair| pair[1] - pair[0] + 1)
        .collect();
    Ok(Measurement {
        max: iterations.iter().copied().max().unwrap_or(0),
        min: iterations.iter().copied().min().unwrap_or(0),
        iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// Partitioned single core: tasks take turns, paying a switch each time.
    Proposed,
    /// One core per task.
    SingleCoreEquivalent,
    /// Fine-grained multithreading across all tasks.
    FineGrained,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dependency {
    Independent,
    /// Each task consumes the previous task's output.
    Chained,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchComparisonInput {
    pub tasks: Vec<f64>,
    /// Partition switch delay.
    pub delta_p: f64,
    /// Inter-processor communication delay.
    pub delta_c: f64,
    pub dependency: Dependency,
}

/// Time until every task has completed once.
pub fn total_wcet(arch: Architecture, input: &ArchComparisonInput) -> f64 {
    let n = input.tasks.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = input.tasks.iter().sum();
    let max = input.tasks.iter().copied().fold(f64::MIN, f64::max);
    let links = (n - 1) as f64;
    match (arch, input.dependency) {
        (Architecture::Proposed, _) => sum + links * input.delta_p,
        (Architecture::SingleCoreEquivalent, Dependency::Independent) => max,
        (Architecture::SingleCoreEquivalent, Dependency::Chained) => sum + links * input.delta_c,
        (Architecture::FineGrained, Dependency::Independent) => n as f64 * max,
        (Architecture::FineGrained, Dependency::Chained) => n as f64 * sum,
    }
}

/// WCET of one task of length `tau` when `n` tasks share the platform.
pub fn per_task_wcet(arch: Architecture, tau: f64, n: usize) -> f64 {
    match arch {
        Architecture::Proposed | Architecture::SingleCoreEquivalent => tau,
        Architecture::FineGrained => n as f64 * tau,
    }
}
