//! Switching-control unit: time-triggered arbitration of the pipeline.
//!
//! Each enabled partition owns a period clock that counts down by one per
//! cycle; a shared execution clock counts the cycles of the current grant.
//! When a period clock reaches the switch window `W` the incoming partition
//! claims the pipeline: `ptr_c_flag1` is raised so fetch injects no-ops,
//! the in-flight instructions of the outgoing partition drain, and `W`
//! cycles later `ptr_c_flag2` moves to the incoming partition (its period
//! clock passes 1 on the cycle before, which is when its `pc_reg` is
//! selected). A grant resets the period clock to the full period and the
//! execution clock to zero.
//!
//! When the execution clock reaches the partition's execution time with no
//! partition due, the pipeline drains for `W` cycles and the unit goes
//! idle. From idle, a partition whose clock reaches `W` is granted on that
//! same cycle because there is nothing left to drain.
//!
//! [`SwcuState::tick`] is the cycle-level machine used by the simulator.
//! [`grant_timeline`] computes the same grant table by jumping from event to
//! event, without touching the core.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{PartitionId, MAX_PARTITIONS};

/// Shortest drain that empties the pipeline: the last fetched instruction
/// writes back three cycles after it was fetched.
pub const MIN_SWITCH_WINDOW: u64 = 3;

/// Grants enumerated by the validator before giving up on finding a repeat.
pub const VALIDATION_GRANT_LIMIT: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartitionSlot {
    pub period: u64,
    pub exec_time: u64,
    /// Initial value of the period clock.
    pub offset: u64,
    pub enabled: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub partitions: Vec<PartitionSlot>,
    pub switch_window: u64,
    pub clock_hz: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            partitions: Vec::new(),
            switch_window: Schedule::DEFAULT_SWITCH_WINDOW,
            clock_hz: Schedule::DEFAULT_CLOCK_HZ,
        }
    }
}

impl Schedule {
    pub const DEFAULT_SWITCH_WINDOW: u64 = 10;
    pub const DEFAULT_CLOCK_HZ: u64 = 50_000_000;

    pub fn slot(&self, p: PartitionId) -> Option<&PartitionSlot> {
        self.partitions.get(p.index()).filter(|s| s.enabled)
    }

    fn enabled(&self) -> impl Iterator<Item = (PartitionId, &PartitionSlot)> + '_ {
        self.partitions
            .iter()
            .enumerate()
            .filter(|(_, s)| s.enabled)
            .filter_map(|(i, s)| Some((PartitionId::new(i as u8)?, s)))
    }

    /// A single partition that runs for `exec_time` cycles per grant,
    /// granted at cycle 0 and again as soon as its window is over.
    pub fn single(exec_time: u64) -> Schedule {
        let sw = Self::DEFAULT_SWITCH_WINDOW;
        Schedule {
            partitions: vec![PartitionSlot {
                period: exec_time + sw,
                exec_time,
                offset: sw,
                enabled: true,
            }],
            ..Default::default()
        }
    }
}

/// One row of the grant table; `partition == None` is an idle slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrantRow {
    pub partition: Option<PartitionId>,
    pub start: u64,
    pub end: u64,
}

impl GrantRow {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConflictKind {
    /// Two period clocks reached the switch window on the same cycle.
    Simultaneous,
    /// A period clock reached the switch window while a switch was draining.
    DuringSwitch,
    /// A partition became due before the running partition's time expired.
    Overlap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub cycle: u64,
    pub kind: ConflictKind,
    pub first: PartitionId,
    pub second: PartitionId,
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ConflictKind::Simultaneous => "become due on the same cycle",
            ConflictKind::DuringSwitch => "collide during a partition switch",
            ConflictKind::Overlap => "overlap (the second is due before the first expires)",
        };
        write!(
            f,
            "cycle {}: partitions {} and {} {}",
            self.cycle, self.first, self.second, what
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamIssue {
    TooManyPartitions(usize),
    SwitchWindowTooShort(u64),
    ZeroClock,
    ZeroPeriod(usize),
    ZeroExecTime(usize),
    /// `exec_time + switch_window > period`.
    NoRoomForSwitch(usize),
    /// The period clock starts below the switch window and would never fire.
    OffsetBelowSwitchWindow(usize),
}

impl fmt::Display for ParamIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ParamIssue::TooManyPartitions(n) => {
                write!(
                    f,
                    "{n} partitions configured, at most {MAX_PARTITIONS} supported"
                )
            }
            ParamIssue::SwitchWindowTooShort(w) => write!(
                f,
                "switch window {w} is shorter than the {MIN_SWITCH_WINDOW}-cycle pipeline drain"
            ),
            ParamIssue::ZeroClock => f.write_str("clock_hz must be positive"),
            ParamIssue::ZeroPeriod(p) => write!(f, "partition {p}: period is zero"),
            ParamIssue::ZeroExecTime(p) => write!(f, "partition {p}: execution time is zero"),
            ParamIssue::NoRoomForSwitch(p) => write!(
                f,
                "partition {p}: execution time plus switch window exceeds the period"
            ),
            ParamIssue::OffsetBelowSwitchWindow(p) => write!(
                f,
                "partition {p}: initial offset is below the switch window"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScheduleError {
    InvalidParameter(Vec<ParamIssue>),
    Conflict(Conflict),
}

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleError::InvalidParameter(issues) => {
                f.write_str("invalid schedule parameters:")?;
                for issue in issues {
                    write!(f, " {issue};")?;
                }
                Ok(())
            }
            ScheduleError::Conflict(c) => write!(f, "schedule conflict: {c}"),
        }
    }
}

impl core::error::Error for ScheduleError {}

/// What the validator established about a conflict-free schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    /// Length of the repeating grant pattern, once found.
    pub hyperperiod: Option<u64>,
    /// Cycle up to which grants were enumerated.
    pub checked_until: u64,
    /// Least common multiple of the configured periods.
    pub nominal_hyperperiod: Option<u64>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_params(sched: &Schedule) -> Vec<ParamIssue> {
    let mut issues = Vec::new();
    if sched.partitions.len() > MAX_PARTITIONS {
        issues.push(ParamIssue::TooManyPartitions(sched.partitions.len()));
    }
    if sched.switch_window < MIN_SWITCH_WINDOW {
        issues.push(ParamIssue::SwitchWindowTooShort(sched.switch_window));
    }
    if sched.clock_hz == 0 {
        issues.push(ParamIssue::ZeroClock);
    }
    for (i, s) in sched
        .partitions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.enabled)
    {
        if s.period == 0 {
            issues.push(ParamIssue::ZeroPeriod(i));
        }
        if s.exec_time == 0 {
            issues.push(ParamIssue::ZeroExecTime(i));
        }
        if s.period != 0 && s.exec_time != 0 && s.exec_time + sched.switch_window > s.period {
            issues.push(ParamIssue::NoRoomForSwitch(i));
        }
        if s.offset < sched.switch_window {
            issues.push(ParamIssue::OffsetBelowSwitchWindow(i));
        }
    }
    issues
}

/// Checks parameters, then enumerates grants until the schedule provably
/// repeats, reporting the first conflict found.
pub fn validate_schedule(sched: &Schedule) -> Result<ValidationReport, ScheduleError> {
    let issues = check_params(sched);
    if !issues.is_empty() {
        return Err(ScheduleError::InvalidParameter(issues));
    }
    let nominal_hyperperiod = sched
        .enabled()
        .map(|(_, s)| s.period)
        .try_fold(1u64, |acc, p| (acc / gcd(acc, p)).checked_mul(p));

    let mut engine = Timeline::new(sched);
    let mut seen: BTreeMap<(u8, [Option<u64>; MAX_PARTITIONS]), u64> = BTreeMap::new();
    let mut grants = 0usize;
    loop {
        match engine.next_row() {
            Err(conflict) => return Err(ScheduleError::Conflict(conflict)),
            Ok(None) => {
                return Ok(ValidationReport {
                    hyperperiod: None,
                    checked_until: engine.now,
                    nominal_hyperperiod,
                })
            }
            Ok(Some(row)) => {
                let Some(p) = row.partition else { continue };
                grants += 1;
                let mut key = [None; MAX_PARTITIONS];
                for (slot, hit) in key.iter_mut().zip(engine.next_hit.iter()) {
                    *slot = hit.map(|h| h - row.start);
                }
                if let Some(&earlier) = seen.get(&(p.raw(), key)) {
                    return Ok(ValidationReport {
                        hyperperiod: Some(row.start - earlier),
                        checked_until: row.start,
                        nominal_hyperperiod,
                    });
                }
                seen.insert((p.raw(), key), row.start);
                if grants >= VALIDATION_GRANT_LIMIT {
                    return Ok(ValidationReport {
                        hyperperiod: None,
                        checked_until: row.start,
                        nominal_hyperperiod,
                    });
                }
            }
        }
    }
}

/// Grant table over `[0, horizon)`: rows starting before the horizon, with
/// the last one clipped to it. Enumeration stops at the first conflict.
pub fn grant_timeline(sched: &Schedule, horizon: u64) -> Vec<GrantRow> {
    let mut rows = Vec::new();
    let mut engine = Timeline::new(sched);
    while let Ok(Some(row)) = engine.next_row() {
        if row.start >= horizon {
            break;
        }
        let row = GrantRow {
            end: row.end.min(horizon),
            ..row
        };
        if row.partition.is_some() || !row.is_empty() {
            rows.push(row);
        }
        if row.end >= horizon && row.partition.is_none() {
            break;
        }
    }
    rows
}

#[derive(Clone, Copy, Debug)]
enum Stage {
    Idle { since: u64 },
    Running { p: PartitionId, since: u64 },
    PostExpiry { expired: u64 },
    Draining { incoming: PartitionId, hit: u64 },
    Done,
}

/// Event-driven enumeration of grants.
struct Timeline<'a> {
    sched: &'a Schedule,
    /// Cycle at which each enabled period clock next equals the switch window.
    next_hit: [Option<u64>; MAX_PARTITIONS],
    stage: Stage,
    now: u64,
}

impl<'a> Timeline<'a> {
    fn new(sched: &'a Schedule) -> Self {
        let mut next_hit = [None; MAX_PARTITIONS];
        for (p, s) in sched.enabled() {
            next_hit[p.index()] = s.offset.checked_sub(sched.switch_window);
        }
        Timeline {
            sched,
            next_hit,
            stage: Stage::Idle { since: 0 },
            now: 0,
        }
    }

    /// Earliest pending hit, failing on a tie.
    fn earliest(&self) -> Result<Option<(PartitionId, u64)>, Conflict> {
        let mut best: Option<(PartitionId, u64)> = None;
        for p in PartitionId::all() {
            let Some(h) = self.next_hit[p.index()] else {
                continue;
            };
            match best {
                Some((_, b)) if h >= b => {}
                _ => best = Some((p, h)),
            }
        }
        if let Some((q, b)) = best {
            for p in PartitionId::all() {
                if p != q && self.next_hit[p.index()] == Some(b) {
                    return Err(Conflict {
                        cycle: b,
                        kind: ConflictKind::Simultaneous,
                        first: q.min(p),
                        second: q.max(p),
                    });
                }
            }
        }
        Ok(best)
    }

    fn grant(&mut self, p: PartitionId, at: u64) {
        let slot = self
            .sched
            .slot(p)
            .expect("only enabled partitions become due");
        self.next_hit[p.index()] = Some(at + slot.period - self.sched.switch_window);
        self.stage = Stage::Running { p, since: at };
        self.now = at;
    }

    /// Produces the next row (idle rows may be empty), or `None` once the
    /// schedule has nothing further to grant.
    fn next_row(&mut self) -> Result<Option<GrantRow>, Conflict> {
        let sw = self.sched.switch_window;
        loop {
            match self.stage {
                Stage::Done => return Ok(None),
                Stage::Idle { since } => {
                    return match self.earliest()? {
                        None => {
                            self.stage = Stage::Done;
                            Ok(Some(GrantRow {
                                partition: None,
                                start: since,
                                end: u64::MAX,
                            }))
                        }
                        Some((q, h)) => {
                            self.grant(q, h);
                            Ok(Some(GrantRow {
                                partition: None,
                                start: since,
                                end: h,
                            }))
                        }
                    };
                }
                Stage::Running { p, since } => {
                    let exec = self
                        .sched
                        .slot(p)
                        .expect("running partition is enabled")
                        .exec_time;
                    let expiry = since + exec;
                    let due = self.earliest()?;
                    let end = match due {
                        Some((q, h)) if h <= expiry => {
                            if h < expiry && q != p {
                                return Err(Conflict {
                                    cycle: h,
                                    kind: ConflictKind::Overlap,
                                    first: p,
                                    second: q,
                                });
                            }
                            self.stage = Stage::Draining {
                                incoming: q,
                                hit: h,
                            };
                            h
                        }
                        _ => {
                            self.stage = Stage::PostExpiry { expired: expiry };
                            expiry
                        }
                    };
                    self.now = end;
                    return Ok(Some(GrantRow {
                        partition: Some(p),
                        start: since,
                        end,
                    }));
                }
                Stage::PostExpiry { expired } => {
                    let idle_at = expired + sw;
                    match self.earliest()? {
                        Some((q, h)) if h < idle_at => {
                            self.stage = Stage::Draining {
                                incoming: q,
                                hit: h,
                            }
                        }
                        _ => {
                            self.stage = Stage::Idle { since: idle_at };
                            self.now = idle_at;
                        }
                    }
                }
                Stage::Draining { incoming, hit } => {
                    // Clear the incoming hit so it is not seen again.
                    self.next_hit[incoming.index()] = None;
                    if let Some((q, h)) = self.earliest()? {
                        if h < hit + sw {
                            return Err(Conflict {
                                cycle: h,
                                kind: ConflictKind::DuringSwitch,
                                first: incoming,
                                second: q,
                            });
                        }
                    }
                    self.grant(incoming, hit + sw);
                }
            }
        }
    }
}

/// Where the SwCU is in its grant cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Running,
    /// Execution time expired, pipeline draining with nobody due.
    PostExpiry {
        until: u64,
    },
    /// `ptr_c_flag1` raised; `incoming` is granted at `until`.
    Draining {
        incoming: PartitionId,
        until: u64,
    },
}

/// Control outputs of one SwCU cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Signals {
    /// Fetch injects no-ops instead of reading the instruction cache.
    pub ptr_c_flag1: bool,
    /// Register bank and MCU segment currently wired to the pipeline.
    pub ptr_c_flag2: Option<PartitionId>,
    /// Incoming partition whose `pc_reg` is selected this cycle.
    pub load_pc_for: Option<PartitionId>,
    pub granted: Option<PartitionId>,
    pub released: Option<PartitionId>,
    pub drain_start: Option<PartitionId>,
    pub idle_entered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwcuFault {
    pub cycle: u64,
    pub first: PartitionId,
    pub second: PartitionId,
}

impl fmt::Display for SwcuFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "schedule conflict at cycle {}: partitions {} and {} both due",
            self.cycle, self.first, self.second
        )
    }
}

impl core::error::Error for SwcuFault {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwcuState {
    pub period_clocks: [u64; MAX_PARTITIONS],
    pub execution_clock: u64,
    pub expiry_flag: bool,
    pub active: Option<PartitionId>,
    pub phase: Phase,
    pub cycle: u64,
}

impl SwcuState {
    pub fn new(sched: &Schedule) -> Self {
        let mut period_clocks = [0; MAX_PARTITIONS];
        for (p, s) in sched.enabled() {
            period_clocks[p.index()] = s.offset;
        }
        SwcuState {
            period_clocks,
            execution_clock: 0,
            expiry_flag: false,
            active: None,
            phase: Phase::Idle,
            cycle: 0,
        }
    }

    fn grant(&mut self, p: PartitionId, sched: &Schedule) {
        self.active = Some(p);
        self.phase = Phase::Running;
        self.period_clocks[p.index()] = sched.slot(p).map_or(0, |s| s.period);
        self.execution_clock = 0;
        self.expiry_flag = false;
    }

    /// Advances one clock and returns the control lines for this cycle.
    pub fn tick(&mut self, sched: &Schedule) -> Result<Signals, SwcuFault> {
        let c = self.cycle;
        let sw = sched.switch_window;
        let mut sig = Signals::default();

        match self.phase {
            Phase::Draining { incoming, until } if until == c => {
                self.grant(incoming, sched);
                sig.granted = Some(incoming);
            }
            Phase::PostExpiry { until } if until == c => {
                self.phase = Phase::Idle;
                sig.idle_entered = true;
            }
            Phase::Idle if c == 0 => sig.idle_entered = true,
            _ => {}
        }

        if self.phase == Phase::Running {
            let p = self.active.expect("running implies an active partition");
            let exec = sched.slot(p).map_or(0, |s| s.exec_time);
            if self.execution_clock >= exec {
                self.expiry_flag = true;
                self.phase = Phase::PostExpiry { until: c + sw };
                sig.released = Some(p);
            }
        }

        let mut due = None;
        for (p, _) in sched.enabled() {
            if self.period_clocks[p.index()] == sw {
                if let Some(q) = due {
                    return Err(SwcuFault {
                        cycle: c,
                        first: q,
                        second: p,
                    });
                }
                due = Some(p);
            }
        }
        if let Some(q) = due {
            match self.phase {
                Phase::Idle => {
                    self.grant(q, sched);
                    sig.granted = Some(q);
                }
                Phase::Running => {
                    sig.released = self.active;
                    self.phase = Phase::Draining {
                        incoming: q,
                        until: c + sw,
                    };
                    sig.drain_start = Some(q);
                }
                Phase::PostExpiry { .. } => {
                    self.phase = Phase::Draining {
                        incoming: q,
                        until: c + sw,
                    };
                    sig.drain_start = Some(q);
                }
                Phase::Draining { incoming, .. } => {
                    return Err(SwcuFault {
                        cycle: c,
                        first: incoming,
                        second: q,
                    })
                }
            }
        }

        sig.ptr_c_flag1 = self.phase != Phase::Running;
        sig.ptr_c_flag2 = self.active;
        if let Phase::Draining { incoming, until } = self.phase {
            if until == c + 1 {
                sig.load_pc_for = Some(incoming);
            }
        }

        for (p, _) in sched.enabled() {
            let clock = &mut self.period_clocks[p.index()];
            *clock = clock.saturating_sub(1);
        }
        self.execution_clock += 1;
        self.cycle += 1;
        Ok(sig)
    }
}
