//! Time-ordered record of what the machine did.

use alloc::vec::Vec;

use crate::swcu::GrantRow;
use crate::PartitionId;

/// How much the simulator records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceLevel {
    /// Scheduling, device I/O and diagnostics.
    #[default]
    Events,
    /// Also one event per retired instruction.
    Retire,
    /// Also the content of every pipeline stage on every cycle.
    Pipeline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Partition starts fetching.
    Grant,
    /// Partition stops fetching (expiry or incoming switch).
    Release,
    /// `ptr_c_flag1` raised for an incoming partition.
    DrainStart,
    /// No partition holds the pipeline.
    Idle,
    UartTx,
    /// Access refused by the device file (e.g. write to the timer).
    DeviceFault,
    UnknownOpcode,
    /// A jump or call consumed `jump_reg` without a preceding `jad`.
    StaleJump,
    Retire,
    Fetch,
    Decode,
    Execute,
    WriteBack,
    /// Fatal simulator diagnostic; the run stops here.
    Fault,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Grant => "grant",
            EventKind::Release => "release",
            EventKind::DrainStart => "drain_start",
            EventKind::Idle => "idle",
            EventKind::UartTx => "uart_tx",
            EventKind::DeviceFault => "device_fault",
            EventKind::UnknownOpcode => "unknown_opcode",
            EventKind::StaleJump => "stale_jump",
            EventKind::Retire => "retire",
            EventKind::Fetch => "fetch",
            EventKind::Decode => "decode",
            EventKind::Execute => "execute",
            EventKind::WriteBack => "writeback",
            EventKind::Fault => "fault",
        }
    }

    pub fn from_name(name: &str) -> Option<EventKind> {
        ALL_KINDS.iter().copied().find(|k| k.name() == name)
    }
}

const ALL_KINDS: [EventKind; 14] = [
    EventKind::Grant,
    EventKind::Release,
    EventKind::DrainStart,
    EventKind::Idle,
    EventKind::UartTx,
    EventKind::DeviceFault,
    EventKind::UnknownOpcode,
    EventKind::StaleJump,
    EventKind::Retire,
    EventKind::Fetch,
    EventKind::Decode,
    EventKind::Execute,
    EventKind::WriteBack,
    EventKind::Fault,
];

/// One trace record; the fields line up with the CSV columns
/// `cycle,event,partition,addr,value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub cycle: u64,
    pub kind: EventKind,
    pub partition: Option<PartitionId>,
    pub addr: Option<u16>,
    pub value: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub level: TraceLevel,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(level: TraceLevel) -> Self {
        Trace {
            level,
            events: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        cycle: u64,
        kind: EventKind,
        partition: Option<PartitionId>,
        addr: Option<u16>,
        value: Option<u32>,
    ) {
        debug_assert!(self.events.last().is_none_or(|e| e.cycle <= cycle));
        self.events.push(Event {
            cycle,
            kind,
            partition,
            addr,
            value,
        });
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// UART writes of one partition as `(cycle, value)`.
    pub fn uart(&self, partition: PartitionId) -> Vec<(u64, u32)> {
        self.of_kind(EventKind::UartTx)
            .filter(|e| e.partition == Some(partition))
            .map(|e| (e.cycle, e.value.unwrap_or(0)))
            .collect()
    }

    /// Rebuilds the grant table from grant/release/idle events. Rows still
    /// open at `horizon` are closed there; zero-length idle rows are dropped.
    pub fn grant_rows(&self, horizon: u64) -> Vec<GrantRow> {
        let mut rows = Vec::new();
        let mut open: Option<GrantRow> = None;
        let close = |rows: &mut Vec<GrantRow>, row: GrantRow, end: u64| {
            let row = GrantRow { end, ..row };
            if row.partition.is_some() || row.end > row.start {
                rows.push(row);
            }
        };
        for e in &self.events {
            match e.kind {
                EventKind::Grant => {
                    if let Some(row) = open.take() {
                        close(&mut rows, row, e.cycle);
                    }
                    open = Some(GrantRow {
                        partition: e.partition,
                        start: e.cycle,
                        end: e.cycle,
                    });
                }
                EventKind::Release => {
                    if let Some(row) = open.take() {
                        close(&mut rows, row, e.cycle);
                    }
                }
                EventKind::Idle => {
                    if let Some(row) = open.take() {
                        close(&mut rows, row, e.cycle);
                    }
                    open = Some(GrantRow {
                        partition: None,
                        start: e.cycle,
                        end: e.cycle,
                    });
                }
                _ => {}
            }
        }
        if let Some(row) = open {
            close(&mut rows, row, horizon.max(row.start));
        }
        rows
    }
}
