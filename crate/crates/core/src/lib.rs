//! Cycle-accurate model of the Ærø partitioned real-time soft-processor.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every piece of the
//! machine that is pure computation:
//!
//! * [`isa`]: the three 16-bit instruction forms and the opcode table.
//! * [`asm`]: the assembler that lowers compiler-style x86 assembly to
//!   machine words (memory-operand lowering, two-instruction branches,
//!   immediate pooling, hazard no-ops).
//! * [`cpu`]: the 4-stage pipeline with per-partition replicated state, and
//!   a non-pipelined reference interpreter.
//! * [`swcu`]: the switching-control unit that grants the pipeline to one
//!   partition at a time, plus the closed-form grant timeline.
//! * [`memsys`]: MCU segmentation, caches and memory-mapped devices.
//! * [`wcet`]: effective-WCET arithmetic and trace measurements.
//!
//! File formats and the command line live in the `aero-tools` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod asm;
pub mod cpu;
pub mod isa;
pub mod memsys;
pub mod swcu;
pub mod trace;
pub mod wcet;

use core::fmt;

/// Partitions supported by the segment layout: segments 0..=2 belong to
/// partitions, segment 3 holds the shared data region.
pub const MAX_PARTITIONS: usize = 3;

/// Index of a partition, as carried on `ptr_c_flag2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartitionId(u8);

impl PartitionId {
    pub const fn new(index: u8) -> Option<PartitionId> {
        if (index as usize) < MAX_PARTITIONS {
            Some(PartitionId(index))
        } else {
            None
        }
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn raw(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = PartitionId> {
        (0..MAX_PARTITIONS as u8).map(PartitionId)
    }
}

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub use asm::{assemble, AsmError, AsmOptions, Assembly};
pub use cpu::{run, ArchState, Fault, Machine, RunOutcome};
pub use isa::{decode, encode, Instruction, Opcode, Reg};
pub use memsys::{DataImage, MemorySystem, PartitionImage};
pub use swcu::{grant_timeline, validate_schedule, GrantRow, PartitionSlot, Schedule};
pub use trace::{Event, EventKind, Trace, TraceLevel};
