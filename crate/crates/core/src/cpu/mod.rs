//! The four-stage pipeline: fetch, decode, execute, write-back/memory.
//!
//! Each partition owns a [`PartitionContext`]; the SwCU selects which one
//! is wired to the pipeline through `ptr_c_flag2`, and stops the inflow of
//! instructions with `ptr_c_flag1`. Nothing is copied on a switch.
//!
//! Timing of one clock, in evaluation order:
//!
//! * write-back commits the instruction executed last cycle; the register
//!   file is write-first, so the commit is visible to this cycle's decode;
//! * execute evaluates the ALU or the jump condition; a taken jump, call or
//!   return loads `pc_reg` and flushes fetch and decode;
//! * decode reads operands, and a `jad` loads `jump_reg`;
//! * fetch reads the instruction cache at `pc_reg`, or injects a no-op.
//!
//! A taken transfer therefore costs two empty slots: the wrong-path word in
//! decode is dropped and fetch stays empty for the cycle in which `pc_reg`
//! is rewritten.

mod reference;

pub use reference::{reference_execute, RefError, RefOptions, RefOutcome};

use alloc::vec::Vec;
use core::fmt;

use crate::isa::{Category, Direction, Instruction, Opcode, Reg, CODE_ADDR_MAX, NUM_REGS};
use crate::memsys::{
    DeviceEffect, LoadError, MemFault, MemoryControlUnit, MemorySystem, PartitionImage, RegionMap,
};
use crate::swcu::{Schedule, Signals, SwcuFault, SwcuState};
use crate::trace::{EventKind, Trace, TraceLevel};
use crate::{PartitionId, MAX_PARTITIONS};

/// Entries of the per-partition return-address stack.
pub const STACK_DEPTH: usize = 256;

/// Replicated architectural state of one partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionContext {
    pub regs: [u32; NUM_REGS],
    pub pc_reg: u16,
    pub jump_reg: u16,
    /// Live return addresses, oldest first.
    pub stack: Vec<u16>,
    /// A `jad` has loaded `jump_reg` since the last jump consumed it.
    pub jump_armed: bool,
}

impl Default for PartitionContext {
    fn default() -> Self {
        PartitionContext {
            regs: [0; NUM_REGS],
            pc_reg: 0,
            jump_reg: 0,
            stack: Vec::new(),
            jump_armed: false,
        }
    }
}

impl PartitionContext {
    pub fn stack_write_pointer(&self) -> usize {
        self.stack.len()
    }

    /// Points at the return address of the innermost live call.
    pub fn stack_read_pointer(&self) -> usize {
        self.stack.len().wrapping_sub(1)
    }
}

/// Snapshot of a partition's software-visible state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchState {
    pub regs: [u32; NUM_REGS],
    pub pc: u16,
    pub jump_reg: u16,
    pub stack: Vec<u16>,
    /// The partition's protected data segment.
    pub data: Vec<u32>,
}

/// Fatal conditions; the machine stops at the first one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    StackOverflow {
        partition: PartitionId,
        addr: u16,
    },
    StackUnderflow {
        partition: PartitionId,
        addr: u16,
    },
    Schedule(SwcuFault),
    /// An instruction reached write-back under another partition's flags.
    IsolationBreach {
        owner: PartitionId,
        active: Option<PartitionId>,
        addr: u16,
    },
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::StackOverflow { partition, addr } => write!(
                f,
                "partition {partition}: address stack overflow at {addr:#06x}"
            ),
            Fault::StackUnderflow { partition, addr } => write!(
                f,
                "partition {partition}: return with empty address stack at {addr:#06x}"
            ),
            Fault::Schedule(e) => write!(f, "{e}"),
            Fault::IsolationBreach {
                owner,
                active,
                addr,
            } => write!(
                f,
                "instruction {addr:#06x} of partition {owner} committed while {active:?} was active"
            ),
        }
    }
}

impl core::error::Error for Fault {}

/// Contents of `fetch_reg`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fetched {
    pub word: u16,
    pub addr: u16,
    /// Owner of the word; `None` for no-ops injected by `ptr_c_flag1`.
    pub partition: Option<PartitionId>,
}

/// Contents of `decode_reg`: the sliced instruction and its operand values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub slot: Fetched,
    pub instr: Instruction,
    pub a: u32,
    pub b: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WriteBack {
    Nothing,
    Register(Reg, u32),
    Load(Reg, u16),
    Store(u16, u32),
}

/// Output of execute, consumed by write-back on the next cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Executed {
    pub slot: Fetched,
    pub action: WriteBack,
}

/// Pipeline registers and control flags.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoreState {
    pub fetch_reg: Option<Fetched>,
    pub decode_reg: Option<Decoded>,
    pub execute_reg: Option<Executed>,
    pub alu_reg: u32,
    /// Outcome of the last condition evaluated.
    pub alu_ctrl_flags: bool,
    pub j_en: bool,
    pub call_en: bool,
    pub ptr_c_flag1: bool,
    pub ptr_c_flag2: Option<PartitionId>,
    pub cycle: u64,
}

/// A scripted write to a sampling port, applied before the given cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub cycle: u64,
    pub port: usize,
    pub value: u32,
}

/// Cores, contexts, memory and SwCU of one simulated board.
#[derive(Clone, Debug)]
pub struct Machine {
    pub core: CoreState,
    pub contexts: [PartitionContext; MAX_PARTITIONS],
    pub mem: MemorySystem,
    pub swcu: SwcuState,
    pub schedule: Schedule,
    pub trace: Trace,
    /// Instructions of each partition that completed write-back.
    pub retired: [u64; MAX_PARTITIONS],
    samples: Vec<Sample>,
    next_sample: usize,
    fault: Option<Fault>,
}

impl Machine {
    pub fn new(
        images: &[PartitionImage],
        schedule: &Schedule,
        level: TraceLevel,
    ) -> Result<Machine, LoadError> {
        Self::with_regions(images, schedule, level, RegionMap::default())
    }

    pub fn with_regions(
        images: &[PartitionImage],
        schedule: &Schedule,
        level: TraceLevel,
        regions: RegionMap,
    ) -> Result<Machine, LoadError> {
        let mut mem = MemorySystem::new(regions);
        mem.load_images(images)?;
        Ok(Machine {
            core: CoreState::default(),
            contexts: Default::default(),
            mem,
            swcu: SwcuState::new(schedule),
            schedule: schedule.clone(),
            trace: Trace::new(level),
            retired: [0; MAX_PARTITIONS],
            samples: Vec::new(),
            next_sample: 0,
            fault: None,
        })
    }

    /// Installs a sample script; entries are applied in cycle order.
    pub fn set_samples(&mut self, mut samples: Vec<Sample>) {
        samples.sort_by_key(|s| s.cycle);
        self.samples = samples;
        self.next_sample = 0;
    }

    pub fn cycle(&self) -> u64 {
        self.core.cycle
    }

    pub fn fault(&self) -> Option<Fault> {
        self.fault
    }

    pub fn arch_state(&self, p: PartitionId) -> ArchState {
        let ctx = &self.contexts[p.index()];
        ArchState {
            regs: ctx.regs,
            pc: ctx.pc_reg,
            jump_reg: ctx.jump_reg,
            stack: ctx.stack.clone(),
            data: self
                .mem
                .data_segment(MemoryControlUnit::segment_of(p))
                .to_vec(),
        }
    }

    /// Steps until `cycle` clocks have elapsed or a fault stops the machine.
    pub fn run_until(&mut self, cycle: u64) -> Result<(), Fault> {
        while self.core.cycle < cycle {
            self.step()?;
        }
        Ok(())
    }

    /// Advances one clock.
    pub fn step(&mut self) -> Result<(), Fault> {
        if let Some(f) = self.fault {
            return Err(f);
        }
        let c = self.core.cycle;
        let result = self.step_inner(c);
        if let Err(f) = result {
            self.fault = Some(f);
            let partition = match f {
                Fault::StackOverflow { partition, .. }
                | Fault::StackUnderflow { partition, .. } => Some(partition),
                Fault::IsolationBreach { owner, .. } => Some(owner),
                Fault::Schedule(e) => Some(e.second),
            };
            self.trace.push(c, EventKind::Fault, partition, None, None);
        }
        self.core.cycle += 1;
        result
    }

    fn step_inner(&mut self, c: u64) -> Result<(), Fault> {
        while let Some(s) = self.samples.get(self.next_sample) {
            if s.cycle > c {
                break;
            }
            // Script entries were range-checked when the script was built.
            let _ = self.mem.inject_sample(s.port, s.value);
            self.next_sample += 1;
        }

        let sig = self.swcu.tick(&self.schedule).map_err(Fault::Schedule)?;
        self.record_signals(c, &sig);
        self.core.ptr_c_flag1 = sig.ptr_c_flag1;
        self.core.ptr_c_flag2 = sig.ptr_c_flag2;
        self.mem.devices.timer = c;
        self.mem.devices.partition_id = sig.ptr_c_flag2.map_or(0, |p| p.raw());

        self.write_back(c)?;
        let flush = self.execute(c)?;
        self.decode(c, flush);
        self.fetch(c, flush);
        Ok(())
    }

    fn record_signals(&mut self, c: u64, sig: &Signals) {
        if let Some(p) = sig.released {
            self.trace.push(c, EventKind::Release, Some(p), None, None);
        }
        if let Some(p) = sig.drain_start {
            self.trace
                .push(c, EventKind::DrainStart, Some(p), None, None);
        }
        if sig.idle_entered {
            self.trace.push(c, EventKind::Idle, None, None, None);
        }
        if let Some(p) = sig.granted {
            let pc = self.contexts[p.index()].pc_reg;
            self.trace
                .push(c, EventKind::Grant, Some(p), Some(pc), None);
        }
    }

    fn write_back(&mut self, c: u64) -> Result<(), Fault> {
        let Some(done) = self.core.execute_reg.take() else {
            return Ok(());
        };
        let slot = done.slot;
        if self.trace.level >= TraceLevel::Pipeline {
            self.trace.push(
                c,
                EventKind::WriteBack,
                slot.partition,
                Some(slot.addr),
                Some(slot.word as u32),
            );
        }
        let Some(owner) = slot.partition else {
            return Ok(());
        };
        let active = self.core.ptr_c_flag2;
        if active != Some(owner) {
            return Err(Fault::IsolationBreach {
                owner,
                active,
                addr: slot.addr,
            });
        }
        let ctx = &mut self.contexts[owner.index()];
        match done.action {
            WriteBack::Nothing => {}
            WriteBack::Register(r, v) => ctx.regs[r.index()] = v,
            WriteBack::Load(r, addr) => match self.mem.data_read(addr, active) {
                Ok(v) => ctx.regs[r.index()] = v,
                Err(e) => self.device_fault(c, owner, addr, e),
            },
            WriteBack::Store(addr, v) => match self.mem.data_write(addr, v, active) {
                Ok(Some(DeviceEffect::UartTx(v))) => {
                    self.trace
                        .push(c, EventKind::UartTx, Some(owner), Some(addr), Some(v))
                }
                Ok(None) => {}
                Err(e) => self.device_fault(c, owner, addr, e),
            },
        }
        self.retired[owner.index()] += 1;
        if self.trace.level >= TraceLevel::Retire {
            self.trace.push(
                c,
                EventKind::Retire,
                Some(owner),
                Some(slot.addr),
                Some(slot.word as u32),
            );
        }
        Ok(())
    }

    fn device_fault(&mut self, c: u64, owner: PartitionId, addr: u16, e: MemFault) {
        let code = match e {
            MemFault::NoActivePartition => 0,
            MemFault::AddressOutOfRange(_) => 1,
            MemFault::ReadOnlyDevice(_) => 2,
            MemFault::PortOutOfRange(_) => 3,
        };
        self.trace.push(
            c,
            EventKind::DeviceFault,
            Some(owner),
            Some(addr),
            Some(code),
        );
    }

    /// Returns whether fetch and decode must be flushed.
    fn execute(&mut self, c: u64) -> Result<bool, Fault> {
        self.core.j_en = false;
        self.core.call_en = false;
        let Some(d) = self.core.decode_reg.take() else {
            return Ok(false);
        };
        let slot = d.slot;
        if self.trace.level >= TraceLevel::Pipeline {
            self.trace.push(
                c,
                EventKind::Execute,
                slot.partition,
                Some(slot.addr),
                Some(slot.word as u32),
            );
        }
        let mut action = WriteBack::Nothing;
        let mut flush = false;
        match d.instr {
            Instruction::MemAccess {
                direction: Direction::Load,
                reg,
                addr,
            } => action = WriteBack::Load(reg, addr),
            Instruction::MemAccess {
                direction: Direction::Store,
                addr,
                ..
            } => action = WriteBack::Store(addr, d.a),
            Instruction::MemAddress { .. } => {}
            Instruction::Operational { opcode, op_a, .. } => match Opcode::from_u8(opcode) {
                None => {
                    self.trace.push(
                        c,
                        EventKind::UnknownOpcode,
                        slot.partition,
                        Some(slot.addr),
                        Some(slot.word as u32),
                    );
                }
                Some(op) => match op.category() {
                    Category::NoOp => {}
                    Category::AluArithmetic | Category::AluLogic | Category::Move => {
                        let v = op.alu(d.a, d.b).expect("ALU category");
                        self.core.alu_reg = v;
                        action = WriteBack::Register(op_a, v);
                    }
                    Category::JumpCondition | Category::UnconditionalJump => {
                        let taken = op.condition(d.a, d.b).expect("jump category");
                        self.core.alu_ctrl_flags = taken;
                        if let Some(p) = slot.partition {
                            self.consume_jump(c, p, slot.addr);
                            if taken {
                                let ctx = &mut self.contexts[p.index()];
                                ctx.pc_reg = ctx.jump_reg;
                                self.core.j_en = true;
                                flush = true;
                            }
                        }
                    }
                    Category::CallTrigger => {
                        if let Some(p) = slot.partition {
                            self.consume_jump(c, p, slot.addr);
                            let ctx = &mut self.contexts[p.index()];
                            if ctx.stack.len() >= STACK_DEPTH {
                                return Err(Fault::StackOverflow {
                                    partition: p,
                                    addr: slot.addr,
                                });
                            }
                            ctx.stack.push((slot.addr + 1) & CODE_ADDR_MAX);
                            ctx.pc_reg = ctx.jump_reg;
                            self.core.call_en = true;
                            flush = true;
                        }
                    }
                    Category::Return => {
                        if let Some(p) = slot.partition {
                            let ctx = &mut self.contexts[p.index()];
                            let Some(ret) = ctx.stack.pop() else {
                                return Err(Fault::StackUnderflow {
                                    partition: p,
                                    addr: slot.addr,
                                });
                            };
                            ctx.pc_reg = ret;
                            flush = true;
                        }
                    }
                },
            },
        }
        self.core.execute_reg = Some(Executed { slot, action });
        Ok(flush)
    }

    fn consume_jump(&mut self, c: u64, p: PartitionId, addr: u16) {
        let ctx = &mut self.contexts[p.index()];
        if !ctx.jump_armed {
            let target = ctx.jump_reg;
            self.trace.push(
                c,
                EventKind::StaleJump,
                Some(p),
                Some(addr),
                Some(target as u32),
            );
        }
        self.contexts[p.index()].jump_armed = false;
    }

    fn decode(&mut self, c: u64, flush: bool) {
        let fetched = self.core.fetch_reg.take();
        if flush {
            return;
        }
        let Some(slot) = fetched else { return };
        if self.trace.level >= TraceLevel::Pipeline {
            self.trace.push(
                c,
                EventKind::Decode,
                slot.partition,
                Some(slot.addr),
                Some(slot.word as u32),
            );
        }
        let instr = Instruction::from_word(slot.word);
        let (mut a, mut b) = (0, 0);
        if let Some(p) = slot.partition {
            let ctx = &mut self.contexts[p.index()];
            match instr {
                Instruction::Operational { op_a, op_b, .. } => {
                    a = ctx.regs[op_a.index()];
                    b = ctx.regs[op_b.index()];
                }
                Instruction::MemAccess { reg, .. } => a = ctx.regs[reg.index()],
                Instruction::MemAddress { addr } => {
                    ctx.jump_reg = addr;
                    ctx.jump_armed = true;
                }
            }
        }
        self.core.decode_reg = Some(Decoded { slot, instr, a, b });
    }

    fn fetch(&mut self, c: u64, flush: bool) {
        if flush {
            return;
        }
        let slot = match self.core.ptr_c_flag2 {
            Some(p) if !self.core.ptr_c_flag1 => {
                let ctx = &mut self.contexts[p.index()];
                let addr = ctx.pc_reg;
                ctx.pc_reg = (addr + 1) & CODE_ADDR_MAX;
                Fetched {
                    word: self.mem.fetch(p, addr),
                    addr,
                    partition: Some(p),
                }
            }
            _ => Fetched {
                word: 0,
                addr: 0,
                partition: None,
            },
        };
        if self.trace.level >= TraceLevel::Pipeline {
            self.trace.push(
                c,
                EventKind::Fetch,
                slot.partition,
                Some(slot.addr),
                Some(slot.word as u32),
            );
        }
        self.core.fetch_reg = Some(slot);
    }
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub states: Vec<ArchState>,
    pub retired: [u64; MAX_PARTITIONS],
    /// Clocks actually simulated.
    pub cycles: u64,
    pub fault: Option<Fault>,
}

/// Loads `images`, then simulates `horizon` clocks under `schedule`.
pub fn run(
    images: &[PartitionImage],
    schedule: &Schedule,
    horizon: u64,
    level: TraceLevel,
) -> Result<RunOutcome, LoadError> {
    let mut m = Machine::new(images, schedule, level)?;
    let fault = m.run_until(horizon).err();
    Ok(RunOutcome {
        states: PartitionId::all().map(|p| m.arch_state(p)).collect(),
        retired: m.retired,
        cycles: m.core.cycle,
        fault,
        trace: m.trace,
    })
}
