//! Non-pipelined interpreter: one instruction per step, effects immediate.

use alloc::vec::Vec;
use core::fmt;

use crate::isa::{Category, Direction, Instruction, Opcode, CODE_ADDR_MAX, NUM_REGS};
use crate::memsys::{DeviceEffect, MemoryControlUnit, MemorySystem, PartitionImage};
use crate::PartitionId;

use super::{ArchState, STACK_DEPTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefOptions {
    pub step_budget: u64,
    /// Value reported by the partition-id register.
    pub partition: PartitionId,
    /// Stop at `jad a` followed by an unconditional jump to `a`.
    pub halt_on_spin: bool,
}

impl Default for RefOptions {
    fn default() -> Self {
        RefOptions {
            step_budget: 1_000_000,
            partition: PartitionId::new(0).expect("partition 0 exists"),
            halt_on_spin: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefOutcome {
    pub state: ArchState,
    /// Instructions executed, the spin jump included.
    pub steps: u64,
    pub uart: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefError {
    StepBudget(u64),
    StackOverflow(u16),
    StackUnderflow(u16),
}

impl fmt::Display for RefError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefError::StepBudget(n) => write!(f, "no halt within {n} steps"),
            RefError::StackOverflow(a) => write!(f, "address stack overflow at {a:#06x}"),
            RefError::StackUnderflow(a) => write!(f, "return with empty address stack at {a:#06x}"),
        }
    }
}

impl core::error::Error for RefError {}

/// Runs `image` alone until it spins on itself or the budget runs out.
/// The timer reads as the number of steps taken so far.
pub fn reference_execute(
    image: &PartitionImage,
    opts: &RefOptions,
) -> Result<RefOutcome, RefError> {
    let p = opts.partition;
    let mut images: Vec<PartitionImage> = Vec::new();
    images.resize(p.index() + 1, PartitionImage::default());
    images[p.index()] = image.clone();
    let mut mem = MemorySystem::default();
    // Callers hand in images produced by the assembler, which fit.
    let _ = mem.load_images(&images);
    mem.devices.partition_id = p.raw();

    let mut regs = [0u32; NUM_REGS];
    let mut pc: u16 = 0;
    let mut jump_reg: u16 = 0;
    let mut stack: Vec<u16> = Vec::new();
    let mut uart = Vec::new();
    let mut steps = 0u64;

    loop {
        if steps >= opts.step_budget {
            return Err(RefError::StepBudget(steps));
        }
        mem.devices.timer = steps;
        steps += 1;
        let addr = pc;
        let instr = Instruction::from_word(mem.fetch(p, addr));
        pc = (addr + 1) & CODE_ADDR_MAX;
        match instr {
            Instruction::MemAccess {
                direction: Direction::Load,
                reg,
                addr: d,
            } => {
                if let Ok(v) = mem.data_read(d, Some(p)) {
                    regs[reg.index()] = v;
                }
            }
            Instruction::MemAccess {
                direction: Direction::Store,
                reg,
                addr: d,
            } => {
                if let Ok(Some(DeviceEffect::UartTx(v))) =
                    mem.data_write(d, regs[reg.index()], Some(p))
                {
                    uart.push(v);
                }
            }
            Instruction::MemAddress { addr: a } => jump_reg = a,
            Instruction::Operational { opcode, op_a, op_b } => {
                let Some(op) = Opcode::from_u8(opcode) else {
                    continue;
                };
                let (a, b) = (regs[op_a.index()], regs[op_b.index()]);
                match op.category() {
                    Category::NoOp => {}
                    Category::AluArithmetic | Category::AluLogic | Category::Move => {
                        regs[op_a.index()] = op.alu(a, b).expect("ALU category");
                    }
                    Category::JumpCondition | Category::UnconditionalJump => {
                        if op.condition(a, b).expect("jump category") {
                            let spin = op == Opcode::Juc
                                && addr > 0
                                && jump_reg == addr - 1
                                && mem.fetch(p, addr - 1) & 0xC000 == 0x8000;
                            pc = jump_reg;
                            if spin && opts.halt_on_spin {
                                break;
                            }
                        }
                    }
                    Category::CallTrigger => {
                        if stack.len() >= STACK_DEPTH {
                            return Err(RefError::StackOverflow(addr));
                        }
                        stack.push((addr + 1) & CODE_ADDR_MAX);
                        pc = jump_reg;
                    }
                    Category::Return => {
                        pc = stack.pop().ok_or(RefError::StackUnderflow(addr))?;
                    }
                }
            }
        }
    }

    Ok(RefOutcome {
        state: ArchState {
            regs,
            pc,
            jump_reg,
            stack,
            data: mem.data_segment(MemoryControlUnit::segment_of(p)).to_vec(),
        },
        steps,
        uart,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{encode, Reg};
    use crate::memsys::DataImage;
    use alloc::vec;

    #[test]
    fn load_add_store() {
        let r1 = Reg::new(1).unwrap();
        let x = 0x040;
        let code = [
            Instruction::load(r1, x),
            Instruction::op(Opcode::Add, r1, r1),
            Instruction::store(r1, x),
            Instruction::jad(3),
            Instruction::op(Opcode::Juc, r1, r1),
        ]
        .iter()
        .map(|&i| encode(i).unwrap())
        .collect();
        let image = PartitionImage {
            code,
            data: DataImage {
                base: x,
                words: vec![3],
            },
        };
        let out = reference_execute(&image, &RefOptions::default()).unwrap();
        assert_eq!(out.state.data[x as usize], 6);
        assert_eq!(out.steps, 5);
    }

    #[test]
    fn runaway_program_exhausts_budget() {
        // Straight-line no-ops wrap around the whole code space forever.
        let image = PartitionImage::default();
        let opts = RefOptions {
            step_budget: 100,
            ..Default::default()
        };
        assert_eq!(
            reference_execute(&image, &opts),
            Err(RefError::StepBudget(100))
        );
    }
}
