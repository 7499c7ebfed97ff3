//! The 16-bit instruction set.
//!
//! Every word falls into exactly one of three forms, selected by its top bits:
//!
//! ```text
//!  15 14 13 12      9 8               0
//! | 1| 1|dir|  reg   |      addr       |   memory-access  (dir 1 = store)
//! | 1| 0|          addr (14 bits)      |   memory-address (jump target)
//! | 0|   opcode (7)   | op_a  |  op_b  |   operational
//! ```
//!
//! Operational instructions have no destination field: `op_a` is both the
//! first source and the destination.

use core::fmt;

/// Number of architectural registers in one partition's bank.
pub const NUM_REGS: usize = 16;
/// Largest data-cache address a memory-access instruction can carry.
pub const DATA_ADDR_MAX: u16 = 0x1FF;
/// Largest instruction-cache address a memory-address instruction can carry.
pub const CODE_ADDR_MAX: u16 = 0x3FFF;

/// A register index in the active bank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(u8);

impl Reg {
    /// The register the assembler reserves for its own loads.
    pub const EMT: Reg = Reg(15);
    /// Assembler scratch register, used when `emt` is already taken.
    pub const SCRATCH: Reg = Reg(14);

    pub const fn new(index: u8) -> Option<Reg> {
        if index < NUM_REGS as u8 {
            Some(Reg(index))
        } else {
            None
        }
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Direction of a memory-access instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Load,
    Store,
}

/// One decoded instruction word.
///
/// The operational form keeps the raw 7-bit opcode so that words with
/// unassigned opcodes still have a faithful representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    MemAccess {
        direction: Direction,
        reg: Reg,
        addr: u16,
    },
    MemAddress {
        addr: u16,
    },
    Operational {
        opcode: u8,
        op_a: Reg,
        op_b: Reg,
    },
}

impl Instruction {
    /// The canonical no-op: an all-zero word.
    pub const NOOP: Instruction = Instruction::Operational {
        opcode: Opcode::Noop as u8,
        op_a: Reg(0),
        op_b: Reg(0),
    };

    pub fn op(opcode: Opcode, op_a: Reg, op_b: Reg) -> Instruction {
        Instruction::Operational {
            opcode: opcode as u8,
            op_a,
            op_b,
        }
    }

    pub fn load(reg: Reg, addr: u16) -> Instruction {
        Instruction::MemAccess {
            direction: Direction::Load,
            reg,
            addr,
        }
    }

    pub fn store(reg: Reg, addr: u16) -> Instruction {
        Instruction::MemAccess {
            direction: Direction::Store,
            reg,
            addr,
        }
    }

    pub fn jad(addr: u16) -> Instruction {
        Instruction::MemAddress { addr }
    }

    /// Splits a word into its fields without consulting the opcode table.
    /// Every 16-bit word has exactly one such split.
    pub const fn from_word(word: u16) -> Instruction {
        if word & 0x8000 == 0 {
            Instruction::Operational {
                opcode: ((word >> 8) & 0x7F) as u8,
                op_a: Reg(((word >> 4) & 0xF) as u8),
                op_b: Reg((word & 0xF) as u8),
            }
        } else if word & 0x4000 == 0 {
            Instruction::MemAddress {
                addr: word & CODE_ADDR_MAX,
            }
        } else {
            Instruction::MemAccess {
                direction: if word & 0x2000 != 0 {
                    Direction::Store
                } else {
                    Direction::Load
                },
                reg: Reg(((word >> 9) & 0xF) as u8),
                addr: word & DATA_ADDR_MAX,
            }
        }
    }

    /// The opcode table entry, for operational instructions with an assigned opcode.
    pub fn opcode(&self) -> Option<Opcode> {
        match *self {
            Instruction::Operational { opcode, .. } => Opcode::from_u8(opcode),
            _ => None,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::MemAccess {
                direction: Direction::Load,
                reg,
                addr,
            } => write!(f, "load {reg}, [{addr:#05x}]"),
            Instruction::MemAccess {
                direction: Direction::Store,
                reg,
                addr,
            } => write!(f, "store {reg}, [{addr:#05x}]"),
            Instruction::MemAddress { addr } => write!(f, "jad {addr:#06x}"),
            Instruction::Operational { opcode, op_a, op_b } => match Opcode::from_u8(opcode) {
                Some(Opcode::Noop) => f.write_str("noop"),
                Some(op @ (Opcode::Juc | Opcode::Call | Opcode::Ret)) => f.write_str(op.mnemonic()),
                Some(op) => write!(f, "{} {op_a}, {op_b}", op.mnemonic()),
                None => write!(f, "op{opcode:#04x} {op_a}, {op_b}"),
            },
        }
    }
}

/// Semantic class of an opcode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    AluArithmetic,
    AluLogic,
    Move,
    JumpCondition,
    UnconditionalJump,
    CallTrigger,
    Return,
    NoOp,
}

/// Assigned operational opcodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Noop = 0x00,
    Mov = 0x10,
    Add = 0x11,
    Sub = 0x12,
    Mul = 0x13,
    Jle = 0x21,
    Jge = 0x22,
    Jl = 0x23,
    Jg = 0x24,
    Je = 0x25,
    Jne = 0x26,
    Juc = 0x27,
    Call = 0x28,
    Ret = 0x29,
    Xor = 0x31,
    And = 0x32,
    Or = 0x33,
    Shr = 0x34,
    Shl = 0x35,
}

/// One row of the opcode table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpcodeEntry {
    pub encoding: u8,
    pub mnemonic: &'static str,
    pub category: Category,
    pub opcode: Opcode,
}

const fn entry(opcode: Opcode, mnemonic: &'static str, category: Category) -> OpcodeEntry {
    OpcodeEntry {
        encoding: opcode as u8,
        mnemonic,
        category,
        opcode,
    }
}

/// The complete opcode table, sorted by encoding.
pub const OPCODE_TABLE: &[OpcodeEntry] = &[
    entry(Opcode::Noop, "noop", Category::NoOp),
    entry(Opcode::Mov, "mov", Category::Move),
    entry(Opcode::Add, "add", Category::AluArithmetic),
    entry(Opcode::Sub, "sub", Category::AluArithmetic),
    entry(Opcode::Mul, "mul", Category::AluArithmetic),
    entry(Opcode::Jle, "jle", Category::JumpCondition),
    entry(Opcode::Jge, "jge", Category::JumpCondition),
    entry(Opcode::Jl, "jl", Category::JumpCondition),
    entry(Opcode::Jg, "jg", Category::JumpCondition),
    entry(Opcode::Je, "je", Category::JumpCondition),
    entry(Opcode::Jne, "jne", Category::JumpCondition),
    entry(Opcode::Juc, "juc", Category::UnconditionalJump),
    entry(Opcode::Call, "call", Category::CallTrigger),
    entry(Opcode::Ret, "ret", Category::Return),
    entry(Opcode::Xor, "xor", Category::AluLogic),
    entry(Opcode::And, "and", Category::AluLogic),
    entry(Opcode::Or, "or", Category::AluLogic),
    entry(Opcode::Shr, "shr", Category::AluLogic),
    entry(Opcode::Shl, "shl", Category::AluLogic),
];

const BY_ENCODING: [Option<Opcode>; 128] = {
    let mut table = [None; 128];
    let mut i = 0;
    while i < OPCODE_TABLE.len() {
        table[OPCODE_TABLE[i].encoding as usize] = Some(OPCODE_TABLE[i].opcode);
        i += 1;
    }
    table
};

impl Opcode {
    pub fn from_u8(encoding: u8) -> Option<Opcode> {
        BY_ENCODING.get(encoding as usize).copied().flatten()
    }

    pub fn from_mnemonic(name: &str) -> Option<Opcode> {
        OPCODE_TABLE
            .iter()
            .find(|e| e.mnemonic == name)
            .map(|e| e.opcode)
    }

    pub fn entry(self) -> &'static OpcodeEntry {
        OPCODE_TABLE
            .iter()
            .find(|e| e.opcode == self)
            .expect("every opcode has a table entry")
    }

    pub fn mnemonic(self) -> &'static str {
        self.entry().mnemonic
    }

    pub fn category(self) -> Category {
        self.entry().category
    }

    /// Evaluates a jump condition on signed operands. `None` for non-jumps.
    pub fn condition(self, a: u32, b: u32) -> Option<bool> {
        let (a, b) = (a as i32, b as i32);
        Some(match self {
            Opcode::Jle => a <= b,
            Opcode::Jge => a >= b,
            Opcode::Jl => a < b,
            Opcode::Jg => a > b,
            Opcode::Je => a == b,
            Opcode::Jne => a != b,
            Opcode::Juc => true,
            _ => return None,
        })
    }

    /// Single-cycle ALU result for arithmetic, logic and move opcodes.
    pub fn alu(self, a: u32, b: u32) -> Option<u32> {
        Some(match self {
            Opcode::Mov => b,
            Opcode::Add => a.wrapping_add(b),
            Opcode::Sub => a.wrapping_sub(b),
            Opcode::Mul => (a as i32 as i64).wrapping_mul(b as i32 as i64) as u32,
            Opcode::Xor => a ^ b,
            Opcode::And => a & b,
            Opcode::Or => a | b,
            Opcode::Shr => a >> (b & 0x1F),
            Opcode::Shl => a << (b & 0x1F),
            _ => return None,
        })
    }
}

/// Field that failed range checking during encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeError {
    DataAddress(u16),
    CodeAddress(u16),
    Opcode(u8),
}

impl fmt::Display for EncodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodeError::DataAddress(a) => {
                write!(f, "data address {a:#x} does not fit 9 bits")
            }
            EncodeError::CodeAddress(a) => {
                write!(f, "code address {a:#x} does not fit 14 bits")
            }
            EncodeError::Opcode(o) => write!(f, "opcode {o:#x} does not fit 7 bits"),
        }
    }
}

impl core::error::Error for EncodeError {}

/// A word whose operational opcode is not in the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeError {
    pub word: u16,
    pub opcode: u8,
    pub op_a: Reg,
    pub op_b: Reg,
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown opcode {:#04x} in word {:#06x} (op_a {}, op_b {})",
            self.opcode, self.word, self.op_a, self.op_b
        )
    }
}

impl core::error::Error for DecodeError {}

pub fn encode(instr: Instruction) -> Result<u16, EncodeError> {
    match instr {
        Instruction::MemAccess {
            direction,
            reg,
            addr,
        } => {
            if addr > DATA_ADDR_MAX {
                return Err(EncodeError::DataAddress(addr));
            }
            let dir = match direction {
                Direction::Load => 0,
                Direction::Store => 1 << 13,
            };
            Ok(0xC000 | dir | ((reg.0 as u16) << 9) | addr)
        }
        Instruction::MemAddress { addr } => {
            if addr > CODE_ADDR_MAX {
                return Err(EncodeError::CodeAddress(addr));
            }
            Ok(0x8000 | addr)
        }
        Instruction::Operational { opcode, op_a, op_b } => {
            if opcode > 0x7F {
                return Err(EncodeError::Opcode(opcode));
            }
            Ok(((opcode as u16) << 8) | ((op_a.0 as u16) << 4) | op_b.0 as u16)
        }
    }
}

/// Decodes a word, rejecting operational words with unassigned opcodes.
pub fn decode(word: u16) -> Result<Instruction, DecodeError> {
    let instr = Instruction::from_word(word);
    match instr {
        Instruction::Operational { opcode, op_a, op_b } if Opcode::from_u8(opcode).is_none() => {
            Err(DecodeError {
                word,
                opcode,
                op_a,
                op_b,
            })
        }
        _ => Ok(instr),
    }
}
