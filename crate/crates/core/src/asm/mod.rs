//! Assembler for the x86-style subset a C compiler emits in Intel syntax.
//!
//! The machine has no immediates, no memory operands on ALU instructions,
//! two-instruction jumps and no forwarding, so [`assemble`] runs four
//! rewriting passes before emitting words:
//!
//! 1. [`pool_immediates`]: each constant moves to a data word, loaded into
//!    `emt` right before use;
//! 2. [`lower_mem_operands`]: memory operands of ALU and compare
//!    instructions are loaded into `emt` first;
//! 3. [`lower_branches`]: `cmp` disappears, `jcc L` becomes `jad L; jcc a, b`,
//!    `jmp`/`call` become `jad` plus `juc`/`call`;
//! 4. [`insert_hazard_noops`]: no-ops separate dependent instructions.
//!
//! Register names: `eax ebx ecx edx esi edi ebp esp` are r0 to r7 and
//! `r8d` to `r13d` are r8 to r13. r14 is a scratch register for the passes
//! and r15 is `emt`; neither may appear in source unless
//! [`AsmOptions::allow_reserved_registers`] is set.
//!
//! Memory operands name a data symbol, optionally with a byte offset that
//! must be a multiple of 4 (`dword ptr [c + 4]`). A bare number is a word
//! address (`dword ptr [0x018]` is the UART). Symbols defined with `.set`
//! or `.equ` are word addresses too.

mod emit;
mod parse;
mod passes;

pub use emit::{emit_binary, SymbolTable};
pub use parse::parse_assembly;
pub use passes::{
    insert_hazard_noops, lower_branches, lower_mem_operands, pool_immediates, ConstPool,
};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::isa::{Opcode, Reg};
use crate::memsys::{DataImage, PartitionImage};

/// First data word handed out to static data.
pub const DEFAULT_DATA_BASE: u16 = 0x020;
/// Last data word available to static data and the constant pool; the
/// shared window starts right after it.
pub const DEFAULT_DATA_LIMIT: u16 = 0x1BF;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AsmOptions {
    /// Minimum distance, in instruction slots, between a register write
    /// and its first read.
    pub hazard_distance: usize,
    pub allow_reserved_registers: bool,
    pub data_base: u16,
    pub data_limit: u16,
}

impl Default for AsmOptions {
    fn default() -> Self {
        AsmOptions {
            hazard_distance: 2,
            allow_reserved_registers: false,
            data_base: DEFAULT_DATA_BASE,
            data_limit: DEFAULT_DATA_LIMIT,
        }
    }
}

/// Source-level operation. ALU operations keep the machine opcode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mnemonic {
    Mov,
    Alu(Opcode),
    Cmp,
    /// Conditional jump; one label operand in x86 form, two registers
    /// once lowered.
    Jcc(Opcode),
    Jmp,
    Call,
    Ret,
    Jad,
    Juc,
    Noop,
}

impl Mnemonic {
    pub fn name(self) -> &'static str {
        match self {
            Mnemonic::Mov => "mov",
            Mnemonic::Alu(Opcode::Mul) => "imul",
            Mnemonic::Alu(op) | Mnemonic::Jcc(op) => op.mnemonic(),
            Mnemonic::Cmp => "cmp",
            Mnemonic::Jmp => "jmp",
            Mnemonic::Call => "call",
            Mnemonic::Ret => "ret",
            Mnemonic::Jad => "jad",
            Mnemonic::Juc => "juc",
            Mnemonic::Noop => "noop",
        }
    }
}

/// `dword ptr [symbol + offset]`, or an absolute word address when
/// `symbol` is `None`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MemRef {
    pub symbol: Option<String>,
    pub offset: i64,
}

impl MemRef {
    pub fn symbol(name: &str) -> MemRef {
        MemRef {
            symbol: Some(name.into()),
            offset: 0,
        }
    }

    pub fn absolute(addr: u16) -> MemRef {
        MemRef {
            symbol: None,
            offset: addr as i64,
        }
    }
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.symbol {
            Some(s) if self.offset > 0 => write!(f, "dword ptr [{s} + {}]", self.offset),
            Some(s) if self.offset < 0 => write!(f, "dword ptr [{s} - {}]", -self.offset),
            Some(s) => write!(f, "dword ptr [{s}]"),
            None => write!(f, "dword ptr [{:#05x}]", self.offset),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Reg(Reg),
    Mem(MemRef),
    Imm(i64),
    Label(String),
}

impl Operand {
    pub fn reg(&self) -> Option<Reg> {
        match self {
            Operand::Reg(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_mem(&self) -> bool {
        matches!(self, Operand::Mem(_))
    }
}

const REG_NAMES: [&str; 16] = [
    "eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp", "r8d", "r9d", "r10d", "r11d", "r12d",
    "r13d", "r14", "emt",
];

/// Assembly-level name of a register.
pub fn reg_name(r: Reg) -> &'static str {
    REG_NAMES[r.index()]
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => f.write_str(reg_name(*r)),
            Operand::Mem(m) => write!(f, "{m}"),
            Operand::Imm(v) => write!(f, "{v}"),
            Operand::Label(l) => f.write_str(l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub mnemonic: Mnemonic,
    pub operands: Vec<Operand>,
    /// 1-based source line; inserted statements carry their origin's line.
    pub line: usize,
    /// Added by a pass rather than written in the source.
    pub inserted: bool,
}

impl Statement {
    pub fn new(mnemonic: Mnemonic, operands: Vec<Operand>, line: usize) -> Statement {
        Statement {
            mnemonic,
            operands,
            line,
            inserted: false,
        }
    }

    pub(crate) fn inserted(mnemonic: Mnemonic, operands: Vec<Operand>, line: usize) -> Statement {
        Statement {
            mnemonic,
            operands,
            line,
            inserted: true,
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic.name())?;
        for (i, op) in self.operands.iter().enumerate() {
            f.write_str(if i == 0 { " " } else { ", " })?;
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Label(String, usize),
    Stmt(Statement),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataEntry {
    Label(String, usize),
    Words(Vec<u32>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AsmProgram {
    pub text: Vec<Item>,
    pub data: Vec<DataEntry>,
    /// `.set`/`.equ` symbols: absolute word addresses.
    pub equates: Vec<(String, u16)>,
}

impl AsmProgram {
    pub fn statements(&self) -> impl Iterator<Item = &Statement> + '_ {
        self.text.iter().filter_map(|i| match i {
            Item::Stmt(s) => Some(s),
            Item::Label(..) => None,
        })
    }
}

impl fmt::Display for AsmProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.text {
            match item {
                Item::Label(l, _) => writeln!(f, "{l}:")?,
                Item::Stmt(s) => writeln!(f, "\t{s}")?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AsmErrorKind {
    UnknownMnemonic(String),
    MalformedOperand(String),
    OperandCount {
        mnemonic: String,
        found: usize,
    },
    DuplicateLabel(String),
    UndefinedSymbol(String),
    ReservedRegister(String),
    Unsupported(String),
    BadDirective(String),
    /// Two memory operands in one instruction.
    TwoMemoryOperands,
    /// A conditional jump with no `cmp` before it in its basic block.
    MissingCompare,
    /// An ALU instruction between `cmp` and the jump changed the flags.
    FlagsClobbered,
    /// A `cmp` operand was written before the jump that uses it.
    CompareOperandOverwritten(String),
    DataOverflow {
        needed: usize,
        available: usize,
    },
    CodeOverflow(usize),
    AddressOutOfRange(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsmError {
    /// 1-based source line, 0 when the error is not tied to one.
    pub line: usize,
    pub kind: AsmErrorKind,
}

impl AsmError {
    pub(crate) fn new(line: usize, kind: AsmErrorKind) -> AsmError {
        AsmError { line, kind }
    }
}

impl fmt::Display for AsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: ", self.line)?;
        }
        match &self.kind {
            AsmErrorKind::UnknownMnemonic(m) => write!(f, "unsupported mnemonic `{m}`"),
            AsmErrorKind::MalformedOperand(o) => write!(f, "malformed operand `{o}`"),
            AsmErrorKind::OperandCount { mnemonic, found } => {
                write!(f, "`{mnemonic}` does not take {found} operand(s)")
            }
            AsmErrorKind::DuplicateLabel(l) => write!(f, "label `{l}` defined twice"),
            AsmErrorKind::UndefinedSymbol(s) => write!(f, "undefined symbol `{s}`"),
            AsmErrorKind::ReservedRegister(r) => {
                write!(f, "register `{r}` is reserved for the assembler")
            }
            AsmErrorKind::Unsupported(what) => write!(f, "unsupported: {what}"),
            AsmErrorKind::BadDirective(d) => write!(f, "unsupported directive `{d}`"),
            AsmErrorKind::TwoMemoryOperands => f.write_str("two memory operands"),
            AsmErrorKind::MissingCompare => {
                f.write_str("conditional jump without a preceding cmp in the same block")
            }
            AsmErrorKind::FlagsClobbered => {
                f.write_str("flags changed between cmp and the conditional jump")
            }
            AsmErrorKind::CompareOperandOverwritten(o) => {
                write!(f, "cmp operand `{o}` written before the conditional jump")
            }
            AsmErrorKind::DataOverflow { needed, available } => write!(
                f,
                "static data and constants need {needed} words, {available} available"
            ),
            AsmErrorKind::CodeOverflow(n) => {
                write!(f, "{n} instructions exceed the instruction address space")
            }
            AsmErrorKind::AddressOutOfRange(what) => write!(f, "address out of range: {what}"),
        }
    }
}

impl core::error::Error for AsmError {}

/// Output of a full assembly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assembly {
    pub code: Vec<u16>,
    pub data: DataImage,
    pub symbols: SymbolTable,
    /// Address, word, disassembly and lowered statement, one line per word.
    pub listing: String,
    /// The program after all passes.
    pub lowered: AsmProgram,
    pub pool: ConstPool,
}

impl Assembly {
    pub fn image(&self) -> PartitionImage {
        PartitionImage {
            code: self.code.clone(),
            data: self.data.clone(),
        }
    }
}

/// Parses, lowers and emits one partition's program.
pub fn assemble(source: &str, opts: &AsmOptions) -> Result<Assembly, AsmError> {
    let program = parse_assembly(source, opts)?;
    let (program, pool) = pool_immediates(&program)?;
    let program = lower_mem_operands(&program)?;
    let program = lower_branches(&program)?;
    let program = insert_hazard_noops(&program, opts.hazard_distance);
    let out = emit_binary(&program, &pool, opts)?;
    Ok(Assembly {
        code: out.code,
        data: out.data,
        symbols: out.symbols,
        listing: out.listing,
        lowered: program,
        pool,
    })
}
