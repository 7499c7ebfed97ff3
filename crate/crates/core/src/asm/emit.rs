use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{
    AsmError, AsmErrorKind, AsmOptions, AsmProgram, ConstPool, DataEntry, Item, MemRef, Mnemonic,
    Operand, Statement,
};
use crate::isa::{encode, Instruction, Opcode, Reg, CODE_ADDR_MAX, DATA_ADDR_MAX};
use crate::memsys::{DataImage, CODE_SEGMENT_WORDS};

/// Resolved addresses: code labels are instruction addresses, data symbols
/// (static data, pooled constants, `.set` names) are data word addresses.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymbolTable {
    pub code: BTreeMap<String, u16>,
    pub data: BTreeMap<String, u16>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmitOutput {
    pub code: Vec<u16>,
    pub data: DataImage,
    pub symbols: SymbolTable,
    pub listing: String,
}

fn unsupported(s: &Statement) -> AsmError {
    AsmError::new(
        s.line,
        AsmErrorKind::Unsupported(format!(
            "`{s}` has no machine form; run the lowering passes first"
        )),
    )
}

fn resolve_mem(m: &MemRef, syms: &SymbolTable, line: usize) -> Result<u16, AsmError> {
    let addr = match &m.symbol {
        None => m.offset,
        Some(name) => {
            let base = *syms
                .data
                .get(name)
                .ok_or_else(|| AsmError::new(line, AsmErrorKind::UndefinedSymbol(name.clone())))?;
            if m.offset % 4 != 0 {
                return Err(AsmError::new(
                    line,
                    AsmErrorKind::Unsupported(format!(
                        "byte offset {} is not word aligned",
                        m.offset
                    )),
                ));
            }
            base as i64 + m.offset / 4
        }
    };
    if !(0..=DATA_ADDR_MAX as i64).contains(&addr) {
        return Err(AsmError::new(
            line,
            AsmErrorKind::AddressOutOfRange(format!("{m}")),
        ));
    }
    Ok(addr as u16)
}

fn lower_statement(s: &Statement, syms: &SymbolTable) -> Result<Instruction, AsmError> {
    let ops = s.operands.as_slice();
    let r0 = Reg::new(0).expect("r0");
    Ok(match (s.mnemonic, ops) {
        (Mnemonic::Mov, [Operand::Reg(a), Operand::Reg(b)]) => Instruction::op(Opcode::Mov, *a, *b),
        (Mnemonic::Mov, [Operand::Reg(r), Operand::Mem(m)]) => {
            Instruction::load(*r, resolve_mem(m, syms, s.line)?)
        }
        (Mnemonic::Mov, [Operand::Mem(m), Operand::Reg(r)]) => {
            Instruction::store(*r, resolve_mem(m, syms, s.line)?)
        }
        (Mnemonic::Alu(op) | Mnemonic::Jcc(op), [Operand::Reg(a), Operand::Reg(b)]) => {
            Instruction::op(op, *a, *b)
        }
        (Mnemonic::Jad, [Operand::Label(l)]) => Instruction::jad(
            *syms
                .code
                .get(l)
                .ok_or_else(|| AsmError::new(s.line, AsmErrorKind::UndefinedSymbol(l.clone())))?,
        ),
        (Mnemonic::Jad, [Operand::Imm(a)]) => {
            if !(0..=CODE_ADDR_MAX as i64).contains(a) {
                return Err(AsmError::new(
                    s.line,
                    AsmErrorKind::AddressOutOfRange(format!("{a}")),
                ));
            }
            Instruction::jad(*a as u16)
        }
        (Mnemonic::Juc, []) => Instruction::op(Opcode::Juc, r0, r0),
        (Mnemonic::Call, []) => Instruction::op(Opcode::Call, r0, r0),
        (Mnemonic::Ret, []) => Instruction::op(Opcode::Ret, r0, r0),
        (Mnemonic::Noop, []) => Instruction::NOOP,
        _ => return Err(unsupported(s)),
    })
}

/// Lays out data and code, resolves symbols and encodes every statement.
pub fn emit_binary(
    p: &AsmProgram,
    pool: &ConstPool,
    opts: &AsmOptions,
) -> Result<EmitOutput, AsmError> {
    let mut syms = SymbolTable::default();
    let dup =
        |name: &str, line: usize| AsmError::new(line, AsmErrorKind::DuplicateLabel(name.into()));

    for (name, addr) in &p.equates {
        if syms.data.insert(name.clone(), *addr).is_some() {
            return Err(dup(name, 0));
        }
    }
    let mut words: Vec<u32> = Vec::new();
    let mut data_names: Vec<(usize, String)> = Vec::new();
    for entry in &p.data {
        match entry {
            DataEntry::Label(name, line) => {
                let addr = opts.data_base as usize + words.len();
                if syms.data.insert(name.clone(), addr as u16).is_some() {
                    return Err(dup(name, *line));
                }
                data_names.push((words.len(), name.clone()));
            }
            DataEntry::Words(w) => words.extend_from_slice(w),
        }
    }
    for (name, value) in &pool.entries {
        let addr = opts.data_base as usize + words.len();
        if syms.data.insert(name.clone(), addr as u16).is_some() {
            return Err(dup(name, 0));
        }
        data_names.push((words.len(), name.clone()));
        words.push(*value);
    }
    let available = (opts.data_limit as usize + 1).saturating_sub(opts.data_base as usize);
    if words.len() > available {
        return Err(AsmError::new(
            0,
            AsmErrorKind::DataOverflow {
                needed: words.len(),
                available,
            },
        ));
    }

    let mut pc = 0usize;
    for item in &p.text {
        match item {
            Item::Label(name, line) => {
                if syms.data.contains_key(name)
                    || syms.code.insert(name.clone(), pc as u16).is_some()
                {
                    return Err(dup(name, *line));
                }
            }
            Item::Stmt(_) => pc += 1,
        }
    }
    if pc > CODE_SEGMENT_WORDS {
        return Err(AsmError::new(0, AsmErrorKind::CodeOverflow(pc)));
    }

    let mut code = Vec::with_capacity(pc);
    let mut listing = String::new();
    for item in &p.text {
        match item {
            Item::Label(name, _) => {
                let _ = writeln!(listing, "{:12}{name}:", "");
            }
            Item::Stmt(s) => {
                let instr = lower_statement(s, &syms)?;
                let word = encode(instr).map_err(|e| {
                    AsmError::new(s.line, AsmErrorKind::AddressOutOfRange(format!("{e}")))
                })?;
                let _ = writeln!(
                    listing,
                    "{:04x}  {word:04x}  {:<22}  {s}",
                    code.len(),
                    format!("{instr}")
                );
                code.push(word);
            }
        }
    }
    if !words.is_empty() {
        let _ = writeln!(listing, "\n; data");
        let mut names = data_names.iter().peekable();
        for (i, w) in words.iter().enumerate() {
            let _ = write!(listing, "{:04x}  {w:08x}", opts.data_base as usize + i);
            let mut first = true;
            while let Some((_, name)) = names.next_if(|(at, _)| *at == i) {
                let _ = write!(listing, "{}{name}", if first { "  " } else { ", " });
                first = false;
            }
            listing.push('\n');
        }
    }

    Ok(EmitOutput {
        code,
        data: DataImage {
            base: opts.data_base,
            words,
        },
        symbols: syms,
        listing,
    })
}
