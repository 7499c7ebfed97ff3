use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::parse::to_word;
use super::{AsmError, AsmErrorKind, AsmProgram, Item, MemRef, Mnemonic, Operand, Statement};
use crate::isa::Reg;

/// Pooled constants in order of first use.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstPool {
    pub entries: Vec<(String, u32)>,
}

impl ConstPool {
    pub fn symbol_for(value: u32) -> String {
        format!("__pool_{value}")
    }

    fn intern(&mut self, value: u32) -> String {
        let name = Self::symbol_for(value);
        if !self.entries.iter().any(|(n, _)| *n == name) {
            self.entries.push((name.clone(), value));
        }
        name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn load(reg: Reg, mem: MemRef, line: usize) -> Statement {
    Statement::inserted(
        Mnemonic::Mov,
        vec![Operand::Reg(reg), Operand::Mem(mem)],
        line,
    )
}

fn store(mem: MemRef, reg: Reg, line: usize) -> Statement {
    Statement::inserted(
        Mnemonic::Mov,
        vec![Operand::Mem(mem), Operand::Reg(reg)],
        line,
    )
}

fn takes_immediates(m: Mnemonic) -> bool {
    matches!(
        m,
        Mnemonic::Mov | Mnemonic::Alu(_) | Mnemonic::Cmp | Mnemonic::Jcc(_)
    )
}

/// Replaces every immediate operand by `emt`, loaded from a pooled data word
/// right before the statement. The pool itself is laid out by the emitter.
pub fn pool_immediates(p: &AsmProgram) -> Result<(AsmProgram, ConstPool), AsmError> {
    let mut pool = ConstPool::default();
    let mut text = Vec::with_capacity(p.text.len());
    for item in &p.text {
        let Item::Stmt(s) = item else {
            text.push(item.clone());
            continue;
        };
        if !takes_immediates(s.mnemonic) {
            text.push(item.clone());
            continue;
        }
        let imms = s
            .operands
            .iter()
            .filter(|o| matches!(o, Operand::Imm(_)))
            .count();
        if imms == 0 {
            text.push(item.clone());
            continue;
        }
        if imms > 1 {
            return Err(AsmError::new(
                s.line,
                AsmErrorKind::Unsupported("two immediate operands".into()),
            ));
        }
        let mut s = s.clone();
        for op in s.operands.iter_mut() {
            if let Operand::Imm(v) = *op {
                let word = to_word(v).ok_or_else(|| {
                    AsmError::new(s.line, AsmErrorKind::MalformedOperand(format!("{v}")))
                })?;
                let sym = pool.intern(word);
                text.push(Item::Stmt(load(Reg::EMT, MemRef::symbol(&sym), s.line)));
                *op = Operand::Reg(Reg::EMT);
            }
        }
        text.push(Item::Stmt(s));
    }
    Ok((
        AsmProgram {
            text,
            data: p.data.clone(),
            equates: p.equates.clone(),
        },
        pool,
    ))
}

/// Gives ALU, compare and conditional-jump statements register operands
/// only: a memory source is loaded into `emt` first, a memory destination
/// becomes load, operate, store. `r14` stands in when `emt` is already an
/// operand.
pub fn lower_mem_operands(p: &AsmProgram) -> Result<AsmProgram, AsmError> {
    let mut text = Vec::with_capacity(p.text.len());
    for item in &p.text {
        let Item::Stmt(s) = item else {
            text.push(item.clone());
            continue;
        };
        let lowered = match s.mnemonic {
            Mnemonic::Alu(_) | Mnemonic::Cmp | Mnemonic::Jcc(_) => {
                s.operands.iter().any(Operand::is_mem)
            }
            Mnemonic::Mov => s.operands.iter().all(Operand::is_mem),
            _ => false,
        };
        if !lowered {
            text.push(item.clone());
            continue;
        }
        if s.operands.iter().filter(|o| o.is_mem()).count() > 1 {
            return Err(AsmError::new(s.line, AsmErrorKind::TwoMemoryOperands));
        }
        let temp = if s.operands.contains(&Operand::Reg(Reg::EMT)) {
            Reg::SCRATCH
        } else {
            Reg::EMT
        };
        let mut s = s.clone();
        let (i, mem) = s
            .operands
            .iter()
            .enumerate()
            .find_map(|(i, o)| match o {
                Operand::Mem(m) => Some((i, m.clone())),
                _ => None,
            })
            .expect("checked above");
        text.push(Item::Stmt(load(temp, mem.clone(), s.line)));
        s.operands[i] = Operand::Reg(temp);
        let writes_back = i == 0 && matches!(s.mnemonic, Mnemonic::Alu(_));
        let line = s.line;
        text.push(Item::Stmt(s));
        if writes_back {
            text.push(Item::Stmt(store(mem, temp, line)));
        }
    }
    Ok(AsmProgram {
        text,
        data: p.data.clone(),
        equates: p.equates.clone(),
    })
}

#[derive(Clone, Debug)]
enum Flags {
    None,
    Compare(Operand, Operand),
    /// An ALU instruction ran after the last compare.
    Clobbered,
    /// A compare operand was written after the compare.
    Overwritten(String),
}

/// Operand location written by a statement, if any.
fn written(s: &Statement) -> Option<&Operand> {
    match s.mnemonic {
        Mnemonic::Mov | Mnemonic::Alu(_) => s.operands.first(),
        _ => None,
    }
}

/// Turns compare-and-jump pairs into `jad`/condition pairs and expands
/// `jmp` and `call` into their two-instruction forms.
pub fn lower_branches(p: &AsmProgram) -> Result<AsmProgram, AsmError> {
    let mut text = Vec::with_capacity(p.text.len());
    let mut flags = Flags::None;
    for item in &p.text {
        let Item::Stmt(s) = item else {
            flags = Flags::None;
            text.push(item.clone());
            continue;
        };
        if let (Some(dst), Flags::Compare(a, b)) = (written(s), &flags) {
            if dst == a || dst == b {
                flags = Flags::Overwritten(format!("{dst}"));
            }
        }
        let label = |s: &Statement| s.operands.first().cloned().into_iter().collect::<Vec<_>>();
        match s.mnemonic {
            Mnemonic::Cmp => {
                flags = Flags::Compare(s.operands[0].clone(), s.operands[1].clone());
            }
            Mnemonic::Jcc(_) if s.operands.len() == 1 => {
                let (a, b) = match &flags {
                    Flags::Compare(a, b) => (a.clone(), b.clone()),
                    Flags::Clobbered => {
                        return Err(AsmError::new(s.line, AsmErrorKind::FlagsClobbered))
                    }
                    Flags::Overwritten(o) => {
                        return Err(AsmError::new(
                            s.line,
                            AsmErrorKind::CompareOperandOverwritten(o.clone()),
                        ))
                    }
                    Flags::None => return Err(AsmError::new(s.line, AsmErrorKind::MissingCompare)),
                };
                text.push(Item::Stmt(Statement::inserted(
                    Mnemonic::Jad,
                    label(s),
                    s.line,
                )));
                text.push(Item::Stmt(Statement {
                    operands: vec![a, b],
                    ..s.clone()
                }));
            }
            Mnemonic::Jmp | Mnemonic::Call if s.operands.len() == 1 => {
                flags = Flags::None;
                let second = if s.mnemonic == Mnemonic::Jmp {
                    Mnemonic::Juc
                } else {
                    Mnemonic::Call
                };
                text.push(Item::Stmt(Statement::inserted(
                    Mnemonic::Jad,
                    label(s),
                    s.line,
                )));
                text.push(Item::Stmt(Statement {
                    mnemonic: second,
                    operands: Vec::new(),
                    ..s.clone()
                }));
            }
            Mnemonic::Alu(_) => {
                if matches!(flags, Flags::Compare(..)) {
                    flags = Flags::Clobbered;
                }
                text.push(item.clone());
            }
            Mnemonic::Ret | Mnemonic::Juc | Mnemonic::Call => {
                flags = Flags::None;
                text.push(item.clone());
            }
            _ => text.push(item.clone()),
        }
    }
    Ok(AsmProgram {
        text,
        data: p.data.clone(),
        equates: p.equates.clone(),
    })
}

fn bit(op: Option<&Operand>) -> u16 {
    match op {
        Some(Operand::Reg(r)) => 1 << r.index(),
        _ => 0,
    }
}

/// Registers read and written by a lowered statement.
pub(crate) fn reads_writes(s: &Statement) -> (u16, u16) {
    let a = s.operands.first();
    let b = s.operands.get(1);
    match s.mnemonic {
        Mnemonic::Mov => match (a, b) {
            (Some(Operand::Mem(_)), _) => (bit(b), 0),
            (_, Some(Operand::Mem(_))) => (0, bit(a)),
            _ => (bit(b), bit(a)),
        },
        Mnemonic::Alu(_) => (bit(a) | bit(b), bit(a)),
        Mnemonic::Cmp | Mnemonic::Jcc(_) => (bit(a) | bit(b), 0),
        _ => (0, 0),
    }
}

/// Inserts no-ops so that no register is read fewer than `distance`
/// instruction slots after it was written. The scan is over the
/// fall-through order; padding goes before any labels that precede the
/// reader, so jumps to those labels do not pay for it.
pub fn insert_hazard_noops(p: &AsmProgram, distance: usize) -> AsmProgram {
    let window = distance.saturating_sub(1);
    // Write masks of the most recent slots, newest first.
    let mut recent: VecDeque<u16> = VecDeque::with_capacity(window + 1);
    let mut text: Vec<Item> = Vec::with_capacity(p.text.len());
    let mut labels_from = 0;
    for item in &p.text {
        let Item::Stmt(s) = item else {
            text.push(item.clone());
            continue;
        };
        let (reads, writes) = reads_writes(s);
        let nearest = recent.iter().position(|w| w & reads != 0);
        if let Some(i) = nearest {
            let pad = distance - (i + 1);
            let noops = (0..pad)
                .map(|_| Item::Stmt(Statement::inserted(Mnemonic::Noop, Vec::new(), s.line)));
            text.splice(labels_from..labels_from, noops);
            for _ in 0..pad {
                recent.push_front(0);
            }
        }
        text.push(item.clone());
        labels_from = text.len();
        recent.push_front(writes);
        recent.truncate(window);
    }
    AsmProgram {
        text,
        data: p.data.clone(),
        equates: p.equates.clone(),
    }
}
