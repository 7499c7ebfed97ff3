use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{
    AsmError, AsmErrorKind, AsmOptions, AsmProgram, DataEntry, Item, MemRef, Mnemonic, Operand,
    Statement,
};
use crate::isa::{Opcode, Reg, DATA_ADDR_MAX};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Text,
    Data,
    /// Metadata sections such as `.note.GNU-stack`.
    Other,
}

/// Directives that carry no meaning for the machine.
const IGNORED_DIRECTIVES: &[&str] = &[
    ".globl",
    ".global",
    ".local",
    ".type",
    ".size",
    ".p2align",
    ".align",
    ".balign",
    ".file",
    ".ident",
    ".addrsig",
    ".addrsig_sym",
    ".intel_syntax",
    ".att_syntax",
    ".weak",
    ".hidden",
    ".loc",
    ".comm",
    ".lcomm",
];

pub fn parse_assembly(source: &str, opts: &AsmOptions) -> Result<AsmProgram, AsmError> {
    let mut program = AsmProgram::default();
    let mut section = Section::Text;
    let mut names: BTreeSet<String> = BTreeSet::new();

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let mut rest = strip_comment(raw).trim();

        while let Some((label, after)) = split_label(rest) {
            if !names.insert(label.to_string()) {
                return Err(AsmError::new(
                    line,
                    AsmErrorKind::DuplicateLabel(label.into()),
                ));
            }
            match section {
                Section::Text => program.text.push(Item::Label(label.into(), line)),
                Section::Data => program.data.push(DataEntry::Label(label.into(), line)),
                Section::Other => {}
            }
            rest = after.trim();
        }
        if rest.is_empty() {
            continue;
        }

        if rest.starts_with('.') {
            let (name, args) = split_word(rest);
            match name {
                ".text" => section = Section::Text,
                ".data" | ".bss" | ".rodata" => section = Section::Data,
                ".section" => {
                    let target = args
                        .split(',')
                        .next()
                        .unwrap_or("")
                        .trim()
                        .trim_matches('"');
                    section = if target.starts_with(".text") {
                        Section::Text
                    } else if [".data", ".bss", ".rodata"]
                        .iter()
                        .any(|s| target.starts_with(s))
                    {
                        Section::Data
                    } else {
                        Section::Other
                    };
                }
                ".set" | ".equ" => {
                    let (sym, value) = args.split_once(',').ok_or_else(|| {
                        AsmError::new(line, AsmErrorKind::BadDirective(rest.into()))
                    })?;
                    let sym = sym.trim();
                    let addr = parse_int(value.trim())
                        .filter(|v| (0..=DATA_ADDR_MAX as i64).contains(v))
                        .ok_or_else(|| {
                            AsmError::new(
                                line,
                                AsmErrorKind::AddressOutOfRange(value.trim().into()),
                            )
                        })?;
                    if !names.insert(sym.to_string()) {
                        return Err(AsmError::new(
                            line,
                            AsmErrorKind::DuplicateLabel(sym.into()),
                        ));
                    }
                    program.equates.push((sym.into(), addr as u16));
                }
                ".long" | ".int" => {
                    let bad = || AsmError::new(line, AsmErrorKind::BadDirective(rest.into()));
                    if section != Section::Data {
                        return Err(bad());
                    }
                    let mut words = Vec::new();
                    for v in args.split(',') {
                        let v = parse_int(v.trim()).ok_or_else(bad)?;
                        words.push(to_word(v).ok_or_else(bad)?);
                    }
                    program.data.push(DataEntry::Words(words));
                }
                ".zero" | ".space" => {
                    let bad = || AsmError::new(line, AsmErrorKind::BadDirective(rest.into()));
                    let bytes = parse_int(args.split(',').next().unwrap_or("").trim())
                        .filter(|b| *b >= 0 && b % 4 == 0)
                        .ok_or_else(bad)?;
                    if section != Section::Data {
                        return Err(bad());
                    }
                    program
                        .data
                        .push(DataEntry::Words(vec![0; bytes as usize / 4]));
                }
                _ if IGNORED_DIRECTIVES.contains(&name) || name.starts_with(".cfi_") => {}
                _ => return Err(AsmError::new(line, AsmErrorKind::BadDirective(name.into()))),
            }
            continue;
        }

        if section != Section::Text {
            return Err(AsmError::new(
                line,
                AsmErrorKind::Unsupported("instruction outside the text section".into()),
            ));
        }
        let stmts = parse_instruction(rest, line, opts)?;
        program.text.extend(stmts.into_iter().map(Item::Stmt));
    }
    Ok(program)
}

fn strip_comment(line: &str) -> &str {
    let end = line.find(['#', ';']).unwrap_or(line.len());
    &line[..end]
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '.' || c == '$'
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(is_ident_start)
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$')
}

fn split_label(s: &str) -> Option<(&str, &str)> {
    let (head, tail) = s.split_once(':')?;
    is_ident(head.trim_end()).then(|| (head.trim_end(), tail))
}

fn split_word(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim()),
        None => (s, ""),
    }
}

pub(crate) fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b.trim_start()),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse::<i64>().ok()?
    } else {
        return None;
    };
    Some(if neg { -v } else { v })
}

/// A 32-bit value, signed or unsigned.
pub(crate) fn to_word(v: i64) -> Option<u32> {
    if (i32::MIN as i64..=u32::MAX as i64).contains(&v) {
        Some(v as u32)
    } else {
        None
    }
}

pub(crate) fn parse_register(name: &str) -> Option<Reg> {
    const X86: [[&str; 2]; 8] = [
        ["eax", "rax"],
        ["ebx", "rbx"],
        ["ecx", "rcx"],
        ["edx", "rdx"],
        ["esi", "rsi"],
        ["edi", "rdi"],
        ["ebp", "rbp"],
        ["esp", "rsp"],
    ];
    let lower = name.to_ascii_lowercase();
    if let Some(i) = X86.iter().position(|names| names.contains(&lower.as_str())) {
        return Reg::new(i as u8);
    }
    if lower == "emt" {
        return Some(Reg::EMT);
    }
    let digits = lower.strip_prefix('r')?;
    let digits = digits.strip_suffix('d').unwrap_or(digits);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Reg::new(digits.parse().ok()?)
}

fn parse_memory(text: &str, line: usize) -> Result<MemRef, AsmError> {
    let malformed = || AsmError::new(line, AsmErrorKind::MalformedOperand(text.into()));
    let open = text.find('[').ok_or_else(malformed)?;
    let close = text.rfind(']').ok_or_else(malformed)?;
    if close < open || !text[close + 1..].trim().is_empty() {
        return Err(malformed());
    }
    let size = text[..open].trim().to_ascii_lowercase();
    let size: Vec<&str> = size.split_whitespace().collect();
    match size.as_slice() {
        [] | ["dword", "ptr"] => {}
        [w, "ptr"] => {
            return Err(AsmError::new(
                line,
                AsmErrorKind::Unsupported(alloc::format!("{w}-sized memory access")),
            ))
        }
        _ => return Err(malformed()),
    }

    let inner = text[open + 1..close].trim();
    let mut symbol: Option<String> = None;
    let mut offset = 0i64;
    let mut sign = 1i64;
    let mut term = String::new();
    let mut closed = false;
    let flush = |term: &mut String, sign: i64, symbol: &mut Option<String>, offset: &mut i64| {
        let t = term.trim();
        if t.is_empty() {
            return Err(malformed());
        }
        if let Some(v) = parse_int(t) {
            *offset += sign * v;
        } else if t.eq_ignore_ascii_case("rip") && sign == 1 {
            // Position-independent references name the symbol directly.
        } else if parse_register(t).is_some() {
            return Err(AsmError::new(
                line,
                AsmErrorKind::Unsupported("register-indirect addressing".into()),
            ));
        } else if is_ident(t) && symbol.is_none() && sign == 1 {
            *symbol = Some(t.into());
        } else {
            return Err(malformed());
        }
        term.clear();
        Ok(())
    };
    for c in inner.chars() {
        match c {
            '+' | '-' => {
                flush(&mut term, sign, &mut symbol, &mut offset)?;
                sign = if c == '-' { -1 } else { 1 };
                closed = false;
            }
            c if c.is_whitespace() => closed = !term.is_empty(),
            c => {
                if closed {
                    return Err(malformed());
                }
                term.push(c);
            }
        }
    }
    flush(&mut term, sign, &mut symbol, &mut offset)?;
    if symbol.is_none() && !(0..=DATA_ADDR_MAX as i64).contains(&offset) {
        return Err(AsmError::new(
            line,
            AsmErrorKind::AddressOutOfRange(text.into()),
        ));
    }
    Ok(MemRef { symbol, offset })
}

fn parse_operand(text: &str, line: usize, opts: &AsmOptions) -> Result<Operand, AsmError> {
    let text = text.trim();
    if text.contains('[') {
        return parse_memory(text, line).map(Operand::Mem);
    }
    if let Some(r) = parse_register(text) {
        if !opts.allow_reserved_registers && (r == Reg::EMT || r == Reg::SCRATCH) {
            return Err(AsmError::new(
                line,
                AsmErrorKind::ReservedRegister(text.into()),
            ));
        }
        return Ok(Operand::Reg(r));
    }
    if let Some(v) = parse_int(text) {
        return Ok(Operand::Imm(v));
    }
    if is_ident(text) {
        return Ok(Operand::Label(text.into()));
    }
    Err(AsmError::new(
        line,
        AsmErrorKind::MalformedOperand(text.into()),
    ))
}

fn jump_condition(name: &str) -> Option<Opcode> {
    Some(match name {
        "je" | "jz" => Opcode::Je,
        "jne" | "jnz" => Opcode::Jne,
        "jl" | "jnge" => Opcode::Jl,
        "jle" | "jng" => Opcode::Jle,
        "jg" | "jnle" => Opcode::Jg,
        "jge" | "jnl" => Opcode::Jge,
        _ => return None,
    })
}

fn alu_opcode(name: &str) -> Option<Opcode> {
    Some(match name {
        "add" => Opcode::Add,
        "sub" => Opcode::Sub,
        "imul" | "mul" => Opcode::Mul,
        "xor" => Opcode::Xor,
        "and" => Opcode::And,
        "or" => Opcode::Or,
        "shr" => Opcode::Shr,
        "shl" | "sal" => Opcode::Shl,
        _ => return None,
    })
}

fn parse_instruction(
    text: &str,
    line: usize,
    opts: &AsmOptions,
) -> Result<Vec<Statement>, AsmError> {
    let (name, args) = split_word(text);
    let name = name.to_ascii_lowercase();
    let operands: Vec<Operand> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|a| parse_operand(a, line, opts))
            .collect::<Result<_, _>>()?
    };
    let n = operands.len();
    let count_err = || {
        AsmError::new(
            line,
            AsmErrorKind::OperandCount {
                mnemonic: name.clone(),
                found: n,
            },
        )
    };
    let malformed =
        |o: &Operand| AsmError::new(line, AsmErrorKind::MalformedOperand(alloc::format!("{o}")));
    let writable = |o: &Operand| match o {
        Operand::Reg(_) | Operand::Mem(_) => Ok(()),
        other => Err(malformed(other)),
    };
    let value = |o: &Operand| match o {
        Operand::Label(_) => Err(malformed(o)),
        _ => Ok(()),
    };
    let label_or_addr = |o: &Operand| match o {
        Operand::Label(_) | Operand::Imm(_) => Ok(()),
        _ => Err(malformed(o)),
    };
    let stmt = |m: Mnemonic, ops: Vec<Operand>| Ok(vec![Statement::new(m, ops, line)]);

    if let Some(op) = alu_opcode(&name) {
        if name == "mul" && n != 2 {
            return Err(AsmError::new(
                line,
                AsmErrorKind::Unsupported("one-operand unsigned mul".into()),
            ));
        }
        if n == 3 {
            return Err(AsmError::new(
                line,
                AsmErrorKind::Unsupported("three-operand imul".into()),
            ));
        }
        if n != 2 {
            return Err(count_err());
        }
        writable(&operands[0])?;
        value(&operands[1])?;
        return stmt(Mnemonic::Alu(op), operands);
    }
    if let Some(cond) = jump_condition(&name) {
        return match n {
            1 => {
                if !matches!(operands[0], Operand::Label(_)) {
                    return Err(malformed(&operands[0]));
                }
                stmt(Mnemonic::Jcc(cond), operands)
            }
            2 => {
                value(&operands[0])?;
                value(&operands[1])?;
                stmt(Mnemonic::Jcc(cond), operands)
            }
            _ => Err(count_err()),
        };
    }
    match name.as_str() {
        "mov" => {
            if n != 2 {
                return Err(count_err());
            }
            writable(&operands[0])?;
            value(&operands[1])?;
            stmt(Mnemonic::Mov, operands)
        }
        "cmp" => {
            if n != 2 {
                return Err(count_err());
            }
            value(&operands[0])?;
            value(&operands[1])?;
            stmt(Mnemonic::Cmp, operands)
        }
        "test" => {
            if n != 2 {
                return Err(count_err());
            }
            match (&operands[0], &operands[1]) {
                (Operand::Reg(a), Operand::Reg(b)) if a == b => {
                    stmt(Mnemonic::Cmp, vec![Operand::Reg(*a), Operand::Imm(0)])
                }
                _ => Err(AsmError::new(
                    line,
                    AsmErrorKind::Unsupported("test other than `test r, r`".into()),
                )),
            }
        }
        "inc" | "dec" => {
            if n != 1 {
                return Err(count_err());
            }
            writable(&operands[0])?;
            let op = if name == "inc" {
                Opcode::Add
            } else {
                Opcode::Sub
            };
            stmt(
                Mnemonic::Alu(op),
                vec![operands[0].clone(), Operand::Imm(1)],
            )
        }
        "jmp" => {
            if n != 1 || !matches!(operands[0], Operand::Label(_)) {
                return Err(count_err());
            }
            stmt(Mnemonic::Jmp, operands)
        }
        "call" => match n {
            0 => stmt(Mnemonic::Call, operands),
            1 if matches!(operands[0], Operand::Label(_)) => stmt(Mnemonic::Call, operands),
            1 => Err(AsmError::new(
                line,
                AsmErrorKind::Unsupported("indirect call".into()),
            )),
            _ => Err(count_err()),
        },
        "ret" | "retq" | "retl" => {
            if n != 0 {
                return Err(count_err());
            }
            stmt(Mnemonic::Ret, operands)
        }
        "jad" => {
            if n != 1 {
                return Err(count_err());
            }
            label_or_addr(&operands[0])?;
            stmt(Mnemonic::Jad, operands)
        }
        "juc" => {
            // The operand fields of juc are ignored; `juc r0, r0` is accepted.
            if n != 0 && n != 2 {
                return Err(count_err());
            }
            stmt(Mnemonic::Juc, Vec::new())
        }
        "nop" | "noop" => {
            if n != 0 {
                return Err(count_err());
            }
            stmt(Mnemonic::Noop, operands)
        }
        _ => Err(AsmError::new(
            line,
            AsmErrorKind::UnknownMnemonic(name.clone()),
        )),
    }
}
