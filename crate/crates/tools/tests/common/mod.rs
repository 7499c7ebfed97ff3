//! Random structured programs in the compiler's assembly dialect, and an
//! interpreter that runs them with x86 semantics without going through the
//! assembler.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

pub const REGS: [&str; 7] = ["eax", "ebx", "ecx", "edx", "esi", "edi", "ebp"];
/// The counted-loop register; loop bodies never write it.
pub const LOOP_REG: usize = 6;
pub const DATA_BASE: u16 = 0x020;
pub const ARR_WORDS: usize = 8;

#[derive(Clone, Copy, Debug)]
pub enum Alu {
    Add,
    Sub,
    Imul,
    Xor,
    And,
    Or,
    Shl,
    Shr,
}

impl Alu {
    const ALL: [Alu; 8] = [
        Alu::Add,
        Alu::Sub,
        Alu::Imul,
        Alu::Xor,
        Alu::And,
        Alu::Or,
        Alu::Shl,
        Alu::Shr,
    ];

    fn name(self) -> &'static str {
        match self {
            Alu::Add => "add",
            Alu::Sub => "sub",
            Alu::Imul => "imul",
            Alu::Xor => "xor",
            Alu::And => "and",
            Alu::Or => "or",
            Alu::Shl => "shl",
            Alu::Shr => "shr",
        }
    }

    fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            Alu::Add => a.wrapping_add(b),
            Alu::Sub => a.wrapping_sub(b),
            Alu::Imul => (a as i32).wrapping_mul(b as i32) as u32,
            Alu::Xor => a ^ b,
            Alu::And => a & b,
            Alu::Or => a | b,
            Alu::Shl => a << (b & 31),
            Alu::Shr => a >> (b & 31),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Cond {
    E,
    Ne,
    L,
    Le,
    G,
    Ge,
}

impl Cond {
    const ALL: [Cond; 6] = [Cond::E, Cond::Ne, Cond::L, Cond::Le, Cond::G, Cond::Ge];

    fn name(self) -> &'static str {
        match self {
            Cond::E => "je",
            Cond::Ne => "jne",
            Cond::L => "jl",
            Cond::Le => "jle",
            Cond::G => "jg",
            Cond::Ge => "jge",
        }
    }

    fn holds(self, a: u32, b: u32) -> bool {
        let (a, b) = (a as i32, b as i32);
        match self {
            Cond::E => a == b,
            Cond::Ne => a != b,
            Cond::L => a < b,
            Cond::Le => a <= b,
            Cond::G => a > b,
            Cond::Ge => a >= b,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Mem {
    /// Word of the `arr` array.
    Arr(usize),
    /// Absolute data address.
    Abs(u16),
}

impl Mem {
    fn addr(self) -> u16 {
        match self {
            Mem::Arr(i) => DATA_BASE + i as u16,
            Mem::Abs(a) => a,
        }
    }

    fn render(self) -> String {
        match self {
            Mem::Arr(0) => "dword ptr [arr]".into(),
            Mem::Arr(i) => format!("dword ptr [arr + {}]", 4 * i),
            Mem::Abs(a) => format!("dword ptr [{a:#05x}]"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Src {
    Reg(usize),
    Imm(i32),
    Mem(Mem),
}

impl Src {
    fn render(self) -> String {
        match self {
            Src::Reg(r) => REGS[r].into(),
            Src::Imm(v) => v.to_string(),
            Src::Mem(m) => m.render(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Stmt {
    Load(usize, Src),
    Store(Mem, usize),
    Alu(Alu, usize, Src),
    /// ALU operation with a memory destination.
    AluMem(Alu, Mem, usize),
    /// Runs the body unless the condition holds.
    Skip {
        cond: Cond,
        reg: usize,
        rhs: Src,
        body: Vec<Stmt>,
    },
    /// Runs the body `count` times, counting down in the loop register.
    Loop {
        count: u32,
        body: Vec<Stmt>,
    },
    CallLeaf,
}

#[derive(Clone, Debug)]
pub struct Program {
    pub arr: Vec<i32>,
    pub main: Vec<Stmt>,
    pub leaf: Vec<Stmt>,
}

#[derive(Clone, Copy, Debug)]
pub struct GenOptions {
    /// Also touch absolute addresses across the protected range, the shared
    /// window (writes only) and the UART.
    pub absolute_addresses: bool,
    pub max_blocks: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            absolute_addresses: false,
            max_blocks: 6,
        }
    }
}

/// Protected words clear of the devices, `arr` and the constant pool.
fn protected_addr(rng: &mut impl Rng) -> u16 {
    if rng.gen_bool(0.3) {
        rng.gen_range(0x000..0x010)
    } else {
        rng.gen_range(0x100..0x1C0)
    }
}

fn readable(rng: &mut impl Rng, opts: &GenOptions) -> Mem {
    if opts.absolute_addresses && rng.gen_bool(0.4) {
        // Sampling ports read zero in every run; the partition id is fixed
        // per partition.
        match rng.gen_range(0..6) {
            0 => Mem::Abs(rng.gen_range(0x010..0x018)),
            1 => Mem::Abs(0x01A),
            _ => Mem::Abs(protected_addr(rng)),
        }
    } else {
        Mem::Arr(rng.gen_range(0..ARR_WORDS))
    }
}

fn writable(rng: &mut impl Rng, opts: &GenOptions) -> Mem {
    if opts.absolute_addresses && rng.gen_bool(0.4) {
        match rng.gen_range(0..6) {
            0 => Mem::Abs(0x018),
            1 => Mem::Abs(rng.gen_range(0x1C0..0x200)),
            _ => Mem::Abs(protected_addr(rng)),
        }
    } else {
        Mem::Arr(rng.gen_range(0..ARR_WORDS))
    }
}

fn src(rng: &mut impl Rng, opts: &GenOptions) -> Src {
    match rng.gen_range(0..3) {
        0 => Src::Reg(rng.gen_range(0..=LOOP_REG)),
        1 => Src::Imm(rng.gen_range(-20..200)),
        _ => Src::Mem(readable(rng, opts)),
    }
}

fn simple(rng: &mut impl Rng, opts: &GenOptions) -> Stmt {
    let r = rng.gen_range(0..LOOP_REG);
    match rng.gen_range(0..8) {
        0 | 1 => Stmt::Load(r, src(rng, opts)),
        2 => Stmt::Store(writable(rng, opts), rng.gen_range(0..=LOOP_REG)),
        3 => {
            let op = *[Alu::Add, Alu::Sub, Alu::Xor, Alu::And, Alu::Or]
                .choose(rng)
                .unwrap();
            // Memory destinations stay inside the array so that later
            // reads see deterministic values.
            Stmt::AluMem(
                op,
                Mem::Arr(rng.gen_range(0..ARR_WORDS)),
                rng.gen_range(0..=LOOP_REG),
            )
        }
        _ => {
            let op = *Alu::ALL.choose(rng).unwrap();
            let rhs = match op {
                Alu::Shl | Alu::Shr => Src::Imm(rng.gen_range(0..8)),
                _ => src(rng, opts),
            };
            Stmt::Alu(op, r, rhs)
        }
    }
}

fn block(rng: &mut impl Rng, opts: &GenOptions, len: std::ops::Range<usize>) -> Vec<Stmt> {
    let n = rng.gen_range(len);
    (0..n).map(|_| simple(rng, opts)).collect()
}

fn skip(rng: &mut impl Rng, opts: &GenOptions, body: Vec<Stmt>) -> Stmt {
    let rhs = match rng.gen_range(0..3) {
        0 => Src::Reg(rng.gen_range(0..=LOOP_REG)),
        1 => Src::Imm(rng.gen_range(-10..60)),
        _ => Src::Mem(readable(rng, opts)),
    };
    Stmt::Skip {
        cond: *Cond::ALL.choose(rng).unwrap(),
        reg: rng.gen_range(0..=LOOP_REG),
        rhs,
        body,
    }
}

pub fn generate(rng: &mut impl Rng, opts: &GenOptions) -> Program {
    let arr = (0..ARR_WORDS).map(|_| rng.gen_range(-100..100)).collect();
    let mut main = Vec::new();
    for _ in 0..rng.gen_range(1..=opts.max_blocks) {
        match rng.gen_range(0..5) {
            0 => main.extend(block(rng, opts, 1..6)),
            1 => {
                let body = block(rng, opts, 0..4);
                main.push(skip(rng, opts, body));
            }
            2 => {
                let mut body = block(rng, opts, 1..4);
                if rng.gen_bool(0.3) {
                    body.push(Stmt::CallLeaf);
                }
                if rng.gen_bool(0.3) {
                    let inner = block(rng, opts, 0..3);
                    body.push(skip(rng, opts, inner));
                }
                main.push(Stmt::Loop {
                    count: rng.gen_range(1..5),
                    body,
                });
            }
            _ => main.push(Stmt::CallLeaf),
        }
    }
    let mut leaf = block(rng, opts, 1..4);
    if rng.gen_bool(0.5) {
        let body = block(rng, opts, 0..3);
        leaf.push(skip(rng, opts, body));
    }
    Program { arr, main, leaf }
}

fn render_stmts(stmts: &[Stmt], labels: &mut usize, out: &mut String) {
    for s in stmts {
        match s {
            Stmt::Load(r, v) => {
                let _ = writeln!(out, "\tmov\t{}, {}", REGS[*r], v.render());
            }
            Stmt::Store(m, r) => {
                let _ = writeln!(out, "\tmov\t{}, {}", m.render(), REGS[*r]);
            }
            Stmt::Alu(op, r, v) => {
                let _ = writeln!(out, "\t{}\t{}, {}", op.name(), REGS[*r], v.render());
            }
            Stmt::AluMem(op, m, r) => {
                let _ = writeln!(out, "\t{}\t{}, {}", op.name(), m.render(), REGS[*r]);
            }
            Stmt::Skip {
                cond,
                reg,
                rhs,
                body,
            } => {
                *labels += 1;
                let l = *labels;
                let _ = writeln!(
                    out,
                    "\tcmp\t{}, {}\n\t{}\t.LBB0_{l}",
                    REGS[*reg],
                    rhs.render(),
                    cond.name()
                );
                render_stmts(body, labels, out);
                let _ = writeln!(out, ".LBB0_{l}:");
            }
            Stmt::Loop { count, body } => {
                *labels += 1;
                let l = *labels;
                let _ = writeln!(out, "\tmov\t{}, {count}\n.LBB0_{l}:", REGS[LOOP_REG]);
                render_stmts(body, labels, out);
                let r = REGS[LOOP_REG];
                let _ = writeln!(out, "\tdec\t{r}\n\ttest\t{r}, {r}\n\tjg\t.LBB0_{l}");
            }
            Stmt::CallLeaf => out.push_str("\tcall\tleaf\n"),
        }
    }
}

impl Program {
    pub fn source(&self) -> String {
        let mut out = String::from("\t.text\n\t.intel_syntax noprefix\n_start:\n");
        let mut labels = 0;
        render_stmts(&self.main, &mut labels, &mut out);
        out.push_str(".Lhalt:\n\tjmp\t.Lhalt\nleaf:\n");
        render_stmts(&self.leaf, &mut labels, &mut out);
        out.push_str("\tret\n\n\t.data\narr:\n");
        for v in &self.arr {
            let _ = writeln!(out, "\t.long\t{v}");
        }
        out
    }
}

/// Final state of an interpreted program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub regs: [u32; REGS.len()],
    /// Every protected word written or initialised.
    pub memory: BTreeMap<u16, u32>,
    pub uart: Vec<u32>,
}

struct Interp {
    regs: [u32; REGS.len()],
    memory: BTreeMap<u16, u32>,
    uart: Vec<u32>,
    partition: u32,
}

impl Interp {
    fn read(&self, m: Mem) -> u32 {
        let a = m.addr();
        match a {
            0x010..=0x017 => 0,
            0x01A => self.partition,
            _ => self.memory.get(&a).copied().unwrap_or(0),
        }
    }

    fn write(&mut self, m: Mem, v: u32) {
        match m.addr() {
            0x018 => self.uart.push(v),
            0x1C0..=0x1FF => {}
            a => {
                self.memory.insert(a, v);
            }
        }
    }

    fn value(&self, s: Src) -> u32 {
        match s {
            Src::Reg(r) => self.regs[r],
            Src::Imm(v) => v as u32,
            Src::Mem(m) => self.read(m),
        }
    }

    fn run(&mut self, stmts: &[Stmt], leaf: &[Stmt]) {
        for s in stmts {
            match s {
                Stmt::Load(r, v) => self.regs[*r] = self.value(*v),
                Stmt::Store(m, r) => self.write(*m, self.regs[*r]),
                Stmt::Alu(op, r, v) => self.regs[*r] = op.apply(self.regs[*r], self.value(*v)),
                Stmt::AluMem(op, m, r) => {
                    let v = op.apply(self.read(*m), self.regs[*r]);
                    self.write(*m, v);
                }
                Stmt::Skip {
                    cond,
                    reg,
                    rhs,
                    body,
                } => {
                    if !cond.holds(self.regs[*reg], self.value(*rhs)) {
                        self.run(body, leaf);
                    }
                }
                Stmt::Loop { count, body } => {
                    self.regs[LOOP_REG] = *count;
                    loop {
                        self.run(body, leaf);
                        self.regs[LOOP_REG] = self.regs[LOOP_REG].wrapping_sub(1);
                        if self.regs[LOOP_REG] as i32 <= 0 {
                            break;
                        }
                    }
                }
                Stmt::CallLeaf => self.run(leaf, &[]),
            }
        }
    }
}

/// Runs the program the way an x86 core would, for `partition`.
pub fn interpret(p: &Program, partition: u32) -> Outcome {
    let mut it = Interp {
        regs: [0; REGS.len()],
        memory: p
            .arr
            .iter()
            .enumerate()
            .map(|(i, v)| (DATA_BASE + i as u16, *v as u32))
            .collect(),
        uart: Vec::new(),
        partition,
    };
    it.run(&p.main, &p.leaf);
    Outcome {
        regs: it.regs,
        memory: it.memory,
        uart: it.uart,
    }
}
