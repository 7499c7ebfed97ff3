use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REGS: [&str; 6] = ["eax", "ebx", "ecx", "edx", "esi", "edi"];
const ALU: [&str; 8] = ["add", "sub", "imul", "xor", "and", "or", "shl", "shr"];
const JCC: [&str; 6] = ["je", "jne", "jl", "jle", "jg", "jge"];

/// Structured random program: straight-line ALU and memory work, forward
/// branches, one counted loop and calls into a leaf function, ending in a
/// jump to itself.
pub fn program(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(".data\narr:\n");
    for _ in 0..8 {
        out += &format!(".long {}\n", rng.gen_range(-50i32..50));
    }
    out += ".text\n_start:\n";
    let mut labels = 0;
    let body = |rng: &mut ChaCha8Rng, out: &mut String, lo: usize, hi: usize| {
        for _ in 0..rng.gen_range(lo..hi) {
            let r = REGS[rng.gen_range(0..REGS.len())];
            let s = REGS[rng.gen_range(0..REGS.len())];
            let slot = rng.gen_range(0..8) * 4;
            match rng.gen_range(0..6) {
                0 => *out += &format!("mov {r}, dword ptr [arr + {slot}]\n"),
                1 => *out += &format!("mov dword ptr [arr + {slot}], {r}\n"),
                2 => *out += &format!("mov {r}, {}\n", rng.gen_range(-9..100)),
                3 => *out += &format!("add {r}, dword ptr [arr + {slot}]\n"),
                _ => {
                    let op = ALU[rng.gen_range(0..ALU.len())];
                    if rng.gen_bool(0.5) || op.starts_with("sh") {
                        *out += &format!("{op} {r}, {}\n", rng.gen_range(0..7));
                    } else {
                        *out += &format!("{op} {r}, {s}\n");
                    }
                }
            }
        }
    };
    for _ in 0..rng.gen_range(2..6) {
        match rng.gen_range(0..4) {
            0 => body(&mut rng, &mut out, 1, 6),
            1 => {
                let r = REGS[rng.gen_range(0..REGS.len())];
                let jcc = JCC[rng.gen_range(0..JCC.len())];
                labels += 1;
                out += &format!("cmp {r}, {}\n{jcc} .L{labels}\n", rng.gen_range(-5..30));
                body(&mut rng, &mut out, 0, 4);
                out += &format!(".L{labels}:\n");
            }
            2 => {
                labels += 1;
                out += &format!("mov ebp, {}\n.L{labels}:\n", rng.gen_range(1..5));
                body(&mut rng, &mut out, 1, 4);
                out += &format!("sub ebp, 1\ncmp ebp, 0\njg .L{labels}\n");
            }
            _ => out += "call leaf\n",
        }
    }
    out += ".Lend:\njmp .Lend\nleaf:\n";
    body(&mut rng, &mut out, 1, 4);
    out += "ret\n";
    out
}
