use aero_core::cpu::{reference_execute, RefOptions};
use aero_core::{assemble, AsmOptions, PartitionId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{generate, interpret, GenOptions, REGS};

fn check(seed: u64, opts: GenOptions, partition: u8) -> Result<(), TestCaseError> {
    let prog = generate(&mut ChaCha8Rng::seed_from_u64(seed), &opts);
    let src = prog.source();
    let asm = assemble(&src, &AsmOptions::default())
        .map_err(|e| TestCaseError::fail(format!("{e}\n{src}")))?;
    let p = PartitionId::new(partition).unwrap();
    let got = reference_execute(
        &asm.image(),
        &RefOptions {
            partition: p,
            ..Default::default()
        },
    )
    .map_err(|e| TestCaseError::fail(format!("{e}\n{src}")))?;
    let want = interpret(&prog, partition as u32);
    prop_assert_eq!(&got.state.regs[..REGS.len()], &want.regs[..], "{}", src);
    for (&addr, &v) in &want.memory {
        prop_assert_eq!(
            got.state.data[addr as usize],
            v,
            "word {:#05x}\n{}",
            addr,
            src
        );
    }
    prop_assert_eq!(got.uart, want.uart, "{}", src);
    Ok(())
}

proptest! {
    #[test]
    fn assembled_code_computes_what_x86_would(seed in any::<u64>()) {
        check(seed, GenOptions::default(), 0)?;
    }

    #[test]
    fn absolute_addresses_and_devices(seed in any::<u64>(), partition in 0u8..3) {
        check(seed, GenOptions { absolute_addresses: true, ..Default::default() }, partition)?;
    }
}
