use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn aero(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aero"))
        .args(args)
        .output()
        .expect("aero runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn asset(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("assets")
        .join(name)
        .display()
        .to_string()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

const TWO_SLOTS: &str = "
switch_window = 10

[partition.0]
period_cycles = 200
exec_cycles = 80
offset_cycles = 10

[partition.1]
period_cycles = 200
exec_cycles = 80
offset_cycles = 90
";

#[test]
fn asm_writes_three_artifacts() {
    let dir = TempDir::new().unwrap();
    let base = dir.path().join("bench");
    let o = aero(&["asm", &asset("benchmark.s"), "-o", base.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bin = fs::read(base.with_extension("bin")).unwrap();
    assert_eq!(bin.len(), 2 * 30);
    let dat = fs::read(base.with_extension("dat")).unwrap();
    assert_eq!(u32::from_le_bytes(dat[0..4].try_into().unwrap()), 4);
    let lst = fs::read_to_string(base.with_extension("lst")).unwrap();
    assert!(lst.contains("jad"), "{lst}");
}

#[test]
fn asm_of_empty_file_is_empty() {
    let dir = TempDir::new().unwrap();
    let src = write(&dir, "empty.s", "");
    let base = dir.path().join("empty");
    let o = aero(&["asm", &src, "-o", base.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read(base.with_extension("bin")).unwrap().is_empty());
}

#[test]
fn asm_reports_line_of_unknown_mnemonic() {
    let dir = TempDir::new().unwrap();
    let src = write(&dir, "bad.s", "_start:\n\tmov eax, ebx\n\tcpuid\n");
    let o = aero(&["asm", &src, "-o", dir.path().join("bad").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("cpuid"), "{err}");
}

#[test]
fn run_with_zero_horizon_writes_empty_trace() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.csv");
    let o = aero(&[
        "run",
        "-c",
        &asset("three_partitions.toml"),
        "--horizon",
        "0",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(stdout(&o).contains("simulated 0 cycles"));
}

#[test]
fn run_refuses_conflicting_schedule() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "clash.toml",
        "[partition.0]\nperiod_cycles = 100\nexec_cycles = 20\noffset_cycles = 10\n\
         [partition.1]\nperiod_cycles = 100\nexec_cycles = 20\noffset_cycles = 10\n",
    );
    let o = aero(&["run", "-c", &cfg, "--horizon", "1000"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error"), "{}", stderr(&o));
}

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let ok = write(&dir, "ok.toml", TWO_SLOTS);
    let clash = write(
        &dir,
        "clash.toml",
        "[partition.0]\nperiod_cycles = 100\nexec_cycles = 20\noffset_cycles = 10\n\
         [partition.1]\nperiod_cycles = 100\nexec_cycles = 20\noffset_cycles = 10\n",
    );
    let bad = write(
        &dir,
        "bad.toml",
        "[partition.0]\nperiod_cycles = 100\nexec_cycles = 95\noffset_cycles = 10\n",
    );
    let o = aero(&["validate", &ok]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("grants repeat every"));
    assert_eq!(aero(&["validate", &clash]).status.code(), Some(1));
    assert_eq!(aero(&["validate", &bad]).status.code(), Some(2));
    let o = aero(&["validate", &asset("three_partitions.toml")]);
    assert!(
        stdout(&o).contains("grants repeat every 1600030"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn wcet_in_milliseconds() {
    let o = aero(&[
        "wcet", "--tau-a0", "7.99926", "--tau-p", "4", "--ep", "16.0004", "--ms",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("effective WCET: 19.99966 ms (999983 cycles)"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn wcet_csv_and_identity() {
    let o = aero(&[
        "wcet", "--tau-a0", "150000", "--tau-p", "200000", "--ep", "800020", "--csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("tau_a0_cycles,tau_p_cycles,e_p_cycles,accesses,effective_cycles,effective_ms")
    );
    assert!(lines
        .next()
        .unwrap()
        .starts_with("150000,200000,800020,1,150000,"));
}

#[test]
fn wcet_reads_schedule() {
    let o = aero(&[
        "wcet",
        "--tau-a0",
        "399963",
        "-c",
        &asset("three_partitions.toml"),
        "--partition",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("accesses"), "{}", stdout(&o));
}

#[test]
fn wcet_rejects_zero_period() {
    let o = aero(&["wcet", "--tau-a0", "100", "--tau-p", "0", "--ep", "100"]);
    assert!(!o.status.success());
}

#[test]
fn traces_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let traces: Vec<PathBuf> = (0..2)
        .map(|i| dir.path().join(format!("t{i}.csv")))
        .collect();
    for t in &traces {
        let o = aero(&[
            "run",
            "-c",
            &asset("three_partitions.toml"),
            "--horizon",
            "300000",
            "--trace",
            t.to_str().unwrap(),
            "--level",
            "retire",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(&traces[0]).unwrap();
    assert!(a.len() > 1000);
    assert_eq!(a, fs::read(&traces[1]).unwrap());
}

#[test]
fn several_configs_run_side_by_side() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "two.toml", TWO_SLOTS);
    let o = aero(&[
        "run",
        "-c",
        &asset("three_partitions.toml"),
        "-c",
        &cfg,
        "--horizon",
        "1000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("== ").count(), 2);
}

#[test]
fn timeline_matches_grant_table() {
    let o = aero(&[
        "timeline",
        "-c",
        &asset("three_partitions.toml"),
        "--horizon",
        "2400040",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<Vec<String>> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().take(3).map(String::from).collect())
        .collect();
    let want = [
        ["p0", "0", "200000"],
        ["p1", "200010", "800010"],
        ["p0", "800020", "1000020"],
        ["p2", "1000030", "1400030"],
        ["idle", "1400040", "1600030"],
        ["p0", "1600030", "1800030"],
        ["p1", "1800040", "2400040"],
    ];
    assert_eq!(rows, want.map(|r| r.map(String::from).to_vec()).to_vec());
}

#[test]
fn measure_pairs_markers() {
    let dir = TempDir::new().unwrap();
    let src = write(
        &dir,
        "loop.s",
        "\t.set\tuart, 0x018\n_start:\n\tmov\tdword ptr [uart], eax\n\tmov\tecx, 10\n.LBB0_1:\n\
         \tdec\tecx\n\ttest\tecx, ecx\n\tjg\t.LBB0_1\n\tmov\tdword ptr [uart], eax\n.Lend:\n\tjmp\t.Lend\n",
    );
    let trace = dir.path().join("t.csv");
    let cfg = write(
        &dir,
        "solo.toml",
        &format!(
            "horizon_cycles = 2000\ntrace = \"{}\"\n[partition.0]\nperiod_cycles = 100010\n\
             exec_cycles = 100000\noffset_cycles = 10\nsource = \"{src}\"\n",
            trace.display()
        ),
    );
    let o = aero(&["run", "-c", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = aero(&["measure", trace.to_str().unwrap(), "--partition", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("iterations 1\n"), "{out}");
}

#[test]
fn unknown_config_key_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "typo.toml", "[partition.0]\nperiod = 100\n");
    let o = aero(&["validate", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("period"), "{}", stderr(&o));
}
