use std::path::Path;
use std::process::{Command, Output};

use leaksense::calibration::LookupTable;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leaksense"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn small_config(dir: &Path, extra: &str) {
    std::fs::write(dir.join("run.cfg"), format!("trials = 20\n{extra}")).unwrap();
}

#[test]
fn sweep_single_point() {
    let d = tempfile::tempdir().unwrap();
    small_config(
        d.path(),
        "sweep.vdd = 0.3\nsweep.temperature = 300\nsweep.depth = 64\nsweep.r01 = 0.5\n",
    );
    let out = run(d.path(), &["sweep", "run.cfg", "--out", "o"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(d.path().join("o/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("vdd,temperature,depth,r01,"));
    assert!(!csv.contains('\r'));
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}

#[test]
fn calibrate_orders_invalid_before_valid() {
    let d = tempfile::tempdir().unwrap();
    small_config(d.path(), "");
    let out = run(d.path(), &["calibrate", "run.cfg", "--out", "o"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("VDDMIN = 0.400 V"));
    let text = std::fs::read_to_string(d.path().join("o/lookup.tsv")).unwrap();
    let t = LookupTable::from_tsv(&text, "lookup.tsv").unwrap();
    let first_valid = t.rows.iter().position(|r| r.is_valid()).unwrap();
    assert!(first_valid > 0);
    assert!(t.rows[first_valid..].iter().all(|r| r.is_valid()));
    assert_eq!(t.header.seed, 1);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    small_config(d.path(), "");
    // Missing table.
    let out = run(d.path(), &["simulate", "run.cfg", "--table", "nope.tsv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.tsv"));
    // Bad configuration value.
    std::fs::write(d.path().join("bad.cfg"), "env.vdd = -0.1\n").unwrap();
    let out = run(d.path(), &["clock", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("env.vdd"));
    // A table row whose sensing count is far too short misreads every '0'.
    let table =
        "# config_sha256\tx\n# seed\t1\n# temperature_K\t300\n# counter_max\t1023\n# margin\t1.2\n\
                 vdd_mV\tc_l\tc_r\tbeta_ppm\tsaturated\n400\t700\t1\t1000\t0\n";
    std::fs::write(d.path().join("short.tsv"), table).unwrap();
    let out = run(
        d.path(),
        &[
            "simulate",
            "run.cfg",
            "--table",
            "short.tsv",
            "--out",
            "o",
            "--expect-clean",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = run(
        d.path(),
        &["simulate", "run.cfg", "--table", "short.tsv", "--out", "o"],
    );
    assert_eq!(out.status.code(), Some(0));
    // Supply below VDDMIN.
    std::fs::write(d.path().join("low.cfg"), "trials = 20\nenv.vdd = 0.25\n").unwrap();
    let invalid = table.replace("400\t700\t1\t1000\t0", "250\t11\t-1\t20000000\t0");
    std::fs::write(d.path().join("low.tsv"), invalid).unwrap();
    let out = run(
        d.path(),
        &["simulate", "low.cfg", "--table", "low.tsv", "--out", "o"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("VDDMIN"));
}

#[test]
fn simulate_with_trace() {
    let d = tempfile::tempdir().unwrap();
    small_config(d.path(), "read.pattern = zeros\n");
    assert!(run(d.path(), &["calibrate", "run.cfg", "--out", "o"])
        .status
        .success());
    std::fs::write(
        d.path().join("t.txt"),
        "R 1 3 0000000000000000\nR 2 255 0000000000000000\n",
    )
    .unwrap();
    let args = [
        "simulate",
        "run.cfg",
        "--table",
        "o/lookup.tsv",
        "--trace",
        "t.txt",
        "--out",
        "o",
        "--per-read",
        "--expect-clean",
    ];
    let out = run(d.path(), &args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rep = std::fs::read_to_string(d.path().join("o/read_report.tsv")).unwrap();
    assert!(rep.contains("reads\t2\n"));
    assert!(rep.contains("bit_errors\t0\n"));
    let reads = std::fs::read_to_string(d.path().join("o/reads.csv")).unwrap();
    assert_eq!(reads.lines().count(), 3);
    assert!(reads.lines().nth(2).unwrap().starts_with("1,2,255,"));
}

#[test]
fn env_override_applies() {
    let d = tempfile::tempdir().unwrap();
    small_config(d.path(), "");
    let out = Command::new(env!("CARGO_BIN_EXE_leaksense"))
        .args(["clock", "run.cfg", "--out", "o"])
        .current_dir(d.path())
        .env("LEAKSENSE_CLOCK_VDD", "0.3,0.35")
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(d.path().join("o/clock.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("config_sha256"));
}
