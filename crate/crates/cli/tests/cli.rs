//! End-to-end runs of the binary: every subcommand, the config/flag merge,
//! and the verify gate's exit code.

use std::path::PathBuf;
use std::process::{Command, Output};

use ipde::harness::{manufactured_run, rate_report, ManufacturedCase};
use ipde::{builtin, SchemeConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ipde"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ipde-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir.join(name)
}

#[test]
fn kernels_dump_is_an_ordered_nonnegative_table() {
    let out = run(&["kernels", "--model", "tempered_stable", "--dx", "0.1"]);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,z_n,weight"));
    let mut prev_n = i64::MIN;
    let mut prev_z = f64::NEG_INFINITY;
    let mut saw_zero = false;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 3, "row {line}");
        let n: i64 = cols[0].parse().expect("lattice index");
        let z: f64 = cols[1].parse().expect("lattice point");
        let w: f64 = cols[2].parse().expect("weight");
        assert!(n > prev_n, "indices must increase: {line}");
        assert!(z > prev_z, "points must increase: {line}");
        assert!(w >= 0.0 && w.is_finite(), "weight must be a nonnegative number: {line}");
        saw_zero |= n == 0;
        prev_n = n;
        prev_z = z;
    }
    assert!(saw_zero, "the center row is part of the dump");
}

#[test]
fn kernels_dump_rejects_a_missing_kernel() {
    let out = run(&["kernels", "--model", "none"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("needs a kernel id"), "stderr: {err}");
}

#[test]
fn solve_writes_the_field_and_per_step_diagnostics() {
    let csv = scratch("solve.csv");
    let out = run(&[
        "solve",
        "--model",
        "two_controls",
        "--dx",
        "0.2",
        "--theta",
        "1",
        "--vartheta",
        "1",
        "--dt",
        "0.05",
        "--out",
        csv.to_str().unwrap(),
    ]);
    stdout(&out);
    let text = std::fs::read_to_string(&csv).expect("output file");
    let blocks: Vec<&str> = text.split("\n\n").collect();
    assert_eq!(blocks.len(), 2, "field block and diagnostics block");
    let field: Vec<&str> = blocks[0].lines().collect();
    assert_eq!(field[0], "node,x0,value,active_control");
    assert_eq!(field.len(), 1 + 21, "21 nodes on [-2, 2] at dx 0.2");
    for row in &field[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert!(cols[3] == "hold" || cols[3] == "push", "control label: {row}");
        let v: f64 = cols[2].parse().expect("value");
        assert!(v.is_finite());
    }
    let diag: Vec<&str> = blocks[1].lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(diag[0], "step,t,sup_norm,cfl_bracket_max,fp_iterations,fp_residual");
    assert_eq!(diag.len(), 1 + 10, "horizon 0.5 at dt 0.05");
}

#[test]
fn solve_rejects_an_unknown_model() {
    let out = run(&["solve", "--model", "nope"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown model"), "stderr: {err}");
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let path = scratch("override.toml");
    std::fs::write(
        &path,
        "[problem]\nmodel = \"heat\"\nhorizon = 0.25\n\n[lattice]\ndx = 0.5\n\n[kernels]\nmodel = \"none\"\n",
    )
    .expect("config written");
    let base = stdout(&run(&["solve", "--config", path.to_str().unwrap()]));
    assert!(base.lines().nth(1).unwrap().starts_with("0,-2.000000000000e0,"));
    assert!(base.contains("\n1,-1.500000000000e0,"), "dx 0.5 from the file");
    let overridden =
        stdout(&run(&["solve", "--config", path.to_str().unwrap(), "--dx", "0.25"]));
    assert!(overridden.contains("\n1,-1.750000000000e0,"), "dx 0.25 from the flag");
}

#[test]
fn config_rejects_unknown_keys() {
    let path = scratch("typo.toml");
    std::fs::write(&path, "[problem]\nmodle = \"heat\"\n").expect("config written");
    let out = run(&["solve", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn stencil_dump_ends_with_the_diagonal_mass() {
    let text = stdout(&run(&["stencil", "--model", "jump_diffusion", "--dx", "0.25"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "target,x0,weight");
    let last = lines.last().unwrap();
    assert!(last.starts_with("diag,"), "last row: {last}");
    let diag: f64 = last.rsplit(',').next().unwrap().parse().expect("diag mass");
    let mut total = 0.0;
    for row in &lines[1..lines.len() - 1] {
        let w: f64 = row.rsplit(',').next().unwrap().parse().expect("weight");
        assert!(w >= 0.0, "monotone row: {row}");
        total += w;
    }
    assert!(
        total <= diag + 1e-12 * diag.max(1.0),
        "off-diagonal mass {total} within the diagonal {diag}"
    );
}

#[test]
fn stencil_local_operator_is_three_point_here() {
    let text = stdout(&run(&[
        "stencil", "--model", "heat", "--kernel", "none", "--dx", "0.25", "--op", "l",
    ]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "header, two neighbors, diag: {text}");
    let w: f64 = lines[1].rsplit(',').next().unwrap().parse().expect("weight");
    assert!((w - 8.0).abs() < 1e-9, "a / dx^2 with a = sigma^2 / 2 = 0.5: {text}");
}

#[test]
fn convergence_report_matches_the_library_byte_for_byte() {
    let text = stdout(&run(&[
        "convergence",
        "--kernel",
        "frac_laplace_trunc",
        "--levels",
        "4,5,6",
    ]));
    let case = ManufacturedCase {
        kernel: builtin("frac_laplace_trunc").unwrap(),
        a: 0.1,
        b: 0.3,
        c: 0.2,
        horizon: 0.5,
    };
    let records = manufactured_run(&case, &[4, 5, 6], &SchemeConfig::default()).unwrap();
    let expected = rate_report(&records, Some(0.2)).unwrap();
    assert_eq!(text, expected);
}

#[test]
fn switching_emits_regime_columns_and_the_gap_table() {
    let text = stdout(&run(&[
        "switching",
        "--model",
        "two_controls",
        "--dx",
        "0.2",
        "--theta",
        "1",
        "--vartheta",
        "1",
        "--dt",
        "0.05",
        "--switch-cost",
        "0.1",
    ]));
    let blocks: Vec<&str> = text.split("\n\n").collect();
    assert_eq!(blocks.len(), 2);
    let field: Vec<&str> = blocks[0].lines().collect();
    assert_eq!(field[0], "node,x0,v0,v1,scalar");
    assert_eq!(field.len(), 1 + 21);
    for row in &field[1..] {
        let cols: Vec<f64> =
            row.split(',').skip(2).map(|c| c.parse().expect("value")).collect();
        let scalar = cols[2];
        let spread = 0.1 + 1e-9;
        assert!(
            cols[0] >= scalar - 1e-6 && cols[0] <= scalar + spread,
            "regime 0 brackets the scalar solution: {row}"
        );
    }
    let gaps: Vec<&str> = blocks[1].lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(gaps[0], "cost,gap,one_sided_min");
    assert_eq!(gaps.len(), 1 + 4, "default cost sweep");
}

#[test]
fn verify_gate_passes_and_reports_every_check() {
    let out = run(&["verify"]);
    let text = stdout(&out);
    assert_eq!(text.matches(" PASS ").count(), 9, "output: {text}");
    assert!(!text.contains(" FAIL "), "output: {text}");
    assert!(text.trim_end().ends_with("verify: 9/9 checks passed"));
}
