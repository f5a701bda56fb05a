//! End-to-end tests of the `malcal` binary: argument handling, output
//! formats, the config file, and byte-level determinism across thread
//! counts (acceptance criterion for reproducibility).

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_malcal"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Criterion: identical seed and parameters but different --threads give
/// byte-identical CSV output files (and sidecars); so does rerunning.
#[test]
fn determinism_across_thread_counts() {
    let out1 = tmp("det_t1.csv");
    let out2 = tmp("det_t3.csv");
    let out3 = tmp("det_t1_again.csv");
    for (path, threads) in [(&out1, "1"), (&out2, "3"), (&out3, "1")] {
        run_ok(bin().args([
            "skorokhod-convergence",
            "--b",
            "1",
            "--n-list",
            "4,8,16",
            "--paths",
            "300",
            "--seed",
            "9",
            "--fine-factor",
            "16",
            "--threads",
            threads,
            "--output",
            path.to_str().unwrap(),
        ]));
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    let c = std::fs::read(&out3).unwrap();
    assert_eq!(a, b, "CSV differs between thread counts");
    assert_eq!(a, c, "CSV differs between reruns");
    let sa = std::fs::read(format!("{}.summary.json", out1.display())).unwrap();
    let sb = std::fs::read(format!("{}.summary.json", out2.display())).unwrap();
    assert_eq!(sa, sb, "summary sidecar differs between thread counts");
    println!(
        "criterion 7 PASS: byte-identical CSV across --threads 1/3 and across reruns ({} bytes)",
        a.len()
    );
}

#[test]
fn skorokhod_csv_and_summary_shape() {
    let out = tmp("shape.csv");
    run_ok(bin().args([
        "skorokhod-convergence",
        "--b",
        "1",
        "--n-list",
        "4,8,16",
        "--paths",
        "200",
        "--seed",
        "7",
        "--fine-factor",
        "16",
        "--output",
        out.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,mse,ci_low,ci_high");
    assert_eq!(lines.len(), 4, "3 ladder rows expected: {csv}");
    assert!(lines[1].starts_with("4,"));
    let summary = std::fs::read_to_string(format!("{}.summary.json", out.display())).unwrap();
    assert!(summary.starts_with("{\"slope\":"));
    assert!(summary.contains("\"paths\":200"));
    assert!(summary.contains("\"seed\":7"));
}

#[test]
fn exact_check_prints_one_line_per_identity() {
    let out = run_ok(bin().args(["exact-check", "--m", "8", "--seed", "7", "--instances", "4"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11, "one line per identity: {text}");
    assert!(lines.iter().all(|l| l.starts_with("PASS")));
    assert!(text.contains("duality"));
    assert!(text.contains("mobius-inversion"));
}

#[test]
fn missing_n_list_is_a_usage_error() {
    let out = bin()
        .args(["skorokhod-convergence", "--paths", "100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--n-list"), "stderr: {err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin()
        .args(["skorokhod-convergence", "--frobnicate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unsorted_n_list_is_a_usage_error() {
    let out = bin()
        .args([
            "skorokhod-convergence",
            "--n-list",
            "4,16,8",
            "--paths",
            "100",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ascending"));
    // a ladder too short for the slope fit is also an argument error
    let out = bin()
        .args(["skorokhod-convergence", "--n-list", "4,8", "--paths", "100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3"));
}

#[test]
fn odd_n_is_a_runtime_error() {
    let out = bin()
        .args([
            "skorokhod-convergence",
            "--n-list",
            "3,5,7",
            "--paths",
            "100",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("even"));
}

#[test]
fn json_format_emits_the_full_report() {
    let out = run_ok(bin().args([
        "skorokhod-convergence",
        "--n-list",
        "4,8,16",
        "--paths",
        "150",
        "--seed",
        "3",
        "--fine-factor",
        "16",
        "--format",
        "json",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"n_values\""));
    assert!(text.contains("\"slope\""));
    assert!(
        !text.contains("wall_time"),
        "wall time must stay out of outputs"
    );
}

#[test]
fn seed_env_fallback_and_flag_override() {
    let out_env = tmp("seed_env.csv");
    let out_flag = tmp("seed_flag.csv");
    run_ok(bin().env("MALCAL_SEED", "11").args([
        "skorokhod-convergence",
        "--n-list",
        "4,8,16",
        "--paths",
        "150",
        "--fine-factor",
        "16",
        "--output",
        out_env.to_str().unwrap(),
    ]));
    run_ok(bin().env("MALCAL_SEED", "999").args([
        "skorokhod-convergence",
        "--n-list",
        "4,8,16",
        "--paths",
        "150",
        "--fine-factor",
        "16",
        "--seed",
        "11",
        "--output",
        out_flag.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(&out_env).unwrap(),
        std::fs::read(&out_flag).unwrap(),
        "flag seed must override the environment and match the env run"
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let config = tmp("run.toml");
    std::fs::write(
        &config,
        "n_list = [4, 8, 16]\npaths = 150\nseed = 21\nfine_factor = 16\nb = 1.0\n",
    )
    .unwrap();
    let from_file = tmp("cfg_file.csv");
    run_ok(bin().args([
        "skorokhod-convergence",
        "--config",
        config.to_str().unwrap(),
        "--output",
        from_file.to_str().unwrap(),
    ]));
    let from_flags = tmp("cfg_flags.csv");
    run_ok(bin().args([
        "skorokhod-convergence",
        "--n-list",
        "4,8,16",
        "--paths",
        "150",
        "--seed",
        "21",
        "--fine-factor",
        "16",
        "--b",
        "1",
        "--output",
        from_flags.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(&from_file).unwrap(),
        std::fs::read(&from_flags).unwrap()
    );
    // a flag overrides the file value: different seed changes the output
    let overridden = tmp("cfg_override.csv");
    run_ok(bin().args([
        "skorokhod-convergence",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "22",
        "--output",
        overridden.to_str().unwrap(),
    ]));
    assert_ne!(
        std::fs::read(&from_file).unwrap(),
        std::fs::read(&overridden).unwrap()
    );
}

#[test]
fn simulate_paths_binary_dump_has_passage_times() {
    let out = run_ok(bin().args([
        "simulate-paths",
        "--n",
        "4",
        "--steps",
        "6",
        "--b",
        "1",
        "--seed",
        "5",
        "--fine-factor",
        "16",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,b,seed");
    assert_eq!(lines[1], "4,1,5");
    assert_eq!(lines[2], "i,xi,tau");
    assert_eq!(lines.len(), 9);
    for row in &lines[3..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert!(!fields[2].is_empty(), "binary dump carries tau: {row}");
    }
}

#[test]
fn simulate_paths_with_custom_atoms_is_walk_only() {
    let config = tmp("atoms.toml");
    std::fs::write(
        &config,
        "noise = { kind = \"atoms\", atoms = [[-1.0, 0.5], [1.0, 0.5]] }\n",
    )
    .unwrap();
    let out = run_ok(bin().args([
        "simulate-paths",
        "--n",
        "4",
        "--steps",
        "5",
        "--seed",
        "5",
        "--config",
        config.to_str().unwrap(),
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,b,seed");
    assert_eq!(lines[1], "4,,5");
    for row in &lines[3..] {
        assert!(row.ends_with(','), "walk-only dump has empty tau: {row}");
    }
}

#[test]
fn invalid_config_atoms_fail_validation() {
    let config = tmp("bad_atoms.toml");
    std::fs::write(
        &config,
        "noise = { kind = \"atoms\", atoms = [[-1.0, 0.5], [2.0, 0.5]] }\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "simulate-paths",
            "--n",
            "4",
            "--config",
            config.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mean"));
}

#[test]
fn s_transform_table_has_mc_columns() {
    let out = run_ok(bin().args([
        "s-transform",
        "--n-list",
        "2,64",
        "--mc-n",
        "64",
        "--mc-paths",
        "5000",
        "--seed",
        "4",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,exact,target,abs_error,mc_estimate,mc_stderr");
    assert!(lines[1].starts_with("2,2.25,"));
    let row64: Vec<&str> = lines[2].split(',').collect();
    assert!(!row64[4].is_empty() && !row64[5].is_empty());
}

#[test]
fn chaos_estimate_emits_kernel_csv() {
    let out = run_ok(bin().args([
        "chaos-estimate",
        "--functional",
        "b1",
        "--order",
        "1",
        "--n",
        "4",
        "--paths",
        "2000",
        "--seed",
        "2",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i1,value");
    assert_eq!(lines.len(), 5, "4 cells at n=4: {text}");
}
