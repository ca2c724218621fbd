//! Black-box tests of the `hat` binary: validation exit codes, end-to-end
//! agreement with the library, and output formats.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hat_core::hat::{run_hat, HatConfig, ThresholdFamily};
use hat_core::pvalues::{PValueAssignment, Provenance};
use hat_core::tree::Tree;

const FIXTURE_NEWICK: &str =
    "(((d1,d2)c1,(d3,d4)c2,(d5,d6)c3)b1,((d7,d8,d9)c4,(d10,d11)c5)b2)root;";

fn hat_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hat"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    hat_bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn hat")
}

fn write(dir: &Path, name: &str, contents: &str) {
    fs::write(dir.join(name), contents).unwrap();
}

fn fixture_pvalues() -> String {
    let mut s = String::from("node,pvalue\n");
    for (node, p) in [
        ("root", 1e-6),
        ("b1", 1e-6),
        ("b2", 0.9),
        ("c1", 1e-6),
        ("c2", 0.9),
        ("c3", 0.9),
        ("c4", 0.9),
        ("c5", 0.9),
    ] {
        s.push_str(&format!("{node},{p}\n"));
    }
    s
}

#[test]
fn missing_pvalue_row_names_the_node() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.nwk", FIXTURE_NEWICK);
    let pv = fixture_pvalues().replace("c3,0.9\n", "");
    write(dir.path(), "pv.csv", &pv);
    let out = run_in(
        dir.path(),
        &["test", "--tree", "t.nwk", "--pvalues", "pv.csv", "--alpha", "0.2", "--family", "independent"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("c3"), "stderr: {stderr}");
}

#[test]
fn alpha_out_of_range_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.nwk", FIXTURE_NEWICK);
    write(dir.path(), "pv.csv", &fixture_pvalues());
    for bad in ["1.5", "0", "1"] {
        let out = run_in(
            dir.path(),
            &["test", "--tree", "t.nwk", "--pvalues", "pv.csv", "--alpha", bad, "--family", "independent"],
        );
        assert_eq!(out.status.code(), Some(2), "alpha {bad}");
    }
}

#[test]
fn epsilon0_with_lg_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.nwk", FIXTURE_NEWICK);
    write(dir.path(), "pv.csv", &fixture_pvalues());
    let out = run_in(
        dir.path(),
        &[
            "test", "--tree", "t.nwk", "--pvalues", "pv.csv", "--alpha", "0.2", "--family", "lg",
            "--epsilon0", "0.01",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn end_to_end_matches_library_run() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.nwk", FIXTURE_NEWICK);
    write(dir.path(), "pv.csv", &fixture_pvalues());
    let out = run_in(
        dir.path(),
        &["test", "--tree", "t.nwk", "--pvalues", "pv.csv", "--alpha", "0.2", "--family", "independent"],
    );
    assert!(out.status.success());

    let tree = Tree::parse_newick(FIXTURE_NEWICK).unwrap();
    let non_null = ["root", "b1", "c1"];
    let pv = PValueAssignment::from_fn(&tree, Provenance::External, |u| {
        Ok(if non_null.contains(&tree.label(u)) { 1e-6 } else { 0.9 })
    })
    .unwrap();
    let (_, partition) = run_hat(
        &tree,
        &pv,
        &HatConfig::new(0.2, ThresholdFamily::IndependentHarmonic),
    )
    .unwrap();
    let leaves = tree.leaf_order();
    let expect_groups: Vec<Vec<String>> = partition
        .ranges()
        .iter()
        .map(|&(s, l)| {
            leaves[s..s + l]
                .iter()
                .map(|&u| tree.label(u).to_string())
                .collect()
        })
        .collect();
    let got: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let expect = serde_json::json!({ "groups": expect_groups });
    assert_eq!(got, expect);
}

#[test]
fn metrics_identical_and_twelve_leaf_example() {
    let dir = tempfile::tempdir().unwrap();
    let same = r#"{"groups":[["a","b"],["c"]]}"#;
    write(dir.path(), "t.json", same);
    write(dir.path(), "a.json", same);
    let out = run_in(dir.path(), &["metrics", "--truth", "t.json", "--achieved", "a.json"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FSP 0/1"), "{stdout}");
    assert!(stdout.contains("TPP 1/1"), "{stdout}");

    // Twelve ordered leaves: truth {1,2},{3..5},{6..9},{10..12}; achieved
    // {1..5},{6,7,8},{9},{10..12} gives 1/3 and 2/3.
    let leaves: Vec<String> = (1..=12).map(|i| format!("l{i}")).collect();
    let group = |idx: &[usize]| -> Vec<String> { idx.iter().map(|&i| leaves[i - 1].clone()).collect() };
    let truth = serde_json::json!({ "groups": [group(&[1,2]), group(&[3,4,5]), group(&[6,7,8,9]), group(&[10,11,12])] });
    let achieved = serde_json::json!({ "groups": [group(&[1,2,3,4,5]), group(&[6,7,8]), group(&[9]), group(&[10,11,12])] });
    write(dir.path(), "truth.json", &truth.to_string());
    write(dir.path(), "ach.json", &achieved.to_string());
    let out = run_in(dir.path(), &["metrics", "--truth", "truth.json", "--achieved", "ach.json"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FSP 1/3"), "{stdout}");
    assert!(stdout.contains("TPP 2/3"), "{stdout}");
    assert!(stdout.contains("TRUTH_BARRIERS 01001000100"), "{stdout}");
    assert!(stdout.contains("ACHIEVED_BARRIERS 00001001100"), "{stdout}");
}

#[test]
fn metrics_mismatched_leaf_counts_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.json", r#"{"groups":[["a","b"],["c"]]}"#);
    write(dir.path(), "a.json", r#"{"groups":[["a","b"]]}"#);
    let out = run_in(dir.path(), &["metrics", "--truth", "t.json", "--achieved", "a.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_zero_reps_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["simulate", "--scenario", "idealized-binary", "--p", "20", "--k", "5", "--reps", "0", "--out", "r.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_nonbinary_emits_both_families() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--scenario", "idealized-nonbinary", "--nonbinary-internal", "1",
            "--k", "5", "--alphas", "0.1,0.2", "--families", "independent,lg",
            "--reps", "20", "--seed", "4", "--out", "r.csv",
        ],
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(
        lines[0],
        "scenario,family,alpha,fsr,fsr_se,power,power_se,reps"
    );
    assert_eq!(csv.matches("independent").count(), 2);
    assert_eq!(csv.matches(",lg,").count(), 2);
    assert!(dir.path().join("r.csv.manifest.json").exists());
}

#[test]
fn pvalues_anova_round_trips_through_test() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.nwk", FIXTURE_NEWICK);
    let mut data = String::from("leaf,value\n");
    for i in 1..=11 {
        let v = if i <= 6 { 0.0 } else { 5.0 };
        data.push_str(&format!("d{i},{v}\n"));
    }
    write(dir.path(), "y.csv", &data);
    let out = run_in(
        dir.path(),
        &["pvalues-anova", "--tree", "t.nwk", "--data", "y.csv", "--sigma", "0.5", "--out", "pv.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pv = fs::read_to_string(dir.path().join("pv.csv")).unwrap();
    assert!(pv.starts_with("node,pvalue\n"));
    assert_eq!(pv.lines().count(), 9);

    let out = run_in(
        dir.path(),
        &["test", "--tree", "t.nwk", "--pvalues", "pv.csv", "--alpha", "0.2", "--family", "independent"],
    );
    assert!(out.status.success());
    // The mean jump sits inside b2's block (d7..d11 vs d1..d6), so the
    // root must split while b2's own children stay aggregated.
    let got: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let groups = got["groups"].as_array().unwrap();
    assert!(groups.len() >= 2);
}

#[test]
fn byte_reproducible_outputs() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    for dir in [dir1.path(), dir2.path()] {
        write(dir, "t.nwk", FIXTURE_NEWICK);
        write(dir, "pv.csv", &fixture_pvalues());
        let out = run_in(
            dir,
            &[
                "test", "--tree", "t.nwk", "--pvalues", "pv.csv", "--alpha", "0.2",
                "--family", "reshaped", "--out-partition", "part.json", "--out-audit", "audit.csv",
            ],
        );
        assert!(out.status.success());
        let out = run_in(
            dir,
            &[
                "simulate", "--scenario", "idealized-binary", "--p", "40", "--k", "10",
                "--alphas", "0.2", "--families", "independent,lg", "--reps", "25",
                "--seed", "7", "--out", "results.csv",
            ],
        );
        assert!(out.status.success());
    }
    for name in ["part.json", "audit.csv", "results.csv"] {
        let a = fs::read(dir1.path().join(name)).unwrap();
        let b = fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}
