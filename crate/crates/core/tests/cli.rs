use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coevo_trees::cli::{EvaluationReport, RunReport};
use coevo_trees::tree::TreeGenotype;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_coevo-trees");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn field(out: &str, name: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(name).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no `{name}` line in {out}"))
}

/// Two noisy blobs in two features with text class names.
fn write_toy(dir: &Path) -> PathBuf {
    let mut s = String::from("a,b,class\n");
    for i in 0..40 {
        let t = i as f64 / 40.0;
        let (x, y, c) = if i % 2 == 0 {
            (0.2 + 0.3 * t, 0.6 - 0.2 * t, "no")
        } else {
            (0.5 + 0.4 * t, 0.3 + 0.5 * t, "yes")
        };
        s.push_str(&format!("{x},{y},{c}\n"));
    }
    let path = dir.join("toy.csv");
    fs::write(&path, s).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn train(dir: &Path, data: &Path, tag: &str, extra: &[&str]) -> (Output, PathBuf, PathBuf) {
    let tree = dir.join(format!("{tag}-tree.json"));
    let report = dir.join(format!("{tag}-report.json"));
    let mut args = vec![
        "train",
        "--data",
        p(data),
        "--epsilon",
        "0.1",
        "--set",
        "tree_population=16",
        "--set",
        "perturbation_population=16",
        "--set",
        "alternation_length=4",
        "--set",
        "top_trees=4",
        "--generations",
        "8",
        "--samples",
        "300",
        "--progress",
        "0",
        "--tree-out",
        p(&tree),
        "--report",
        p(&report),
    ];
    args.extend_from_slice(extra);
    (run(&args), tree, report)
}

#[test]
fn train_writes_tree_and_report() {
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let (out, tree, report) = train(dir.path(), &data, "a", &["--mode", "max-regret"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tree = TreeGenotype::from_json(&fs::read_to_string(tree).unwrap()).unwrap();
    let report = RunReport::from_json(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report.best_tree().unwrap(), tree);
    assert_eq!(report.result.generations_run, 8);
    let m = report.metrics.expect("metrics were requested");
    let text = stdout(&out);
    assert_eq!(field(&text, "max_regret"), format!("{:.6}", m.max_regret));
    assert_eq!(field(&text, "adversarial_accuracy"), format!("{:.6}", m.adversarial_accuracy));
    assert_eq!(report.dataset.class_names, vec!["no".to_string(), "yes".to_string()]);
}

#[test]
fn same_command_same_bytes_at_any_thread_count() {
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let (a, ta, _) = train(dir.path(), &data, "one", &["--threads", "1"]);
    let (b, tb, _) = train(dir.path(), &data, "four", &["--threads", "4"]);
    let (c, tc, _) = train(dir.path(), &data, "again", &["--threads", "1"]);
    assert!(a.status.success() && b.status.success() && c.status.success());
    let ta = fs::read(ta).unwrap();
    assert_eq!(ta, fs::read(tb).unwrap());
    assert_eq!(ta, fs::read(tc).unwrap());
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn replay_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let (first, tree, report) = train(dir.path(), &data, "orig", &["--seed", "5"]);
    assert!(first.status.success());
    let tree2 = dir.path().join("replayed-tree.json");
    let report2 = dir.path().join("replayed-report.json");
    let out = run(&[
        "train",
        "--data",
        "ignored.csv",
        "--replay",
        p(&report),
        "--progress",
        "0",
        "--tree-out",
        p(&tree2),
        "--report",
        p(&report2),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(tree).unwrap(), fs::read(tree2).unwrap());
    let a = RunReport::from_json(&fs::read_to_string(report).unwrap()).unwrap();
    let b = RunReport::from_json(&fs::read_to_string(report2).unwrap()).unwrap();
    assert_eq!(a.config, b.config);
    assert_eq!(a.result, b.result);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn cart_tree_warm_starts_training() {
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let cart = dir.path().join("cart.json");
    let out = run(&["cart", "--data", p(&data), "--out", p(&cart)]);
    assert!(out.status.success());
    assert_eq!(field(&stdout(&out), "training_accuracy"), "1.000000");
    let cart_tree = TreeGenotype::from_json(&fs::read_to_string(&cart).unwrap()).unwrap();

    let (out, _, report) = train(dir.path(), &data, "warm", &["--init-trees", p(&cart)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = RunReport::from_json(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report.diagnostics.warm_start_trees, 1);
    assert_eq!(report.warm_start().unwrap(), vec![cart_tree]);
}

#[test]
fn evaluate_is_seeded_and_matches_clean_accuracy_at_zero_radius() {
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let cart = dir.path().join("cart.json");
    assert!(run(&["cart", "--data", p(&data), "--out", p(&cart)]).status.success());
    let args = ["evaluate", "--data", p(&data), "--tree", p(&cart), "--samples", "50", "--seed", "3"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let report = EvaluationReport::from_json(&stdout(&a)).unwrap();
    let m = &report.scores[0].metrics;
    // with no radius every sample is the clean data
    assert_eq!(m.adversarial_accuracy, m.clean_accuracy);
    assert_eq!(m.max_regret, 0.0);

    let wide = run(&["evaluate", "--data", p(&data), "--epsilon", "0.3", "--tree", p(&cart), "--samples", "200"]);
    let report = EvaluationReport::from_json(&stdout(&wide)).unwrap();
    assert!(report.scores[0].metrics.adversarial_accuracy < 1.0);
}

#[test]
fn nash_solve_prints_the_equilibrium() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("game.txt");
    fs::write(&path, "3 1\n0 2\n").unwrap();
    for method in ["auto", "lemke-howson", "support-enumeration"] {
        let out = run(&["nash-solve", p(&path), "--method", method]);
        assert!(out.status.success());
        let text = stdout(&out);
        assert_eq!(field(&text, "value"), "1.500000000000");
        assert_eq!(field(&text, "row"), "0.500000000000 0.500000000000");
        assert_eq!(field(&text, "col"), "0.250000000000 0.750000000000");
    }
}

#[test]
fn exit_codes_separate_error_kinds() {
    let dir = TempDir::new().unwrap();
    let data = write_toy(dir.path());
    let code = |args: &[&str]| run(args).status.code().unwrap();

    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["train", "--data", p(&data), "--set", "no_such_field=1"]), 2);
    assert_eq!(code(&["train", "--data", p(&data), "--set", "tree_population=1"]), 2);
    assert_eq!(code(&["cart", "--data", p(&data), "--epsilon", "-1"]), 2);
    assert_eq!(code(&["cart", "--data", p(&dir.path().join("missing.csv"))]), 3);

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1 2\n3\n").unwrap();
    assert_eq!(code(&["nash-solve", p(&bad)]), 3);

    let report = dir.path().join("future.json");
    fs::write(&report, "{\"format_version\": 99}").unwrap();
    assert_eq!(code(&["train", "--data", p(&data), "--replay", p(&report)]), 2);
}
