//! Acceptance run. Each test prints one `criterion N: PASS|FAIL` line with
//! the measured numbers, written straight to stderr so it shows even when
//! the harness captures output.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;

use coevo_trees::cart::{build_cart, CartOracle, CartParams};
use coevo_trees::dataset::{feasible_interval, load_csv, normalize, CsvSchema, Dataset, Points};
use coevo_trees::engine::{evolve, CoevolutionConfig, StopReason};
use coevo_trees::hof::HofPolicy;
use coevo_trees::metrics::{estimate_final_metrics_many, reference_accuracy, ObjectiveMode};
use coevo_trees::nash::{lemke_howson, support_enumeration, PayoffMatrix};
use coevo_trees::perturbation::{grid_point, PerturbationDomain, PerturbationGenotype};
use coevo_trees::tree::TreeGenotype;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;


const BREAST_EPSILON: f64 = 0.3;
const DIABETES_EPSILON: f64 = 0.05;
/// Tree generations for the benchmark runs (the budget allows up to 200).
const BENCH_GENERATIONS: usize = 60;
const BENCH_SEED: u64 = 1;
const SAMPLES: usize = 10_000;
const SAMPLE_SEED: u64 = 2024;
const REGRET_RATIO: f64 = 0.75;
const ACCURACY_MARGIN: f64 = 0.20;
const GAME_COUNT: usize = 200;
const GAME_TOLERANCE: f64 = 1e-9;
const BRUTE_TOLERANCE: f64 = 1e-12;
const ABLATION_SEEDS: u64 = 10;
const ABLATION_GENERATIONS: usize = 20;
const ABLATION_SAMPLES: usize = 2_000;
const ABLATION_HOF_SIZE: usize = 100;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion}: {verdict} {detail}\n");
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn data_path(name: &str) -> PathBuf {
    PathBuf::from(format!("{}/data/{name}.csv", env!("CARGO_MANIFEST_DIR")))
}

fn load(name: &str, epsilon: f64) -> Dataset {
    normalize(&load_csv(data_path(name), &CsvSchema::default()).unwrap(), epsilon).unwrap().0
}

fn oracle(data: &Dataset) -> CartOracle {
    CartOracle {
        params: CartParams::default(),
        class_count: data.class_count(),
    }
}

/// Trains with defaults and scores the result next to CART on one sample:
/// returns (coevolved, cart) as (adversarial accuracy, max regret).
fn benchmark(name: &str, epsilon: f64, mode: ObjectiveMode) -> ((f64, f64), (f64, f64)) {
    let data = load(name, epsilon);
    let config = CoevolutionConfig {
        mode,
        max_generations: BENCH_GENERATIONS,
        estimator_samples: 0,
        seed: BENCH_SEED,
        ..CoevolutionConfig::default()
    };
    let result = evolve(&data, &config, &[]).unwrap();
    let cart = build_cart(data.instances(), data.labels(), data.class_count(), &CartParams::default());
    let m = estimate_final_metrics_many(&[&result.best_tree, &cart], &data, SAMPLES, SAMPLE_SEED, &oracle(&data)).unwrap();
    ((m[0].adversarial_accuracy, m[0].max_regret), (m[1].adversarial_accuracy, m[1].max_regret))
}

#[test]
fn criterion_1_max_regret_against_cart() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, eps) in [("breast", BREAST_EPSILON), ("diabetes", DIABETES_EPSILON)] {
        let ((_, ours), (_, cart)) = benchmark(name, eps, ObjectiveMode::MaxRegret);
        pass &= ours <= REGRET_RATIO * cart;
        detail.push(format!("{name}: coevolved {ours:.4} vs cart {cart:.4} (ratio {:.3})", ours / cart));
    }
    report(1, pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_2_adversarial_accuracy_against_cart() {
    let ((ours, _), (cart, _)) = benchmark("breast", BREAST_EPSILON, ObjectiveMode::AdversarialAccuracy);
    let pass = ours >= cart + ACCURACY_MARGIN;
    report(2, pass, &format!("breast: coevolved {ours:.4} vs cart {cart:.4} (gap {:.4})", ours - cart));
    assert!(pass);
}

#[test]
fn criterion_3_lemke_howson_matches_support_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_value = 0.0f64;
    let mut worst_gap = 0.0f64;
    for _ in 0..GAME_COUNT {
        let (m, n) = (rng.gen_range(2..=6), rng.gen_range(2..=6));
        let a = PayoffMatrix::from_fn(m, n, |_, _| rng.gen::<f64>()).unwrap();
        let lh = lemke_howson(&a, 0).unwrap();
        let all = support_enumeration(&a).unwrap();
        assert!(!all.is_empty());
        for se in &all {
            worst_value = worst_value.max((lh.value - se.value).abs());
            worst_gap = worst_gap.max(se.best_response_gap(&a));
        }
        worst_gap = worst_gap.max(lh.best_response_gap(&a));
    }
    let pass = worst_value <= GAME_TOLERANCE && worst_gap <= GAME_TOLERANCE;
    report(
        3,
        pass,
        &format!("{GAME_COUNT} games: largest value difference {worst_value:.2e}, largest best-response gap {worst_gap:.2e}"),
    );
    assert!(pass);
}

/// Every perturbation a 3-point grid allows, as full copies of the data.
fn all_grid_perturbations(data: &Dataset, k: usize) -> Vec<PerturbationGenotype> {
    let x: Vec<f64> = data.instances().rows().map(|r| r[0]).collect();
    let mut out = Vec::new();
    for code in 0..k.pow(x.len() as u32) {
        let mut c = code;
        let rows = x
            .iter()
            .map(|&v| {
                let (lo, hi) = feasible_interval(v, data.epsilon());
                let step = c % k;
                c /= k;
                vec![grid_point(lo, hi, k, step)]
            })
            .collect::<Vec<_>>();
        out.push(PerturbationGenotype::new(Points::from_rows(&rows)));
    }
    out
}

/// Exact objective of a classifier given as a function of the one feature.
fn exact_objective(
    classify: &dyn Fn(f64) -> usize,
    perts: &[PerturbationGenotype],
    refs: &[f64],
    labels: &[usize],
    mode: ObjectiveMode,
) -> f64 {
    let n = labels.len() as f64;
    perts
        .iter()
        .zip(refs)
        .map(|(p, &r)| {
            let correct = p.points().rows().zip(labels).filter(|(x, &y)| classify(x[0]) == y).count();
            let acc = correct as f64 / n;
            match mode {
                ObjectiveMode::AdversarialAccuracy => acc,
                ObjectiveMode::MaxRegret => 1.0 - (r - acc).max(0.0),
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Best objective over every depth-2 tree. On one feature such a tree is a
/// labelling of the line with at most four intervals, so enumerating the
/// labellings of the reachable values with at most three changes covers it.
fn brute_force_optimum(perts: &[PerturbationGenotype], refs: &[f64], labels: &[usize], mode: ObjectiveMode) -> f64 {
    let values: Vec<f64> = perts
        .iter()
        .flat_map(|p| p.points().as_slice().to_vec())
        .map(f64::to_bits)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(f64::from_bits)
        .collect();
    let mut sorted = values;
    sorted.sort_by(f64::total_cmp);
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << sorted.len()) {
        let bit = |i: usize| (mask >> i & 1) as usize;
        let changes = (1..sorted.len()).filter(|&i| bit(i) != bit(i - 1)).count();
        if changes > 3 {
            continue;
        }
        let classify = |v: f64| bit(sorted.iter().position(|&s| s == v).unwrap());
        best = best.max(exact_objective(&classify, perts, refs, labels, mode));
    }
    best
}

#[test]
fn criterion_4_evolve_reaches_the_brute_force_optimum() {
    let fixtures: [(&[f64], &[usize], f64); 2] = [
        (&[0.1, 0.4, 0.55, 0.9], &[0, 1, 0, 1], 0.1),
        (&[0.2, 0.35, 0.5, 0.7], &[1, 0, 1, 1], 0.12),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (f, (x, y, eps)) in fixtures.iter().enumerate() {
        let rows = x.iter().map(|&v| vec![v]).collect();
        let data = Dataset::from_rows("grid", rows, y.to_vec(), 2, *eps).unwrap();
        let perts = all_grid_perturbations(&data, 3);
        let o = oracle(&data);
        let refs: Vec<f64> = perts.iter().map(|p| reference_accuracy(p, data.labels(), &o)).collect();
        for mode in [ObjectiveMode::AdversarialAccuracy, ObjectiveMode::MaxRegret] {
            let config = CoevolutionConfig {
                mode,
                tree_population: 30,
                perturbation_population: 30,
                alternation_length: 10,
                max_generations: 100,
                top_trees: 10,
                depth_interval: (1, 2),
                max_depth: 2,
                perturbation_domain: PerturbationDomain::Grid(3),
                estimator_samples: 0,
                seed: 4,
                ..CoevolutionConfig::default()
            };
            let r = evolve(&data, &config, &[]).unwrap();
            let tree: &TreeGenotype = &r.best_tree;
            let got = exact_objective(&|v| tree.predict(&[v]), &perts, &refs, data.labels(), mode);
            let want = brute_force_optimum(&perts, &refs, data.labels(), mode);
            let ok = tree.depth() <= 2 && (got - want).abs() <= BRUTE_TOLERANCE;
            pass &= ok;
            detail.push(format!("fixture {f} {mode:?}: evolved {got:.4} optimum {want:.4}"));
        }
    }
    report(4, pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_5_property_suites() {
    let mut failed = Vec::new();
    for (name, suite) in properties::SUITES {
        if catch_unwind(AssertUnwindSafe(suite)).is_err() {
            failed.push(*name);
        }
    }
    let pass = failed.is_empty();
    let detail = if pass {
        format!("{} suites at {} cases each", properties::SUITES.len(), properties::CASES)
    } else {
        format!("failing: {}", failed.join(", "))
    };
    report(5, pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_6_thread_count_does_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    let data = data_path("breast");
    let run = |threads: &str| {
        let tree = dir.path().join(format!("tree-{threads}.json"));
        let report = dir.path().join(format!("report-{threads}.json"));
        let out = Command::new(env!("CARGO_BIN_EXE_coevo-trees"))
            .args(["--threads", threads, "train", "--data"])
            .arg(&data)
            .args(["--epsilon", "0.3", "--seed", "7", "--generations", "20", "--samples", "1000", "--progress", "0"])
            .arg("--tree-out")
            .arg(&tree)
            .arg("--report")
            .arg(&report)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report: String = fs::read_to_string(report)
            .unwrap()
            .lines()
            .filter(|l| !l.trim_start().starts_with("\"wall_clock_seconds\""))
            .map(|l| format!("{l}\n"))
            .collect();
        (fs::read(tree).unwrap(), report, out.stdout)
    };
    let one = run("1");
    let eight = run("8");
    let pass = one == eight;
    report(
        6,
        pass,
        &format!(
            "breast, 20 generations: tree files {}, reports {}",
            if one.0 == eight.0 { "identical" } else { "differ" },
            if one.1 == eight.1 { "identical" } else { "differ" }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_nash_archive_beats_best_only() {
    let data = load("breast", BREAST_EPSILON);
    let mut trees = Vec::new();
    for policy in [HofPolicy::NashMixed, HofPolicy::BestOnly] {
        for seed in 0..ABLATION_SEEDS {
            let config = CoevolutionConfig {
                hof_policy: policy,
                hof_max_size: Some(ABLATION_HOF_SIZE),
                max_generations: ABLATION_GENERATIONS,
                estimator_samples: 0,
                seed,
                ..CoevolutionConfig::default()
            };
            trees.push(evolve(&data, &config, &[]).unwrap().best_tree);
        }
    }
    let refs: Vec<&TreeGenotype> = trees.iter().collect();
    let m = estimate_final_metrics_many(&refs, &data, ABLATION_SAMPLES, SAMPLE_SEED, &oracle(&data)).unwrap();
    let k = ABLATION_SEEDS as usize;
    let mean = |s: &[coevo_trees::metrics::FinalMetrics]| s.iter().map(|m| m.max_regret).sum::<f64>() / s.len() as f64;
    let (nash, best) = (mean(&m[..k]), mean(&m[k..]));
    let pass = nash <= best;
    report(
        7,
        pass,
        &format!("breast, {ABLATION_SEEDS} seeds: mean max regret nash-mixed {nash:.4} vs best-only {best:.4} (gap {:.4})", best - nash),
    );
    assert!(pass);
}

#[test]
fn criterion_8_zero_radius_stops_without_improvement() {
    let mut pass = true;
    let mut detail = Vec::new();
    let data = load("breast", 0.0);
    let o = oracle(&data);
    let cart_clean = reference_accuracy(&PerturbationGenotype::identity(&data), data.labels(), &o);
    for mode in [ObjectiveMode::AdversarialAccuracy, ObjectiveMode::MaxRegret] {
        let config = CoevolutionConfig {
            mode,
            max_generations: 200,
            estimator_samples: 0,
            seed: 8,
            ..CoevolutionConfig::default()
        };
        let r = evolve(&data, &config, &[]).unwrap();
        let clean = r.best_tree.count_correct(data.instances(), data.labels()) as f64 / data.len() as f64;
        let want = match mode {
            ObjectiveMode::AdversarialAccuracy => clean,
            ObjectiveMode::MaxRegret => 1.0 - (cart_clean - clean).max(0.0),
        };
        let ok = r.stop_reason == StopReason::NoImprovement
            && r.best_fitness.value() == want
            && r.diagnostics.subroutine_successes == 0;
        pass &= ok;
        detail.push(format!(
            "{mode:?}: {:?} after {} generations, fitness {:.4}, clean accuracy {clean:.4}, subroutine successes {}",
            r.stop_reason,
            r.generations_run,
            r.best_fitness.value(),
            r.diagnostics.subroutine_successes
        ));
    }
    report(8, pass, &detail.join("; "));
    assert!(pass);
}
