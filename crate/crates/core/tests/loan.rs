//! The three-applicant loan data: clean (T1), one shifted credit score (T2)
//! and a shift that makes every applicant identical (T3). Features are
//! income and credit score divided by 100; labels are reject 0, accept 1.

use coevo_trees::cart::{CartOracle, CartParams};
use coevo_trees::dataset::Points;
use coevo_trees::metrics::{accuracy, reference_accuracy, regret, worst_case_fitness, ObjectiveMode, Play};
use coevo_trees::nash::{build_payoff_matrix, lemke_howson};
use coevo_trees::perturbation::PerturbationGenotype;
use coevo_trees::tree::{random_tree, SplitOp, TreeExpr, TreeGenotype, TreeSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOLERANCE: f64 = 1e-12;
const LABELS: [usize; 3] = [0, 1, 1];

fn versions() -> [PerturbationGenotype; 3] {
    [
        vec![vec![0.30, 0.40], vec![0.60, 0.70], vec![0.80, 0.60]],
        vec![vec![0.30, 0.58], vec![0.60, 0.70], vec![0.80, 0.60]],
        vec![vec![0.50, 0.55], vec![0.50, 0.55], vec![0.50, 0.55]],
    ]
    .map(|rows| PerturbationGenotype::new(Points::from_rows(&rows)))
}

/// Accept when `x[feature] >= threshold`.
fn rule(feature: usize, threshold: f64) -> TreeGenotype {
    let expr = TreeExpr::split(feature, SplitOp::Lt, threshold, TreeExpr::Leaf(0), TreeExpr::Leaf(1));
    TreeGenotype::from_expr(&expr, 2, 2).unwrap()
}

fn dt1() -> TreeGenotype {
    rule(1, 0.55)
}

fn dt2() -> TreeGenotype {
    rule(0, 0.50)
}

fn dt3() -> TreeGenotype {
    rule(0, 0.0)
}

fn oracle() -> CartOracle {
    CartOracle {
        params: CartParams::default(),
        class_count: 2,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE
}

#[test]
fn credit_rule_fits_the_clean_data() {
    let [t1, t2, _] = versions();
    assert_eq!(accuracy(Play::Pure(&dt1()), t1.points(), &LABELS).unwrap(), 1.0);
    // the shifted credit score fools it on the first applicant
    assert_eq!(dt1().predict(t2.points().row(0)), 1);
    assert!(close(accuracy(Play::Pure(&dt1()), t2.points(), &LABELS).unwrap(), 2.0 / 3.0));
}

#[test]
fn reference_accuracy_per_version() {
    let want = [1.0, 1.0, 2.0 / 3.0];
    for (p, w) in versions().iter().zip(want) {
        assert!(close(reference_accuracy(p, &LABELS, &oracle()), w));
    }
}

#[test]
fn income_rule_has_no_regret() {
    for p in &versions() {
        assert!(close(regret(Play::Pure(&dt2()), p, &LABELS, &oracle()), 0.0));
    }
}

#[test]
fn constant_accept_has_regret_one_third_on_clean_data() {
    let [t1, t2, t3] = versions();
    let o = oracle();
    assert!(close(regret(Play::Pure(&dt3()), &t1, &LABELS, &o), 1.0 / 3.0));
    assert!(close(regret(Play::Pure(&dt3()), &t2, &LABELS, &o), 1.0 / 3.0));
    assert!(close(regret(Play::Pure(&dt3()), &t3, &LABELS, &o), 0.0));
}

#[test]
fn identical_applicants_cap_adversarial_accuracy() {
    let perts = versions();
    let set: Vec<Play<'_, PerturbationGenotype>> = perts.iter().map(Play::Pure).collect();
    let space = TreeSpace::new(2, 2).with_depths((1, 4), 6);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut trees = vec![dt1(), dt2(), dt3()];
    trees.extend((0..500).map(|_| random_tree(&space, &mut rng)));
    for t in &trees {
        let f = worst_case_fitness(Play::Pure(t), &set, &LABELS, ObjectiveMode::AdversarialAccuracy, &oracle()).unwrap();
        assert!(f.value() <= 2.0 / 3.0 + TOLERANCE);
    }
    // the constant rule reaches the cap, so adversarial accuracy cannot
    // tell it apart from the income rule
    let f3 = worst_case_fitness(Play::Pure(&dt3()), &set, &LABELS, ObjectiveMode::AdversarialAccuracy, &oracle()).unwrap();
    let f2 = worst_case_fitness(Play::Pure(&dt2()), &set, &LABELS, ObjectiveMode::AdversarialAccuracy, &oracle()).unwrap();
    assert!(close(f3.value(), 2.0 / 3.0));
    assert!(close(f2.value(), 2.0 / 3.0));
}

#[test]
fn regret_separates_the_two_rules() {
    let perts = versions();
    let set: Vec<Play<'_, PerturbationGenotype>> = perts.iter().map(Play::Pure).collect();
    let f3 = worst_case_fitness(Play::Pure(&dt3()), &set, &LABELS, ObjectiveMode::MaxRegret, &oracle()).unwrap();
    let f2 = worst_case_fitness(Play::Pure(&dt2()), &set, &LABELS, ObjectiveMode::MaxRegret, &oracle()).unwrap();
    assert!(close(f3.value(), 2.0 / 3.0));
    assert!(close(f2.value(), 1.0));
}

#[test]
fn regret_game_matrix_and_solution() {
    let perts = versions();
    let trees = [dt2(), dt3()];
    let m = build_payoff_matrix(&trees, &perts, &LABELS, ObjectiveMode::MaxRegret, &oracle()).unwrap();
    let want = [[1.0, 1.0, 1.0], [2.0 / 3.0, 2.0 / 3.0, 1.0]];
    for (i, row) in want.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            assert!(close(m.get(i, j), w), "entry ({i}, {j}) = {}", m.get(i, j));
        }
    }
    let eq = lemke_howson(&m, 0).unwrap();
    assert!(close(eq.value, 1.0));
    assert!(close(eq.row[0], 1.0));
}
