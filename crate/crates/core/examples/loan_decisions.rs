//! Three loan applicants, two features (income, credit score, both divided
//! by 100) and three versions of the data: clean (T1), one shifted credit
//! score (T2) and a large shift that makes all applicants identical (T3).
//!
//! Prints accuracy and regret of three rules and solves the game between
//! the rules and the data versions.

use coevo_trees::cart::{CartOracle, CartParams};
use coevo_trees::dataset::Points;
use coevo_trees::metrics::{accuracy, regret, worst_case_fitness, ObjectiveMode, Play};
use coevo_trees::nash::{build_payoff_matrix, solve};
use coevo_trees::perturbation::PerturbationGenotype;
use coevo_trees::tree::{SplitOp, TreeExpr, TreeGenotype};

fn rule(feature: usize, threshold: f64) -> TreeGenotype {
    let expr = TreeExpr::split(feature, SplitOp::Lt, threshold, TreeExpr::Leaf(0), TreeExpr::Leaf(1));
    TreeGenotype::from_expr(&expr, 2, 2).expect("valid rule")
}

fn main() {
    // applicants A1 (reject), A2 and A3 (accept)
    let labels = [0, 1, 1];
    let versions = [
        ("T1", vec![vec![0.30, 0.40], vec![0.60, 0.70], vec![0.80, 0.60]]),
        ("T2", vec![vec![0.30, 0.58], vec![0.60, 0.70], vec![0.80, 0.60]]),
        ("T3", vec![vec![0.50, 0.55], vec![0.50, 0.55], vec![0.50, 0.55]]),
    ];
    let perts: Vec<PerturbationGenotype> = versions
        .iter()
        .map(|(_, rows)| PerturbationGenotype::new(Points::from_rows(rows)))
        .collect();
    let rules = [
        ("DT1 credit >= 0.55", rule(1, 0.55)),
        ("DT2 income >= 0.50", rule(0, 0.50)),
        ("DT3 income >= 0", rule(0, 0.0)),
    ];
    let oracle = CartOracle {
        params: CartParams::default(),
        class_count: 2,
    };

    println!("{:<20} {:>18} {:>18}", "", "accuracy T1 T2 T3", "regret T1 T2 T3");
    for (name, tree) in &rules {
        let acc: Vec<String> = perts
            .iter()
            .map(|p| format!("{:.2}", accuracy(Play::Pure(tree), p.points(), &labels).unwrap()))
            .collect();
        let reg: Vec<String> = perts
            .iter()
            .map(|p| format!("{:.2}", regret(Play::Pure(tree), p, &labels, &oracle)))
            .collect();
        println!("{name:<20} {:>18} {:>18}", acc.join(" "), reg.join(" "));
    }

    let set: Vec<Play<'_, PerturbationGenotype>> = perts.iter().map(Play::Pure).collect();
    for mode in [ObjectiveMode::AdversarialAccuracy, ObjectiveMode::MaxRegret] {
        print!("{mode:?} fitness:");
        for (name, tree) in &rules {
            let f = worst_case_fitness(Play::Pure(tree), &set, &labels, mode, &oracle).unwrap();
            print!("  {} {:.3}", &name[..3], f.value());
        }
        println!();
    }

    let trees: Vec<&TreeGenotype> = rules.iter().map(|(_, t)| t).collect();
    let matrix = build_payoff_matrix(&trees, &perts, &labels, ObjectiveMode::MaxRegret, &oracle).unwrap();
    println!("regret-mode payoff matrix (rows DT1..DT3, columns T1..T3):\n{matrix}");
    let eq = solve(&matrix).unwrap().equilibrium;
    println!("rules {:.3?}, data versions {:.3?}, value {:.3}", eq.row, eq.col, eq.value);
}
