//! Archive policies on a tiny game: the equilibrium of three rules against
//! three data versions, what each policy would archive from it, and
//! capacity-bounded eviction.

use coevo_trees::cart::{CartOracle, CartParams};
use coevo_trees::dataset::Points;
use coevo_trees::hof::{policy_candidates, HallOfFame, HofPolicy};
use coevo_trees::metrics::{worst_case_fitness, ObjectiveMode, Play};
use coevo_trees::nash::{build_payoff_matrix, solve, MixedStrategy};
use coevo_trees::perturbation::PerturbationGenotype;
use coevo_trees::tree::{SplitOp, TreeExpr, TreeGenotype};
use coevo_trees::Keyed;

fn rule(feature: usize, threshold: f64) -> Keyed<TreeGenotype> {
    let expr = TreeExpr::split(feature, SplitOp::Lt, threshold, TreeExpr::Leaf(0), TreeExpr::Leaf(1));
    Keyed::new(TreeGenotype::from_expr(&expr, 2, 2).expect("valid rule"))
}

fn describe(s: &MixedStrategy<Keyed<TreeGenotype>>, names: &[(&str, &Keyed<TreeGenotype>)]) -> String {
    s.iter()
        .map(|(t, p)| {
            let name = names.iter().find(|(_, k)| k.key() == t.key()).map_or("?", |(n, _)| n);
            format!("{name}:{p:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() {
    let labels = [0, 1, 1];
    let perts: Vec<PerturbationGenotype> = [
        vec![vec![0.30, 0.40], vec![0.60, 0.70], vec![0.80, 0.60]],
        vec![vec![0.30, 0.58], vec![0.60, 0.70], vec![0.80, 0.60]],
        vec![vec![0.50, 0.55], vec![0.50, 0.55], vec![0.50, 0.55]],
    ]
    .iter()
    .map(|rows| PerturbationGenotype::new(Points::from_rows(rows)))
    .collect();
    // DT3 appears twice; archives and candidates count it once
    let trees = vec![rule(1, 0.55), rule(0, 0.30), rule(0, 0.0), rule(0, 0.0)];
    let names = [("DT1", &trees[0]), ("DT2'", &trees[1]), ("DT3", &trees[2])];
    let oracle = CartOracle {
        params: CartParams::default(),
        class_count: 2,
    };
    let mode = ObjectiveMode::AdversarialAccuracy;

    let set: Vec<Play<'_, PerturbationGenotype>> = perts.iter().map(Play::Pure).collect();
    let fitness: Vec<f64> = trees
        .iter()
        .map(|t| worst_case_fitness(Play::Pure(t), &set, &labels, mode, &oracle).unwrap().value())
        .collect();
    println!("worst-case accuracy per tree: {fitness:.3?}");

    let distinct = &trees[..3];
    let matrix = build_payoff_matrix(distinct, &perts, &labels, mode, &oracle).unwrap();
    let eq = solve(&matrix).unwrap().equilibrium;
    let mixed = MixedStrategy::new(distinct.iter().cloned().zip(eq.row.iter().copied()).collect()).unwrap();
    println!("equilibrium tree mix: {}", describe(&mixed, &names));

    for policy in [HofPolicy::NashMixed, HofPolicy::NashSingles, HofPolicy::TopKMixed, HofPolicy::TopK, HofPolicy::BestOnly] {
        let cands = policy_candidates(policy, &trees, &fitness, &mixed);
        let shown: Vec<String> = cands.iter().map(|c| format!("[{}]", describe(c, &names))).collect();
        println!("{policy:>12}: {}", shown.join(" "));
    }

    let mut hof = HallOfFame::new(HofPolicy::TopK, Some(2));
    for (generation, (t, f)) in trees.iter().zip(&fitness).enumerate() {
        let outcome = hof.insert(MixedStrategy::pure(t.clone()), *f, generation);
        println!("insert tree {generation} (fitness {f:.3}): {outcome:?}, size {}", hof.len());
    }
    println!(
        "evictions {}, duplicates skipped {}, best evicted fitness {:?}",
        hof.evictions(),
        hof.duplicates_skipped(),
        hof.max_evicted_fitness()
    );
    let eval = hof.evaluation_set(&trees[..1]);
    println!("evaluation set seen by perturbations: {} entries", eval.len());
}
