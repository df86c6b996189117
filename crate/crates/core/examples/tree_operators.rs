//! Random trees, subtree crossover, the best-of-trials mutation hook and the
//! JSON tree document.

use coevo_trees::tree::{crossover_trees, mutate_candidates, random_tree, SplitOp, TreeExpr, TreeGenotype, TreeSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    // x1 < 0.55 ? reject : (x0 < 0.2 ? reject : accept)
    let expr = TreeExpr::split(
        1,
        SplitOp::Lt,
        0.55,
        TreeExpr::Leaf(0),
        TreeExpr::split(0, SplitOp::Lt, 0.2, TreeExpr::Leaf(0), TreeExpr::Leaf(1)),
    );
    let tree = TreeGenotype::from_expr(&expr, 2, 2).expect("valid tree");
    println!("hand-built tree, depth {}:\n{tree}", tree.depth());
    println!("predict([0.5, 0.7]) = {}", tree.predict(&[0.5, 0.7]));

    let space = TreeSpace::new(2, 2).with_depths((1, 4), 6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tree(&space, &mut rng);
    let b = random_tree(&space, &mut rng);
    println!("random parents: {} and {} nodes", a.len(), b.len());

    let (c, d) = crossover_trees(&a, &b, &space, &mut rng);
    println!("offspring: {} and {} nodes, depths {} and {}", c.len(), d.len(), c.depth(), d.depth());

    let trials = mutate_candidates(&tree, &space, 10, &mut rng);
    println!("{} mutation trials, sizes {:?}", trials.len(), trials.iter().map(|t| t.len()).collect::<Vec<_>>());
    for t in [&a, &b, &c, &d].into_iter().chain(&trials) {
        t.validate().expect("operators keep trees valid");
    }

    let doc = tree.to_json();
    let back = TreeGenotype::from_json(&doc).expect("round trip");
    assert_eq!(back, tree);
    println!("tree document:\n{doc}");
}
