//! Fits the greedy Gini baseline on the diabetes data and shows how its
//! training accuracy collapses once the inputs are perturbed.

use std::error::Error;

use coevo_trees::cart::{build_cart, gini, CartParams};
use coevo_trees::dataset::{load_csv, normalize, CsvSchema};
use coevo_trees::metrics::adversarial_accuracy_over;
use coevo_trees::perturbation::sample_perturbation_set;

fn main() -> Result<(), Box<dyn Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/diabetes.csv");
    let (data, _) = normalize(&load_csv(path, &CsvSchema::default())?, 0.05)?;
    println!("root gini {:.4}", gini(&data.class_histogram())?);

    for depth in [1, 3, 5, 10] {
        let params = CartParams {
            max_depth: depth,
            ..CartParams::default()
        };
        let tree = build_cart(data.instances(), data.labels(), data.class_count(), &params);
        let acc = tree.count_correct(data.instances(), data.labels()) as f64 / data.len() as f64;
        let perts = sample_perturbation_set(&data, 200, 5);
        let adv = adversarial_accuracy_over(&tree, &perts, data.labels());
        println!(
            "max_depth {depth:>2}: {:>3} nodes, training accuracy {acc:.3}, accuracy under 200 perturbations {adv:.3}",
            tree.len()
        );
    }
    Ok(())
}
