//! Seeds the tree population with a CART tree, as when importing trees
//! trained by another method, and compares against a cold start.

use std::error::Error;

use coevo_trees::cart::{build_cart, CartParams};
use coevo_trees::dataset::{load_csv, normalize, CsvSchema};
use coevo_trees::engine::{evolve, CoevolutionConfig};
use coevo_trees::metrics::ObjectiveMode;

fn main() -> Result<(), Box<dyn Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/diabetes.csv");
    let (data, _) = normalize(&load_csv(path, &CsvSchema::default())?, 0.05)?;
    let seed_tree = build_cart(
        data.instances(),
        data.labels(),
        data.class_count(),
        &CartParams {
            max_depth: 4,
            ..CartParams::default()
        },
    );
    let config = CoevolutionConfig {
        tree_population: 20,
        perturbation_population: 20,
        alternation_length: 5,
        max_generations: 15,
        top_trees: 8,
        mode: ObjectiveMode::AdversarialAccuracy,
        estimator_samples: 500,
        seed: 4,
        ..CoevolutionConfig::default()
    };
    for (label, warm) in [("cold start", vec![]), ("warm start", vec![seed_tree])] {
        let r = evolve(&data, &config, &warm)?;
        let m = r.final_metrics.expect("estimator enabled");
        println!(
            "{label}: {} imported, fitness {:.4}, adversarial accuracy {:.3} on {} samples",
            r.diagnostics.warm_start_trees, r.best_fitness.value(), m.adversarial_accuracy, m.n_samples
        );
    }
    Ok(())
}
