//! Trains a robust tree on one of the bundled benchmark datasets and scores
//! it next to a CART baseline on one shared perturbation sample.
//!
//! ```text
//! cargo run --release --example train_benchmark -- [breast|diabetes] [max-regret|adversarial-accuracy] [generations] [samples] [seed]
//! ```

use std::error::Error;
use std::time::Instant;

use coevo_trees::cart::{build_cart, CartOracle};
use coevo_trees::dataset::{load_csv, normalize, CsvSchema};
use coevo_trees::engine::{evolve_with, CoevolutionConfig, GenerationEvent, ProgressSink, SubroutineEvent};
use coevo_trees::metrics::{estimate_final_metrics_many, ObjectiveMode};

struct Every(usize);

impl ProgressSink for Every {
    fn generation(&mut self, e: &GenerationEvent) {
        if e.total_generation % self.0 == 0 {
            eprintln!(
                "gen {:>4} ({:?}) best {:.4} mean {:.4} adversary {:.4} hof {}/{}",
                e.tree_generation, e.phase, e.tree_best, e.tree_mean, e.perturbation_best, e.hof_trees, e.hof_perturbations
            );
        }
    }

    fn subroutine(&mut self, e: &SubroutineEvent) {
        eprintln!(
            "stagnation at gen {}: tested {} trees, {}",
            e.tree_generation,
            e.trees_tested,
            if e.success { "found new perturbations" } else { "nothing new" }
        );
    }
}

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "breast".into());
    let epsilon = match name.as_str() {
        "breast" => 0.3,
        "diabetes" => 0.05,
        other => return Err(format!("unknown dataset `{other}`").into()),
    };
    let mode: ObjectiveMode = args.next().as_deref().unwrap_or("max-regret").parse()?;
    let generations: usize = args.next().map_or(Ok(100), |s| s.parse())?;
    let samples: usize = args.next().map_or(Ok(10_000), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let path = format!("{}/data/{name}.csv", env!("CARGO_MANIFEST_DIR"));
    let (data, _) = normalize(&load_csv(path, &CsvSchema::default())?, epsilon)?;

    let config = CoevolutionConfig {
        mode,
        max_generations: generations,
        estimator_samples: 0,
        seed,
        ..CoevolutionConfig::default()
    };
    let start = Instant::now();
    let result = evolve_with(&data, &config, &[], &mut Every(10))?;
    println!(
        "{:?} after {} generations in {:.1?}: fitness {:.4}, depth {}, {} nodes",
        result.stop_reason,
        result.generations_run,
        start.elapsed(),
        result.best_fitness.value(),
        result.best_tree.depth(),
        result.best_tree.len()
    );
    if samples == 0 {
        return Ok(());
    }

    let oracle = CartOracle {
        params: config.cart_params(),
        class_count: data.class_count(),
    };
    let cart = build_cart(data.instances(), data.labels(), data.class_count(), &config.cart_params());
    let start = Instant::now();
    let scored = estimate_final_metrics_many(&[&result.best_tree, &cart], &data, samples, 2024, &oracle)?;
    println!("scored on {samples} perturbations in {:.1?}", start.elapsed());
    for (label, m) in ["coevolved", "cart"].iter().zip(&scored) {
        println!(
            "{label:>10}: clean {:.3}  adversarial accuracy {:.3}  max regret {:.3}",
            m.clean_accuracy, m.adversarial_accuracy, m.max_regret
        );
    }
    Ok(())
}
