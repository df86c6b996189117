//! Loads a CSV, normalizes it to the unit box and shows the ε-feasible
//! interval of a few coordinates.
//!
//! ```text
//! cargo run --example dataset_tour -- [path.csv] [epsilon]
//! ```

use std::error::Error;

use coevo_trees::dataset::{load_csv, normalize, CsvSchema};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/diabetes.csv").to_string());
    let epsilon: f64 = args.next().map_or(Ok(0.05), |s| s.parse())?;

    let raw = load_csv(&path, &CsvSchema::default())?;
    let (data, scaling) = normalize(&raw, epsilon)?;
    println!("{}: {} instances, {} features, {} classes", data.name(), data.len(), data.feature_count(), data.class_count());
    for (c, (name, count)) in raw.class_names.iter().zip(data.class_histogram()).enumerate() {
        println!("  class {c} = {name:?}: {count}");
    }
    for (j, name) in raw.feature_names.iter().enumerate() {
        let (lo, hi) = scaling.ranges[j];
        let splittable = if data.splittable()[j] { "" } else { " (constant)" };
        println!("  {name:<20} raw range [{lo}, {hi}]{splittable}");
    }

    let x = data.instances().row(0);
    println!("first instance, normalized: {x:.3?}");
    for j in 0..data.feature_count().min(3) {
        let (lo, hi) = data.feasible_interval(0, j);
        println!(
            "  feature {j}: may move within [{lo:.3}, {hi:.3}], raw [{:.3}, {:.3}]",
            scaling.denormalize_value(j, lo),
            scaling.denormalize_value(j, hi)
        );
    }
    Ok(())
}
