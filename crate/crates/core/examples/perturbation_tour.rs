//! Perturbation genotypes: random draws inside the ε-ball, crossover,
//! mutation, the grid domain and the seeded sampler behind final scoring.

use coevo_trees::dataset::Dataset;
use coevo_trees::perturbation::{
    crossover_perturbations, mutate_perturbation, random_perturbation, sample_perturbation_set, PerturbationDomain,
    PerturbationSampler,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_shift(data: &Dataset, p: &coevo_trees::perturbation::PerturbationGenotype) -> f64 {
    data.instances()
        .as_slice()
        .iter()
        .zip(p.points().as_slice())
        .map(|(x, z)| (x - z).abs())
        .fold(0.0, f64::max)
}

fn main() {
    let data = Dataset::from_rows(
        "toy",
        vec![vec![0.1, 0.9], vec![0.5, 0.5], vec![0.95, 0.0]],
        vec![0, 1, 1],
        2,
        0.1,
    )
    .expect("valid data");
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let p = random_perturbation(&data, PerturbationDomain::Continuous, &mut rng);
    let q = random_perturbation(&data, PerturbationDomain::Continuous, &mut rng);
    println!("random perturbation: {:.3?}", p.points().as_slice());
    println!("largest coordinate shift {:.4} (epsilon {})", max_shift(&data, &p), data.epsilon());

    let (c, _) = crossover_perturbations(&p, &q, &mut rng);
    let m = mutate_perturbation(&c, &data, PerturbationDomain::Continuous, &mut rng);
    println!("after crossover and mutation, shift {:.4}", max_shift(&data, &m));

    let grid: PerturbationDomain = "grid:3".parse().expect("grid domain");
    let g = random_perturbation(&data, grid, &mut rng);
    println!("{grid} perturbation: {:.3?}", g.points().as_slice());

    let sampler = PerturbationSampler::new(&data, 42);
    let set = sample_perturbation_set(&data, 5, 42);
    assert_eq!(sampler.get(3), set[3]);
    println!("sample 3 regenerates identically from (seed 42, index 3)");
}
