//! Coevolutionary construction of decision trees that stay accurate when
//! their inputs are moved anywhere inside an L∞ ball of radius ε.
//!
//! Two populations are evolved against each other: candidate trees, and
//! perturbation genotypes that hold one perturbed copy of every training
//! instance. Trees are scored by their worst case over the perturbations
//! they face (adversarial accuracy, or one minus max regret), perturbations
//! by how much they hurt the strongest trees. Every generation the two
//! populations are treated as the pure strategies of a zero-sum game; the
//! mixed Nash equilibrium of that game is archived in a hall of fame whose
//! members keep taking part in later evaluations.
//!
//! The building blocks are usable on their own:
//!
//! - [`dataset`]: CSV loading and min–max normalization.
//! - [`tree`]: the node-list tree genotype and its genetic operators.
//! - [`perturbation`]: perturbation genotypes and the seeded sampler used
//!   for final scoring.
//! - [`metrics`]: accuracy, regret, worst-case aggregation and sampled
//!   estimates.
//! - [`cart`]: greedy Gini trees, used as the regret reference and as a
//!   baseline.
//! - [`nash`]: payoff matrices, Lemke–Howson and support enumeration.
//! - [`hof`]: the hall-of-fame archive and its construction policies.
//! - [`engine`]: the alternating coevolution loop.
//! - [`cli`]: the command-line front end and the run report.
//!
//! ```
//! use coevo_trees::dataset::Dataset;
//! use coevo_trees::engine::{evolve, CoevolutionConfig};
//! use coevo_trees::metrics::ObjectiveMode;
//!
//! let data = Dataset::from_rows(
//!     "toy",
//!     vec![vec![0.1], vec![0.2], vec![0.8], vec![0.9]],
//!     vec![0, 0, 1, 1],
//!     2,
//!     0.05,
//! )
//! .unwrap();
//! let config = CoevolutionConfig {
//!     tree_population: 12,
//!     perturbation_population: 12,
//!     max_generations: 10,
//!     alternation_length: 2,
//!     top_trees: 4,
//!     mode: ObjectiveMode::AdversarialAccuracy,
//!     estimator_samples: 0,
//!     ..CoevolutionConfig::default()
//! };
//! let result = evolve(&data, &config, &[]).unwrap();
//! assert!(result.best_fitness.value() > 0.5);
//! ```

pub mod cart;
pub mod cli;
pub mod dataset;
pub mod engine;
pub mod hof;
pub mod metrics;
pub mod nash;
pub mod perturbation;
pub mod tree;

mod keyed;

pub use keyed::{Fingerprint, Keyed};
