//! Objectives: accuracy, accuracy under perturbation, regret, worst-case
//! aggregation over a finite perturbation set, and the sampled estimates
//! used to score finished trees.
//!
//! Mixed strategies are scored by their expected metric, so every function
//! here is linear in the member probabilities.

use std::borrow::Borrow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Points};
use crate::keyed::Keyed;
use crate::nash::MixedStrategy;
use crate::perturbation::{PerturbationGenotype, PerturbationSampler};
use crate::tree::TreeGenotype;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("cannot compute accuracy on an empty instance list")]
    EmptyInstances,
    #[error("cannot take a worst case over an empty perturbation set")]
    EmptySet,
    #[error("sample size must be positive")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    AdversarialAccuracy,
    MaxRegret,
}

impl std::str::FromStr for ObjectiveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adversarial-accuracy" | "adv-acc" => Ok(ObjectiveMode::AdversarialAccuracy),
            "max-regret" | "regret" => Ok(ObjectiveMode::MaxRegret),
            other => Err(format!("unknown objective `{other}` (expected adversarial-accuracy or max-regret)")),
        }
    }
}

/// Tree-player score. Higher is better in both modes: worst-case accuracy,
/// or one minus max regret.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fitness(pub f64);

impl Fitness {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Best accuracy achievable on a perturbed copy of the data; regret is
/// measured against it.
pub trait ReferenceOracle: Sync {
    fn best_accuracy(&self, points: &Points, labels: &[usize]) -> f64;
}

/// Reference accuracy of `p`, through the genotype's cache.
pub fn reference_accuracy(p: &PerturbationGenotype, labels: &[usize], oracle: &dyn ReferenceOracle) -> f64 {
    p.reference_accuracy_with(|pts| oracle.best_accuracy(pts, labels))
}

/// A pure individual or a mixed strategy over individuals.
#[derive(Debug)]
pub enum Play<'a, T> {
    Pure(&'a T),
    Mixed(&'a MixedStrategy<T>),
}

impl<T> Clone for Play<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Play<'_, T> {}

impl<'a, T> Play<'a, T> {
    pub fn members(&self) -> Vec<(&'a T, f64)> {
        match *self {
            Play::Pure(t) => vec![(t, 1.0)],
            Play::Mixed(m) => m.iter().map(|(t, p)| (t, p)).collect(),
        }
    }
}

impl<G> Borrow<G> for Keyed<G> {
    fn borrow(&self) -> &G {
        self.genotype()
    }
}

/// Number of correctly classified points.
pub fn correct_count(tree: &TreeGenotype, points: &Points, labels: &[usize]) -> usize {
    tree.count_correct(points, labels)
}

/// Fraction of correct predictions; for a mixed tree, the expected fraction.
pub fn accuracy<T: Borrow<TreeGenotype>>(tree: Play<'_, T>, points: &Points, labels: &[usize]) -> Result<f64, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyInstances);
    }
    let n = labels.len() as f64;
    Ok(tree
        .members()
        .into_iter()
        .map(|(t, p)| p * t.borrow().count_correct(points, labels) as f64 / n)
        .sum())
}

/// Reference accuracy minus the tree's accuracy, before clamping.
pub fn raw_regret(tree: &TreeGenotype, p: &PerturbationGenotype, labels: &[usize], oracle: &dyn ReferenceOracle) -> f64 {
    let acc = tree.count_correct(p.points(), labels) as f64 / labels.len() as f64;
    reference_accuracy(p, labels, oracle) - acc
}

/// Regret clamped at zero (the reference oracle is a heuristic and can lose
/// to the tree it is compared with). Mixed trees get the expected value.
pub fn regret<T: Borrow<TreeGenotype>>(
    tree: Play<'_, T>,
    p: &PerturbationGenotype,
    labels: &[usize],
    oracle: &dyn ReferenceOracle,
) -> f64 {
    tree.members()
        .into_iter()
        .map(|(t, w)| w * raw_regret(t.borrow(), p, labels, oracle).max(0.0))
        .sum()
}

/// Tree-player payoff of one tree against one perturbation: accuracy, or
/// one minus clamped regret.
pub fn pair_payoff(
    mode: ObjectiveMode,
    tree: &TreeGenotype,
    p: &PerturbationGenotype,
    labels: &[usize],
    oracle: &dyn ReferenceOracle,
) -> f64 {
    match mode {
        ObjectiveMode::AdversarialAccuracy => tree.count_correct(p.points(), labels) as f64 / labels.len() as f64,
        ObjectiveMode::MaxRegret => 1.0 - raw_regret(tree, p, labels, oracle).max(0.0),
    }
}

/// Expected tree-player payoff of two (possibly mixed) strategies.
pub fn payoff<T, P>(
    mode: ObjectiveMode,
    tree: Play<'_, T>,
    pert: Play<'_, P>,
    labels: &[usize],
    oracle: &dyn ReferenceOracle,
) -> f64
where
    T: Borrow<TreeGenotype>,
    P: Borrow<PerturbationGenotype>,
{
    let perts = pert.members();
    tree.members()
        .into_iter()
        .map(|(t, wt)| {
            wt * perts
                .iter()
                .map(|(p, wp)| wp * pair_payoff(mode, t.borrow(), (*p).borrow(), labels, oracle))
                .sum::<f64>()
        })
        .sum()
}

/// Worst case over a perturbation set: minimum accuracy, or one minus the
/// maximum regret. Mixed perturbations count as one element scored by their
/// expected metric.
pub fn worst_case_fitness<T, P>(
    tree: Play<'_, T>,
    set: &[Play<'_, P>],
    labels: &[usize],
    mode: ObjectiveMode,
    oracle: &dyn ReferenceOracle,
) -> Result<Fitness, MetricsError>
where
    T: Borrow<TreeGenotype>,
    P: Borrow<PerturbationGenotype>,
{
    if set.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let worst = set
        .iter()
        .map(|&p| payoff(mode, tree, p, labels, oracle))
        .fold(f64::INFINITY, f64::min);
    Ok(Fitness(worst))
}

/// Sampled robustness estimates for one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    /// Fraction of instances classified correctly at their original position
    /// and under every sampled perturbation.
    pub adversarial_accuracy: f64,
    /// Largest clamped regret over the unperturbed data and every sample.
    pub max_regret: f64,
    pub clean_accuracy: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Running state for one tree while streaming samples.
#[derive(Clone)]
struct Tally {
    survived: Vec<bool>,
    max_regret: f64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.survived.iter_mut().zip(other.survived) {
            *a &= b;
        }
        self.max_regret = self.max_regret.max(other.max_regret);
        self
    }
}

fn tally_one(trees: &[&TreeGenotype], p: &PerturbationGenotype, labels: &[usize], oracle: &dyn ReferenceOracle, tallies: &mut [Tally]) {
    let reference = reference_accuracy(p, labels, oracle);
    let n = labels.len() as f64;
    for (tree, tally) in trees.iter().zip(tallies.iter_mut()) {
        let mut correct = 0usize;
        for (i, (x, &y)) in p.points().rows().zip(labels).enumerate() {
            if tree.predict(x) == y {
                correct += 1;
            } else {
                tally.survived[i] = false;
            }
        }
        let regret = (reference - correct as f64 / n).max(0.0);
        tally.max_regret = tally.max_regret.max(regret);
    }
}

/// Scores several trees on the same seeded sample of `n_samples` uniform
/// perturbations (plus the unperturbed data). Work is spread over the
/// current rayon pool; the result does not depend on the thread count.
pub fn estimate_final_metrics_many(
    trees: &[&TreeGenotype],
    data: &Dataset,
    n_samples: usize,
    seed: u64,
    oracle: &dyn ReferenceOracle,
) -> Result<Vec<FinalMetrics>, MetricsError> {
    if n_samples == 0 {
        return Err(MetricsError::NoSamples);
    }
    let labels = data.labels();
    let fresh = || {
        vec![
            Tally {
                survived: vec![true; labels.len()],
                max_regret: 0.0,
            };
            trees.len()
        ]
    };
    let mut base = fresh();
    let identity = PerturbationGenotype::identity(data);
    tally_one(trees, &identity, labels, oracle, &mut base);

    let sampler = PerturbationSampler::new(data, seed);
    const CHUNK: u64 = 64;
    let chunks = (n_samples as u64).div_ceil(CHUNK);
    let merged = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = fresh();
            for k in c * CHUNK..((c + 1) * CHUNK).min(n_samples as u64) {
                tally_one(trees, &sampler.get(k), labels, oracle, &mut local);
            }
            local
        })
        .reduce(fresh, |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect());
    let n = labels.len() as f64;
    Ok(base
        .into_iter()
        .zip(merged)
        .zip(trees)
        .map(|((b, m), tree)| {
            let t = b.merge(m);
            FinalMetrics {
                adversarial_accuracy: t.survived.iter().filter(|&&s| s).count() as f64 / n,
                max_regret: t.max_regret,
                clean_accuracy: tree.count_correct(data.instances(), labels) as f64 / n,
                n_samples,
                seed,
            }
        })
        .collect())
}

pub fn estimate_final_metrics(
    tree: &TreeGenotype,
    data: &Dataset,
    n_samples: usize,
    seed: u64,
    oracle: &dyn ReferenceOracle,
) -> Result<FinalMetrics, MetricsError> {
    Ok(estimate_final_metrics_many(&[tree], data, n_samples, seed, oracle)?.remove(0))
}

/// Per-instance adversarial accuracy over an explicit perturbation list
/// (the unperturbed data is not added).
pub fn adversarial_accuracy_over(tree: &TreeGenotype, perturbations: &[PerturbationGenotype], labels: &[usize]) -> f64 {
    let survived = (0..labels.len())
        .filter(|&i| perturbations.iter().all(|p| tree.predict(p.points().row(i)) == labels[i]))
        .count();
    survived as f64 / labels.len() as f64
}

/// Largest clamped regret over an explicit perturbation list.
pub fn max_regret_over(
    tree: &TreeGenotype,
    perturbations: &[PerturbationGenotype],
    labels: &[usize],
    oracle: &dyn ReferenceOracle,
) -> f64 {
    perturbations
        .iter()
        .map(|p| raw_regret(tree, p, labels, oracle).max(0.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::{CartOracle, CartParams};
    use crate::tree::{SplitOp, TreeExpr};

    struct Fixed(f64);

    impl ReferenceOracle for Fixed {
        fn best_accuracy(&self, _: &Points, _: &[usize]) -> f64 {
            self.0
        }
    }

    fn stump(v: f64) -> TreeGenotype {
        TreeGenotype::from_expr(
            &TreeExpr::split(0, SplitOp::Lt, v, TreeExpr::Leaf(0), TreeExpr::Leaf(1)),
            1,
            2,
        )
        .unwrap()
    }

    fn line() -> Dataset {
        Dataset::from_rows(
            "line",
            vec![vec![0.1], vec![0.3], vec![0.6], vec![0.8], vec![0.9]],
            vec![0, 0, 1, 1, 0],
            2,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn accuracy_of_pure_and_mixed_trees() {
        let d = line();
        let a = stump(0.5); // 4 of 5
        let b = TreeGenotype::leaf(0, 1, 2); // 3 of 5
        assert_eq!(accuracy(Play::Pure(&a), d.instances(), d.labels()).unwrap(), 0.8);
        let mixed = MixedStrategy::new(vec![(a.clone(), 0.5), (b.clone(), 0.5)]).unwrap();
        let m = accuracy(Play::Mixed(&mixed), d.instances(), d.labels()).unwrap();
        assert!((m - 0.7).abs() < 1e-15);
        assert_eq!(accuracy(Play::Pure(&a), &Points::new(vec![], 1), &[]), Err(MetricsError::EmptyInstances));
    }

    #[test]
    fn negative_regret_is_clamped() {
        let d = line();
        let p = PerturbationGenotype::identity(&d);
        let t = stump(0.5);
        assert!((raw_regret(&t, &p, d.labels(), &Fixed(0.6)) + 0.2).abs() < 1e-12);
        assert_eq!(regret(Play::Pure(&t), &p, d.labels(), &Fixed(0.6)), 0.0);
    }

    #[test]
    fn self_regret_is_zero() {
        let d = line();
        let oracle = CartOracle {
            params: CartParams::default(),
            class_count: 2,
        };
        let reference = crate::cart::build_cart(d.instances(), d.labels(), 2, &CartParams::default());
        let p = PerturbationGenotype::identity(&d);
        assert_eq!(regret(Play::Pure(&reference), &p, d.labels(), &oracle), 0.0);
    }

    #[test]
    fn worst_case_over_singleton_and_empty_sets() {
        let d = line();
        let p = PerturbationGenotype::identity(&d);
        let t = stump(0.5);
        let oracle = Fixed(1.0);
        let f = worst_case_fitness(Play::Pure(&t), &[Play::Pure(&p)], d.labels(), ObjectiveMode::AdversarialAccuracy, &oracle).unwrap();
        assert_eq!(f, Fitness(0.8));
        let f = worst_case_fitness(Play::Pure(&t), &[Play::Pure(&p)], d.labels(), ObjectiveMode::MaxRegret, &oracle).unwrap();
        assert!((f.value() - 0.8).abs() < 1e-15);
        let empty: [Play<'_, PerturbationGenotype>; 0] = [];
        assert_eq!(
            worst_case_fitness(Play::Pure(&t), &empty, d.labels(), ObjectiveMode::MaxRegret, &oracle),
            Err(MetricsError::EmptySet)
        );
    }

    #[test]
    fn zero_radius_estimates_equal_clean_metrics() {
        let d = line();
        let oracle = CartOracle {
            params: CartParams::default(),
            class_count: 2,
        };
        let t = stump(0.5);
        let m = estimate_final_metrics(&t, &d, 50, 1, &oracle).unwrap();
        assert_eq!(m.adversarial_accuracy, 0.8);
        assert_eq!(m.clean_accuracy, 0.8);
        let reference = oracle.best_accuracy(d.instances(), d.labels());
        assert!((m.max_regret - (reference - 0.8)).abs() < 1e-15);
    }

    #[test]
    fn estimates_are_monotone_in_sample_size() {
        let d = line().with_epsilon(0.15).unwrap();
        let oracle = CartOracle {
            params: CartParams::default(),
            class_count: 2,
        };
        let t = stump(0.5);
        let mut prev = estimate_final_metrics(&t, &d, 1, 5, &oracle).unwrap();
        for n in [4, 16, 64, 200] {
            let m = estimate_final_metrics(&t, &d, n, 5, &oracle).unwrap();
            assert!(m.adversarial_accuracy <= prev.adversarial_accuracy);
            assert!(m.max_regret >= prev.max_regret);
            assert!(m.adversarial_accuracy <= m.clean_accuracy);
            prev = m;
        }
    }
}
