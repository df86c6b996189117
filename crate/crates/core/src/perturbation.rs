//! Perturbation genotypes: one perturbed copy of every training instance,
//! confined to the ε-ball around it and to the unit box.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{feasible_interval, Dataset, Points};
use crate::keyed::Fingerprint;

/// How a coordinate is redrawn inside its feasible interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerturbationDomain {
    /// Uniform over the whole interval.
    #[default]
    Continuous,
    /// Uniform over `k ≥ 2` evenly spaced points spanning the interval
    /// (endpoints included).
    Grid(usize),
}

impl PerturbationDomain {
    #[inline]
    fn draw<R: Rng + ?Sized>(self, x: f64, epsilon: f64, rng: &mut R) -> f64 {
        let (lo, hi) = feasible_interval(x, epsilon);
        if lo == hi {
            return lo;
        }
        match self {
            PerturbationDomain::Continuous => (lo + (hi - lo) * rng.gen::<f64>()).min(hi),
            PerturbationDomain::Grid(k) => {
                assert!(k >= 2, "a perturbation grid needs at least two points");
                let step = rng.gen_range(0..k);
                grid_point(lo, hi, k, step)
            }
        }
    }
}

impl fmt::Display for PerturbationDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationDomain::Continuous => f.write_str("continuous"),
            PerturbationDomain::Grid(k) => write!(f, "grid:{k}"),
        }
    }
}

impl FromStr for PerturbationDomain {
    type Err = String;

    /// `continuous` or `grid:<k>` with `k >= 2`.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "continuous" {
            return Ok(PerturbationDomain::Continuous);
        }
        match s.strip_prefix("grid:").map(str::parse::<usize>) {
            Some(Ok(k)) if k >= 2 => Ok(PerturbationDomain::Grid(k)),
            _ => Err(format!("unknown perturbation domain `{s}` (expected continuous or grid:<k>, k >= 2)")),
        }
    }
}

impl Serialize for PerturbationDomain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PerturbationDomain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The `step`-th of `k` evenly spaced points on `[lo, hi]`.
pub fn grid_point(lo: f64, hi: f64, k: usize, step: usize) -> f64 {
    if step == 0 {
        lo
    } else if step == k - 1 {
        hi
    } else {
        lo + (hi - lo) * step as f64 / (k - 1) as f64
    }
}

#[derive(Debug)]
pub struct PerturbationGenotype {
    perturbed: Points,
    reference_accuracy: OnceLock<f64>,
}

impl Clone for PerturbationGenotype {
    fn clone(&self) -> Self {
        let cache = OnceLock::new();
        if let Some(&v) = self.reference_accuracy.get() {
            let _ = cache.set(v);
        }
        PerturbationGenotype {
            perturbed: self.perturbed.clone(),
            reference_accuracy: cache,
        }
    }
}

impl PartialEq for PerturbationGenotype {
    fn eq(&self, other: &Self) -> bool {
        self.perturbed == other.perturbed
    }
}

impl PerturbationGenotype {
    pub fn new(perturbed: Points) -> Self {
        PerturbationGenotype {
            perturbed,
            reference_accuracy: OnceLock::new(),
        }
    }

    /// The unperturbed data.
    pub fn identity(data: &Dataset) -> Self {
        PerturbationGenotype::new(data.instances().clone())
    }

    pub fn points(&self) -> &Points {
        &self.perturbed
    }

    pub fn len(&self) -> usize {
        self.perturbed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perturbed.is_empty()
    }

    pub fn cached_reference_accuracy(&self) -> Option<f64> {
        self.reference_accuracy.get().copied()
    }

    /// Returns the cached reference accuracy, computing it on first use.
    /// Concurrent callers may both compute; only one value is stored.
    pub fn reference_accuracy_with(&self, compute: impl FnOnce(&Points) -> f64) -> f64 {
        *self.reference_accuracy.get_or_init(|| compute(&self.perturbed))
    }

    /// Largest coordinate-wise distance to the original instances.
    pub fn max_displacement(&self, data: &Dataset) -> f64 {
        self.perturbed
            .as_slice()
            .iter()
            .zip(data.instances().as_slice())
            .map(|(z, x)| (z - x).abs())
            .fold(0.0, f64::max)
    }

    /// Whether every coordinate is inside its ε-ball and the unit box.
    pub fn is_feasible(&self, data: &Dataset, tolerance: f64) -> bool {
        self.perturbed.len() == data.len()
            && self.perturbed.dim() == data.feature_count()
            && self
                .perturbed
                .as_slice()
                .iter()
                .zip(data.instances().as_slice())
                .all(|(&z, &x)| (z - x).abs() <= data.epsilon() + tolerance && (0.0..=1.0).contains(&z))
    }
}

impl Fingerprint for PerturbationGenotype {
    fn fingerprint_into<H: Hasher>(&self, state: &mut H) {
        self.perturbed.dim().hash(state);
        for v in self.perturbed.as_slice() {
            v.to_bits().hash(state);
        }
    }
}

pub fn random_perturbation<R: Rng + ?Sized>(data: &Dataset, domain: PerturbationDomain, rng: &mut R) -> PerturbationGenotype {
    let eps = data.epsilon();
    let coords = data
        .instances()
        .as_slice()
        .iter()
        .map(|&x| domain.draw(x, eps, rng))
        .collect();
    PerturbationGenotype::new(Points::new(coords, data.feature_count()))
}

/// For each instance a fair coin decides which parent the first child copies
/// it from; the second child takes the other parent's copy.
pub fn crossover_perturbations<R: Rng + ?Sized>(
    a: &PerturbationGenotype,
    b: &PerturbationGenotype,
    rng: &mut R,
) -> (PerturbationGenotype, PerturbationGenotype) {
    assert_eq!(a.len(), b.len(), "parents must cover the same dataset");
    let mut first = a.perturbed.clone();
    let mut second = b.perturbed.clone();
    for k in 0..a.len() {
        if rng.gen_bool(0.5) {
            first.row_mut(k).copy_from_slice(b.perturbed.row(k));
            second.row_mut(k).copy_from_slice(a.perturbed.row(k));
        }
    }
    (PerturbationGenotype::new(first), PerturbationGenotype::new(second))
}

/// Redraws each coordinate independently with probability 1/2.
pub fn mutate_perturbation<R: Rng + ?Sized>(
    p: &PerturbationGenotype,
    data: &Dataset,
    domain: PerturbationDomain,
    rng: &mut R,
) -> PerturbationGenotype {
    let eps = data.epsilon();
    let mut out = p.perturbed.clone();
    let d = data.feature_count();
    for i in 0..data.len() {
        let original = data.instances().row(i);
        let row = out.row_mut(i);
        for j in 0..d {
            if rng.gen_bool(0.5) {
                row[j] = domain.draw(original[j], eps, rng);
            }
        }
    }
    PerturbationGenotype::new(out)
}

/// Reproducible stream of i.i.d. uniform perturbations: the genotype at
/// index `k` depends only on `(seed, k)`, so any subset can be regenerated
/// or computed in parallel.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationSampler<'a> {
    data: &'a Dataset,
    seed: u64,
}

impl<'a> PerturbationSampler<'a> {
    pub fn new(data: &'a Dataset, seed: u64) -> Self {
        PerturbationSampler { data, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, index: u64) -> PerturbationGenotype {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        random_perturbation(self.data, PerturbationDomain::Continuous, &mut rng)
    }
}

/// `n` i.i.d. uniform perturbations; the same seed always gives the same set.
pub fn sample_perturbation_set(data: &Dataset, n: usize, seed: u64) -> Vec<PerturbationGenotype> {
    assert!(n >= 1, "sample size must be positive");
    let sampler = PerturbationSampler::new(data, seed);
    (0..n as u64).map(|k| sampler.get(k)).collect()
}
