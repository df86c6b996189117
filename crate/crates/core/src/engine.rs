//! The alternating coevolution loop.
//!
//! Trees and perturbations take turns: `alternation_length` generations of
//! one population against the (fixed) other one, then the reverse. After
//! every generation both populations are treated as a matrix game whose
//! equilibrium feeds the hall-of-fame archives.
//!
//! Pairwise scores are memoized by genotype fingerprint, so re-evaluating
//! survivors and archive members is a table lookup.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cart::{CartOracle, CartParams};
use crate::dataset::Dataset;
use crate::hof::{policy_candidates, HallOfFame, HofPolicy, HofSummary};
use crate::keyed::{Fingerprint, KeyBuild, Keyed};
use crate::metrics::{
    estimate_final_metrics, payoff, reference_accuracy, worst_case_fitness, FinalMetrics, Fitness,
    MetricsError, ObjectiveMode, Play, ReferenceOracle,
};
use crate::nash::{solve, MixedStrategy, PayoffMatrix};
use crate::perturbation::{
    crossover_perturbations, mutate_perturbation, random_perturbation, PerturbationDomain, PerturbationGenotype,
};
use crate::tree::{crossover_trees, mutate_candidates, random_tree, TreeError, TreeGenotype, TreeSpace, MAX_DEPTH_CAP};

/// Two fitness values closer than this count as equal.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("warm-start tree {index}: {source}")]
    WarmStart {
        index: usize,
        #[source]
        source: TreeError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// How a perturbation's scores against its target trees are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Mean,
    Min,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "min" => Ok(Aggregation::Min),
            other => Err(format!("unknown aggregation `{other}` (expected mean or min)")),
        }
    }
}

mod capacity {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_u64(*n as u64),
            None => s.serialize_str("unbounded"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Some(n as usize)),
            Raw::S(s) if s == "unbounded" => Ok(None),
            Raw::S(s) => Err(de::Error::custom(format!("expected a size or \"unbounded\", got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoevolutionConfig {
    pub tree_population: usize,
    pub perturbation_population: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    /// Probability that the fitter of two tournament entrants wins.
    pub selection_pressure: f64,
    pub elite_count: usize,
    /// Generations per phase, and the no-improvement window.
    pub alternation_length: usize,
    /// Limit on tree generations.
    pub max_generations: usize,
    /// Number of best trees perturbations are scored against.
    pub top_trees: usize,
    pub mutation_trials: usize,
    /// Depth range for freshly grown trees and subtrees.
    pub depth_interval: (usize, usize),
    /// Hard depth cap applied after every operator.
    pub max_depth: usize,
    pub mode: ObjectiveMode,
    pub hof_policy: HofPolicy,
    /// `None` leaves the archives unbounded, `Some(0)` disables them.
    #[serde(with = "capacity")]
    pub hof_max_size: Option<usize>,
    pub perturbation_aggregation: Aggregation,
    pub perturbation_domain: PerturbationDomain,
    pub cart_max_depth: usize,
    pub cart_min_samples_split: usize,
    pub cart_min_impurity_decrease: f64,
    pub seed: u64,
    /// Sampled perturbations used to score the returned tree; 0 skips it.
    pub estimator_samples: usize,
    pub estimator_seed: u64,
}

impl Default for CoevolutionConfig {
    fn default() -> Self {
        let cart = CartParams::default();
        CoevolutionConfig {
            tree_population: 50,
            perturbation_population: 50,
            crossover_probability: 0.8,
            mutation_probability: 0.5,
            selection_pressure: 0.9,
            elite_count: 2,
            alternation_length: 20,
            max_generations: 1000,
            top_trees: 20,
            mutation_trials: 10,
            depth_interval: (2, 10),
            max_depth: MAX_DEPTH_CAP,
            mode: ObjectiveMode::MaxRegret,
            hof_policy: HofPolicy::NashMixed,
            hof_max_size: Some(500),
            perturbation_aggregation: Aggregation::Mean,
            perturbation_domain: PerturbationDomain::Continuous,
            cart_max_depth: cart.max_depth,
            cart_min_samples_split: cart.min_samples_split,
            cart_min_impurity_decrease: cart.min_impurity_decrease,
            seed: 0,
            estimator_samples: 100_000,
            estimator_seed: 0,
        }
    }
}

impl CoevolutionConfig {
    pub fn cart_params(&self) -> CartParams {
        CartParams {
            max_depth: self.cart_max_depth,
            min_samples_split: self.cart_min_samples_split,
            min_impurity_decrease: self.cart_min_impurity_decrease,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |m: String| Err(EngineError::Config(m));
        if self.tree_population < 2 || self.perturbation_population < 2 {
            return fail("population sizes must be at least 2".into());
        }
        for (name, p) in [
            ("crossover_probability", self.crossover_probability),
            ("mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(0.5..=1.0).contains(&self.selection_pressure) {
            return fail(format!("selection_pressure must lie in [0.5, 1], got {}", self.selection_pressure));
        }
        if self.elite_count >= self.tree_population.min(self.perturbation_population) {
            return fail("elite_count must be smaller than both population sizes".into());
        }
        if self.alternation_length < 1 {
            return fail("alternation_length must be at least 1".into());
        }
        if self.max_generations < self.alternation_length {
            return fail("max_generations must be at least alternation_length".into());
        }
        if self.top_trees < 1 || self.top_trees > self.tree_population {
            return fail("top_trees must lie in [1, tree_population]".into());
        }
        if self.mutation_trials < 1 {
            return fail("mutation_trials must be at least 1".into());
        }
        let (lo, hi) = self.depth_interval;
        if lo < 1 || lo > hi || hi > self.max_depth || self.max_depth > MAX_DEPTH_CAP {
            return fail(format!(
                "need 1 <= depth_interval.0 <= depth_interval.1 <= max_depth <= {MAX_DEPTH_CAP}"
            ));
        }
        if let PerturbationDomain::Grid(k) = self.perturbation_domain {
            if k < 2 {
                return fail("a perturbation grid needs at least two points".into());
            }
        }
        self.cart_params().validate().map_err(|e| EngineError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GenerationLimit,
    NoImprovement,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Tree–perturbation pairs whose regret came out negative and was
    /// clamped to zero.
    pub clamped_regrets: usize,
    pub pair_evaluations: usize,
    pub nash_solves: usize,
    /// Failed solver attempts that were retried another way.
    pub nash_fallbacks: usize,
    /// Generations where no equilibrium was found at all.
    pub nash_failures: usize,
    pub hof_trees: HofSummary,
    pub hof_perturbations: HofSummary,
    pub subroutine_invocations: usize,
    pub subroutine_successes: usize,
    pub subroutine_trees_tested: usize,
    pub subroutine_perturbations_added: usize,
    pub warm_start_trees: usize,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub best_tree: TreeGenotype,
    pub best_fitness: Fitness,
    /// Tree generations run.
    pub generations_run: usize,
    pub stop_reason: StopReason,
    pub final_metrics: Option<FinalMetrics>,
    pub diagnostics: Diagnostics,
    /// Final tree population with fitness, in population order.
    pub final_population: Vec<(TreeGenotype, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Trees,
    Perturbations,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationEvent {
    pub phase: Phase,
    /// Tree generations completed so far.
    pub tree_generation: usize,
    /// Generations of both phases completed so far.
    pub total_generation: usize,
    pub tree_best: f64,
    pub tree_mean: f64,
    pub perturbation_best: f64,
    pub best_found: f64,
    pub hof_trees: usize,
    pub hof_perturbations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubroutineEvent {
    pub tree_generation: usize,
    pub trees_tested: usize,
    pub success: bool,
    /// Keys of perturbations that entered the population.
    pub added: Vec<u128>,
    /// Keys of the perturbation population afterwards.
    pub population: Vec<u128>,
}

/// Receives progress reports during [`evolve_with`].
pub trait ProgressSink {
    fn generation(&mut self, _event: &GenerationEvent) {}
    fn subroutine(&mut self, _event: &SubroutineEvent) {}
}

impl ProgressSink for () {}

/// Elites (fitness-descending, ties by position) followed by binary
/// tournament winners; entrants are drawn with replacement and the fitter
/// one wins with probability `pressure`. Returns indices into `fitness`.
pub fn select_next_generation<R: Rng + ?Sized>(
    fitness: &[f64],
    n: usize,
    elites: usize,
    pressure: f64,
    rng: &mut R,
) -> Vec<usize> {
    assert!(!fitness.is_empty() && fitness.len() >= elites.min(n), "not enough individuals to select from");
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    let mut out: Vec<usize> = order[..elites.min(n)].to_vec();
    while out.len() < n {
        let a = rng.gen_range(0..fitness.len());
        let b = rng.gen_range(0..fitness.len());
        let (better, worse) = if fitness[a] >= fitness[b] { (a, b) } else { (b, a) };
        out.push(if rng.gen_bool(pressure) { better } else { worse });
    }
    out
}

/// Indices of the `n` fittest individuals with distinct keys, best first.
pub fn top_distinct<G>(population: &[Keyed<G>], fitness: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    let mut seen = HashSet::new();
    order.into_iter().filter(|&i| seen.insert(population[i].key())).take(n).collect()
}

/// Worst-case fitness of each tree against an evaluation set, computed
/// directly from the metrics.
pub fn evaluate_tree_population<T, P>(
    trees: &[T],
    set: &[Play<'_, P>],
    labels: &[usize],
    mode: ObjectiveMode,
    oracle: &dyn ReferenceOracle,
) -> Result<Vec<Fitness>, MetricsError>
where
    T: std::borrow::Borrow<TreeGenotype>,
    P: std::borrow::Borrow<PerturbationGenotype>,
{
    trees
        .iter()
        .map(|t| worst_case_fitness(Play::Pure(t), set, labels, mode, oracle))
        .collect()
}

/// Fitness of each perturbation: its adversary payoff (one minus the tree
/// payoff) combined over the target trees.
pub fn evaluate_perturbation_population<T, P>(
    perturbations: &[P],
    targets: &[Play<'_, T>],
    labels: &[usize],
    mode: ObjectiveMode,
    aggregation: Aggregation,
    oracle: &dyn ReferenceOracle,
) -> Result<Vec<f64>, MetricsError>
where
    T: std::borrow::Borrow<TreeGenotype>,
    P: std::borrow::Borrow<PerturbationGenotype>,
{
    if targets.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    Ok(perturbations
        .iter()
        .map(|p| {
            let scores = targets.iter().map(|&t| 1.0 - payoff(mode, t, Play::Pure(p), labels, oracle));
            match aggregation {
                Aggregation::Mean => scores.sum::<f64>() / targets.len() as f64,
                Aggregation::Min => scores.fold(f64::INFINITY, f64::min),
            }
        })
        .collect())
}

pub fn evolve(data: &Dataset, config: &CoevolutionConfig, warm_start: &[TreeGenotype]) -> Result<TrainResult, EngineError> {
    evolve_with(data, config, warm_start, &mut ())
}

/// Runs the coevolution. Parallel work goes to the current rayon pool; the
/// result does not depend on its size.
pub fn evolve_with(
    data: &Dataset,
    config: &CoevolutionConfig,
    warm_start: &[TreeGenotype],
    sink: &mut dyn ProgressSink,
) -> Result<TrainResult, EngineError> {
    config.validate()?;
    for (index, t) in warm_start.iter().enumerate() {
        t.check_compatible(data).map_err(|source| EngineError::WarmStart { index, source })?;
    }
    Run::new(data, config, warm_start, sink).run()
}

type Tree = Keyed<TreeGenotype>;
type Pert = Keyed<PerturbationGenotype>;
/// Pairs computed during one evaluation, kept apart from the cache until
/// the caller decides to keep them. `counted` holds bare counts from bound
/// probes.
#[derive(Default)]
struct Fresh {
    pairs: Vec<FreshPair>,
    counted: Vec<((u128, u128), u32)>,
}

impl Fresh {
    fn counted(&self, key: (u128, u128)) -> Option<u32> {
        self.counted.iter().find(|e| e.0 == key).map(|e| e.1)
    }
}

struct FreshPair {
    key: (u128, u128),
    correct: u32,
    clamped: bool,
}

/// Memoized pairwise scores.
struct Scorer<'a> {
    labels: &'a [usize],
    mode: ObjectiveMode,
    oracle: CartOracle,
    cache: HashMap<(u128, u128), u32, KeyBuild>,
}

impl Scorer<'_> {
    fn tree_payoff(&self, t: &Tree, p: &Pert, fresh: &mut Fresh) -> f64 {
        let key = (t.key(), p.key());
        match self.cache.get(&key) {
            Some(&c) => self.payoff_from(c, p),
            None => {
                let correct = fresh.counted(key).unwrap_or_else(|| t.count_correct(p.points(), self.labels) as u32);
                self.fresh_payoff(t, p, correct, fresh)
            }
        }
    }

    fn fresh_payoff(&self, t: &Tree, p: &Pert, correct: u32, fresh: &mut Fresh) -> f64 {
        let v = self.payoff_from(correct, p);
        let clamped = self.mode == ObjectiveMode::MaxRegret
            && reference_accuracy(p, self.labels, &self.oracle) < correct as f64 / self.labels.len() as f64;
        fresh.pairs.push(FreshPair {
            key: (t.key(), p.key()),
            correct,
            clamped,
        });
        v
    }

    /// A lower bound on the tree payoff that never fits a reference tree:
    /// an uncached reference accuracy is taken to be 1.
    /// `tree_payoff`, or `None` as soon as the payoff is known to be below
    /// `beat`. Nothing is recorded in that case.
    fn tree_payoff_above(&self, t: &Tree, p: &Pert, beat: f64, fresh: &mut Fresh) -> Option<f64> {
        if let Some(&c) = self.cache.get(&(t.key(), p.key())) {
            return Some(self.payoff_from(c, p)).filter(|&v| v > beat);
        }
        let n = self.labels.len() as u32;
        if self.payoff_from(n, p) <= beat {
            return None;
        }
        // Smallest count whose payoff exceeds `beat`; payoff is monotone in it.
        let (mut lo, mut hi) = (0u32, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.payoff_from(mid, p) > beat {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let correct = t.count_correct_at_least(p.points(), self.labels, lo as usize)?;
        Some(self.fresh_payoff(t, p, correct as u32, fresh))
    }

    fn tree_payoff_floor(&self, t: &Tree, p: &Pert, fresh: &mut Fresh) -> f64 {
        let key = (t.key(), p.key());
        let correct = match self.cache.get(&key).copied().or_else(|| fresh.counted(key)) {
            Some(c) => c,
            None => {
                let c = t.count_correct(p.points(), self.labels) as u32;
                fresh.counted.push((key, c));
                c
            }
        };
        match (self.mode, p.cached_reference_accuracy()) {
            (ObjectiveMode::MaxRegret, None) => correct as f64 / self.labels.len() as f64,
            _ => self.payoff_from(correct, p),
        }
    }

    fn payoff_from(&self, correct: u32, p: &Pert) -> f64 {
        let acc = correct as f64 / self.labels.len() as f64;
        match self.mode {
            ObjectiveMode::AdversarialAccuracy => acc,
            ObjectiveMode::MaxRegret => 1.0 - (reference_accuracy(p, self.labels, &self.oracle) - acc).max(0.0),
        }
    }

    fn absorb(&mut self, fresh: Fresh, diag: &mut Diagnostics) {
        for f in fresh.pairs {
            if let std::collections::hash_map::Entry::Vacant(e) = self.cache.entry(f.key) {
                e.insert(f.correct);
                diag.pair_evaluations += 1;
                diag.clamped_regrets += usize::from(f.clamped);
            }
        }
    }
}

/// An evaluation set flattened to weighted references into a list of
/// distinct genotypes.
struct Opponents<G> {
    genotypes: Vec<Keyed<G>>,
    elements: Vec<Vec<(usize, f64)>>,
}

impl<G> Opponents<G> {
    fn new(plays: &[Play<'_, Keyed<G>>]) -> Self {
        let mut index: HashMap<u128, usize> = HashMap::new();
        let mut genotypes: Vec<Keyed<G>> = Vec::new();
        let mut elements = Vec::with_capacity(plays.len());
        for play in plays {
            let mut element = Vec::new();
            for (g, w) in play.members() {
                let i = match index.get(&g.key()) {
                    Some(&i) => i,
                    None => {
                        genotypes.push(g.clone());
                        index.insert(g.key(), genotypes.len() - 1);
                        genotypes.len() - 1
                    }
                };
                element.push((i, w));
            }
            elements.push(element);
        }
        Opponents { genotypes, elements }
    }
}

struct Ctx<'a> {
    data: &'a Dataset,
    space: &'a TreeSpace,
    domain: PerturbationDomain,
}

/// What the generation step needs to know about one side of the game.
trait Individual: Fingerprint + Send + Sync + Sized + 'static {
    type Opponent: Send + Sync + 'static;
    fn random<R: Rng>(ctx: &Ctx<'_>, rng: &mut R) -> Self;
    fn crossover<R: Rng>(a: &Self, b: &Self, ctx: &Ctx<'_>, rng: &mut R) -> (Self, Self);
    fn mutants<R: Rng>(a: &Self, ctx: &Ctx<'_>, trials: usize, rng: &mut R) -> Vec<Self>;
    /// Tree payoff of `me` against `other`.
    fn pair(scorer: &Scorer<'_>, me: &Keyed<Self>, other: &Keyed<Self::Opponent>, fresh: &mut Fresh) -> f64;
    /// A cheap upper bound on the exact `pair` result's effect on fitness,
    /// if this side has one: perturbation fitness falls as tree payoff
    /// rises, so a tree-payoff floor bounds it from above.
    fn pair_bound(scorer: &Scorer<'_>, me: &Keyed<Self>, other: &Keyed<Self::Opponent>, fresh: &mut Fresh) -> Option<f64>;
    fn has_bound(scorer: &Scorer<'_>) -> bool;
    /// `pair`, or `None` if the result does not exceed `beat`.
    fn pair_above(scorer: &Scorer<'_>, me: &Keyed<Self>, other: &Keyed<Self::Opponent>, beat: f64, fresh: &mut Fresh) -> Option<f64> {
        Some(Self::pair(scorer, me, other, fresh)).filter(|&v| v > beat)
    }
    /// How per-opponent tree payoffs become this side's fitness.
    fn aggregation(config: &CoevolutionConfig) -> (Aggregation, bool);
}

impl Individual for TreeGenotype {
    type Opponent = PerturbationGenotype;

    fn random<R: Rng>(ctx: &Ctx<'_>, rng: &mut R) -> Self {
        random_tree(ctx.space, rng)
    }

    fn crossover<R: Rng>(a: &Self, b: &Self, ctx: &Ctx<'_>, rng: &mut R) -> (Self, Self) {
        crossover_trees(a, b, ctx.space, rng)
    }

    fn mutants<R: Rng>(a: &Self, ctx: &Ctx<'_>, trials: usize, rng: &mut R) -> Vec<Self> {
        mutate_candidates(a, ctx.space, trials, rng)
    }

    fn pair(scorer: &Scorer<'_>, me: &Tree, other: &Pert, fresh: &mut Fresh) -> f64 {
        scorer.tree_payoff(me, other, fresh)
    }

    fn has_bound(_: &Scorer<'_>) -> bool {
        false
    }

    fn pair_bound(_: &Scorer<'_>, _: &Tree, _: &Pert, _: &mut Fresh) -> Option<f64> {
        None
    }

    fn pair_above(scorer: &Scorer<'_>, me: &Tree, other: &Pert, beat: f64, fresh: &mut Fresh) -> Option<f64> {
        scorer.tree_payoff_above(me, other, beat, fresh)
    }

    fn aggregation(_: &CoevolutionConfig) -> (Aggregation, bool) {
        (Aggregation::Min, false)
    }
}

impl Individual for PerturbationGenotype {
    type Opponent = TreeGenotype;

    fn random<R: Rng>(ctx: &Ctx<'_>, rng: &mut R) -> Self {
        random_perturbation(ctx.data, ctx.domain, rng)
    }

    fn crossover<R: Rng>(a: &Self, b: &Self, _: &Ctx<'_>, rng: &mut R) -> (Self, Self) {
        crossover_perturbations(a, b, rng)
    }

    fn mutants<R: Rng>(a: &Self, ctx: &Ctx<'_>, trials: usize, rng: &mut R) -> Vec<Self> {
        (0..trials).map(|_| mutate_perturbation(a, ctx.data, ctx.domain, rng)).collect()
    }

    fn pair(scorer: &Scorer<'_>, me: &Pert, other: &Tree, fresh: &mut Fresh) -> f64 {
        scorer.tree_payoff(other, me, fresh)
    }

    fn has_bound(scorer: &Scorer<'_>) -> bool {
        scorer.mode == ObjectiveMode::MaxRegret
    }

    fn pair_bound(scorer: &Scorer<'_>, me: &Pert, other: &Tree, fresh: &mut Fresh) -> Option<f64> {
        Self::has_bound(scorer).then(|| scorer.tree_payoff_floor(other, me, fresh))
    }

    fn aggregation(config: &CoevolutionConfig) -> (Aggregation, bool) {
        (config.perturbation_aggregation, true)
    }
}

/// Fitness of a (possibly mixed) candidate against `opp`. Returns `None`
/// once the result is certain not to exceed `beat`.
fn score<I: Individual>(
    scorer: &Scorer<'_>,
    candidate: &[(&Keyed<I>, f64)],
    opp: &Opponents<I::Opponent>,
    agg: (Aggregation, bool),
    beat: Option<f64>,
    fresh: &mut Fresh,
    use_bound: bool,
) -> Option<f64> {
    score_ordered(scorer, candidate, opp, agg, beat, fresh, use_bound, None)
}

/// `score` visiting elements in `order`. Under `Min` the element that
/// causes pruning moves to the front, so later siblings hit it first.
#[allow(clippy::too_many_arguments)]
fn score_ordered<I: Individual>(
    scorer: &Scorer<'_>,
    candidate: &[(&Keyed<I>, f64)],
    opp: &Opponents<I::Opponent>,
    (aggregation, adversary): (Aggregation, bool),
    beat: Option<f64>,
    fresh: &mut Fresh,
    use_bound: bool,
    mut order: Option<&mut Vec<usize>>,
) -> Option<f64> {
    let mut memo = vec![vec![f64::NAN; opp.genotypes.len()]; candidate.len()];
    let total = opp.elements.len();
    let mut acc = match aggregation {
        Aggregation::Min => f64::INFINITY,
        Aggregation::Mean => 0.0,
    };
    let early = aggregation == Aggregation::Min && !adversary && !use_bound && candidate.len() == 1 && candidate[0].1 == 1.0;
    for idx in 0..total {
        let k = order.as_ref().map_or(idx, |o| o[idx]);
        let element = &opp.elements[k];
        let mut v = 0.0;
        let mut beaten = false;
        for (m, &(me, w)) in candidate.iter().enumerate() {
            let mut inner = 0.0;
            for &(j, q) in element {
                let cell = &mut memo[m][j];
                if cell.is_nan() {
                    let other = &opp.genotypes[j];
                    *cell = match (use_bound, beat) {
                        (true, _) => I::pair_bound(scorer, me, other, fresh).expect("bound requested only where available"),
                        (false, Some(b)) if early && element.len() == 1 && q == 1.0 => match I::pair_above(scorer, me, other, b, fresh) {
                            Some(x) => x,
                            None => {
                                beaten = true;
                                break;
                            }
                        },
                        (false, _) => I::pair(scorer, me, other, fresh),
                    };
                }
                inner += q * *cell;
            }
            v += w * inner;
        }
        let x = if adversary { 1.0 - v } else { v };
        match aggregation {
            Aggregation::Min => acc = acc.min(x),
            Aggregation::Mean => acc += x,
        }
        if let Some(b) = beat {
            // A minimum is exact, a running mean bound is not.
            let out = beaten
                || match aggregation {
                    Aggregation::Min => acc <= b,
                    Aggregation::Mean => ((acc + (total - idx - 1) as f64) / total as f64) < b - IMPROVEMENT_TOLERANCE,
                };
            if out {
                if let Some(o) = order.as_mut() {
                    o[..=idx].rotate_right(1);
                }
                return None;
            }
        }
    }
    Some(match aggregation {
        Aggregation::Min => acc,
        Aggregation::Mean => acc / total as f64,
    })
}

#[derive(Clone)]
struct Pop<G> {
    members: Vec<Keyed<G>>,
    fitness: Vec<f64>,
}

impl<G> Pop<G> {
    fn best(&self) -> f64 {
        self.fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Run<'a> {
    data: &'a Dataset,
    config: &'a CoevolutionConfig,
    space: TreeSpace,
    scorer: Scorer<'a>,
    rng: ChaCha8Rng,
    trees: Pop<TreeGenotype>,
    perts: Pop<PerturbationGenotype>,
    hof_t: HallOfFame<TreeGenotype>,
    hof_p: HallOfFame<PerturbationGenotype>,
    diag: Diagnostics,
    tree_generation: usize,
    total_generation: usize,
    best_found: f64,
    stale: usize,
    sink: &'a mut dyn ProgressSink,
}

impl<'a> Run<'a> {
    fn new(data: &'a Dataset, config: &'a CoevolutionConfig, warm_start: &[TreeGenotype], sink: &'a mut dyn ProgressSink) -> Self {
        let space = TreeSpace::for_dataset(data).with_depths(config.depth_interval, config.max_depth);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ctx = Ctx {
            data,
            space: &space,
            domain: config.perturbation_domain,
        };
        let mut trees: Vec<Tree> = (0..config.tree_population)
            .map(|_| Keyed::new(TreeGenotype::random(&ctx, &mut rng)))
            .collect();
        let warm = warm_start.len().min(config.tree_population);
        for (slot, t) in trees.iter_mut().zip(warm_start) {
            *slot = Keyed::new(t.truncated(config.max_depth));
        }
        let perts: Vec<Pert> = (0..config.perturbation_population)
            .map(|_| Keyed::new(PerturbationGenotype::random(&ctx, &mut rng)))
            .collect();
        let oracle = CartOracle {
            params: config.cart_params(),
            class_count: data.class_count(),
        };
        Run {
            data,
            config,
            scorer: Scorer {
                labels: data.labels(),
                mode: config.mode,
                oracle,
                cache: HashMap::default(),
            },
            rng,
            trees: Pop {
                members: trees,
                fitness: Vec::new(),
            },
            perts: Pop {
                members: perts,
                fitness: Vec::new(),
            },
            hof_t: HallOfFame::new(config.hof_policy, config.hof_max_size),
            hof_p: HallOfFame::new(config.hof_policy, config.hof_max_size),
            diag: Diagnostics {
                warm_start_trees: warm,
                ..Diagnostics::default()
            },
            tree_generation: 0,
            total_generation: 0,
            best_found: f64::NEG_INFINITY,
            stale: 0,
            sink,
            space,
        }
    }

    fn run(mut self) -> Result<TrainResult, EngineError> {
        let opp = self.tree_opponents();
        self.trees.fitness = self.evaluate(&self.trees.members.clone(), &opp);
        self.best_found = self.trees.best();
        self.refresh_perturbation_fitness();

        let l_c = self.config.alternation_length;
        loop {
            for _ in 0..l_c {
                let opp = self.tree_opponents();
                let pop = self.trees.clone();
                self.trees = self.generation(&pop, &opp);
                self.tree_generation += 1;
                self.after_generation(Phase::Trees);
                if let Some(reason) = self.check_stop() {
                    return self.finish(reason);
                }
            }
            for _ in 0..l_c {
                let opp = self.perturbation_targets();
                let pop = self.perts.clone();
                self.perts = self.generation(&pop, &opp);
                self.after_generation(Phase::Perturbations);
            }
        }
    }

    /// Perturbation population (strongest first) followed by the archive.
    fn tree_opponents(&self) -> Opponents<PerturbationGenotype> {
        let order = top_distinct(&self.perts.members, &self.perts_fitness_or_zero(), usize::MAX);
        let pop: Vec<Pert> = order.into_iter().map(|i| self.perts.members[i].clone()).collect();
        Opponents::new(&self.hof_p.evaluation_set(&pop))
    }

    fn perts_fitness_or_zero(&self) -> Vec<f64> {
        if self.perts.fitness.len() == self.perts.members.len() {
            self.perts.fitness.clone()
        } else {
            vec![0.0; self.perts.members.len()]
        }
    }

    /// The `top_trees` best distinct trees followed by the archive.
    fn perturbation_targets(&self) -> Opponents<TreeGenotype> {
        let top: Vec<Tree> = top_distinct(&self.trees.members, &self.trees.fitness, self.config.top_trees)
            .into_iter()
            .map(|i| self.trees.members[i].clone())
            .collect();
        Opponents::new(&self.hof_t.evaluation_set(&top))
    }

    fn refresh_perturbation_fitness(&mut self) {
        let opp = self.perturbation_targets();
        self.perts.fitness = self.evaluate(&self.perts.members.clone(), &opp);
    }

    fn evaluate<I: Individual>(&mut self, members: &[Keyed<I>], opp: &Opponents<I::Opponent>) -> Vec<f64> {
        let agg = I::aggregation(self.config);
        let scorer = &self.scorer;
        let results: Vec<(f64, Fresh)> = members
            .par_iter()
            .map(|m| {
                let mut fresh = Fresh::default();
                let v = score(scorer, &[(m, 1.0)], opp, agg, None, &mut fresh, false).expect("no pruning");
                (v, fresh)
            })
            .collect();
        results
            .into_iter()
            .map(|(v, fresh)| {
                self.scorer.absorb(fresh, &mut self.diag);
                v
            })
            .collect()
    }

    /// Best of each candidate group (first one among equals).
    fn race<I: Individual>(&mut self, groups: Vec<Vec<Keyed<I>>>, opp: &Opponents<I::Opponent>) -> Vec<Keyed<I>> {
        let agg = I::aggregation(self.config);
        let scorer = &self.scorer;
        let winners: Vec<(usize, Fresh)> = groups
            .par_iter()
            .map(|group| {
                let mut best: Option<(usize, f64, Fresh)> = None;
                let mut order: Vec<usize> = (0..opp.elements.len()).collect();
                for (i, cand) in group.iter().enumerate() {
                    let mut fresh = Fresh::default();
                    let bound = best.as_ref().map(|b| b.1);
                    if let Some(b) = bound {
                        if I::has_bound(scorer) && score(scorer, &[(cand, 1.0)], opp, agg, Some(b), &mut fresh, true).is_none() {
                            continue;
                        }
                    }
                    let order = (agg.0 == Aggregation::Min).then_some(&mut order);
                    if let Some(v) = score_ordered(scorer, &[(cand, 1.0)], opp, agg, bound, &mut fresh, false, order) {
                        if best.as_ref().is_none_or(|b| v > b.1) {
                            best = Some((i, v, fresh));
                        }
                    }
                }
                let (i, _, fresh) = best.expect("first candidate is never pruned");
                (i, fresh)
            })
            .collect();
        groups
            .into_iter()
            .zip(winners)
            .map(|(mut group, (i, fresh))| {
                self.scorer.absorb(fresh, &mut self.diag);
                group.swap_remove(i)
            })
            .collect()
    }

    /// Crossover and mutation offspring join the population, everything is
    /// evaluated, and selection brings it back to its size.
    fn generation<I: Individual>(&mut self, pop: &Pop<I>, opp: &Opponents<I::Opponent>) -> Pop<I> {
        let cfg = self.config;
        let n = pop.members.len();
        let mut union = pop.members.clone();
        let mut chosen: Vec<usize> = (0..n).filter(|_| self.rng.gen_bool(cfg.crossover_probability)).collect();
        chosen.shuffle(&mut self.rng);
        let mut groups = Vec::new();
        {
            let ctx = Ctx {
                data: self.data,
                space: &self.space,
                domain: cfg.perturbation_domain,
            };
            let rng = &mut self.rng;
            for pair in chosen.chunks_exact(2) {
                let (a, b) = I::crossover(&pop.members[pair[0]], &pop.members[pair[1]], &ctx, rng);
                union.push(Keyed::new(a));
                union.push(Keyed::new(b));
            }
            for m in &union {
                if rng.gen_bool(cfg.mutation_probability) {
                    let group: Vec<Keyed<I>> = I::mutants(m, &ctx, cfg.mutation_trials, rng).into_iter().map(Keyed::new).collect();
                    groups.push(group);
                }
            }
        }
        let mutants = self.race(groups, opp);
        union.extend(mutants);
        let fitness = self.evaluate(&union, opp);
        let picked = select_next_generation(&fitness, n, cfg.elite_count, cfg.selection_pressure, &mut self.rng);
        Pop {
            members: picked.iter().map(|&i| union[i].clone()).collect(),
            fitness: picked.iter().map(|&i| fitness[i]).collect(),
        }
    }

    fn after_generation(&mut self, phase: Phase) {
        self.total_generation += 1;
        self.record_equilibrium();
        self.collect_garbage();
        let event = GenerationEvent {
            phase,
            tree_generation: self.tree_generation,
            total_generation: self.total_generation,
            tree_best: self.trees.best(),
            tree_mean: self.trees.fitness.iter().sum::<f64>() / self.trees.fitness.len() as f64,
            perturbation_best: self.perts.best(),
            best_found: self.best_found.max(self.trees.best()),
            hof_trees: self.hof_t.len(),
            hof_perturbations: self.hof_p.len(),
        };
        self.sink.generation(&event);
    }

    /// Solves the game between the current populations and archives what
    /// the policy asks for.
    fn record_equilibrium(&mut self) {
        if self.hof_t.is_disabled() {
            return;
        }
        let trees: Vec<Tree> = distinct(&self.trees.members);
        let perts: Vec<Pert> = distinct(&self.perts.members);
        let scorer = &self.scorer;
        let rows: Vec<(Vec<f64>, Fresh)> = trees
            .par_iter()
            .map(|t| {
                let mut fresh = Fresh::default();
                let row = perts.iter().map(|p| scorer.tree_payoff(t, p, &mut fresh)).collect();
                (row, fresh)
            })
            .collect();
        let mut matrix_rows = Vec::with_capacity(rows.len());
        for (row, fresh) in rows {
            self.scorer.absorb(fresh, &mut self.diag);
            matrix_rows.push(row);
        }
        let matrix = PayoffMatrix::from_rows(&matrix_rows).expect("payoffs are finite");
        self.diag.nash_solves += 1;
        let solution = match solve(&matrix) {
            Ok(s) => s,
            Err(_) => {
                self.diag.nash_fallbacks += matrix.rows() + matrix.cols();
                self.diag.nash_failures += 1;
                return;
            }
        };
        self.diag.nash_fallbacks += solution.fallbacks;
        let eq = solution.equilibrium;
        let mixed_t = MixedStrategy::new(trees.into_iter().zip(eq.row).collect()).expect("equilibrium is a distribution");
        let mixed_p = MixedStrategy::new(perts.into_iter().zip(eq.col).collect()).expect("equilibrium is a distribution");

        let generation = self.total_generation;
        let tree_entries = policy_candidates(self.config.hof_policy, &self.trees.members, &self.trees.fitness, &mixed_t);
        let opp = self.tree_opponents();
        let agg = <TreeGenotype as Individual>::aggregation(self.config);
        for s in tree_entries {
            if self.hof_t.contains(&s) {
                self.hof_t.insert(s, 0.0, generation);
                continue;
            }
            let mut fresh = Fresh::default();
            let members: Vec<(&Tree, f64)> = s.iter().collect();
            let f = score(&self.scorer, &members, &opp, agg, None, &mut fresh, false).expect("no pruning");
            self.scorer.absorb(fresh, &mut self.diag);
            self.hof_t.insert(s, f, generation);
        }

        let pert_entries = policy_candidates(self.config.hof_policy, &self.perts.members, &self.perts_fitness_or_zero(), &mixed_p);
        let opp = self.perturbation_targets();
        let agg = <PerturbationGenotype as Individual>::aggregation(self.config);
        for s in pert_entries {
            if self.hof_p.contains(&s) {
                self.hof_p.insert(s, 0.0, generation);
                continue;
            }
            let mut fresh = Fresh::default();
            let members: Vec<(&Pert, f64)> = s.iter().collect();
            let f = score(&self.scorer, &members, &opp, agg, None, &mut fresh, false).expect("no pruning");
            self.scorer.absorb(fresh, &mut self.diag);
            self.hof_p.insert(s, f, generation);
        }
    }

    fn collect_garbage(&mut self) {
        let mut live_t = self.hof_t.member_keys();
        live_t.extend(self.trees.members.iter().map(|t| t.key()));
        let mut live_p = self.hof_p.member_keys();
        live_p.extend(self.perts.members.iter().map(|p| p.key()));
        self.scorer
            .cache
            .retain(|(t, p), _| live_t.contains(t) && live_p.contains(p));
    }

    fn check_stop(&mut self) -> Option<StopReason> {
        let best = self.trees.best();
        if best > self.best_found + IMPROVEMENT_TOLERANCE {
            self.best_found = best;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        if self.tree_generation >= self.config.max_generations {
            return Some(StopReason::GenerationLimit);
        }
        if self.stale >= self.config.alternation_length {
            if self.local_improvement() {
                self.stale = 0;
            } else {
                return Some(StopReason::NoImprovement);
            }
        }
        None
    }

    /// Tries to beat every tree tied for the best fitness with a
    /// perturbation evolved against that tree alone. On success the found
    /// perturbations replace the weakest population members.
    fn local_improvement(&mut self) -> bool {
        self.diag.subroutine_invocations += 1;
        let best = self.trees.best();
        let tied: Vec<(Tree, f64)> = top_distinct(&self.trees.members, &self.trees.fitness, usize::MAX)
            .into_iter()
            .filter(|&i| self.trees.fitness[i] >= best - IMPROVEMENT_TOLERANCE)
            .map(|i| (self.trees.members[i].clone(), self.trees.fitness[i]))
            .collect();
        let mut found: Vec<Pert> = Vec::new();
        let mut tested = 0;
        let mut success = true;
        for (tree, fitness) in tied {
            tested += 1;
            self.diag.subroutine_trees_tested += 1;
            match self.defeat(&tree, fitness) {
                Some(p) => found.push(p),
                None => {
                    success = false;
                    break;
                }
            }
        }
        let mut added = Vec::new();
        if success {
            self.diag.subroutine_successes += 1;
            let mut present: HashSet<u128> = self.perts.members.iter().map(|p| p.key()).collect();
            for p in found {
                if !present.insert(p.key()) {
                    continue;
                }
                let weakest = (0..self.perts.members.len())
                    .min_by(|&a, &b| self.perts.fitness[a].total_cmp(&self.perts.fitness[b]).then(a.cmp(&b)))
                    .expect("population is nonempty");
                added.push(p.key());
                self.perts.members[weakest] = p;
                self.perts.fitness[weakest] = f64::INFINITY;
            }
            self.diag.subroutine_perturbations_added += added.len();
            self.refresh_perturbation_fitness();
        }
        let event = SubroutineEvent {
            tree_generation: self.tree_generation,
            trees_tested: tested,
            success,
            added,
            population: self.perts.members.iter().map(|p| p.key()).collect(),
        };
        self.sink.subroutine(&event);
        success
    }

    /// Evolves a copy of the perturbation population against `tree` alone
    /// for up to `alternation_length` generations; returns a perturbation
    /// that pushes the tree's payoff below `fitness`.
    fn defeat(&mut self, tree: &Tree, fitness: f64) -> Option<Pert> {
        let opp = Opponents::new(&[Play::Pure(tree)]);
        let threshold = 1.0 - fitness + IMPROVEMENT_TOLERANCE;
        let members = self.perts.members.clone();
        let mut pop = Pop {
            fitness: self.evaluate(&members, &opp),
            members,
        };
        for _ in 0..self.config.alternation_length {
            pop = self.generation(&pop, &opp);
            let i = top_distinct(&pop.members, &pop.fitness, 1)[0];
            if pop.fitness[i] > threshold {
                return Some(pop.members[i].clone());
            }
        }
        None
    }

    fn finish(self, stop_reason: StopReason) -> Result<TrainResult, EngineError> {
        let i = top_distinct(&self.trees.members, &self.trees.fitness, 1)[0];
        let best_tree = self.trees.members[i].genotype().clone();
        let final_metrics = match self.config.estimator_samples {
            0 => None,
            n => Some(estimate_final_metrics(
                &best_tree,
                self.data,
                n,
                self.config.estimator_seed,
                &self.scorer.oracle,
            )?),
        };
        let mut diagnostics = self.diag;
        diagnostics.hof_trees = self.hof_t.summary();
        diagnostics.hof_perturbations = self.hof_p.summary();
        Ok(TrainResult {
            best_tree,
            best_fitness: Fitness(self.trees.fitness[i]),
            generations_run: self.tree_generation,
            stop_reason,
            final_metrics,
            diagnostics,
            final_population: self
                .trees
                .members
                .iter()
                .zip(&self.trees.fitness)
                .map(|(t, &f)| (t.genotype().clone(), f))
                .collect(),
        })
    }
}

fn distinct<G>(members: &[Keyed<G>]) -> Vec<Keyed<G>> {
    let mut seen = HashSet::new();
    members.iter().filter(|m| seen.insert(m.key())).cloned().collect()
}
