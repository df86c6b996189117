//! Hall of fame: an archive of (usually mixed) strategies that keeps taking
//! part in fitness evaluation after its members have left the population.

use std::collections::HashSet;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::keyed::Keyed;
use crate::metrics::Play;
use crate::nash::MixedStrategy;

/// How each generation's contribution to the archive is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HofPolicy {
    /// The equilibrium mixed strategy as one entry.
    #[default]
    NashMixed,
    /// Every equilibrium support member as its own pure entry.
    NashSingles,
    /// A uniform mixture of the K fittest individuals, K being the
    /// equilibrium support size.
    TopKMixed,
    /// The K fittest individuals as pure entries.
    TopK,
    /// The single fittest individual.
    BestOnly,
}

impl std::str::FromStr for HofPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "nash-mixed" => HofPolicy::NashMixed,
            "nash-singles" => HofPolicy::NashSingles,
            "top-k-mixed" => HofPolicy::TopKMixed,
            "top-k" => HofPolicy::TopK,
            "best-only" => HofPolicy::BestOnly,
            other => {
                return Err(format!(
                    "unknown hall-of-fame policy `{other}` (expected nash-mixed, nash-singles, top-k-mixed, top-k or best-only)"
                ))
            }
        })
    }
}

impl std::fmt::Display for HofPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HofPolicy::NashMixed => "nash-mixed",
            HofPolicy::NashSingles => "nash-singles",
            HofPolicy::TopKMixed => "top-k-mixed",
            HofPolicy::TopK => "top-k",
            HofPolicy::BestOnly => "best-only",
        })
    }
}

/// Archive entries a policy derives from one generation.
///
/// `fitness[i]` belongs to `population[i]`; ties are broken by position.
/// Individuals sharing a key count once.
pub fn policy_candidates<G>(
    policy: HofPolicy,
    population: &[Keyed<G>],
    fitness: &[f64],
    equilibrium: &MixedStrategy<Keyed<G>>,
) -> Vec<MixedStrategy<Keyed<G>>> {
    assert_eq!(population.len(), fitness.len(), "one fitness per individual");
    let ranked = || {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        let mut seen = HashSet::new();
        order
            .into_iter()
            .filter(move |&i| seen.insert(population[i].key()))
            .map(|i| population[i].clone())
    };
    let k = equilibrium.len();
    match policy {
        HofPolicy::NashMixed => vec![equilibrium.clone()],
        HofPolicy::NashSingles => equilibrium.iter().map(|(g, _)| MixedStrategy::pure(g.clone())).collect(),
        HofPolicy::TopKMixed => {
            let top: Vec<_> = ranked().take(k).collect();
            MixedStrategy::uniform(top).into_iter().collect()
        }
        HofPolicy::TopK => ranked().take(k).map(MixedStrategy::pure).collect(),
        HofPolicy::BestOnly => ranked().take(1).map(MixedStrategy::pure).collect(),
    }
}

/// Identity of a mixed strategy: member keys with probabilities snapped to
/// a 1e-9 grid, independent of member order.
pub fn strategy_key<G>(s: &MixedStrategy<Keyed<G>>) -> u64 {
    let mut parts: Vec<(u128, i64)> = s.iter().map(|(g, p)| (g.key(), (p * 1e9).round() as i64)).collect();
    parts.sort_unstable();
    let mut h = DefaultHasher::new();
    parts.hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone)]
pub struct HofEntry<G> {
    pub strategy: MixedStrategy<Keyed<G>>,
    /// Fitness against the opposing evaluation set when inserted.
    pub fitness: f64,
    pub generation: usize,
    key: u64,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Added,
    Duplicate,
    /// Capacity is zero.
    Disabled,
}

#[derive(Debug, Clone)]
pub struct HallOfFame<G> {
    entries: Vec<HofEntry<G>>,
    keys: HashSet<u64>,
    max_size: Option<usize>,
    policy: HofPolicy,
    next_seq: u64,
    evictions: usize,
    duplicates: usize,
    max_evicted_fitness: Option<f64>,
}

impl<G> HallOfFame<G> {
    /// `max_size: None` means unbounded.
    pub fn new(policy: HofPolicy, max_size: Option<usize>) -> Self {
        HallOfFame {
            entries: Vec::new(),
            keys: HashSet::new(),
            max_size,
            policy,
            next_seq: 0,
            evictions: 0,
            duplicates: 0,
            max_evicted_fitness: None,
        }
    }

    pub fn policy(&self) -> HofPolicy {
        self.policy
    }

    pub fn max_size(&self) -> Option<usize> {
        self.max_size
    }

    pub fn is_disabled(&self) -> bool {
        self.max_size == Some(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HofEntry<G>] {
        &self.entries
    }

    pub fn evictions(&self) -> usize {
        self.evictions
    }

    pub fn duplicates_skipped(&self) -> usize {
        self.duplicates
    }

    /// Highest fitness among evicted entries so far.
    pub fn max_evicted_fitness(&self) -> Option<f64> {
        self.max_evicted_fitness
    }

    /// Adds `strategy` unless an identical entry exists, then evicts down to
    /// capacity.
    pub fn insert(&mut self, strategy: MixedStrategy<Keyed<G>>, fitness: f64, generation: usize) -> Insertion {
        if self.is_disabled() {
            return Insertion::Disabled;
        }
        let key = strategy_key(&strategy);
        if !self.keys.insert(key) {
            self.duplicates += 1;
            return Insertion::Duplicate;
        }
        self.entries.push(HofEntry {
            strategy,
            fitness,
            generation,
            key,
            seq: self.next_seq,
        });
        self.next_seq += 1;
        self.evict_if_needed();
        Insertion::Added
    }

    /// Whether an entry with the same members and probabilities is stored.
    pub fn contains(&self, strategy: &MixedStrategy<Keyed<G>>) -> bool {
        self.keys.contains(&strategy_key(strategy))
    }

    /// Removes minimum-fitness entries (oldest first among ties) until the
    /// archive fits its capacity. Returns how many were removed.
    pub fn evict_if_needed(&mut self) -> usize {
        let Some(max) = self.max_size else { return 0 };
        let mut removed = 0;
        while self.entries.len() > max {
            let victim = (0..self.entries.len())
                .min_by(|&a, &b| {
                    let (x, y) = (&self.entries[a], &self.entries[b]);
                    x.fitness
                        .total_cmp(&y.fitness)
                        .then(x.generation.cmp(&y.generation))
                        .then(x.seq.cmp(&y.seq))
                })
                .expect("archive is over capacity, so nonempty");
            let gone = self.entries.remove(victim);
            self.keys.remove(&gone.key);
            self.max_evicted_fitness = Some(self.max_evicted_fitness.map_or(gone.fitness, |m| m.max(gone.fitness)));
            self.evictions += 1;
            removed += 1;
        }
        removed
    }

    /// Opposing population (pure) followed by the archive entries (mixed).
    /// Pure entries already present in the population are left out.
    pub fn evaluation_set<'a>(&'a self, population: &'a [Keyed<G>]) -> Vec<Play<'a, Keyed<G>>> {
        let mut seen = HashSet::new();
        let mut out: Vec<Play<'a, Keyed<G>>> = population
            .iter()
            .filter(|g| seen.insert(g.key()))
            .map(Play::Pure)
            .collect();
        for e in &self.entries {
            if e.strategy.is_pure() && seen.contains(&e.strategy.members()[0].0.key()) {
                continue;
            }
            out.push(Play::Mixed(&e.strategy));
        }
        out
    }

    /// Every distinct genotype referenced by the archive.
    pub fn member_keys(&self) -> HashSet<u128> {
        self.entries
            .iter()
            .flat_map(|e| e.strategy.iter().map(|(g, _)| g.key()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HofSummary {
    pub policy: HofPolicy,
    pub max_size: Option<usize>,
    pub size: usize,
    pub evictions: usize,
    pub duplicates_skipped: usize,
}

impl<G> HallOfFame<G> {
    pub fn summary(&self) -> HofSummary {
        HofSummary {
            policy: self.policy,
            max_size: self.max_size,
            size: self.len(),
            evictions: self.evictions,
            duplicates_skipped: self.duplicates,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyed::Fingerprint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, PartialEq)]
    struct G(u32);

    impl Fingerprint for G {
        fn fingerprint_into<H: Hasher>(&self, state: &mut H) {
            self.0.hash(state);
        }
    }

    fn k(v: u32) -> Keyed<G> {
        Keyed::new(G(v))
    }

    fn ids(s: &MixedStrategy<Keyed<G>>) -> Vec<u32> {
        s.iter().map(|(g, _)| g.0).collect()
    }

    #[test]
    fn best_only_takes_argmax() {
        let pop = vec![k(1), k(2), k(3)];
        let eq = MixedStrategy::new(vec![(k(1), 0.5), (k(3), 0.5)]).unwrap();
        let c = policy_candidates(HofPolicy::BestOnly, &pop, &[0.2, 0.9, 0.9], &eq);
        assert_eq!(c.len(), 1);
        assert_eq!(ids(&c[0]), vec![2]);
        let mut hof = HallOfFame::new(HofPolicy::BestOnly, Some(10));
        for s in c {
            hof.insert(s, 0.9, 0);
        }
        assert_eq!(hof.len(), 1);
    }

    #[test]
    fn policies_use_equilibrium_support_size() {
        let pop = vec![k(1), k(2), k(3), k(4)];
        let fit = [0.1, 0.4, 0.3, 0.2];
        let eq = MixedStrategy::new(vec![(k(1), 0.25), (k(4), 0.75)]).unwrap();
        let nm = policy_candidates(HofPolicy::NashMixed, &pop, &fit, &eq);
        assert_eq!(nm.len(), 1);
        assert_eq!(ids(&nm[0]), vec![1, 4]);
        let ns = policy_candidates(HofPolicy::NashSingles, &pop, &fit, &eq);
        assert_eq!(ns.iter().map(|s| ids(s)[0]).collect::<Vec<_>>(), vec![1, 4]);
        assert!(ns.iter().all(|s| s.is_pure()));
        let tkm = policy_candidates(HofPolicy::TopKMixed, &pop, &fit, &eq);
        assert_eq!(ids(&tkm[0]), vec![2, 3]);
        assert!(tkm[0].iter().all(|(_, p)| p == 0.5));
        let tk = policy_candidates(HofPolicy::TopK, &pop, &fit, &eq);
        assert_eq!(tk.iter().map(|s| ids(s)[0]).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn pure_equilibrium_gives_degenerate_entry() {
        let pop = vec![k(1), k(2)];
        let eq = MixedStrategy::pure(k(2));
        let c = policy_candidates(HofPolicy::NashMixed, &pop, &[0.0, 1.0], &eq);
        assert!(c[0].is_pure());
    }

    #[test]
    fn zero_capacity_stays_empty() {
        let mut hof = HallOfFame::new(HofPolicy::NashMixed, Some(0));
        assert_eq!(hof.insert(MixedStrategy::pure(k(1)), 1.0, 0), Insertion::Disabled);
        assert!(hof.is_empty());
        let pop = vec![k(5), k(6)];
        assert_eq!(hof.evaluation_set(&pop).len(), 2);
    }

    #[test]
    fn evicts_lowest_then_oldest() {
        let mut hof = HallOfFame::new(HofPolicy::TopK, Some(2));
        hof.insert(MixedStrategy::pure(k(1)), 0.5, 0);
        hof.insert(MixedStrategy::pure(k(2)), 0.2, 1);
        hof.insert(MixedStrategy::pure(k(3)), 0.7, 2);
        let left: Vec<u32> = hof.entries().iter().map(|e| ids(&e.strategy)[0]).collect();
        assert_eq!(left, vec![1, 3]);

        let mut hof = HallOfFame::new(HofPolicy::TopK, Some(2));
        for (i, v) in [7, 8, 9].into_iter().enumerate() {
            hof.insert(MixedStrategy::pure(k(v)), 0.5, i);
        }
        let left: Vec<u32> = hof.entries().iter().map(|e| ids(&e.strategy)[0]).collect();
        assert_eq!(left, vec![8, 9]);
        assert_eq!(hof.evictions(), 1);
    }

    #[test]
    fn duplicates_are_skipped() {
        let mut hof = HallOfFame::new(HofPolicy::NashMixed, None);
        let a = MixedStrategy::new(vec![(k(1), 0.3), (k(2), 0.7)]).unwrap();
        let b = MixedStrategy::new(vec![(k(2), 0.7 + 1e-12), (k(1), 0.3 - 1e-12)]).unwrap();
        assert_eq!(hof.insert(a, 0.1, 0), Insertion::Added);
        assert_eq!(hof.insert(b, 0.1, 1), Insertion::Duplicate);
        let c = MixedStrategy::new(vec![(k(1), 0.4), (k(2), 0.6)]).unwrap();
        assert_eq!(hof.insert(c, 0.1, 2), Insertion::Added);
        assert_eq!(hof.len(), 2);
        assert_eq!(hof.duplicates_skipped(), 1);
    }

    #[test]
    fn long_random_stream_respects_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hof = HallOfFame::new(HofPolicy::NashMixed, Some(500));
        for i in 0..1000 {
            hof.insert(MixedStrategy::pure(k(i)), rng.gen(), i as usize);
            assert!(hof.len() <= 500);
        }
        assert_eq!(hof.len(), 500);
        let min_kept = hof.entries().iter().map(|e| e.fitness).fold(f64::INFINITY, f64::min);
        assert!(min_kept >= hof.max_evicted_fitness().unwrap());
        assert_eq!(hof.evictions(), 500);
    }

    #[test]
    fn evaluation_set_cardinality() {
        let pop: Vec<_> = (0..50).map(k).collect();
        let mut hof = HallOfFame::new(HofPolicy::NashMixed, None);
        hof.insert(MixedStrategy::new(vec![(k(1), 0.5), (k(2), 0.5)]).unwrap(), 0.0, 0);
        hof.insert(MixedStrategy::new(vec![(k(100), 0.5), (k(2), 0.5)]).unwrap(), 0.0, 0);
        assert_eq!(hof.evaluation_set(&pop).len(), 52);
        // a pure entry equal to a population member adds nothing
        hof.insert(MixedStrategy::pure(k(3)), 0.0, 1);
        assert_eq!(hof.evaluation_set(&pop).len(), 52);
        assert_eq!(hof.member_keys().len(), 4);
    }
}
