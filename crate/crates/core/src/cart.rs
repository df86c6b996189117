//! Greedy Gini decision trees. They serve as the reference model for regret
//! (the most accurate tree found for one particular perturbation) and as the
//! non-robust baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Points;
use crate::metrics::ReferenceOracle;
use crate::perturbation::PerturbationGenotype;
use crate::tree::{SplitOp, TreeExpr, TreeGenotype};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CartError {
    #[error("gini impurity of an empty node is undefined")]
    EmptyNode,
    #[error("invalid CART parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_impurity_decrease: f64,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: 10,
            min_samples_split: 2,
            min_impurity_decrease: 0.0,
        }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<(), CartError> {
        if self.max_depth < 1 {
            return Err(CartError::Params("max_depth must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(CartError::Params("min_samples_split must be at least 2".into()));
        }
        if !(self.min_impurity_decrease >= 0.0) {
            return Err(CartError::Params("min_impurity_decrease must be non-negative".into()));
        }
        Ok(())
    }
}

/// `1 − Σ (n_c / n)²`.
pub fn gini(class_counts: &[usize]) -> Result<f64, CartError> {
    let n: usize = class_counts.iter().sum();
    if n == 0 {
        return Err(CartError::EmptyNode);
    }
    let n = n as f64;
    Ok(1.0 - class_counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

/// Best split found at a node. Its score `ΣL²/n_L + ΣR²/n_R` is kept as
/// the exact fraction `num / den` so equal splits tie exactly.
#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    /// Number of points (in sorted order) that go left.
    left_len: usize,
    threshold: f64,
    num: u64,
    den: u64,
}

struct Builder<'a> {
    /// Feature-major copy of the points: `columns[j * n + i]`.
    columns: Vec<f64>,
    labels: &'a [usize],
    class_count: usize,
    params: CartParams,
    total: usize,
    goes_left: Vec<bool>,
}

impl Builder<'_> {
    fn leaf(&self, counts: &[usize]) -> TreeExpr {
        // ties go to the lowest class index
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        TreeExpr::Leaf(best)
    }

    /// `sorted[j]` lists this node's points ordered by feature `j`.
    fn build(&mut self, sorted: Vec<Vec<u32>>, depth: usize) -> TreeExpr {
        let n = sorted[0].len();
        let mut counts = vec![0usize; self.class_count];
        for &i in &sorted[0] {
            counts[self.labels[i as usize]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || n < self.params.min_samples_split {
            return self.leaf(&counts);
        }

        let Some(best) = self.best_split(&sorted, &counts) else {
            return self.leaf(&counts);
        };
        let sumsq: u64 = counts.iter().map(|&c| (c * c) as u64).sum();
        // weighted decrease = (S − Σc²/n) / N
        let s = best.num as f64 / best.den as f64;
        let decrease = (s - sumsq as f64 / n as f64) / self.total as f64;
        if decrease < self.params.min_impurity_decrease {
            return self.leaf(&counts);
        }

        for &i in &sorted[best.feature][..best.left_len] {
            self.goes_left[i as usize] = true;
        }
        let mut left = Vec::with_capacity(sorted.len());
        let mut right = Vec::with_capacity(sorted.len());
        for list in &sorted {
            let mut l = Vec::with_capacity(best.left_len);
            let mut r = Vec::with_capacity(n - best.left_len);
            for &i in list {
                if self.goes_left[i as usize] {
                    l.push(i);
                } else {
                    r.push(i);
                }
            }
            left.push(l);
            right.push(r);
        }
        for &i in &sorted[best.feature][..best.left_len] {
            self.goes_left[i as usize] = false;
        }
        drop(sorted);
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        TreeExpr::split(best.feature, SplitOp::Lt, best.threshold, l, r)
    }

    fn best_split(&self, sorted: &[Vec<u32>], counts: &[usize]) -> Option<Candidate> {
        let n = sorted[0].len();
        let mut best: Option<Candidate> = None;
        let (mut best_num, mut best_den) = (0u64, 1u64);
        let mut left = vec![0u64; self.class_count];
        let mut right = vec![0u64; self.class_count];
        let total_sq: u64 = counts.iter().map(|&c| (c * c) as u64).sum();
        for (feature, order) in sorted.iter().enumerate() {
            let column = &self.columns[feature * self.total..(feature + 1) * self.total];
            left.iter_mut().for_each(|c| *c = 0);
            right.iter_mut().zip(counts).for_each(|(r, &c)| *r = c as u64);
            let mut sq_left = 0u64;
            let mut sq_right = total_sq;
            let mut prev = column[order[0] as usize];
            for k in 1..n {
                let c = self.labels[order[k - 1] as usize];
                sq_left += 2 * left[c] + 1;
                sq_right -= 2 * right[c] - 1;
                left[c] += 1;
                right[c] -= 1;
                let (a, b) = (prev, column[order[k] as usize]);
                prev = b;
                if a == b {
                    continue;
                }
                let (nl, nr) = (k as u64, (n - k) as u64);
                let num = sq_left * nr + sq_right * nl;
                let den = nl * nr;
                if num as u128 * best_den as u128 > best_num as u128 * den as u128 {
                    best_num = num;
                    best_den = den;
                    best = Some(Candidate {
                        feature,
                        left_len: k,
                        threshold: midpoint(a, b),
                        num,
                        den,
                    });
                }
            }
        }
        best
    }
}

/// A threshold `t` with `a < t <= b`, so `x < t` separates the two values.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a {
        m
    } else {
        b
    }
}

/// Grows a CART tree on `(points, labels)`. Splits use `x[a] < v` with `v`
/// halfway between consecutive distinct values; equal Gini reductions go to
/// the lowest feature, then the lowest threshold.
pub fn build_cart(points: &Points, labels: &[usize], class_count: usize, params: &CartParams) -> TreeGenotype {
    assert_eq!(points.len(), labels.len(), "points and labels must align");
    assert!(!points.is_empty(), "CART needs at least one point");
    let d = points.dim();
    let n = points.len();
    let mut columns = vec![0.0; d * n];
    for (i, row) in points.rows().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            columns[j * n + i] = x;
        }
    }
    let sorted: Vec<Vec<u32>> = (0..d)
        .map(|j| {
            let column = &columns[j * n..(j + 1) * n];
            // integer keys ordered like `f64::total_cmp`
            let mut keyed: Vec<(i64, u32)> = column
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let bits = x.to_bits() as i64;
                    (bits ^ (((bits >> 63) as u64) >> 1) as i64, i as u32)
                })
                .collect();
            keyed.sort_unstable();
            keyed.into_iter().map(|(_, i)| i).collect()
        })
        .collect();
    let mut builder = Builder {
        columns,
        labels,
        class_count,
        params: *params,
        total: n,
        goes_left: vec![false; n],
    };
    let expr = builder.build(sorted, 0);
    TreeGenotype::from_expr(&expr, d, class_count).expect("CART builds valid trees")
}

/// Training accuracy of a CART tree fit to `points`.
pub fn fit_accuracy(points: &Points, labels: &[usize], class_count: usize, params: &CartParams) -> f64 {
    let tree = build_cart(points, labels, class_count, params);
    tree.count_correct(points, labels) as f64 / labels.len() as f64
}

/// CART training accuracy on the perturbed instances with the true labels,
/// cached in the genotype.
pub fn reference_accuracy(p: &PerturbationGenotype, labels: &[usize], class_count: usize, params: &CartParams) -> f64 {
    p.reference_accuracy_with(|pts| fit_accuracy(pts, labels, class_count, params))
}

/// CART as the regret reference oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartOracle {
    pub params: CartParams,
    pub class_count: usize,
}

impl ReferenceOracle for CartOracle {
    fn best_accuracy(&self, points: &Points, labels: &[usize]) -> f64 {
        fit_accuracy(points, labels, self.class_count, &self.params)
    }
}
