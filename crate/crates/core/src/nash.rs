//! Zero-sum games between the two populations: payoff matrices, mixed
//! strategies, Lemke–Howson and a support-enumeration cross-check.
//!
//! Rows are trees, columns are perturbations and entries are the tree
//! player's payoff. The row player maximizes, the column player minimizes.

use std::borrow::Borrow;
use std::fmt;

use thiserror::Error;

use crate::metrics::{pair_payoff, ObjectiveMode, ReferenceOracle};
use crate::perturbation::PerturbationGenotype;
use crate::tree::TreeGenotype;

/// Probabilities at or below this are dropped from equilibria.
pub const PRUNE_BELOW: f64 = 1e-12;
/// Slack allowed in the best-response check.
pub const BEST_RESPONSE_TOLERANCE: f64 = 1e-9;
/// Support enumeration refuses games whose smaller side exceeds this.
pub const SUPPORT_ENUMERATION_MAX_SIDE: usize = 8;
/// ...or that would need more support pairs than this.
pub const SUPPORT_ENUMERATION_MAX_PAIRS: u128 = 250_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NashError {
    #[error("payoff matrix must have at least one row and one column")]
    Empty,
    #[error("payoff matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("matrix row {row} has {found} entries, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse `{token}` as a number")]
    Parse { line: usize, token: String },
    #[error("initial label {label} out of range for a {rows}x{cols} game")]
    Label { label: usize, rows: usize, cols: usize },
    #[error("pivot limit of {0} steps exceeded")]
    PivotLimit(usize),
    #[error("complementary path hit an unbounded ray")]
    Ray,
    #[error("pivot result fails the best-response check (gap {0:e})")]
    NotEquilibrium(f64),
    #[error("support enumeration limited to games with min(m, n) <= {max_side} and <= {max_pairs} support pairs; got {rows}x{cols}")]
    TooLarge {
        rows: usize,
        cols: usize,
        max_side: usize,
        max_pairs: u128,
    },
    #[error("no equilibrium found")]
    NotFound,
    #[error("mixed strategy needs at least one member with positive finite probability")]
    BadStrategy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self, NashError> {
        if rows == 0 || cols == 0 {
            return Err(NashError::Empty);
        }
        assert_eq!(entries.len(), rows * cols, "entry count must be rows * cols");
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(NashError::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(PayoffMatrix { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NashError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(NashError::Ragged {
                    row: i,
                    expected: cols,
                    found: r.len(),
                });
            }
            entries.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, entries)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, NashError> {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self::new(rows, cols, entries)
    }

    /// Whitespace-separated rows, one per line. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, NashError> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| NashError::Parse {
                        line: n + 1,
                        token: t.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn min(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn shifted(&self, c: f64) -> PayoffMatrix {
        PayoffMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|v| v + c).collect(),
        }
    }

    /// Expected payoff x' A y.
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.rows)
            .map(|i| x[i] * self.row(i).iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// (A y)_i for every row.
    pub fn row_payoffs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(y).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// (x' A)_j for every column.
    pub fn col_payoffs(&self, x: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| x[i] * self.get(i, j)).sum())
            .collect()
    }
}

impl fmt::Display for PayoffMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Entry (i, j) is the tree payoff of `trees[i]` against `perturbations[j]`.
pub fn build_payoff_matrix<T, P>(
    trees: &[T],
    perturbations: &[P],
    labels: &[usize],
    mode: ObjectiveMode,
    oracle: &dyn ReferenceOracle,
) -> Result<PayoffMatrix, NashError>
where
    T: Borrow<TreeGenotype>,
    P: Borrow<PerturbationGenotype>,
{
    PayoffMatrix::from_fn(trees.len(), perturbations.len(), |i, j| {
        pair_payoff(mode, trees[i].borrow(), perturbations[j].borrow(), labels, oracle)
    })
}

/// A probability distribution over finitely many individuals. Members are
/// expected to be distinct; callers deduplicate before building one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategy<T> {
    members: Vec<(T, f64)>,
}

impl<T> MixedStrategy<T> {
    /// Drops members at or below [`PRUNE_BELOW`] and renormalizes.
    pub fn new(members: Vec<(T, f64)>) -> Result<Self, NashError> {
        if members.iter().any(|(_, p)| !p.is_finite() || *p < 0.0) {
            return Err(NashError::BadStrategy);
        }
        let members: Vec<_> = members.into_iter().filter(|(_, p)| *p > PRUNE_BELOW).collect();
        let total: f64 = members.iter().map(|(_, p)| p).sum();
        if members.is_empty() || total <= 0.0 {
            return Err(NashError::BadStrategy);
        }
        Ok(MixedStrategy {
            members: members.into_iter().map(|(t, p)| (t, p / total)).collect(),
        })
    }

    pub fn pure(member: T) -> Self {
        MixedStrategy {
            members: vec![(member, 1.0)],
        }
    }

    pub fn uniform(members: Vec<T>) -> Result<Self, NashError> {
        let p = 1.0 / members.len() as f64;
        Self::new(members.into_iter().map(|t| (t, p)).collect())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_pure(&self) -> bool {
        self.members.len() == 1
    }

    pub fn members(&self) -> &[(T, f64)] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.members.iter().map(|(t, p)| (t, *p))
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> MixedStrategy<U> {
        MixedStrategy {
            members: self.members.iter().map(|(t, p)| (f(t), *p)).collect(),
        }
    }
}

/// A strategy pair of a matrix game with its value x' A y.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub value: f64,
}

impl Equilibrium {
    fn from_strategies(matrix: &PayoffMatrix, row: Vec<f64>, col: Vec<f64>) -> Self {
        let value = matrix.value(&row, &col);
        Equilibrium { row, col, value }
    }

    /// Largest gain either player could get by deviating to a pure strategy.
    pub fn best_response_gap(&self, matrix: &PayoffMatrix) -> f64 {
        let value = matrix.value(&self.row, &self.col);
        let best_row = matrix.row_payoffs(&self.col).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let best_col = matrix.col_payoffs(&self.row).into_iter().fold(f64::INFINITY, f64::min);
        (best_row - value).max(value - best_col)
    }

    pub fn row_support(&self) -> Vec<usize> {
        support(&self.row)
    }

    pub fn col_support(&self) -> Vec<usize> {
        support(&self.col)
    }
}

fn support(p: &[f64]) -> Vec<usize> {
    p.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect()
}

fn prune(mut p: Vec<f64>) -> Vec<f64> {
    for v in p.iter_mut() {
        if *v <= PRUNE_BELOW {
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Dense tableau for one polytope, columns indexed by label plus a final
/// right-hand-side column.
struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    slack_labels: Vec<usize>,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.rows[0].len() - 1
    }

    /// Lexicographic minimum-ratio test over rows with a positive entry in
    /// column `entering`.
    fn leaving_row(&self, entering: usize) -> Option<usize> {
        let rhs = self.rhs();
        let key = |r: usize| -> Vec<f64> {
            let row = &self.rows[r];
            let piv = row[entering];
            std::iter::once(row[rhs] / piv)
                .chain(self.slack_labels.iter().map(|&c| row[c] / piv))
                .collect()
        };
        let mut best: Option<(usize, Vec<f64>)> = None;
        for r in 0..self.rows.len() {
            if self.rows[r][entering] <= 1e-12 {
                continue;
            }
            let k = key(r);
            let better = match &best {
                None => true,
                Some((_, bk)) => lex_less(&k, bk),
            };
            if better {
                best = Some((r, k));
            }
        }
        best.map(|(r, _)| r)
    }

    /// Pivots `entering` into the basis and returns the label that left.
    fn pivot(&mut self, entering: usize) -> Result<usize, NashError> {
        let r = self.leaving_row(entering).ok_or(NashError::Ray)?;
        let piv = self.rows[r][entering];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (k, row) in self.rows.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[entering];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[entering] = 0.0;
            }
        }
        Ok(std::mem::replace(&mut self.basis[r], entering))
    }

    fn strategy(&self, labels: std::ops::Range<usize>) -> Vec<f64> {
        let rhs = self.rhs();
        let offset = labels.start;
        let mut out = vec![0.0; labels.len()];
        for (r, &b) in self.basis.iter().enumerate() {
            if labels.contains(&b) {
                out[b - offset] = self.rows[r][rhs].max(0.0);
            }
        }
        out
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        let scale = 1.0f64.max(x.abs()).max(y.abs());
        if (x - y).abs() > 1e-12 * scale {
            return x < y;
        }
    }
    false
}

/// One equilibrium of the zero-sum game, found by the complementary pivot
/// path that starts by dropping `initial_label` (0..m are rows, m..m+n are
/// columns).
pub fn lemke_howson(matrix: &PayoffMatrix, initial_label: usize) -> Result<Equilibrium, NashError> {
    let (m, n) = (matrix.rows(), matrix.cols());
    if initial_label >= m + n {
        return Err(NashError::Label {
            label: initial_label,
            rows: m,
            cols: n,
        });
    }
    // Row payoffs A and column payoffs B = -A, both shifted to be positive.
    let a_shift = 1.0 - matrix.min();
    let b_shift = 1.0 + matrix.max();
    let a = |i: usize, j: usize| matrix.get(i, j) + a_shift;
    let b = |i: usize, j: usize| b_shift - matrix.get(i, j);

    // P = {x >= 0 : B'x <= 1}: n rows, x_i has label i, slack s_j label m+j.
    let mut p = Tableau {
        rows: (0..n)
            .map(|j| {
                let mut row = vec![0.0; m + n + 1];
                for i in 0..m {
                    row[i] = b(i, j);
                }
                row[m + j] = 1.0;
                row[m + n] = 1.0;
                row
            })
            .collect(),
        basis: (m..m + n).collect(),
        slack_labels: (m..m + n).collect(),
    };
    // Q = {y >= 0 : A y <= 1}: m rows, slack r_i has label i, y_j label m+j.
    let mut q = Tableau {
        rows: (0..m)
            .map(|i| {
                let mut row = vec![0.0; m + n + 1];
                row[i] = 1.0;
                for j in 0..n {
                    row[m + j] = a(i, j);
                }
                row[m + n] = 1.0;
                row
            })
            .collect(),
        basis: (0..m).collect(),
        slack_labels: (0..m).collect(),
    };

    let limit = 10 * (m + n) * (m + n);
    let mut in_p = initial_label < m;
    let mut entering = initial_label;
    let mut steps = 0;
    loop {
        steps += 1;
        if steps > limit {
            return Err(NashError::PivotLimit(limit));
        }
        let left = if in_p { p.pivot(entering)? } else { q.pivot(entering)? };
        if left == initial_label {
            break;
        }
        entering = left;
        in_p = !in_p;
    }

    let x = p.strategy(0..m);
    let y = q.strategy(m..m + n);
    if x.iter().sum::<f64>() <= 0.0 || y.iter().sum::<f64>() <= 0.0 {
        return Err(NashError::NotEquilibrium(f64::INFINITY));
    }
    let eq = Equilibrium::from_strategies(matrix, prune(x), prune(y));
    let gap = eq.best_response_gap(matrix);
    if gap > BEST_RESPONSE_TOLERANCE {
        return Err(NashError::NotEquilibrium(gap));
    }
    Ok(eq)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

fn support_pairs(m: usize, n: usize) -> u128 {
    (1..=m.min(n)).map(|k| binomial(m, k).saturating_mul(binomial(n, k))).fold(0u128, u128::saturating_add)
}

/// Whether [`support_enumeration`] accepts an `m` x `n` game.
pub fn support_enumeration_feasible(m: usize, n: usize) -> bool {
    m.min(n) <= SUPPORT_ENUMERATION_MAX_SIDE && support_pairs(m, n) <= SUPPORT_ENUMERATION_MAX_PAIRS
}

/// Solves M z = rhs by Gaussian elimination with partial pivoting.
fn solve_linear(mut mat: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| mat[a][c].abs().total_cmp(&mat[b][c].abs()))?;
        if mat[p][c].abs() < 1e-12 {
            return None;
        }
        mat.swap(c, p);
        rhs.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = mat[r][c] / mat[c][c];
                if f != 0.0 {
                    for k in c..n {
                        mat[r][k] -= f * mat[c][k];
                    }
                    rhs[r] -= f * rhs[c];
                }
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / mat[i][i]).collect())
}

/// Probabilities over `support` (summing to 1) that make every opponent
/// strategy in `against` indifferent. `payoff(s, o)` is the payoff between
/// own strategy `s` and opponent strategy `o`.
fn indifferent(support: &[usize], against: &[usize], payoff: impl Fn(usize, usize) -> f64) -> Option<Vec<f64>> {
    let k = support.len();
    let mut mat = Vec::with_capacity(k + 1);
    for &o in against {
        let mut row: Vec<f64> = support.iter().map(|&s| payoff(s, o)).collect();
        row.push(-1.0);
        mat.push(row);
    }
    let mut last = vec![1.0; k];
    last.push(0.0);
    mat.push(last);
    let mut rhs = vec![0.0; k];
    rhs.push(1.0);
    let z = solve_linear(mat, rhs)?;
    Some(z[..k].to_vec())
}

fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut current: Option<Vec<usize>> = (k <= n).then(|| (0..k).collect());
    std::iter::from_fn(move || {
        let out = current.clone()?;
        let c = current.as_mut().unwrap();
        let mut i = k;
        loop {
            if i == 0 {
                current = None;
                break;
            }
            i -= 1;
            if c[i] < n - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    })
}

/// Every equilibrium with equal-size supports, each checked against the
/// best-response condition.
pub fn support_enumeration(matrix: &PayoffMatrix) -> Result<Vec<Equilibrium>, NashError> {
    let (m, n) = (matrix.rows(), matrix.cols());
    if !support_enumeration_feasible(m, n) {
        return Err(NashError::TooLarge {
            rows: m,
            cols: n,
            max_side: SUPPORT_ENUMERATION_MAX_SIDE,
            max_pairs: SUPPORT_ENUMERATION_MAX_PAIRS,
        });
    }
    let mut found: Vec<Equilibrium> = Vec::new();
    for k in 1..=m.min(n) {
        for rows in combinations(m, k) {
            for cols in combinations(n, k) {
                let Some(ys) = indifferent(&cols, &rows, |j, i| matrix.get(i, j)) else {
                    continue;
                };
                let Some(xs) = indifferent(&rows, &cols, |i, j| matrix.get(i, j)) else {
                    continue;
                };
                if xs.iter().chain(&ys).any(|&v| v < -BEST_RESPONSE_TOLERANCE) {
                    continue;
                }
                let mut x = vec![0.0; m];
                let mut y = vec![0.0; n];
                for (&i, &v) in rows.iter().zip(&xs) {
                    x[i] = v.max(0.0);
                }
                for (&j, &v) in cols.iter().zip(&ys) {
                    y[j] = v.max(0.0);
                }
                let eq = Equilibrium::from_strategies(matrix, prune(x), prune(y));
                if eq.best_response_gap(matrix) > BEST_RESPONSE_TOLERANCE {
                    continue;
                }
                let dup = found.iter().any(|f| {
                    f.row.iter().zip(&eq.row).chain(f.col.iter().zip(&eq.col)).all(|(a, b)| (a - b).abs() < 1e-9)
                });
                if !dup {
                    found.push(eq);
                }
            }
        }
    }
    Ok(found)
}

/// How [`solve`] obtained its equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    LemkeHowson { label: usize },
    SupportEnumeration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub equilibrium: Equilibrium,
    pub method: SolveMethod,
    /// Failed attempts before the one that succeeded.
    pub fallbacks: usize,
}

/// Lemke–Howson from label 0; on failure support enumeration when the game
/// is small enough, then the remaining starting labels in order.
pub fn solve(matrix: &PayoffMatrix) -> Result<Solution, NashError> {
    let mut fallbacks = 0;
    let mut last_err = match lemke_howson(matrix, 0) {
        Ok(equilibrium) => {
            return Ok(Solution {
                equilibrium,
                method: SolveMethod::LemkeHowson { label: 0 },
                fallbacks,
            })
        }
        Err(e) => e,
    };
    fallbacks += 1;
    if support_enumeration_feasible(matrix.rows(), matrix.cols()) {
        if let Some(equilibrium) = support_enumeration(matrix)?.into_iter().next() {
            return Ok(Solution {
                equilibrium,
                method: SolveMethod::SupportEnumeration,
                fallbacks,
            });
        }
        fallbacks += 1;
    }
    for label in 1..matrix.rows() + matrix.cols() {
        match lemke_howson(matrix, label) {
            Ok(equilibrium) => {
                return Ok(Solution {
                    equilibrium,
                    method: SolveMethod::LemkeHowson { label },
                    fallbacks,
                })
            }
            Err(e) => {
                fallbacks += 1;
                last_err = e;
            }
        }
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn matching_pennies() {
        let m = PayoffMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        for label in 0..4 {
            let eq = lemke_howson(&m, label).unwrap();
            assert!(close(&eq.row, &[0.5, 0.5]));
            assert!(close(&eq.col, &[0.5, 0.5]));
            assert!(eq.value.abs() < 1e-12);
        }
        let all = support_enumeration(&m).unwrap();
        assert_eq!(all.len(), 1);
        assert!(close(&all[0].row, &[0.5, 0.5]));
    }

    #[test]
    fn three_one_zero_two() {
        let m = PayoffMatrix::from_rows(&[vec![3.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let eq = lemke_howson(&m, 0).unwrap();
        assert!(close(&eq.row, &[0.5, 0.5]));
        assert!(close(&eq.col, &[0.25, 0.75]));
        assert!((eq.value - 1.5).abs() < 1e-12);
        // Indifference by hand: 3y + (1 - y) = 2(1 - y) gives y = 1/4.
        let se = support_enumeration(&m).unwrap();
        assert_eq!(se.len(), 1);
        assert!((se[0].value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn saddle_point() {
        let m = PayoffMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 3.0]]).unwrap();
        let eq = lemke_howson(&m, 0).unwrap();
        assert_eq!(eq.row, vec![0.0, 1.0]);
        assert_eq!(eq.col, vec![1.0, 0.0]);
        assert!((eq.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn strictly_dominant_row() {
        let m = PayoffMatrix::from_rows(&[vec![5.0, 6.0, 7.0], vec![1.0, 2.0, 0.0]]).unwrap();
        let all = support_enumeration(&m).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].row, vec![1.0, 0.0]);
        assert_eq!(all[0].col, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn one_by_one_and_rectangular() {
        let m = PayoffMatrix::from_rows(&[vec![0.7]]).unwrap();
        let eq = lemke_howson(&m, 0).unwrap();
        assert_eq!((eq.row.clone(), eq.col.clone()), (vec![1.0], vec![1.0]));
        assert!((eq.value - 0.7).abs() < 1e-15);
        let m = PayoffMatrix::from_rows(&[vec![0.2, 0.9, 0.4]]).unwrap();
        let eq = solve(&m).unwrap().equilibrium;
        assert_eq!(eq.col, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_constant_matrix_is_solved() {
        let m = PayoffMatrix::from_rows(&vec![vec![0.5; 4]; 3]).unwrap();
        let s = solve(&m).unwrap();
        assert!((s.equilibrium.value - 0.5).abs() < 1e-12);
        assert!(s.equilibrium.best_response_gap(&m) <= BEST_RESPONSE_TOLERANCE);
    }

    #[test]
    fn random_games_agree_with_support_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (r, c) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
            let m = PayoffMatrix::from_fn(r, c, |_, _| rng.gen::<f64>()).unwrap();
            let lh = lemke_howson(&m, 0).unwrap();
            let se = support_enumeration(&m).unwrap();
            assert!(!se.is_empty());
            for eq in &se {
                assert!((eq.value - lh.value).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn offset_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = PayoffMatrix::from_fn(4, 5, |_, _| rng.gen::<f64>()).unwrap();
        let a = lemke_howson(&m, 0).unwrap();
        let b = lemke_howson(&m.shifted(7.5), 0).unwrap();
        assert!(close(&a.row, &b.row));
        assert!(close(&a.col, &b.col));
        assert!((a.value + 7.5 - b.value).abs() < 1e-9);
    }

    #[test]
    fn parse_text_matrix() {
        let m = PayoffMatrix::parse("# pennies\n1 -1\n\n-1   1\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.get(1, 0), -1.0);
        assert!(matches!(PayoffMatrix::parse("1 2\n3\n"), Err(NashError::Ragged { row: 1, .. })));
        assert!(matches!(PayoffMatrix::parse("1 x\n"), Err(NashError::Parse { line: 1, .. })));
        assert_eq!(PayoffMatrix::parse("\n"), Err(NashError::Empty));
        assert!(matches!(
            PayoffMatrix::from_rows(&[vec![f64::NAN]]),
            Err(NashError::NonFinite { row: 0, col: 0 })
        ));
    }

    #[test]
    fn guard_rejects_large_games() {
        assert!(support_enumeration_feasible(8, 8));
        assert!(!support_enumeration_feasible(9, 9));
        assert!(!support_enumeration_feasible(8, 200));
        let m = PayoffMatrix::from_fn(9, 9, |i, j| (i * j) as f64).unwrap();
        assert!(matches!(support_enumeration(&m), Err(NashError::TooLarge { .. })));
        assert!(matches!(lemke_howson(&m, 18), Err(NashError::Label { .. })));
    }

    #[test]
    fn mixed_strategy_pruning() {
        let s = MixedStrategy::new(vec![("a", 0.5), ("b", 1e-13), ("c", 0.5)]).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(MixedStrategy::<&str>::new(vec![]), Err(NashError::BadStrategy));
        assert_eq!(MixedStrategy::new(vec![("a", -0.1)]), Err(NashError::BadStrategy));
        assert!(MixedStrategy::pure(1).is_pure());
        let u = MixedStrategy::uniform(vec![1, 2, 3, 4]).unwrap();
        assert!(u.iter().all(|(_, p)| p == 0.25));
    }

    #[test]
    fn combinations_are_complete() {
        assert_eq!(combinations(4, 2).count(), 6);
        assert_eq!(combinations(3, 3).collect::<Vec<_>>(), vec![vec![0, 1, 2]]);
        assert_eq!(binomial(200, 3), 1_313_400);
    }
}
