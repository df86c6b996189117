//! Decision-tree genotype: a node list in preorder, plus random growth,
//! subtree crossover, three-action mutation and the JSON tree document.
//!
//! Every operator returns a fresh genotype in canonical form: nodes are
//! stored in preorder (the root is node 0, a node's left subtree follows it
//! directly, then its right subtree), so the subtree under any node is a
//! contiguous slice. Leaves carry `op = "<"`, `v = 0`, `a = 0` and internal
//! nodes carry `c = 0`; those fields are meaningless there.

use std::fmt;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Points};
use crate::keyed::Fingerprint;

/// Deeper offspring are truncated to this depth.
pub const MAX_DEPTH_CAP: usize = 25;

/// `=` splits compare with this absolute tolerance.
pub const EQ_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("tree document is not valid JSON: {0}")]
    Syntax(String),
    #[error("tree expects {expected} features, data has {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("tree expects {expected} classes, data has {found}")]
    ClassMismatch { expected: usize, found: usize },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> TreeError {
    TreeError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "=")]
    Eq,
}

impl SplitOp {
    /// `true` sends the instance to the left child.
    #[inline]
    pub fn test(self, x: f64, v: f64) -> bool {
        match self {
            SplitOp::Lt => x < v,
            SplitOp::Gt => x > v,
            SplitOp::Eq => (x - v).abs() <= EQ_TOLERANCE,
        }
    }

    const ALL: [SplitOp; 3] = [SplitOp::Lt, SplitOp::Gt, SplitOp::Eq];
}

impl fmt::Display for SplitOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitOp::Lt => "<",
            SplitOp::Gt => ">",
            SplitOp::Eq => "=",
        })
    }
}

/// One node record `{t, c, P, L, R, o, v, a}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(rename = "t")]
    pub id: usize,
    #[serde(rename = "c")]
    pub class: usize,
    #[serde(rename = "P")]
    pub parent: Option<usize>,
    #[serde(rename = "L")]
    pub left: Option<usize>,
    #[serde(rename = "R")]
    pub right: Option<usize>,
    #[serde(rename = "o")]
    pub op: SplitOp,
    #[serde(rename = "v")]
    pub value: f64,
    #[serde(rename = "a")]
    pub attribute: usize,
}

impl Node {
    fn leaf(class: usize) -> Self {
        Node {
            id: 0,
            class,
            parent: None,
            left: None,
            right: None,
            op: SplitOp::Lt,
            value: 0.0,
            attribute: 0,
        }
    }

    fn split(attribute: usize, op: SplitOp, value: f64) -> Self {
        Node {
            id: 0,
            class: 0,
            parent: None,
            // placeholder links mark the node as internal until relinked
            left: Some(usize::MAX),
            right: Some(usize::MAX),
            op,
            value,
            attribute,
        }
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }
}

/// Nested description of a tree, convenient for building trees by hand.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeExpr {
    Leaf(usize),
    Split {
        attribute: usize,
        op: SplitOp,
        value: f64,
        left: Box<TreeExpr>,
        right: Box<TreeExpr>,
    },
}

impl TreeExpr {
    pub fn split(attribute: usize, op: SplitOp, value: f64, left: TreeExpr, right: TreeExpr) -> Self {
        TreeExpr::Split {
            attribute,
            op,
            value,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn push_preorder(&self, out: &mut Vec<Node>) {
        match self {
            TreeExpr::Leaf(c) => out.push(Node::leaf(*c)),
            TreeExpr::Split {
                attribute,
                op,
                value,
                left,
                right,
            } => {
                out.push(Node::split(*attribute, *op, *value));
                left.push_preorder(out);
                right.push_preorder(out);
            }
        }
    }
}

/// What random growth and the operators may produce.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpace {
    pub feature_count: usize,
    pub class_count: usize,
    /// Attributes eligible for random splits.
    pub attributes: Vec<usize>,
    /// Inclusive range the depth of freshly grown (sub)trees is drawn from.
    pub depth_interval: (usize, usize),
    pub max_depth: usize,
}

impl TreeSpace {
    pub fn new(feature_count: usize, class_count: usize) -> Self {
        TreeSpace {
            feature_count,
            class_count,
            attributes: (0..feature_count).collect(),
            depth_interval: (2, 10),
            max_depth: MAX_DEPTH_CAP,
        }
    }

    /// Splits only on non-constant features (all features if every one is
    /// constant).
    pub fn for_dataset(data: &Dataset) -> Self {
        let mut space = TreeSpace::new(data.feature_count(), data.class_count());
        let attrs: Vec<usize> = (0..data.feature_count()).filter(|&j| data.splittable()[j]).collect();
        if !attrs.is_empty() {
            space.attributes = attrs;
        }
        space
    }

    pub fn with_depths(mut self, depth_interval: (usize, usize), max_depth: usize) -> Self {
        self.depth_interval = depth_interval;
        self.max_depth = max_depth;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeGenotype {
    nodes: Vec<Node>,
    flat: Vec<FlatNode>,
    depth: usize,
    feature_count: usize,
    class_count: usize,
}

/// Compact node used by prediction. Leaves have `attribute == LEAF` and
/// keep their class in `left`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FlatNode {
    value: f64,
    attribute: u32,
    op: SplitOp,
    left: u32,
    right: u32,
}

const LEAF: u32 = u32::MAX;

fn flatten(nodes: &[Node]) -> Vec<FlatNode> {
    nodes
        .iter()
        .map(|n| match (n.left, n.right) {
            (Some(l), Some(r)) => FlatNode {
                value: n.value,
                attribute: n.attribute as u32,
                op: n.op,
                left: l as u32,
                right: r as u32,
            },
            _ => FlatNode {
                value: 0.0,
                attribute: LEAF,
                op: SplitOp::Lt,
                left: n.class as u32,
                right: 0,
            },
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    feature_count: usize,
    class_count: usize,
    nodes: Vec<Node>,
}

impl TreeGenotype {
    pub fn leaf(class: usize, feature_count: usize, class_count: usize) -> Self {
        TreeGenotype::from_expr(&TreeExpr::Leaf(class), feature_count, class_count)
            .expect("a leaf with a valid class is a valid tree")
    }

    pub fn from_expr(expr: &TreeExpr, feature_count: usize, class_count: usize) -> Result<Self, TreeError> {
        let mut nodes = Vec::new();
        expr.push_preorder(&mut nodes);
        let tree = TreeGenotype::from_preorder(nodes, feature_count, class_count, usize::MAX);
        tree.validate()?;
        Ok(tree)
    }

    pub fn to_expr(&self) -> TreeExpr {
        fn build(nodes: &[Node], i: usize) -> TreeExpr {
            let n = &nodes[i];
            match (n.left, n.right) {
                (Some(l), Some(r)) => TreeExpr::split(n.attribute, n.op, n.value, build(nodes, l), build(nodes, r)),
                _ => TreeExpr::Leaf(n.class),
            }
        }
        build(&self.nodes, 0)
    }

    /// Assigns ids, parent and child links to a preorder node list whose
    /// leaf/internal pattern is already right, then truncates to `max_depth`.
    fn from_preorder(mut nodes: Vec<Node>, feature_count: usize, class_count: usize, max_depth: usize) -> Self {
        let depths = relink(&mut nodes);
        let deepest = depths.iter().copied().max().unwrap_or(0);
        if deepest > max_depth {
            nodes = truncate(&nodes, &depths, max_depth);
            relink(&mut nodes);
        }
        for n in &mut nodes {
            if n.is_leaf() {
                n.op = SplitOp::Lt;
                n.value = 0.0;
                n.attribute = 0;
            } else {
                n.class = 0;
            }
        }
        let depth = subtree_depth(&nodes, 0);
        TreeGenotype {
            flat: flatten(&nodes),
            nodes,
            depth,
            feature_count,
            class_count,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> usize {
        debug_assert_eq!(x.len(), self.feature_count);
        let flat = &self.flat[..];
        let mut n = flat[0];
        while n.attribute != LEAF {
            let xv = x[n.attribute as usize];
            let go_left = match n.op {
                SplitOp::Lt => xv < n.value,
                SplitOp::Gt => xv > n.value,
                SplitOp::Eq => (xv - n.value).abs() <= EQ_TOLERANCE,
            };
            n = flat[if go_left { n.left } else { n.right } as usize];
        }
        n.left as usize
    }

    /// Number of points whose prediction matches its label.
    pub fn count_correct(&self, points: &Points, labels: &[usize]) -> usize {
        debug_assert_eq!(points.len(), labels.len());
        self.count_errors_up_to(points, labels, usize::MAX).map_or(0, |e| labels.len() - e)
    }

    /// `count_correct` if it reaches `need`, `None` as soon as it cannot.
    pub fn count_correct_at_least(&self, points: &Points, labels: &[usize], need: usize) -> Option<usize> {
        let allowed = labels.len().checked_sub(need)?;
        self.count_errors_up_to(points, labels, allowed).map(|e| labels.len() - e)
    }

    /// Misclassified points, or `None` once there are more than `allowed`.
    fn count_errors_up_to(&self, points: &Points, labels: &[usize], allowed: usize) -> Option<usize> {
        let mut errors = 0;
        for (x, &y) in points.rows().zip(labels) {
            if self.predict(x) != y {
                errors += 1;
                if errors > allowed {
                    return None;
                }
            }
        }
        Some(errors)
    }

    pub fn check_compatible(&self, data: &Dataset) -> Result<(), TreeError> {
        if self.feature_count != data.feature_count() {
            return Err(TreeError::FeatureMismatch {
                expected: self.feature_count,
                found: data.feature_count(),
            });
        }
        if self.class_count != data.class_count() {
            return Err(TreeError::ClassMismatch {
                expected: self.class_count,
                found: data.class_count(),
            });
        }
        Ok(())
    }

    /// Checks every structural invariant, including the cached depth.
    pub fn validate(&self) -> Result<(), TreeError> {
        validate_nodes(&self.nodes, self.feature_count, self.class_count)?;
        let depth = subtree_depth(&self.nodes, 0);
        if depth != self.depth {
            return Err(invalid("depth", format!("cached depth {} but tree depth is {depth}", self.depth)));
        }
        Ok(())
    }

    /// Copy truncated to `max_depth`.
    pub fn truncated(&self, max_depth: usize) -> Self {
        TreeGenotype::from_preorder(self.nodes.clone(), self.feature_count, self.class_count, max_depth)
    }

    /// Canonical JSON document, newline-terminated.
    pub fn to_json(&self) -> String {
        let doc = TreeDocument {
            feature_count: self.feature_count,
            class_count: self.class_count,
            nodes: self.nodes.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("tree documents always serialize");
        s.push('\n');
        s
    }

    /// Parses and validates a tree document. Node ids must equal their list
    /// positions; any node order is accepted and the result is canonical.
    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let doc: TreeDocument = serde_json::from_str(text).map_err(|e| TreeError::Syntax(e.to_string()))?;
        if doc.feature_count == 0 {
            return Err(invalid("feature_count", "must be positive"));
        }
        if doc.class_count < 2 {
            return Err(invalid("class_count", "must be at least 2"));
        }
        validate_nodes(&doc.nodes, doc.feature_count, doc.class_count)?;
        let mut ordered = Vec::with_capacity(doc.nodes.len());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let n = &doc.nodes[i];
            ordered.push(n.clone());
            if let (Some(l), Some(r)) = (n.left, n.right) {
                stack.push(r);
                stack.push(l);
            }
        }
        Ok(TreeGenotype::from_preorder(
            ordered,
            doc.feature_count,
            doc.class_count,
            usize::MAX,
        ))
    }

    fn subtree_end(&self, start: usize) -> usize {
        subtree_end(&self.nodes, start)
    }

    /// Preorder depth of every node.
    fn node_depths(&self) -> Vec<usize> {
        let mut depths = vec![0; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                depths[i] = depths[p] + 1;
            }
        }
        depths
    }

    fn splice(&self, start: usize, replacement: &[Node], max_depth: usize) -> Self {
        let end = self.subtree_end(start);
        let mut nodes = Vec::with_capacity(self.nodes.len() - (end - start) + replacement.len());
        nodes.extend_from_slice(&self.nodes[..start]);
        nodes.extend_from_slice(replacement);
        nodes.extend_from_slice(&self.nodes[end..]);
        TreeGenotype::from_preorder(nodes, self.feature_count, self.class_count, max_depth)
    }
}

impl Fingerprint for TreeGenotype {
    fn fingerprint_into<H: Hasher>(&self, state: &mut H) {
        self.feature_count.hash(state);
        self.class_count.hash(state);
        for n in &self.nodes {
            if n.is_leaf() {
                0u8.hash(state);
                n.class.hash(state);
            } else {
                1u8.hash(state);
                n.attribute.hash(state);
                n.op.hash(state);
                n.value.to_bits().hash(state);
            }
        }
    }
}

impl fmt::Display for TreeGenotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write(t: &TreeGenotype, f: &mut fmt::Formatter<'_>, i: usize, indent: usize) -> fmt::Result {
            let n = &t.nodes[i];
            match (n.left, n.right) {
                (Some(l), Some(r)) => {
                    writeln!(f, "{:indent$}if x[{}] {} {}", "", n.attribute, n.op, n.value, indent = indent)?;
                    write(t, f, l, indent + 2)?;
                    writeln!(f, "{:indent$}else", "", indent = indent)?;
                    write(t, f, r, indent + 2)
                }
                _ => writeln!(f, "{:indent$}class {}", "", n.class, indent = indent),
            }
        }
        write(self, f, 0, 0)
    }
}

/// Rewrites ids and links of a preorder list; returns node depths.
fn relink(nodes: &mut [Node]) -> Vec<usize> {
    let mut depths = vec![0usize; nodes.len()];
    // (node, children assigned so far)
    let mut open: Vec<(usize, u8)> = Vec::new();
    for i in 0..nodes.len() {
        nodes[i].id = i;
        nodes[i].parent = None;
        if let Some(top) = open.last_mut() {
            let p = top.0;
            nodes[i].parent = Some(p);
            depths[i] = depths[p] + 1;
            if top.1 == 0 {
                nodes[p].left = Some(i);
                top.1 = 1;
            } else {
                nodes[p].right = Some(i);
                open.pop();
            }
        }
        if !nodes[i].is_leaf() {
            open.push((i, 0));
        }
    }
    debug_assert!(open.is_empty(), "preorder list ended inside an open subtree");
    depths
}

/// One past the last preorder index of the subtree rooted at `start`.
fn subtree_end(nodes: &[Node], start: usize) -> usize {
    let mut pending = 1usize;
    let mut j = start;
    while pending > 0 {
        if nodes[j].is_leaf() {
            pending -= 1;
        } else {
            pending += 1;
        }
        j += 1;
    }
    j
}

fn subtree_depth(nodes: &[Node], root: usize) -> usize {
    let mut best = 0;
    let mut stack = vec![(root, 0usize)];
    while let Some((i, d)) = stack.pop() {
        let n = &nodes[i];
        match (n.left, n.right) {
            (Some(l), Some(r)) => {
                stack.push((l, d + 1));
                stack.push((r, d + 1));
            }
            _ => best = best.max(d),
        }
    }
    best
}

/// Internal nodes at `max_depth` become leaves labelled like their leftmost
/// leaf.
fn truncate(nodes: &[Node], depths: &[usize], max_depth: usize) -> Vec<Node> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut i = 0;
    while i < nodes.len() {
        let n = &nodes[i];
        if !n.is_leaf() && depths[i] >= max_depth {
            let mut j = i;
            while !nodes[j].is_leaf() {
                j += 1;
            }
            out.push(Node::leaf(nodes[j].class));
            i = subtree_end(nodes, i);
        } else {
            out.push(n.clone());
            i += 1;
        }
    }
    out
}

fn validate_nodes(nodes: &[Node], feature_count: usize, class_count: usize) -> Result<(), TreeError> {
    if nodes.is_empty() {
        return Err(invalid("nodes", "tree has no nodes"));
    }
    let n = nodes.len();
    for (i, node) in nodes.iter().enumerate() {
        let path = format!("nodes[{i}]");
        if node.id != i {
            return Err(invalid(format!("{path}.t"), format!("id {} does not match position {i}", node.id)));
        }
        match (node.left, node.right) {
            (None, None) => {
                if node.class >= class_count {
                    return Err(invalid(
                        format!("{path}.c"),
                        format!("class {} is not below class count {class_count}", node.class),
                    ));
                }
            }
            (Some(l), Some(r)) => {
                for (field, child) in [("L", l), ("R", r)] {
                    if child >= n {
                        return Err(invalid(format!("{path}.{field}"), format!("references missing node {child}")));
                    }
                    if nodes[child].parent != Some(i) {
                        return Err(invalid(
                            format!("nodes[{child}].P"),
                            format!("does not point back to parent {i}"),
                        ));
                    }
                }
                if l == r {
                    return Err(invalid(format!("{path}.R"), "left and right child coincide"));
                }
                if node.attribute >= feature_count {
                    return Err(invalid(
                        format!("{path}.a"),
                        format!("attribute {} is not below feature count {feature_count}", node.attribute),
                    ));
                }
                if !(0.0..=1.0).contains(&node.value) {
                    return Err(invalid(format!("{path}.v"), format!("split value {} outside [0, 1]", node.value)));
                }
            }
            _ => return Err(invalid(path, "exactly one child link is set")),
        }
        match node.parent {
            None if i != 0 => return Err(invalid(format!("{path}.P"), "only the root may lack a parent")),
            Some(_) if i == 0 => return Err(invalid("nodes[0].P", "the root must not have a parent")),
            Some(p) if p >= n => return Err(invalid(format!("{path}.P"), format!("references missing node {p}"))),
            Some(p) if nodes[p].left != Some(i) && nodes[p].right != Some(i) => {
                return Err(invalid(format!("{path}.P"), format!("node {p} does not list it as a child")));
            }
            _ => {}
        }
    }
    // every node reachable exactly once from the root
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    let mut count = 0;
    while let Some(i) = stack.pop() {
        if seen[i] {
            return Err(invalid(format!("nodes[{i}]"), "reached twice (cycle or shared child)"));
        }
        seen[i] = true;
        count += 1;
        if let (Some(l), Some(r)) = (nodes[i].left, nodes[i].right) {
            stack.push(l);
            stack.push(r);
        }
    }
    if count != n {
        let orphan = seen.iter().position(|s| !s).unwrap_or(0);
        return Err(invalid(format!("nodes[{orphan}]"), "not reachable from the root"));
    }
    Ok(())
}

fn random_split<R: Rng + ?Sized>(space: &TreeSpace, rng: &mut R) -> Node {
    let attribute = *space.attributes.choose(rng).expect("tree space has attributes");
    let op = if rng.gen_bool(0.5) { SplitOp::Lt } else { SplitOp::Gt };
    Node::split(attribute, op, rng.gen::<f64>())
}

/// Preorder nodes of a random subtree of exactly `depth` levels: one path is
/// forced down to `depth`, every other node splits with probability 1/2.
fn grow<R: Rng + ?Sized>(space: &TreeSpace, depth: usize, rng: &mut R) -> Vec<Node> {
    fn rec<R: Rng + ?Sized>(space: &TreeSpace, d: usize, target: usize, forced: bool, rng: &mut R, out: &mut Vec<Node>) {
        if d == target || !(forced || rng.gen_bool(0.5)) {
            out.push(Node::leaf(rng.gen_range(0..space.class_count)));
            return;
        }
        out.push(random_split(space, rng));
        let forced_left = forced && rng.gen_bool(0.5);
        rec(space, d + 1, target, forced_left, rng, out);
        rec(space, d + 1, target, forced && !forced_left, rng, out);
    }
    let mut out = Vec::new();
    rec(space, 0, depth, true, rng, &mut out);
    out
}

fn draw_depth<R: Rng + ?Sized>(space: &TreeSpace, rng: &mut R) -> usize {
    let (lo, hi) = space.depth_interval;
    assert!(lo >= 1 && lo <= hi, "depth interval must satisfy 1 <= lo <= hi");
    rng.gen_range(lo..=hi)
}

/// A random tree whose depth is drawn uniformly from `space.depth_interval`.
pub fn random_tree<R: Rng + ?Sized>(space: &TreeSpace, rng: &mut R) -> TreeGenotype {
    let depth = draw_depth(space, rng);
    TreeGenotype::from_preorder(grow(space, depth, rng), space.feature_count, space.class_count, space.max_depth)
}

/// Swaps the subtrees under one uniformly chosen node of each parent.
pub fn crossover_trees<R: Rng + ?Sized>(
    a: &TreeGenotype,
    b: &TreeGenotype,
    space: &TreeSpace,
    rng: &mut R,
) -> (TreeGenotype, TreeGenotype) {
    let i = rng.gen_range(0..a.len());
    let j = rng.gen_range(0..b.len());
    crossover_at(a, b, i, j, space.max_depth)
}

/// Crossover with explicit swap points, exposed for tests.
pub fn crossover_at(a: &TreeGenotype, b: &TreeGenotype, i: usize, j: usize, max_depth: usize) -> (TreeGenotype, TreeGenotype) {
    let sub_a = &a.nodes[i..a.subtree_end(i)];
    let sub_b = &b.nodes[j..b.subtree_end(j)];
    (a.splice(i, sub_b, max_depth), b.splice(j, sub_a, max_depth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationAction {
    /// Replace a subtree with a freshly grown one.
    ReplaceSubtree,
    /// Redraw the split value or the operator of one node.
    ChangeNode,
    /// Collapse a subtree into a leaf.
    Prune,
}

/// Applies `action` once.
pub fn mutate_with<R: Rng + ?Sized>(
    tree: &TreeGenotype,
    space: &TreeSpace,
    action: MutationAction,
    rng: &mut R,
) -> TreeGenotype {
    let internal: Vec<usize> = (0..tree.len()).filter(|&i| !tree.nodes[i].is_leaf()).collect();
    match action {
        MutationAction::ReplaceSubtree => {
            let at = rng.gen_range(0..tree.len());
            let fresh = grow(space, draw_depth(space, rng), rng);
            tree.splice(at, &fresh, space.max_depth)
        }
        MutationAction::ChangeNode => {
            let mut nodes = tree.nodes.clone();
            match internal.choose(rng) {
                Some(&k) => {
                    let node = &mut nodes[k];
                    if rng.gen_bool(0.5) {
                        node.value = rng.gen::<f64>();
                    } else {
                        let others: Vec<SplitOp> = SplitOp::ALL.into_iter().filter(|&o| o != node.op).collect();
                        node.op = *others.choose(rng).expect("two other operators");
                    }
                }
                // a lone leaf has no split to change; relabel it instead
                None => nodes[0].class = rng.gen_range(0..space.class_count),
            }
            TreeGenotype::from_preorder(nodes, tree.feature_count, tree.class_count, space.max_depth)
        }
        MutationAction::Prune => match internal.choose(rng) {
            Some(&k) => {
                let leaf = Node::leaf(rng.gen_range(0..space.class_count));
                tree.splice(k, &[leaf], space.max_depth)
            }
            None => TreeGenotype::leaf(rng.gen_range(0..space.class_count), tree.feature_count, tree.class_count),
        },
    }
}

/// `trials` independent mutants, each made by one uniformly chosen action.
/// Picking the fittest is left to the caller.
pub fn mutate_candidates<R: Rng + ?Sized>(
    tree: &TreeGenotype,
    space: &TreeSpace,
    trials: usize,
    rng: &mut R,
) -> Vec<TreeGenotype> {
    assert!(trials >= 1, "at least one mutation trial is required");
    (0..trials)
        .map(|_| {
            let action = match rng.gen_range(0..3) {
                0 => MutationAction::ReplaceSubtree,
                1 => MutationAction::ChangeNode,
                _ => MutationAction::Prune,
            };
            mutate_with(tree, space, action, rng)
        })
        .collect()
}

/// Depth of every node in preorder (root is 0).
pub fn node_depths(tree: &TreeGenotype) -> Vec<usize> {
    tree.node_depths()
}
