// SPDX-License-Identifier: MIT OR Apache-2.0

//! Decorated rooted trees and forests.
//!
//! Iterated Volterra integrals are indexed by finite rooted trees whose
//! nodes carry decorations naming driver components.  Two families occur:
//!
//! * **Rooted-form trees** — the root is *unlabeled*, every other node
//!   carries a decoration in `0..=d`.  These index integrals: each labeled
//!   node contributes one integration variable and one `dq^i` factor; each
//!   edge contributes one kernel factor.  The single unlabeled root is the
//!   unit tree `1` of grade zero.
//! * **Branch trees** — *every* node is labeled.  These arise as the root
//!   branches of rooted-form trees (remove the unlabeled root and its
//!   edges) and as the building blocks of the grafting operators.
//!
//! The **grade** `|h|` of a tree is its number of labeled nodes.
//!
//! # Canonical form
//!
//! Trees are stored in a canonical shape: the children of every node are
//! sorted by a fixed structural order (label first, then recursively the
//! child list).  Equality, hashing and ordering are therefore structural
//! equality of the abstract decorated tree, and every constructor in this
//! module restores the invariant, so user code never has to canonicalize
//! explicitly.
//!
//! # Text form
//!
//! A branch tree prints as `(children)label`, with the sugar `(3)` for a
//! leaf labeled `3` (instead of `()3`).  A rooted-form tree prints as the
//! juxtaposition of its root branches, e.g. `((0)(1))2(3)` is the tree
//! whose unlabeled root has two branches: a node labeled `2` carrying
//! leaves `0` and `1`, and a leaf labeled `3`.  The unit tree prints as
//! `1`.  Forests print their trees separated by `*`.
//!
//! ```
//! use volterra_rough::tree::DecoratedTree;
//!
//! let h = DecoratedTree::parse("((0)(1))2(3)").unwrap();
//! assert_eq!(h.grade(), 4);
//! assert_eq!(h.to_string(), "((0)(1))2(3)");
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// A decoration label naming a driver component (`0` is the time component).
pub type Label = usize;

/// A decorated rooted tree in canonical form.
///
/// The root may be unlabeled (rooted form, indexing integrals) or labeled
/// (branch tree).  Children are kept sorted by the derived structural
/// order, so `==`, `Ord` and `Hash` agree with abstract tree isomorphism.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecoratedTree {
    label: Option<Label>,
    children: Vec<DecoratedTree>,
}

impl DecoratedTree {
    /// Build a node with the given label and children, restoring the
    /// canonical child order.  Children must themselves be canonical
    /// (every public constructor guarantees this).
    pub fn node(label: Option<Label>, mut children: Vec<DecoratedTree>) -> Self {
        children.sort_unstable();
        DecoratedTree { label, children }
    }

    /// The unit tree `1`: a single unlabeled root, grade zero.
    pub fn unit() -> Self {
        DecoratedTree { label: None, children: Vec::new() }
    }

    /// A labeled leaf (a branch tree with no children).
    pub fn leaf(label: Label) -> Self {
        DecoratedTree { label: Some(label), children: Vec::new() }
    }

    /// The grade-one rooted-form tree with a single leaf labeled `i`.
    pub fn single(i: Label) -> Self {
        DecoratedTree::node(None, vec![DecoratedTree::leaf(i)])
    }

    /// The rooted-form ladder whose labels run from the node adjacent to
    /// the root (`labels[0]`) up to the top leaf (`labels.last()`).
    pub fn ladder(labels: &[Label]) -> Self {
        let mut t: Option<DecoratedTree> = None;
        for &l in labels.iter().rev() {
            let children = match t.take() {
                Some(sub) => vec![sub],
                None => Vec::new(),
            };
            t = Some(DecoratedTree::node(Some(l), children));
        }
        DecoratedTree::node(None, t.into_iter().collect())
    }

    /// Root label (`None` for rooted-form trees).
    pub fn label(&self) -> Option<Label> {
        self.label
    }

    /// The children of the root, in canonical order.
    pub fn children(&self) -> &[DecoratedTree] {
        &self.children
    }

    /// Number of labeled nodes (the grade `|h|`).
    pub fn grade(&self) -> usize {
        let own = usize::from(self.label.is_some());
        own + self.children.iter().map(DecoratedTree::grade).sum::<usize>()
    }

    /// Total number of nodes including the root.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(DecoratedTree::node_count).sum::<usize>()
    }

    /// `true` for the unit tree `1`.
    pub fn is_unit(&self) -> bool {
        self.label.is_none() && self.children.is_empty()
    }

    /// `true` if the root is unlabeled (rooted form).
    pub fn has_unlabeled_root(&self) -> bool {
        self.label.is_none()
    }

    /// `true` if every node (including the root) is labeled.
    pub fn is_fully_labeled(&self) -> bool {
        self.label.is_some() && self.children.iter().all(DecoratedTree::is_fully_labeled)
    }

    /// `true` for a rooted-form tree whose unlabeled root has exactly one
    /// branch.  Planted trees are the shapes produced by integration.
    pub fn is_planted(&self) -> bool {
        self.label.is_none() && self.children.len() == 1
    }

    /// `true` for a rooted-form tree that is a single chain.
    pub fn is_ladder(&self) -> bool {
        self.ladder_labels().is_some()
    }

    /// For a ladder, its labels from the node adjacent to the root up to
    /// the top leaf; `None` if the tree branches.
    pub fn ladder_labels(&self) -> Option<Vec<Label>> {
        if self.label.is_some() {
            return None;
        }
        let mut labels = Vec::new();
        let mut cur = self;
        loop {
            match cur.children.len() {
                0 => return Some(labels),
                1 => {
                    let child = &cur.children[0];
                    labels.push(child.label?);
                    cur = child;
                }
                _ => return None,
            }
        }
    }

    /// Maximal label appearing in the tree, if any node is labeled.
    pub fn max_label(&self) -> Option<Label> {
        let mut best = self.label;
        for c in &self.children {
            best = match (best, c.max_label()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
        }
        best
    }

    /// Root branches of a rooted-form tree as *planted* rooted-form trees
    /// (each child is replanted under a fresh unlabeled root).  The unit
    /// tree has no branches.
    pub fn branches(&self) -> Vec<DecoratedTree> {
        self.children
            .iter()
            .map(|c| DecoratedTree::node(None, vec![c.clone()]))
            .collect()
    }

    /// Labels carried by the node in preorder (root first, children in
    /// canonical order).  Node indices used by cut terms refer to this
    /// ordering.
    pub fn labels_preorder(&self) -> Vec<Option<Label>> {
        let mut out = Vec::with_capacity(self.node_count());
        self.push_labels(&mut out);
        out
    }

    fn push_labels(&self, out: &mut Vec<Option<Label>>) {
        out.push(self.label);
        for c in &self.children {
            c.push_labels(out);
        }
    }

    /// Parent of each node in preorder indexing (`None` for the root).
    pub fn parents_preorder(&self) -> Vec<Option<usize>> {
        fn rec(t: &DecoratedTree, parent: Option<usize>, out: &mut Vec<Option<usize>>) {
            let id = out.len();
            out.push(parent);
            for c in t.children() {
                rec(c, Some(id), out);
            }
        }
        let mut out = Vec::with_capacity(self.node_count());
        rec(self, None, &mut out);
        out
    }

    /// Parse a rooted-form tree from its text form (`1`, `(0)`,
    /// `((0)(1))2(3)`, ...).
    pub fn parse(text: &str) -> Result<DecoratedTree> {
        let mut p = Parser::new(text);
        let t = p.rooted_tree()?;
        p.expect_end()?;
        Ok(t)
    }

    /// Parse a branch tree (every node labeled) from its text form
    /// (`(3)`, `((0)(1))2`, ...).
    pub fn parse_branch(text: &str) -> Result<DecoratedTree> {
        let mut p = Parser::new(text);
        let t = p.branch_tree()?;
        p.expect_end()?;
        Ok(t)
    }
}

impl fmt::Display for DecoratedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label {
            Some(_) => fmt_branch(self, f),
            None => {
                if self.children.is_empty() {
                    write!(f, "1")
                } else {
                    for c in &self.children {
                        fmt_branch(c, f)?;
                    }
                    Ok(())
                }
            }
        }
    }
}

impl fmt::Debug for DecoratedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn fmt_branch(t: &DecoratedTree, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let label = t.label.expect("branch trees carry a root label");
    if t.children.is_empty() {
        write!(f, "({label})")
    } else {
        write!(f, "(")?;
        for c in &t.children {
            fmt_branch(c, f)?;
        }
        write!(f, "){label}")
    }
}

// ---------------------------------------------------------------------------
// Forests
// ---------------------------------------------------------------------------

/// A commutative forest: a multiset of decorated trees.
///
/// The product of the tree algebra is disjoint union, so a forest is kept
/// as a sorted vector.  Unit trees are dropped on insertion: the unit
/// tree *is* the empty product, so `1 · h = h`.  A forest may hold either
/// rooted-form trees (pruned parts of cuts) or branch trees (outputs of
/// the root-removal operator); mixing the two families in one forest is
/// not meaningful and is rejected by the validating constructors.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Forest {
    trees: Vec<DecoratedTree>,
}

impl Forest {
    /// The empty forest (the algebra unit).
    pub fn unit() -> Self {
        Forest { trees: Vec::new() }
    }

    /// Build a forest from trees, dropping units and sorting.
    pub fn from_trees(trees: impl IntoIterator<Item = DecoratedTree>) -> Self {
        let mut trees: Vec<DecoratedTree> =
            trees.into_iter().filter(|t| !t.is_unit()).collect();
        trees.sort_unstable();
        Forest { trees }
    }

    /// A forest holding a single tree (or the unit forest for the unit tree).
    pub fn singleton(tree: DecoratedTree) -> Self {
        Forest::from_trees([tree])
    }

    /// The trees of the forest in canonical order.
    pub fn trees(&self) -> &[DecoratedTree] {
        &self.trees
    }

    /// `true` for the empty product.
    pub fn is_unit(&self) -> bool {
        self.trees.is_empty()
    }

    /// Total grade (sum over trees).
    pub fn grade(&self) -> usize {
        self.trees.iter().map(DecoratedTree::grade).sum()
    }

    /// Forest product: multiset union.
    pub fn product(&self, other: &Forest) -> Forest {
        let mut trees = self.trees.clone();
        trees.extend(other.trees.iter().cloned());
        trees.sort_unstable();
        Forest { trees }
    }

    /// Append one tree (multiset insertion, dropping units).
    pub fn push(&mut self, tree: DecoratedTree) {
        if !tree.is_unit() {
            self.trees.push(tree);
            self.trees.sort_unstable();
        }
    }

    /// Parse a `*`-separated forest of rooted-form trees; `1` parses to
    /// the empty forest.
    pub fn parse(text: &str) -> Result<Forest> {
        let mut trees = Vec::new();
        for part in text.split('*') {
            trees.push(DecoratedTree::parse(part)?);
        }
        Ok(Forest::from_trees(trees))
    }

    /// Parse a `*`-separated forest of branch trees.
    pub fn parse_branches(text: &str) -> Result<Forest> {
        let trimmed = text.trim();
        if trimmed == "1" {
            return Ok(Forest::unit());
        }
        let mut trees = Vec::new();
        for part in trimmed.split('*') {
            trees.push(DecoratedTree::parse_branch(part)?);
        }
        Ok(Forest::from_trees(trees))
    }
}

impl fmt::Display for Forest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.trees.is_empty() {
            return write!(f, "1");
        }
        for (i, t) in self.trees.iter().enumerate() {
            if i > 0 {
                write!(f, " * ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Forest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromIterator<DecoratedTree> for Forest {
    fn from_iter<I: IntoIterator<Item = DecoratedTree>>(iter: I) -> Self {
        Forest::from_trees(iter)
    }
}

// ---------------------------------------------------------------------------
// Structural operators
// ---------------------------------------------------------------------------

/// Connect the roots of a forest of branch trees to a fresh unlabeled
/// root, producing a rooted-form tree.  The empty forest maps to the unit
/// tree.
pub fn b_plus(forest: &Forest) -> Result<DecoratedTree> {
    for t in forest.trees() {
        if !t.is_fully_labeled() {
            return Err(Error::validation(format!(
                "b_plus expects branch trees (every node labeled); got `{t}`"
            )));
        }
    }
    Ok(DecoratedTree::node(None, forest.trees().to_vec()))
}

/// Connect the roots of a forest of branch trees to a fresh root labeled
/// `label`, producing a branch tree.
pub fn b_plus_labeled(label: Label, forest: &Forest) -> Result<DecoratedTree> {
    for t in forest.trees() {
        if !t.is_fully_labeled() {
            return Err(Error::validation(format!(
                "b_plus_labeled expects branch trees (every node labeled); got `{t}`"
            )));
        }
    }
    Ok(DecoratedTree::node(Some(label), forest.trees().to_vec()))
}

/// Remove the unlabeled root of a rooted-form tree, returning the forest
/// of its branches as branch trees.  Left inverse of [`b_plus`].
pub fn b_minus(tree: &DecoratedTree) -> Result<Forest> {
    if tree.label().is_some() {
        return Err(Error::validation(format!(
            "b_minus expects a rooted-form tree (unlabeled root); got `{tree}`"
        )));
    }
    Ok(Forest::from_trees(tree.children().to_vec()))
}

/// Extend [`b_minus`] multiplicatively to a forest of rooted-form trees.
pub fn b_minus_forest(forest: &Forest) -> Result<Forest> {
    let mut out = Forest::unit();
    for t in forest.trees() {
        out = out.product(&b_minus(t)?);
    }
    Ok(out)
}

/// Graft: plant the rooted-form tree `h` under a fresh unlabeled root,
/// labeling the node that used to be `h`'s root with `i`.  The result is
/// a planted rooted-form tree of grade `|h| + 1`; grafting the unit tree
/// yields the single-leaf tree.
pub fn graft(i: Label, h: &DecoratedTree) -> Result<DecoratedTree> {
    if h.label().is_some() {
        return Err(Error::validation(format!(
            "graft expects a rooted-form tree (unlabeled root); got `{h}`"
        )));
    }
    let planted = DecoratedTree::node(Some(i), h.children().to_vec());
    Ok(DecoratedTree::node(None, vec![planted]))
}

/// Product of two rooted-form trees: identify the two unlabeled roots
/// (equivalently, take the union of the root branches).  This is the
/// multiplication under which a rooted-form tree is the product of its
/// planted branches.
pub fn tree_product(a: &DecoratedTree, b: &DecoratedTree) -> Result<DecoratedTree> {
    if a.label().is_some() || b.label().is_some() {
        return Err(Error::validation(
            "tree_product expects rooted-form trees (unlabeled roots)",
        ));
    }
    let mut children = a.children().to_vec();
    children.extend(b.children().iter().cloned());
    Ok(DecoratedTree::node(None, children))
}

/// Symmetry factor `S(h)`: the order of the automorphism group of the
/// decorated tree (permutations of identical siblings, applied
/// recursively).
pub fn symmetry_factor(tree: &DecoratedTree) -> u128 {
    let mut factor: u128 = 1;
    let mut i = 0;
    let children = tree.children();
    while i < children.len() {
        let mut j = i + 1;
        while j < children.len() && children[j] == children[i] {
            j += 1;
        }
        let mult = (j - i) as u128;
        factor *= factorial(mult);
        for c in &children[i..j] {
            factor *= symmetry_factor(c);
        }
        i = j;
    }
    factor
}

fn factorial(n: u128) -> u128 {
    (2..=n).product::<u128>().max(1)
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// Enumerate every rooted-form tree of grade `0..=max_grade` with labels
/// in `0..=max_label`, grouped by grade and sorted within each grade.
///
/// `cap` bounds the total number of trees constructed (including the
/// intermediate branch trees); exceeding it is a validation error, since
/// the count grows super-exponentially in the grade.
pub fn enumerate_trees(
    max_grade: usize,
    max_label: Label,
    cap: Option<usize>,
) -> Result<Vec<Vec<DecoratedTree>>> {
    let cap = cap.unwrap_or(usize::MAX);
    let mut total: usize = 0;
    // Branch trees by grade (grade >= 1), built bottom-up: a branch tree
    // of grade g is a labeled root over a branch forest of grade g - 1.
    let mut branch_by_grade: Vec<Vec<DecoratedTree>> = vec![Vec::new()];
    for g in 1..=max_grade {
        let forests = branch_forests(&branch_by_grade, g - 1);
        let mut level = Vec::new();
        for forest in &forests {
            for label in 0..=max_label {
                level.push(DecoratedTree::node(Some(label), forest.clone()));
                total += 1;
                if total > cap {
                    return Err(cap_error(cap));
                }
            }
        }
        level.sort_unstable();
        branch_by_grade.push(level);
    }

    // Rooted-form trees of grade g = unlabeled root over branch forests
    // of grade g.
    let mut out = Vec::with_capacity(max_grade + 1);
    for g in 0..=max_grade {
        let forests = branch_forests(&branch_by_grade, g);
        let mut level: Vec<DecoratedTree> = forests
            .into_iter()
            .map(|f| DecoratedTree::node(None, f))
            .collect();
        level.sort_unstable();
        total += level.len();
        if total > cap {
            return Err(cap_error(cap));
        }
        out.push(level);
    }
    Ok(out)
}

fn cap_error(cap: usize) -> Error {
    Error::validation(format!(
        "tree enumeration exceeds the configured cap of {cap} trees; \
         lower max_grade/max_label or raise the cap"
    ))
}

/// All multisets of branch trees with total grade exactly `total`.
fn branch_forests(
    branch_by_grade: &[Vec<DecoratedTree>],
    total: usize,
) -> Vec<Vec<DecoratedTree>> {
    // Flatten available branch trees (grade >= 1) into one ordered list.
    let items: Vec<(usize, &DecoratedTree)> = branch_by_grade
        .iter()
        .enumerate()
        .skip(1)
        .take(total)
        .flat_map(|(g, level)| level.iter().map(move |t| (g, t)))
        .collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    multiset_rec(&items, 0, total, &mut current, &mut out);
    out
}

fn multiset_rec(
    items: &[(usize, &DecoratedTree)],
    start: usize,
    remaining: usize,
    current: &mut Vec<DecoratedTree>,
    out: &mut Vec<Vec<DecoratedTree>>,
) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for idx in start..items.len() {
        let (g, t) = items[idx];
        if g > remaining {
            continue;
        }
        current.push(t.clone());
        multiset_rec(items, idx, remaining - g, current, out);
        current.pop();
    }
}

/// Group a list of trees into `(tree, multiplicity)` pairs.
pub fn with_multiplicity(trees: &[DecoratedTree]) -> Vec<(DecoratedTree, usize)> {
    let mut map: BTreeMap<&DecoratedTree, usize> = BTreeMap::new();
    for t in trees {
        *map.entry(t).or_insert(0) += 1;
    }
    map.into_iter().map(|(t, m)| (t.clone(), m)).collect()
}

// ---------------------------------------------------------------------------
// Flat indexed view (shared by the cut machinery and the quadrature engine)
// ---------------------------------------------------------------------------

/// A preorder-indexed view of a tree: node `0` is the root, children
/// appear after their parent in canonical order.
#[derive(Clone, Debug)]
pub(crate) struct Flat {
    pub label: Vec<Option<Label>>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl Flat {
    pub fn of(tree: &DecoratedTree) -> Flat {
        let n = tree.node_count();
        let mut flat = Flat {
            label: Vec::with_capacity(n),
            parent: Vec::with_capacity(n),
            children: Vec::with_capacity(n),
        };
        fn rec(t: &DecoratedTree, parent: Option<usize>, flat: &mut Flat) -> usize {
            let id = flat.label.len();
            flat.label.push(t.label());
            flat.parent.push(parent);
            flat.children.push(Vec::new());
            for c in t.children() {
                let cid = rec(c, Some(id), flat);
                flat.children[id].push(cid);
            }
            id
        }
        rec(tree, None, &mut flat);
        flat
    }

    pub fn len(&self) -> usize {
        self.label.len()
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { bytes: text.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        match self.bump() {
            Some(got) if got == b => Ok(()),
            got => Err(self.error(format!(
                "expected `{}`, found {}",
                b as char,
                got.map_or("end of input".to_string(), |g| format!("`{}`", g as char))
            ))),
        }
    }

    fn expect_end(&mut self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(b) => Err(self.error(format!("unexpected trailing `{}`", b as char))),
        }
    }

    fn error(&self, msg: String) -> Error {
        Error::validation(format!(
            "tree syntax error at byte {}: {msg}",
            self.pos.min(self.bytes.len())
        ))
    }

    fn number(&mut self) -> Result<Label> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected a decoration label".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse::<Label>()
            .map_err(|e| self.error(format!("bad label: {e}")))
    }

    /// rooted_tree := '1' | branch_tree+
    fn rooted_tree(&mut self) -> Result<DecoratedTree> {
        match self.peek() {
            Some(b'1') => {
                self.pos += 1;
                Ok(DecoratedTree::unit())
            }
            Some(b'(') => {
                let mut children = Vec::new();
                while self.peek() == Some(b'(') {
                    children.push(self.branch_tree()?);
                }
                Ok(DecoratedTree::node(None, children))
            }
            _ => Err(self.error("expected `1` or `(`".into())),
        }
    }

    /// branch_tree := '(' label ')' | '(' branch_tree* ')' label
    fn branch_tree(&mut self) -> Result<DecoratedTree> {
        self.expect(b'(')?;
        match self.peek() {
            // Leaf sugar `(3)`.
            Some(b) if b.is_ascii_digit() => {
                let label = self.number()?;
                self.expect(b')')?;
                Ok(DecoratedTree::leaf(label))
            }
            _ => {
                let mut children = Vec::new();
                while self.peek() == Some(b'(') {
                    children.push(self.branch_tree()?);
                }
                self.expect(b')')?;
                let label = self.number()?;
                Ok(DecoratedTree::node(Some(label), children))
            }
        }
    }
}

// ---------------------------------------------------------------------------
