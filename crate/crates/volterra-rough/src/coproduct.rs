// SPDX-License-Identifier: MIT OR Apache-2.0

//! The plugging coproduct on decorated trees.
//!
//! The coproduct encodes how an iterated Volterra integral over `[s, t]`
//! splits at an intermediate time `u`: each term keeps a lower portion of
//! the tree (the *trunk*, integrated over `[s, u]`) and plugs the removed
//! upper portions back in as integrals over `[u, t]` evaluated at the
//! trunk's integration variables.
//!
//! Concretely, a term is indexed by an **admissible cut**: a set of edges
//! containing at most one edge on each root-to-leaf path.  Removing the
//! cut edges leaves the trunk; the subtrees *above* the cut edges,
//! together with the cut edges themselves, form the pruned pieces.  Cut
//! edges hanging from one trunk node are grouped into a single pruned
//! piece — a rooted-form tree whose fresh unlabeled root stands for the
//! trunk node it is plugged into (its *attachment node*).  The empty cut
//! gives `h (x) 1`; cutting every root edge gives `1 (x) h`.
//!
//! Unlike the classical pruning coproduct (where cut edges are deleted
//! outright), the pruned pieces here keep their cut edges because each
//! such edge carries a kernel factor `k(u_attach, r)` that must ride
//! along with the upper integral.  Removing the roots on both sides
//! (see [`crate::tree::b_minus`]) collapses the plugging coproduct onto
//! the classical one, which the test suite uses as a cross-check.
//!
//! Attachment nodes are recorded as preorder indices into the canonical
//! trunk (the root is `0`); [`CutTermDetailed`] additionally exposes the
//! original node indices for tests that need to follow nodes through a
//! cut.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::Result;
use crate::tree::{DecoratedTree, Flat, Forest, Label};

/// One pruned piece of a cut: a rooted-form tree plugged into the trunk
/// node with preorder index `attach`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrunedPiece {
    /// The piece itself; its unlabeled root stands for the attachment
    /// node and its root edges are the cut edges.
    pub tree: DecoratedTree,
    /// Preorder index of the attachment node in the canonical trunk.
    pub attach: usize,
}

/// One term of the plugging coproduct: `trunk (x) prod pruned`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CutTerm {
    /// The lower portion left by the cut; keeps the root of the original
    /// tree (and its label, when the input is a branch tree).
    pub trunk: DecoratedTree,
    /// Pruned pieces in a deterministic order (by tree, then attachment
    /// index).  Empty for the empty cut.
    pub pruned: Vec<PrunedPiece>,
}

impl CutTerm {
    /// The pruned pieces as a forest, forgetting attachment data.
    pub fn pruned_forest(&self) -> Forest {
        Forest::from_trees(self.pruned.iter().map(|p| p.tree.clone()))
    }

    /// Total grade carried by the pruned pieces.
    pub fn pruned_grade(&self) -> usize {
        self.pruned.iter().map(|p| p.tree.grade()).sum()
    }
}

impl fmt::Display for CutTerm {
    /// Render as `trunk | piece@attach * piece@attach`, with `1` for the
    /// empty pruned side.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | ", self.trunk)?;
        if self.pruned.is_empty() {
            return write!(f, "1");
        }
        for (i, p) in self.pruned.iter().enumerate() {
            if i > 0 {
                write!(f, " * ")?;
            }
            write!(f, "{}@{}", p.tree, p.attach)?;
        }
        Ok(())
    }
}

/// A cut term together with maps from canonical preorder indices back to
/// the node indices of the original tree.
#[derive(Clone, Debug)]
pub struct CutTermDetailed {
    /// The combinatorial term.
    pub term: CutTerm,
    /// For each preorder index of the canonical trunk, the preorder index
    /// of the corresponding node in the original tree.
    pub trunk_nodes: Vec<usize>,
    /// For each pruned piece, the same map; entry `0` (the phantom root)
    /// carries the original index of the attachment node.
    pub pruned_nodes: Vec<Vec<usize>>,
}

/// The plugging coproduct of a tree (rooted-form or branch), as the list
/// of all admissible-cut terms in a deterministic order.
///
/// The list always contains the empty-cut term `h (x) 1`; for rooted-form
/// trees it also contains the full-cut term `1 (x) h` (for the unit tree
/// the two coincide).
pub fn coproduct(h: &DecoratedTree) -> Vec<CutTerm> {
    coproduct_detailed(h).into_iter().map(|d| d.term).collect()
}

/// [`coproduct`] with original-node maps attached to every term.
pub fn coproduct_detailed(h: &DecoratedTree) -> Vec<CutTermDetailed> {
    let flat = Flat::of(h);
    let states = cut_states(&flat, 0);
    let mut out: Vec<CutTermDetailed> = states
        .into_iter()
        .map(|state| assemble(&flat, state))
        .collect();
    out.sort_by(|a, b| a.term.cmp(&b.term));
    out
}

/// All admissible cuts of `h` as explicit edge sets, in a deterministic
/// order.  An edge is identified by the preorder index of its child node;
/// the empty set (empty cut) and the set of all root edges (full cut)
/// are included.
pub fn admissible_cuts(h: &DecoratedTree) -> Vec<Vec<usize>> {
    let flat = Flat::of(h);
    // Per subtree: either the parent edge is cut (handled by the caller)
    // or each child edge independently chooses cut-or-recurse.
    fn below(flat: &Flat, v: usize) -> Vec<Vec<usize>> {
        let mut cuts: Vec<Vec<usize>> = vec![Vec::new()];
        for &w in &flat.children[v] {
            let mut options: Vec<Vec<usize>> = vec![vec![w]];
            options.extend(below(flat, w));
            let mut next = Vec::with_capacity(cuts.len() * options.len());
            for c in &cuts {
                for o in &options {
                    let mut merged = c.clone();
                    merged.extend(o.iter().copied());
                    next.push(merged);
                }
            }
            cuts = next;
        }
        cuts
    }
    let mut cuts: Vec<Vec<usize>> = below(&flat, 0)
        .into_iter()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    cuts.sort();
    cuts
}

/// The coproduct without its two extreme terms `h (x) 1` and `1 (x) h`.
/// For the unit tree (where the extremes coincide) this is empty.
pub fn reduced_coproduct(h: &DecoratedTree) -> Vec<CutTerm> {
    coproduct(h)
        .into_iter()
        .filter(|t| !t.pruned.is_empty() && !t.trunk.is_unit())
        .collect()
}

/// Number of admissible cuts of `h` (the number of coproduct terms).
pub fn admissible_cut_count(h: &DecoratedTree) -> usize {
    // One cut per monotone {trunk, pruned} assignment; count recursively:
    // a subtree contributes (1 + prod over children) choices — either its
    // parent edge is cut (everything below rides along, 1 way) or it is
    // kept and the children decide independently.
    fn choices(t: &DecoratedTree) -> usize {
        1 + t.children().iter().map(choices).product::<usize>()
    }
    // The root has no parent edge, so only the product applies.
    h.children().iter().map(choices).product()
}

/// Multiplicity map of the coproduct with attachments forgotten:
/// `(trunk, pruned forest) -> multiplicity`.
pub fn coproduct_grouped(h: &DecoratedTree) -> BTreeMap<(DecoratedTree, Forest), usize> {
    let mut map = BTreeMap::new();
    for term in coproduct(h) {
        *map.entry((term.trunk.clone(), term.pruned_forest())).or_insert(0) += 1;
    }
    map
}

/// The multiplicity of `trunk (x) pruned` in the *reduced* coproduct of
/// `sigma`, with attachments forgotten.  This is the combinatorial
/// coefficient that weights lower-grade components in remainder
/// expansions of controlled paths; summing it over all `(trunk, pruned)`
/// pairs recovers the number of admissible cuts minus the two extremes.
pub fn counting_function(sigma: &DecoratedTree, trunk: &DecoratedTree, pruned: &Forest) -> usize {
    reduced_coproduct(sigma)
        .iter()
        .filter(|t| &t.trunk == trunk && &t.pruned_forest() == pruned)
        .count()
}

// ---------------------------------------------------------------------------
// Forest and iterated coproducts
// ---------------------------------------------------------------------------

/// The coproduct extended multiplicatively to forests, with attachments
/// forgotten: every combination of one cut per tree contributes
/// `(product of trunks, product of pruned forests)`.
pub fn forest_coproduct(f: &Forest) -> Vec<(Forest, Forest)> {
    let mut terms: Vec<(Forest, Forest)> = vec![(Forest::unit(), Forest::unit())];
    for tree in f.trees() {
        let cuts = coproduct(tree);
        let mut next = Vec::with_capacity(terms.len() * cuts.len());
        for (left, right) in &terms {
            for cut in &cuts {
                let mut l = left.clone();
                l.push(cut.trunk.clone());
                let r = right.product(&cut.pruned_forest());
                next.push((l, r));
            }
        }
        terms = next;
    }
    terms
}

/// [`forest_coproduct`] without the two overall-trivial stages: terms
/// where nothing at all was cut (right slot empty) or where every tree
/// was cut away entirely (left slot empty) are dropped.  Both slots of
/// every surviving term carry grade at least one.
pub fn reduced_forest_coproduct(f: &Forest) -> Vec<(Forest, Forest)> {
    forest_coproduct(f)
        .into_iter()
        .filter(|(l, r)| !l.is_unit() && !r.is_unit())
        .collect()
}

/// Terms of the `n`-fold iterated *reduced* coproduct, attachments
/// forgotten: each term is an `(n + 1)`-tuple of non-unit forests,
/// produced by repeatedly splitting the last (upper) slot with a
/// non-trivial cut.  `n = 0` returns the forest itself in a single slot;
/// since every split strictly lowers the grade of the upper slot, the
/// result is empty once `n` reaches the grade of `f`.
pub fn iterated_forest_coproduct(f: &Forest, n: usize) -> Vec<Vec<Forest>> {
    if n == 0 {
        return vec![vec![f.clone()]];
    }
    let mut out = Vec::new();
    for (left, right) in reduced_forest_coproduct(f) {
        for tail in iterated_forest_coproduct(&right, n - 1) {
            let mut term = Vec::with_capacity(n + 1);
            term.push(left.clone());
            term.extend(tail);
            out.push(term);
        }
    }
    out
}

/// [`iterated_forest_coproduct`] for a single tree.
pub fn iterated_coproduct(h: &DecoratedTree, n: usize) -> Vec<Vec<Forest>> {
    iterated_forest_coproduct(&Forest::singleton(h.clone()), n)
}

/// Every term of every `Delta^k` for `k = 0..grade`: the full family of
/// iterated admissible cuts of `h`, used when summing norm products over
/// all refinements of a tree.
pub fn complete_iterated_coproduct(h: &DecoratedTree) -> Vec<Vec<Forest>> {
    let mut out = Vec::new();
    for k in 0..=h.grade() {
        let level = iterated_coproduct(h, k);
        if level.is_empty() {
            break;
        }
        out.extend(level);
    }
    out
}

// ---------------------------------------------------------------------------
// Enumeration internals
// ---------------------------------------------------------------------------

/// Kept subtree in original orientation: node indices refer to the
/// original tree's preorder.
#[derive(Clone)]
struct Build {
    node: usize,
    label: Option<Label>,
    children: Vec<Build>,
}

/// Partial result for the subtree at one original node, assuming that
/// node is kept in the trunk.
#[derive(Clone)]
struct CutState {
    kept: Build,
    pruned: Vec<Build>, // phantom roots carry the attachment node index
}

/// Enumerate admissible cuts of the subtree rooted at `v`: per child
/// edge, either cut it (the whole child subtree becomes pruned material
/// grouped at `v`) or keep it and recurse.
fn cut_states(flat: &Flat, v: usize) -> Vec<CutState> {
    let base = CutState {
        kept: Build { node: v, label: flat.label[v], children: Vec::new() },
        pruned: Vec::new(),
    };
    // Track the pruned-at-v group separately so all cut edges below `v`
    // merge into one piece.
    let mut partial: Vec<(CutState, Vec<Build>)> = vec![(base, Vec::new())];
    for &w in &flat.children[v] {
        let sub = cut_states(flat, w);
        let mut next = Vec::with_capacity(partial.len() * (sub.len() + 1));
        for (state, group) in &partial {
            // Cut the edge v -> w: the full original subtree at w joins
            // the group plugged at v.
            let mut cut_group = group.clone();
            cut_group.push(full_subtree(flat, w));
            next.push((state.clone(), cut_group));
            // Keep the edge and splice in each admissible cut of w.
            for s in &sub {
                let mut st = state.clone();
                st.kept.children.push(s.kept.clone());
                st.pruned.extend(s.pruned.iter().cloned());
                next.push((st, group.clone()));
            }
        }
        partial = next;
    }
    partial
        .into_iter()
        .map(|(mut state, group)| {
            if !group.is_empty() {
                state.pruned.push(Build { node: v, label: None, children: group });
            }
            state
        })
        .collect()
}

fn full_subtree(flat: &Flat, v: usize) -> Build {
    Build {
        node: v,
        label: flat.label[v],
        children: flat.children[v].iter().map(|&w| full_subtree(flat, w)).collect(),
    }
}

/// Canonicalize a build tree, returning the canonical tree and the map
/// canonical-preorder-index -> original node index.
fn canonicalize(b: &Build) -> (DecoratedTree, Vec<usize>) {
    let mut kids: Vec<(DecoratedTree, Vec<usize>)> =
        b.children.iter().map(canonicalize).collect();
    kids.sort_by(|a, b| a.0.cmp(&b.0));
    let mut nodes = vec![b.node];
    let trees: Vec<DecoratedTree> = kids.iter().map(|(t, _)| t.clone()).collect();
    for (_, sub) in kids {
        nodes.extend(sub);
    }
    (DecoratedTree::node(b.label, trees), nodes)
}

fn assemble(_flat: &Flat, state: CutState) -> CutTermDetailed {
    let (trunk, trunk_nodes) = canonicalize(&state.kept);
    // Original node index -> canonical trunk preorder index.
    let mut to_canonical: BTreeMap<usize, usize> = BTreeMap::new();
    for (canon, &orig) in trunk_nodes.iter().enumerate() {
        to_canonical.insert(orig, canon);
    }
    let mut pieces: Vec<(PrunedPiece, Vec<usize>)> = state
        .pruned
        .iter()
        .map(|p| {
            let (tree, nodes) = canonicalize(p);
            let attach = to_canonical[&nodes[0]];
            (PrunedPiece { tree, attach }, nodes)
        })
        .collect();
    pieces.sort_by(|a, b| a.0.cmp(&b.0));
    let (pruned, pruned_nodes): (Vec<PrunedPiece>, Vec<Vec<usize>>) =
        pieces.into_iter().unzip();
    CutTermDetailed {
        term: CutTerm { trunk, pruned },
        trunk_nodes,
        pruned_nodes,
    }
}

// ---------------------------------------------------------------------------
// Parsing of cut terms (used by the golden-output tooling)
// ---------------------------------------------------------------------------

/// Parse a cut term from its display form `trunk | piece@attach * ...`.
pub fn parse_cut_term(text: &str) -> Result<CutTerm> {
    let (trunk_text, pruned_text) = text.split_once('|').ok_or_else(|| {
        crate::error::Error::validation(format!("cut term `{text}` is missing ` | `"))
    })?;
    let trunk = DecoratedTree::parse(trunk_text.trim())?;
    let pruned_text = pruned_text.trim();
    let mut pruned = Vec::new();
    if pruned_text != "1" {
        for part in pruned_text.split('*') {
            let part = part.trim();
            let (tree_text, attach_text) = part.rsplit_once('@').ok_or_else(|| {
                crate::error::Error::validation(format!(
                    "pruned piece `{part}` is missing `@attach`"
                ))
            })?;
            let tree = DecoratedTree::parse(tree_text.trim())?;
            let attach = attach_text.trim().parse::<usize>().map_err(|e| {
                crate::error::Error::validation(format!("bad attachment index: {e}"))
            })?;
            pruned.push(PrunedPiece { tree, attach });
        }
    }
    pruned.sort();
    Ok(CutTerm { trunk, pruned })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> DecoratedTree {
        DecoratedTree::parse(s).unwrap()
    }

    #[test]
    fn unit_tree_coproduct() {
        let terms = coproduct(&t("1"));
        assert_eq!(terms.len(), 1);
        assert!(terms[0].trunk.is_unit());
        assert!(terms[0].pruned.is_empty());
        assert!(reduced_coproduct(&t("1")).is_empty());
    }

    #[test]
    fn single_leaf_is_primitive() {
        let terms = coproduct(&t("(4)"));
        let rendered: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
        assert_eq!(rendered, vec!["1 | (4)@0", "(4) | 1"]);
        assert!(reduced_coproduct(&t("(4)")).is_empty());
    }

    #[test]
    fn cherry_groups_cut_edges_at_the_root() {
        // Cutting both edges of the cherry leaves the unit trunk and ONE
        // pruned piece containing both leaves: the kernel factors of the
        // two cut edges share the same attachment time.
        let terms = coproduct(&t("(0)(1)"));
        let rendered: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
        assert_eq!(
            rendered,
            vec![
                "1 | (0)(1)@0",
                "(0) | (1)@0",
                "(0)(1) | 1",
                "(1) | (0)@0",
            ]
        );
    }

    #[test]
    fn ladder_records_interior_attachments() {
        // ((1))0: cutting the upper edge plugs (1) into the node labeled
        // 0, which has preorder index 1 in the trunk.
        let terms = coproduct(&DecoratedTree::ladder(&[0, 1]));
        let rendered: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
        assert_eq!(
            rendered,
            vec!["1 | ((1))0@0", "(0) | (1)@1", "((1))0 | 1"]
        );
    }

    #[test]
    fn example_tree_has_ten_terms() {
        let h = t("((0)(1))2(3)");
        let terms = coproduct(&h);
        assert_eq!(terms.len(), 10);
        assert_eq!(admissible_cut_count(&h), 10);
        // Grade is conserved by every cut.
        for term in &terms {
            assert_eq!(term.trunk.grade() + term.pruned_grade(), h.grade());
        }
    }

    #[test]
    fn cut_count_matches_enumeration() {
        for h in ["1", "(0)", "(0)(1)", "((0))1", "((0)(1))2(3)", "(((0))1)2(0)(1)"] {
            let h = t(h);
            assert_eq!(coproduct(&h).len(), admissible_cut_count(&h), "tree {h}");
        }
    }

    #[test]
    fn branch_tree_coproduct_keeps_the_labeled_root() {
        // The root of a branch tree cannot be cut away, so there is no
        // `1 (x) h` term.
        let h = DecoratedTree::parse_branch("((0))1").unwrap();
        let terms = coproduct(&h);
        let rendered: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
        assert_eq!(rendered, vec!["(1) | (0)@0", "((0))1 | 1"]);
    }

    #[test]
    fn detailed_maps_track_original_nodes() {
        // Original preorder of ((0)(1))2(3): root=0, node2=1, leaf0=2,
        // leaf1=3, leaf3=4.
        let h = t("((0)(1))2(3)");
        for d in coproduct_detailed(&h) {
            // Trunk map starts at the original root.
            assert_eq!(d.trunk_nodes[0], 0);
            // Every original node appears exactly once across trunk and
            // pruned pieces (phantom roots excluded).
            let mut seen: Vec<usize> = d.trunk_nodes.clone();
            for nodes in &d.pruned_nodes {
                seen.extend(&nodes[1..]);
            }
            seen.sort_unstable();
            assert_eq!(seen, vec![0, 1, 2, 3, 4], "term {}", d.term);
            // Phantom roots sit on trunk nodes.
            for nodes in &d.pruned_nodes {
                assert!(d.trunk_nodes.contains(&nodes[0]));
            }
        }
    }

    #[test]
    fn grouped_multiplicities_sum_to_cut_count() {
        let h = t("((0)(0))1(0)");
        let grouped = coproduct_grouped(&h);
        let total: usize = grouped.values().sum();
        assert_eq!(total, admissible_cut_count(&h));
        // Identical pruned material from symmetric branches piles up.
        assert!(grouped.values().any(|&m| m > 1));
    }

    #[test]
    fn counting_function_on_symmetric_tree() {
        // (0)(0): cutting either edge gives trunk (0) with pruned (0).
        let sigma = t("(0)(0)");
        let trunk = t("(0)");
        let pruned = Forest::singleton(t("(0)"));
        assert_eq!(counting_function(&sigma, &trunk, &pruned), 2);
    }

    #[test]
    fn forest_coproduct_is_multiplicative() {
        let f = Forest::from_trees([t("(0)"), t("(1)")]);
        let terms = forest_coproduct(&f);
        // 2 terms per primitive factor.
        assert_eq!(terms.len(), 4);
    }

    #[test]
    fn iterated_coproduct_counts() {
        // A primitive tree admits no non-trivial cut.
        let h = t("(0)");
        assert_eq!(iterated_coproduct(&h, 0).len(), 1);
        assert!(iterated_coproduct(&h, 1).is_empty());
        // The 2-chain has exactly one non-trivial cut and cannot be cut
        // twice.
        let ladder = DecoratedTree::ladder(&[0, 1]);
        let once = iterated_coproduct(&ladder, 1);
        assert_eq!(once.len(), 1);
        assert_eq!(once[0][0], Forest::singleton(t("(0)")));
        assert_eq!(once[0][1], Forest::singleton(t("(1)")));
        assert!(iterated_coproduct(&ladder, 2).is_empty());
        // Slots are non-unit and concatenate back to the original grade.
        for term in complete_iterated_coproduct(&t("((0)(1))2(3)")) {
            assert_eq!(term.iter().map(Forest::grade).sum::<usize>(), 4);
            assert!(term.iter().all(|f| !f.is_unit()));
        }
    }

    #[test]
    fn admissible_cut_edge_sets() {
        // The single edge of a leaf tree: {} and {1}.
        assert_eq!(admissible_cuts(&t("(0)")), vec![vec![], vec![1]]);
        // The 2-chain (nodes: root 0, lower 1, upper 2): a cut may take
        // either edge but not both.
        let cuts = admissible_cuts(&DecoratedTree::ladder(&[0, 1]));
        assert_eq!(cuts, vec![vec![], vec![1], vec![2]]);
        // Counts agree with the coproduct everywhere.
        for h in ["1", "(0)(1)", "((0)(1))2(3)"] {
            assert_eq!(admissible_cuts(&t(h)).len(), coproduct(&t(h)).len());
        }
    }

    #[test]
    fn cut_term_round_trip() {
        for h in ["(0)(1)", "((0)(1))2(3)"] {
            for term in coproduct(&t(h)) {
                let parsed = parse_cut_term(&term.to_string()).unwrap();
                assert_eq!(parsed, term);
            }
        }
    }
}
