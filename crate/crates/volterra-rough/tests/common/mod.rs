// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared test oracles.
//!
//! Everything here is implemented independently of the library's own
//! algorithms — by brute force where feasible — so that agreement is
//! evidence rather than tautology.  Each oracle states what it checks
//! and how it avoids the code path under test.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use volterra_rough::coproduct::{coproduct_detailed, CutTermDetailed};
use volterra_rough::tree::{DecoratedTree, Forest, Label};

// ---------------------------------------------------------------------------
// Tree enumeration by explicit parent maps
// ---------------------------------------------------------------------------

/// All rooted-form trees of each grade `0..=max_grade`, built by brute
/// force: every parent map on `{0..g}` with `parent(i) < i`, crossed with
/// every labeling, canonicalized into a set.  Independent of the
/// library's grade recursion.
pub fn brute_force_trees(max_grade: usize, max_label: Label) -> Vec<BTreeSet<DecoratedTree>> {
    let mut out = Vec::with_capacity(max_grade + 1);
    for g in 0..=max_grade {
        let mut set = BTreeSet::new();
        let mut parents = vec![0usize; g + 1]; // parents[0] unused (root)
        enumerate_parent_maps(g, 1, &mut parents, &mut |parents| {
            let mut labels = vec![0usize; g + 1];
            enumerate_labelings(g, max_label, 1, &mut labels, &mut |labels| {
                set.insert(build_from_parent_map(parents, labels));
            });
        });
        out.push(set);
    }
    out
}

fn enumerate_parent_maps(
    g: usize,
    next: usize,
    parents: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if next > g {
        f(parents);
        return;
    }
    for p in 0..next {
        parents[next] = p;
        enumerate_parent_maps(g, next + 1, parents, f);
    }
}

fn enumerate_labelings(
    g: usize,
    max_label: Label,
    next: usize,
    labels: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if next > g {
        f(labels);
        return;
    }
    for l in 0..=max_label {
        labels[next] = l;
        enumerate_labelings(g, max_label, next + 1, labels, f);
    }
}

fn build_from_parent_map(parents: &[usize], labels: &[usize]) -> DecoratedTree {
    fn build(v: usize, parents: &[usize], labels: &[usize]) -> DecoratedTree {
        let children: Vec<DecoratedTree> = (v + 1..parents.len())
            .filter(|&w| parents[w] == v)
            .map(|w| build(w, parents, labels))
            .collect();
        let label = if v == 0 { None } else { Some(labels[v]) };
        DecoratedTree::node(label, children)
    }
    build(0, parents, labels)
}

// ---------------------------------------------------------------------------
// Automorphism counting by permutation search
// ---------------------------------------------------------------------------

/// Order of the decoration-preserving automorphism group, counted by
/// checking every permutation of the non-root nodes.  Exponential, for
/// small trees only; independent of the multiplicity-product formula.
pub fn automorphism_count(t: &DecoratedTree) -> u128 {
    let labels = t.labels_preorder();
    let parents = t.parents_preorder();
    let n = labels.len();
    if n <= 1 {
        return 1;
    }
    let mut count = 0u128;
    let mut perm: Vec<usize> = (1..n).collect();
    for_each_permutation(&mut perm, 0, &mut |perm| {
        let map = |v: usize| if v == 0 { 0 } else { perm[v - 1] };
        let preserves = (1..n).all(|v| {
            labels[map(v)] == labels[v] && parents[map(v)] == parents[v].map(map)
        });
        if preserves {
            count += 1;
        }
    });
    count
}

fn for_each_permutation(items: &mut [usize], k: usize, f: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        for_each_permutation(items, k + 1, f);
        items.swap(k, i);
    }
}

// ---------------------------------------------------------------------------
// Coproduct by the recursive formula
// ---------------------------------------------------------------------------

/// The coproduct computed from the recursive formula instead of by cut
/// enumeration: splitting off a sub-multiset `I` of the root branches,
/// the term for `I` plugs the branch-level coproduct of the complement
/// under the root, i.e.
/// `Delta B(f) = sum_I sum_{(a,b)} B(a) (x) B(f_I) . b` where `(a, b)`
/// ranges over the branch-forest coproduct of `f` restricted to the kept
/// branches.  Attachments are not tracked; the result is a multiset of
/// `(trunk, pruned forest)` pairs.
pub fn recursive_coproduct(h: &DecoratedTree) -> BTreeMap<(DecoratedTree, Forest), usize> {
    let mut out = BTreeMap::new();
    for (trunk, pruned) in rec_node(h.label(), h.children()) {
        *out.entry((trunk, pruned)).or_insert(0) += 1;
    }
    out
}

fn rec_node(label: Option<Label>, kids: &[DecoratedTree]) -> Vec<(DecoratedTree, Forest)> {
    let n = kids.len();
    let mut out = Vec::new();
    for mask in 0..(1usize << n) {
        let mut cut = Vec::new();
        let mut kept = Vec::new();
        for (i, k) in kids.iter().enumerate() {
            if mask >> i & 1 == 1 {
                cut.push(k.clone());
            } else {
                kept.push(k.clone());
            }
        }
        for (a, b) in rec_forest(&kept) {
            let trunk = DecoratedTree::node(label, a.trees().to_vec());
            let mut pruned = b;
            if !cut.is_empty() {
                pruned = pruned.product(&Forest::singleton(DecoratedTree::node(
                    None,
                    cut.clone(),
                )));
            }
            out.push((trunk, pruned));
        }
    }
    out
}

/// Branch-forest coproduct: multiplicative over branch trees, each tree
/// handled by [`rec_node`] with its labeled root.
fn rec_forest(trees: &[DecoratedTree]) -> Vec<(Forest, Forest)> {
    let mut terms: Vec<(Forest, Forest)> = vec![(Forest::unit(), Forest::unit())];
    for t in trees {
        let sub = rec_node(t.label(), t.children());
        let mut next = Vec::with_capacity(terms.len() * sub.len());
        for (fa, fb) in &terms {
            for (a, b) in &sub {
                let mut left = fa.clone();
                left.push(a.clone());
                next.push((left, fb.product(b)));
            }
        }
        terms = next;
    }
    terms
}

// ---------------------------------------------------------------------------
// Classical pruning coproduct (cut edges deleted, pieces keep their roots)
// ---------------------------------------------------------------------------

/// The classical pruning coproduct on branch forests, `trunk (x) pruned`,
/// via the textbook recursion
/// `D(B_k(f)) = 1 (x) B_k(f) + (B_k (x) id) D(f)`,
/// multiplicative over forests.  This never inspects cuts, so it is an
/// independent reference for the root-removal intertwining identity.
pub fn classical_pruning_coproduct(f: &Forest) -> BTreeMap<(Forest, Forest), usize> {
    let mut out = BTreeMap::new();
    for (a, b) in classical_forest(f.trees()) {
        *out.entry((a, b)).or_insert(0) += 1;
    }
    out
}

fn classical_tree(t: &DecoratedTree) -> Vec<(Forest, Forest)> {
    let label = t.label().expect("classical coproduct acts on branch trees");
    let mut out = vec![(Forest::unit(), Forest::singleton(t.clone()))];
    for (a, b) in classical_forest(t.children()) {
        let trunk = DecoratedTree::node(Some(label), a.trees().to_vec());
        out.push((Forest::singleton(trunk), b));
    }
    out
}

fn classical_forest(trees: &[DecoratedTree]) -> Vec<(Forest, Forest)> {
    let mut terms: Vec<(Forest, Forest)> = vec![(Forest::unit(), Forest::unit())];
    for t in trees {
        let sub = classical_tree(t);
        let mut next = Vec::with_capacity(terms.len() * sub.len());
        for (fa, fb) in &terms {
            for (a, b) in &sub {
                next.push((fa.product(a), fb.product(b)));
            }
        }
        terms = next;
    }
    terms
}

// ---------------------------------------------------------------------------
// Layer assignments: coassociativity with node identification
// ---------------------------------------------------------------------------

/// Brute-force expectation: all assignments of layers `1..=layers` to the
/// labeled nodes (preorder indexing; the root keeps `0`) that are
/// non-decreasing from parent to child, each with multiplicity one.
/// Every way of slicing a tree by `layers - 1` nested admissible cuts
/// corresponds to exactly one such assignment.
pub fn expected_layerings(h: &DecoratedTree, layers: u8) -> BTreeMap<Vec<u8>, usize> {
    let labels = h.labels_preorder();
    let parents = h.parents_preorder();
    let mut out = BTreeMap::new();
    let mut assign = vec![0u8; labels.len()];
    fn rec(
        v: usize,
        layers: u8,
        labels: &[Option<Label>],
        parents: &[Option<usize>],
        assign: &mut Vec<u8>,
        out: &mut BTreeMap<Vec<u8>, usize>,
    ) {
        if v == labels.len() {
            *out.entry(assign.clone()).or_insert(0) += 1;
            return;
        }
        if labels[v].is_none() {
            assign[v] = 0;
            rec(v + 1, layers, labels, parents, assign, out);
            return;
        }
        // Preorder lists parents before children, so the parent's layer
        // is already fixed.
        let lo = match parents[v] {
            Some(p) if labels[p].is_some() => assign[p],
            _ => 1,
        };
        for layer in lo..=layers {
            assign[v] = layer;
            rec(v + 1, layers, labels, parents, assign, out);
        }
    }
    rec(0, layers, &labels, &parents, &mut assign, &mut out);
    out
}

/// Production-side `(Delta (x) id) Delta`: cut, then cut the trunk again.
/// Each term becomes the vector assigning every original node its layer
/// (1 = lower trunk, 2 = upper trunk, 3 = first-stage pruned; root 0).
pub fn layerings_cutting_trunk_again(h: &DecoratedTree) -> BTreeMap<Vec<u8>, usize> {
    let n = h.node_count();
    let mut out = BTreeMap::new();
    for d1 in coproduct_detailed(h) {
        for d2 in coproduct_detailed(&d1.term.trunk) {
            let mut assign = vec![0u8; n];
            for nodes in &d1.pruned_nodes {
                for &orig in &nodes[1..] {
                    assign[orig] = 3;
                }
            }
            for &c1 in &d2.trunk_nodes {
                assign[d1.trunk_nodes[c1]] = 1;
            }
            for nodes in &d2.pruned_nodes {
                for &c1 in &nodes[1..] {
                    assign[d1.trunk_nodes[c1]] = 2;
                }
            }
            assign[0] = 0; // the root is not a labeled node
            *out.entry(assign).or_insert(0) += 1;
        }
    }
    out
}

/// Production-side `(id (x) Delta) Delta`: cut, then cut every pruned
/// piece again (multiplicatively).  Layers as in
/// [`layerings_cutting_trunk_again`]: 1 = first-stage trunk, 2 = piece
/// trunks, 3 = piece pruned parts.
pub fn layerings_cutting_pruned_again(h: &DecoratedTree) -> BTreeMap<Vec<u8>, usize> {
    let n = h.node_count();
    let mut out = BTreeMap::new();
    for d1 in coproduct_detailed(h) {
        let piece_cuts: Vec<Vec<CutTermDetailed>> = d1
            .term
            .pruned
            .iter()
            .map(|p| coproduct_detailed(&p.tree))
            .collect();
        for_each_combination(&piece_cuts, &mut |combo| {
            let mut assign = vec![0u8; n];
            for &orig in &d1.trunk_nodes {
                assign[orig] = 1;
            }
            for (i, d2) in combo.iter().enumerate() {
                let to_orig = &d1.pruned_nodes[i];
                // Piece-preorder 0 is the phantom root standing for the
                // attachment node, which already lives in the trunk.
                for &ppre in &d2.trunk_nodes {
                    if ppre != 0 {
                        assign[to_orig[ppre]] = 2;
                    }
                }
                for nodes in &d2.pruned_nodes {
                    for &ppre in &nodes[1..] {
                        assign[to_orig[ppre]] = 3;
                    }
                }
            }
            assign[0] = 0;
            *out.entry(assign).or_insert(0) += 1;
        });
    }
    out
}

fn for_each_combination<'a, T>(options: &'a [Vec<T>], f: &mut impl FnMut(&[&'a T])) {
    fn rec<'a, T>(
        options: &'a [Vec<T>],
        chosen: &mut Vec<&'a T>,
        f: &mut impl FnMut(&[&'a T]),
    ) {
        if chosen.len() == options.len() {
            f(chosen);
            return;
        }
        for item in &options[chosen.len()] {
            chosen.push(item);
            rec(options, chosen, f);
            chosen.pop();
        }
    }
    rec(options, &mut Vec::new(), f);
}

/// Number of monotone layer assignments that use *every* layer
/// `1..=layers` at least once: the expected term count of the
/// `(layers - 1)`-fold iterated reduced coproduct.  Zero nested cuts is
/// the identity, which contributes its single term unconditionally (even
/// for the unit tree, which has no labeled node to occupy a layer).
pub fn surjective_layering_count(h: &DecoratedTree, layers: u8) -> usize {
    if layers == 1 {
        return 1;
    }
    expected_layerings(h, layers)
        .keys()
        .filter(|assign| (1..=layers).all(|l| assign.contains(&l)))
        .count()
}
