//! Shared fixtures and statistical helpers for the test suites.
//!
//! Lives in the library (rather than each crate's `tests/`) so the CLI
//! crate's acceptance suite can reuse the same random-structure generators.

use rand::Rng;

use crate::tree::{NestedNode, NodeId, Tree};

/// 11-leaf tree with mixed degrees and leaf depths, used as the standard
/// worked example across the test suites:
///
/// ```text
/// root ── b1 ── c1 ── d1 d2
///      │     ├─ c2 ── d3 d4
///      │     └─ c3 ── d5 d6
///      └─ b2 ── c4 ── d7 d8 d9
///            └─ c5 ── d10 d11
/// ```
pub fn mixed_depth_tree() -> Tree {
    Tree::parse_newick(
        "(((d1,d2)c1,(d3,d4)c2,(d5,d6)c3)b1,((d7,d8,d9)c4,(d10,d11)c5)b2)root;",
    )
    .expect("fixture newick")
}

/// Random rooted tree with `p` leaves, internal degrees in `2..=max_degree`.
pub fn random_tree<R: Rng>(rng: &mut R, p: usize, max_degree: usize) -> Tree {
    assert!(p >= 2);
    let mut counter = 0usize;
    let nested = random_nested(rng, p, max_degree, &mut counter);
    Tree::from_nested(&nested).expect("randomly generated tree is valid")
}

fn random_nested<R: Rng>(
    rng: &mut R,
    leaves: usize,
    max_degree: usize,
    counter: &mut usize,
) -> NestedNode {
    if leaves == 1 {
        *counter += 1;
        return NestedNode::leaf(format!("t{counter}"));
    }
    let deg = rng.gen_range(2..=max_degree.min(leaves));
    // Split `leaves` into `deg` positive parts.
    let mut parts = vec![1usize; deg];
    for _ in 0..leaves - deg {
        let i = rng.gen_range(0..deg);
        parts[i] += 1;
    }
    let children = parts
        .into_iter()
        .map(|part| random_nested(rng, part, max_degree, counter))
        .collect();
    NestedNode::internal(None, children)
}

/// Random rooted rejection subtree: starting from the root, each internal
/// node is kept with probability `keep`, and children of unkept nodes are
/// never visited. May return the empty set.
pub fn random_rejection<R: Rng>(rng: &mut R, tree: &Tree, keep: f64) -> Vec<NodeId> {
    let mut out = Vec::new();
    if !rng.gen_bool(keep) {
        return out;
    }
    let mut stack = vec![tree.root()];
    while let Some(u) = stack.pop() {
        out.push(u);
        for &c in tree.children(u) {
            if tree.is_internal(c) && rng.gen_bool(keep) {
                stack.push(c);
            }
        }
    }
    out
}

/// Random set of nodes whose leaf sets partition the leaves: walk top-down,
/// stopping at each node with probability `stop` (always at leaves).
pub fn random_bstar<R: Rng>(rng: &mut R, tree: &Tree, stop: f64) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(u) = stack.pop() {
        if tree.is_leaf(u) || rng.gen_bool(stop) {
            out.push(u);
        } else {
            for &c in tree.children(u) {
                stack.push(c);
            }
        }
    }
    out
}

/// Two-sided Kolmogorov-Smirnov statistic against the Uniform(0,1) CDF.
pub fn ks_statistic_uniform(samples: &mut Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let hi = (i + 1) as f64 / n - x;
        let lo = x - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic two-sided KS critical value at significance `alpha`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
