//! Contiguous leaf partitions, their barrier-vector dual form, and the
//! false-split / true-positive machinery.
//!
//! A splitting of `p` ordered leaves into contiguous groups is equivalent to
//! a vector of `p - 1` barrier bits (bit j set iff leaves j and j+1 are in
//! different groups). Error proportions are computed in exact integer
//! rationals so the structural identities between the group form and the
//! barrier form can be asserted without float tolerance.
//!
//! Conventions (degenerate denominators):
//!
//! - barrier-FDP with no discoveries is 0;
//! - barrier-TPP with no true barriers (single true group) is 1;
//! - the group forms inherit both via the duality.

use std::collections::HashSet;
use std::fmt;

use crate::error::{HatError, Result};
use crate::tree::{NodeId, Tree};

/// A splitting of `p` ordered leaves into contiguous groups, stored as group
/// sizes. All sizes are >= 1 and sum to `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    sizes: Vec<usize>,
}

impl Partition {
    pub fn from_sizes(sizes: Vec<usize>) -> Result<Partition> {
        if sizes.is_empty() {
            return Err(HatError::InvalidInput("partition needs >= 1 group".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(HatError::InvalidInput("empty group in partition".into()));
        }
        Ok(Partition { sizes })
    }

    /// The single-group partition of `p` leaves.
    pub fn single(p: usize) -> Partition {
        Partition { sizes: vec![p] }
    }

    /// The all-singletons partition of `p` leaves.
    pub fn singletons(p: usize) -> Partition {
        Partition { sizes: vec![1; p] }
    }

    /// Number of leaves covered.
    pub fn p(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Number of groups.
    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `(start, len)` ranges of the groups, in order.
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.sizes.len());
        let mut start = 0;
        for &s in &self.sizes {
            out.push((start, s));
            start += s;
        }
        out
    }

    /// Group index of each leaf position.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.p());
        for (g, &s) in self.sizes.iter().enumerate() {
            out.extend(std::iter::repeat(g).take(s));
        }
        out
    }
}

/// Length `p - 1` vector of group barriers; bit j set iff a group boundary
/// sits between leaves j and j+1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarrierVector {
    bits: Vec<bool>,
}

impl BarrierVector {
    pub fn new(bits: Vec<bool>) -> BarrierVector {
        BarrierVector { bits }
    }

    pub fn from_str01(s: &str) -> Result<BarrierVector> {
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => {
                    return Err(HatError::InvalidInput(format!(
                        "barrier string must be 0/1, found {ch:?}"
                    )))
                }
            }
        }
        Ok(BarrierVector { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

impl fmt::Display for BarrierVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// An exact nonnegative rational with the degenerate-denominator convention
/// already applied (so `den >= 1` always). Compared by cross-multiplication.
#[derive(Debug, Clone, Copy)]
pub struct Frac {
    pub num: u64,
    pub den: u64,
}

impl Frac {
    pub fn new(num: u64, den: u64) -> Frac {
        debug_assert!(den >= 1);
        Frac { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Frac {
    fn eq(&self, other: &Frac) -> bool {
        (self.num as u128) * (other.den as u128) == (other.num as u128) * (self.den as u128)
    }
}

impl Eq for Frac {}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// False-split and total-split counts of a rejection subtree, with the exact
/// proportions they induce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCounts {
    /// Number of false splits.
    pub v: u64,
    /// Total number of splits.
    pub r: u64,
    /// `v / max(r, 1)`.
    pub fsp: Frac,
    /// True-positive proportion of the induced aggregation.
    pub tpp: Frac,
}

/// Barrier bits of a partition: bit j set iff leaves j and j+1 lie in
/// different groups. Inverse of [`barriers_to_partition`].
pub fn partition_to_barriers(c: &Partition) -> BarrierVector {
    let p = c.p();
    let mut bits = vec![false; p.saturating_sub(1)];
    let mut pos = 0;
    for &s in &c.sizes()[..c.n_groups() - 1] {
        pos += s;
        bits[pos - 1] = true;
    }
    BarrierVector { bits }
}

/// Partition determined by a barrier vector over `len + 1` leaves.
pub fn barriers_to_partition(b: &BarrierVector) -> Partition {
    let mut sizes = Vec::new();
    let mut run = 1;
    for &bit in &b.bits {
        if bit {
            sizes.push(run);
            run = 1;
        } else {
            run += 1;
        }
    }
    sizes.push(run);
    Partition { sizes }
}

/// Barrier-discovery error proportions `(FDP^b, TPP^b)`.
///
/// `FDP^b` counts achieved barriers placed where no true barrier exists,
/// over all achieved barriers (0 when there are none). `TPP^b` counts true
/// barriers recovered, over all true barriers (1 when there are none).
pub fn fdp_tpp_barrier(truth: &BarrierVector, achieved: &BarrierVector) -> Result<(Frac, Frac)> {
    if truth.len() != achieved.len() {
        return Err(HatError::InvalidInput(format!(
            "barrier length mismatch: {} vs {}",
            truth.len(),
            achieved.len()
        )));
    }
    let mut false_disc = 0u64;
    let mut true_disc = 0u64;
    let mut n_disc = 0u64;
    let mut n_true = 0u64;
    for (&t, &a) in truth.bits.iter().zip(&achieved.bits) {
        n_true += t as u64;
        n_disc += a as u64;
        if a && !t {
            false_disc += 1;
        }
        if a && t {
            true_disc += 1;
        }
    }
    let fdp = if n_disc == 0 {
        Frac::new(0, 1)
    } else {
        Frac::new(false_disc, n_disc)
    };
    let tpp = if n_true == 0 {
        Frac::new(1, 1)
    } else {
        Frac::new(true_disc, n_true)
    };
    Ok((fdp, tpp))
}

/// Group-form error proportions `(FSP, TPP)` between a true splitting with K
/// groups and an achieved splitting with M groups over the same leaves.
///
/// With N the number of (true group, achieved group) pairs that intersect:
/// `FSP = (N - K) / max(M - 1, 1)` and `TPP = 1 - (N - M)/(K - 1)`, the
/// latter defined as 1 when K = 1 (nothing to recover).
pub fn fsp_tpp_groups(truth: &Partition, achieved: &Partition) -> Result<(Frac, Frac)> {
    let p = truth.p();
    if p != achieved.p() {
        return Err(HatError::InvalidInput(format!(
            "partitions cover different leaf counts: {} vs {}",
            p,
            achieved.p()
        )));
    }
    let k = truth.n_groups() as u64;
    let m = achieved.n_groups() as u64;
    // Both partitions are contiguous, so each intersecting pair is one
    // maximal run of leaf positions with a fixed (true, achieved) group pair.
    let tg = truth.group_of();
    let ag = achieved.group_of();
    let mut n_pairs = 1u64;
    for i in 1..p {
        if tg[i] != tg[i - 1] || ag[i] != ag[i - 1] {
            n_pairs += 1;
        }
    }
    let fsp = Frac::new(n_pairs - k, (m - 1).max(1));
    let tpp = if k == 1 {
        Frac::new(1, 1)
    } else {
        Frac::new((k - 1) - (n_pairs - m), k - 1)
    };
    Ok((fsp, tpp))
}

/// A validated set of rejected nodes: internal nodes forming a rooted
/// subtree (the parent of every rejected node is rejected; nonempty sets
/// contain the root), or the empty set.
#[derive(Debug, Clone)]
pub struct RejectedSet {
    mask: Vec<bool>,
    nodes: Vec<NodeId>,
}

impl RejectedSet {
    pub fn new(tree: &Tree, nodes: impl IntoIterator<Item = NodeId>) -> Result<RejectedSet> {
        let mut mask = vec![false; tree.n_nodes()];
        let mut list: Vec<NodeId> = Vec::new();
        for u in nodes {
            tree.try_node(u)?;
            if tree.is_leaf(u) {
                return Err(HatError::InvalidInput(format!(
                    "leaf {:?} cannot be rejected",
                    tree.label(u)
                )));
            }
            if !mask[u] {
                mask[u] = true;
                list.push(u);
            }
        }
        for &u in &list {
            match tree.parent(u) {
                None => {}
                Some(parent) if mask[parent] => {}
                Some(_) => {
                    return Err(HatError::InvalidInput(format!(
                        "rejected node {:?} has an unrejected parent",
                        tree.label(u)
                    )))
                }
            }
        }
        if !list.is_empty() && !mask[tree.root()] {
            return Err(HatError::InvalidInput(
                "nonempty rejection set must contain the root".into(),
            ));
        }
        list.sort_unstable();
        Ok(RejectedSet { mask, nodes: list })
    }

    pub fn empty(tree: &Tree) -> RejectedSet {
        RejectedSet {
            mask: vec![false; tree.n_nodes()],
            nodes: Vec::new(),
        }
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.mask.get(u).copied().unwrap_or(false)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Rejected node ids in ascending (preorder) order.
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Out-degree of `u` within the rejection subtree.
    pub fn degree_within(&self, tree: &Tree, u: NodeId) -> usize {
        tree.children(u)
            .iter()
            .filter(|&&c| self.contains(c))
            .count()
    }
}

/// The aggregation induced by a rejection subtree: groups are the leaf sets
/// of the frontier (unrejected children of rejected nodes). An empty
/// rejection keeps all leaves in a single group.
pub fn rejection_to_partition(tree: &Tree, rejected: &RejectedSet) -> Partition {
    if rejected.is_empty() {
        return Partition::single(tree.p());
    }
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    for &u in rejected.nodes() {
        for &c in tree.children(u) {
            if !rejected.contains(c) {
                ranges.push(tree.leaf_range(c));
            }
        }
    }
    ranges.sort_unstable_by_key(|&(start, _)| start);
    let sizes = ranges.into_iter().map(|(_, len)| len).collect();
    Partition { sizes }
}

/// The partition formed by the leaf sets of `bstar`. Errors unless those
/// leaf sets are disjoint and cover every leaf.
pub fn bstar_partition(tree: &Tree, bstar: &[NodeId]) -> Result<Partition> {
    let mut ranges = Vec::with_capacity(bstar.len());
    let mut seen = HashSet::new();
    for &u in bstar {
        tree.try_node(u)?;
        if !seen.insert(u) {
            return Err(HatError::InvalidInput(format!(
                "duplicate node {:?} in true aggregation set",
                tree.label(u)
            )));
        }
        ranges.push(tree.leaf_range(u));
    }
    ranges.sort_unstable_by_key(|&(start, _)| start);
    let mut cursor = 0;
    for &(start, len) in &ranges {
        if start != cursor {
            return Err(HatError::InvalidInput(
                "true aggregation leaf sets do not partition the leaves".into(),
            ));
        }
        cursor = start + len;
    }
    if cursor != tree.p() {
        return Err(HatError::InvalidInput(
            "true aggregation leaf sets do not cover all leaves".into(),
        ));
    }
    Partition::from_sizes(ranges.into_iter().map(|(_, len)| len).collect())
}

/// False-split count V, total-split count R, and the proportions they
/// induce, computed from tree degrees.
///
/// `V = sum over false rejections u of (deg_T(u) - deg_rej(u)) - |B* ∩ F|`
/// and `R = max(sum over rejected u of (deg_T(u) - deg_rej(u)) - 1, 0)`.
/// A rejected node is a false rejection iff all leaves below it belong to a
/// single `bstar` group. TPP is evaluated on the induced partitions.
pub fn split_counts_from_rejection(
    tree: &Tree,
    rejected: &RejectedSet,
    bstar: &[NodeId],
) -> Result<SplitCounts> {
    let truth = bstar_partition(tree, bstar)?;
    let group_of = truth.group_of();
    let bstar_set: HashSet<NodeId> = bstar.iter().copied().collect();

    let mut v: i64 = 0;
    let mut r_sum: i64 = 0;
    for &u in rejected.nodes() {
        let extra = (tree.degree(u) - rejected.degree_within(tree, u)) as i64;
        r_sum += extra;
        let (start, len) = tree.leaf_range(u);
        // bstar groups are contiguous, so group labels are monotone along
        // the leaf order; constancy reduces to an endpoint check.
        let false_rejection = group_of[start] == group_of[start + len - 1];
        if false_rejection {
            v += extra;
            if bstar_set.contains(&u) {
                v -= 1;
            }
        }
    }
    let r = (r_sum - 1).max(0) as u64;
    if v < 0 {
        return Err(HatError::Internal(format!("negative false-split count {v}")));
    }
    let v = v as u64;
    debug_assert!(v <= r.max(1), "false splits {v} exceed total splits {r}");
    let achieved = rejection_to_partition(tree, rejected);
    let (_, tpp) = fsp_tpp_groups(&truth, &achieved)?;
    Ok(SplitCounts {
        v,
        r,
        fsp: Frac::new(v, r.max(1)),
        tpp,
    })
}
