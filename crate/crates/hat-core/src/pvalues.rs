//! Node-level p-value construction for the aggregation-of-means setting:
//! one-way ANOVA statistics with known noise level, and Simes combination
//! over subtrees.

use std::collections::HashMap;

use crate::error::{HatError, Result};
use crate::special::f_cdf;
// The distribution functions the constructors rest on, re-exported here
// as part of this module's surface.
pub use crate::special::{chi2_cdf, normal_cdf};
use crate::tree::{NodeId, Tree};

/// One noisy observation per leaf, aligned to the tree's leaf order, with a
/// known noise standard deviation.
#[derive(Debug, Clone)]
pub struct LeafObservations {
    pub y: Vec<f64>,
    pub sigma: f64,
}

impl LeafObservations {
    pub fn new(y: Vec<f64>, sigma: f64) -> Result<LeafObservations> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(HatError::InvalidInput("non-finite observation".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(HatError::InvalidInput(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(LeafObservations { y, sigma })
    }
}

/// How a p-value assignment was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Anova,
    Simes,
    Debiased,
    External,
}

/// A p-value in `[0, 1]` for every internal node of a tree.
#[derive(Debug, Clone)]
pub struct PValueAssignment {
    values: Vec<Option<f64>>,
    provenance: Provenance,
}

impl PValueAssignment {
    /// Build from a per-node closure evaluated on every internal node.
    pub fn from_fn(
        tree: &Tree,
        provenance: Provenance,
        mut f: impl FnMut(NodeId) -> Result<f64>,
    ) -> Result<PValueAssignment> {
        let mut values = vec![None; tree.n_nodes()];
        for u in tree.internal_nodes() {
            let p = f(u)?;
            validate_pvalue(tree, u, p)?;
            values[u] = Some(p);
        }
        Ok(PValueAssignment { values, provenance })
    }

    /// Build from an explicit map. Every internal node must be covered;
    /// leaves must not appear.
    pub fn from_map(
        tree: &Tree,
        provenance: Provenance,
        map: &HashMap<NodeId, f64>,
    ) -> Result<PValueAssignment> {
        for &u in map.keys() {
            tree.try_node(u)?;
            if tree.is_leaf(u) {
                return Err(HatError::InvalidInput(format!(
                    "p-value supplied for leaf {:?}",
                    tree.label(u)
                )));
            }
        }
        PValueAssignment::from_fn(tree, provenance, |u| {
            map.get(&u).copied().ok_or_else(|| {
                HatError::InvalidInput(format!("missing p-value for node {:?}", tree.label(u)))
            })
        })
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn get(&self, u: NodeId) -> Result<f64> {
        self.values
            .get(u)
            .copied()
            .flatten()
            .ok_or_else(|| HatError::InvalidInput(format!("no p-value for node id {u}")))
    }
}

fn validate_pvalue(tree: &Tree, u: NodeId, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(HatError::InvalidInput(format!(
            "p-value {p} for node {:?} outside [0, 1]",
            tree.label(u)
        )));
    }
    Ok(())
}

/// Per-node subtree means of the observations, computed once via prefix sums.
fn leaf_prefix_sums(obs: &LeafObservations) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(obs.y.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in &obs.y {
        acc += v;
        prefix.push(acc);
    }
    prefix
}

fn range_mean(prefix: &[f64], start: usize, len: usize) -> f64 {
    (prefix[start + len] - prefix[start]) / len as f64
}

/// One-way ANOVA p-value with known sigma at internal node `u`:
/// the between-children statistic
/// `sigma^-2 * sum_child |L_v| (ybar_v - ybar_u)^2`
/// referred to a chi-square with `deg(u) - 1` degrees of freedom.
pub fn anova_pvalue(tree: &Tree, obs: &LeafObservations, u: NodeId) -> Result<f64> {
    check_obs(tree, obs)?;
    anova_pvalue_prepared(tree, obs, &leaf_prefix_sums(obs), u)
}

fn anova_pvalue_prepared(
    tree: &Tree,
    obs: &LeafObservations,
    prefix: &[f64],
    u: NodeId,
) -> Result<f64> {
    if tree.is_leaf(u) {
        return Err(HatError::InvalidInput(format!(
            "ANOVA p-value requested at leaf {:?}",
            tree.label(u)
        )));
    }
    let (start, len) = tree.leaf_range(u);
    let mean_u = range_mean(prefix, start, len);
    let mut stat = 0.0;
    for &c in tree.children(u) {
        let (cs, cl) = tree.leaf_range(c);
        let mean_c = range_mean(prefix, cs, cl);
        stat += cl as f64 * (mean_c - mean_u).powi(2);
    }
    stat /= obs.sigma * obs.sigma;
    let df = (tree.degree(u) - 1) as u64;
    Ok((1.0 - chi2_cdf(stat, df)?).clamp(0.0, 1.0))
}

/// ANOVA p-values for every internal node.
pub fn anova_assignment(tree: &Tree, obs: &LeafObservations) -> Result<PValueAssignment> {
    check_obs(tree, obs)?;
    let prefix = leaf_prefix_sums(obs);
    PValueAssignment::from_fn(tree, Provenance::Anova, |u| {
        anova_pvalue_prepared(tree, obs, &prefix, u)
    })
}

fn check_obs(tree: &Tree, obs: &LeafObservations) -> Result<()> {
    if obs.y.len() != tree.p() {
        return Err(HatError::InvalidInput(format!(
            "observation vector length {} != number of leaves {}",
            obs.y.len(),
            tree.p()
        )));
    }
    Ok(())
}

/// One-way ANOVA F-test with pooled variance (noise level estimated from
/// the within-child spread). Provided for real-data workflows where sigma
/// is unknown; it carries no FSR guarantee and requires replication
/// (more leaves under `u` than children).
pub fn anova_pvalue_pooled(tree: &Tree, y: &[f64], u: NodeId) -> Result<f64> {
    if y.len() != tree.p() {
        return Err(HatError::InvalidInput(
            "observation vector length != number of leaves".into(),
        ));
    }
    if tree.is_leaf(u) {
        return Err(HatError::InvalidInput("F-test requested at a leaf".into()));
    }
    let (start, len) = tree.leaf_range(u);
    let deg = tree.degree(u);
    if len <= deg {
        return Err(HatError::InvalidInput(format!(
            "pooled F-test at {:?} needs more leaves than children",
            tree.label(u)
        )));
    }
    let slice = &y[start..start + len];
    let mean_u = slice.iter().sum::<f64>() / len as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for &c in tree.children(u) {
        let (cs, cl) = tree.leaf_range(c);
        let child = &y[cs..cs + cl];
        let mean_c = child.iter().sum::<f64>() / cl as f64;
        ssb += cl as f64 * (mean_c - mean_u).powi(2);
        ssw += child.iter().map(|v| (v - mean_c).powi(2)).sum::<f64>();
    }
    let df1 = (deg - 1) as u64;
    let df2 = (len - deg) as u64;
    if ssw <= 0.0 {
        return Ok(if ssb > 0.0 { 0.0 } else { 1.0 });
    }
    let f = (ssb / df1 as f64) / (ssw / df2 as f64);
    Ok((1.0 - f_cdf(f, df1, df2)?).clamp(0.0, 1.0))
}

/// Simes combination at node `a` over the internal nodes of the subtree
/// rooted at `a` (including `a` itself): `min_k p_(k) * m / k` where `m` is
/// the number of those nodes, clamped to 1.
pub fn simes_combine(tree: &Tree, pv: &PValueAssignment, a: NodeId) -> Result<f64> {
    if tree.is_leaf(a) {
        return Err(HatError::InvalidInput(
            "Simes combination requested at a leaf".into(),
        ));
    }
    let mut ps: Vec<f64> = tree
        .subtree_internal_nodes(a)
        .into_iter()
        .map(|u| pv.get(u))
        .collect::<Result<_>>()?;
    ps.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let m = ps.len() as f64;
    let min = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| p * m / (i + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(min.min(1.0))
}

/// Simes-combined assignment: the combination applied at every internal node.
pub fn simes_assignment(tree: &Tree, pv: &PValueAssignment) -> Result<PValueAssignment> {
    PValueAssignment::from_fn(tree, Provenance::Simes, |u| simes_combine(tree, pv, u))
}
