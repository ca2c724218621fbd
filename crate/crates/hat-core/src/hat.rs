//! The hierarchical aggregation testing procedure: a top-down, per-depth
//! step-up sweep over the internal nodes of a tree, with node-specific
//! threshold families that control the false split rate, plus the
//! Lynch-Guo step-up baseline.
//!
//! The sweep starts from the root (always rejected, counted as
//! `deg(root) - 1` initial splits) and, at each depth `d >= 2`, finds the
//! step-up fixed point `r*_d = max{r >= 0 : r <= R^d(r)}` where `R^d(r)`
//! counts the additional splits produced when every node is tested at its
//! level `alpha_u(r)`. Only nodes whose parent was rejected can be
//! rejected, so the output is always a rooted subtree.

use std::fmt;
use std::str::FromStr;

use crate::error::{HatError, Result};
use crate::metrics::{rejection_to_partition, Partition, RejectedSet};
use crate::pvalues::PValueAssignment;
use crate::tree::{NodeId, Tree};

/// Threshold formula selector.
///
/// `LynchGuo` implements the step-up baseline on the leaf-stripped tree; it
/// carries no false-split-rate guarantee on non-binary trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdFamily {
    /// Harmonic-sum threshold for independent p-values.
    IndependentHarmonic,
    /// Same, shifted down by `epsilon0` for approximately super-uniform
    /// p-values.
    IndependentShifted,
    /// Reshaped threshold valid under arbitrary p-value dependence.
    Reshaped,
    /// Reshaped and shifted by `epsilon0`.
    ReshapedShifted,
    /// Lynch-Guo hierarchical step-up baseline.
    LynchGuo,
}

impl ThresholdFamily {
    pub fn is_shifted(self) -> bool {
        matches!(
            self,
            ThresholdFamily::IndependentShifted | ThresholdFamily::ReshapedShifted
        )
    }
}

impl fmt::Display for ThresholdFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ThresholdFamily::IndependentHarmonic => "independent",
            ThresholdFamily::IndependentShifted => "independent-shifted",
            ThresholdFamily::Reshaped => "reshaped",
            ThresholdFamily::ReshapedShifted => "reshaped-shifted",
            ThresholdFamily::LynchGuo => "lg",
        };
        f.write_str(s)
    }
}

impl FromStr for ThresholdFamily {
    type Err = HatError;

    fn from_str(s: &str) -> Result<ThresholdFamily> {
        match s {
            "independent" => Ok(ThresholdFamily::IndependentHarmonic),
            "independent-shifted" => Ok(ThresholdFamily::IndependentShifted),
            "reshaped" => Ok(ThresholdFamily::Reshaped),
            "reshaped-shifted" => Ok(ThresholdFamily::ReshapedShifted),
            "lg" => Ok(ThresholdFamily::LynchGuo),
            other => Err(HatError::InvalidInput(format!(
                "unknown threshold family {other:?}"
            ))),
        }
    }
}

/// Upper limit of the reshaping function's harmonic denominator. The
/// printed form sums `1/k` for `k` from `d (delta - 1)` to the total degree
/// of the depth-`d` internal nodes; the alternative replaces the upper
/// limit with the previous depth's total degree minus one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReshapeUpperLimit {
    #[default]
    DepthDegreeSum,
    PrevDepthDegreeSum,
}

/// Configuration of a testing run.
#[derive(Debug, Clone, Copy)]
pub struct HatConfig {
    /// Target false split rate, in (0, 1).
    pub alpha: f64,
    pub family: ThresholdFamily,
    /// Super-uniformity slack; only meaningful for the shifted families,
    /// must lie in `[0, alpha)`.
    pub epsilon0: f64,
    pub reshape_upper: ReshapeUpperLimit,
}

impl HatConfig {
    pub fn new(alpha: f64, family: ThresholdFamily) -> HatConfig {
        HatConfig {
            alpha,
            family,
            epsilon0: 0.0,
            reshape_upper: ReshapeUpperLimit::default(),
        }
    }

    pub fn with_epsilon0(mut self, epsilon0: f64) -> HatConfig {
        self.epsilon0 = epsilon0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HatError::InvalidInput(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.family.is_shifted() {
            if !(self.epsilon0 >= 0.0 && self.epsilon0 < self.alpha) {
                return Err(HatError::InvalidInput(format!(
                    "epsilon0 must be in [0, alpha), got {}",
                    self.epsilon0
                )));
            }
        } else if self.epsilon0 != 0.0 {
            return Err(HatError::InvalidInput(
                "epsilon0 requires a shifted threshold family".into(),
            ));
        }
        Ok(())
    }
}

/// Tree-level quantities entering the thresholds.
#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    /// Number of leaves.
    pub p: u64,
    /// Maximum node degree.
    pub max_degree: u64,
    /// Minimum internal node degree.
    pub min_degree: u64,
    /// Maximum node depth.
    pub max_depth: u64,
}

impl TreeParams {
    pub fn of(tree: &Tree) -> TreeParams {
        TreeParams {
            p: tree.p() as u64,
            max_degree: tree.max_degree() as u64,
            min_degree: tree.min_degree() as u64,
            max_depth: tree.max_depth() as u64,
        }
    }
}

/// Per-depth quantities entering the thresholds.
#[derive(Debug, Clone, Copy)]
pub struct DepthParams {
    /// Depth being tested (>= 2).
    pub depth: u64,
    /// Cumulative split count from depths 1..d-1.
    pub r_prev: u64,
    /// Total degree of the internal nodes at this depth.
    pub sum_deg: u64,
    /// Number of internal nodes at this depth.
    pub n_nodes: u64,
    /// Total degree of the internal nodes at the previous depth.
    pub prev_sum_deg: u64,
}

/// Partial harmonic sum `sum_{m = lo}^{hi} 1/m`; zero when the range is
/// empty.
fn partial_harmonic(lo: u64, hi: u64) -> f64 {
    if lo > hi {
        return 0.0;
    }
    (lo..=hi).map(|m| 1.0 / m as f64).sum()
}

/// The harmonic factor of the independent-family threshold:
/// `1 + sum_{m = R + r + 1}^{p - 1 - (sum_deg - n_nodes - r)} 1/m`, with an
/// empty sum contributing zero.
pub fn harmonic_factor(r: u64, tp: &TreeParams, dp: &DepthParams) -> f64 {
    let lo = dp.r_prev + r + 1;
    let hi = (tp.p - 1).saturating_sub(dp.sum_deg - dp.n_nodes - r);
    1.0 + partial_harmonic(lo, hi)
}

fn independent_core(alpha: f64, n_leaves: u64, m: u64, hbar: f64, tp: &TreeParams) -> f64 {
    let delta = tp.max_degree as f64;
    let t = alpha * n_leaves as f64 * m as f64;
    let denom = tp.p as f64 * (1.0 - 1.0 / (delta * delta)) * hbar + t;
    (t / (delta * denom)).clamp(0.0, 1.0)
}

/// Independent-family threshold at node-level leaf count `n_leaves` and
/// step-up argument `r`. Zero when the parent is not rejected.
pub fn threshold_independent(
    parent_rejected: bool,
    alpha: f64,
    n_leaves: u64,
    r: u64,
    tp: &TreeParams,
    dp: &DepthParams,
) -> f64 {
    if !parent_rejected {
        return 0.0;
    }
    independent_core(alpha, n_leaves, dp.r_prev + r, harmonic_factor(r, tp, dp), tp)
}

/// Reshaping factor `beta_d(x) = x / sum_{k = lo}^{hi} 1/k` with
/// `lo = d (delta - 1)` and `hi` per `upper`. Errors when the denominator
/// range is empty (possible on very unbalanced trees).
pub fn reshape_beta(x: u64, tp: &TreeParams, dp: &DepthParams, upper: ReshapeUpperLimit) -> Result<f64> {
    let lo = dp.depth * (tp.min_degree - 1);
    let hi = match upper {
        ReshapeUpperLimit::DepthDegreeSum => dp.sum_deg,
        ReshapeUpperLimit::PrevDepthDegreeSum => dp.prev_sum_deg.saturating_sub(1),
    };
    if lo > hi {
        return Err(HatError::InvalidInput(format!(
            "reshaping denominator range {lo}..={hi} at depth {} is empty",
            dp.depth
        )));
    }
    Ok(x as f64 / partial_harmonic(lo, hi))
}

/// Reshaped threshold, valid under arbitrary p-value dependence. Zero when
/// the parent is not rejected.
pub fn threshold_reshaped(
    parent_rejected: bool,
    alpha: f64,
    n_leaves: u64,
    r: u64,
    tp: &TreeParams,
    dp: &DepthParams,
    upper: ReshapeUpperLimit,
) -> Result<f64> {
    if !parent_rejected {
        return Ok(0.0);
    }
    let beta = reshape_beta(dp.r_prev + r, tp, dp, upper)?;
    let delta = tp.max_degree as f64;
    let denom = tp.p as f64 * (delta - 1.0 / delta) * (tp.max_depth - 1) as f64;
    Ok((alpha * n_leaves as f64 * beta / denom).clamp(0.0, 1.0))
}

/// Shifted threshold: `max(base - epsilon0, 0)`. A negative level would be
/// an impossible rejection, so the clamp is at zero.
pub fn threshold_shifted(base: f64, epsilon0: f64) -> f64 {
    (base - epsilon0).max(0.0)
}

/// Lynch-Guo threshold on the leaf-stripped tree:
/// `alpha * (tilde_leaves_u / tilde_leaves_root) * (m_u + R + r - 1) / m_u`,
/// clamped to `[0, 1]`. `m_u` counts `u` itself plus its descendants in the
/// leaf-stripped tree, so it is always >= 1.
pub fn threshold_lg(
    parent_rejected: bool,
    alpha: f64,
    tilde_leaves_u: u64,
    tilde_leaves_root: u64,
    m_u: u64,
    r_prev: u64,
    r: u64,
) -> f64 {
    if !parent_rejected {
        return 0.0;
    }
    let frac = tilde_leaves_u as f64 / tilde_leaves_root as f64;
    let stepup = (m_u + r_prev + r - 1) as f64 / m_u as f64;
    (alpha * frac * stepup).clamp(0.0, 1.0)
}

/// Step-up fixed point: the largest `r` in `0..=r_max` with `r <= rd(r)`.
/// `r = 0` always qualifies, so the scan is total.
pub fn fixed_point_r(r_max: u64, mut rd: impl FnMut(u64) -> u64) -> u64 {
    let mut best = 0;
    for r in 0..=r_max {
        if r <= rd(r) {
            best = r;
        }
    }
    best
}

/// Per-depth trace of a testing run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepthRecord {
    pub depth: usize,
    /// The step-up fixed point at this depth.
    pub r_star: u64,
    /// `R^d(r*_d)`; equals `r_star` by self-consistency.
    pub rd_at_r_star: u64,
    /// Cumulative split count through this depth.
    pub r_cumulative: u64,
}

/// The rooted subtree of rejected nodes, with the per-depth step-up trace
/// and the final threshold each internal node was compared against.
#[derive(Debug, Clone)]
pub struct RejectionTree {
    set: RejectedSet,
    depths: Vec<DepthRecord>,
    thresholds: Vec<Option<f64>>,
}

impl RejectionTree {
    pub fn rejected(&self) -> &RejectedSet {
        &self.set
    }

    pub fn is_rejected(&self, u: NodeId) -> bool {
        self.set.contains(u)
    }

    pub fn depth_records(&self) -> &[DepthRecord] {
        &self.depths
    }

    /// Final threshold a node was tested at. `None` for the root (never
    /// tested), leaves, and depths the sweep did not reach.
    pub fn threshold_used(&self, u: NodeId) -> Option<f64> {
        self.thresholds.get(u).copied().flatten()
    }
}

/// Node counts on the leaf-stripped tree, for the Lynch-Guo thresholds.
struct LgData {
    /// Subtree size within the leaf-stripped tree, counting the node itself.
    m: Vec<u64>,
    /// Leaves of the leaf-stripped tree below (or equal to) each node.
    tilde_leaves: Vec<u64>,
}

impl LgData {
    fn new(tree: &Tree) -> LgData {
        let n = tree.n_nodes();
        let mut m = vec![0u64; n];
        let mut tl = vec![0u64; n];
        // Children carry larger preorder ids, so a reverse sweep sees them
        // first.
        for u in (0..n).rev() {
            if tree.is_leaf(u) {
                continue;
            }
            let mut m_acc = 1;
            let mut tl_acc = 0;
            for &c in tree.children(u) {
                m_acc += m[c];
                tl_acc += tl[c];
            }
            m[u] = m_acc;
            tl[u] = if tl_acc == 0 { 1 } else { tl_acc };
        }
        LgData { m, tilde_leaves: tl }
    }
}

/// Run the testing procedure and return the rejection subtree together with
/// the aggregation it induces.
///
/// The root is rejected by initialization and its p-value is never compared
/// against a threshold; the initial split count is `deg(root) - 1`
/// (`1` for Lynch-Guo). The sweep stops at the first depth where no node
/// has a rejected parent.
pub fn run_hat(
    tree: &Tree,
    pv: &PValueAssignment,
    cfg: &HatConfig,
) -> Result<(RejectionTree, Partition)> {
    cfg.validate()?;
    for u in tree.internal_nodes() {
        pv.get(u)?;
    }

    let tp = TreeParams::of(tree);
    let lg = matches!(cfg.family, ThresholdFamily::LynchGuo).then(|| LgData::new(tree));

    let mut rejected_mask = vec![false; tree.n_nodes()];
    rejected_mask[tree.root()] = true;
    let mut thresholds: Vec<Option<f64>> = vec![None; tree.n_nodes()];
    let mut depths = Vec::new();
    let mut r_cum: u64 = match lg {
        Some(_) => 1,
        None => tree.degree(tree.root()) as u64 - 1,
    };

    let mut prev_sum_deg: u64 = tree.degree(tree.root()) as u64;
    for d in 2..=tree.max_depth() {
        let nodes = tree.internal_nodes_at_depth(d)?;
        if nodes.is_empty() {
            break;
        }
        let parent_ok: Vec<bool> = nodes
            .iter()
            .map(|&u| rejected_mask[tree.parent(u).expect("non-root has parent")])
            .collect();
        if !parent_ok.iter().any(|&b| b) {
            break;
        }
        let sum_deg: u64 = nodes.iter().map(|&u| tree.degree(u) as u64).sum();
        let dp = DepthParams {
            depth: d as u64,
            r_prev: r_cum,
            sum_deg,
            n_nodes: nodes.len() as u64,
            prev_sum_deg,
        };

        // A degenerate reshaping range depends only on the depth, so it is
        // checked once here; the per-node closures below cannot fail.
        if matches!(
            cfg.family,
            ThresholdFamily::Reshaped | ThresholdFamily::ReshapedShifted
        ) {
            reshape_beta(1, &tp, &dp, cfg.reshape_upper)?;
        }
        // Final threshold for node index i at step-up argument r.
        let threshold_at = |i: usize, r: u64| -> f64 {
            let u = nodes[i];
            let n_leaves = tree.n_leaves(u) as u64;
            let ok = parent_ok[i];
            match cfg.family {
                ThresholdFamily::IndependentHarmonic => {
                    threshold_independent(ok, cfg.alpha, n_leaves, r, &tp, &dp)
                }
                ThresholdFamily::IndependentShifted => threshold_shifted(
                    threshold_independent(ok, cfg.alpha, n_leaves, r, &tp, &dp),
                    cfg.epsilon0,
                ),
                ThresholdFamily::Reshaped => {
                    threshold_reshaped(ok, cfg.alpha, n_leaves, r, &tp, &dp, cfg.reshape_upper)
                        .expect("range validated above")
                }
                ThresholdFamily::ReshapedShifted => threshold_shifted(
                    threshold_reshaped(ok, cfg.alpha, n_leaves, r, &tp, &dp, cfg.reshape_upper)
                        .expect("range validated above"),
                    cfg.epsilon0,
                ),
                ThresholdFamily::LynchGuo => {
                    let lg = lg.as_ref().expect("lg data");
                    threshold_lg(
                        ok,
                        cfg.alpha,
                        lg.tilde_leaves[u],
                        lg.tilde_leaves[tree.root()],
                        lg.m[u],
                        dp.r_prev,
                        r,
                    )
                }
            }
        };
        // A node is rejectable only when its parent was rejected and its
        // threshold is positive: a level of zero means "cannot reject" even
        // for a p-value of exactly zero, and the parent gate keeps the
        // output a rooted subtree.
        let weight = |u: NodeId| -> u64 {
            match cfg.family {
                ThresholdFamily::LynchGuo => 1,
                _ => tree.degree(u) as u64 - 1,
            }
        };
        let rd = |r: u64| -> u64 {
            let mut total = 0;
            for (i, &u) in nodes.iter().enumerate() {
                let t = threshold_at(i, r);
                if parent_ok[i] && t > 0.0 && pv.get(u).expect("validated") <= t {
                    total += weight(u);
                }
            }
            total
        };

        let r_max = match cfg.family {
            ThresholdFamily::LynchGuo => dp.n_nodes,
            _ => dp.sum_deg - dp.n_nodes,
        };
        let r_star = fixed_point_r(r_max, &rd);
        let rd_at_r_star = rd(r_star);
        if rd_at_r_star != r_star {
            return Err(HatError::Internal(format!(
                "step-up self-consistency failed at depth {d}: R^d({r_star}) = {rd_at_r_star}"
            )));
        }

        for (i, &u) in nodes.iter().enumerate() {
            let t = threshold_at(i, r_star);
            thresholds[u] = Some(t);
            if parent_ok[i] && t > 0.0 && pv.get(u)? <= t {
                rejected_mask[u] = true;
            }
        }
        r_cum += r_star;
        depths.push(DepthRecord {
            depth: d,
            r_star,
            rd_at_r_star,
            r_cumulative: r_cum,
        });
        prev_sum_deg = sum_deg;
    }

    let rejected_nodes: Vec<NodeId> = (0..tree.n_nodes()).filter(|&u| rejected_mask[u]).collect();
    let set = RejectedSet::new(tree, rejected_nodes)?;
    let partition = rejection_to_partition(tree, &set);
    Ok((
        RejectionTree {
            set,
            depths,
            thresholds,
        },
        partition,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvalues::Provenance;
    use crate::sim::balanced_regular_tree;
    use crate::testutil::mixed_depth_tree;

    fn uniform_pv(tree: &Tree, value: f64) -> PValueAssignment {
        PValueAssignment::from_fn(tree, Provenance::External, |_| Ok(value)).unwrap()
    }

    #[test]
    fn all_ones_rejects_only_root() {
        let t = mixed_depth_tree();
        let pv = uniform_pv(&t, 1.0);
        for family in [
            ThresholdFamily::IndependentHarmonic,
            ThresholdFamily::Reshaped,
            ThresholdFamily::LynchGuo,
        ] {
            let cfg = HatConfig::new(0.2, family);
            let (rej, part) = run_hat(&t, &pv, &cfg).unwrap();
            assert_eq!(rej.rejected().nodes(), &[t.root()]);
            // Children-of-root groups.
            assert_eq!(part.sizes(), &[6, 5]);
        }
    }

    #[test]
    fn all_zeros_rejects_everything() {
        let t = balanced_regular_tree(3, 27).unwrap();
        let pv = uniform_pv(&t, 0.0);
        for family in [
            ThresholdFamily::IndependentHarmonic,
            ThresholdFamily::Reshaped,
            ThresholdFamily::LynchGuo,
        ] {
            let cfg = HatConfig::new(0.2, family);
            let (rej, part) = run_hat(&t, &pv, &cfg).unwrap();
            assert_eq!(rej.rejected().len(), t.n_internal());
            assert_eq!(part, Partition::singletons(27));
            // Every tested node saw a strictly positive threshold.
            for u in t.internal_nodes() {
                if u != t.root() {
                    assert!(rej.threshold_used(u).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn frozen_independent_threshold() {
        // Balanced 3-regular tree with p = 27 at depth 2: one depth-1 node
        // of degree 3, three depth-2 nodes of degree 3 and 9 leaves each.
        // Reference value from 50-digit evaluation of the formula.
        let tp = TreeParams {
            p: 27,
            max_degree: 3,
            min_degree: 3,
            max_depth: 4,
        };
        let dp = DepthParams {
            depth: 2,
            r_prev: 2,
            sum_deg: 9,
            n_nodes: 3,
            prev_sum_deg: 3,
        };
        let t = threshold_independent(true, 0.2, 9, 0, &tp, &dp);
        assert!((t - 0.015395322679273479).abs() < 1e-15);
        assert_eq!(threshold_independent(false, 0.2, 9, 0, &tp, &dp), 0.0);
    }

    #[test]
    fn empty_harmonic_range_closed_form() {
        // When the partial sum's lower limit exceeds its upper limit the
        // factor is exactly 1 and the threshold has the closed form
        // (1/D) * a*l*m / (p (1 - 1/D^2) + a*l*m).
        let tp = TreeParams {
            p: 8,
            max_degree: 2,
            min_degree: 2,
            max_depth: 4,
        };
        let dp = DepthParams {
            depth: 2,
            r_prev: 5,
            sum_deg: 4,
            n_nodes: 2,
            prev_sum_deg: 2,
        };
        // lo = 5 + 0 + 1 = 6 > hi = 7 - (4 - 2 - 0) = 5.
        assert_eq!(harmonic_factor(0, &tp, &dp), 1.0);
        let alm = 0.3 * 4.0 * 5.0;
        let expect = 0.5 * alm / (8.0 * 0.75 + alm);
        assert!((threshold_independent(true, 0.3, 4, 0, &tp, &dp) - expect).abs() < 1e-15);
    }

    #[test]
    fn reshaped_binary_beta_denominator() {
        // Binary tree, depth 2 with two degree-2 internal nodes:
        // beta_d(x) = x / (1/2 + 1/3 + 1/4).
        let tp = TreeParams {
            p: 4,
            max_degree: 2,
            min_degree: 2,
            max_depth: 3,
        };
        let dp = DepthParams {
            depth: 2,
            r_prev: 1,
            sum_deg: 4,
            n_nodes: 2,
            prev_sum_deg: 2,
        };
        let z = 0.5 + 1.0 / 3.0 + 0.25;
        for x in 1..=3u64 {
            let beta = reshape_beta(x, &tp, &dp, ReshapeUpperLimit::DepthDegreeSum).unwrap();
            assert!((beta - x as f64 / z).abs() < 1e-15);
        }
        let t = threshold_reshaped(true, 0.2, 2, 0, &tp, &dp, ReshapeUpperLimit::DepthDegreeSum)
            .unwrap();
        let expect = 0.2 * 2.0 * (1.0 / z) / (4.0 * 1.5 * 2.0);
        assert!((t - expect).abs() < 1e-15);
        assert_eq!(
            threshold_reshaped(false, 0.2, 2, 0, &tp, &dp, ReshapeUpperLimit::DepthDegreeSum)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn reshaped_upper_limit_variant() {
        // The alternative denominator sums k up to the previous depth's
        // total degree minus one.
        let tp = TreeParams {
            p: 9,
            max_degree: 3,
            min_degree: 3,
            max_depth: 3,
        };
        let dp = DepthParams {
            depth: 2,
            r_prev: 2,
            sum_deg: 9,
            n_nodes: 3,
            prev_sum_deg: 3,
        };
        let printed = reshape_beta(4, &tp, &dp, ReshapeUpperLimit::DepthDegreeSum).unwrap();
        let z_printed: f64 = (4..=9u64).map(|k| 1.0 / k as f64).sum();
        assert!((printed - 4.0 / z_printed).abs() < 1e-15);
        // Variant range is k = 4..=2: empty, so it errors here.
        assert!(reshape_beta(4, &tp, &dp, ReshapeUpperLimit::PrevDepthDegreeSum).is_err());
        // With a wider previous depth the variant is defined and smaller in
        // denominator range.
        let dp2 = DepthParams {
            prev_sum_deg: 9,
            ..dp
        };
        let variant = reshape_beta(4, &tp, &dp2, ReshapeUpperLimit::PrevDepthDegreeSum).unwrap();
        let z_variant: f64 = (4..=8u64).map(|k| 1.0 / k as f64).sum();
        assert!((variant - 4.0 / z_variant).abs() < 1e-15);
    }

    #[test]
    fn reshaped_degenerate_range_errors() {
        // A caterpillar-like depth where the single internal node's degree
        // sum falls below d (delta - 1).
        let tp = TreeParams {
            p: 6,
            max_degree: 3,
            min_degree: 2,
            max_depth: 5,
        };
        let dp = DepthParams {
            depth: 4,
            r_prev: 3,
            sum_deg: 2,
            n_nodes: 1,
            prev_sum_deg: 2,
        };
        assert!(reshape_beta(3, &tp, &dp, ReshapeUpperLimit::DepthDegreeSum).is_err());
    }

    #[test]
    fn shifted_clamps() {
        assert_eq!(threshold_shifted(0.25, 0.0), 0.25);
        assert_eq!(threshold_shifted(0.002, 0.01), 0.0);
        let base = 0.015395322679273479;
        assert!((threshold_shifted(base, 0.001) - (base - 0.001)).abs() < 1e-15);
    }

    #[test]
    fn lg_leaf_node_threshold() {
        // A leaf of the stripped tree with R + r = 1 tests at
        // alpha / tilde_leaves_root.
        let t = threshold_lg(true, 0.2, 1, 5, 1, 1, 0);
        assert!((t - 0.04).abs() < 1e-15);
        assert_eq!(threshold_lg(false, 0.2, 1, 5, 1, 1, 0), 0.0);
    }

    #[test]
    fn fixed_point_trivial_cases() {
        assert_eq!(fixed_point_r(5, |_| 0), 0);
        assert_eq!(fixed_point_r(5, |_| 5), 5);
        // Non-monotone toy function still returns the max qualifying r.
        assert_eq!(fixed_point_r(4, |r| if r == 3 { 3 } else { 0 }), 3);
    }

    #[test]
    fn epsilon0_validation() {
        let t = mixed_depth_tree();
        let pv = uniform_pv(&t, 0.5);
        let bad = HatConfig::new(0.2, ThresholdFamily::IndependentHarmonic).with_epsilon0(0.01);
        assert!(run_hat(&t, &pv, &bad).is_err());
        let bad2 = HatConfig::new(0.2, ThresholdFamily::IndependentShifted).with_epsilon0(0.3);
        assert!(run_hat(&t, &pv, &bad2).is_err());
        let ok = HatConfig::new(0.2, ThresholdFamily::IndependentShifted).with_epsilon0(0.05);
        assert!(run_hat(&t, &pv, &ok).is_ok());
    }

    #[test]
    fn shifted_with_zero_epsilon_matches_base() {
        let t = balanced_regular_tree(3, 27).unwrap();
        let pv = PValueAssignment::from_fn(&t, Provenance::External, |u| {
            Ok(((u * 2654435761) % 1000) as f64 / 1000.0)
        })
        .unwrap();
        let base = run_hat(&t, &pv, &HatConfig::new(0.25, ThresholdFamily::IndependentHarmonic))
            .unwrap();
        let shifted = run_hat(
            &t,
            &pv,
            &HatConfig::new(0.25, ThresholdFamily::IndependentShifted).with_epsilon0(0.0),
        )
        .unwrap();
        assert_eq!(base.0.rejected().nodes(), shifted.0.rejected().nodes());
    }

    #[test]
    fn zero_pvalue_under_unrejected_parent_stays_unrejected() {
        // A zero p-value below an unrejected parent must not be rejected
        // even though 0 <= 0.
        let t = mixed_depth_tree();
        let c1 = t.node_by_label("c1").unwrap();
        let pv = PValueAssignment::from_fn(&t, Provenance::External, |u| {
            Ok(if u == c1 { 0.0 } else { 1.0 })
        })
        .unwrap();
        let (rej, _) = run_hat(&t, &pv, &HatConfig::new(0.2, ThresholdFamily::IndependentHarmonic))
            .unwrap();
        assert!(!rej.is_rejected(c1));
        assert_eq!(rej.rejected().nodes(), &[t.root()]);
    }
}
