//! Scenario generators and the Monte-Carlo driver estimating the false
//! split rate and power of the testing procedures.
//!
//! Reproducibility: every scenario uses a counter-based generator
//! (ChaCha8) keyed by the scenario seed. Stream 0 carries scenario-level
//! draws (tree points, group values, design matrix); stream `1 + r`
//! carries replicate `r`. Replicates therefore evaluate independently and
//! may run in parallel without changing the results.

use std::cmp::Reverse;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{HatError, Result};
use crate::hat::{run_hat, HatConfig, ThresholdFamily};
use crate::metrics::{bstar_partition, fsp_tpp_groups, Partition};
use crate::pvalues::{
    anova_assignment, simes_assignment, LeafObservations, PValueAssignment, Provenance,
};
use crate::regression::{node_pvalues_regression, RegressionData, RegressionPipelineConfig};
use crate::tree::{NestedNode, NodeId, Tree};

/// Standard normal draw (Box-Muller on two uniforms).
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Beta(1, shape) draw by inverse CDF: `1 - (1 - u)^(1/shape)`.
pub fn beta_one_shape<R: Rng>(rng: &mut R, shape: f64) -> f64 {
    let u: f64 = rng.gen();
    1.0 - (1.0 - u).powf(1.0 / shape)
}

/// Balanced `branch`-regular tree with the given number of leaves (must be
/// a positive power of `branch`).
pub fn balanced_regular_tree(branch: usize, leaves: usize) -> Result<Tree> {
    if branch < 2 {
        return Err(HatError::InvalidInput("branching factor must be >= 2".into()));
    }
    let mut height = 0u32;
    let mut size = 1usize;
    while size < leaves {
        size *= branch;
        height += 1;
    }
    if size != leaves || height == 0 {
        return Err(HatError::InvalidInput(format!(
            "{leaves} is not a positive power of {branch}"
        )));
    }
    let mut counter = 0usize;
    fn build(branch: usize, height: u32, counter: &mut usize) -> NestedNode {
        if height == 0 {
            *counter += 1;
            return NestedNode::leaf(format!("x{counter}"));
        }
        NestedNode::internal(
            None,
            (0..branch).map(|_| build(branch, height - 1, counter)).collect(),
        )
    }
    Tree::from_nested(&build(branch, height, &mut counter))
}

struct HeightedNode {
    label: Option<String>,
    children: Vec<HeightedNode>,
    height: f64,
}

fn flatten_heights(h: &HeightedNode, into: &mut Vec<f64>) -> NestedNode {
    into.push(h.height);
    NestedNode {
        label: h.label.clone(),
        children: h.children.iter().map(|c| flatten_heights(c, into)).collect(),
    }
}

/// Single-linkage binary dendrogram over 1-D points. Leaves are labeled
/// `x1..xp` in sorted point order; the returned heights (indexed by node
/// id) carry each internal node's merge distance, zero at leaves.
///
/// On a line, the single-linkage distance between adjacent contiguous
/// clusters is the gap between their closest endpoints, so merges happen
/// in ascending order of the adjacent gaps (ties toward the leftmost gap).
pub fn gen_binary_tree_from_points(points: &[f64]) -> Result<(Tree, Vec<f64>)> {
    let p = points.len();
    if p < 2 {
        return Err(HatError::InvalidInput("need at least 2 points".into()));
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| points[i]).collect();

    let mut gap_order: Vec<usize> = (0..p - 1).collect();
    gap_order.sort_by(|&a, &b| {
        let ga = sorted[a + 1] - sorted[a];
        let gb = sorted[b + 1] - sorted[b];
        ga.partial_cmp(&gb).unwrap().then(a.cmp(&b))
    });

    // Union-find over positions; the set root owns the cluster's subtree.
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut slots: Vec<Option<HeightedNode>> = (1..=p)
        .map(|i| {
            Some(HeightedNode {
                label: Some(format!("x{i}")),
                children: Vec::new(),
                height: 0.0,
            })
        })
        .collect();
    for &g in &gap_order {
        let left = find(&mut parent, g);
        let right = find(&mut parent, g + 1);
        let lnode = slots[left].take().expect("left cluster");
        let rnode = slots[right].take().expect("right cluster");
        parent[right] = left;
        slots[left] = Some(HeightedNode {
            label: None,
            children: vec![lnode, rnode],
            height: sorted[g + 1] - sorted[g],
        });
    }
    let root = slots[find(&mut parent, 0)].take().expect("root cluster");
    let mut heights = Vec::with_capacity(2 * p - 1);
    let nested = flatten_heights(&root, &mut heights);
    let tree = Tree::from_nested(&nested)?;
    Ok((tree, heights))
}

/// Binary dendrogram over `p` Uniform(0,1) draws.
pub fn gen_binary_tree(p: usize, seed: u64) -> Result<(Tree, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<f64> = (0..p).map(|_| rng.gen()).collect();
    gen_binary_tree_from_points(&points)
}

/// Cut a tree into exactly `k` disjoint subtrees and return their roots
/// (whose leaf sets partition the leaves).
///
/// With merge `heights` (indexed by node id), the cut removes the `k - 1`
/// internal nodes of largest height, i.e. it falls between the `(k-1)`-th
/// and `k`-th largest merges; ties break toward smaller ids. Without
/// heights, the tree is expanded frontier-first (deepest subtree first,
/// ties toward smaller ids) until exactly `k` groups exist; an error is
/// returned when a split overshoots `k`.
pub fn cut_tree(tree: &Tree, k: usize, heights: Option<&[f64]>) -> Result<Vec<NodeId>> {
    let p = tree.p();
    if k == 0 || k > p {
        return Err(HatError::InvalidInput(format!(
            "cannot cut {p} leaves into {k} groups"
        )));
    }
    if k == 1 {
        return Ok(vec![tree.root()]);
    }
    match heights {
        Some(h) => {
            if h.len() != tree.n_nodes() {
                return Err(HatError::InvalidInput(
                    "heights vector must have one entry per node".into(),
                ));
            }
            let mut internal: Vec<NodeId> = tree.internal_nodes().collect();
            internal.sort_by(|&a, &b| {
                h[b].partial_cmp(&h[a]).unwrap().then(a.cmp(&b))
            });
            if internal.len() < k - 1 {
                return Err(HatError::InvalidInput(format!(
                    "only {} internal nodes; cannot make {k} groups",
                    internal.len()
                )));
            }
            let cut: Vec<NodeId> = internal[..k - 1].to_vec();
            let mut mask = vec![false; tree.n_nodes()];
            for &u in &cut {
                mask[u] = true;
            }
            for &u in &cut {
                if let Some(parent) = tree.parent(u) {
                    if !mask[parent] {
                        return Err(HatError::InvalidInput(
                            "merge heights are not monotone; cut is not a rooted subtree".into(),
                        ));
                    }
                }
            }
            let mut bstar = Vec::new();
            for &u in &cut {
                for &c in tree.children(u) {
                    if !mask[c] {
                        bstar.push(c);
                    }
                }
            }
            bstar.sort_unstable();
            if bstar.len() != k {
                return Err(HatError::Internal(format!(
                    "height cut produced {} groups instead of {k}",
                    bstar.len()
                )));
            }
            Ok(bstar)
        }
        None => {
            // Frontier expansion: split the deepest group first.
            let mut frontier: BTreeSet<(Reverse<usize>, NodeId)> = BTreeSet::new();
            let mut leaves_out: Vec<NodeId> = Vec::new();
            frontier.insert((Reverse(tree.subtree_height(tree.root())), tree.root()));
            let mut count = 1usize;
            while count < k {
                let &(_, u) = frontier.iter().next().ok_or_else(|| {
                    HatError::InvalidInput(format!("cannot reach {k} groups by splitting"))
                })?;
                frontier.remove(&(Reverse(tree.subtree_height(u)), u));
                count += tree.degree(u) - 1;
                if count > k {
                    return Err(HatError::InvalidInput(format!(
                        "splitting overshoots {k} groups (reached {count})"
                    )));
                }
                for &c in tree.children(u) {
                    if tree.is_leaf(c) {
                        leaves_out.push(c);
                    } else {
                        frontier.insert((Reverse(tree.subtree_height(c)), c));
                    }
                }
            }
            let mut bstar: Vec<NodeId> = frontier.into_iter().map(|(_, u)| u).collect();
            bstar.extend(leaves_out);
            bstar.sort_unstable();
            Ok(bstar)
        }
    }
}

/// The non-binary benchmark tree: the root has degree 5 and `k_internal`
/// of its children (1..=4) are degree-10 internal nodes, the rest leaves;
/// `p = 5 + 9 k_internal`.
pub fn gen_nonbinary_tree(k_internal: usize) -> Result<Tree> {
    if !(1..=4).contains(&k_internal) {
        return Err(HatError::InvalidInput(format!(
            "number of internal root children must be 1..=4, got {k_internal}"
        )));
    }
    let mut leaf = 0usize;
    let mut children = Vec::with_capacity(5);
    for g in 0..k_internal {
        let sub = (0..10)
            .map(|_| {
                leaf += 1;
                NestedNode::leaf(format!("t{leaf}"))
            })
            .collect();
        children.push(NestedNode::internal(Some(format!("g{}", g + 1)), sub));
    }
    for _ in k_internal..5 {
        leaf += 1;
        children.push(NestedNode::leaf(format!("t{leaf}")));
    }
    Tree::from_nested(&NestedNode::internal(Some("root".into()), children))
}

/// Idealized p-values for a known true aggregation: null internal nodes
/// (at or below a `bstar` node) draw Uniform(0,1); non-null nodes (strict
/// ancestors of `bstar`) draw Beta(1, shape). One uniform is consumed per
/// internal node in id order regardless of classification, so the stream
/// alignment does not depend on `bstar`.
pub fn gen_idealized_pvalues<R: Rng>(
    tree: &Tree,
    bstar: &[NodeId],
    beta_shape: f64,
    rng: &mut R,
) -> Result<PValueAssignment> {
    let truth = bstar_partition(tree, bstar)?;
    let group_of = truth.group_of();
    let mut values = vec![0.0f64; tree.n_nodes()];
    for u in tree.internal_nodes() {
        let (start, len) = tree.leaf_range(u);
        let is_null = group_of[start] == group_of[start + len - 1];
        let draw: f64 = rng.gen();
        values[u] = if is_null {
            draw
        } else {
            1.0 - (1.0 - draw).powf(1.0 / beta_shape)
        };
    }
    PValueAssignment::from_fn(tree, Provenance::External, |u| Ok(values[u]))
}

/// Fixed part of the aggregation-of-means scenario: a balanced 3-regular
/// tree cut into `k` groups with signed Uniform(1, 1.5) group means.
#[derive(Debug, Clone)]
pub struct MeansScenario {
    pub tree: Tree,
    pub bstar: Vec<NodeId>,
    pub truth: Partition,
    /// Per-leaf mean, aligned to the leaf order.
    pub leaf_means: Vec<f64>,
    pub sigma: f64,
}

pub fn gen_means_scenario(p: usize, k: usize, sigma: f64, seed: u64) -> Result<MeansScenario> {
    let tree = balanced_regular_tree(3, p)?;
    let bstar = cut_tree(&tree, k, None)?;
    let truth = bstar_partition(&tree, &bstar)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut group_values = Vec::with_capacity(k);
    for _ in 0..k {
        let mag: f64 = rng.gen_range(1.0..1.5);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        group_values.push(sign * mag);
    }
    let mut leaf_means = vec![0.0; p];
    for (g, &(start, len)) in truth.ranges().iter().enumerate() {
        for pos in start..start + len {
            leaf_means[pos] = group_values[g];
        }
    }
    Ok(MeansScenario {
        tree,
        bstar,
        truth,
        leaf_means,
        sigma,
    })
}

impl MeansScenario {
    /// Draw one replicate of noisy leaf observations.
    pub fn replicate<R: Rng>(&self, rng: &mut R) -> Result<LeafObservations> {
        let y: Vec<f64> = self
            .leaf_means
            .iter()
            .map(|&m| m + self.sigma * standard_normal(rng))
            .collect();
        LeafObservations::new(y, self.sigma)
    }
}

/// Fixed part of the regression scenario: a balanced 3-regular tree cut
/// into `k` groups, sparse group coefficients, and a Bernoulli-Gaussian
/// design. The response is redrawn per replicate.
#[derive(Debug, Clone)]
pub struct RegressionScenario {
    pub tree: Tree,
    pub bstar: Vec<NodeId>,
    pub truth: Partition,
    pub theta_star: DVector<f64>,
    pub x: DMatrix<f64>,
    /// `X theta_star`.
    pub signal: DVector<f64>,
    pub sigma: f64,
}

/// Generate the regression scenario: the first `round((1 - beta) k)` group
/// coefficients are zero, the rest N(0, 0.5^2); the design is
/// elementwise Gaussian times Bernoulli(rho); the noise level is
/// `c_sigma * |X theta*| / sqrt(n)`.
pub fn gen_regression_scenario(
    p: usize,
    k: usize,
    beta: f64,
    rho: f64,
    n: usize,
    c_sigma: f64,
    seed: u64,
) -> Result<RegressionScenario> {
    if !(0.0..=1.0).contains(&beta) || !(0.0..=1.0).contains(&rho) {
        return Err(HatError::InvalidInput(
            "sparsity and density must lie in [0, 1]".into(),
        ));
    }
    let tree = balanced_regular_tree(3, p)?;
    let bstar = cut_tree(&tree, k, None)?;
    let truth = bstar_partition(&tree, &bstar)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);

    let n_zero = ((1.0 - beta) * k as f64).round() as usize;
    let mut group_values = vec![0.0f64; k];
    for value in group_values.iter_mut().skip(n_zero.min(k)) {
        *value = 0.5 * standard_normal(&mut rng);
    }
    let mut theta_star = DVector::zeros(p);
    for (g, &(start, len)) in truth.ranges().iter().enumerate() {
        for pos in start..start + len {
            theta_star[pos] = group_values[g];
        }
    }
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let gauss = standard_normal(&mut rng);
            let keep = rng.gen_bool(rho);
            x[(i, j)] = if keep { gauss } else { 0.0 };
        }
    }
    let signal = &x * &theta_star;
    let sigma = c_sigma * signal.norm() / (n as f64).sqrt();
    Ok(RegressionScenario {
        tree,
        bstar,
        truth,
        theta_star,
        x,
        signal,
        sigma,
    })
}

impl RegressionScenario {
    /// Draw one replicate of the response.
    pub fn replicate<R: Rng>(&self, rng: &mut R) -> Result<RegressionData> {
        let y = DVector::from_fn(self.signal.len(), |i, _| {
            self.signal[i] + self.sigma * standard_normal(rng)
        });
        RegressionData::new(self.x.clone(), y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    IdealizedBinary,
    IdealizedNonbinary,
    Means3Regular,
    RegressionRare,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::IdealizedBinary => "idealized-binary",
            ScenarioKind::IdealizedNonbinary => "idealized-nonbinary",
            ScenarioKind::Means3Regular => "means-3regular",
            ScenarioKind::RegressionRare => "regression-rare",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = HatError;

    fn from_str(s: &str) -> Result<ScenarioKind> {
        match s {
            "idealized-binary" => Ok(ScenarioKind::IdealizedBinary),
            "idealized-nonbinary" => Ok(ScenarioKind::IdealizedNonbinary),
            "means-3regular" => Ok(ScenarioKind::Means3Regular),
            "regression-rare" => Ok(ScenarioKind::RegressionRare),
            other => Err(HatError::InvalidInput(format!("unknown scenario {other:?}"))),
        }
    }
}

/// A full Monte-Carlo experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub p: usize,
    pub k: usize,
    pub alphas: Vec<f64>,
    pub families: Vec<ThresholdFamily>,
    pub reps: usize,
    pub seed: u64,
    /// Beta(1, shape) for non-null idealized p-values.
    pub beta_shape: f64,
    /// Noise level of the means scenario.
    pub sigma: f64,
    /// Combine ANOVA p-values through Simes before testing.
    pub use_simes: bool,
    /// Number of internal root children of the non-binary tree (1..=4).
    pub nonbinary_internal: usize,
    /// Regression sample size.
    pub n: usize,
    /// Fraction of nonzero group coefficients.
    pub sparsity_beta: f64,
    /// Bernoulli density of the design.
    pub density_rho: f64,
    /// Noise multiplier of the regression scenario.
    pub c_sigma: f64,
    pub pipeline: RegressionPipelineConfig,
}

impl Scenario {
    fn base(kind: ScenarioKind, p: usize, k: usize) -> Scenario {
        Scenario {
            kind,
            p,
            k,
            alphas: vec![0.1, 0.2, 0.3],
            families: vec![ThresholdFamily::IndependentHarmonic],
            reps: 100,
            seed: 1,
            beta_shape: 60.0,
            sigma: 0.3,
            use_simes: false,
            nonbinary_internal: 1,
            n: 100,
            sparsity_beta: 0.6,
            density_rho: 0.2,
            c_sigma: 0.6,
            pipeline: RegressionPipelineConfig::default(),
        }
    }

    pub fn idealized_binary(p: usize, k: usize) -> Scenario {
        Scenario::base(ScenarioKind::IdealizedBinary, p, k)
    }

    /// The degree-5-root benchmark; `k` true groups (5 matches the setting
    /// where only the root is non-null).
    pub fn idealized_nonbinary(k_internal: usize, k: usize) -> Scenario {
        let mut s = Scenario::base(ScenarioKind::IdealizedNonbinary, 5 + 9 * k_internal, k);
        s.nonbinary_internal = k_internal;
        s
    }

    pub fn means(p: usize, k: usize) -> Scenario {
        Scenario::base(ScenarioKind::Means3Regular, p, k)
    }

    pub fn regression(p: usize, k: usize, n: usize) -> Scenario {
        let mut s = Scenario::base(ScenarioKind::RegressionRare, p, k);
        s.n = n;
        s
    }
}

/// One `(family, alpha)` cell of a Monte-Carlo result.
#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub family: ThresholdFamily,
    pub alpha: f64,
    /// Mean false split proportion.
    pub fsr: f64,
    pub fsr_se: f64,
    /// Mean true positive proportion.
    pub power: f64,
    pub power_se: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub scenario: String,
    pub rows: Vec<McRow>,
}

enum ScenarioSetup {
    Idealized { tree: Tree, bstar: Vec<NodeId> },
    Means(MeansScenario),
    Regression(RegressionScenario),
}

impl ScenarioSetup {
    fn tree(&self) -> &Tree {
        match self {
            ScenarioSetup::Idealized { tree, .. } => tree,
            ScenarioSetup::Means(m) => &m.tree,
            ScenarioSetup::Regression(r) => &r.tree,
        }
    }

    fn bstar(&self) -> &[NodeId] {
        match self {
            ScenarioSetup::Idealized { bstar, .. } => bstar,
            ScenarioSetup::Means(m) => &m.bstar,
            ScenarioSetup::Regression(r) => &r.bstar,
        }
    }
}

fn build_setup(s: &Scenario) -> Result<ScenarioSetup> {
    match s.kind {
        ScenarioKind::IdealizedBinary => {
            let (tree, heights) = gen_binary_tree(s.p, s.seed)?;
            let bstar = cut_tree(&tree, s.k, Some(&heights))?;
            Ok(ScenarioSetup::Idealized { tree, bstar })
        }
        ScenarioKind::IdealizedNonbinary => {
            let tree = gen_nonbinary_tree(s.nonbinary_internal)?;
            let bstar = cut_tree(&tree, s.k, None)?;
            Ok(ScenarioSetup::Idealized { tree, bstar })
        }
        ScenarioKind::Means3Regular => Ok(ScenarioSetup::Means(gen_means_scenario(
            s.p, s.k, s.sigma, s.seed,
        )?)),
        ScenarioKind::RegressionRare => Ok(ScenarioSetup::Regression(gen_regression_scenario(
            s.p,
            s.k,
            s.sparsity_beta,
            s.density_rho,
            s.n,
            s.c_sigma,
            s.seed,
        )?)),
    }
}

/// The p-values of replicate `rep`, shared by every `(family, alpha)` cell.
fn replicate_pvalues(s: &Scenario, setup: &ScenarioSetup, rep: usize) -> Result<PValueAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(1 + rep as u64);
    match setup {
        ScenarioSetup::Idealized { tree, bstar } => {
            gen_idealized_pvalues(tree, bstar, s.beta_shape, &mut rng)
        }
        ScenarioSetup::Means(m) => {
            let obs = m.replicate(&mut rng)?;
            let anova = anova_assignment(&m.tree, &obs)?;
            if s.use_simes {
                simes_assignment(&m.tree, &anova)
            } else {
                Ok(anova)
            }
        }
        ScenarioSetup::Regression(r) => {
            let data = r.replicate(&mut rng)?;
            let mut cfg = s.pipeline.clone();
            cfg.seed = s.seed.wrapping_add(rep as u64);
            let (pv, _) = node_pvalues_regression(&r.tree, &data, &cfg)?;
            Ok(pv)
        }
    }
}

/// Run the experiment; see the module docs for the seeding scheme.
/// `progress`, when given, is called once per completed replicate with the
/// number finished so far.
pub fn run_monte_carlo_with_progress(
    s: &Scenario,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<McResult> {
    if s.reps == 0 {
        return Err(HatError::InvalidInput("need at least one replicate".into()));
    }
    if s.alphas.is_empty() || s.families.is_empty() {
        return Err(HatError::InvalidInput(
            "need at least one alpha and one family".into(),
        ));
    }
    for &a in &s.alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(HatError::InvalidInput(format!("alpha {a} outside (0, 1)")));
        }
    }
    let setup = build_setup(s)?;
    let truth = bstar_partition(setup.tree(), setup.bstar())?;

    let done = AtomicUsize::new(0);
    let per_rep: Vec<Vec<(f64, f64)>> = (0..s.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<(f64, f64)>> {
            let pv = replicate_pvalues(s, &setup, rep)?;
            let mut cells = Vec::with_capacity(s.families.len() * s.alphas.len());
            for &family in &s.families {
                for &alpha in &s.alphas {
                    let cfg = HatConfig::new(alpha, family);
                    let (_, achieved) = run_hat(setup.tree(), &pv, &cfg)?;
                    let (fsp, tpp) = fsp_tpp_groups(&truth, &achieved)?;
                    cells.push((fsp.to_f64(), tpp.to_f64()));
                }
            }
            if let Some(cb) = progress {
                cb(done.fetch_add(1, Ordering::Relaxed) + 1);
            }
            Ok(cells)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut cell = 0;
    for &family in &s.families {
        for &alpha in &s.alphas {
            let fsps: Vec<f64> = per_rep.iter().map(|r| r[cell].0).collect();
            let tpps: Vec<f64> = per_rep.iter().map(|r| r[cell].1).collect();
            let (fsr, fsr_se) = crate::testutil::mean_se(&fsps);
            let (power, power_se) = crate::testutil::mean_se(&tpps);
            rows.push(McRow {
                family,
                alpha,
                fsr,
                fsr_se,
                power,
                power_se,
                reps: s.reps,
            });
            cell += 1;
        }
    }
    Ok(McResult {
        scenario: s.kind.as_str().to_string(),
        rows,
    })
}

pub fn run_monte_carlo(s: &Scenario) -> Result<McResult> {
    run_monte_carlo_with_progress(s, None)
}
