//! Monte-Carlo distributional checks of the p-value constructors: null
//! uniformity of the ANOVA p-values, independence across disjoint nodes,
//! and super-uniformity of the Simes combination.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hat_core::pvalues::{
    anova_assignment, anova_pvalue, simes_combine, LeafObservations, PValueAssignment, Provenance,
};
use hat_core::sim::{balanced_regular_tree, standard_normal};
use hat_core::special::chi2_cdf;
use hat_core::testutil::{ks_critical, ks_statistic_uniform, mean_se};
use hat_core::tree::Tree;

/// Null datasets on the 27-leaf 3-regular tree: constant mean, sigma 0.3.
fn null_observations(rng: &mut ChaCha8Rng, p: usize, sigma: f64) -> LeafObservations {
    let y: Vec<f64> = (0..p).map(|_| 1.0 + sigma * standard_normal(rng)).collect();
    LeafObservations::new(y, sigma).unwrap()
}

#[test]
fn anova_null_pvalues_pass_ks_uniformity() {
    let tree = balanced_regular_tree(3, 27).unwrap();
    let node = tree.internal_nodes_at_depth(2).unwrap()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 10_000;
    let mut samples: Vec<f64> = (0..n)
        .map(|_| {
            let obs = null_observations(&mut rng, 27, 0.3);
            anova_pvalue(&tree, &obs, node).unwrap()
        })
        .collect();
    let d = ks_statistic_uniform(&mut samples);
    let crit = ks_critical(0.01, n);
    assert!(d < crit, "KS statistic {d:.5} >= critical {crit:.5}");
}

#[test]
fn anova_disjoint_nodes_independent() {
    // Two depth-2 siblings have disjoint leaf sets; their null p-values
    // should be uncorrelated and jointly uniform on a 3x3 grid.
    let tree = balanced_regular_tree(3, 27).unwrap();
    let d2 = tree.internal_nodes_at_depth(2).unwrap();
    let (a, b) = (d2[0], d2[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let n = 10_000;
    let mut pa = Vec::with_capacity(n);
    let mut pb = Vec::with_capacity(n);
    for _ in 0..n {
        let obs = null_observations(&mut rng, 27, 0.3);
        pa.push(anova_pvalue(&tree, &obs, a).unwrap());
        pb.push(anova_pvalue(&tree, &obs, b).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&pa), mean(&pb));
    let cov: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let va: f64 = pa.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let vb: f64 = pb.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let corr = cov / (va * vb).sqrt();
    // Correlation of independent uniforms has standard error ~ 1/sqrt(n).
    assert!(
        corr.abs() <= 3.0 / (n as f64).sqrt(),
        "correlation {corr:.5}"
    );

    // Chi-square goodness of fit on the 3x3 joint grid.
    let mut counts = [[0u64; 3]; 3];
    for (x, y) in pa.iter().zip(&pb) {
        let i = ((x * 3.0).floor() as usize).min(2);
        let j = ((y * 3.0).floor() as usize).min(2);
        counts[i][j] += 1;
    }
    let expect = n as f64 / 9.0;
    let stat: f64 = counts
        .iter()
        .flatten()
        .map(|&c| (c as f64 - expect).powi(2) / expect)
        .sum();
    let pvalue = 1.0 - chi2_cdf(stat, 8).unwrap();
    assert!(pvalue >= 0.01, "grid test stat {stat:.2}, p {pvalue:.4}");
}

#[test]
fn simes_super_uniform_under_full_null() {
    // Independent uniform node p-values combined at the root: the Simes
    // value's CDF must not exceed the uniform CDF (within Monte-Carlo
    // error) at any grid point.
    let tree = Tree::parse_newick("(((a,b)x,(c,d)y)l,((e,f)z,(g,h)w)r);").unwrap();
    let root = tree.root();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let n = 10_000;
    let sims: Vec<f64> = (0..n)
        .map(|_| {
            let pv = PValueAssignment::from_fn(&tree, Provenance::External, |_| Ok(rng.gen()))
                .unwrap();
            simes_combine(&tree, &pv, root).unwrap()
        })
        .collect();
    for k in 1..=19 {
        let t = k as f64 * 0.05;
        let hits: Vec<f64> = sims.iter().map(|&s| f64::from(s <= t)).collect();
        let (frac, se) = mean_se(&hits);
        assert!(
            frac <= t + 3.0 * se.max(1e-4),
            "P(simes <= {t:.2}) = {frac:.4} exceeds uniform"
        );
    }
}

#[test]
fn anova_assignment_matches_per_node_calls() {
    let tree = balanced_regular_tree(3, 27).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let obs = null_observations(&mut rng, 27, 0.5);
    let assignment = anova_assignment(&tree, &obs).unwrap();
    for u in tree.internal_nodes() {
        assert_eq!(
            assignment.get(u).unwrap(),
            anova_pvalue(&tree, &obs, u).unwrap()
        );
    }
}
