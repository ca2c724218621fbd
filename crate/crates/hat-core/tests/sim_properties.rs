//! Distributional and structural properties of the Monte-Carlo driver.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hat_core::hat::{run_hat, HatConfig, ThresholdFamily};
use hat_core::metrics::split_counts_from_rejection;
use hat_core::pvalues::{PValueAssignment, Provenance};
use hat_core::sim::{
    cut_tree, gen_binary_tree, gen_idealized_pvalues, run_monte_carlo, Scenario,
};
use hat_core::testutil::mean_se;

#[test]
fn idealized_binary_fsr_controlled() {
    // 200 replicates at p = 100, K = 50: estimated FSR stays below the
    // target level within three standard errors.
    let mut s = Scenario::idealized_binary(100, 50);
    s.alphas = vec![0.2];
    s.reps = 200;
    s.seed = 9;
    let result = run_monte_carlo(&s).unwrap();
    let row = &result.rows[0];
    assert!(
        row.fsr <= 0.2 + 3.0 * row.fsr_se,
        "FSR {} (se {})",
        row.fsr,
        row.fsr_se
    );
    assert!(row.power > 0.0);
}

#[test]
fn binary_replicate_fsp_equals_set_ratio() {
    // On binary trees the per-replicate false split proportion equals
    // |F| / |T_rej| computed directly from the rejection set.
    let (tree, heights) = gen_binary_tree(60, 33).unwrap();
    let bstar = cut_tree(&tree, 20, Some(&heights)).unwrap();
    let truth = hat_core::metrics::bstar_partition(&tree, &bstar).unwrap();
    let group_of = truth.group_of();
    for rep in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        rng.set_stream(1 + rep);
        let pv = gen_idealized_pvalues(&tree, &bstar, 60.0, &mut rng).unwrap();
        let (rej, _) = run_hat(
            &tree,
            &pv,
            &HatConfig::new(0.25, ThresholdFamily::IndependentHarmonic),
        )
        .unwrap();
        let counts = split_counts_from_rejection(&tree, rej.rejected(), &bstar).unwrap();
        let f_size = rej
            .rejected()
            .nodes()
            .iter()
            .filter(|&&u| {
                let (start, len) = tree.leaf_range(u);
                group_of[start] == group_of[start + len - 1]
            })
            .count() as u64;
        assert_eq!(counts.v, f_size);
        if !rej.rejected().is_empty() {
            assert_eq!(counts.r, rej.rejected().len() as u64);
            let expect = f_size as f64 / rej.rejected().len() as f64;
            assert!((counts.fsp.to_f64() - expect).abs() < 1e-15);
        }
    }
}

#[test]
fn null_pvalues_exchangeable() {
    // Permuting the null nodes' p-values leaves the FSR estimate's
    // distribution unchanged: two estimates from the same draws, one
    // permuted, agree within Monte-Carlo error.
    let (tree, heights) = gen_binary_tree(80, 21).unwrap();
    let bstar = cut_tree(&tree, 30, Some(&heights)).unwrap();
    let truth = hat_core::metrics::bstar_partition(&tree, &bstar).unwrap();
    let group_of = truth.group_of();
    let null_nodes: Vec<usize> = tree
        .internal_nodes()
        .filter(|&u| {
            let (start, len) = tree.leaf_range(u);
            group_of[start] == group_of[start + len - 1]
        })
        .collect();

    let cfg = HatConfig::new(0.2, ThresholdFamily::IndependentHarmonic);
    let reps = 400u64;
    let mut plain = Vec::with_capacity(reps as usize);
    let mut permuted = Vec::with_capacity(reps as usize);
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        rng.set_stream(1 + rep);
        let pv = gen_idealized_pvalues(&tree, &bstar, 60.0, &mut rng).unwrap();

        let (_, achieved) = run_hat(&tree, &pv, &cfg).unwrap();
        let (fsp, _) = hat_core::metrics::fsp_tpp_groups(&truth, &achieved).unwrap();
        plain.push(fsp.to_f64());

        // Cyclic shift of the null values among the null nodes.
        let mut map = HashMap::new();
        for u in tree.internal_nodes() {
            map.insert(u, pv.get(u).unwrap());
        }
        let shifted: Vec<f64> = null_nodes
            .iter()
            .cycle()
            .skip(rep as usize % null_nodes.len())
            .take(null_nodes.len())
            .map(|&u| map[&u])
            .collect();
        for (&u, &v) in null_nodes.iter().zip(&shifted) {
            map.insert(u, v);
        }
        let pv2 = PValueAssignment::from_map(&tree, Provenance::External, &map).unwrap();
        let (_, achieved2) = run_hat(&tree, &pv2, &cfg).unwrap();
        let (fsp2, _) = hat_core::metrics::fsp_tpp_groups(&truth, &achieved2).unwrap();
        permuted.push(fsp2.to_f64());
    }
    let (m1, se1) = mean_se(&plain);
    let (m2, se2) = mean_se(&permuted);
    assert!(
        (m1 - m2).abs() <= 3.0 * (se1 + se2),
        "FSR estimates differ beyond MC error: {m1} vs {m2}"
    );
}

#[test]
fn idealized_pvalue_draws_are_independent_uniforms() {
    // Sanity on the generator itself: pooled null draws look uniform.
    let (tree, heights) = gen_binary_tree(50, 3).unwrap();
    let bstar = cut_tree(&tree, 10, Some(&heights)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = hat_core::metrics::bstar_partition(&tree, &bstar).unwrap();
    let group_of = truth.group_of();
    let mut nulls = Vec::new();
    for _ in 0..400 {
        let pv = gen_idealized_pvalues(&tree, &bstar, 60.0, &mut rng).unwrap();
        for u in tree.internal_nodes() {
            let (start, len) = tree.leaf_range(u);
            if group_of[start] == group_of[start + len - 1] {
                nulls.push(pv.get(u).unwrap());
            }
        }
    }
    let d = hat_core::testutil::ks_statistic_uniform(&mut nulls);
    let crit = hat_core::testutil::ks_critical(0.01, nulls.len());
    assert!(d < crit, "KS {d} >= {crit}");
}

#[test]
fn nonbinary_scenario_runs_both_families() {
    let mut s = Scenario::idealized_nonbinary(2, 5);
    s.reps = 40;
    s.alphas = vec![0.1, 0.2];
    s.families = vec![
        ThresholdFamily::IndependentHarmonic,
        ThresholdFamily::LynchGuo,
    ];
    let result = run_monte_carlo(&s).unwrap();
    assert_eq!(result.rows.len(), 4);
    assert_eq!(result.scenario, "idealized-nonbinary");
    for row in &result.rows {
        assert!(row.fsr >= 0.0 && row.fsr <= 1.0);
        assert!(row.power >= 0.0 && row.power <= 1.0);
    }
}

#[test]
fn means_scenario_with_simes_runs() {
    let mut s = Scenario::means(27, 3);
    s.reps = 30;
    s.alphas = vec![0.2];
    s.use_simes = true;
    s.families = vec![ThresholdFamily::Reshaped];
    let result = run_monte_carlo(&s).unwrap();
    let row = &result.rows[0];
    // Strong separation at sigma = 0.3: the three top groups split.
    assert!(row.power > 0.5, "power {}", row.power);
    assert!(row.fsr <= 0.2 + 3.0 * row.fsr_se);
}

#[test]
fn progress_callback_counts_replicates() {
    use std::sync::atomic::{AtomicUsize, Ordering};
    let mut s = Scenario::idealized_binary(20, 5);
    s.reps = 17;
    s.alphas = vec![0.2];
    let calls = AtomicUsize::new(0);
    let cb = |_done: usize| {
        calls.fetch_add(1, Ordering::Relaxed);
    };
    hat_core::sim::run_monte_carlo_with_progress(&s, Some(&cb)).unwrap();
    assert_eq!(calls.load(Ordering::Relaxed), 17);
}
