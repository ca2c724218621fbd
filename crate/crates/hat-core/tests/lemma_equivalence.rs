//! Structural identities between the group form and the barrier form of
//! the split-error metrics, and between the degree-count form and the
//! group-count form on trees. All comparisons are exact (integer
//! cross-multiplication), with independent counting oracles on the group
//! side.

use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hat_core::metrics::{
    barriers_to_partition, bstar_partition, fdp_tpp_barrier, fsp_tpp_groups,
    partition_to_barriers, rejection_to_partition, split_counts_from_rejection, BarrierVector,
    Frac, Partition, RejectedSet,
};
use hat_core::testutil::{random_bstar, random_rejection, random_tree};
use hat_core::tree::{NodeId, Tree};

/// Group-counting oracle: the number of intersecting (true, achieved)
/// pairs computed by explicit set intersection over leaf-index sets.
fn overlap_count(truth: &Partition, achieved: &Partition) -> u64 {
    let to_sets = |p: &Partition| -> Vec<HashSet<usize>> {
        p.ranges()
            .iter()
            .map(|&(s, l)| (s..s + l).collect())
            .collect()
    };
    let ts = to_sets(truth);
    let as_ = to_sets(achieved);
    let mut n = 0;
    for a in &ts {
        for b in &as_ {
            if !a.is_disjoint(b) {
                n += 1;
            }
        }
    }
    n
}

/// FSP/TPP straight from the defining sums, with the K = 1 and M = 1
/// conventions.
fn group_oracle(truth: &Partition, achieved: &Partition) -> (Frac, Frac) {
    let n = overlap_count(truth, achieved);
    let k = truth.n_groups() as u64;
    let m = achieved.n_groups() as u64;
    let fsp = Frac::new(n - k, (m - 1).max(1));
    let tpp = if k == 1 {
        Frac::new(1, 1)
    } else {
        Frac::new(k - 1 - (n - m), k - 1)
    };
    (fsp, tpp)
}

fn barrier_from_mask(mask: u64, len: usize) -> BarrierVector {
    BarrierVector::new((0..len).map(|i| mask >> i & 1 == 1).collect())
}

#[test]
fn group_form_equals_barrier_form_exhaustive() {
    // Every pair of splittings of up to 8 leaves.
    let mut checked = 0u64;
    for p in 2..=8usize {
        let len = p - 1;
        for tm in 0u64..1 << len {
            let truth_b = barrier_from_mask(tm, len);
            let truth_p = barriers_to_partition(&truth_b);
            for am in 0u64..1 << len {
                let ach_b = barrier_from_mask(am, len);
                let ach_p = barriers_to_partition(&ach_b);
                let (fdp, tppb) = fdp_tpp_barrier(&truth_b, &ach_b).unwrap();
                let (fsp, tpp) = fsp_tpp_groups(&truth_p, &ach_p).unwrap();
                assert_eq!(fsp, fdp, "p={p} truth={truth_b} achieved={ach_b}");
                assert_eq!(tpp, tppb, "p={p} truth={truth_b} achieved={ach_b}");
                let (fsp_o, tpp_o) = group_oracle(&truth_p, &ach_p);
                assert_eq!(fsp, fsp_o);
                assert_eq!(tpp, tpp_o);
                checked += 1;
            }
        }
    }
    assert!(checked > 20_000);
}

#[test]
fn group_form_equals_barrier_form_random_p64() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let p = rng.gen_range(2..=64usize);
        let truth_b = BarrierVector::new((0..p - 1).map(|_| rng.gen_bool(0.4)).collect());
        let ach_b = BarrierVector::new((0..p - 1).map(|_| rng.gen_bool(0.4)).collect());
        let (fdp, tppb) = fdp_tpp_barrier(&truth_b, &ach_b).unwrap();
        let (fsp, tpp) = fsp_tpp_groups(
            &barriers_to_partition(&truth_b),
            &barriers_to_partition(&ach_b),
        )
        .unwrap();
        assert_eq!(fsp, fdp);
        assert_eq!(tpp, tppb);
    }
}

proptest! {
    #[test]
    fn barrier_partition_round_trip(bits in proptest::collection::vec(any::<bool>(), 1..80)) {
        let b = BarrierVector::new(bits);
        let p = barriers_to_partition(&b);
        prop_assert_eq!(partition_to_barriers(&p), b);
    }

    #[test]
    fn partition_barrier_round_trip(sizes in proptest::collection::vec(1usize..6, 1..20)) {
        let part = Partition::from_sizes(sizes).unwrap();
        let back = barriers_to_partition(&partition_to_barriers(&part));
        prop_assert_eq!(back, part);
    }
}

struct Triple {
    tree: Tree,
    rejected: RejectedSet,
    bstar: Vec<NodeId>,
}

fn random_triple(rng: &mut ChaCha8Rng, max_p: usize, binary: bool) -> Triple {
    let p = rng.gen_range(2..=max_p);
    let max_deg = if binary { 2 } else { 4 };
    let tree = random_tree(rng, p, max_deg);
    let nodes = random_rejection(rng, &tree, 0.7);
    let rejected = RejectedSet::new(&tree, nodes).unwrap();
    let bstar = random_bstar(rng, &tree, 0.4);
    Triple {
        tree,
        rejected,
        bstar,
    }
}

#[test]
fn degree_counts_match_group_counts() {
    // 1000 random (tree, rejection subtree, true aggregation) triples.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let t = random_triple(&mut rng, 15, false);
        let counts = split_counts_from_rejection(&t.tree, &t.rejected, &t.bstar).unwrap();
        let truth = bstar_partition(&t.tree, &t.bstar).unwrap();
        let achieved = rejection_to_partition(&t.tree, &t.rejected);
        let (fsp_o, tpp_o) = group_oracle(&truth, &achieved);
        assert_eq!(counts.fsp, fsp_o);
        assert_eq!(counts.tpp, tpp_o);
        // M - 1 = R whenever the rejection is nonempty.
        if !t.rejected.is_empty() {
            assert_eq!(counts.r, achieved.n_groups() as u64 - 1);
        } else {
            assert_eq!(counts.r, 0);
        }
    }
}

#[test]
fn binary_counts_reduce_to_set_sizes() {
    // On binary trees V = |F| and R = |T_rej|, with the false-rejection
    // set F computed independently via leaf-set inclusion.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut nonempty = 0;
    for _ in 0..500 {
        let t = random_triple(&mut rng, 15, true);
        let counts = split_counts_from_rejection(&t.tree, &t.rejected, &t.bstar).unwrap();
        let group_sets: Vec<HashSet<NodeId>> = t
            .bstar
            .iter()
            .map(|&u| t.tree.leaves_under(u).unwrap().iter().copied().collect())
            .collect();
        let f_size = t
            .rejected
            .nodes()
            .iter()
            .filter(|&&u| {
                let leaves: HashSet<NodeId> =
                    t.tree.leaves_under(u).unwrap().iter().copied().collect();
                group_sets.iter().any(|g| leaves.is_subset(g))
            })
            .count() as u64;
        assert_eq!(counts.v, f_size);
        if !t.rejected.is_empty() {
            assert_eq!(counts.r, t.rejected.len() as u64);
            nonempty += 1;
        }
    }
    assert!(nonempty > 100);
}
