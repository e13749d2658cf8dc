mod common;

use dendroscan::clusim::{affinity, level_weights, similarity, transition_matrix, Alignment, HierarchyParams};
use dendroscan::rng::Stream;
use dendroscan::{Dendrogram, Error};
use proptest::prelude::*;

use common::*;

fn relabel(dend: &Dendrogram, map: impl Fn(&str) -> String) -> Dendrogram {
    let ids = dend.leaf_ids().iter().map(|s| map(s)).collect();
    let merges = dend.merges().iter().map(|m| (m.left, m.right, m.height)).collect();
    Dendrogram::new(ids, merges, dend.linkage()).unwrap()
}

/// Same tree with leaf slot `k` holding the old leaf `perm[k]`.
fn permute_leaves(dend: &Dendrogram, perm: &[usize]) -> Dendrogram {
    let n = perm.len();
    let mut slot = vec![0; n];
    for (k, &old) in perm.iter().enumerate() {
        slot[old] = k;
    }
    let ids = perm.iter().map(|&old| dend.leaf_ids()[old].clone()).collect();
    let remap = |node: usize| if node < n { slot[node] } else { node };
    let merges = dend.merges().iter().map(|m| (remap(m.left), remap(m.right), m.height)).collect();
    Dendrogram::new(ids, merges, dend.linkage()).unwrap()
}

fn params() -> impl Strategy<Value = HierarchyParams> {
    (-10.0f64..10.0, 0.05f64..0.95).prop_map(|(r, alpha)| HierarchyParams { r, alpha })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn affinity_rows_are_distributions(seed in any::<u64>(), n in 2usize..16, p in params()) {
        let dend = random_dendrogram(&mut Stream::new(seed), ids(n));
        let aff = affinity(&dend, &p).unwrap();
        prop_assert!(aff.residual < 1e-12);
        for row in &aff.p {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        for row in transition_matrix(&dend, p.r) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn transition_matches_definition(seed in any::<u64>(), n in 2usize..10, r in -10.0f64..10.0) {
        let dend = random_dendrogram(&mut Stream::new(seed), ids(n));
        let want = transition_oracle(&dend, r);
        for (i, row) in transition_matrix(&dend, r).iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                prop_assert!((v - want[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn power_iteration_matches_linear_solve(seed in any::<u64>(), n in 2usize..=6, p in params()) {
        let dend = random_dendrogram(&mut Stream::new(seed), ids(n));
        let got = affinity(&dend, &p).unwrap();
        let want = ppr_oracle(&transition_oracle(&dend, p.r), p.alpha);
        for (g, w) in got.p.iter().zip(&want) {
            for (x, y) in g.iter().zip(w) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn similarity_identity_symmetry_range(seed in any::<u64>(), n in 2usize..14, p in params()) {
        let mut rng = Stream::new(seed);
        let a = random_dendrogram(&mut rng, ids(n));
        let order = shuffled(&mut rng, ids(n));
        let b = random_dendrogram(&mut rng, order);
        prop_assert!((similarity(&a, &a, &p, Alignment::Strict).unwrap().value - 1.0).abs() <= 1e-12);
        let ab = similarity(&a, &b, &p, Alignment::Strict).unwrap();
        let ba = similarity(&b, &a, &p, Alignment::Strict).unwrap();
        prop_assert!((ab.value - ba.value).abs() <= 1e-12);
        prop_assert!(ab.per_element.iter().all(|(_, s)| (0.0..=1.0).contains(s)));
        let mean = ab.per_element.iter().map(|(_, s)| s).sum::<f64>() / n as f64;
        prop_assert!((mean - ab.value).abs() <= 1e-12);
    }

    #[test]
    fn label_equivariance(seed in any::<u64>(), n in 2usize..12, p in params()) {
        let mut rng = Stream::new(seed);
        let a = random_dendrogram(&mut rng, ids(n));
        let b = random_dendrogram(&mut rng, ids(n));
        let rename = |s: &str| format!("renamed_{}", s.trim_start_matches('s').parse::<usize>().unwrap() * 7 % 101);
        let before = similarity(&a, &b, &p, Alignment::Strict).unwrap().value;
        let after = similarity(&relabel(&a, rename), &relabel(&b, rename), &p, Alignment::Strict).unwrap().value;
        prop_assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn similarity_bit_identical_under_leaf_reordering(seed in any::<u64>(), n in 2usize..12, p in params()) {
        let mut rng = Stream::new(seed);
        let a = random_dendrogram(&mut rng, ids(n));
        let b = random_dendrogram(&mut rng, ids(n));
        let base = similarity(&a, &b, &p, Alignment::Strict).unwrap();
        let perm: Vec<usize> = shuffled(&mut rng, ids(n)).iter().map(|s| s[1..].parse().unwrap()).collect();
        let moved = permute_leaves(&a, &perm);
        prop_assert_eq!(similarity(&moved, &b, &p, Alignment::Strict).unwrap(), base);
    }

    #[test]
    fn level_weights_softmax(seed in any::<u64>(), n in 2usize..12, r in -10.0f64..10.0) {
        let dend = random_dendrogram(&mut Stream::new(seed), ids(n));
        for id in dend.leaf_ids() {
            let w = level_weights(&dend, id, r).unwrap();
            prop_assert!((w.iter().map(|x| x.weight).sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert_eq!(w.first().unwrap().depth, 1.0);
            prop_assert_eq!(w.last().unwrap().depth, 0.0);
            prop_assert_eq!(w.last().unwrap().node, dend.root());
        }
    }
}

#[test]
fn two_leaf_weights_closed_form() {
    let dend = Dendrogram::new(ids(2), vec![(0, 1, 0.5)], dendroscan::Linkage::Single).unwrap();
    let w = level_weights(&dend, "s0", -5.0).unwrap();
    let leaf = (-5.0f64).exp() / (1.0 + (-5.0f64).exp());
    assert!((w[0].weight - leaf).abs() < 1e-15);
    assert!((w[1].weight - (1.0 - leaf)).abs() < 1e-15);
    assert!((w[1].weight - 0.9933).abs() < 5e-5);
}

#[test]
fn mismatched_elements_strict_vs_intersect() {
    let mut rng = Stream::new(3);
    let a = random_dendrogram(&mut rng, ids(6));
    let b = random_dendrogram(&mut rng, ids(5));
    let p = HierarchyParams::default();
    match similarity(&a, &b, &p, Alignment::Strict) {
        Err(Error::ElementMismatch { only_a, only_b }) => {
            assert_eq!(only_a, vec!["s5".to_string()]);
            assert!(only_b.is_empty());
        }
        other => panic!("expected mismatch, got {other:?}"),
    }
    let s = similarity(&a, &b, &p, Alignment::Intersect).unwrap();
    assert_eq!(s.aligned_elements(), 5);
}
