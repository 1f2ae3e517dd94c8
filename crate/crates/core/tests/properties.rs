use proptest::prelude::*;
use xcoref::composer::ClusterState;
use xcoref::{b_cubed, ceaf_e, conll_f1, muc, Clustering};

fn clustering(labels: &[u8]) -> Clustering {
    Clustering::from_labels(labels.iter().enumerate().map(|(i, &l)| (format!("m{i}"), l)))
}

fn two_labelings() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..12).prop_flat_map(|n| (prop::collection::vec(0u8..5, n), prop::collection::vec(0u8..5, n)))
}

proptest! {
    #[test]
    fn scores_stay_in_unit_interval((a, b) in two_labelings()) {
        let (p, g) = (clustering(&a), clustering(&b));
        for s in [muc(&p, &g).unwrap(), b_cubed(&p, &g).unwrap(), ceaf_e(&p, &g).unwrap()] {
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall((a, b) in two_labelings()) {
        let (p, g) = (clustering(&a), clustering(&b));
        for (x, y) in [
            (muc(&p, &g).unwrap(), muc(&g, &p).unwrap()),
            (b_cubed(&p, &g).unwrap(), b_cubed(&g, &p).unwrap()),
            (ceaf_e(&p, &g).unwrap(), ceaf_e(&g, &p).unwrap()),
        ] {
            prop_assert!((x.precision - y.recall).abs() < 1e-12);
            prop_assert!((x.recall - y.precision).abs() < 1e-12);
        }
    }

    #[test]
    fn relabelling_does_not_change_scores((a, b) in two_labelings(), shift in 1u8..50) {
        let g = clustering(&b);
        let renamed: Vec<u8> = a.iter().map(|l| l.wrapping_mul(7).wrapping_add(shift)).collect();
        prop_assert!((conll_f1(&clustering(&a), &g).unwrap() - conll_f1(&clustering(&renamed), &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cluster_rep_is_member_mean(members in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..20)) {
        let mut s = ClusterState::<f64>::new(3);
        let id = s.new_cluster(&members[0], "m0").unwrap();
        for (i, v) in members.iter().enumerate().skip(1) {
            s.add_member(id, v, &format!("m{i}")).unwrap();
        }
        let rep = s.cluster(id).unwrap().rep();
        for (d, r) in rep.iter().enumerate() {
            let mean = members.iter().map(|v| v[d]).sum::<f64>() / members.len() as f64;
            prop_assert!((r - mean).abs() < 1e-9);
        }
        prop_assert_eq!(s.num_mentions(), members.len());
    }
}
