use lampinn::affinity::{adjusted_rand_index, hungarian_disagreement, kmeans, KMeansOptions};
use lampinn::checkpoint::{Checkpoint, Model};
use lampinn::lam::split_pretrained;
use lampinn::net::{Activation, DenseNet};
use lampinn::stats::wilcoxon_signed_rank;
use lampinn::tasks::Family;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoints_round_trip(widths in prop::collection::vec(1usize..8, 2..5), k in 1usize..4, seed: u64) {
        let mut sizes = vec![2];
        sizes.extend(&widths);
        sizes.push(1);
        let net = DenseNet::new(&sizes, Activation::Tanh, seed).unwrap();
        let split = 1 + (seed as usize) % (sizes.len() - 2);
        let m = split_pretrained(&net, split, k, seed ^ 1).unwrap();
        let c = Checkpoint {
            family: Family::Helmholtz2d,
            model: Model::Modular(m),
            seeds: vec![seed],
            assignments: (0..k).collect(),
        };
        prop_assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn ari_is_symmetric_and_label_invariant(a in prop::collection::vec(0usize..3, 6..20), shift in 1usize..3) {
        let b: Vec<usize> = a.iter().rev().copied().collect();
        let x = adjusted_rand_index(&a, &b).unwrap();
        let y = adjusted_rand_index(&b, &a).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
        let relabeled: Vec<usize> = a.iter().map(|l| (l + shift) % 3).collect();
        prop_assert!((adjusted_rand_index(&a, &relabeled).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(hungarian_disagreement(&a, &relabeled).unwrap(), 0.0);
    }

    #[test]
    fn kmeans_labels_are_valid(points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 6..30), k in 1usize..5, seed: u64) {
        let p: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
        let c = kmeans(&p, k, seed, KMeansOptions::default()).unwrap();
        prop_assert_eq!(c.assignments.len(), p.len());
        prop_assert!(c.assignments.iter().all(|&l| l < k));
        prop_assert!(c.objective >= 0.0);
        let again = kmeans(&p, k, seed, KMeansOptions::default()).unwrap();
        prop_assert_eq!(c, again);
    }

    #[test]
    fn wilcoxon_p_value_is_a_probability(d in prop::collection::vec(-5.0f64..5.0, 5..40)) {
        let zeros = vec![0.0; d.len()];
        if d.iter().filter(|v| **v != 0.0).count() >= 5 {
            let r = wilcoxon_signed_rank(&d, &zeros).unwrap();
            prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
            prop_assert!((r.w_plus + r.w_minus - (r.n * (r.n + 1)) as f64 / 2.0).abs() < 1e-9);
        }
    }
}
