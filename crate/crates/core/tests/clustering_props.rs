mod common;

use common::*;
use polyrom::clustering::{activation_rates, kmeans, select_pseudo_labels};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn points(seed: u64, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut g = rng(seed);
    (0..count).map(|_| random_vec(&mut g, dim)).collect()
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn kmeans_is_deterministic_and_monotone(seed in any::<u64>(), count in 4usize..40, dim in 1usize..4, k in 1usize..4) {
        let pts = points(seed, count, dim);
        let a = kmeans(&pts, k, seed).unwrap();
        prop_assert_eq!(&a, &kmeans(&pts, k, seed).unwrap());
        for w in a.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        for (p, &l) in pts.iter().zip(&a.labels) {
            let d = |c: &Vec<f64>| p.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            let own = d(&a.centroids[l]);
            prop_assert!(a.centroids.iter().all(|c| own <= d(c) + 1e-12));
        }
    }

    #[test]
    fn kmeans_permutation_invariant_on_separated_sets(seed in any::<u64>(), k in 2usize..4, per in 3usize..8) {
        let mut g = rng(seed);
        let mut pts = Vec::new();
        for c in 0..k {
            for _ in 0..per {
                let jitter = random_vec(&mut g, 2);
                pts.push(vec![10.0 * c as f64 + 0.1 * jitter[0], 0.1 * jitter[1]]);
            }
        }
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.shuffle(&mut g);
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| pts[i].clone()).collect();
        let a = kmeans(&pts, k, seed).unwrap();
        let b = kmeans(&shuffled, k, seed ^ 1).unwrap();
        // same partition up to relabelling
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let same_a = a.labels[order[i]] == a.labels[order[j]];
                let same_b = b.labels[i] == b.labels[j];
                prop_assert_eq!(same_a, same_b);
            }
        }
        prop_assert!((a.inertia - b.inertia).abs() < 1e-9);
    }

    #[test]
    fn pseudo_labels_are_one_hot_subsets(seed in any::<u64>(), count in 4usize..40, k in 1usize..4) {
        let pts = points(seed, count, 3);
        let km = kmeans(&pts, k, seed).unwrap();
        let sel = select_pseudo_labels(&pts, &km).unwrap();
        let mut seen = std::collections::HashSet::new();
        for (idx, label) in &sel.entries {
            prop_assert!(*idx < count && seen.insert(*idx));
            prop_assert_eq!(label.len(), k);
            prop_assert_eq!(label.iter().filter(|&&x| x == 1.0).count(), 1);
            prop_assert_eq!(label.iter().filter(|&&x| x == 0.0).count(), k - 1);
            prop_assert_eq!(label[km.labels[*idx]], 1.0);
        }
    }

    #[test]
    fn activation_rates_ignore_column_order(seed in any::<u64>(), len in 1usize..30, r in 1usize..6) {
        let mut g = rng(seed);
        let path: Vec<Vec<f64>> = (0..len).map(|_| random_simplex(&mut g, r)).collect();
        let rates = activation_rates(&path).unwrap();
        prop_assert!(on_simplex(&rates, 1e-12));
        let mut shuffled = path.clone();
        shuffled.shuffle(&mut g);
        let again = activation_rates(&shuffled).unwrap();
        prop_assert!(rates.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
