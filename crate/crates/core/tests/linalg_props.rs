mod common;

use common::*;
use nalgebra::DMatrix;
use polyrom::datagen::{build_grid_interpolator, GridExtent, SnapshotSet};
use polyrom::linalg::{m_norm, pod_basis, pod_project_reconstruct, truncated_svd, PodModel};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn m_norm_is_a_norm(n in 1usize..12, seed in any::<u64>(), a in -5.0f64..5.0, dense in any::<bool>()) {
        let mut g = rng(seed);
        let w = if dense { random_dense_weight(&mut g, n) } else { random_diag_weight(&mut g, n) };
        let x = random_vec(&mut g, n);
        let y = random_vec(&mut g, n);
        let sum: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
        let nx = m_norm(&x, &w).unwrap();
        prop_assert!(m_norm(&sum, &w).unwrap() <= nx + m_norm(&y, &w).unwrap() + 1e-10);
        let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
        prop_assert!((m_norm(&scaled, &w).unwrap() - a.abs() * nx).abs() <= 1e-10 * (1.0 + nx));
    }

    #[test]
    fn truncated_svd_matches_oracle(rows in 2usize..10, cols in 2usize..10, r in 1usize..6, seed in any::<u64>()) {
        let r = r.min(rows).min(cols);
        let mut g = rng(seed);
        let x = random_matrix(&mut g, rows, cols);
        let svd = truncated_svd(&x, r).unwrap();
        let ortho = |m: &polyrom::linalg::DenseMatrix| m.t_matmul(m).unwrap().max_abs_diff(&polyrom::linalg::DenseMatrix::identity(r));
        prop_assert!(ortho(&svd.left) < 1e-10);
        prop_assert!(ortho(&svd.right) < 1e-10);
        prop_assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let oracle = DMatrix::from_row_slice(rows, cols, x.as_slice()).svd(false, false);
        let mut sv: Vec<f64> = oracle.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in svd.singular_values.iter().zip(&sv) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b));
        }
        let resid = x.add(&svd.reconstruct().scale(-1.0)).unwrap().frobenius_norm();
        let tail: f64 = sv[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        prop_assert!((resid - tail).abs() < 1e-9 * (1.0 + tail));
    }

    #[test]
    fn pod_orthonormal_and_idempotent(n in 4usize..14, t in 6usize..20, r in 1usize..4, seed in any::<u64>()) {
        let mut g = rng(seed);
        let states = random_matrix(&mut g, n, t);
        let w = random_diag_weight(&mut g, n);
        let data = SnapshotSet::new(states, (0..t).map(|i| i as f64).collect(), w.clone(), t / 2).unwrap();
        let basis = pod_basis(&data, r).unwrap();
        let pod = PodModel { basis: basis.clone(), weight: w.clone() };
        prop_assert!(pod.orthonormality_defect() < 1e-10);
        let v = random_vec(&mut g, n);
        let once = pod_project_reconstruct(&basis, &w, &v).unwrap().1;
        let twice = pod_project_reconstruct(&basis, &w, &once).unwrap().1;
        prop_assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn grid_rows_sum_to_one(nx in 2usize..8, ny in 2usize..8, h in 2usize..10, w in 2usize..10, seed in any::<u64>()) {
        let mut g = rng(seed);
        let mut axis = |k: usize| {
            let mut a: Vec<f64> = (0..k).map(|i| 2.0 * i as f64 / (k - 1) as f64 - 1.0 + if i > 0 && i + 1 < k { g.random_range(-0.2..0.2) / k as f64 } else { 0.0 }).collect();
            a.sort_by(|p, q| p.partial_cmp(q).unwrap());
            a
        };
        let xs = axis(nx);
        let ys = axis(ny);
        let sources: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        let map = build_grid_interpolator(&sources, (2, h, w), GridExtent::unit_square()).unwrap();
        for s in map.operator.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn grid_sparsity_is_small_at_desk_scale() {
    let k = 64;
    let sources: Vec<(f64, f64)> = (0..k * k).map(|i| (2.0 * (i % k) as f64 / (k - 1) as f64 - 1.0, 2.0 * (i / k) as f64 / (k - 1) as f64 - 1.0)).collect();
    let map = build_grid_interpolator(&sources, (2, 32, 32), GridExtent::unit_square()).unwrap();
    assert!(map.sparsity() < 0.01, "sparsity {}", map.sparsity());
}
