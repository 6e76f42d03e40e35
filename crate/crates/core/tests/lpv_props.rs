mod common;

use common::{config, micro_model, random_simplex, random_vec, rng};
use polyrom::datagen::assemble_burgers;
use polyrom::error::Result;
use polyrom::linalg::DenseMatrix;
use polyrom::lpv::{build_vertices, lpv_coefficient, lpv_simulate, sdc_from_burgers, Reconstructor};
use proptest::prelude::*;

struct Exact;

impl Reconstructor for Exact {
    fn reconstruct_state(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }
}

fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.max_abs_diff(b) / b.as_slice().iter().fold(1e-300_f64, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn vertex_expansion_matches_coefficient(seed in any::<u64>(), n in 8usize..20, r in 1usize..4, k in 1usize..4) {
        let model = micro_model(n, r, k, seed);
        let sdc = sdc_from_burgers(&assemble_burgers(n, 0.02, 1.0).unwrap()).unwrap();
        let p = model.polytope().unwrap();
        let lpv = build_vertices(&sdc, &p).unwrap();
        prop_assert_eq!(lpv.vertex_count(), r * k);
        let mut g = rng(seed ^ 0x5eed);
        for _ in 0..5 {
            let zeta = random_simplex(&mut g, r * k);
            let lhs = lpv_coefficient(&lpv, &zeta).unwrap();
            let rhs = sdc.coefficient(&p.point(&zeta)).unwrap();
            prop_assert!(rel(&lhs, &rhs) <= 1e-10);
        }
    }

    #[test]
    fn decoded_state_uses_kron_coordinates(seed in any::<u64>(), r in 1usize..4, k in 1usize..4) {
        let n = 12;
        let model = micro_model(n, r, k, seed);
        let sdc = sdc_from_burgers(&assemble_burgers(n, 0.02, 1.0).unwrap()).unwrap();
        let lpv = build_vertices(&sdc, &model.polytope().unwrap()).unwrap();
        let mut g = rng(seed);
        let v = random_vec(&mut g, n);
        let rho = model.encode(&v).unwrap();
        let zeta = model.decode_coords(&rho).unwrap();
        let lhs = sdc.coefficient(&model.decode(&rho).unwrap()).unwrap();
        let rhs = lpv_coefficient(&lpv, &zeta).unwrap();
        prop_assert!(rel(&rhs, &lhs) <= 1e-10);
    }

    #[test]
    fn coefficient_is_affine(seed in any::<u64>(), n in 8usize..20, t in 0.0f64..1.0) {
        let sdc = sdc_from_burgers(&assemble_burgers(n, 0.02, 1.0).unwrap()).unwrap();
        let mut g = rng(seed);
        let (a, b) = (random_vec(&mut g, n), random_vec(&mut g, n));
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let mut combo = DenseMatrix::zeros(n, n);
        combo.add_scaled(t, &sdc.coefficient(&a).unwrap()).unwrap();
        combo.add_scaled(1.0 - t, &sdc.coefficient(&b).unwrap()).unwrap();
        prop_assert!(sdc.coefficient(&mix).unwrap().max_abs_diff(&combo) <= 1e-12);
    }

    #[test]
    fn simulation_starts_on_reference(seed in any::<u64>(), steps in 1usize..20) {
        let n = 16;
        let sdc = sdc_from_burgers(&assemble_burgers(n, 0.02, 1.0).unwrap()).unwrap();
        let model = micro_model(n, 2, 2, seed);
        let v0: Vec<f64> = (0..n).map(|i| 0.5 * (i as f64 * 0.3).sin()).collect();
        let run = lpv_simulate(&sdc, &model, &v0, 1e-3, steps).unwrap();
        prop_assert_eq!(run.deviation.len(), steps + 1);
        prop_assert_eq!(run.deviation[0], 0.0);
        prop_assert!(run.deviation.iter().all(|d| d.is_finite()));
        let exact = lpv_simulate(&sdc, &Exact, &v0, 1e-3, steps).unwrap();
        prop_assert!(exact.deviation.iter().all(|&d| d == 0.0));
        prop_assert_eq!(&exact.states, &exact.reference);
    }
}
