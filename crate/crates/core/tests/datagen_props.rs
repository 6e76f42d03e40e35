mod common;

use common::*;
use polyrom::datagen::{assemble_burgers, burgers_initial_state, check_linearity, integrate, BurgersConvection, CoefficientMap};
use proptest::prelude::*;

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn convection_is_linear_in_its_argument(n in 8usize..40, seed in any::<u64>()) {
        let map = BurgersConvection { n };
        prop_assert!(check_linearity(&map, 6, seed) < 1e-13);
    }

    #[test]
    fn integration_keeps_shape_finiteness_and_decays(n in 8usize..48, steps in 1usize..80, nu in 0.005f64..0.1, seed in any::<u64>()) {
        let sys = assemble_burgers(n, nu, 1.0).unwrap();
        let v0 = burgers_initial_state(sys.burgers.as_ref().unwrap(), seed);
        let set = integrate(&sys, &v0, 1e-3, steps).unwrap();
        prop_assert_eq!(set.states.shape(), (n, steps + 1));
        prop_assert!(set.states.is_finite());
        let energy: Vec<f64> = set.snapshots().iter().map(|v| set.weight.inner(v, v).unwrap()).collect();
        for w in energy.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-14));
        }
    }

    #[test]
    fn convection_does_no_work(n in 8usize..40, seed in any::<u64>()) {
        let mut g = rng(seed);
        let v = random_vec(&mut g, n);
        let conv = BurgersConvection { n }.apply(&v, &v);
        let work: f64 = conv.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert!(work.abs() < 1e-12);
    }
}
