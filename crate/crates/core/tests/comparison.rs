use proptest::prelude::*;
use riesz_core::operators::{
    compare_pointwise, dyadic_riesz, riesz_reference, upper_comparison_constant, KernelMode,
};
use riesz_core::{Mesh, StepFunction};

fn function() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0..10.0f64], 32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dyadic_operators_sit_below_the_reference(
        vals in function(),
        alpha in prop::sample::select(vec![0.25, 0.5, 0.75]),
        shift in 0u8..2,
    ) {
        let m = Mesh::new(1, 0, 5, 0).unwrap();
        let f = StepFunction::from_cells(&m, &vals).unwrap();
        prop_assume!(!f.is_zero());
        let c1 = upper_comparison_constant(1, alpha);
        let d = dyadic_riesz(&f, alpha, shift).unwrap();
        for mode in [KernelMode::Lower, KernelMode::Midpoint, KernelMode::Upper] {
            let r = riesz_reference(&f, alpha, mode).unwrap();
            let c = compare_pointwise(&d, &r).unwrap();
            prop_assert_eq!(c.violations, 0);
            prop_assert!(c.max_ratio <= c1, "{:?}: {} > {}", mode, c.max_ratio, c1);
        }
    }

    #[test]
    fn kernel_modes_bracket(vals in function(), alpha in 0.1..0.9f64) {
        let m = Mesh::new(1, 0, 5, 0).unwrap();
        let f = StepFunction::from_cells(&m, &vals).unwrap();
        let lo = riesz_reference(&f, alpha, KernelMode::Lower).unwrap();
        let mid = riesz_reference(&f, alpha, KernelMode::Midpoint).unwrap();
        let hi = riesz_reference(&f, alpha, KernelMode::Upper).unwrap();
        for ((a, b), c) in lo.values().iter().zip(mid.values()).zip(hi.values()) {
            prop_assert!(*a <= *b * (1.0 + 1e-12) && *b <= *c * (1.0 + 1e-12));
        }
    }
}
