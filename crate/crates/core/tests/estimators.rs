use proptest::prelude::*;
use riesz_core::normest::{
    dyadic_testing, sawyer_cube_value, strong_norm_lower, strong_ratio, weak_norm_lower,
    weak_ratio, KernelTableHandle, SeedSet,
};
use riesz_core::operators::{KernelMode, SparseOperator};
use riesz_core::sparse::build_sparse;
use riesz_core::{DyadicCube, ExponentTuple, Mesh, StepFunction};

fn mesh() -> Mesh {
    Mesh::new(1, 0, 5, 4).unwrap()
}

fn cells(zero_ok: bool) -> impl Strategy<Value = Vec<f64>> {
    let lo = if zero_ok { 0.0 } else { 0.05 };
    prop::collection::vec(prop_oneof![1 => Just(lo), 4 => lo..10.0f64], 32)
}

fn exponents() -> impl Strategy<Value = ExponentTuple> {
    prop_oneof![
        Just(ExponentTuple::sobolev(1, 0.5, 4.0 / 3.0).unwrap()),
        Just(ExponentTuple::sobolev(1, 0.25, 2.0).unwrap()),
        Just(ExponentTuple::new(1, 0.5, 1.5, 2.5).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimator_invariants(u in cells(true), s in cells(false), e in exponents(), seed in any::<u64>()) {
        let m = mesh();
        let u = StepFunction::from_cells(&m, &u).unwrap();
        let sigma = StepFunction::from_cells(&m, &s).unwrap();
        prop_assume!(!u.is_zero());
        let (family, _) = build_sparse(&sigma, 0, e.alpha).unwrap();
        let testing = dyadic_testing(&u, &sigma, &e, &family).unwrap();
        let op = SparseOperator { alpha: e.alpha, family: family.clone() };
        let seeds = SeedSet::standard(&family, Some(&testing), seed);
        let strong = strong_norm_lower(&u, &sigma, &e, &op, &seeds).unwrap();
        let weak = weak_norm_lower(&u, &sigma, &e, &op, &seeds, Some(&strong)).unwrap();

        prop_assert!(strong.history.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(*strong.history.last().unwrap(), strong.value);
        let f = strong.witness_f.as_ref().unwrap();
        let at = strong_ratio(&op, &u, &sigma, &e, f).unwrap().unwrap();
        prop_assert!((at - strong.value).abs() <= 1e-10 * strong.value);

        prop_assert!(testing.direct <= strong.value * (1.0 + 1e-8), "{} > {}", testing.direct, strong.value);

        let g = weak.witness_f.as_ref().unwrap();
        for h in [f, g] {
            let w = weak_ratio(&op, &u, &sigma, &e, h).unwrap().unwrap();
            let s = strong_ratio(&op, &u, &sigma, &e, h).unwrap().unwrap();
            prop_assert!(w <= s * (1.0 + 1e-12));
        }
        prop_assert!(weak.value <= strong.value * (1.0 + 1e-8));
    }

    #[test]
    fn testing_duality_and_scaling(u in cells(false), s in cells(false), e in exponents(), c in 0.01..100.0f64) {
        let m = mesh();
        let u = StepFunction::from_cells(&m, &u).unwrap();
        let sigma = StepFunction::from_cells(&m, &s).unwrap();
        let (family, _) = build_sparse(&sigma, 0, e.alpha).unwrap();
        let t = dyadic_testing(&u, &sigma, &e, &family).unwrap();

        let swapped = ExponentTuple::new(1, e.alpha, e.q_prime(), e.p_prime()).unwrap();
        let ts = dyadic_testing(&sigma, &u, &swapped, &family).unwrap();
        prop_assert!((ts.direct - t.dual).abs() <= 1e-12 * t.dual);
        prop_assert!((ts.dual - t.direct).abs() <= 1e-12 * t.direct);

        let tc = dyadic_testing(&u.scale(c).unwrap(), &sigma, &e, &family).unwrap();
        let expect = t.direct * c.powf(1.0 / e.q);
        prop_assert!((tc.direct - expect).abs() <= 1e-12 * expect);
    }
}

#[test]
fn single_cube_testing_equals_norm() {
    let m = Mesh::new(1, 0, 4, 0).unwrap();
    let one = StepFunction::constant(&m, 1.0).unwrap();
    let e = ExponentTuple::new(1, 0.5, 2.0, 2.0).unwrap();
    let family = riesz_core::SparseFamily::new(&m, 0, [DyadicCube::new(1, 0, 0, &[0])]).unwrap();
    let t = dyadic_testing(&one, &one, &e, &family).unwrap();
    assert!((t.direct - 1.0).abs() < 1e-12 && (t.dual - 1.0).abs() < 1e-12);
    let op = SparseOperator {
        alpha: 0.5,
        family: family.clone(),
    };
    let strong = strong_norm_lower(
        &one,
        &one,
        &e,
        &op,
        &SeedSet::standard(&family, Some(&t), 0),
    )
    .unwrap();
    assert!((strong.value - 1.0).abs() < 1e-10);
}

#[test]
fn zero_sigma_is_degenerate() {
    let m = mesh();
    let e = ExponentTuple::sobolev(1, 0.5, 4.0 / 3.0).unwrap();
    let one = StepFunction::constant(&m, 1.0).unwrap();
    let zero = StepFunction::constant(&m, 0.0).unwrap();
    let (family, _) = build_sparse(&one, 0, 0.5).unwrap();
    let op = SparseOperator {
        alpha: 0.5,
        family: family.clone(),
    };
    let est =
        strong_norm_lower(&one, &zero, &e, &op, &SeedSet::standard(&family, None, 0)).unwrap();
    assert!(est.degenerate && est.value == 0.0);
}

#[test]
fn continuous_testing_on_the_unit_interval() {
    // ∫_0^1 (∫_0^1 |x-y|^{-1/2} dy)^4 dx = ∫_0^1 16 (√x + √(1-x))^4 dx = 80/3 + 8π.
    let exact = (80.0 / 3.0 + 8.0 * std::f64::consts::PI).powf(0.25);
    let m = Mesh::new(1, 0, 8, 0).unwrap();
    let one = StepFunction::constant(&m, 1.0).unwrap();
    let e = ExponentTuple::sobolev(1, 0.5, 4.0 / 3.0).unwrap();
    let table = KernelTableHandle::new(&m, 0.5, KernelMode::Midpoint).unwrap();
    let (direct, dual) = sawyer_cube_value(&one, &one, &e, &table, &DyadicCube::new(1, 0, 0, &[0]));
    let direct = direct.unwrap();
    assert!((direct / exact - 1.0).abs() < 2e-3, "{direct} vs {exact}");
    // p' = 4 and q' = 4/3, so with u = σ = 1 both sides coincide.
    assert!((dual.unwrap() - direct).abs() < 1e-12 * direct);
}
