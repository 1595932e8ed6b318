use proptest::prelude::*;
use riesz_core::mesh::characteristic_corpus;
use riesz_core::orlicz::{cube_distribution, generalized_holder_with, luxemburg_norm};
use riesz_core::{DyadicCube, Mesh, StepFunction, YoungFunction};

fn mesh() -> Mesh {
    Mesh::new(1, 0, 5, 0).unwrap()
}

fn function() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 5 => 0.0..50.0f64], 32)
}

fn cube() -> impl Strategy<Value = DyadicCube> {
    let corpus = characteristic_corpus(&mesh());
    prop::sample::select(corpus)
}

fn young() -> impl Strategy<Value = YoungFunction> {
    prop_oneof![
        (1.1..6.0f64).prop_map(YoungFunction::power),
        (1.1..6.0f64, 0.1..3.0f64).prop_map(|(p, d)| YoungFunction::log_bump(p, d)),
        (1.1..6.0f64, 0.1..3.0f64).prop_map(|(p, d)| YoungFunction::loglog_bump(p, d)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn power_norm_is_the_lp_average(vals in function(), q in cube(), p in 1.05..8.0f64) {
        let m = mesh();
        let f = StepFunction::from_cells(&m, &vals).unwrap();
        let lux = luxemburg_norm(&f, &q, &YoungFunction::power(p)).unwrap();
        let avg = cube_distribution(&f, &q).iter().map(|&(v, w)| w * v.powf(p)).sum::<f64>().powf(1.0 / p);
        if avg == 0.0 {
            prop_assert_eq!(lux, 0.0);
        } else {
            prop_assert!((lux / avg - 1.0).abs() < 1e-10, "{} vs {}", lux, avg);
        }
    }

    #[test]
    fn norm_is_homogeneous(vals in function(), q in cube(), phi in young(), c in 0.001..1000.0f64) {
        let f = StepFunction::from_cells(&mesh(), &vals).unwrap();
        let a = luxemburg_norm(&f.scale(c).unwrap(), &q, &phi).unwrap();
        let b = c * luxemburg_norm(&f, &q, &phi).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * b.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn norm_is_monotone(vals in function(), bump in function(), q in cube(), phi in young()) {
        let m = mesh();
        let f = StepFunction::from_cells(&m, &vals).unwrap();
        let g = f.zip_with(&StepFunction::from_cells(&m, &bump).unwrap(), |a, b| a + b).unwrap();
        let nf = luxemburg_norm(&f, &q, &phi).unwrap();
        let ng = luxemburg_norm(&g, &q, &phi).unwrap();
        prop_assert!(nf <= ng * (1.0 + 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn generalized_holder(f in function(), g in function(), q in cube(), p in 1.2..5.0f64, d in 0.2..2.0f64) {
        let m = mesh();
        let f = StepFunction::from_cells(&m, &f).unwrap();
        let g = StepFunction::from_cells(&m, &g).unwrap();
        let phi = YoungFunction::log_bump(p, d);
        let conj = phi.holder_conjugate().unwrap();
        let h = generalized_holder_with(&f, &g, &q, &phi, &conj).unwrap();
        prop_assert!(h.lhs <= h.rhs * (1.0 + 1e-10), "{:?}", h);
    }
}
