use proptest::prelude::*;
use riesz_core::mesh::characteristic_corpus;
use riesz_core::weights::{
    ainfty_exp, ap_constant, ap_constant_on, apq_constant, fujii_wilson, generate_weight,
    two_weight_ap,
};
use riesz_core::{ExponentTuple, Mesh, StepFunction, WeightSpec};

fn mesh() -> Mesh {
    Mesh::new(1, 0, 6, 3).unwrap()
}

fn weight() -> impl Strategy<Value = WeightSpec> {
    prop_oneof![
        (any::<u64>(), 0.0..0.9f64).prop_map(|(seed, vol)| WeightSpec::Martingale { seed, vol }),
        (0.0..1.0f64, -0.9..2.0f64).prop_map(|(center, beta)| WeightSpec::Power {
            center,
            beta,
            floor: None
        }),
        (1u32..5, 0.2..5.0f64)
            .prop_map(|(levels, ratio)| WeightSpec::Checkerboard { levels, ratio }),
    ]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn apq_identity(spec in weight()) {
        let m = mesh();
        let e = ExponentTuple::sobolev(1, 0.5, 4.0 / 3.0).unwrap();
        let w = generate_weight(&m, &spec).unwrap();
        let apq = apq_constant(&w, e.p, e.q).unwrap().value;
        let u = w.map(|x| x.powf(e.q)).unwrap();
        let s = w.map(|x| x.powf(-e.p_prime())).unwrap();
        let via_u = ap_constant(&u, e.s_p()).unwrap().value.powf(1.0 / e.q);
        let via_s = ap_constant(&s, e.s_qp()).unwrap().value.powf(1.0 / e.p_prime());
        prop_assert!(rel(via_u, apq) < 1e-10, "{} vs {}", via_u, apq);
        prop_assert!(rel(via_s, apq) < 1e-10, "{} vs {}", via_s, apq);
    }

    #[test]
    fn conjugate_exponent_identity(alpha in 0.05..0.95f64, t in 0.01..0.99f64) {
        // p ranges over (1, 1/α).
        let p = 1.0 / (1.0 - t * (1.0 - alpha));
        let e = ExponentTuple::sobolev(1, alpha, p).unwrap();
        let sp = e.s_p();
        prop_assert!((sp / (sp - 1.0) - e.s_qp()).abs() <= 1e-12 * e.s_qp());
    }

    #[test]
    fn jensen_lower_bounds(spec in weight(), p in 1.1..4.0f64) {
        let w = generate_weight(&mesh(), &spec).unwrap();
        let tol = 1.0 - 1e-12;
        prop_assert!(ap_constant(&w, p).unwrap().value >= tol);
        prop_assert!(apq_constant(&w, p, p + 1.0).unwrap().value >= tol);
        prop_assert!(ainfty_exp(&w).unwrap().value >= tol);
        prop_assert!(fujii_wilson(&w).unwrap().value >= tol);
        prop_assert!(two_weight_ap(&w, &w, p).unwrap().value >= 0.0);
    }

    #[test]
    fn corpus_growth_is_monotone(spec in weight(), cut in 1usize..200) {
        let m = mesh();
        let w = generate_weight(&m, &spec).unwrap();
        let corpus = characteristic_corpus(&m);
        let cut = cut.min(corpus.len());
        let part = ap_constant_on(&w, 2.0, &corpus[..cut]).unwrap().value;
        let full = ap_constant_on(&w, 2.0, &corpus).unwrap().value;
        prop_assert!(part <= full);
    }

    #[test]
    fn characteristics_are_scale_invariant(spec in weight(), c in 0.01..100.0f64) {
        let w = generate_weight(&mesh(), &spec).unwrap();
        let cw = w.scale(c).unwrap();
        prop_assert!(rel(ap_constant(&cw, 2.0).unwrap().value, ap_constant(&w, 2.0).unwrap().value) < 1e-10);
        prop_assert!(rel(fujii_wilson(&cw).unwrap().value, fujii_wilson(&w).unwrap().value) < 1e-10);
    }
}

#[test]
fn zero_cells_give_infinite_verdicts() {
    let m = mesh();
    let w = StepFunction::from_cell_fn(&m, |x| if x[0] < 0.5 { 0.0 } else { 1.0 }).unwrap();
    assert!(ap_constant(&w, 2.0).unwrap().is_infinite());
}
