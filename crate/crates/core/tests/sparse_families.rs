use std::collections::BTreeSet;

use proptest::prelude::*;
use riesz_core::mesh::PrefixSums;
use riesz_core::operators::{dyadic_riesz, sparse_riesz};
use riesz_core::sparse::{
    build_sparse, carleson_check, carleson_embedding_check, corona_decompose, overlap_level_set,
    stopping_sequence, verify_sparse, SliceMode,
};
use riesz_core::weights::fujii_wilson_dyadic;
use riesz_core::{DyadicCube, ExponentTuple, Mesh, SparseFamily, StepFunction};

fn mesh() -> Mesh {
    Mesh::new(1, 0, 5, 6).unwrap()
}

fn cells(len: usize, zero_ok: bool) -> impl Strategy<Value = Vec<f64>> {
    let lo = if zero_ok { 0.0 } else { 0.05 };
    prop::collection::vec(prop_oneof![1 => Just(lo), 4 => lo..20.0f64], len)
}

fn tops(family: &SparseFamily) -> Vec<DyadicCube> {
    let cubes = family.cubes();
    cubes
        .iter()
        .copied()
        .filter(|q| !cubes.iter().any(|r| r != q && r.contains(q, family.mesh())))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stopping_families_are_sparse_and_dominate(
        vals in cells(32, true),
        alpha in prop::sample::select(vec![0.25, 0.5, 0.75]),
        shift in 0u8..2,
    ) {
        let m = mesh();
        let f = StepFunction::from_cells(&m, &vals).unwrap();
        prop_assume!(!f.is_zero());
        let (family, c) = build_sparse(&f, shift, alpha).unwrap();
        prop_assert!(verify_sparse(&family).is_ok());
        let d = dyadic_riesz(&f, alpha, shift).unwrap();
        let s = sparse_riesz(&f, alpha, &family).unwrap();
        for (a, b) in d.values().iter().zip(s.values()) {
            prop_assert!(*a <= c * *b);
        }
        for root in family.cubes() {
            for k in 1..=12 {
                prop_assert!(overlap_level_set(&family, root, k).within_decay(k));
            }
        }
    }

    #[test]
    fn corona_partitions_and_certifies(u in cells(32, true), s in cells(32, false)) {
        let m = mesh();
        let u = StepFunction::from_cells(&m, &u).unwrap();
        prop_assume!(!u.is_zero());
        let sigma = StepFunction::from_cells(&m, &s).unwrap();
        let e = ExponentTuple::sobolev(1, 0.5, 4.0 / 3.0).unwrap();
        let (family, _) = build_sparse(&sigma, 0, e.alpha).unwrap();
        let (pu, ps) = (PrefixSums::new(&u), PrefixSums::new(&sigma));
        let fw = fujii_wilson_dyadic(&u, 0).unwrap().value;
        for root in tops(&family) {
            let cd = corona_decompose(&family, &root, &u, &sigma, &e, SliceMode::Standard).unwrap();
            prop_assert!(cd.certify(&family, &u, &sigma).is_ok());

            let expected: BTreeSet<DyadicCube> = family
                .restricted(&root)
                .cubes()
                .iter()
                .copied()
                .filter(|q| pu.integral(q) > 0.0 && ps.integral(q) > 0.0)
                .collect();
            let mut seen = BTreeSet::new();
            for slice in &cd.slices {
                for c in &slice.cubes {
                    prop_assert!(seen.insert(c.cube), "cube in two slices");
                }
            }
            prop_assert_eq!(&seen, &expected);

            let mut by_slice: BTreeSet<(i32, DyadicCube)> = BTreeSet::new();
            for (key, cubes) in cd.sub_slices() {
                for q in cubes {
                    prop_assert!(by_slice.insert((key.a, q)), "cube in two sub-slices");
                }
            }
            let flat: BTreeSet<(i32, DyadicCube)> =
                cd.slices.iter().flat_map(|s| s.cubes.iter().map(move |c| (s.a, c.cube))).collect();
            prop_assert_eq!(by_slice, flat);

            for slice in &cd.slices {
                let seq = stopping_sequence(&cd, slice.a, &u);
                let a = carleson_check(&seq, &u).unwrap().constant;
                prop_assert!(a <= 2.0 * fw * (1.0 + 1e-12), "carleson {} vs 2 x {}", a, fw);
            }
        }
    }

    #[test]
    fn carleson_embedding_holds(vals in cells(32, false), mu in cells(32, false)) {
        let m = mesh();
        let f = StepFunction::from_cells(&m, &vals).unwrap();
        let mu = StepFunction::from_cells(&m, &mu).unwrap();
        let e = ExponentTuple::sobolev(1, 0.5, 4.0 / 3.0).unwrap();
        let (family, _) = build_sparse(&mu, 0, e.alpha).unwrap();
        let pm = PrefixSums::new(&mu);
        let c: Vec<(DyadicCube, f64)> = family.cubes().iter().map(|q| (*q, pm.integral(q))).collect();
        let (lhs, rhs) = carleson_embedding_check(&c, &mu, &f, &e).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }
}

#[test]
fn nested_chain_overlap_attains_equality() {
    let m = Mesh::new(1, 0, 13, 0).unwrap();
    let family =
        SparseFamily::new(&m, 0, (0..=13).map(|j| DyadicCube::new(1, 0, j, &[0]))).unwrap();
    let root = DyadicCube::new(1, 0, 0, &[0]);
    for k in 1..=12u32 {
        let l = overlap_level_set(&family, &root, k);
        assert_eq!(l.measure_atoms << k, l.root_atoms, "k = {k}");
        assert!(l.within_decay(k));
    }
}

#[test]
fn two_dimensional_smoke() {
    let m = Mesh::new(2, 0, 5, 4).unwrap();
    let f = StepFunction::from_cell_fn(&m, |x| {
        1.0 + ((x[0] * 7.0).sin() * (x[1] * 5.0).cos()).abs() * 4.0
    })
    .unwrap();
    for alpha in [0.5, 1.0, 1.5] {
        let (family, c) = build_sparse(&f, 3, alpha).unwrap();
        verify_sparse(&family).unwrap();
        let d = dyadic_riesz(&f, alpha, 3).unwrap();
        let s = sparse_riesz(&f, alpha, &family).unwrap();
        assert!(d.values().iter().zip(s.values()).all(|(a, b)| *a <= c * *b));
    }
}
