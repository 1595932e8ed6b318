//! Shared fixtures for the benchmarks in `benches/`.

use riesz_core::calibration::{calibration_exponents, random_function};
use riesz_core::sparse::build_sparse;
use riesz_core::{ExponentTuple, Mesh, SparseFamily, StepFunction};

/// A seeded random weight pair with the sparse family of `σ` on an
/// `L`-level unit interval.
pub struct Fixture {
    pub mesh: Mesh,
    pub e: ExponentTuple,
    pub f: StepFunction,
    pub u: StepFunction,
    pub sigma: StepFunction,
    pub family: SparseFamily,
}

impl Fixture {
    pub fn new(finest: i32, padding: i32) -> Self {
        let mesh = Mesh::new(1, 0, finest, padding).expect("valid mesh");
        let e = calibration_exponents();
        let f = random_function(&mesh, 1);
        let u = random_function(&mesh, 2);
        let sigma = random_function(&mesh, 3).map(|x| x + 0.01).expect("finite");
        let (family, _) = build_sparse(&sigma, 0, e.alpha).expect("positive σ");
        Fixture {
            mesh,
            e,
            f,
            u,
            sigma,
            family,
        }
    }
}
