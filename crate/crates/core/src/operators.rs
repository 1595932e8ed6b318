//! Riesz potentials (reference quadrature, dyadic, sparse) and maximal
//! operators on step functions.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DyadicCube, GridIndex, Mesh, PrefixSums, StepFunction, MAX_DIM};
use crate::sparse::SparseFamily;

/// Largest atom count accepted by the dense reference operator.
pub const DENSE_ATOM_BUDGET: usize = 1 << 18;

/// Discrete surrogate of `∫_{C'} |x - y|^{α-n} dy` over a source atom `C'`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// Center-to-center distance.
    #[default]
    Midpoint,
    /// Farthest point of the source atom.
    Lower,
    /// Nearest point of the source atom.
    Upper,
}

impl std::str::FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" => Ok(KernelMode::Midpoint),
            "lower" => Ok(KernelMode::Lower),
            "upper" => Ok(KernelMode::Upper),
            _ => Err(Error::InvalidFunction(format!("unknown kernel mode `{s}`"))),
        }
    }
}

pub(crate) fn check_alpha(alpha: f64, n: usize) -> Result<()> {
    if alpha > 0.0 && alpha < n as f64 {
        Ok(())
    } else {
        Err(Error::InvalidExponents(format!(
            "α = {alpha} outside (0, {n})"
        )))
    }
}

/// Volume of the unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        _ => unreachable!("dimension checked at mesh construction"),
    }
}

/// `∫_B |y|^{α-n} dy` over the ball `B` centered at 0 with volume `vol`.
pub fn ball_kernel_integral(n: usize, alpha: f64, vol: f64) -> f64 {
    let omega = unit_ball_volume(n);
    let rho = (vol / omega).powf(1.0 / n as f64);
    n as f64 * omega * rho.powf(alpha) / alpha
}

/// Kernel weight between atoms whose integer offset is `d`.
pub fn kernel_weight(mesh: &Mesh, alpha: f64, mode: KernelMode, d: [i64; MAX_DIM]) -> f64 {
    let n = mesh.dim;
    let h = mesh.atom_len();
    let vol = mesh.atom_volume();
    let is_self = d[..n].iter().all(|&x| x == 0);
    let dist2 = |per_axis: &dyn Fn(f64) -> f64| -> f64 {
        d[..n]
            .iter()
            .map(|&x| {
                let t = per_axis(x.unsigned_abs() as f64 * h);
                t * t
            })
            .sum()
    };
    let power = |r2: f64| vol * r2.sqrt().powf(alpha - n as f64);
    match mode {
        KernelMode::Midpoint if is_self => ball_kernel_integral(n, alpha, vol),
        KernelMode::Upper if is_self => ball_kernel_integral(n, alpha, vol),
        KernelMode::Midpoint => power(dist2(&|c| c)),
        KernelMode::Lower => power(dist2(&|c| c + 0.5 * h)),
        KernelMode::Upper => power(dist2(&|c| (c - 0.5 * h).max(0.0))),
    }
}

/// Kernel weights indexed by offset, `(2N-1)^n` entries for side `N`.
pub(crate) struct KernelTable {
    side: i64,
    /// Row offset of `dy = 0`; zero in one dimension.
    center_row: i64,
    weights: Vec<f64>,
}

impl KernelTable {
    pub(crate) fn new(mesh: &Mesh, alpha: f64, mode: KernelMode) -> Self {
        let side = mesh.side_atoms();
        let w = 2 * side - 1;
        let ny = if mesh.dim == 2 { w } else { 1 };
        let mut weights = Vec::with_capacity((w * ny) as usize);
        for j in 0..ny {
            for i in 0..w {
                let mut d = [0i64; MAX_DIM];
                d[0] = i - (side - 1);
                if mesh.dim == 2 {
                    d[1] = j - (side - 1);
                }
                weights.push(kernel_weight(mesh, alpha, mode, d));
            }
        }
        KernelTable {
            side,
            center_row: if mesh.dim == 2 { side - 1 } else { 0 },
            weights,
        }
    }

    pub(crate) fn at(&self, dx: i64, dy: i64) -> f64 {
        let w = 2 * self.side - 1;
        self.weights[((dy + self.center_row) * w + dx + self.side - 1) as usize]
    }
}

/// Reference Riesz potential `I_α f` at every atom center by dense
/// quadrature over source atoms.
pub fn riesz_reference(f: &StepFunction, alpha: f64, mode: KernelMode) -> Result<StepFunction> {
    let mesh = *f.mesh();
    check_alpha(alpha, mesh.dim)?;
    if mesh.atom_count() > DENSE_ATOM_BUDGET {
        return Err(Error::DenseBudget {
            atoms: mesh.atom_count(),
        });
    }
    let table = KernelTable::new(&mesh, alpha, mode);
    let vals = f.values();
    let support: Vec<(usize, [i64; MAX_DIM])> = (0..mesh.atom_count())
        .filter(|&a| vals[a] > 0.0)
        .map(|a| (a, mesh.atom_coords(a)))
        .collect();
    let out: Vec<f64> = (0..mesh.atom_count())
        .into_par_iter()
        .map(|x| {
            let px = mesh.atom_coords(x);
            support
                .iter()
                .map(|&(y, py)| vals[y] * table.at(px[0] - py[0], px[1] - py[1]))
                .sum()
        })
        .collect();
    StepFunction::from_atoms(&mesh, out)
}

/// Chain evaluation `Σ_{Q ∋ x} c_Q` over one grid, coarse-to-fine.
fn chain_sum(
    grid: &GridIndex,
    per_cube: &[f64],
    combine: impl Fn(f64, f64) -> f64 + Sync,
) -> Vec<f64> {
    let mesh = *grid.mesh();
    let levels = grid.level_count();
    let min = mesh.min_level();
    (0..mesh.atom_count())
        .into_par_iter()
        .map(|a| {
            let p = mesh.atom_coords(a);
            let mut acc = 0.0;
            for l in 0..levels {
                acc = combine(acc, per_cube[grid.containing_index(min + l as i32, p)]);
            }
            acc
        })
        .collect()
}

/// `Σ_{Q ∈ D^t} |Q|^{α/n} (⨍_Q f) χ_Q` over the enumerated cubes of one grid.
pub fn dyadic_riesz(f: &StepFunction, alpha: f64, shift: u8) -> Result<StepFunction> {
    let mesh = *f.mesh();
    check_alpha(alpha, mesh.dim)?;
    let grid = GridIndex::new(&mesh, shift);
    let ps = PrefixSums::new(f);
    let n = mesh.dim as f64;
    let coef: Vec<f64> = grid
        .cubes()
        .iter()
        .map(|q| q.volume().powf(alpha / n) * ps.average(q))
        .collect();
    StepFunction::from_atoms(&mesh, chain_sum(&grid, &coef, |a, b| a + b))
}

/// Pointwise maximum of [`dyadic_riesz`] over all shifts.
pub fn dyadic_riesz_max(f: &StepFunction, alpha: f64) -> Result<StepFunction> {
    let mut best = StepFunction::zero(f.mesh());
    for t in f.mesh().shifts() {
        best = best.zip_with(&dyadic_riesz(f, alpha, t)?, f64::max)?;
    }
    Ok(best)
}

/// Adds `c_Q χ_Q` for each cube, in the given order.
pub(crate) fn rank_one_sum(mesh: &Mesh, cubes: &[DyadicCube], coef: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.atom_count()];
    for (q, &c) in cubes.iter().zip(coef) {
        if c == 0.0 {
            continue;
        }
        for a in q.atom_rect(mesh).atoms(mesh) {
            out[a] += c;
        }
    }
    out
}

/// `Σ_{Q ∈ cubes} |Q|^{α/n} (⨍_Q f) χ_Q`.
pub fn riesz_over_cubes(
    f: &StepFunction,
    alpha: f64,
    cubes: &[DyadicCube],
) -> Result<StepFunction> {
    let mesh = *f.mesh();
    check_alpha(alpha, mesh.dim)?;
    let ps = PrefixSums::new(f);
    let n = mesh.dim as f64;
    let coef: Vec<f64> = cubes
        .iter()
        .map(|q| q.volume().powf(alpha / n) * ps.average(q))
        .collect();
    StepFunction::from_atoms(&mesh, rank_one_sum(&mesh, cubes, &coef))
}

/// Sparse Riesz potential over the family.
pub fn sparse_riesz(f: &StepFunction, alpha: f64, family: &SparseFamily) -> Result<StepFunction> {
    if f.mesh() != family.mesh() {
        return Err(Error::MeshMismatch);
    }
    riesz_over_cubes(f, alpha, family.cubes())
}

/// Sparse Riesz potential over the members contained in `root`.
pub fn restricted_sparse_riesz(
    f: &StepFunction,
    alpha: f64,
    family: &SparseFamily,
    root: &DyadicCube,
) -> Result<StepFunction> {
    if f.mesh() != family.mesh() {
        return Err(Error::MeshMismatch);
    }
    let mesh = *f.mesh();
    let inside: Vec<DyadicCube> = family
        .cubes()
        .iter()
        .copied()
        .filter(|q| root.contains(q, &mesh))
        .collect();
    riesz_over_cubes(f, alpha, &inside)
}

/// Dyadic maximal function over the enumerated cubes of every grid.
pub fn hl_maximal(f: &StepFunction) -> Result<StepFunction> {
    let mesh = *f.mesh();
    let ps = PrefixSums::new(f);
    let mut best = vec![0.0f64; mesh.atom_count()];
    for t in mesh.shifts() {
        let grid = GridIndex::new(&mesh, t);
        let avg: Vec<f64> = grid.cubes().iter().map(|q| ps.average(q)).collect();
        for (b, v) in best.iter_mut().zip(chain_sum(&grid, &avg, f64::max)) {
            *b = b.max(v);
        }
    }
    StepFunction::from_atoms(&mesh, best)
}

/// `sup_{Q ∋ x} μ(Q)^{α/n-1} ∫_Q f dμ` over one grid, with `0/0 := 0`.
pub fn frac_maximal_weighted(
    f: &StepFunction,
    mu: &StepFunction,
    alpha: f64,
    shift: u8,
) -> Result<StepFunction> {
    let mesh = *f.mesh();
    if mu.mesh() != &mesh {
        return Err(Error::MeshMismatch);
    }
    check_alpha(alpha, mesh.dim)?;
    let grid = GridIndex::new(&mesh, shift);
    let fm = PrefixSums::new(&f.zip_with(mu, |a, b| a * b)?);
    let pm = PrefixSums::new(mu);
    let n = mesh.dim as f64;
    let vals: Vec<f64> = grid
        .cubes()
        .iter()
        .map(|q| {
            let m = pm.integral(q);
            if m > 0.0 {
                m.powf(alpha / n - 1.0) * fm.integral(q)
            } else {
                0.0
            }
        })
        .collect();
    StepFunction::from_atoms(&mesh, chain_sum(&grid, &vals, f64::max))
}

/// Ratio statistics of `A/B` over atoms where `B > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub argmin: Option<usize>,
    pub argmax: Option<usize>,
    /// Atoms with `B = 0 < A`.
    pub violations: usize,
}

pub fn compare_pointwise(a: &StepFunction, b: &StepFunction) -> Result<Comparison> {
    if a.mesh() != b.mesh() {
        return Err(Error::MeshMismatch);
    }
    let mut c = Comparison {
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        argmin: None,
        argmax: None,
        violations: 0,
    };
    for (i, (&x, &y)) in a.values().iter().zip(b.values()).enumerate() {
        if y > 0.0 {
            let r = x / y;
            if r < c.min_ratio {
                c.min_ratio = r;
                c.argmin = Some(i);
            }
            if r > c.max_ratio || c.argmax.is_none() {
                c.max_ratio = r;
                c.argmax = Some(i);
            }
        } else if x > 0.0 {
            c.violations += 1;
        }
    }
    Ok(c)
}

/// `(√n)^{n-α} / (1 - 2^{α-n})`, the provable constant in
/// `I^{D^t}_α f ≤ C₁ · I_α f` with the nearest- or farthest-point kernel.
pub fn upper_comparison_constant(n: usize, alpha: f64) -> f64 {
    let n_f = n as f64;
    n_f.sqrt().powf(n_f - alpha) / (1.0 - 2f64.powf(alpha - n_f))
}

/// A positive linear operator acting on step functions.
pub trait PositiveOperator: Sync {
    fn apply(&self, f: &StepFunction) -> Result<StepFunction>;

    /// Whether `∫ g·Tf = ∫ f·Tg`.
    fn is_self_adjoint(&self) -> bool {
        true
    }

    fn label(&self) -> String;
}

#[derive(Clone, Debug)]
pub struct SparseOperator {
    pub alpha: f64,
    pub family: SparseFamily,
}

impl PositiveOperator for SparseOperator {
    fn apply(&self, f: &StepFunction) -> Result<StepFunction> {
        sparse_riesz(f, self.alpha, &self.family)
    }

    fn label(&self) -> String {
        format!("sparse(alpha={}, cubes={})", self.alpha, self.family.len())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DyadicOperator {
    pub alpha: f64,
    pub shift: u8,
}

impl PositiveOperator for DyadicOperator {
    fn apply(&self, f: &StepFunction) -> Result<StepFunction> {
        dyadic_riesz(f, self.alpha, self.shift)
    }

    fn label(&self) -> String {
        format!("dyadic(alpha={}, shift={})", self.alpha, self.shift)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ReferenceOperator {
    pub alpha: f64,
    pub mode: KernelMode,
}

impl PositiveOperator for ReferenceOperator {
    fn apply(&self, f: &StepFunction) -> Result<StepFunction> {
        riesz_reference(f, self.alpha, self.mode)
    }

    fn label(&self) -> String {
        format!("reference(alpha={}, mode={:?})", self.alpha, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::enumerate_cubes;

    fn unit(l: i32, t: i32) -> Mesh {
        Mesh::new(1, 0, l, t).unwrap()
    }

    #[test]
    fn dyadic_riesz_of_constant_is_geometric_sum() {
        let mesh = unit(3, 0);
        let one = StepFunction::constant(&mesh, 1.0).unwrap();
        let v = dyadic_riesz(&one, 0.5, 0).unwrap();
        let expected: f64 = (0..=3).map(|k| 2f64.powf(-k as f64 / 2.0)).sum();
        assert!(v.values().iter().all(|x| (x - expected).abs() < 1e-14));
        assert!((expected - 2.560_660_171_779_821).abs() < 1e-12);
    }

    #[test]
    fn chain_matches_naive_sum_bitwise() {
        let mesh = unit(4, 2);
        let f = StepFunction::from_cell_fn(&mesh, |x| (x[0] * 7.0).sin().abs() + 0.1).unwrap();
        for t in 0..2 {
            let fast = dyadic_riesz(&f, 0.5, t).unwrap();
            let ps = PrefixSums::new(&f);
            let mut naive = vec![0.0; mesh.atom_count()];
            for q in enumerate_cubes(&mesh, t) {
                let c = q.volume().powf(0.5) * ps.average(&q);
                for a in q.atom_rect(&mesh).atoms(&mesh) {
                    naive[a] += c;
                }
            }
            assert_eq!(fast.values(), &naive[..]);
        }
    }

    #[test]
    fn kernel_modes_bracket() {
        for dim in [1usize, 2] {
            let mesh = Mesh::new(dim, 0, 2, 0).unwrap();
            for alpha in [0.25, 0.5, 0.75] {
                for dx in -4..=4 {
                    for dy in if dim == 2 { -4..=4 } else { 0..=0 } {
                        let d = [dx, dy];
                        let lo = kernel_weight(&mesh, alpha, KernelMode::Lower, d);
                        let mid = kernel_weight(&mesh, alpha, KernelMode::Midpoint, d);
                        let hi = kernel_weight(&mesh, alpha, KernelMode::Upper, d);
                        assert!(lo <= mid && mid <= hi, "{d:?}: {lo} {mid} {hi}");
                    }
                }
            }
        }
    }

    #[test]
    fn self_atom_is_exact_in_one_dimension() {
        let mesh = unit(2, 0);
        let h = mesh.atom_len();
        let exact = 2.0 * (h / 2.0f64).powf(0.5) / 0.5;
        assert!((kernel_weight(&mesh, 0.5, KernelMode::Midpoint, [0, 0]) - exact).abs() < 1e-14);
    }

    #[test]
    fn reference_matches_closed_form_on_unit_interval() {
        let mesh = unit(10, 0);
        let one = StepFunction::constant(&mesh, 1.0).unwrap();
        let mid = riesz_reference(&one, 0.5, KernelMode::Midpoint).unwrap();
        let lo = riesz_reference(&one, 0.5, KernelMode::Lower).unwrap();
        let hi = riesz_reference(&one, 0.5, KernelMode::Upper).unwrap();
        for cell in 0..mesh.cell_count() {
            let x = mesh.cell_center(cell)[0];
            let a = 3 * cell + 1;
            assert!(lo.value(a) <= mid.value(a) && mid.value(a) <= hi.value(a));
            if (0.05..=0.95).contains(&x) {
                let exact = 2.0 * (x.sqrt() + (1.0 - x).sqrt());
                assert!((mid.value(a) / exact - 1.0).abs() < 2e-3, "x = {x}");
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let mesh = unit(3, 0);
        let z = StepFunction::zero(&mesh);
        assert!(riesz_reference(&z, 0.5, KernelMode::Midpoint)
            .unwrap()
            .is_zero());
        assert!(dyadic_riesz(&z, 0.5, 1).unwrap().is_zero());
        assert!(hl_maximal(&z).unwrap().is_zero());
    }

    #[test]
    fn weighted_fractional_maximal_of_lebesgue() {
        let mesh = unit(3, 0);
        let one = StepFunction::constant(&mesh, 1.0).unwrap();
        let m = frac_maximal_weighted(&one, &one, 0.5, 0).unwrap();
        assert!(m.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn comparison_of_equal_functions() {
        let mesh = unit(3, 0);
        let f = StepFunction::from_cell_fn(&mesh, |x| x[0] + 1.0).unwrap();
        let c = compare_pointwise(&f, &f).unwrap();
        assert_eq!((c.min_ratio, c.max_ratio, c.violations), (1.0, 1.0, 0));
    }

    #[test]
    fn rejects_alpha_out_of_range() {
        let mesh = unit(2, 0);
        let one = StepFunction::constant(&mesh, 1.0).unwrap();
        assert!(dyadic_riesz(&one, 1.0, 0).is_err());
        assert!(riesz_reference(&one, 0.0, KernelMode::Lower).is_err());
    }
}
