//! Testing constants, weak and strong norm functionals, operator-norm lower
//! bounds and bound-sandwich experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{
    characteristic_corpus, pairwise_sum, DyadicCube, GridIndex, Mesh, PrefixSums, StepFunction,
};
use crate::operators::{
    check_alpha, rank_one_sum, KernelMode, KernelTable, PositiveOperator, SparseOperator,
};
use crate::orlicz::YoungFunction;
use crate::sparse::SparseFamily;
use crate::weights::{
    bump_constant, bump_constant_with, fujii_wilson, range_conditions, two_weight_ap,
    CharacteristicReport, ExponentTuple,
};

/// Relative objective change at which alternating maximization stops.
pub const ITERATION_RTOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
pub const RANDOM_STARTS: usize = 8;

/// `sup_t t·u({h > t})^{1/q}`, scanned at the distinct values of `h`.
pub fn weak_lorentz_norm(h: &StepFunction, u: &StepFunction, q: f64) -> Result<f64> {
    if h.mesh() != u.mesh() {
        return Err(Error::MeshMismatch);
    }
    let vol = h.mesh().atom_volume();
    let mut atoms: Vec<(f64, f64)> = h
        .values()
        .iter()
        .zip(u.values())
        .filter(|(&v, &w)| v > 0.0 && w > 0.0)
        .map(|(&v, &w)| (v, w))
        .collect();
    atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = 0.0f64;
    let mut mass = 0.0;
    let mut i = 0;
    while i < atoms.len() {
        let v = atoms[i].0;
        while i < atoms.len() && atoms[i].0 == v {
            mass += atoms[i].1;
            i += 1;
        }
        best = best.max(v * (mass * vol).powf(1.0 / q));
    }
    Ok(best)
}

/// Constants and witnesses of the two dyadic testing conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestingReport {
    /// `[u,σ]_{(T)^{p,q}}`: tests `T(χ_R σ)` in `L^q(u)`.
    pub direct: f64,
    /// `[σ,u]_{(T)^{q',p'}}`: tests `T(χ_R u)` in `L^{p'}(σ)`.
    pub dual: f64,
    pub direct_witness: Option<DyadicCube>,
    pub dual_witness: Option<DyadicCube>,
    pub corpus_size: usize,
    pub direct_skipped: usize,
    pub dual_skipped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Sup {
    value: f64,
    witness: Option<DyadicCube>,
    skipped: usize,
}

fn reduce(cubes: &[DyadicCube], vals: &[Option<f64>]) -> Sup {
    let mut s = Sup {
        value: 0.0,
        witness: None,
        skipped: 0,
    };
    for (q, v) in cubes.iter().zip(vals) {
        match v {
            None => s.skipped += 1,
            Some(x) => {
                if s.witness.is_none() || *x > s.value {
                    s.value = *x;
                    s.witness = Some(*q);
                }
            }
        }
    }
    s
}

/// `w_in(R)^{-1/p_in} (∫_R I^{S(R)}(χ_R w_in)^{q_out} w_out)^{1/q_out}`;
/// `None` when `w_in(R) = 0`.
pub fn testing_value_at(
    family: &SparseFamily,
    alpha: f64,
    w_in: &StepFunction,
    w_out: &StepFunction,
    p_in: f64,
    q_out: f64,
    root: &DyadicCube,
) -> Option<f64> {
    testing_value_with(
        family,
        alpha,
        &PrefixSums::new(w_in),
        w_out,
        p_in,
        q_out,
        root,
    )
}

fn testing_value_with(
    family: &SparseFamily,
    alpha: f64,
    pin: &PrefixSums,
    w_out: &StepFunction,
    p_in: f64,
    q_out: f64,
    root: &DyadicCube,
) -> Option<f64> {
    let mesh = *family.mesh();
    let mass = pin.integral(root);
    if !(mass > 0.0) {
        return None;
    }
    let inside: Vec<DyadicCube> = family
        .cubes()
        .iter()
        .copied()
        .filter(|q| root.contains(q, &mesh))
        .collect();
    if inside.is_empty() {
        return Some(0.0);
    }
    let n = mesh.dim as f64;
    // Members of S(R) lie in R, so averaging χ_R w_in over them is averaging w_in.
    let coef: Vec<f64> = inside
        .iter()
        .map(|q| q.volume().powf(alpha / n) * pin.average(q))
        .collect();
    let h = rank_one_sum(&mesh, &inside, &coef);
    let vol = mesh.atom_volume();
    let terms: Vec<f64> = root
        .atom_rect(&mesh)
        .atoms(&mesh)
        .map(|a| {
            if h[a] > 0.0 {
                h[a].powf(q_out) * w_out.value(a)
            } else {
                0.0
            }
        })
        .collect();
    Some((pairwise_sum(&terms) * vol).powf(1.0 / q_out) / mass.powf(1.0 / p_in))
}

/// Testing supremum over every enumerated cube of the family's grid.
pub fn testing_constant(
    family: &SparseFamily,
    alpha: f64,
    w_in: &StepFunction,
    w_out: &StepFunction,
    p_in: f64,
    q_out: f64,
) -> Result<(f64, Option<DyadicCube>, usize)> {
    check_alpha(alpha, family.mesh().dim)?;
    if w_in.mesh() != family.mesh() || w_out.mesh() != family.mesh() {
        return Err(Error::MeshMismatch);
    }
    let grid = GridIndex::new(family.mesh(), family.shift());
    let pin = PrefixSums::new(w_in);
    let vals: Vec<Option<f64>> = grid
        .cubes()
        .par_iter()
        .map(|r| testing_value_with(family, alpha, &pin, w_out, p_in, q_out, r))
        .collect();
    let s = reduce(grid.cubes(), &vals);
    Ok((s.value, s.witness, s.skipped))
}

/// Direct and dual dyadic testing constants of the sparse operator.
pub fn dyadic_testing(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    family: &SparseFamily,
) -> Result<TestingReport> {
    let (direct, dw, ds) = testing_constant(family, e.alpha, sigma, u, e.p, e.q)?;
    let (dual, uw, us) = testing_constant(family, e.alpha, u, sigma, e.q_prime(), e.p_prime())?;
    Ok(TestingReport {
        direct,
        dual,
        direct_witness: dw,
        dual_witness: uw,
        corpus_size: GridIndex::new(family.mesh(), family.shift()).len(),
        direct_skipped: ds,
        dual_skipped: us,
    })
}

/// Per-cube continuous testing values `(direct, dual)` with the reference
/// kernel evaluated on the atoms of `Q`.
pub fn sawyer_cube_value(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    table: &KernelTableHandle,
    q: &DyadicCube,
) -> (Option<f64>, Option<f64>) {
    let mesh = *u.mesh();
    let atoms: Vec<(usize, [i64; 2])> = q
        .atom_rect(&mesh)
        .atoms(&mesh)
        .map(|a| (a, mesh.atom_coords(a)))
        .collect();
    let vol = mesh.atom_volume();
    let potential = |w: &StepFunction| -> Vec<f64> {
        atoms
            .iter()
            .map(|&(_, px)| {
                atoms
                    .iter()
                    .map(|&(y, py)| w.value(y) * table.0.at(px[0] - py[0], px[1] - py[1]))
                    .sum::<f64>()
            })
            .collect()
    };
    let one_side =
        |w_in: &StepFunction, w_out: &StepFunction, p_in: f64, q_out: f64| -> Option<f64> {
            let mass: f64 = pairwise_sum(
                &atoms
                    .iter()
                    .map(|&(a, _)| w_in.value(a))
                    .collect::<Vec<_>>(),
            ) * vol;
            if !(mass > 0.0) {
                return None;
            }
            let h = potential(w_in);
            let terms: Vec<f64> = atoms
                .iter()
                .zip(&h)
                .map(|(&(a, _), &v)| v.powf(q_out) * w_out.value(a))
                .collect();
            Some((pairwise_sum(&terms) * vol).powf(1.0 / q_out) / mass.powf(1.0 / p_in))
        };
    (
        one_side(sigma, u, e.p, e.q),
        one_side(u, sigma, e.q_prime(), e.p_prime()),
    )
}

/// Precomputed reference kernel for [`sawyer_cube_value`].
pub struct KernelTableHandle(KernelTable);

impl KernelTableHandle {
    pub fn new(mesh: &Mesh, alpha: f64, mode: KernelMode) -> Result<Self> {
        check_alpha(alpha, mesh.dim)?;
        Ok(KernelTableHandle(KernelTable::new(mesh, alpha, mode)))
    }
}

/// Continuous testing constants over the characteristic corpus.
pub fn sawyer_testing(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    mode: KernelMode,
) -> Result<TestingReport> {
    if u.mesh() != sigma.mesh() {
        return Err(Error::MeshMismatch);
    }
    e.validate()?;
    let mesh = *u.mesh();
    let table = KernelTableHandle::new(&mesh, e.alpha, mode)?;
    let corpus = characteristic_corpus(&mesh);
    let vals: Vec<(Option<f64>, Option<f64>)> = corpus
        .par_iter()
        .map(|q| sawyer_cube_value(u, sigma, e, &table, q))
        .collect();
    let direct = reduce(&corpus, &vals.iter().map(|v| v.0).collect::<Vec<_>>());
    let dual = reduce(&corpus, &vals.iter().map(|v| v.1).collect::<Vec<_>>());
    Ok(TestingReport {
        direct: direct.value,
        dual: dual.value,
        direct_witness: direct.witness,
        dual_witness: dual.witness,
        corpus_size: corpus.len(),
        direct_skipped: direct.skipped,
        dual_skipped: dual.skipped,
    })
}

/// Multi-start descriptor for the norm estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    /// Indicator starts `χ_R`.
    pub cubes: Vec<DyadicCube>,
    /// Include the `σ^{p'-1}` profile.
    pub profile: bool,
    pub random_starts: usize,
    pub rng_seed: u64,
}

impl SeedSet {
    /// Family members, the testing witnesses, the profile and eight random
    /// starts.
    pub fn standard(family: &SparseFamily, testing: Option<&TestingReport>, rng_seed: u64) -> Self {
        let mut cubes = family.cubes().to_vec();
        if let Some(t) = testing {
            cubes.extend(t.direct_witness);
            cubes.extend(t.dual_witness);
        }
        let mut seen = std::collections::HashSet::new();
        cubes.retain(|q| seen.insert(*q));
        SeedSet {
            cubes,
            profile: true,
            random_starts: RANDOM_STARTS,
            rng_seed,
        }
    }

    fn starts(&self, mesh: &Mesh, sigma: &StepFunction, p_prime: f64) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for q in &self.cubes {
            out.push((
                format!("indicator {q}"),
                StepFunction::indicator(mesh, q).into_values(),
            ));
        }
        if self.profile {
            out.push((
                "profile".into(),
                sigma
                    .values()
                    .iter()
                    .map(|&s| if s > 0.0 { s.powf(p_prime - 1.0) } else { 0.0 })
                    .collect(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        for i in 0..self.random_starts {
            out.push((
                format!("random {i}"),
                (0..mesh.atom_count())
                    .map(|_| rng.gen_range(0.0..1.0) + 1e-3)
                    .collect(),
            ));
        }
        out
    }
}

/// A lower bound on an operator norm with the input attaining it.
#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    #[serde(skip)]
    pub witness_f: Option<StepFunction>,
    #[serde(skip)]
    pub witness_g: Option<StepFunction>,
    /// Label of the start that produced the witness.
    pub witness_seed: String,
    pub iterations: usize,
    /// Objective after each accepted step of the winning start.
    pub history: Vec<f64>,
    pub seeds: SeedSet,
    pub converged: bool,
    /// Every start produced a vanishing objective.
    pub degenerate: bool,
}

/// `‖T(fσ)‖_{L^q(u)} / ‖f‖_{L^p(σ)}`, or `None` when `‖f‖ = 0`.
pub fn strong_ratio(
    op: &dyn PositiveOperator,
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    f: &StepFunction,
) -> Result<Option<f64>> {
    let nf = f.lp_norm(e.p, sigma);
    if !(nf > 0.0) {
        return Ok(None);
    }
    let h = op.apply(&f.zip_with(sigma, |a, b| a * b)?)?;
    Ok(Some(h.lp_norm(e.q, u) / nf))
}

/// `‖T(fσ)‖_{L^{q,∞}(u)} / ‖f‖_{L^p(σ)}`, or `None` when `‖f‖ = 0`.
pub fn weak_ratio(
    op: &dyn PositiveOperator,
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    f: &StepFunction,
) -> Result<Option<f64>> {
    let nf = f.lp_norm(e.p, sigma);
    if !(nf > 0.0) {
        return Ok(None);
    }
    let h = op.apply(&f.zip_with(sigma, |a, b| a * b)?)?;
    Ok(Some(weak_lorentz_norm(&h, u, e.q)? / nf))
}

struct Run {
    label: String,
    value: f64,
    f: StepFunction,
    g: Option<StepFunction>,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn normalize(f: StepFunction, p: f64, w: &StepFunction) -> Result<Option<StepFunction>> {
    let n = f.lp_norm(p, w);
    if !(n > 0.0) || !n.is_finite() {
        return Ok(None);
    }
    Ok(Some(f.scale(1.0 / n)?))
}

fn alternate(
    op: &dyn PositiveOperator,
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    label: String,
    start: Vec<f64>,
) -> Result<Option<Run>> {
    let mesh = *u.mesh();
    let (p, q, pc, qc) = (e.p, e.q, e.p_prime(), e.q_prime());
    let start =
        StepFunction::from_atoms(&mesh, start)?
            .zip_with(sigma, |f, s| if s > 0.0 { f } else { 0.0 })?;
    let Some(mut f) = normalize(start, p, sigma)? else {
        return Ok(None);
    };
    let objective = |f: &StepFunction| -> Result<(f64, StepFunction)> {
        let h = op.apply(&f.zip_with(sigma, |a, b| a * b)?)?;
        Ok((h.lp_norm(q, u), h))
    };
    let (mut value, mut h) = objective(&f)?;
    let mut history = vec![value];
    let mut g_best = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && value > 0.0 {
        iterations += 1;
        let g = h.map(|v| v.powf(q - 1.0))?;
        let Some(g) = normalize(g, qc, u)? else { break };
        let back = op.apply(&g.zip_with(u, |a, b| a * b)?)?;
        let next = back.zip_with(sigma, |v, s| {
            if s > 0.0 && v > 0.0 {
                v.powf(pc - 1.0)
            } else {
                0.0
            }
        })?;
        let Some(next) = normalize(next, p, sigma)? else {
            break;
        };
        let (next_value, next_h) = objective(&next)?;
        if !(next_value > value) {
            converged = true;
            break;
        }
        let change = (next_value - value) / value;
        f = next;
        h = next_h;
        value = next_value;
        g_best = Some(g);
        history.push(value);
        if change < ITERATION_RTOL {
            converged = true;
            break;
        }
    }
    Ok(Some(Run {
        label,
        value,
        f,
        g: g_best,
        history,
        iterations,
        converged,
    }))
}

/// Lower bound for `‖T(·σ)‖_{L^p(σ) → L^q(u)}` by alternating maximization
/// of `∫ T(fσ) g u` from every start of the seed set.
pub fn strong_norm_lower(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    op: &dyn PositiveOperator,
    seeds: &SeedSet,
) -> Result<NormEstimate> {
    if u.mesh() != sigma.mesh() {
        return Err(Error::MeshMismatch);
    }
    e.validate()?;
    let mesh = *u.mesh();
    let degenerate = |seeds: &SeedSet| NormEstimate {
        value: 0.0,
        witness_f: None,
        witness_g: None,
        witness_seed: String::new(),
        iterations: 0,
        history: Vec::new(),
        seeds: seeds.clone(),
        converged: true,
        degenerate: true,
    };
    if sigma.is_zero() || u.is_zero() {
        return Ok(degenerate(seeds));
    }
    let starts = seeds.starts(&mesh, sigma, e.p_prime());
    let runs: Vec<Option<Run>> = starts
        .into_par_iter()
        .map(|(label, start)| alternate(op, u, sigma, e, label, start))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<Run> = None;
    for run in runs.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    match best {
        Some(run) if run.value > 0.0 => Ok(NormEstimate {
            value: run.value,
            witness_f: Some(run.f),
            witness_g: run.g,
            witness_seed: run.label,
            iterations: run.iterations,
            history: run.history,
            seeds: seeds.clone(),
            converged: run.converged,
            degenerate: false,
        }),
        _ => Ok(degenerate(seeds)),
    }
}

/// Lower bound for `‖T(·σ)‖_{L^p(σ) → L^{q,∞}(u)}`: the weak functional over
/// the strong witness and every start of the seed set.
pub fn weak_norm_lower(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    op: &dyn PositiveOperator,
    seeds: &SeedSet,
    strong: Option<&NormEstimate>,
) -> Result<NormEstimate> {
    if u.mesh() != sigma.mesh() {
        return Err(Error::MeshMismatch);
    }
    e.validate()?;
    let mesh = *u.mesh();
    let mut candidates: Vec<(String, StepFunction)> = Vec::new();
    if let Some(f) = strong.and_then(|s| s.witness_f.clone()) {
        candidates.push(("strong witness".into(), f));
    }
    for (label, v) in seeds.starts(&mesh, sigma, e.p_prime()) {
        candidates.push((label, StepFunction::from_atoms(&mesh, v)?));
    }
    let vals: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|(_, f)| weak_ratio(op, u, sigma, e, f))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in vals.iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| *v > b) {
                best = Some((i, *v));
            }
        }
    }
    let (value, witness, label) = match best {
        Some((i, v)) if v > 0.0 => (v, Some(candidates[i].1.clone()), candidates[i].0.clone()),
        _ => (0.0, None, String::new()),
    };
    Ok(NormEstimate {
        value,
        degenerate: witness.is_none(),
        witness_f: witness,
        witness_g: None,
        witness_seed: label,
        iterations: candidates.len(),
        history: vec![value],
        seeds: seeds.clone(),
        converged: true,
    })
}

/// Norm estimates against the testing constants of the sparse operator.
#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub testing: TestingReport,
    pub strong: NormEstimate,
    pub weak: NormEstimate,
    /// `strong / (direct + dual)`, absent when both constants vanish.
    pub r1: Option<f64>,
    /// `weak / dual`, absent when the dual constant vanishes.
    pub r2: Option<f64>,
}

pub fn testing_sandwich(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    family: &SparseFamily,
    rng_seed: u64,
) -> Result<SandwichReport> {
    let testing = dyadic_testing(u, sigma, e, family)?;
    let op = SparseOperator {
        alpha: e.alpha,
        family: family.clone(),
    };
    let seeds = SeedSet::standard(family, Some(&testing), rng_seed);
    let strong = strong_norm_lower(u, sigma, e, &op, &seeds)?;
    let weak = weak_norm_lower(u, sigma, e, &op, &seeds, Some(&strong))?;
    let denom = testing.direct + testing.dual;
    let r1 = (denom > 0.0).then(|| strong.value / denom);
    let r2 = (testing.dual > 0.0).then(|| weak.value / testing.dual);
    Ok(SandwichReport {
        testing,
        strong,
        weak,
        r1,
        r2,
    })
}

/// Testing constants against the `A_{s(p)}` and Fujii–Wilson characteristics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicBound {
    pub testing: TestingReport,
    pub a_sp: CharacteristicReport,
    pub fw_u: CharacteristicReport,
    pub a_sqp: CharacteristicReport,
    pub fw_sigma: CharacteristicReport,
    /// `dual / ([u,σ]_{A_{s(p)}}^{1/q} [u]_{A∞'}^{1/p'})`.
    pub ratio: Option<f64>,
    /// `direct / ([σ,u]_{A_{s(q')}}^{1/p'} [σ]_{A∞'}^{1/q})`.
    pub dual_ratio: Option<f64>,
}

fn finite_ratio(num: f64, den: f64) -> Option<f64> {
    (den.is_finite() && den > 0.0).then(|| num / den)
}

/// Checks the dual testing constant against `[u,σ]_{A_{s(p)}}^{1/q} [u]_{A∞'}^{1/p'}`
/// and, symmetrically, the direct one against `[σ,u]_{A_{s(q')}}^{1/p'} [σ]_{A∞'}^{1/q}`.
pub fn characteristic_bound_check(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    family: &SparseFamily,
) -> Result<CharacteristicBound> {
    if !e.is_sobolev() {
        return Err(Error::RangeCondition("1/p - 1/q = α/n"));
    }
    let testing = dyadic_testing(u, sigma, e, family)?;
    let a_sp = two_weight_ap(u, sigma, e.s_p())?;
    let fw_u = fujii_wilson(u)?;
    let a_sqp = two_weight_ap(sigma, u, e.s_qp())?;
    let fw_sigma = fujii_wilson(sigma)?;
    let ratio = finite_ratio(
        testing.dual,
        a_sp.value.powf(1.0 / e.q) * fw_u.value.powf(1.0 / e.p_prime()),
    );
    let dual_ratio = finite_ratio(
        testing.direct,
        a_sqp.value.powf(1.0 / e.p_prime()) * fw_sigma.value.powf(1.0 / e.q),
    );
    Ok(CharacteristicBound {
        testing,
        a_sp,
        fw_u,
        a_sqp,
        fw_sigma,
        ratio,
        dual_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpKind {
    Log,
    LogLog,
}

impl BumpKind {
    pub fn young(self, p: f64, delta: f64) -> YoungFunction {
        match self {
            BumpKind::Log => YoungFunction::log_bump(p, delta),
            BumpKind::LogLog => YoungFunction::loglog_bump(p, delta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpBound {
    pub testing: TestingReport,
    pub kind: BumpKind,
    pub delta: f64,
    /// Separated bump constant on the `u` side (`None` when refused).
    pub k_weak: Option<CharacteristicReport>,
    /// Separated bump constant on the `σ` side (`None` when refused).
    pub k_dual: Option<CharacteristicReport>,
    /// `dual testing / k_weak`.
    pub ratio: Option<f64>,
    /// `direct testing / k_dual`.
    pub dual_ratio: Option<f64>,
}

/// Checks the dual testing constant against the separated bump constant
/// `sup |Q|^{α/n+1/q-1/p} ‖u^{1/q}‖_{Φ,Q} ‖σ^{1/p'}‖_{p',Q}`, and the direct one
/// against its mirror when `(q/p)(1-α/n) ≥ 1`. Refuses when
/// `(p'/q')(1-α/n) < 1`.
pub fn bump_bound_check(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    family: &SparseFamily,
    kind: BumpKind,
    delta: f64,
) -> Result<BumpBound> {
    e.validate()?;
    let flags = range_conditions(e);
    if !flags.weak {
        return Err(Error::RangeCondition("(p'/q')(1 - α/n) ≥ 1"));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidYoung(format!(
            "bump parameter δ = {delta} must be positive"
        )));
    }
    let testing = dyadic_testing(u, sigma, e, family)?;
    let phi = kind.young(e.q, delta);
    let k_weak = bump_constant(u, sigma, e, &phi, &YoungFunction::power(e.p_prime()))?;
    let ratio = finite_ratio(testing.dual, k_weak.value);
    let (k_dual, dual_ratio) = if flags.dual {
        let psi = kind.young(e.p_prime(), delta);
        let k = bump_constant_with(
            u,
            sigma,
            e,
            &YoungFunction::power(e.q),
            &psi,
            e.q,
            e.p_prime(),
        )?;
        let r = finite_ratio(testing.direct, k.value);
        (Some(k), r)
    } else {
        (None, None)
    };
    Ok(BumpBound {
        testing,
        kind,
        delta,
        k_weak: Some(k_weak),
        k_dual,
        ratio,
        dual_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_cube() -> (Mesh, SparseFamily, StepFunction) {
        let mesh = Mesh::new(1, 0, 4, 0).unwrap();
        let fam = SparseFamily::new(&mesh, 0, [DyadicCube::new(1, 0, 0, &[0])]).unwrap();
        (mesh, fam, StepFunction::constant(&mesh, 1.0).unwrap())
    }

    #[test]
    fn weak_norm_examples() {
        let mesh = Mesh::new(1, 0, 2, 0).unwrap();
        let h = StepFunction::from_cell_fn(&mesh, |x| if x[0] < 0.25 { 2.0 } else { 1.0 }).unwrap();
        let one = StepFunction::constant(&mesh, 1.0).unwrap();
        assert!((weak_lorentz_norm(&h, &one, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let c = StepFunction::constant(&mesh, 3.0).unwrap();
        assert!((weak_lorentz_norm(&c, &one, 2.0).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_cube_sandwich() {
        let (_, fam, one) = single_cube();
        let e = ExponentTuple::new(1, 0.5, 2.0, 2.0).unwrap();
        let r = testing_sandwich(&one, &one, &e, &fam, 7).unwrap();
        assert!((r.testing.direct - 1.0).abs() < 1e-12);
        assert!((r.testing.dual - 1.0).abs() < 1e-12);
        assert!((r.strong.value - 1.0).abs() < 1e-10);
        assert!((r.weak.value - 1.0).abs() < 1e-10);
        assert!((r.r1.unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn empty_family_skips() {
        let (mesh, _, one) = single_cube();
        let e = ExponentTuple::new(1, 0.5, 2.0, 2.0).unwrap();
        let r = testing_sandwich(&one, &one, &e, &SparseFamily::empty(&mesh, 0), 7).unwrap();
        assert_eq!(r.testing.direct, 0.0);
        assert!(r.r1.is_none() && r.r2.is_none());
    }

    #[test]
    fn zero_sigma_is_degenerate() {
        let (mesh, fam, one) = single_cube();
        let e = ExponentTuple::new(1, 0.5, 2.0, 2.0).unwrap();
        let op = SparseOperator {
            alpha: 0.5,
            family: fam.clone(),
        };
        let zero = StepFunction::zero(&mesh);
        let est =
            strong_norm_lower(&one, &zero, &e, &op, &SeedSet::standard(&fam, None, 1)).unwrap();
        assert!(est.degenerate && est.value == 0.0);
        let t = dyadic_testing(&one, &zero, &e, &fam).unwrap();
        assert_eq!(t.dual, 0.0);
    }

    #[test]
    fn range_refusal() {
        let (_, fam, one) = single_cube();
        let e = ExponentTuple::new(1, 0.5, 2.0, 2.0).unwrap();
        assert!(matches!(
            bump_bound_check(&one, &one, &e, &fam, BumpKind::Log, 1.0),
            Err(Error::RangeCondition(_))
        ));
    }

    #[test]
    fn constant_weight_bound_ratios() {
        let (_, fam, one) = single_cube();
        let e = ExponentTuple::sobolev(1, 0.5, 4.0 / 3.0).unwrap();
        let b = characteristic_bound_check(&one, &one, &e, &fam).unwrap();
        assert!((b.ratio.unwrap() - 1.0).abs() < 1e-12);
        let b = bump_bound_check(&one, &one, &e, &fam, BumpKind::Log, 1.0).unwrap();
        let phi = YoungFunction::log_bump(e.q, 1.0);
        assert!((b.ratio.unwrap() - phi.inverse(1.0)).abs() < 1e-9);
    }
}
