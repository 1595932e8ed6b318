//! Sparse families, overlap level sets, the corona decomposition and
//! Carleson checks.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DyadicCube, GridIndex, Mesh, PrefixSums, StepFunction};
use crate::operators::frac_maximal_weighted;
use crate::weights::ExponentTuple;

/// Name of the sparsity condition reported on failure.
pub const SPARSITY_CONDITION: &str =
    "sparsity: strict sub-members cover at most half of each member";

/// A set of cubes from one shifted grid, ordered coarse-to-fine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseFamily {
    mesh: Mesh,
    shift: u8,
    cubes: Vec<DyadicCube>,
}

impl SparseFamily {
    /// Collects cubes of grid `shift`; duplicates are merged. The family is
    /// not certified; see [`verify_sparse`].
    pub fn new(
        mesh: &Mesh,
        shift: u8,
        cubes: impl IntoIterator<Item = DyadicCube>,
    ) -> Result<Self> {
        let grid = GridIndex::new(mesh, shift);
        let mut idx = Vec::new();
        for q in cubes {
            if q.shift != shift {
                return Err(Error::MixedGrids(
                    q,
                    DyadicCube::new(mesh.dim, shift, q.level, &q.coords[..mesh.dim]),
                ));
            }
            idx.push(grid.index_of(&q).ok_or(Error::CubeOutsideMesh(q))?);
        }
        idx.sort_unstable();
        idx.dedup();
        Ok(SparseFamily {
            mesh: *mesh,
            shift,
            cubes: idx.into_iter().map(|i| grid.cubes()[i]).collect(),
        })
    }

    pub fn empty(mesh: &Mesh, shift: u8) -> Self {
        SparseFamily {
            mesh: *mesh,
            shift,
            cubes: Vec::new(),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn shift(&self) -> u8 {
        self.shift
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Members contained in `root`, in family order.
    pub fn restricted(&self, root: &DyadicCube) -> SparseFamily {
        let cubes = self
            .cubes
            .iter()
            .copied()
            .filter(|q| root.contains(q, &self.mesh))
            .collect();
        SparseFamily {
            mesh: self.mesh,
            shift: self.shift,
            cubes,
        }
    }
}

/// For each cube of a list drawn from one grid (sorted coarse-to-fine),
/// the position of the smallest other member strictly containing it.
fn family_parents(mesh: &Mesh, cubes: &[DyadicCube]) -> Vec<Option<usize>> {
    let pos: HashMap<DyadicCube, usize> = cubes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    cubes
        .iter()
        .map(|q| {
            let mut c = *q;
            while c.level > mesh.min_level() {
                c = c.parent(mesh);
                if let Some(&i) = pos.get(&c) {
                    return Some(i);
                }
            }
            None
        })
        .collect()
}

/// Depth of each member in the laminar family (maximal members have depth 1).
fn family_depths(parents: &[Option<usize>]) -> Vec<u32> {
    let mut depth = vec![0u32; parents.len()];
    for i in 0..parents.len() {
        depth[i] = match parents[i] {
            Some(p) => depth[p] + 1,
            None => 1,
        };
    }
    depth
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeSparsity {
    pub cube: DyadicCube,
    /// `|E(Q)|` in atom-volume units.
    pub remainder_atoms: i128,
    /// `|∪{Q' ∈ S : Q' ⊊ Q}| / |Q|`.
    pub covered_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityCertificate {
    pub cubes: Vec<CubeSparsity>,
    pub worst_ratio: f64,
    pub worst_cube: Option<DyadicCube>,
}

/// Exact check that `|∪{Q' ∈ S : Q' ⊊ Q}| ≤ |Q|/2` for every member, which
/// is equivalent to `|E(Q)| ≤ |Q| ≤ 2|E(Q)|`.
pub fn verify_sparse(family: &SparseFamily) -> Result<SparsityCertificate> {
    let mesh = family.mesh;
    let cubes = &family.cubes;
    let parents = family_parents(&mesh, cubes);
    let mut covered = vec![0i128; cubes.len()];
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            covered[*p] += mesh.cube_atom_measure(cubes[i].level);
        }
    }
    let mut out = Vec::with_capacity(cubes.len());
    let mut worst = (0.0f64, None);
    for (i, q) in cubes.iter().enumerate() {
        let total = mesh.cube_atom_measure(q.level);
        let remainder = total - covered[i];
        if 2 * covered[i] > total || remainder * 2 < total {
            return Err(Error::SparsityViolation {
                condition: SPARSITY_CONDITION,
                cube: *q,
            });
        }
        let ratio = covered[i] as f64 / total as f64;
        if worst.1.is_none() || ratio > worst.0 {
            worst = (ratio, Some(*q));
        }
        out.push(CubeSparsity {
            cube: *q,
            remainder_atoms: remainder,
            covered_ratio: ratio,
        });
    }
    Ok(SparsityCertificate {
        cubes: out,
        worst_ratio: worst.0,
        worst_cube: worst.1,
    })
}

/// Constant `2^{n+1}/(1 - 2^{-α})` in `I^{D}_α f ≤ C · I^S_α f`.
pub fn domination_constant(n: usize, alpha: f64) -> f64 {
    2f64.powi(n as i32 + 1) / (1.0 - 2f64.powf(-alpha))
}

/// Stopping-time sparse family of `f` on grid `shift`: the union over `k`
/// of the maximal enumerated cubes with `⨍_Q f > a^k`, `a = 2^{n+1}`.
pub fn build_sparse(f: &StepFunction, shift: u8, alpha: f64) -> Result<(SparseFamily, f64)> {
    let mesh = *f.mesh();
    if f.is_zero() {
        return Err(Error::ZeroFunction);
    }
    if !(alpha > 0.0 && alpha < mesh.dim as f64) {
        return Err(Error::InvalidExponents(format!(
            "α = {alpha} outside (0, n)"
        )));
    }
    let grid = GridIndex::new(&mesh, shift);
    let ps = PrefixSums::new(f);
    let cubes = grid.cubes();
    let avg: Vec<f64> = cubes.iter().map(|q| ps.average(q)).collect();
    let parents: Vec<Option<usize>> = (0..cubes.len()).map(|i| grid.parent_index(i)).collect();
    let a = 2f64.powi(mesh.dim as i32 + 1);

    let max_avg = avg.iter().copied().fold(0.0, f64::max);
    let min_top = cubes
        .iter()
        .zip(&avg)
        .filter(|(q, &v)| q.level == mesh.min_level() && v > 0.0)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut k_lo = min_top.log(a).floor() as i32;
    while a.powi(k_lo) >= min_top {
        k_lo -= 1;
    }
    let mut k_hi = max_avg.log(a).ceil() as i32;
    while a.powi(k_hi) >= max_avg {
        k_hi -= 1;
    }

    let mut selected = vec![false; cubes.len()];
    let mut blocked = vec![false; cubes.len()];
    for k in k_lo..=k_hi {
        let threshold = a.powi(k);
        blocked.iter_mut().for_each(|b| *b = false);
        for i in 0..cubes.len() {
            let covered = parents[i].is_some_and(|p| blocked[p]);
            if covered {
                blocked[i] = true;
            } else if avg[i] > threshold {
                selected[i] = true;
                blocked[i] = true;
            }
        }
    }
    let family = SparseFamily {
        mesh,
        shift,
        cubes: cubes
            .iter()
            .zip(&selected)
            .filter(|(_, &s)| s)
            .map(|(q, _)| *q)
            .collect(),
    };
    Ok((family, domination_constant(mesh.dim, alpha)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapLevelSet {
    /// `|{x ∈ R0 : Σ_{Q ∈ S, Q ⊆ R0} χ_Q(x) > k}|` in atom-volume units.
    pub measure_atoms: i128,
    pub measure: f64,
    /// `|R0|` in atom-volume units.
    pub root_atoms: i128,
    /// The generation-`(k+1)` members whose union is the level set.
    pub generation: Vec<DyadicCube>,
}

impl OverlapLevelSet {
    /// Exact test of `|{count > k}| ≤ 2^{-k}|R0|`.
    pub fn within_decay(&self, k: u32) -> bool {
        self.measure_atoms
            .checked_mul(1i128 << k.min(100))
            .is_some_and(|m| m <= self.root_atoms)
    }
}

/// The set where more than `k` members of `S(R0)` overlap.
pub fn overlap_level_set(family: &SparseFamily, root: &DyadicCube, k: u32) -> OverlapLevelSet {
    let mesh = family.mesh;
    let inside = family.restricted(root);
    let depth = family_depths(&family_parents(&mesh, &inside.cubes));
    let generation: Vec<DyadicCube> = inside
        .cubes
        .iter()
        .zip(&depth)
        .filter(|(_, &d)| d == k + 1)
        .map(|(q, _)| *q)
        .collect();
    let measure_atoms: i128 = generation
        .iter()
        .map(|q| mesh.cube_atom_measure(q.level))
        .sum();
    OverlapLevelSet {
        measure_atoms,
        measure: measure_atoms as f64 * mesh.atom_volume(),
        root_atoms: mesh.cube_atom_measure(root.level),
        generation,
    }
}

/// Which product defines the corona slices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceMode {
    /// `(⨍_Q u)^{1/q}(⨍_Q σ)^{1/p'}`.
    #[default]
    Standard,
    /// The same product times `|Q|^{α/n+1/q-1/p}`.
    Fractional,
}

/// Integer `a` with `2^a < v ≤ 2^{a+1}` for finite `v > 0`.
pub fn dyadic_slice(v: f64) -> i32 {
    debug_assert!(v > 0.0 && v.is_finite());
    let mut a = v.log2().ceil() as i32 - 1;
    while 2f64.powi(a + 1) < v {
        a += 1;
    }
    while 2f64.powi(a) >= v {
        a -= 1;
    }
    a
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoronaCube {
    pub cube: DyadicCube,
    /// The slicing product.
    pub value: f64,
    /// `|Q|^{α/n} ⨍_Q u`.
    pub frac_avg: f64,
    /// Smallest stopping cube containing the cube (itself if stopping).
    pub stop_parent: DyadicCube,
    /// `2^{-b} F(P) < F(Q) ≤ 2^{1-b} F(P)` with `P` the stopping parent.
    pub b: i32,
    pub stopping: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingCube {
    pub cube: DyadicCube,
    pub generation: u32,
    /// The previous-generation stopping cube containing it.
    pub previous: Option<DyadicCube>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoronaSlice {
    pub a: i32,
    pub cubes: Vec<CoronaCube>,
    pub stopping: Vec<StoppingCube>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoronaDecomposition {
    pub exponents: ExponentTuple,
    pub mode: SliceMode,
    pub mesh: Mesh,
    pub root: DyadicCube,
    /// Non-empty slices in increasing `a`.
    pub slices: Vec<CoronaSlice>,
    /// Members of `S(R)` with vanishing `u`- or `σ`-average.
    pub unassigned: Vec<DyadicCube>,
    /// `log2` of the largest slicing product.
    pub gamma: f64,
}

/// Corona decomposition of `S(R)` relative to `(u, σ)`.
pub fn corona_decompose(
    family: &SparseFamily,
    root: &DyadicCube,
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    mode: SliceMode,
) -> Result<CoronaDecomposition> {
    let mesh = family.mesh;
    if u.mesh() != &mesh || sigma.mesh() != &mesh {
        return Err(Error::MeshMismatch);
    }
    if root.shift != family.shift {
        return Err(Error::MixedGrids(
            *root,
            family.cubes.first().copied().unwrap_or(*root),
        ));
    }
    GridIndex::new(&mesh, family.shift)
        .index_of(root)
        .ok_or(Error::CubeOutsideMesh(*root))?;
    e.validate()?;
    let (pu, ps) = (PrefixSums::new(u), PrefixSums::new(sigma));
    let n = mesh.dim as f64;
    let members = family.restricted(root);

    let mut by_slice: BTreeMap<i32, Vec<(DyadicCube, f64, f64)>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    let mut gamma = f64::NEG_INFINITY;
    for q in &members.cubes {
        let (au, asg) = (pu.average(q), ps.average(q));
        if !(au > 0.0 && asg > 0.0) {
            unassigned.push(*q);
            continue;
        }
        let mut v = au.powf(1.0 / e.q) * asg.powf(1.0 / e.p_prime());
        if mode == SliceMode::Fractional {
            v *= q.volume().powf(e.volume_exponent());
        }
        gamma = gamma.max(v.log2());
        by_slice.entry(dyadic_slice(v)).or_default().push((
            *q,
            v,
            q.volume().powf(e.alpha / n) * au,
        ));
    }

    let mut slices = Vec::new();
    for (a, list) in by_slice {
        let mut stop_pos: HashMap<DyadicCube, usize> = HashMap::new();
        let mut stopping: Vec<StoppingCube> = Vec::new();
        let mut stop_f: Vec<f64> = Vec::new();
        let mut cubes = Vec::with_capacity(list.len());
        for (q, v, fq) in list {
            let mut anc = q;
            let mut found = None;
            while anc.level > mesh.min_level() {
                anc = anc.parent(&mesh);
                if let Some(&i) = stop_pos.get(&anc) {
                    found = Some(i);
                    break;
                }
            }
            let is_stop = match found {
                None => true,
                Some(i) => fq > 2.0 * stop_f[i],
            };
            if is_stop {
                let generation = found.map_or(0, |i| stopping[i].generation + 1);
                stop_pos.insert(q, stopping.len());
                stopping.push(StoppingCube {
                    cube: q,
                    generation,
                    previous: found.map(|i| stopping[i].cube),
                });
                stop_f.push(fq);
                cubes.push(CoronaCube {
                    cube: q,
                    value: v,
                    frac_avg: fq,
                    stop_parent: q,
                    b: 1,
                    stopping: true,
                });
            } else {
                let i = found.expect("non-stopping cubes have a stopping ancestor");
                let b = -dyadic_slice_ratio(fq, stop_f[i]);
                cubes.push(CoronaCube {
                    cube: q,
                    value: v,
                    frac_avg: fq,
                    stop_parent: stopping[i].cube,
                    b,
                    stopping: false,
                });
            }
        }
        slices.push(CoronaSlice { a, cubes, stopping });
    }
    Ok(CoronaDecomposition {
        exponents: *e,
        mode,
        mesh,
        root: *root,
        slices,
        unassigned,
        gamma,
    })
}

/// Integer `c` with `2^c F(P) < F(Q) ≤ 2^{c+1} F(P)`, decided by exact
/// power-of-two scalings.
fn dyadic_slice_ratio(fq: f64, fp: f64) -> i32 {
    let mut c = (fq / fp).log2().ceil() as i32 - 1;
    while 2f64.powi(c + 1) * fp < fq {
        c += 1;
    }
    while 2f64.powi(c) * fp >= fq {
        c -= 1;
    }
    c
}

/// Key of a sub-slice `Q^a_b(P)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubSliceKey {
    pub a: i32,
    pub stop: DyadicCube,
    pub b: i32,
}

impl CoronaDecomposition {
    pub fn slice(&self, a: i32) -> Option<&CoronaSlice> {
        self.slices.iter().find(|s| s.a == a)
    }

    /// All sub-slices `Q^a_b(P)`, keyed by `(a, P, b)`, cubes in family order.
    pub fn sub_slices(&self) -> BTreeMap<SubSliceKey, Vec<DyadicCube>> {
        let mut out: BTreeMap<SubSliceKey, Vec<DyadicCube>> = BTreeMap::new();
        for s in &self.slices {
            for c in &s.cubes {
                out.entry(SubSliceKey {
                    a: s.a,
                    stop: c.stop_parent,
                    b: c.b,
                })
                .or_default()
                .push(c.cube);
            }
        }
        out
    }

    /// `F^a_b(k, P)`: the generation-`(k+1)` cubes of the sub-slice, whose
    /// union is where more than `k` of its cubes overlap.
    pub fn level_set(&self, key: &SubSliceKey, k: u32) -> Vec<DyadicCube> {
        let subs = self.sub_slices();
        let Some(cubes) = subs.get(key) else {
            return Vec::new();
        };
        let depth = family_depths(&family_parents(&self.mesh, cubes));
        cubes
            .iter()
            .zip(&depth)
            .filter(|(_, &d)| d == k + 1)
            .map(|(q, _)| *q)
            .collect()
    }

    /// Checks the slicing, stopping, reverse and sub-slice inequalities and
    /// the disjoint-union structure against the weights, exactly.
    pub fn certify(
        &self,
        family: &SparseFamily,
        u: &StepFunction,
        sigma: &StepFunction,
    ) -> Result<CoronaCertificate> {
        let mesh = self.mesh;
        let fail = |what: &'static str, cube: DyadicCube| {
            Err(Error::CoronaViolation {
                condition: what,
                cube,
            })
        };
        let (pu, ps) = (PrefixSums::new(u), PrefixSums::new(sigma));
        let e = &self.exponents;
        let n = mesh.dim as f64;
        let members = family.restricted(&self.root);

        let mut seen: HashSet<DyadicCube> = HashSet::new();
        for q in &self.unassigned {
            if pu.average(q) > 0.0 && ps.average(q) > 0.0 {
                return fail("corona: cube with positive averages left unassigned", *q);
            }
            seen.insert(*q);
        }
        let mut cert = CoronaCertificate::default();
        for s in &self.slices {
            let stop_f: HashMap<DyadicCube, f64> =
                s.stopping.iter().map(|c| (c.cube, 0.0)).collect();
            let mut fvals: HashMap<DyadicCube, f64> = HashMap::new();
            for c in &s.cubes {
                if !seen.insert(c.cube) {
                    return fail("corona: cube assigned twice", c.cube);
                }
                let (au, asg) = (pu.average(&c.cube), ps.average(&c.cube));
                let mut v = au.powf(1.0 / e.q) * asg.powf(1.0 / e.p_prime());
                if self.mode == SliceMode::Fractional {
                    v *= c.cube.volume().powf(e.volume_exponent());
                }
                if !(2f64.powi(s.a) < v && v <= 2f64.powi(s.a + 1)) {
                    return fail("corona: slice membership 2^a < value ≤ 2^(a+1)", c.cube);
                }
                fvals.insert(c.cube, c.cube.volume().powf(e.alpha / n) * au);
                cert.slice_checks += 1;
            }
            for st in &s.stopping {
                if let Some(prev) = st.previous {
                    if !(fvals[&st.cube] > 2.0 * fvals[&prev]) {
                        return fail("corona: stopping inequality F(Q) > 2F(P)", st.cube);
                    }
                    cert.stopping_checks += 1;
                }
            }
            for c in &s.cubes {
                // The stopping parent is the smallest stopping cube containing Q.
                let mut anc = c.cube;
                let mut smallest = stop_f.contains_key(&anc).then_some(anc);
                while smallest.is_none() && anc.level > mesh.min_level() {
                    anc = anc.parent(&mesh);
                    if stop_f.contains_key(&anc) {
                        smallest = Some(anc);
                    }
                }
                if smallest != Some(c.stop_parent) || c.stopping != (c.stop_parent == c.cube) {
                    return fail(
                        "corona: parent map is the smallest containing stopping cube",
                        c.cube,
                    );
                }
                let (fq, fp) = (fvals[&c.cube], fvals[&c.stop_parent]);
                if !c.stopping && !(fq <= 2.0 * fp) {
                    return fail("corona: reverse inequality F(Q) ≤ 2F(Π(Q))", c.cube);
                }
                cert.reverse_checks += 1;
                if !(2f64.powi(-c.b) * fp < fq && fq <= 2f64.powi(1 - c.b) * fp) {
                    return fail(
                        "corona: sub-slice bounds 2^(-b)F(P) < F(Q) ≤ 2^(1-b)F(P)",
                        c.cube,
                    );
                }
                cert.subslice_checks += 1;
            }
            cert.stopping_cubes += s.stopping.len();
        }
        for q in &members.cubes {
            if !seen.contains(q) {
                return fail("corona: member of S(R) missing from the partition", *q);
            }
        }
        if seen.len() != members.len() {
            let stray = seen
                .iter()
                .find(|q| !members.cubes.contains(q))
                .copied()
                .unwrap_or(self.root);
            return fail("corona: cube outside S(R) in the partition", stray);
        }
        let subs = self.sub_slices();
        cert.sub_slices = subs.len();
        cert.max_sub_slice = subs.values().map(Vec::len).max().unwrap_or(0);
        cert.slices = self.slices.len();
        Ok(cert)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoronaCertificate {
    pub slices: usize,
    pub stopping_cubes: usize,
    pub sub_slices: usize,
    pub max_sub_slice: usize,
    pub slice_checks: usize,
    pub stopping_checks: usize,
    pub reverse_checks: usize,
    pub subslice_checks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// Smallest `A` with `Σ_{Q ⊆ R} c_Q ≤ A μ(R)` for all grid cubes `R`.
    pub constant: f64,
    pub witness: Option<DyadicCube>,
}

/// Smallest Carleson constant of the sequence `c` (cubes of one grid).
pub fn carleson_check(c: &[(DyadicCube, f64)], mu: &StepFunction) -> Result<CarlesonReport> {
    let mesh = *mu.mesh();
    let Some(first) = c.first() else {
        return Ok(CarlesonReport {
            constant: 0.0,
            witness: None,
        });
    };
    let grid = GridIndex::new(&mesh, first.0.shift);
    let mut acc = vec![0.0f64; grid.len()];
    for (q, v) in c {
        let mut i = grid.index_of(q).ok_or(Error::CubeOutsideMesh(*q))?;
        loop {
            acc[i] += v;
            match grid.parent_index(i) {
                Some(p) => i = p,
                None => break,
            }
        }
    }
    let pm = PrefixSums::new(mu);
    let mut best = CarlesonReport {
        constant: 0.0,
        witness: None,
    };
    for (i, r) in grid.cubes().iter().enumerate() {
        if acc[i] == 0.0 {
            continue;
        }
        let m = pm.integral(r);
        let ratio = if m > 0.0 { acc[i] / m } else { f64::INFINITY };
        if ratio > best.constant || best.witness.is_none() {
            best = CarlesonReport {
                constant: ratio,
                witness: Some(*r),
            };
        }
    }
    Ok(best)
}

/// `(Σ c_Q a(f,Q)^q)^{1/q}` and `A^{1/q} ‖M^D_{α,μ} f‖_{L^q(μ)}` with
/// `a(f,Q) = μ(Q)^{α/n-1} ∫_Q f dμ`.
pub fn carleson_embedding_check(
    c: &[(DyadicCube, f64)],
    mu: &StepFunction,
    f: &StepFunction,
    e: &ExponentTuple,
) -> Result<(f64, f64)> {
    let mesh = *mu.mesh();
    let Some(first) = c.first() else {
        return Ok((0.0, 0.0));
    };
    let shift = first.0.shift;
    let a = carleson_check(c, mu)?.constant;
    let fm = PrefixSums::new(&f.zip_with(mu, |x, y| x * y)?);
    let pm = PrefixSums::new(mu);
    let n = mesh.dim as f64;
    let mut lhs = 0.0;
    for (q, v) in c {
        let m = pm.integral(q);
        if m > 0.0 {
            lhs += v * (m.powf(e.alpha / n - 1.0) * fm.integral(q)).powf(e.q);
        }
    }
    let maxf = frac_maximal_weighted(f, mu, e.alpha, shift)?;
    let rhs = a.powf(1.0 / e.q) * maxf.lp_norm(e.q, mu);
    Ok((lhs.powf(1.0 / e.q), rhs))
}

/// Carleson sequence `c_Q = u(Q)` over the stopping cubes of one slice.
pub fn stopping_sequence(
    cd: &CoronaDecomposition,
    a: i32,
    u: &StepFunction,
) -> Vec<(DyadicCube, f64)> {
    let pu = PrefixSums::new(u);
    cd.slice(a)
        .map(|s| {
            s.stopping
                .iter()
                .map(|c| (c.cube, pu.integral(&c.cube)))
                .collect()
        })
        .unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub key: SubSliceKey,
    pub k: u32,
    /// `σ(F^a_b(k,P)) / σ(P)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `-log2(ratio)` against `k` over positive rows.
    pub fitted_rate: Option<f64>,
    /// `1 + (p'/q')(α/n)`, reported only.
    pub proof_rate: f64,
    /// Largest `2^k · ratio`.
    pub worst_scaled: f64,
    pub skipped: usize,
}

pub const DECAY_MAX_K: u32 = 10;

/// `σ(F^a_b(k,P))/σ(P)` for `k = 0..=10` over all sub-slices.
pub fn sigma_decay_check(cd: &CoronaDecomposition, sigma: &StepFunction) -> DecayTable {
    let ps = PrefixSums::new(sigma);
    let e = &cd.exponents;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (key, cubes) in cd.sub_slices() {
        let sp = ps.integral(&key.stop);
        if !(sp > 0.0) {
            skipped += 1;
            continue;
        }
        let depth = family_depths(&family_parents(&cd.mesh, &cubes));
        for k in 0..=DECAY_MAX_K {
            let mass: f64 = cubes
                .iter()
                .zip(&depth)
                .filter(|(_, &d)| d == k + 1)
                .map(|(q, _)| ps.integral(q))
                .sum();
            rows.push(DecayRow {
                key,
                k,
                ratio: mass / sp,
            });
        }
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.ratio > 0.0 && r.k > 0)
        .map(|r| (r.k as f64, -r.ratio.log2()))
        .collect();
    let fitted_rate = (pts.len() >= 2).then(|| {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / m, sy / m);
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            f64::NAN
        }
    });
    let worst_scaled = rows
        .iter()
        .map(|r| r.ratio * 2f64.powi(r.k as i32))
        .fold(0.0, f64::max);
    DecayTable {
        rows,
        fitted_rate,
        proof_rate: 1.0 + e.p_prime() / e.q_prime() * e.alpha / e.n as f64,
        worst_scaled,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nested(mesh: &Mesh, depth: i32) -> SparseFamily {
        SparseFamily::new(mesh, 0, (0..=depth).map(|j| DyadicCube::new(1, 0, j, &[0]))).unwrap()
    }

    #[test]
    fn nested_chain_is_sparse_with_half_ratio() {
        let mesh = Mesh::new(1, 0, 4, 0).unwrap();
        let cert = verify_sparse(&nested(&mesh, 3)).unwrap();
        assert_eq!(cert.worst_ratio, 0.5);
    }

    #[test]
    fn full_grid_is_not_sparse() {
        let mesh = Mesh::new(1, 0, 2, 0).unwrap();
        let all = SparseFamily::new(&mesh, 0, crate::mesh::enumerate_cubes(&mesh, 0)).unwrap();
        match verify_sparse(&all) {
            Err(Error::SparsityViolation { cube, .. }) => assert_eq!(cube.level, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_function_gives_root_only() {
        let mesh = Mesh::new(1, 0, 4, 0).unwrap();
        let one = StepFunction::constant(&mesh, 1.0).unwrap();
        let (s, c) = build_sparse(&one, 0, 0.5).unwrap();
        assert_eq!(s.cubes(), &[DyadicCube::new(1, 0, 0, &[0])]);
        assert!((c - 4.0 / (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        assert!(build_sparse(&StepFunction::zero(&mesh), 0, 0.5).is_err());
    }

    #[test]
    fn overlap_on_nested_chain() {
        let mesh = Mesh::new(1, 0, 4, 0).unwrap();
        let s = nested(&mesh, 3);
        let root = DyadicCube::new(1, 0, 0, &[0]);
        let o = overlap_level_set(&s, &root, 2);
        assert!((o.measure - 0.25).abs() < 1e-15);
        assert_eq!(o.measure_atoms * 4, o.root_atoms);
        let single = SparseFamily::new(&mesh, 0, [root]).unwrap();
        assert_eq!(overlap_level_set(&single, &root, 1).measure_atoms, 0);
    }

    #[test]
    fn slices_are_half_open_on_the_left() {
        assert_eq!(dyadic_slice(1.0), -1);
        assert_eq!(dyadic_slice(2.0), 0);
        assert_eq!(dyadic_slice(2.5), 1);
        assert_eq!(dyadic_slice(0.3), -2);
    }

    #[test]
    fn hand_traced_corona() {
        let mesh = Mesh::new(1, 0, 4, 0).unwrap();
        let s = nested(&mesh, 3);
        let one = StepFunction::constant(&mesh, 1.0).unwrap();
        let e = ExponentTuple::sobolev(1, 0.5, 4.0 / 3.0).unwrap();
        let root = DyadicCube::new(1, 0, 0, &[0]);
        let cd = corona_decompose(&s, &root, &one, &one, &e, SliceMode::Standard).unwrap();
        assert_eq!(cd.slices.len(), 1);
        let slice = &cd.slices[0];
        assert_eq!(slice.a, -1);
        assert_eq!(slice.stopping.len(), 1);
        assert_eq!(slice.stopping[0].cube, root);
        let bs: Vec<i32> = slice.cubes.iter().map(|c| c.b).collect();
        assert_eq!(bs, vec![1, 1, 2, 2]);
        let cert = cd.certify(&s, &one, &one).unwrap();
        assert_eq!(cert.max_sub_slice, 2);
        for key in cd.sub_slices().keys() {
            assert!(cd.level_set(key, 2).is_empty());
        }
    }

    #[test]
    fn antichain_has_unit_carleson_constant() {
        let mesh = Mesh::new(1, 0, 3, 0).unwrap();
        let one = StepFunction::constant(&mesh, 1.0).unwrap();
        let c: Vec<_> = (0..4)
            .map(|m| DyadicCube::new(1, 0, 2, &[m]))
            .map(|q| (q, q.volume()))
            .collect();
        let r = carleson_check(&c, &one).unwrap();
        assert!((r.constant - 1.0).abs() < 1e-15);
    }
}
