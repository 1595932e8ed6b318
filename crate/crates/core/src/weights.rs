//! Exponent bookkeeping, weight characteristics and weight generators.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mesh::{
    characteristic_corpus, containing_cube, pairwise_sum, pow2, AtomRect, DyadicCube, GridIndex,
    Mesh, PrefixSums, StepFunction, ZeroCounter, MAX_DIM,
};
use crate::orlicz::{cube_distribution, luxemburg_from_distribution, YoungFunction};

const IDENTITY_TOL: f64 = 1e-12;

/// `(n, α, p, q)` together with the derived exponents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTuple {
    pub n: usize,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
}

impl ExponentTuple {
    pub fn new(n: usize, alpha: f64, p: f64, q: f64) -> Result<Self> {
        let e = ExponentTuple { n, alpha, p, q };
        e.validate()?;
        Ok(e)
    }

    /// The tuple with `1/p - 1/q = α/n`.
    pub fn sobolev(n: usize, alpha: f64, p: f64) -> Result<Self> {
        let inv = 1.0 / p - alpha / n as f64;
        if !(inv > 0.0) {
            return Err(Error::InvalidExponents(format!(
                "p = {p} ≥ n/α leaves no Sobolev partner"
            )));
        }
        Self::new(n, alpha, p, 1.0 / inv)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n as f64;
        if self.n == 0 || self.n > MAX_DIM {
            return Err(Error::InvalidExponents(format!(
                "dimension {} unsupported",
                self.n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < n) {
            return Err(Error::InvalidExponents(format!(
                "α = {} outside (0, n)",
                self.alpha
            )));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidExponents(format!(
                "p = {} must lie in (1, ∞)",
                self.p
            )));
        }
        if !(self.q >= self.p && self.q.is_finite()) {
            return Err(Error::InvalidExponents(format!(
                "q = {} must satisfy q ≥ p",
                self.q
            )));
        }
        let s = self.s_p();
        let via_conj = self.s_qp() / (self.s_qp() - 1.0);
        if ((s - via_conj) / s).abs() > IDENTITY_TOL {
            return Err(Error::InvalidExponents("s(p)' ≠ s(q') numerically".into()));
        }
        if self.is_sobolev() {
            let closed = self.p * (n - self.alpha) / (n - self.alpha * self.p);
            if ((s - closed) / s).abs() > IDENTITY_TOL {
                return Err(Error::InvalidExponents(
                    "s(p) disagrees with its Sobolev closed form".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn p_prime(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn q_prime(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    /// `s(p) = 1 + q/p'`.
    pub fn s_p(&self) -> f64 {
        1.0 + self.q / self.p_prime()
    }

    /// `s(q') = 1 + p'/q`.
    pub fn s_qp(&self) -> f64 {
        1.0 + self.p_prime() / self.q
    }

    pub fn is_sobolev(&self) -> bool {
        (1.0 / self.p - 1.0 / self.q - self.alpha / self.n as f64).abs() <= IDENTITY_TOL
    }

    /// Exponent of `|Q|` in the fractional products: `α/n + 1/q - 1/p`.
    pub fn volume_exponent(&self) -> f64 {
        self.alpha / self.n as f64 + 1.0 / self.q - 1.0 / self.p
    }
}

/// Which range restrictions hold for an exponent tuple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeFlags {
    /// `(p'/q')(1 - α/n) ≥ 1`.
    pub weak: bool,
    /// `min(q/p, p'/q')(1 - α/n) ≥ 1`.
    pub strong: bool,
    /// `(q/p)(1 - α/n) ≥ 1`.
    pub dual: bool,
}

pub fn range_conditions(e: &ExponentTuple) -> RangeFlags {
    let gap = 1.0 - e.alpha / e.n as f64;
    let weak_lhs = e.p_prime() / e.q_prime() * gap;
    let dual_lhs = e.q / e.p * gap;
    let holds = |x: f64| x >= 1.0 - IDENTITY_TOL;
    RangeFlags {
        weak: holds(weak_lhs),
        strong: holds(weak_lhs.min(dual_lhs)),
        dual: holds(dual_lhs),
    }
}

mod infinite_as_string {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unexpected value `{s}`"))),
        }
    }
}

/// A named supremum over a cube corpus with the cube attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicReport {
    pub name: String,
    /// Serialized as the string `"inf"` when infinite.
    #[serde(with = "infinite_as_string")]
    pub value: f64,
    pub witness: Option<DyadicCube>,
    pub corpus_size: usize,
    /// Cubes where the quantity is undefined (null denominators).
    pub skipped: usize,
}

impl CharacteristicReport {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

/// Per-cube outcome of a characteristic scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CubeValue {
    Value(f64),
    Skip,
}

/// Max over the corpus; the first cube in corpus order wins ties.
pub fn scan_corpus<F>(name: &str, corpus: &[DyadicCube], per_cube: F) -> CharacteristicReport
where
    F: Fn(&DyadicCube) -> CubeValue + Sync,
{
    let vals: Vec<CubeValue> = corpus.par_iter().map(&per_cube).collect();
    reduce_corpus(name, corpus, vals)
}

/// Deterministic max over precomputed per-cube values.
pub fn reduce_corpus(
    name: &str,
    corpus: &[DyadicCube],
    vals: Vec<CubeValue>,
) -> CharacteristicReport {
    let mut best = 0.0f64;
    let mut witness = None;
    let mut skipped = 0;
    for (q, v) in corpus.iter().zip(vals) {
        match v {
            CubeValue::Skip => skipped += 1,
            CubeValue::Value(x) => {
                if witness.is_none() || x > best {
                    best = x;
                    witness = Some(*q);
                }
            }
        }
    }
    CharacteristicReport {
        name: name.to_string(),
        value: best,
        witness,
        corpus_size: corpus.len(),
        skipped,
    }
}

/// Averages of `w` and of a negative power of `w`, with zero tracking.
struct NegativePower {
    direct: PrefixSums,
    negative: PrefixSums,
    zeros: ZeroCounter,
    atoms_per_cube: Box<dyn Fn(&DyadicCube) -> u64 + Sync + Send>,
}

impl NegativePower {
    fn new(pos: &StepFunction, w: &StepFunction, neg_exp: f64) -> Result<Self> {
        let negative = w.map(|v| if v > 0.0 { v.powf(-neg_exp) } else { 0.0 })?;
        let mesh = *w.mesh();
        Ok(NegativePower {
            direct: PrefixSums::new(pos),
            negative: PrefixSums::new(&negative),
            zeros: ZeroCounter::new(w),
            atoms_per_cube: Box::new(move |q| {
                let r = q.atom_rect(&mesh).intersect(&mesh.box_rect(), mesh.dim);
                r.measure(mesh.dim) as u64
            }),
        })
    }

    /// `(⨍ pos, ⨍ w^{-neg_exp})`, or `None`/∞ conventions for zeros.
    fn averages(&self, q: &DyadicCube) -> std::result::Result<(f64, f64), CubeValue> {
        let z = self.zeros.zeros_in(q);
        if z > 0 {
            return Err(if z == (self.atoms_per_cube)(q) {
                CubeValue::Skip
            } else {
                CubeValue::Value(f64::INFINITY)
            });
        }
        Ok((self.direct.average(q), self.negative.average(q)))
    }
}

/// `[w]_{A_p} = sup_Q (⨍_Q w)(⨍_Q w^{1-p'})^{p-1}`.
pub fn ap_constant(w: &StepFunction, p: f64) -> Result<CharacteristicReport> {
    ap_constant_on(w, p, &characteristic_corpus(w.mesh()))
}

pub fn ap_constant_on(
    w: &StepFunction,
    p: f64,
    corpus: &[DyadicCube],
) -> Result<CharacteristicReport> {
    if !(p > 1.0) {
        return Err(Error::InvalidExponents(format!("A_p needs p > 1, got {p}")));
    }
    let pc = p / (p - 1.0);
    let np = NegativePower::new(w, w, pc - 1.0)?;
    Ok(scan_corpus("A_p", corpus, |q| match np.averages(q) {
        Ok((a, b)) => CubeValue::Value(a * b.powf(p - 1.0)),
        Err(v) => v,
    }))
}

/// `[w]_{A_{p,q}} = sup_Q (⨍_Q w^q)^{1/q}(⨍_Q w^{-p'})^{1/p'}`.
pub fn apq_constant(w: &StepFunction, p: f64, q: f64) -> Result<CharacteristicReport> {
    apq_constant_on(w, p, q, &characteristic_corpus(w.mesh()))
}

pub fn apq_constant_on(
    w: &StepFunction,
    p: f64,
    q: f64,
    corpus: &[DyadicCube],
) -> Result<CharacteristicReport> {
    if !(p > 1.0 && q >= p) {
        return Err(Error::InvalidExponents(format!(
            "A_(p,q) needs 1 < p ≤ q, got ({p}, {q})"
        )));
    }
    let pc = p / (p - 1.0);
    let wq = w.map(|v| v.powf(q))?;
    let np = NegativePower::new(&wq, w, pc)?;
    Ok(scan_corpus("A_pq", corpus, |c| match np.averages(c) {
        Ok((a, b)) => CubeValue::Value(a.powf(1.0 / q) * b.powf(1.0 / pc)),
        Err(v) => v,
    }))
}

/// `[u, σ]_{A_r} = sup_Q (⨍_Q u)(⨍_Q σ)^{r-1}`.
pub fn two_weight_ap(
    u: &StepFunction,
    sigma: &StepFunction,
    r: f64,
) -> Result<CharacteristicReport> {
    two_weight_ap_on(u, sigma, r, &characteristic_corpus(u.mesh()))
}

pub fn two_weight_ap_on(
    u: &StepFunction,
    sigma: &StepFunction,
    r: f64,
    corpus: &[DyadicCube],
) -> Result<CharacteristicReport> {
    if !(r > 1.0) {
        return Err(Error::InvalidExponents(format!(
            "two-weight A_r needs r > 1, got {r}"
        )));
    }
    if u.mesh() != sigma.mesh() {
        return Err(Error::MeshMismatch);
    }
    let (pu, ps) = (PrefixSums::new(u), PrefixSums::new(sigma));
    Ok(scan_corpus("A_r(u,sigma)", corpus, |q| {
        CubeValue::Value(pu.average(q) * ps.average(q).powf(r - 1.0))
    }))
}

/// `sup_Q exp(⨍_Q log w^{-1}) ⨍_Q w`.
pub fn ainfty_exp(w: &StepFunction) -> Result<CharacteristicReport> {
    ainfty_exp_on(w, &characteristic_corpus(w.mesh()))
}

pub fn ainfty_exp_on(w: &StepFunction, corpus: &[DyadicCube]) -> Result<CharacteristicReport> {
    let mesh = *w.mesh();
    let logs: Vec<f64> = w
        .values()
        .iter()
        .map(|&v| if v > 0.0 { -v.ln() } else { 0.0 })
        .collect();
    let neglog = PrefixSums::from_values(&mesh, &logs);
    let direct = PrefixSums::new(w);
    let zeros = ZeroCounter::new(w);
    Ok(scan_corpus("A_inf_exp", corpus, |q| {
        if zeros.zeros_in(q) > 0 {
            return CubeValue::Value(f64::INFINITY);
        }
        let inside = q
            .atom_rect(&mesh)
            .intersect(&mesh.box_rect(), mesh.dim)
            .measure(mesh.dim) as f64;
        let mean_neglog = neglog.cube_sum(q) / inside;
        let mean = direct.cube_sum(q) / inside;
        CubeValue::Value(mean_neglog.exp() * mean)
    }))
}

/// Sub-cubes of grid `shift` at `level` meeting `rect`.
fn cubes_meeting(
    mesh: &Mesh,
    shift: u8,
    level: i32,
    rect: &AtomRect,
) -> impl Iterator<Item = DyadicCube> {
    let lo = containing_cube(mesh, shift, level, rect.lo);
    let mut last = rect.hi;
    for d in 0..mesh.dim {
        last[d] -= 1;
    }
    let hi = containing_cube(mesh, shift, level, last);
    let dim = mesh.dim;
    let ny = if dim == 2 {
        hi.coords[1] - lo.coords[1] + 1
    } else {
        1
    };
    let nx = hi.coords[0] - lo.coords[0] + 1;
    (0..ny).flat_map(move |j| {
        (0..nx).map(move |i| {
            let mut c = lo.coords;
            c[0] += i;
            if dim == 2 {
                c[1] += j;
            }
            DyadicCube::new(dim, shift, level, &c[..dim])
        })
    })
}

/// `(1/w(Q)) ∫_Q M(χ_Q w)` with `M` the maximal function over cubes of all
/// grids no larger than `Q`, together with `Q` itself.
pub fn fujii_wilson_at(w: &PrefixSums, q: &DyadicCube) -> CubeValue {
    let mesh = *w.mesh();
    let wq = w.cube_sum(q);
    if wq <= 0.0 {
        return CubeValue::Skip;
    }
    let rect = q.atom_rect(&mesh).intersect(&mesh.box_rect(), mesh.dim);
    let width = (rect.hi[0] - rect.lo[0]) as usize;
    let height = if mesh.dim == 2 {
        (rect.hi[1] - rect.lo[1]) as usize
    } else {
        1
    };
    let mut m = vec![wq / q.volume() * mesh.atom_volume(); width * height];
    for shift in mesh.shifts() {
        for level in q.level..=mesh.max_level() {
            for p in cubes_meeting(&mesh, shift, level, &rect) {
                let cut = p.atom_rect(&mesh).intersect(&rect, mesh.dim);
                if cut.is_empty(mesh.dim) {
                    continue;
                }
                let v = w.rect_sum(&cut) / p.volume() * mesh.atom_volume();
                let ys = if mesh.dim == 2 {
                    (cut.lo[1] - rect.lo[1]) as usize..(cut.hi[1] - rect.lo[1]) as usize
                } else {
                    0..1
                };
                for y in ys {
                    let row = y * width;
                    for x in (cut.lo[0] - rect.lo[0]) as usize..(cut.hi[0] - rect.lo[0]) as usize {
                        let slot = &mut m[row + x];
                        if v > *slot {
                            *slot = v;
                        }
                    }
                }
            }
        }
    }
    CubeValue::Value(pairwise_sum(&m) / wq)
}

/// Fujii–Wilson `A_∞'` characteristic with the multi-grid maximal function.
pub fn fujii_wilson(w: &StepFunction) -> Result<CharacteristicReport> {
    fujii_wilson_on(w, &characteristic_corpus(w.mesh()))
}

pub fn fujii_wilson_on(w: &StepFunction, corpus: &[DyadicCube]) -> Result<CharacteristicReport> {
    let ps = PrefixSums::new(w);
    Ok(scan_corpus("A_inf_fw", corpus, |q| fujii_wilson_at(&ps, q)))
}

/// Fujii–Wilson characteristic of one grid: every enumerated cube `R` of
/// the grid, with `M` the dyadic maximal function over sub-cubes of `R` and
/// the integral taken over all of `R` (including any part outside the box).
pub fn fujii_wilson_dyadic(w: &StepFunction, shift: u8) -> Result<CharacteristicReport> {
    let mesh = *w.mesh();
    let grid = GridIndex::new(&mesh, shift);
    let ps = PrefixSums::new(w);
    let cubes = grid.cubes();
    let avg: Vec<f64> = cubes.iter().map(|q| ps.average(q)).collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); cubes.len()];
    for i in 0..cubes.len() {
        if let Some(p) = grid.parent_index(i) {
            children[p].push(i);
        }
    }
    // ∫_Q max(m, M_Q) with M_Q the maximal function over sub-cubes of Q.
    fn integral(
        i: usize,
        m: f64,
        cubes: &[DyadicCube],
        avg: &[f64],
        children: &[Vec<usize>],
    ) -> f64 {
        let m = m.max(avg[i]);
        let inside: f64 = children[i].iter().map(|&c| cubes[c].volume()).sum();
        let mut acc = (cubes[i].volume() - inside) * m;
        for &c in &children[i] {
            acc += integral(c, m, cubes, avg, children);
        }
        acc
    }
    Ok(scan_corpus("A_inf_fw_dyadic", cubes, |r| {
        let i = grid.index_of(r).expect("enumerated cube");
        let wr = ps.integral(r);
        if wr <= 0.0 {
            return CubeValue::Skip;
        }
        CubeValue::Value(integral(i, 0.0, cubes, &avg, &children) / wr)
    }))
}

/// `sup_Q |Q|^{α/n+1/q-1/p}(⨍_Q u)^{1/q}(⨍_Q σ)^{1/p'}`.
pub fn mixed_apq_alpha(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
) -> Result<CharacteristicReport> {
    if u.mesh() != sigma.mesh() {
        return Err(Error::MeshMismatch);
    }
    e.validate()?;
    let corpus = characteristic_corpus(u.mesh());
    let (pu, ps) = (PrefixSums::new(u), PrefixSums::new(sigma));
    let (ve, pc) = (e.volume_exponent(), e.p_prime());
    Ok(scan_corpus("A_pq_alpha(u,sigma)", &corpus, |q| {
        CubeValue::Value(
            q.volume().powf(ve) * pu.average(q).powf(1.0 / e.q) * ps.average(q).powf(1.0 / pc),
        )
    }))
}

fn local_norm(f: &StepFunction, q: &DyadicCube, phi: &YoungFunction) -> Result<f64> {
    let dist = cube_distribution(f, q);
    match phi {
        YoungFunction::Power { p } => {
            let s: f64 = dist.iter().map(|&(v, w)| w * v.powf(*p)).sum();
            Ok(s.powf(1.0 / p))
        }
        _ => luxemburg_from_distribution(&dist, phi),
    }
}

/// `sup_Q |Q|^{α/n+1/q-1/p} ‖u^{1/q}‖_{Φ,Q} ‖σ^{1/p'}‖_{Ψ,Q}`.
pub fn bump_constant(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    phi: &YoungFunction,
    psi: &YoungFunction,
) -> Result<CharacteristicReport> {
    bump_constant_with(u, sigma, e, phi, psi, e.q, e.p_prime())
}

/// As [`bump_constant`] with explicit roots: `‖u^{1/ru}‖_Φ ‖σ^{1/rs}‖_Ψ`.
pub fn bump_constant_with(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    phi: &YoungFunction,
    psi: &YoungFunction,
    ru: f64,
    rs: f64,
) -> Result<CharacteristicReport> {
    if u.mesh() != sigma.mesh() {
        return Err(Error::MeshMismatch);
    }
    e.validate()?;
    phi.validate()?;
    psi.validate()?;
    let corpus = characteristic_corpus(u.mesh());
    let ur = u.map(|v| v.powf(1.0 / ru))?;
    let sr = sigma.map(|v| v.powf(1.0 / rs))?;
    let ve = e.volume_exponent();
    let vals: Vec<CubeValue> = corpus
        .par_iter()
        .map(|q| -> Result<CubeValue> {
            Ok(CubeValue::Value(
                q.volume().powf(ve) * local_norm(&ur, q, phi)? * local_norm(&sr, q, psi)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce_corpus("bump", &corpus, vals))
}

/// Generator grammar for positive test weights.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSpec {
    Constant {
        c: f64,
    },
    /// `max(|x - center|, floor)^β`; `floor = None` means `2^{-L}`.
    Power {
        center: f64,
        beta: f64,
        floor: Option<f64>,
    },
    /// `a` where `x_0 < split`, `b` elsewhere; one level may vanish.
    TwoValue {
        a: f64,
        b: f64,
        split: f64,
    },
    /// Product of mean-preserving factors `1 + vol·ξ` down the dyadic tree.
    Martingale {
        seed: u64,
        vol: f64,
    },
    /// `ratio^{#levels j ≤ levels with odd digit-sum parity}`.
    Checkerboard {
        levels: u32,
        ratio: f64,
    },
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Constant { c } => write!(f, "constant:c={c}"),
            WeightSpec::Power {
                center,
                beta,
                floor,
            } => match floor {
                Some(x) => write!(f, "power:center={center},beta={beta},floor={x}"),
                None => write!(f, "power:center={center},beta={beta},floor=auto"),
            },
            WeightSpec::TwoValue { a, b, split } => {
                write!(f, "two-value:a={a},b={b},split={split}")
            }
            WeightSpec::Martingale { seed, vol } => write!(f, "martingale:seed={seed},vol={vol}"),
            WeightSpec::Checkerboard { levels, ratio } => {
                write!(f, "checkerboard:levels={levels},ratio={ratio}")
            }
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidWeightSpec {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut fields = std::collections::BTreeMap::new();
        for kv in rest.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad("expected key=value"))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |key: &str| {
            fields
                .remove(key)
                .ok_or_else(|| bad(&format!("missing `{key}`")))
        };
        let num = |v: String| {
            v.parse::<f64>()
                .map_err(|_| bad(&format!("`{v}` is not a number")))
        };
        let spec = match kind.trim() {
            "constant" => WeightSpec::Constant {
                c: num(take("c")?)?,
            },
            "power" => {
                let center = num(take("center")?)?;
                let beta = num(take("beta")?)?;
                let floor = match take("floor") {
                    Ok(v) if v == "auto" => None,
                    Ok(v) => Some(num(v)?),
                    Err(_) => None,
                };
                WeightSpec::Power {
                    center,
                    beta,
                    floor,
                }
            }
            "two-value" => WeightSpec::TwoValue {
                a: num(take("a")?)?,
                b: num(take("b")?)?,
                split: num(take("split")?)?,
            },
            "martingale" => {
                let seed = take("seed")?
                    .parse::<u64>()
                    .map_err(|_| bad("seed must be an unsigned integer"))?;
                WeightSpec::Martingale {
                    seed,
                    vol: num(take("vol")?)?,
                }
            }
            "checkerboard" => {
                let levels = take("levels")?
                    .parse::<u32>()
                    .map_err(|_| bad("levels must be an unsigned integer"))?;
                WeightSpec::Checkerboard {
                    levels,
                    ratio: num(take("ratio")?)?,
                }
            }
            _ => return Err(bad("unknown kind")),
        };
        if let Some(k) = fields.keys().next() {
            return Err(bad(&format!("unknown key `{k}`")));
        }
        spec.check().map_err(|reason| bad(&reason))?;
        Ok(spec)
    }
}

impl Serialize for WeightSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for WeightSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl WeightSpec {
    fn check(&self) -> std::result::Result<(), String> {
        let pos = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be positive and finite"))
            }
        };
        match *self {
            WeightSpec::Constant { c } => pos(c, "c"),
            WeightSpec::Power {
                center,
                beta,
                floor,
            } => {
                if !center.is_finite() || !beta.is_finite() {
                    return Err("center and beta must be finite".into());
                }
                if let Some(x) = floor {
                    pos(x, "floor")?;
                }
                Ok(())
            }
            WeightSpec::TwoValue { a, b, split } => {
                if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) || a + b == 0.0 {
                    return Err("a and b must be finite, nonnegative and not both zero".into());
                }
                if split.is_finite() {
                    Ok(())
                } else {
                    Err("split must be finite".into())
                }
            }
            WeightSpec::Martingale { vol, .. } => {
                if (0.0..1.0).contains(&vol) {
                    Ok(())
                } else {
                    Err("vol must lie in [0, 1)".into())
                }
            }
            WeightSpec::Checkerboard { ratio, .. } => pos(ratio, "ratio"),
        }
    }
}

/// Samples a weight spec at the cell centers of the mesh.
pub fn generate_weight(mesh: &Mesh, spec: &WeightSpec) -> Result<StepFunction> {
    spec.check().map_err(|reason| Error::InvalidWeightSpec {
        spec: spec.to_string(),
        reason,
    })?;
    match *spec {
        WeightSpec::Constant { c } => StepFunction::constant(mesh, c),
        WeightSpec::Power {
            center,
            beta,
            floor,
        } => {
            if beta <= -(mesh.dim as f64) {
                return Err(Error::InvalidWeightSpec {
                    spec: spec.to_string(),
                    reason: format!(
                        "β = {beta} is not locally integrable in dimension {}",
                        mesh.dim
                    ),
                });
            }
            let floor = floor.unwrap_or_else(|| pow2(-mesh.finest));
            StepFunction::from_cell_fn(mesh, |x| {
                let r = x.iter().map(|xi| (xi - center).powi(2)).sum::<f64>().sqrt();
                r.max(floor).powf(beta)
            })
        }
        WeightSpec::TwoValue { a, b, split } => {
            StepFunction::from_cell_fn(mesh, |x| if x[0] < split { a } else { b })
        }
        WeightSpec::Martingale { seed, vol } => {
            StepFunction::from_cells(mesh, &martingale_cells(mesh, seed, vol))
        }
        WeightSpec::Checkerboard { levels, ratio } => {
            let scale = pow2(-mesh.base_exp);
            StepFunction::from_cell_fn(mesh, |x| {
                let mut odd = 0;
                for j in 1..=levels as i32 {
                    let digits: i64 = x
                        .iter()
                        .map(|xi| ((xi * scale * pow2(j)).floor() as i64) & 1)
                        .sum();
                    odd += (digits & 1) as i32;
                }
                ratio.powi(odd)
            })
        }
    }
}

fn martingale_cells(mesh: &Mesh, seed: u64, vol: f64) -> Vec<f64> {
    let depth = (mesh.base_exp + mesh.finest) as u32;
    let n = mesh.dim;
    let children = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals = vec![1.0f64];
    for d in 0..depth {
        let side = 1usize << d;
        let next_side = side * 2;
        let mut next = vec![0.0; next_side.pow(n as u32)];
        for idx in 0..vals.len() {
            let (cx, cy) = (idx % side, idx / side);
            let xi: Vec<f64> = (0..children).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let mean = xi.iter().sum::<f64>() / children as f64;
            for (c, x) in xi.iter().enumerate() {
                let (ox, oy) = (c & 1, c >> 1);
                let target = if n == 1 {
                    2 * cx + ox
                } else {
                    (2 * cy + oy) * next_side + 2 * cx + ox
                };
                next[target] = vals[idx] * (1.0 + vol * 0.5 * (x - mean));
            }
        }
        vals = next;
    }
    vals
}
