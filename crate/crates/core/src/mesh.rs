//! Shifted dyadic grids over a truncated box, and exact cube aggregation.
//!
//! A [`Mesh`] covers the base box `[0, 2^J)^n` with finest cells of side
//! `2^-L`. Every cube of the grids `D^t`, `t ∈ {0, 1/3}^n`, with level in
//! `[-(J+T), L]` is an exact union of *atoms*: the finest cells split in
//! thirds along each axis. All coordinates below are integers in atom
//! units, so containment, measures and cube sums are computed without
//! rounding.

use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

/// Upper bound on the number of atoms a mesh may allocate.
pub const ATOM_BUDGET: usize = 1 << 24;

/// Largest `J + T + L` for which atom coordinates stay inside `i64`.
const MAX_SPAN_LEVELS: i32 = 58;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mesh {
    pub dim: usize,
    /// `J`: the base box is `[0, 2^J)^n`.
    pub base_exp: i32,
    /// `L`: finest cells have side `2^-L`.
    pub finest: i32,
    /// `T`: number of levels coarser than the base box.
    pub padding: i32,
}

impl Mesh {
    pub fn new(dim: usize, base_exp: i32, finest: i32, padding: i32) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidMesh(format!(
                "dimension {dim} not in 1..={MAX_DIM}"
            )));
        }
        if base_exp < 0 || finest < 0 || padding < 0 {
            return Err(Error::InvalidMesh("J, L and T must be nonnegative".into()));
        }
        if base_exp + finest + padding > MAX_SPAN_LEVELS {
            return Err(Error::InvalidMesh(format!(
                "J + L + T = {} exceeds {MAX_SPAN_LEVELS}",
                base_exp + finest + padding
            )));
        }
        let mesh = Mesh {
            dim,
            base_exp,
            finest,
            padding,
        };
        let side = 3usize
            .checked_shl((base_exp + finest) as u32)
            .ok_or_else(|| Error::InvalidMesh("too many atoms".into()))?;
        let atoms = side.checked_pow(dim as u32).unwrap_or(usize::MAX);
        if atoms > ATOM_BUDGET {
            return Err(Error::InvalidMesh(format!(
                "{atoms} atoms exceed the budget of {ATOM_BUDGET}"
            )));
        }
        Ok(mesh)
    }

    /// Atoms along one axis of the base box.
    pub fn side_atoms(&self) -> i64 {
        3i64 << (self.base_exp + self.finest)
    }

    pub fn atom_count(&self) -> usize {
        (self.side_atoms() as usize).pow(self.dim as u32)
    }

    /// Finest cells along one axis.
    pub fn side_cells(&self) -> usize {
        1usize << (self.base_exp + self.finest)
    }

    pub fn cell_count(&self) -> usize {
        self.side_cells().pow(self.dim as u32)
    }

    /// Side length of one atom.
    pub fn atom_len(&self) -> f64 {
        pow2(-self.finest) / 3.0
    }

    pub fn atom_volume(&self) -> f64 {
        self.atom_len().powi(self.dim as i32)
    }

    pub fn box_volume(&self) -> f64 {
        pow2(self.base_exp * self.dim as i32)
    }

    pub fn min_level(&self) -> i32 {
        -(self.base_exp + self.padding)
    }

    pub fn max_level(&self) -> i32 {
        self.finest
    }

    pub fn levels(&self) -> impl Iterator<Item = i32> {
        self.min_level()..=self.max_level()
    }

    pub fn shift_count(&self) -> u8 {
        1 << self.dim
    }

    pub fn shifts(&self) -> impl Iterator<Item = u8> {
        0..self.shift_count()
    }

    /// Multi-index of an atom from its linear index (axis 0 varies fastest).
    pub fn atom_coords(&self, idx: usize) -> [i64; MAX_DIM] {
        let side = self.side_atoms() as usize;
        let mut c = [0i64; MAX_DIM];
        let mut rest = idx;
        for slot in c.iter_mut().take(self.dim) {
            *slot = (rest % side) as i64;
            rest /= side;
        }
        c
    }

    pub fn atom_index(&self, coords: [i64; MAX_DIM]) -> usize {
        let side = self.side_atoms() as usize;
        let mut idx = 0usize;
        for d in (0..self.dim).rev() {
            idx = idx * side + coords[d] as usize;
        }
        idx
    }

    /// Center of an atom in real coordinates.
    pub fn atom_center(&self, idx: usize) -> [f64; MAX_DIM] {
        let c = self.atom_coords(idx);
        let h = self.atom_len();
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dim {
            x[d] = (c[d] as f64 + 0.5) * h;
        }
        x
    }

    /// Finest cell containing an atom.
    pub fn cell_of_atom(&self, idx: usize) -> usize {
        let c = self.atom_coords(idx);
        let side = self.side_cells();
        let mut cell = 0usize;
        for d in (0..self.dim).rev() {
            cell = cell * side + (c[d] / 3) as usize;
        }
        cell
    }

    /// Center of a finest cell in real coordinates.
    pub fn cell_center(&self, cell: usize) -> [f64; MAX_DIM] {
        let side = self.side_cells();
        let h = pow2(-self.finest);
        let mut x = [0.0; MAX_DIM];
        let mut rest = cell;
        for slot in x.iter_mut().take(self.dim) {
            *slot = ((rest % side) as f64 + 0.5) * h;
            rest /= side;
        }
        x
    }

    /// Whole-box rectangle in atom units.
    pub fn box_rect(&self) -> AtomRect {
        let mut r = AtomRect {
            lo: [0; MAX_DIM],
            hi: [1; MAX_DIM],
        };
        for d in 0..self.dim {
            r.hi[d] = self.side_atoms();
        }
        r
    }

    /// Measure of a cube in atom-volume units.
    pub fn cube_atom_measure(&self, level: i32) -> i128 {
        let side = 3i128 << (self.finest - level);
        side.pow(self.dim as u32)
    }
}

/// `2^k` for integer `k`, exact.
pub fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

/// Offset of the shifted grid along one axis at a given level, in thirds
/// of a block: `(-1)^k` when the axis is shifted, else 0.
fn axis_offset(shift: u8, axis: usize, level: i32) -> i64 {
    if shift & (1 << axis) == 0 {
        0
    } else if level.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// A half-open cube `2^-k([0,1)^n + m + (-1)^k t)` of a shifted grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    /// Bit `d` set means the grid is shifted by 1/3 along axis `d`.
    pub shift: u8,
    pub level: i32,
    pub coords: [i64; MAX_DIM],
    pub dim: u8,
}

impl DyadicCube {
    pub fn new(dim: usize, shift: u8, level: i32, coords: &[i64]) -> Self {
        let mut c = [0i64; MAX_DIM];
        c[..dim].copy_from_slice(&coords[..dim]);
        DyadicCube {
            shift,
            level,
            coords: c,
            dim: dim as u8,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn side(&self) -> f64 {
        pow2(-self.level)
    }

    pub fn volume(&self) -> f64 {
        pow2(-self.level * self.dim as i32)
    }

    /// Half-open interval `[lo, hi)` along `axis`, in atom units of `mesh`.
    pub fn atom_interval(&self, mesh: &Mesh, axis: usize) -> (i64, i64) {
        debug_assert!(self.level <= mesh.finest);
        let block = 1i64 << (mesh.finest - self.level);
        let lo = block * (3 * self.coords[axis] + axis_offset(self.shift, axis, self.level));
        (lo, lo + 3 * block)
    }

    pub fn atom_rect(&self, mesh: &Mesh) -> AtomRect {
        let mut r = AtomRect {
            lo: [0; MAX_DIM],
            hi: [1; MAX_DIM],
        };
        for d in 0..self.dim() {
            let (lo, hi) = self.atom_interval(mesh, d);
            r.lo[d] = lo;
            r.hi[d] = hi;
        }
        r
    }

    /// Lower corner in real coordinates.
    pub fn lower_corner(&self) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dim() {
            let off = axis_offset(self.shift, d, self.level) as f64 / 3.0;
            x[d] = self.side() * (self.coords[d] as f64 + off);
        }
        x
    }

    pub fn contains(&self, other: &DyadicCube, mesh: &Mesh) -> bool {
        self.atom_rect(mesh)
            .contains_rect(&other.atom_rect(mesh), self.dim())
    }

    pub fn intersects(&self, other: &DyadicCube, mesh: &Mesh) -> bool {
        !self
            .atom_rect(mesh)
            .intersect(&other.atom_rect(mesh), self.dim())
            .is_empty(self.dim())
    }

    pub fn contains_atom(&self, mesh: &Mesh, atom: [i64; MAX_DIM]) -> bool {
        self.atom_rect(mesh).contains_point(atom, self.dim())
    }

    /// The cube of the same grid one level coarser.
    pub fn parent(&self, mesh: &Mesh) -> DyadicCube {
        let r = self.atom_rect(mesh);
        containing_cube(mesh, self.shift, self.level - 1, r.lo)
    }

    pub fn is_inside_box(&self, mesh: &Mesh) -> bool {
        mesh.box_rect()
            .contains_rect(&self.atom_rect(mesh), self.dim())
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let x = self.lower_corner();
        let s = self.side();
        write!(f, "[t={} k={}", self.shift, self.level)?;
        for d in 0..self.dim() {
            write!(f, " [{:.6},{:.6})", x[d], x[d] + s)?;
        }
        write!(f, "]")
    }
}

// Wire form: `[shiftIndex, level, coords...]`.
impl Serialize for DyadicCube {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(2 + self.dim()))?;
        seq.serialize_element(&(self.shift as i64))?;
        seq.serialize_element(&(self.level as i64))?;
        for d in 0..self.dim() {
            seq.serialize_element(&self.coords[d])?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for DyadicCube {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct CubeVisitor;
        impl<'de> Visitor<'de> for CubeVisitor {
            type Value = DyadicCube;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array [shiftIndex, level, coords...]")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<DyadicCube, A::Error> {
                let mut items: Vec<i64> = Vec::new();
                while let Some(v) = seq.next_element::<i64>()? {
                    items.push(v);
                }
                let dim = items
                    .len()
                    .checked_sub(2)
                    .filter(|d| (1..=MAX_DIM).contains(d));
                let Some(dim) = dim else {
                    return Err(de::Error::invalid_length(items.len(), &self));
                };
                if !(0..(1 << dim)).contains(&items[0]) {
                    return Err(de::Error::custom("shift index out of range"));
                }
                Ok(DyadicCube::new(
                    dim,
                    items[0] as u8,
                    items[1] as i32,
                    &items[2..],
                ))
            }
        }
        deserializer.deserialize_seq(CubeVisitor)
    }
}

/// Axis-parallel box `[lo, hi)` in atom units; unused axes are `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AtomRect {
    pub lo: [i64; MAX_DIM],
    pub hi: [i64; MAX_DIM],
}

impl AtomRect {
    pub fn intersect(&self, other: &AtomRect, dim: usize) -> AtomRect {
        let mut r = *self;
        for d in 0..dim {
            r.lo[d] = self.lo[d].max(other.lo[d]);
            r.hi[d] = self.hi[d].min(other.hi[d]);
        }
        r
    }

    pub fn is_empty(&self, dim: usize) -> bool {
        (0..dim).any(|d| self.lo[d] >= self.hi[d])
    }

    pub fn contains_rect(&self, other: &AtomRect, dim: usize) -> bool {
        (0..dim).all(|d| self.lo[d] <= other.lo[d] && other.hi[d] <= self.hi[d])
    }

    pub fn contains_point(&self, p: [i64; MAX_DIM], dim: usize) -> bool {
        (0..dim).all(|d| self.lo[d] <= p[d] && p[d] < self.hi[d])
    }

    /// Number of atoms covered.
    pub fn measure(&self, dim: usize) -> i128 {
        if self.is_empty(dim) {
            return 0;
        }
        (0..dim)
            .map(|d| (self.hi[d] - self.lo[d]) as i128)
            .product()
    }

    /// Linear atom indices of the rectangle clipped to the base box, in
    /// storage order.
    pub fn atoms<'a>(&self, mesh: &'a Mesh) -> impl Iterator<Item = usize> + 'a {
        let r = self.intersect(&mesh.box_rect(), mesh.dim);
        let empty = r.is_empty(mesh.dim);
        let side = mesh.side_atoms() as usize;
        let (x0, x1) = (r.lo[0] as usize, r.hi[0] as usize);
        let (y0, y1) = if mesh.dim == 2 {
            (r.lo[1] as usize, r.hi[1] as usize)
        } else {
            (0, 1)
        };
        let rows = if empty { 0..0 } else { y0..y1 };
        rows.flat_map(move |y| (x0..x1).map(move |x| y * side + x))
    }
}

/// The cube of grid `shift` at `level` containing the atom at `point`.
pub fn containing_cube(mesh: &Mesh, shift: u8, level: i32, point: [i64; MAX_DIM]) -> DyadicCube {
    let block = 1i64 << (mesh.finest - level);
    let mut coords = [0i64; MAX_DIM];
    for d in 0..mesh.dim {
        let off = axis_offset(shift, d, level);
        coords[d] = (point[d].div_euclid(block) - off).div_euclid(3);
    }
    DyadicCube {
        shift,
        level,
        coords,
        dim: mesh.dim as u8,
    }
}

#[derive(Clone, Debug)]
struct LevelTable {
    level: i32,
    m_lo: [i64; MAX_DIM],
    extent: [i64; MAX_DIM],
    offset: usize,
}

/// Enumeration of one shifted grid over a mesh with O(1) cube lookup.
///
/// Cubes are ordered coarse-to-fine, then by coordinate with the last axis
/// most significant.
#[derive(Clone, Debug)]
pub struct GridIndex {
    mesh: Mesh,
    shift: u8,
    tables: Vec<LevelTable>,
    cubes: Vec<DyadicCube>,
}

impl GridIndex {
    pub fn new(mesh: &Mesh, shift: u8) -> Self {
        assert!(shift < mesh.shift_count(), "shift index out of range");
        let mut tables = Vec::new();
        let mut cubes = Vec::new();
        let last = {
            let mut p = [0i64; MAX_DIM];
            for slot in p.iter_mut().take(mesh.dim) {
                *slot = mesh.side_atoms() - 1;
            }
            p
        };
        for level in mesh.levels() {
            let first = containing_cube(mesh, shift, level, [0; MAX_DIM]);
            let end = containing_cube(mesh, shift, level, last);
            let mut extent = [1i64; MAX_DIM];
            for d in 0..mesh.dim {
                extent[d] = end.coords[d] - first.coords[d] + 1;
            }
            let offset = cubes.len();
            let ny = if mesh.dim == 2 { extent[1] } else { 1 };
            for j in 0..ny {
                for i in 0..extent[0] {
                    let mut c = first.coords;
                    c[0] += i;
                    if mesh.dim == 2 {
                        c[1] += j;
                    }
                    cubes.push(DyadicCube {
                        shift,
                        level,
                        coords: c,
                        dim: mesh.dim as u8,
                    });
                }
            }
            tables.push(LevelTable {
                level,
                m_lo: first.coords,
                extent,
                offset,
            });
        }
        GridIndex {
            mesh: *mesh,
            shift,
            tables,
            cubes,
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

    fn table(&self, level: i32) -> Option<&LevelTable> {
        let i = level - self.mesh.min_level();
        if i < 0 {
            return None;
        }
        self.tables.get(i as usize)
    }

    /// Position of a cube in the enumeration, if enumerated.
    pub fn index_of(&self, cube: &DyadicCube) -> Option<usize> {
        if cube.shift != self.shift || cube.dim() != self.mesh.dim {
            return None;
        }
        let t = self.table(cube.level)?;
        debug_assert_eq!(t.level, cube.level);
        let mut local = [0i64; MAX_DIM];
        for d in 0..self.mesh.dim {
            local[d] = cube.coords[d] - t.m_lo[d];
            if local[d] < 0 || local[d] >= t.extent[d] {
                return None;
            }
        }
        Some(t.offset + (local[0] + local[1] * t.extent[0]) as usize)
    }

    /// Index of the cube at `level` containing an atom of the base box.
    pub fn containing_index(&self, level: i32, atom: [i64; MAX_DIM]) -> usize {
        let cube = containing_cube(&self.mesh, self.shift, level, atom);
        self.index_of(&cube)
            .expect("atoms of the base box lie in enumerated cubes")
    }

    /// For each atom, the index of its containing cube at every level,
    /// coarse-to-fine: `chains[atom * levels + (level - min)]`.
    pub fn atom_chains(&self) -> Vec<usize> {
        let levels = self.tables.len();
        let mut out = Vec::with_capacity(self.mesh.atom_count() * levels);
        for a in 0..self.mesh.atom_count() {
            let p = self.mesh.atom_coords(a);
            for t in &self.tables {
                out.push(self.containing_index(t.level, p));
            }
        }
        out
    }

    pub fn level_count(&self) -> usize {
        self.tables.len()
    }

    /// Index of the parent cube, or `None` at the coarsest level.
    pub fn parent_index(&self, idx: usize) -> Option<usize> {
        let cube = self.cubes[idx];
        if cube.level <= self.mesh.min_level() {
            return None;
        }
        self.index_of(&cube.parent(&self.mesh))
    }
}

/// Every cube of grid `shift` with level in `[-(J+T), L]` meeting the base
/// box, coarse-to-fine then by coordinate.
pub fn enumerate_cubes(mesh: &Mesh, shift: u8) -> Vec<DyadicCube> {
    GridIndex::new(mesh, shift).cubes
}

/// Enumerations of all `2^n` grids, concatenated in shift order.
pub fn enumerate_all(mesh: &Mesh) -> Vec<DyadicCube> {
    mesh.shifts()
        .flat_map(|t| enumerate_cubes(mesh, t))
        .collect()
}

/// Enumerated cubes of all grids lying inside the base box: the corpus over
/// which weight characteristics take their suprema.
pub fn characteristic_corpus(mesh: &Mesh) -> Vec<DyadicCube> {
    enumerate_all(mesh)
        .into_iter()
        .filter(|q| q.is_inside_box(mesh))
        .collect()
}

/// Finds a shifted grid cube `Q_t ⊇ Q` with `ℓ(Q_t) ≤ 6ℓ(Q)` for the
/// half-open cube `Q = lower + [0, side)^n`, preferring the smallest one.
pub fn covering_shifted_cube(mesh: &Mesh, lower: &[f64], side: f64) -> Result<(u8, DyadicCube)> {
    if !(side > 0.0) || lower.len() != mesh.dim || lower.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMesh(
            "query cube must have positive side and finite corner".into(),
        ));
    }
    let finest = (-side.log2()).floor() as i32;
    let coarsest = (-(6.0 * side).log2()).ceil() as i32;
    let scale = 3.0 * pow2(mesh.finest);
    let mut best: Option<(u8, DyadicCube)> = None;
    for level in (coarsest..=finest).rev() {
        if level < mesh.min_level() || level > mesh.max_level() {
            continue;
        }
        for shift in mesh.shifts() {
            let mut point = [0i64; MAX_DIM];
            for d in 0..mesh.dim {
                point[d] = (lower[d] * scale).floor() as i64;
            }
            let cube = containing_cube(mesh, shift, level, point);
            let x = cube.lower_corner();
            let s = cube.side();
            let ok = (0..mesh.dim).all(|d| x[d] <= lower[d] && lower[d] + side <= x[d] + s);
            if ok && s <= 6.0 * side {
                match best {
                    Some((_, b)) if b.level >= level => {}
                    _ => best = Some((shift, cube)),
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.ok_or(Error::MeshTooSmall)
}

/// A nonnegative function constant on the atoms of a mesh and zero outside
/// the base box.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    mesh: Mesh,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn from_atoms(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.atom_count() {
            return Err(Error::InvalidFunction(format!(
                "expected {} atom values, got {}",
                mesh.atom_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidFunction(format!(
                "value {v} is not finite and nonnegative"
            )));
        }
        Ok(StepFunction {
            mesh: *mesh,
            values,
        })
    }

    /// From one value per finest cell.
    pub fn from_cells(mesh: &Mesh, cells: &[f64]) -> Result<Self> {
        if cells.len() != mesh.cell_count() {
            return Err(Error::InvalidFunction(format!(
                "expected {} cell values, got {}",
                mesh.cell_count(),
                cells.len()
            )));
        }
        let values = (0..mesh.atom_count())
            .map(|a| cells[mesh.cell_of_atom(a)])
            .collect();
        Self::from_atoms(mesh, values)
    }

    /// Samples `f` at finest-cell centers.
    pub fn from_cell_fn(mesh: &Mesh, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let cells: Vec<f64> = (0..mesh.cell_count())
            .map(|c| f(&mesh.cell_center(c)[..mesh.dim]))
            .collect();
        Self::from_cells(mesh, &cells)
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Result<Self> {
        Self::from_atoms(mesh, vec![c; mesh.atom_count()])
    }

    pub fn zero(mesh: &Mesh) -> Self {
        StepFunction {
            mesh: *mesh,
            values: vec![0.0; mesh.atom_count()],
        }
    }

    /// Indicator of a cube (restricted to the base box).
    pub fn indicator(mesh: &Mesh, cube: &DyadicCube) -> Self {
        let mut f = Self::zero(mesh);
        for a in cube.atom_rect(mesh).atoms(mesh) {
            f.values[a] = 1.0;
        }
        f
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, atom: usize) -> f64 {
        self.values[atom]
    }

    /// Applies `g` to every value; `g` must keep values finite and
    /// nonnegative.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_atoms(&self.mesh, self.values.iter().map(|&v| g(v)).collect())
    }

    pub fn zip_with(&self, other: &StepFunction, g: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.mesh != other.mesh {
            return Err(Error::MeshMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| g(a, b))
            .collect();
        Self::from_atoms(&self.mesh, values)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// `∫ f` over the base box.
    pub fn total_integral(&self) -> f64 {
        pairwise_sum(&self.values) * self.mesh.atom_volume()
    }

    /// `∫ f g` over the base box.
    pub fn inner(&self, other: &StepFunction) -> f64 {
        let prods: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        pairwise_sum(&prods) * self.mesh.atom_volume()
    }

    /// `(∫ f^p w)^{1/p}`.
    pub fn lp_norm(&self, p: f64, weight: &StepFunction) -> f64 {
        let terms: Vec<f64> = self
            .values
            .iter()
            .zip(&weight.values)
            .map(|(&f, &w)| if f == 0.0 { 0.0 } else { f.powf(p) * w })
            .collect();
        (pairwise_sum(&terms) * self.mesh.atom_volume()).powf(1.0 / p)
    }
}

/// Sum with a fixed balanced binary reduction tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Prefix sums of atom values giving O(1) rectangle sums.
///
/// Sums are kept in atom units (plain sums of values); multiply by the atom
/// volume for integrals. For dyadic-rational inputs of moderate size every
/// partial sum is exact, so rectangle sums agree bit-for-bit with direct
/// summation.
#[derive(Clone, Debug)]
pub struct PrefixSums {
    mesh: Mesh,
    table: Vec<f64>,
}

impl PrefixSums {
    pub fn new(f: &StepFunction) -> Self {
        Self::from_values(&f.mesh, &f.values)
    }

    /// Prefix sums of arbitrary (possibly negative) per-atom values.
    pub fn from_values(mesh: &Mesh, values: &[f64]) -> Self {
        assert_eq!(values.len(), mesh.atom_count(), "one value per atom");
        let mesh = *mesh;
        let n = mesh.side_atoms() as usize;
        let table = match mesh.dim {
            1 => {
                let mut t = vec![0.0; n + 1];
                for i in 0..n {
                    t[i + 1] = t[i] + values[i];
                }
                t
            }
            _ => {
                let w = n + 1;
                let mut t = vec![0.0; w * w];
                for y in 0..n {
                    let mut row = 0.0;
                    for x in 0..n {
                        row += values[y * n + x];
                        t[(y + 1) * w + x + 1] = t[y * w + x + 1] + row;
                    }
                }
                t
            }
        };
        PrefixSums { mesh, table }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Sum of atom values over a rectangle clipped to the base box.
    pub fn rect_sum(&self, rect: &AtomRect) -> f64 {
        let r = rect.intersect(&self.mesh.box_rect(), self.mesh.dim);
        if r.is_empty(self.mesh.dim) {
            return 0.0;
        }
        match self.mesh.dim {
            1 => self.table[r.hi[0] as usize] - self.table[r.lo[0] as usize],
            _ => {
                let w = self.mesh.side_atoms() as usize + 1;
                let at = |x: i64, y: i64| self.table[y as usize * w + x as usize];
                (at(r.hi[0], r.hi[1]) - at(r.lo[0], r.hi[1]))
                    - (at(r.hi[0], r.lo[1]) - at(r.lo[0], r.lo[1]))
            }
        }
    }

    /// Sum of atom values over a cube.
    pub fn cube_sum(&self, cube: &DyadicCube) -> f64 {
        self.rect_sum(&cube.atom_rect(&self.mesh))
    }

    /// `∫_Q f` (the function is zero outside the base box).
    pub fn integral(&self, cube: &DyadicCube) -> f64 {
        self.cube_sum(cube) * self.mesh.atom_volume()
    }

    /// `|Q|^{-1} ∫_Q f`, dividing by the full cube volume.
    pub fn average(&self, cube: &DyadicCube) -> f64 {
        self.integral(cube) / cube.volume()
    }

    pub fn rect_integral(&self, rect: &AtomRect) -> f64 {
        self.rect_sum(rect) * self.mesh.atom_volume()
    }
}

pub fn cube_integral(f: &StepFunction, cube: &DyadicCube) -> f64 {
    PrefixSums::new(f).integral(cube)
}

pub fn cube_average(f: &StepFunction, cube: &DyadicCube) -> f64 {
    PrefixSums::new(f).average(cube)
}

/// Counts atoms with zero value per rectangle.
#[derive(Clone, Debug)]
pub struct ZeroCounter(PrefixSums);

impl ZeroCounter {
    pub fn new(f: &StepFunction) -> Self {
        let ind = f
            .map(|v| if v == 0.0 { 1.0 } else { 0.0 })
            .expect("indicator values are valid");
        ZeroCounter(PrefixSums::new(&ind))
    }

    /// Zero atoms of the cube inside the base box.
    pub fn zeros_in(&self, cube: &DyadicCube) -> u64 {
        self.0.cube_sum(cube) as u64
    }
}
