use thiserror::Error;

use crate::mesh::DyadicCube;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid step function: {0}")]
    InvalidFunction(String),
    #[error("invalid exponents: {0}")]
    InvalidExponents(String),
    #[error("invalid young function: {0}")]
    InvalidYoung(String),
    #[error("invalid weight spec `{spec}`: {reason}")]
    InvalidWeightSpec { spec: String, reason: String },
    #[error("no shifted dyadic cube covers the query within the truncated level range; enlarge the mesh")]
    MeshTooSmall,
    #[error("mesh mismatch between operands")]
    MeshMismatch,
    #[error("function vanishes identically")]
    ZeroFunction,
    #[error("cube {0} is not part of the mesh enumeration")]
    CubeOutsideMesh(DyadicCube),
    #[error("sparse family violates {condition} at cube {cube}")]
    SparsityViolation {
        condition: &'static str,
        cube: DyadicCube,
    },
    #[error("corona decomposition violates {condition} at cube {cube}")]
    CoronaViolation {
        condition: &'static str,
        cube: DyadicCube,
    },
    #[error("cubes {0} and {1} belong to different grids")]
    MixedGrids(DyadicCube, DyadicCube),
    #[error("luxemburg bisection failed to bracket the root")]
    NoBracket,
    #[error("range condition `{0}` fails for these exponents")]
    RangeCondition(&'static str),
    #[error("operator exceeds the dense evaluation budget ({atoms} atoms)")]
    DenseBudget { atoms: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
