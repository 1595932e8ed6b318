use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use riesz_core::calibration::{weight_corpus, WeightPair};
use riesz_core::{DyadicCube, ExponentTuple, Mesh, SparseFamily, WeightSpec, YoungFunction};
use serde::{Deserialize, Serialize};

/// Mesh parameters `(n, J, L, T)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub n: usize,
    #[serde(rename = "J")]
    pub j: i32,
    #[serde(rename = "L")]
    pub l: i32,
    #[serde(rename = "T")]
    pub t: i32,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            n: 1,
            j: 0,
            l: 8,
            t: 40,
        }
    }
}

impl MeshConfig {
    pub fn build(&self) -> Result<Mesh> {
        Ok(Mesh::new(self.n, self.j, self.l, self.t)?)
    }

    /// Applies a `n=1,J=0,L=8,T=40` override; missing keys keep their value.
    pub fn apply_flag(&mut self, flag: &str) -> Result<()> {
        for kv in flag.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow!("mesh flag entry `{kv}` is not key=value"))?;
            let v: i64 = v
                .trim()
                .parse()
                .with_context(|| format!("mesh value `{v}` is not an integer"))?;
            match k.trim() {
                "n" => self.n = usize::try_from(v).context("n must be nonnegative")?,
                "J" => self.j = v as i32,
                "L" => self.l = v as i32,
                "T" => self.t = v as i32,
                other => bail!("unknown mesh key `{other}` (expected n, J, L or T)"),
            }
        }
        Ok(())
    }
}

/// Exponents `(α, p, q)`; `q` defaults to the Sobolev exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub alpha: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl ExponentConfig {
    pub fn build(&self, n: usize) -> Result<ExponentTuple> {
        Ok(match self.q {
            Some(q) => ExponentTuple::new(n, self.alpha, self.p, q)?,
            None => ExponentTuple::sobolev(n, self.alpha, self.p)?,
        })
    }
}

/// A hand-written cube family, e.g. a verification fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default)]
    pub shift: u8,
    pub cubes: Vec<DyadicCube>,
}

impl FamilyConfig {
    pub fn build(&self, mesh: &Mesh) -> Result<SparseFamily> {
        Ok(SparseFamily::new(
            mesh,
            self.shift,
            self.cubes.iter().copied(),
        )?)
    }
}

/// Verification suites run by `verify`.
pub const ALL_SUITES: [&str; 5] = [
    "sparsity",
    "domination",
    "overlap",
    "corona",
    "upper-comparison",
];

/// Characteristics computed by `constants`.
pub const ALL_CONSTANTS: [&str; 7] = [
    "ap",
    "apq",
    "ainfty",
    "fujii-wilson",
    "fujii-wilson-dyadic",
    "two-weight",
    "bump",
];

fn default_functions() -> usize {
    20
}
fn default_corpus() -> usize {
    4
}
fn default_alphas() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_delta() -> f64 {
    1.0
}
fn default_ladder() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
}

/// One experiment document. Every list defaults to empty in a config file;
/// [`ExperimentConfig::standard`] is used when no file is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exponents: Vec<ExponentConfig>,
    /// Explicit `(u, σ)` pairs; when empty, `corpus_size` pairs are drawn from
    /// the seed.
    #[serde(default)]
    pub weights: Vec<WeightPair>,
    #[serde(default = "default_corpus")]
    pub corpus_size: usize,
    /// Young functions for the bump constants, in the `kind:key=value` grammar.
    #[serde(default)]
    pub young: Vec<String>,
    #[serde(default)]
    pub constants: Vec<String>,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub families: Vec<FamilyConfig>,
    /// Random test functions per verification suite.
    #[serde(default = "default_functions")]
    pub functions: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_delta")]
    pub bump_delta: f64,
    /// Exponents `β` of the weights `u = |x - c|^β` in `exponent-fit`.
    #[serde(default = "default_ladder")]
    pub ladder: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn standard() -> Self {
        ExperimentConfig {
            mesh: MeshConfig::default(),
            seed: 0,
            exponents: vec![ExponentConfig {
                alpha: 0.5,
                p: 4.0 / 3.0,
                q: None,
            }],
            weights: Vec::new(),
            corpus_size: default_corpus(),
            young: vec!["log:p=4,delta=1".into(), "loglog:p=4,delta=1".into()],
            constants: ALL_CONSTANTS.iter().map(|s| s.to_string()).collect(),
            suites: ALL_SUITES.iter().map(|s| s.to_string()).collect(),
            families: Vec::new(),
            functions: default_functions(),
            alphas: default_alphas(),
            bump_delta: default_delta(),
            ladder: default_ladder(),
            jobs: None,
            out: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    /// Checks every field that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        let mesh = self.mesh.build()?;
        for e in &self.exponents {
            e.build(mesh.dim)?;
        }
        for y in &self.young {
            YoungFunction::from_str(y).with_context(|| format!("young function `{y}`"))?;
        }
        for c in &self.constants {
            if !ALL_CONSTANTS.contains(&c.as_str()) {
                bail!(
                    "unknown constant `{c}` (expected one of {})",
                    ALL_CONSTANTS.join(", ")
                );
            }
        }
        for s in &self.suites {
            if !ALL_SUITES.contains(&s.as_str()) {
                bail!(
                    "unknown suite `{s}` (expected one of {})",
                    ALL_SUITES.join(", ")
                );
            }
        }
        for f in &self.families {
            f.build(&mesh)?;
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < mesh.dim as f64) {
                bail!("α = {a} must lie in (0, n)");
            }
        }
        if !(self.bump_delta > 0.0) {
            bail!("bump_delta must be positive");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be positive");
        }
        Ok(())
    }

    pub fn exponent_tuples(&self) -> Result<Vec<ExponentTuple>> {
        let n = self.mesh.n;
        self.exponents.iter().map(|e| e.build(n)).collect()
    }

    pub fn young_functions(&self) -> Result<Vec<YoungFunction>> {
        Ok(self
            .young
            .iter()
            .map(|y| YoungFunction::from_str(y))
            .collect::<riesz_core::Result<_>>()?)
    }

    /// The explicit pairs, or the seeded corpus when none are given.
    pub fn weight_pairs(&self, e: &ExponentTuple) -> Vec<WeightPair> {
        if self.weights.is_empty() {
            weight_corpus(self.seed, self.corpus_size, e)
        } else {
            self.weights.clone()
        }
    }

    /// Distinct single weights in first-appearance order.
    pub fn single_weights(&self, e: &ExponentTuple) -> Vec<WeightSpec> {
        let mut out: Vec<WeightSpec> = Vec::new();
        for pair in self.weight_pairs(e) {
            for w in [pair.u, pair.sigma] {
                if !out.contains(&w) {
                    out.push(w);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_flag_overrides_selected_keys() {
        let mut m = MeshConfig::default();
        m.apply_flag("L=5,T=3").unwrap();
        assert_eq!(
            m,
            MeshConfig {
                n: 1,
                j: 0,
                l: 5,
                t: 3
            }
        );
        assert!(m.apply_flag("K=2").is_err());
        assert!(m.apply_flag("L").is_err());
    }

    #[test]
    fn config_round_trips() {
        let mut cfg = ExperimentConfig::standard();
        cfg.weights.push(WeightPair {
            u: "two-value:a=2,b=1,split=0.5".parse().unwrap(),
            sigma: WeightSpec::Constant { c: 1.0 },
        });
        cfg.families.push(FamilyConfig {
            shift: 0,
            cubes: vec![DyadicCube::new(1, 0, 0, &[0])],
        });
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_document_has_no_work() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert!(cfg.suites.is_empty() && cfg.exponents.is_empty() && cfg.families.is_empty());
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut cfg = ExperimentConfig::standard();
        cfg.young.push("log:p=0.5,delta=1".into());
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(
            r#"{"mesh":{"n":1,"J":0,"L":4,"T":0},"bogus":1}"#
        )
        .is_err());
    }
}
