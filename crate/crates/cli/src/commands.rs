use anyhow::{Context, Result};
use rayon::prelude::*;
use riesz_core::calibration::{random_function, WeightPair};
use riesz_core::mesh::StepFunction;
use riesz_core::normest::{
    bump_bound_check, characteristic_bound_check, dyadic_testing, strong_norm_lower,
    testing_sandwich, weak_norm_lower, BumpKind, SeedSet,
};
use riesz_core::operators::{
    compare_pointwise, dyadic_riesz, riesz_reference, sparse_riesz, upper_comparison_constant,
    DyadicOperator, PositiveOperator, ReferenceOperator, SparseOperator, DENSE_ATOM_BUDGET,
};
use riesz_core::sparse::{
    build_sparse, carleson_check, corona_decompose, overlap_level_set, sigma_decay_check,
    stopping_sequence, verify_sparse, SliceMode,
};
use riesz_core::weights::{
    ainfty_exp, ap_constant, apq_constant, bump_constant, fujii_wilson, fujii_wilson_dyadic,
    generate_weight, two_weight_ap,
};
use riesz_core::{
    CharacteristicReport, DyadicCube, Error, ExponentTuple, Mesh, SparseFamily, WeightSpec,
    YoungFunction,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, fmt_opt, Table};

/// Overlap depths checked by the `overlap` suite.
pub const OVERLAP_MAX_K: u32 = 12;

/// Relative rounding allowance for float-valued chains of inequalities.
const CHAIN_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// At least one exact assertion failed.
    Failed,
    /// Every reported characteristic is infinite.
    OnlyInfinite,
}

pub struct Outcome {
    pub records: Vec<Value>,
    pub summary: Table,
    pub plot: Option<Table>,
    pub status: Status,
    pub warnings: Vec<String>,
}

fn exponent_json(e: &ExponentTuple) -> Value {
    json!({ "n": e.n, "alpha": e.alpha, "p": e.p, "q": e.q })
}

fn exponent_label(e: &ExponentTuple) -> String {
    format!("n={},alpha={},p={},q={}", e.n, e.alpha, e.p, e.q)
}

struct PairJob {
    index: usize,
    e: ExponentTuple,
    pair: WeightPair,
}

fn pair_jobs(cfg: &ExperimentConfig) -> Result<Vec<PairJob>> {
    let mut jobs = Vec::new();
    for e in cfg.exponent_tuples()? {
        for pair in cfg.weight_pairs(&e) {
            jobs.push(PairJob {
                index: jobs.len(),
                e,
                pair,
            });
        }
    }
    Ok(jobs)
}

fn weights(mesh: &Mesh, pair: &WeightPair) -> Result<(StepFunction, StepFunction)> {
    Ok((
        generate_weight(mesh, &pair.u)?,
        generate_weight(mesh, &pair.sigma)?,
    ))
}

/// Family used for the pair experiments: the configured fixtures, or the
/// stopping-time family of `σ` on grid 0.
fn families_for(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    sigma: &StepFunction,
    alpha: f64,
) -> Result<Vec<SparseFamily>> {
    if !cfg.families.is_empty() {
        return cfg.families.iter().map(|f| f.build(mesh)).collect();
    }
    if sigma.is_zero() {
        return Ok(vec![SparseFamily::empty(mesh, 0)]);
    }
    Ok(vec![build_sparse(sigma, 0, alpha)?.0])
}

/// Maximal members of a family.
fn top_members(family: &SparseFamily) -> Vec<DyadicCube> {
    let mesh = family.mesh();
    let cubes = family.cubes();
    cubes
        .iter()
        .copied()
        .filter(|q| !cubes.iter().any(|r| r != q && r.contains(q, mesh)))
        .collect()
}

// ---------------------------------------------------------------- constants

pub fn constants(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh.build()?;
    let youngs = cfg.young_functions()?;
    let jobs = pair_jobs(cfg)?;
    let results: Vec<Vec<(String, CharacteristicReport)>> = jobs
        .par_iter()
        .map(|job| constants_for(cfg, &mesh, job, &youngs))
        .collect::<Result<_>>()?;

    let mut summary = Table::new(&[
        "experiment",
        "exponents",
        "u",
        "sigma",
        "subject",
        "constant",
        "value",
        "witness",
        "corpus_size",
    ]);
    let mut records = Vec::new();
    let mut finite = 0usize;
    let mut total = 0usize;
    for (job, reports) in jobs.iter().zip(&results) {
        for (subject, r) in reports {
            total += 1;
            finite += usize::from(!r.is_infinite());
            summary.push(vec![
                job.index.to_string(),
                exponent_label(&job.e),
                job.pair.u.to_string(),
                job.pair.sigma.to_string(),
                subject.clone(),
                r.name.clone(),
                fmt_f64(r.value),
                r.witness.map(|w| w.to_string()).unwrap_or_default(),
                r.corpus_size.to_string(),
            ]);
        }
        records.push(json!({
            "command": "constants",
            "experiment": job.index,
            "seed": cfg.seed,
            "mesh": cfg.mesh,
            "exponents": exponent_json(&job.e),
            "weights": { "u": job.pair.u, "sigma": job.pair.sigma },
            "constants": reports.iter().map(|(s, r)| json!({ "subject": s, "report": r })).collect::<Vec<_>>(),
        }));
    }
    let mut warnings = Vec::new();
    let status = if total > 0 && finite == 0 {
        warnings.push("every requested characteristic is infinite".into());
        Status::OnlyInfinite
    } else {
        Status::Ok
    };
    if total == 0 {
        warnings.push("no characteristics requested".into());
    }
    Ok(Outcome {
        records,
        summary,
        plot: None,
        status,
        warnings,
    })
}

fn constants_for(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    job: &PairJob,
    youngs: &[YoungFunction],
) -> Result<Vec<(String, CharacteristicReport)>> {
    let (u, sigma) = weights(mesh, &job.pair)?;
    let e = &job.e;
    let mut out = Vec::new();
    for name in &cfg.constants {
        match name.as_str() {
            "two-weight" => out.push(("pair".into(), two_weight_ap(&u, &sigma, e.s_p())?)),
            "bump" => {
                for phi in youngs {
                    let mut r =
                        bump_constant(&u, &sigma, e, phi, &YoungFunction::power(e.p_prime()))?;
                    r.name = format!("{} [{phi}]", r.name);
                    out.push(("pair".into(), r));
                }
            }
            single => {
                for (subject, w) in [("u", &u), ("sigma", &sigma)] {
                    let r = match single {
                        "ap" => ap_constant(w, e.p)?,
                        "apq" => apq_constant(w, e.p, e.q)?,
                        "ainfty" => ainfty_exp(w)?,
                        "fujii-wilson" => fujii_wilson(w)?,
                        "fujii-wilson-dyadic" => fujii_wilson_dyadic(w, 0)?,
                        other => anyhow::bail!("unknown constant `{other}`"),
                    };
                    out.push((subject.into(), r));
                }
            }
        }
    }
    Ok(out)
}

// ------------------------------------------------------------------- verify

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: String,
    pub instance: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(suite: &str, instance: String, result: std::result::Result<String, String>) -> Check {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        Check {
            suite: suite.into(),
            instance,
            passed,
            detail,
        }
    }
}

fn test_functions(cfg: &ExperimentConfig, mesh: &Mesh) -> Vec<StepFunction> {
    (0..cfg.functions as u64)
        .map(|i| random_function(mesh, cfg.seed.wrapping_mul(7919).wrapping_add(i)))
        .collect()
}

fn overlap_checks(family: &SparseFamily, label: &str) -> Vec<Check> {
    let mut out = Vec::new();
    for root in family.cubes() {
        let bad =
            (1..=OVERLAP_MAX_K).find(|&k| !overlap_level_set(family, root, k).within_decay(k));
        let result = match bad {
            None => Ok(format!("k = 1..={OVERLAP_MAX_K}")),
            Some(k) => {
                let l = overlap_level_set(family, root, k);
                Err(format!(
                    "overlap level set exceeds 2^-k|R0| at k = {k}: {} > {} atoms / 2^{k}",
                    l.measure_atoms, l.root_atoms
                ))
            }
        };
        if result.is_err() || out.is_empty() {
            out.push(Check::new(
                "overlap",
                format!("{label} root {root}"),
                result,
            ));
        }
    }
    out
}

fn sparse_checks(cfg: &ExperimentConfig, mesh: &Mesh, fs: &[StepFunction]) -> Result<Vec<Check>> {
    let run_sparsity = cfg.suites.iter().any(|s| s == "sparsity");
    let run_domination = cfg.suites.iter().any(|s| s == "domination");
    let run_overlap = cfg.suites.iter().any(|s| s == "overlap");
    if !(run_sparsity || run_domination || run_overlap) {
        return Ok(Vec::new());
    }
    let mut jobs = Vec::new();
    for &alpha in &cfg.alphas {
        for (i, f) in fs.iter().enumerate() {
            for shift in mesh.shifts() {
                jobs.push((alpha, i, f, shift));
            }
        }
    }
    let per: Vec<Vec<Check>> = jobs
        .par_iter()
        .map(|&(alpha, i, f, shift)| -> Result<Vec<Check>> {
            let label = format!("alpha={alpha} f#{i} shift={shift}");
            if f.is_zero() {
                return Ok(Vec::new());
            }
            let (family, c) = build_sparse(f, shift, alpha)?;
            let mut out = Vec::new();
            if run_sparsity {
                let r = verify_sparse(&family)
                    .map(|cert| {
                        format!(
                            "{} members, worst covered ratio {}",
                            family.len(),
                            fmt_f64(cert.worst_ratio)
                        )
                    })
                    .map_err(|e| e.to_string());
                out.push(Check::new("sparsity", label.clone(), r));
            }
            if run_domination {
                let d = dyadic_riesz(f, alpha, shift)?;
                let s = sparse_riesz(f, alpha, &family)?;
                let bad = d
                    .values()
                    .iter()
                    .zip(s.values())
                    .position(|(&a, &b)| a > c * b);
                let r = match bad {
                    None => Ok(format!("constant {}", fmt_f64(c))),
                    Some(atom) => Err(format!(
                        "dyadic potential exceeds {} x sparse potential at atom {atom}: {} > {}",
                        fmt_f64(c),
                        fmt_f64(d.value(atom)),
                        fmt_f64(c * s.value(atom))
                    )),
                };
                out.push(Check::new("domination", label.clone(), r));
            }
            if run_overlap {
                out.extend(overlap_checks(&family, &label));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

fn upper_checks(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    fs: &[StepFunction],
    warnings: &mut Vec<String>,
) -> Result<Vec<Check>> {
    if !cfg.suites.iter().any(|s| s == "upper-comparison") {
        return Ok(Vec::new());
    }
    if mesh.atom_count() > DENSE_ATOM_BUDGET {
        warnings.push(format!(
            "upper-comparison skipped: {} atoms exceed the dense budget",
            mesh.atom_count()
        ));
        return Ok(Vec::new());
    }
    let mut jobs = Vec::new();
    for &alpha in &cfg.alphas {
        for (i, f) in fs.iter().enumerate() {
            jobs.push((alpha, i, f));
        }
    }
    let per: Vec<Vec<Check>> = jobs
        .par_iter()
        .map(|&(alpha, i, f)| -> Result<Vec<Check>> {
            let c1 = upper_comparison_constant(mesh.dim, alpha);
            let reference = riesz_reference(f, alpha, riesz_core::KernelMode::Upper)?;
            let mut out = Vec::new();
            for shift in mesh.shifts() {
                let d = dyadic_riesz(f, alpha, shift)?;
                let bad = d
                    .values()
                    .iter()
                    .zip(reference.values())
                    .position(|(&a, &b)| a > c1 * b);
                let r = match bad {
                    None => {
                        let cmp = compare_pointwise(&d, &reference)?;
                        Ok(format!(
                            "max ratio {} <= {}",
                            fmt_f64(cmp.max_ratio),
                            fmt_f64(c1)
                        ))
                    }
                    Some(atom) => Err(format!(
                        "dyadic potential exceeds {} x reference at atom {atom}",
                        fmt_f64(c1)
                    )),
                };
                out.push(Check::new(
                    "upper-comparison",
                    format!("alpha={alpha} f#{i} shift={shift}"),
                    r,
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

fn corona_checks(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<Vec<Check>> {
    if !cfg.suites.iter().any(|s| s == "corona") {
        return Ok(Vec::new());
    }
    let jobs = pair_jobs(cfg)?;
    let per: Vec<Vec<Check>> = jobs
        .par_iter()
        .map(|job| -> Result<Vec<Check>> {
            let (u, sigma) = weights(mesh, &job.pair)?;
            let mut out = Vec::new();
            for family in families_for(cfg, mesh, &sigma, job.e.alpha)? {
                let fw = fujii_wilson_dyadic(&u, family.shift())?.value;
                for root in top_members(&family) {
                    let label = format!("experiment {} root {root}", job.index);
                    let cd =
                        corona_decompose(&family, &root, &u, &sigma, &job.e, SliceMode::Standard)?;
                    let r = cd
                        .certify(&family, &u, &sigma)
                        .map(|c| {
                            format!("{} slices, {} stopping cubes", c.slices, c.stopping_cubes)
                        })
                        .map_err(|e| e.to_string());
                    out.push(Check::new("corona", label.clone(), r));
                    let mut worst = 0.0f64;
                    for s in &cd.slices {
                        worst = worst
                            .max(carleson_check(&stopping_sequence(&cd, s.a, &u), &u)?.constant);
                    }
                    let r = if worst <= 2.0 * fw * (1.0 + CHAIN_RTOL) {
                        Ok(format!(
                            "carleson {} <= 2 x {}",
                            fmt_f64(worst),
                            fmt_f64(fw)
                        ))
                    } else {
                        Err(format!(
                            "stopping-cube carleson constant {} exceeds 2 x {}",
                            fmt_f64(worst),
                            fmt_f64(fw)
                        ))
                    };
                    out.push(Check::new("corona", format!("{label} carleson"), r));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub fn verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh.build()?;
    let mut warnings = Vec::new();
    let mut checks = Vec::new();
    for (i, fam) in cfg.families.iter().enumerate() {
        let family = fam.build(&mesh)?;
        let r = verify_sparse(&family)
            .map(|c| format!("worst covered ratio {}", fmt_f64(c.worst_ratio)));
        checks.push(Check::new(
            "sparsity",
            format!("family #{i}"),
            r.map_err(|e| e.to_string()),
        ));
        if cfg.suites.iter().any(|s| s == "overlap") {
            checks.extend(overlap_checks(&family, &format!("family #{i}")));
        }
    }
    if cfg.suites.is_empty() && cfg.families.is_empty() {
        warnings.push("nothing to verify: no suites and no families configured".into());
    }
    let fs = if cfg.suites.is_empty() {
        Vec::new()
    } else {
        test_functions(cfg, &mesh)
    };
    checks.extend(sparse_checks(cfg, &mesh, &fs)?);
    checks.extend(upper_checks(cfg, &mesh, &fs, &mut warnings)?);
    if !cfg.exponents.is_empty() {
        checks.extend(corona_checks(cfg, &mesh)?);
    } else if cfg.suites.iter().any(|s| s == "corona") {
        warnings.push("corona suite skipped: no exponents configured".into());
    }

    let mut summary = Table::new(&["suite", "instance", "passed", "detail"]);
    let mut records = Vec::new();
    for (i, c) in checks.iter().enumerate() {
        summary.push(vec![
            c.suite.clone(),
            c.instance.clone(),
            c.passed.to_string(),
            c.detail.clone(),
        ]);
        if !c.passed {
            records.push(
                json!({ "command": "verify", "experiment": i, "seed": cfg.seed, "check": c }),
            );
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    records.insert(
        0,
        json!({
            "command": "verify",
            "seed": cfg.seed,
            "mesh": cfg.mesh,
            "checks": checks.len(),
            "failed": failed,
            "suites": cfg.suites,
        }),
    );
    let status = if failed > 0 {
        Status::Failed
    } else {
        Status::Ok
    };
    Ok(Outcome {
        records,
        summary,
        plot: None,
        status,
        warnings,
    })
}

// ------------------------------------------------------------------- sparse

pub fn sparse(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh.build()?;
    let fs = test_functions(cfg, &mesh);
    let mut jobs: Vec<(f64, usize)> = Vec::new();
    for &alpha in &cfg.alphas {
        for i in 0..fs.len() {
            jobs.push((alpha, i));
        }
    }
    let built: Vec<Option<(SparseFamily, f64)>> = jobs
        .par_iter()
        .map(|&(alpha, i)| {
            if fs[i].is_zero() {
                Ok(None)
            } else {
                build_sparse(&fs[i], 0, alpha).map(Some)
            }
        })
        .collect::<riesz_core::Result<_>>()?;
    let mut families: Vec<(String, Option<f64>, SparseFamily, Option<f64>)> = Vec::new();
    for (&(alpha, i), b) in jobs.iter().zip(built) {
        if let Some((fam, c)) = b {
            families.push((format!("f#{i}"), Some(alpha), fam, Some(c)));
        }
    }
    for (i, f) in cfg.families.iter().enumerate() {
        families.push((format!("family #{i}"), None, f.build(&mesh)?, None));
    }
    let mut summary = Table::new(&[
        "experiment",
        "source",
        "alpha",
        "members",
        "certified",
        "worst_ratio",
        "domination_constant",
    ]);
    let mut records = Vec::new();
    let mut status = Status::Ok;
    for (idx, (source, alpha, fam, c)) in families.iter().enumerate() {
        let cert = verify_sparse(fam);
        let (ok, worst, cert_json) = match &cert {
            Ok(cert) => (true, fmt_f64(cert.worst_ratio), json!(cert)),
            Err(e) => (false, String::new(), json!({ "error": e.to_string() })),
        };
        if !ok {
            status = Status::Failed;
        }
        summary.push(vec![
            idx.to_string(),
            source.clone(),
            fmt_opt(*alpha),
            fam.len().to_string(),
            ok.to_string(),
            worst,
            fmt_opt(*c),
        ]);
        records.push(json!({
            "command": "sparse",
            "experiment": idx,
            "seed": cfg.seed,
            "source": source,
            "alpha": alpha,
            "family": fam,
            "certificate": cert_json,
            "domination_constant": c,
        }));
    }
    Ok(Outcome {
        records,
        summary,
        plot: None,
        status,
        warnings: Vec::new(),
    })
}

// ------------------------------------------------------------------- corona

pub fn corona(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh.build()?;
    let jobs = pair_jobs(cfg)?;
    let per: Vec<Vec<(Value, Vec<String>, bool)>> = jobs
        .par_iter()
        .map(|job| -> Result<Vec<(Value, Vec<String>, bool)>> {
            let (u, sigma) = weights(&mesh, &job.pair)?;
            let mut out = Vec::new();
            for family in families_for(cfg, &mesh, &sigma, job.e.alpha)? {
                let fw = fujii_wilson_dyadic(&u, family.shift())?.value;
                for root in top_members(&family) {
                    let cd = corona_decompose(&family, &root, &u, &sigma, &job.e, SliceMode::Standard)?;
                    let cert = cd.certify(&family, &u, &sigma);
                    let decay = sigma_decay_check(&cd, &sigma);
                    let mut carleson = Vec::new();
                    for s in &cd.slices {
                        carleson.push((s.a, carleson_check(&stopping_sequence(&cd, s.a, &u), &u)?));
                    }
                    let worst = carleson.iter().map(|(_, r)| r.constant).fold(0.0, f64::max);
                    let ok = cert.is_ok() && worst <= 2.0 * fw * (1.0 + CHAIN_RTOL);
                    let row = vec![
                        job.index.to_string(),
                        root.to_string(),
                        cd.slices.len().to_string(),
                        cd.slices.iter().map(|s| s.stopping.len()).sum::<usize>().to_string(),
                        cert.as_ref().map(|c| c.max_sub_slice.to_string()).unwrap_or_default(),
                        fmt_f64(worst),
                        fmt_f64(fw),
                        fmt_f64(decay.worst_scaled),
                        ok.to_string(),
                    ];
                    let rec = json!({
                        "command": "corona",
                        "experiment": job.index,
                        "seed": cfg.seed,
                        "exponents": exponent_json(&job.e),
                        "weights": { "u": job.pair.u, "sigma": job.pair.sigma },
                        "root": root,
                        "decomposition": cd,
                        "certificate": cert.as_ref().map(|c| json!(c)).unwrap_or_else(|e| json!({ "error": e.to_string() })),
                        "carleson": carleson.iter().map(|(a, r)| json!({ "a": a, "report": r })).collect::<Vec<_>>(),
                        "fujii_wilson_dyadic": fw,
                        "decay": decay,
                    });
                    out.push((rec, row, ok));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut summary = Table::new(&[
        "experiment",
        "root",
        "slices",
        "stopping_cubes",
        "max_sub_slice",
        "carleson",
        "fujii_wilson_dyadic",
        "decay_worst_scaled",
        "certified",
    ]);
    let mut records = Vec::new();
    let mut status = Status::Ok;
    for (rec, row, ok) in per.into_iter().flatten() {
        if !ok {
            status = Status::Failed;
        }
        summary.push(row);
        records.push(rec);
    }
    Ok(Outcome {
        records,
        summary,
        plot: None,
        status,
        warnings: Vec::new(),
    })
}

// --------------------------------------------------------------------- norm

pub fn norm(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh.build()?;
    let jobs = pair_jobs(cfg)?;
    let mut warnings = Vec::new();
    let dense = mesh.atom_count() <= DENSE_ATOM_BUDGET;
    if !dense {
        warnings.push("reference operator skipped: mesh exceeds the dense budget".into());
    }
    let per: Vec<Vec<(Value, Vec<String>)>> = jobs
        .iter()
        .map(|job| -> Result<Vec<(Value, Vec<String>)>> {
            let (u, sigma) = weights(&mesh, &job.pair)?;
            let mut out = Vec::new();
            for family in families_for(cfg, &mesh, &sigma, job.e.alpha)? {
                let testing = dyadic_testing(&u, &sigma, &job.e, &family)?;
                let seeds = SeedSet::standard(
                    &family,
                    Some(&testing),
                    cfg.seed.wrapping_add(job.index as u64),
                );
                let mut ops: Vec<Box<dyn PositiveOperator>> = vec![
                    Box::new(SparseOperator {
                        alpha: job.e.alpha,
                        family: family.clone(),
                    }),
                    Box::new(DyadicOperator {
                        alpha: job.e.alpha,
                        shift: family.shift(),
                    }),
                ];
                if dense {
                    ops.push(Box::new(ReferenceOperator {
                        alpha: job.e.alpha,
                        mode: riesz_core::KernelMode::Midpoint,
                    }));
                }
                for op in &ops {
                    let strong = strong_norm_lower(&u, &sigma, &job.e, op.as_ref(), &seeds)?;
                    let weak =
                        weak_norm_lower(&u, &sigma, &job.e, op.as_ref(), &seeds, Some(&strong))?;
                    let row = vec![
                        job.index.to_string(),
                        op.label(),
                        fmt_f64(strong.value),
                        fmt_f64(weak.value),
                        strong.iterations.to_string(),
                        strong.converged.to_string(),
                        strong.witness_seed.clone(),
                    ];
                    let rec = json!({
                        "command": "norm",
                        "experiment": job.index,
                        "seed": cfg.seed,
                        "exponents": exponent_json(&job.e),
                        "weights": { "u": job.pair.u, "sigma": job.pair.sigma },
                        "operator": op.label(),
                        "strong": strong,
                        "weak": weak,
                    });
                    out.push((rec, row));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut summary = Table::new(&[
        "experiment",
        "operator",
        "strong",
        "weak",
        "iterations",
        "converged",
        "witness_seed",
    ]);
    let mut records = Vec::new();
    for (rec, row) in per.into_iter().flatten() {
        summary.push(row);
        records.push(rec);
    }
    Ok(Outcome {
        records,
        summary,
        plot: None,
        status: Status::Ok,
        warnings,
    })
}

// ----------------------------------------------------------------- sandwich

fn bump_outcome(
    u: &StepFunction,
    sigma: &StepFunction,
    e: &ExponentTuple,
    family: &SparseFamily,
    kind: BumpKind,
    delta: f64,
) -> Result<(Value, Option<f64>)> {
    match bump_bound_check(u, sigma, e, family, kind, delta) {
        Ok(b) => {
            let r = b.ratio;
            Ok((json!(b), r))
        }
        Err(Error::RangeCondition(c)) => Ok((json!({ "refused": c }), None)),
        Err(other) => Err(other.into()),
    }
}

pub fn sandwich(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh.build()?;
    let jobs = pair_jobs(cfg)?;
    let per: Vec<Vec<(Value, Vec<String>, bool)>> = jobs
        .par_iter()
        .map(|job| -> Result<Vec<(Value, Vec<String>, bool)>> {
            let (u, sigma) = weights(&mesh, &job.pair)?;
            let e = &job.e;
            let mut out = Vec::new();
            for family in families_for(cfg, &mesh, &sigma, e.alpha)? {
                let s = testing_sandwich(
                    &u,
                    &sigma,
                    e,
                    &family,
                    cfg.seed.wrapping_add(job.index as u64),
                )?;
                let (t31, r31) = if e.is_sobolev() {
                    let b = characteristic_bound_check(&u, &sigma, e, &family)?;
                    let r = b.ratio;
                    (json!(b), r)
                } else {
                    (json!({ "refused": "1/p - 1/q = α/n" }), None)
                };
                let (t41, r41) =
                    bump_outcome(&u, &sigma, e, &family, BumpKind::Log, cfg.bump_delta)?;
                let (t44, r44) =
                    bump_outcome(&u, &sigma, e, &family, BumpKind::LogLog, cfg.bump_delta)?;
                let below = s.testing.direct <= s.strong.value + 1e-8
                    && s.testing.dual <= s.strong.value + 1e-8;
                let ok = below && s.r1.is_none_or(|r| r <= 1.0 + 1e-8);
                let row = vec![
                    job.index.to_string(),
                    exponent_label(e),
                    job.pair.u.to_string(),
                    job.pair.sigma.to_string(),
                    family.len().to_string(),
                    fmt_f64(s.testing.direct),
                    fmt_f64(s.testing.dual),
                    fmt_f64(s.strong.value),
                    fmt_f64(s.weak.value),
                    fmt_opt(s.r1),
                    fmt_opt(s.r2),
                    fmt_opt(r31),
                    fmt_opt(r41),
                    fmt_opt(r44),
                    ok.to_string(),
                ];
                let rec = json!({
                    "command": "sandwich",
                    "experiment": job.index,
                    "seed": cfg.seed,
                    "exponents": exponent_json(e),
                    "weights": { "u": job.pair.u, "sigma": job.pair.sigma },
                    "family": family,
                    "sandwich": s,
                    "characteristic_bound": t31,
                    "log_bump_bound": t41,
                    "loglog_bump_bound": t44,
                    "testing_below_norm": below,
                });
                out.push((rec, row, ok));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut summary = Table::new(&[
        "experiment",
        "exponents",
        "u",
        "sigma",
        "members",
        "direct",
        "dual",
        "strong",
        "weak",
        "r1",
        "r2",
        "characteristic_ratio",
        "log_bump_ratio",
        "loglog_bump_ratio",
        "passed",
    ]);
    let mut plot = Table::new(&["series", "x", "y"]);
    let mut records = Vec::new();
    let mut status = Status::Ok;
    for (i, (rec, row, ok)) in per.into_iter().flatten().enumerate() {
        if !ok {
            status = Status::Failed;
        }
        for (series, col) in [
            ("r1", 9),
            ("r2", 10),
            ("characteristic_ratio", 11),
            ("log_bump_ratio", 12),
            ("loglog_bump_ratio", 13),
        ] {
            if !row[col].is_empty() {
                plot.push(vec![series.into(), i.to_string(), row[col].clone()]);
            }
        }
        summary.push(row);
        records.push(rec);
    }
    Ok(Outcome {
        records,
        summary,
        plot: Some(plot),
        status,
        warnings: Vec::new(),
    })
}

// ------------------------------------------------------------- exponent-fit

/// Least-squares slope, or `None` for fewer than two distinct abscissae.
pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 1e-12).then(|| sxy / sxx)
}

pub fn exponent_fit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.mesh.build()?;
    let tuples = cfg.exponent_tuples()?;
    let mut summary = Table::new(&[
        "experiment",
        "exponents",
        "points",
        "slope",
        "target",
        "status",
    ]);
    let mut plot = Table::new(&["experiment", "beta", "x", "y"]);
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (idx, e) in tuples.iter().enumerate() {
        let ladder: Vec<(f64, WeightPair)> = if cfg.weights.is_empty() {
            cfg.ladder
                .iter()
                .map(|&beta| {
                    let u = WeightSpec::Power {
                        center: 0.5,
                        beta,
                        floor: None,
                    };
                    let sigma = WeightSpec::Power {
                        center: 0.5,
                        beta: -beta * e.p_prime() / e.q,
                        floor: None,
                    };
                    (beta, WeightPair { u, sigma })
                })
                .collect()
        } else {
            cfg.weights
                .iter()
                .enumerate()
                .map(|(i, p)| (i as f64, p.clone()))
                .collect()
        };
        let pts: Vec<Option<(f64, f64, f64)>> = ladder
            .par_iter()
            .map(|(beta, pair)| -> Result<Option<(f64, f64, f64)>> {
                let (u, sigma) = weights(&mesh, pair)?;
                let a = ap_constant(&u, e.s_p())?.value;
                if !a.is_finite() || sigma.is_zero() {
                    return Ok(None);
                }
                let (family, _) = build_sparse(&sigma, 0, e.alpha)?;
                let op = DyadicOperator {
                    alpha: e.alpha,
                    shift: 0,
                };
                let seeds = SeedSet::standard(&family, None, cfg.seed);
                let strong = strong_norm_lower(&u, &sigma, e, &op, &seeds)?;
                let weak = weak_norm_lower(&u, &sigma, e, &op, &seeds, Some(&strong))?;
                Ok((weak.value > 0.0).then(|| (*beta, a.ln(), weak.value.ln())))
            })
            .collect::<Result<_>>()
            .context("exponent-fit ladder")?;
        let pts: Vec<(f64, f64, f64)> = pts.into_iter().flatten().collect();
        let slope = fit_slope(&pts.iter().map(|p| (p.1, p.2)).collect::<Vec<_>>());
        let target = 1.0 - e.alpha / e.n as f64;
        let state = if slope.is_some() { "fitted" } else { "skip" };
        if slope.is_none() {
            warnings.push(format!(
                "experiment {idx}: fewer than two distinct points, slope undefined"
            ));
        }
        for p in &pts {
            plot.push(vec![
                idx.to_string(),
                fmt_f64(p.0),
                fmt_f64(p.1),
                fmt_f64(p.2),
            ]);
        }
        summary.push(vec![
            idx.to_string(),
            exponent_label(e),
            pts.len().to_string(),
            fmt_opt(slope),
            fmt_f64(target),
            state.into(),
        ]);
        records.push(json!({
            "command": "exponent-fit",
            "experiment": idx,
            "seed": cfg.seed,
            "exponents": exponent_json(e),
            "points": pts.iter().map(|p| json!({ "beta": p.0, "log_characteristic": p.1, "log_weak_norm": p.2 })).collect::<Vec<_>>(),
            "slope": slope,
            "target": target,
        }));
    }
    Ok(Outcome {
        records,
        summary,
        plot: Some(plot),
        status: Status::Ok,
        warnings,
    })
}
