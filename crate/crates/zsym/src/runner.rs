//! Run orchestration: sample points, execute the requested checks, and
//! assemble a deterministic report.
//!
//! The JSON report is byte-identical for identical (manifest bytes, seed,
//! version): points are drawn from a seeded generator, every collection is
//! a `Vec` in fixed order, and no timing information enters the JSON
//! (wall-clock goes to the text rendering only).

use rand::RngExt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::builders::rng_for;
use crate::classify::{
    classify_point, curvature_cyclic_residual, solve_wzs, ClassifyOptions, PointClassification,
    WzsSolution,
};
use crate::geometry::{fmt_point, geometry_at, CurvatureKind, GeometryAtPoint, GeometryError};
use crate::identities::{
    contracted_bianchi_residual, contracted_bianchi_z_residual, divergence_formula_residual,
    lovelock_residual, metric_compatibility_residual, qch_scalar_residual,
    ricci_commutator_residual, riemann_symmetry_residual, second_bianchi_residual,
    w_combination_residual, conformal_traceless_residual, PointResidual,
};
use crate::manifest::{CheckName, Manifest};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("geometry at {point}: {source}")]
    Geometry {
        point: String,
        source: GeometryError,
    },
    #[error("check `{check}` at {point}: {source}")]
    Check {
        check: &'static str,
        point: String,
        source: GeometryError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// Theorem-backed identity; its failure fails the run.
    Assertive,
    /// Structure detection; reported, never gates the run.
    Diagnostic,
}

/// One identity evaluation at one sampled point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityPoint {
    pub point: Vec<f64>,
    pub residual: f64,
    pub scale: f64,
    pub component: Vec<usize>,
}

/// One recurrence solve at one sampled point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WzsPoint {
    pub point: Vec<f64>,
    pub solution: WzsSolution,
}

/// Per-point payload of a check; the variant follows the check's nature.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckPoints {
    Identity(Vec<IdentityPoint>),
    Wzs(Vec<WzsPoint>),
    Classification(Vec<PointClassification>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub kind: CheckKind,
    /// Headline residual: the identity residual, or the recurrence-fit
    /// residual for classification-style checks.
    pub max_residual: f64,
    pub mean_residual: f64,
    pub pass: bool,
    pub points: CheckPoints,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    /// SHA-256 of the manifest file bytes, lowercase hex.
    pub manifest_digest: String,
    pub seed: u64,
    pub points: usize,
    pub tolerance: f64,
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

/// Overrides applied on top of the manifest's run block.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOverrides {
    pub points: Option<usize>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    /// Replace the manifest's check list entirely (subcommand-driven).
    pub checks: Option<&'static [CheckName]>,
}

pub fn digest_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Sample the domain box uniformly with the run seed.
pub fn sample_points(manifest: &Manifest, points: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, "sample-points");
    (0..points)
        .map(|_| {
            manifest
                .spec
                .domain
                .iter()
                .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect()
        })
        .collect()
}

fn identity_check(
    name: &'static str,
    geos: &[GeometryAtPoint<f64>],
    f: impl Fn(&GeometryAtPoint<f64>) -> Result<PointResidual, GeometryError>,
) -> Result<(Vec<IdentityPoint>, Vec<f64>), RunError> {
    let mut pts = Vec::with_capacity(geos.len());
    let mut residuals = Vec::with_capacity(geos.len());
    for geo in geos {
        let r = f(geo).map_err(|source| RunError::Check {
            check: name,
            point: fmt_point(&geo.point),
            source,
        })?;
        residuals.push(r.residual);
        pts.push(IdentityPoint {
            point: geo.point.clone(),
            residual: r.residual,
            scale: r.scale,
            component: r.component,
        });
    }
    Ok((pts, residuals))
}

fn run_check(
    check: CheckName,
    geos: &[GeometryAtPoint<f64>],
    manifest: &Manifest,
    tolerance: f64,
) -> Result<CheckReport, RunError> {
    let (wa, wb) = manifest.w_constants;
    let name = check.name();
    let (points, residuals): (CheckPoints, Vec<f64>) = match check {
        CheckName::MetricCompatibility => {
            let (p, r) = identity_check(name, geos, |g| Ok(metric_compatibility_residual(g)))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::RiemannSymmetries => {
            let (p, r) = identity_check(name, geos, |g| Ok(riemann_symmetry_residual(g)))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::SecondBianchi => {
            let (p, r) = identity_check(name, geos, |g| Ok(second_bianchi_residual(g)))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::ContractedBianchi => {
            let (p, r) = identity_check(name, geos, |g| Ok(contracted_bianchi_residual(g)))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::ContractedBianchiZ => {
            let (p, r) = identity_check(name, geos, |g| Ok(contracted_bianchi_z_residual(g)))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::Lovelock => {
            let (p, r) = identity_check(name, geos, |g| Ok(lovelock_residual(g)))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::RicciCommutator => {
            let (p, r) = identity_check(name, geos, |g| Ok(ricci_commutator_residual(g)))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::ConformalTraceless => {
            let (p, r) = identity_check(name, geos, conformal_traceless_residual)?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::DivergenceConformal
        | CheckName::DivergenceProjective
        | CheckName::DivergenceConcircular
        | CheckName::DivergenceConharmonic
        | CheckName::DivergenceQuasiConformal => {
            let kind = match check {
                CheckName::DivergenceConformal => CurvatureKind::Conformal,
                CheckName::DivergenceProjective => CurvatureKind::Projective,
                CheckName::DivergenceConcircular => CurvatureKind::Concircular,
                CheckName::DivergenceConharmonic => CurvatureKind::Conharmonic,
                _ => CurvatureKind::QuasiConformal { a: wa, b: wb },
            };
            let (p, r) = identity_check(name, geos, |g| divergence_formula_residual(g, kind))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::QchTrace => {
            let (p, r) = identity_check(name, geos, |g| qch_scalar_residual(g, wa, wb))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::WCombination => {
            let (p, r) = identity_check(name, geos, |g| w_combination_residual(g, wa, wb))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::CurvatureCyclic => {
            let (p, r) = identity_check(name, geos, |g| Ok(curvature_cyclic_residual(g)))?;
            (CheckPoints::Identity(p), r)
        }
        CheckName::SolveWzs => {
            let mut pts = Vec::with_capacity(geos.len());
            let mut residuals = Vec::with_capacity(geos.len());
            for geo in geos {
                let solution = solve_wzs(geo);
                residuals.push(solution.residual);
                pts.push(WzsPoint {
                    point: geo.point.clone(),
                    solution,
                });
            }
            (CheckPoints::Wzs(pts), residuals)
        }
        CheckName::Classify => {
            let opts = ClassifyOptions {
                tolerance,
                w_constants: manifest.w_constants,
                t_covector: manifest.t_covector.clone(),
            };
            let mut pts = Vec::with_capacity(geos.len());
            let mut residuals = Vec::with_capacity(geos.len());
            for geo in geos {
                let rec = classify_point(geo, &opts).map_err(|source| RunError::Check {
                    check: name,
                    point: fmt_point(&geo.point),
                    source,
                })?;
                residuals.push(rec.wzs.residual);
                pts.push(rec);
            }
            (CheckPoints::Classification(pts), residuals)
        }
    };
    let max_residual = residuals.iter().fold(0.0f64, |m, &r| m.max(r));
    let mean_residual = if residuals.is_empty() {
        0.0
    } else {
        residuals.iter().sum::<f64>() / residuals.len() as f64
    };
    let kind = if check.is_assertive() {
        CheckKind::Assertive
    } else {
        CheckKind::Diagnostic
    };
    Ok(CheckReport {
        name: name.to_string(),
        kind,
        max_residual,
        mean_residual,
        pass: kind == CheckKind::Diagnostic || max_residual < tolerance,
        points,
    })
}

/// Execute a manifest (with optional CLI overrides) into a report.
pub fn run(
    manifest: &Manifest,
    manifest_bytes: &[u8],
    overrides: RunOverrides,
) -> Result<RunReport, RunError> {
    let points = overrides.points.unwrap_or(manifest.run.points);
    let seed = overrides.seed.unwrap_or(manifest.run.seed);
    let tolerance = overrides.tolerance.unwrap_or(manifest.run.tolerance);
    let checks: Vec<CheckName> = match overrides.checks {
        Some(list) => list.to_vec(),
        None => manifest.checks.clone(),
    };

    let mut geos = Vec::with_capacity(points);
    for p in sample_points(manifest, points, seed) {
        let geo = geometry_at::<f64>(&manifest.spec, &p).map_err(|source| RunError::Geometry {
            point: fmt_point(&p),
            source,
        })?;
        geos.push(geo);
    }

    let mut reports = Vec::with_capacity(checks.len());
    for check in checks {
        reports.push(run_check(check, &geos, manifest, tolerance)?);
    }
    let pass = reports.iter().all(|c| c.pass);
    Ok(RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        manifest_digest: digest_hex(manifest_bytes),
        seed,
        points,
        tolerance,
        checks: reports,
        pass,
    })
}

/// Serialize a report deterministically (pretty JSON, trailing newline).
pub fn report_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report has no non-finite numbers");
    s.push('\n');
    s
}

/// Human-readable rendering. `elapsed` is omitted from re-renders of stored
/// reports; `color` should already account for NO_COLOR and terminal state.
pub fn render_text(report: &RunReport, elapsed: Option<std::time::Duration>, color: bool) -> String {
    let paint = |s: &str, code: &str| -> String {
        if color {
            format!("\x1b[{code}m{s}\x1b[0m")
        } else {
            s.to_string()
        }
    };
    let mut out = String::new();
    out.push_str(&format!(
        "zsym {} — manifest sha256:{}…\n",
        report.version,
        &report.manifest_digest[..12]
    ));
    out.push_str(&format!(
        "seed {} · {} points · tolerance {:.1e}\n\n",
        report.seed, report.points, report.tolerance
    ));
    let width = report
        .checks
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(0);
    for c in &report.checks {
        let tag = match (c.kind, c.pass) {
            (CheckKind::Assertive, true) => paint("PASS", "32"),
            (CheckKind::Assertive, false) => paint("FAIL", "31"),
            (CheckKind::Diagnostic, _) => paint("diag", "36"),
        };
        out.push_str(&format!(
            "  {tag}  {:<width$}  max {:9.2e}  mean {:9.2e}\n",
            c.name, c.max_residual, c.mean_residual,
        ));
    }
    let overall = if report.pass {
        paint("PASS", "32")
    } else {
        paint("FAIL", "31")
    };
    match elapsed {
        Some(d) => out.push_str(&format!(
            "\noverall {overall} ({} checks in {:.2} s)\n",
            report.checks.len(),
            d.as_secs_f64()
        )),
        None => out.push_str(&format!("\noverall {overall} ({} checks)\n", report.checks.len())),
    }
    out
}
