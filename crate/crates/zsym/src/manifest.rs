//! Manifest files: a single JSON object describing a metric, a sampling
//! plan, and the checks to run.
//!
//! Schema (informal):
//!
//! ```json
//! {
//!   "dim": 4,
//!   "coords": ["x1", "x2", "x3", "x4"],
//!   "metric": [["1", "0", "0", "0"], ["1", "0", "0"], ["1", "0"], ["1"]],
//!   "phi": "classical",
//!   "domain": { "x1": [-1, 1], "x2": [-1, 1], "x3": [-1, 1], "x4": [-1, 1] },
//!   "constants": { "k": 2.0 },
//!   "run": { "points": 10, "seed": 0, "tol": 1e-8 },
//!   "checks": ["all"],
//!   "w_constants": { "a": 1.0, "b": 1.0 },
//!   "t_covector": ["1", "0", "0", "0"]
//! }
//! ```
//!
//! `metric` is either the upper triangle (row `i` holding entries
//! `g_{i,i}..g_{i,n}`) or a full square matrix whose off-diagonal entries
//! must match structurally. `phi` is an expression, the keyword
//! `"classical"` (φ = −R/n), or absent (φ = 0).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::exprlang::{parse, validate, Expr, ParseError};
use crate::geometry::{MetricSpec, PhiSpec};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest field `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("expression `{text}` in `{field}`: {source}")]
    Expression {
        field: String,
        text: String,
        source: ParseError,
    },
}

fn schema(field: &str, reason: impl Into<String>) -> ManifestError {
    ManifestError::Schema {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Every runnable check, assertive or diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckName {
    MetricCompatibility,
    RiemannSymmetries,
    SecondBianchi,
    ContractedBianchi,
    ContractedBianchiZ,
    Lovelock,
    RicciCommutator,
    ConformalTraceless,
    DivergenceConformal,
    DivergenceProjective,
    DivergenceConcircular,
    DivergenceConharmonic,
    DivergenceQuasiConformal,
    QchTrace,
    WCombination,
    CurvatureCyclic,
    Classify,
    SolveWzs,
}

impl CheckName {
    pub const ASSERTIVE: [CheckName; 15] = [
        CheckName::MetricCompatibility,
        CheckName::RiemannSymmetries,
        CheckName::SecondBianchi,
        CheckName::ContractedBianchi,
        CheckName::ContractedBianchiZ,
        CheckName::Lovelock,
        CheckName::RicciCommutator,
        CheckName::ConformalTraceless,
        CheckName::DivergenceConformal,
        CheckName::DivergenceProjective,
        CheckName::DivergenceConcircular,
        CheckName::DivergenceConharmonic,
        CheckName::DivergenceQuasiConformal,
        CheckName::QchTrace,
        CheckName::WCombination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckName::MetricCompatibility => "metric_compatibility",
            CheckName::RiemannSymmetries => "riemann_symmetries",
            CheckName::SecondBianchi => "second_bianchi",
            CheckName::ContractedBianchi => "contracted_bianchi",
            CheckName::ContractedBianchiZ => "contracted_bianchi_z",
            CheckName::Lovelock => "lovelock",
            CheckName::RicciCommutator => "ricci_commutator",
            CheckName::ConformalTraceless => "conformal_traceless",
            CheckName::DivergenceConformal => "divergence_conformal",
            CheckName::DivergenceProjective => "divergence_projective",
            CheckName::DivergenceConcircular => "divergence_concircular",
            CheckName::DivergenceConharmonic => "divergence_conharmonic",
            CheckName::DivergenceQuasiConformal => "divergence_quasi_conformal",
            CheckName::QchTrace => "qch_trace",
            CheckName::WCombination => "w_combination",
            CheckName::CurvatureCyclic => "curvature_cyclic",
            CheckName::Classify => "classify",
            CheckName::SolveWzs => "solve_wzs",
        }
    }

    /// Assertive checks gate the run's pass flag; diagnostics never do.
    pub fn is_assertive(self) -> bool {
        !matches!(
            self,
            CheckName::CurvatureCyclic | CheckName::Classify | CheckName::SolveWzs
        )
    }

    fn from_name(s: &str) -> Option<CheckName> {
        let all = CheckName::ASSERTIVE
            .iter()
            .copied()
            .chain([CheckName::CurvatureCyclic, CheckName::Classify, CheckName::SolveWzs]);
        for c in all {
            if c.name() == s {
                return Some(c);
            }
        }
        None
    }
}

/// Expand a requested list ("all", "identities", or individual names) into
/// a deduplicated ordered list.
fn expand_checks(requested: &[String]) -> Result<Vec<CheckName>, ManifestError> {
    let mut out: Vec<CheckName> = Vec::new();
    let push = |c: CheckName, out: &mut Vec<CheckName>| {
        if !out.contains(&c) {
            out.push(c);
        }
    };
    for name in requested {
        match name.as_str() {
            "all" => {
                for c in CheckName::ASSERTIVE {
                    push(c, &mut out);
                }
                push(CheckName::CurvatureCyclic, &mut out);
                push(CheckName::Classify, &mut out);
            }
            "identities" => {
                for c in CheckName::ASSERTIVE {
                    push(c, &mut out);
                }
            }
            other => match CheckName::from_name(other) {
                Some(c) => push(c, &mut out),
                None => {
                    return Err(schema("checks", format!("unknown check `{other}`")));
                }
            },
        }
    }
    if out.is_empty() {
        return Err(schema("checks", "no checks requested"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct RawRun {
    points: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct RawW {
    a: f64,
    b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    dim: usize,
    coords: Vec<String>,
    metric: Vec<Vec<String>>,
    phi: Option<String>,
    domain: BTreeMap<String, [f64; 2]>,
    constants: Option<BTreeMap<String, f64>>,
    run: Option<RawRun>,
    checks: Option<Vec<String>>,
    w_constants: Option<RawW>,
    t_covector: Option<Vec<String>>,
}

/// Sampling plan.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub points: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            points: 10,
            seed: 0,
            tolerance: 1e-8,
        }
    }
}

/// A validated manifest: parsed expressions, ordered domain, expanded checks.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub spec: MetricSpec,
    pub run: RunConfig,
    pub checks: Vec<CheckName>,
    pub w_constants: (f64, f64),
    pub t_covector: Option<Vec<Expr>>,
}

fn parse_expr(field: &str, text: &str, names: &[&str]) -> Result<Expr, ManifestError> {
    let expr = parse(text).map_err(|source| ManifestError::Expression {
        field: field.to_string(),
        text: text.to_string(),
        source,
    })?;
    validate(&expr, names).map_err(|e| schema(field, e.to_string()))?;
    Ok(expr)
}

/// Validate a raw JSON manifest into a runnable one.
pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest, ManifestError> {
    let raw: RawManifest = serde_json::from_slice(bytes)?;
    let n = raw.dim;
    if !(3..=6).contains(&n) {
        return Err(schema("dim", format!("{n} is outside 3..=6")));
    }
    if raw.coords.len() != n {
        return Err(schema(
            "coords",
            format!("expected {n} names, got {}", raw.coords.len()),
        ));
    }
    for (i, c) in raw.coords.iter().enumerate() {
        if c.is_empty() {
            return Err(schema("coords", format!("entry {i} is empty")));
        }
        if raw.coords[..i].contains(c) {
            return Err(schema("coords", format!("`{c}` appears twice")));
        }
    }

    let constants: Vec<(String, f64)> = raw
        .constants
        .unwrap_or_default()
        .into_iter()
        .collect();
    for (name, v) in &constants {
        if raw.coords.contains(name) {
            return Err(schema(
                "constants",
                format!("`{name}` shadows a coordinate"),
            ));
        }
        if !v.is_finite() {
            return Err(schema("constants", format!("`{name}` is not finite")));
        }
    }
    let names: Vec<&str> = raw
        .coords
        .iter()
        .map(|s| s.as_str())
        .chain(constants.iter().map(|(k, _)| k.as_str()))
        .collect();

    // Metric entries: upper triangle (ragged) or full square with a
    // structural symmetry check.
    let rows = raw.metric.len();
    if rows != n {
        return Err(schema(
            "metric",
            format!("expected {n} rows, got {rows}"),
        ));
    }
    let is_upper = (0..n).all(|i| raw.metric[i].len() == n - i);
    let is_full = (0..n).all(|i| raw.metric[i].len() == n);
    if !is_upper && !is_full {
        return Err(schema(
            "metric",
            "rows must form an upper triangle (n−i entries) or a full square",
        ));
    }
    let mut upper: Vec<Vec<Expr>> = Vec::with_capacity(n);
    if is_upper {
        for i in 0..n {
            let mut row = Vec::with_capacity(n - i);
            for (j, text) in raw.metric[i].iter().enumerate() {
                row.push(parse_expr(
                    &format!("metric[{i}][{}]", i + j),
                    text,
                    &names,
                )?);
            }
            upper.push(row);
        }
    } else {
        let full: Vec<Vec<Expr>> = raw
            .metric
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, text)| parse_expr(&format!("metric[{i}][{j}]"), text, &names))
                    .collect::<Result<_, _>>()
            })
            .collect::<Result<_, _>>()?;
        for i in 0..n {
            for j in i + 1..n {
                if full[i][j] != full[j][i] {
                    return Err(schema(
                        "metric",
                        format!(
                            "entries [{i}][{j}] and [{j}][{i}] differ structurally \
                             (`{}` vs `{}`)",
                            raw.metric[i][j], raw.metric[j][i]
                        ),
                    ));
                }
            }
        }
        for (i, row) in full.into_iter().enumerate() {
            upper.push(row.into_iter().skip(i).collect());
        }
    }

    let phi = match raw.phi.as_deref() {
        None => PhiSpec::Zero,
        Some("classical") => PhiSpec::Classical,
        Some(text) => PhiSpec::Expr(parse_expr("phi", text, &names)?),
    };

    if raw.domain.len() != n {
        return Err(schema(
            "domain",
            format!("expected {n} coordinate intervals, got {}", raw.domain.len()),
        ));
    }
    let mut domain = Vec::with_capacity(n);
    for c in &raw.coords {
        let [lo, hi] = raw
            .domain
            .get(c)
            .copied()
            .ok_or_else(|| schema("domain", format!("missing interval for `{c}`")))?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(schema(
                "domain",
                format!("interval for `{c}` must satisfy lo < hi"),
            ));
        }
        domain.push((lo, hi));
    }

    let run_raw = raw.run.unwrap_or(RawRun {
        points: None,
        seed: None,
        tol: None,
    });
    let run = RunConfig {
        points: run_raw.points.unwrap_or(10),
        seed: run_raw.seed.unwrap_or(0),
        tolerance: run_raw.tol.unwrap_or(1e-8),
    };
    if run.points == 0 {
        return Err(schema("run.points", "must be at least 1"));
    }
    if !(run.tolerance.is_finite() && run.tolerance > 0.0) {
        return Err(schema("run.tol", "must be positive"));
    }

    let checks = match &raw.checks {
        None => expand_checks(&["all".to_string()])?,
        Some(list) => expand_checks(list)?,
    };

    let w_constants = match raw.w_constants {
        None => (1.0, 1.0),
        Some(RawW { a, b }) => {
            if a == 0.0 || b == 0.0 || !a.is_finite() || !b.is_finite() {
                return Err(schema("w_constants", "a and b must be finite and nonzero"));
            }
            (a, b)
        }
    };

    let t_covector = match &raw.t_covector {
        None => None,
        Some(entries) => {
            if entries.len() != n {
                return Err(schema(
                    "t_covector",
                    format!("expected {n} components, got {}", entries.len()),
                ));
            }
            Some(
                entries
                    .iter()
                    .enumerate()
                    .map(|(i, text)| parse_expr(&format!("t_covector[{i}]"), text, &names))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
    };

    Ok(Manifest {
        spec: MetricSpec {
            n,
            coords: raw.coords,
            upper,
            phi,
            domain,
            constants,
        },
        run,
        checks,
        w_constants,
        t_covector,
    })
}

/// Read and validate a manifest file; returns the raw bytes too (for
/// digesting).
pub fn load_manifest(path: &Path) -> Result<(Manifest, Vec<u8>), ManifestError> {
    let bytes = std::fs::read(path)?;
    let manifest = parse_manifest(&bytes)?;
    Ok((manifest, bytes))
}

/// Render a MetricSpec back into manifest JSON (the `build` subcommand's
/// output format, identical to a hand-written manifest).
pub fn manifest_json(spec: &MetricSpec, checks: &[&str]) -> String {
    use serde_json::{json, Map, Value};
    let metric: Vec<Vec<String>> = spec
        .upper
        .iter()
        .map(|row| row.iter().map(|e| e.to_string()).collect())
        .collect();
    let mut domain = Map::new();
    for (c, &(lo, hi)) in spec.coords.iter().zip(&spec.domain) {
        domain.insert(c.clone(), json!([lo, hi]));
    }
    let mut root = Map::new();
    root.insert("dim".into(), json!(spec.n));
    root.insert("coords".into(), json!(spec.coords));
    root.insert("metric".into(), json!(metric));
    match &spec.phi {
        PhiSpec::Zero => {}
        PhiSpec::Classical => {
            root.insert("phi".into(), json!("classical"));
        }
        PhiSpec::Expr(e) => {
            root.insert("phi".into(), json!(e.to_string()));
        }
    }
    root.insert("domain".into(), Value::Object(domain));
    if !spec.constants.is_empty() {
        let mut consts = Map::new();
        for (k, v) in &spec.constants {
            consts.insert(k.clone(), json!(v));
        }
        root.insert("constants".into(), Value::Object(consts));
    }
    root.insert(
        "run".into(),
        json!({ "points": 10, "seed": 0, "tol": 1e-8 }),
    );
    root.insert("checks".into(), json!(checks));
    let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("static JSON");
    s.push('\n');
    s
}
