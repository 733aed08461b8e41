//! Pointwise structure detection.
//!
//! Where the identities module checks equations that always hold, this
//! module fits equations that only *sometimes* hold — the covariant
//! recurrence ansatz on Z, rank-one structure, quasi-Einstein splittings of
//! Ricci, eigenvector and concircular relations, curvature-commutator
//! proportionality — and reports the best-fit parameters with scaled
//! residuals. Every fit is least squares; verdicts are layered on top of
//! residuals with the caller's tolerance, so generic metrics simply report
//! large residuals instead of failing.
//!
//! All records carry plain `f64` fields (converted from the working scalar)
//! so they serialize identically regardless of the scalar type used for the
//! geometry.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::exprlang::Expr;
use crate::geometry::tensor::{for_each_index, lin, Slot, TensorJet, TensorValue};
use crate::geometry::{curvature_family, CurvatureKind, GeometryAtPoint, GeometryError};
use crate::identities::{ricci_riemann_cyclic, scaled_diff, scaled_zero, PointResidual};
use crate::jets::{Jet, JetError};
use crate::scalar::{to_f, Scalar};

/// Relative cutoff below which a covector counts as zero.
const COVECTOR_EPS: f64 = 1e-8;
/// Relative cutoff on singular values for rank decisions.
const RANK_EPS: f64 = 1e-8;
/// Relative cutoff below which a least-squares system counts as degenerate.
const DEGENERATE_EPS: f64 = 1e-10;

fn jet_err(e: JetError) -> GeometryError {
    GeometryError::Invalid(e.to_string())
}

/// Copy a tensor's components into `f64`.
fn tv_f<S: Scalar>(t: &TensorValue<S>) -> TensorValue<f64> {
    let point = t.point().iter().map(|&x| to_f(x)).collect();
    let mut out = TensorValue::zeros(t.dim(), t.signature().to_vec(), point);
    for_each_index(t.dim(), t.rank(), |idx| out.set(idx, to_f(t.get(idx))));
    out
}

fn mat_f<S: Scalar>(m: &DMatrix<S>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| to_f(m[(i, j)]))
}

fn frobenius(t: &TensorValue<f64>) -> f64 {
    t.components().iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// g-norm of a covector: √(vᵀ g⁻¹ v), clamped against rounding.
fn covector_norm(v: &[f64], g_inv: &DMatrix<f64>) -> f64 {
    let v = DVector::from_column_slice(v);
    (&v.transpose() * g_inv * &v)[(0, 0)].max(0.0).sqrt()
}

// ---------------------------------------------------------------------------
// Recurrence ansatz ∇_k Z_jl = A_k Z_jl + B_j Z_kl + D_l Z_kj
// ---------------------------------------------------------------------------

/// Least-squares solution of the three-covector recurrence ansatz on Z.
///
/// When the design matrix is rank-deficient (Z = 0, or Z with special
/// structure), the solution is the minimum-norm one and `degenerate` is
/// set; `nullspace_dim` says how many directions were free.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WzsSolution {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    /// Scaled ∞-norm misfit of the fitted right side against ∇Z.
    pub residual: f64,
    pub rank: usize,
    pub nullspace_dim: usize,
    pub degenerate: bool,
    /// ω = A − B.
    pub omega: Vec<f64>,
    /// η = B − D.
    pub eta: Vec<f64>,
    pub omega_norm: f64,
    pub eta_norm: f64,
    pub omega_zero: bool,
    pub eta_zero: bool,
}

/// Fit (A, B, D) to given pointwise Z and ∇Z values (∇Z indexed [k, j, l]).
pub fn solve_wzs_values(
    z: &TensorValue<f64>,
    nabla_z: &TensorValue<f64>,
    g_inv: &DMatrix<f64>,
) -> WzsSolution {
    let n = z.dim();
    let rows = n * n * n;
    let mut m = DMatrix::<f64>::zeros(rows, 3 * n);
    let mut rhs = DVector::<f64>::zeros(rows);
    for_each_index(n, 3, |idx| {
        let (k, j, l) = (idx[0], idx[1], idx[2]);
        let r = lin(n, idx);
        m[(r, k)] += z.get(&[j, l]);
        m[(r, n + j)] += z.get(&[k, l]);
        m[(r, 2 * n + l)] += z.get(&[k, j]);
        rhs[r] = nabla_z.get(idx);
    });

    // Minimum-norm least squares through the 3n×3n normal equations. The
    // dense SVD is not usable here: on tall design matrices with highly
    // repeated singular values (every rank-one Z produces fifteen equal
    // ones at n = 6) it returns factors with O(1) reconstruction error.
    // The Gram matrix is tiny and the kept directions are well separated,
    // so the eigen route is exact to rounding.
    let gram = m.transpose() * &m;
    let mtb = m.transpose() * &rhs;
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.amax();
    // Null eigenvalues of the Gram matrix surface as O(machine-ε)·λmax
    // noise, so the rank cutoff must sit above that floor; 1e-13 relative
    // corresponds to dropping singular values below ~3e-7·σmax.
    let eps = 1e-13 * lmax;
    let mut sol = DVector::<f64>::zeros(3 * n);
    let mut rank = 0usize;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > eps {
            rank += 1;
            let v = eig.eigenvectors.column(i);
            sol += v * (v.dot(&mtb) / lam);
        }
    }

    let fitted = &m * &sol;
    let misfit = (&fitted - &rhs).amax();
    let scale = 1.0 + fitted.amax().max(rhs.amax());

    let a: Vec<f64> = sol.as_slice()[..n].to_vec();
    let b: Vec<f64> = sol.as_slice()[n..2 * n].to_vec();
    let d: Vec<f64> = sol.as_slice()[2 * n..].to_vec();
    let omega: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a - b).collect();
    let eta: Vec<f64> = b.iter().zip(&d).map(|(b, d)| b - d).collect();
    let omega_norm = covector_norm(&omega, g_inv);
    let eta_norm = covector_norm(&eta, g_inv);
    let zero_scale = COVECTOR_EPS * (1.0 + frobenius(z));
    WzsSolution {
        a,
        b,
        d,
        residual: misfit / scale,
        rank,
        nullspace_dim: 3 * n - rank,
        degenerate: rank < 3 * n,
        omega,
        eta,
        omega_norm,
        eta_norm,
        omega_zero: omega_norm < zero_scale,
        eta_zero: eta_norm < zero_scale,
    }
}

/// Fit the recurrence ansatz to the geometry's own Z and ∇Z.
pub fn solve_wzs<S: Scalar>(geo: &GeometryAtPoint<S>) -> WzsSolution {
    let z = tv_f(&geo.z.values());
    let nabla_z = tv_f(&geo.z.covariant_derivative().values());
    let g_inv = mat_f(&geo.metric_inv_matrix());
    solve_wzs_values(&z, &nabla_z, &g_inv)
}

// ---------------------------------------------------------------------------
// Rank-one structure of Z along η
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rank1Record {
    pub applicable: bool,
    /// Scaled residual of Z_ij = Z η_iη_j/(η^kη_k).
    pub residual: Option<f64>,
    /// Scaled residual of η_j Z_kl = η_l Z_kj.
    pub eta_symmetry_residual: Option<f64>,
}

/// Scaled residual of the exchange relation η_j Z_kl = η_l Z_kj.
pub fn eta_symmetry_residual(z: &TensorValue<f64>, eta: &[f64]) -> PointResidual {
    let n = z.dim();
    let point = z.point().to_vec();
    let mut lhs = TensorValue::zeros(n, vec![Slot::Down; 3], point.clone());
    let mut rhs = TensorValue::zeros(n, vec![Slot::Down; 3], point);
    for_each_index(n, 3, |idx| {
        let (k, j, l) = (idx[0], idx[1], idx[2]);
        lhs.set(idx, eta[j] * z.get(&[k, l]));
        rhs.set(idx, eta[l] * z.get(&[k, j]));
    });
    scaled_diff(&lhs, &rhs)
}

/// Test whether Z is the rank-one tensor Z·ηη/‖η‖² along the covector η.
pub fn check_rank1_z(
    z: &TensorValue<f64>,
    eta: &[f64],
    g_inv: &DMatrix<f64>,
) -> Rank1Record {
    let norm = covector_norm(eta, g_inv);
    if norm < COVECTOR_EPS * (1.0 + frobenius(z)) {
        return Rank1Record {
            applicable: false,
            residual: None,
            eta_symmetry_residual: None,
        };
    }
    let e = DVector::from_column_slice(eta);
    let eu = g_inv * &e; // η^k
    let quad = (&e.transpose() * &eu)[(0, 0)];
    let z_scalar = (g_inv * z.to_matrix()).trace();
    let pred_m = (&e * e.transpose()).scale(z_scalar / quad);
    let pred = TensorValue::from_matrix(&pred_m, [Slot::Down, Slot::Down], z.point().to_vec());
    Rank1Record {
        applicable: true,
        residual: Some(scaled_diff(z, &pred).residual),
        eta_symmetry_residual: Some(eta_symmetry_residual(z, eta).residual),
    }
}

// ---------------------------------------------------------------------------
// Quasi-Einstein splitting of Ricci
// ---------------------------------------------------------------------------

/// Outcome of the generalized eigen-splitting of Ricci against g.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuasiEinsteinVerdict {
    /// All eigenvalues cluster: Ricci = α g.
    Einstein { alpha: f64, residual: f64 },
    /// One eigenvalue separates from an (n−1)-cluster:
    /// Ricci = α g + β T⊗T with T of unit g-norm.
    QuasiEinstein {
        alpha: f64,
        beta: f64,
        /// Covector components, first significant component positive.
        t: Vec<f64>,
        residual: f64,
    },
    /// Neither shape; the sorted generalized spectrum is reported.
    Other { spectrum: Vec<f64> },
}

/// Split Ricci against g via the generalized symmetric eigenproblem.
///
/// Eigenvalue clustering is decided at `tol · (1 + max|λ|)`.
pub fn quasi_einstein_decompose(
    ricci: &TensorValue<f64>,
    g: &DMatrix<f64>,
    tol: f64,
) -> QuasiEinsteinVerdict {
    let n = g.nrows();
    let chol = g.clone().cholesky().expect("metric must be positive definite");
    let lmat = chol.l();
    let li = lmat
        .clone()
        .try_inverse()
        .expect("triangular factor is invertible");
    let mut a_tilde = &li * ricci.to_matrix() * li.transpose();
    a_tilde = (&a_tilde + a_tilde.transpose()).scale(0.5);
    let eig = SymmetricEigen::new(a_tilde);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let lam: Vec<f64> = order.iter().map(|&p| eig.eigenvalues[p]).collect();
    let amax = lam.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let gap_tol = tol * (1.0 + amax);

    let reconstruction = |pred: &DMatrix<f64>| -> f64 {
        let pred = TensorValue::from_matrix(pred, [Slot::Down, Slot::Down], ricci.point().to_vec());
        scaled_diff(ricci, &pred).residual
    };

    if lam[n - 1] - lam[0] < gap_tol {
        let alpha = lam.iter().sum::<f64>() / n as f64;
        return QuasiEinsteinVerdict::Einstein {
            alpha,
            residual: reconstruction(&g.scale(alpha)),
        };
    }

    // The outlier, if any, is at one end of the sorted spectrum.
    let spread_without_first = lam[n - 1] - lam[1];
    let spread_without_last = lam[n - 2] - lam[0];
    let (outlier, cluster): (usize, &[f64]) = if spread_without_first <= spread_without_last {
        (0, &lam[1..])
    } else {
        (n - 1, &lam[..n - 1])
    };
    if cluster[cluster.len() - 1] - cluster[0] < gap_tol {
        let alpha = cluster.iter().sum::<f64>() / cluster.len() as f64;
        let beta = lam[outlier] - alpha;
        let w = eig.eigenvectors.column(order[outlier]);
        let mut t = &lmat * w;
        let tmax = t.amax();
        if let Some(i0) = (0..n).find(|&i| t[i].abs() > 1e-12 * tmax) {
            if t[i0] < 0.0 {
                t = -t;
            }
        }
        let pred = g.scale(alpha) + (&t * t.transpose()).scale(beta);
        return QuasiEinsteinVerdict::QuasiEinstein {
            alpha,
            beta,
            t: t.iter().copied().collect(),
            residual: reconstruction(&pred),
        };
    }
    QuasiEinsteinVerdict::Other { spectrum: lam }
}

// ---------------------------------------------------------------------------
// Spectral rank of Z against g
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZRankRecord {
    /// |generalized eigenvalues| of (Z, g), descending.
    pub singular_values: Vec<f64>,
    /// Count above `1e-8 ×` the largest.
    pub rank: usize,
}

pub fn z_rank(z: &TensorValue<f64>, g: &DMatrix<f64>) -> ZRankRecord {
    let chol = g.clone().cholesky().expect("metric must be positive definite");
    let li = chol
        .l()
        .try_inverse()
        .expect("triangular factor is invertible");
    let mut m = &li * z.to_matrix() * li.transpose();
    m = (&m + m.transpose()).scale(0.5);
    let mut sv: Vec<f64> = SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|e| e.abs())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv[0];
    let rank = if top > 0.0 {
        sv.iter().filter(|&&s| s > RANK_EPS * top).count()
    } else {
        0
    };
    ZRankRecord {
        singular_values: sv,
        rank,
    }
}

// ---------------------------------------------------------------------------
// Codazzi / two-sided curl of Ricci diagnostics
// ---------------------------------------------------------------------------

/// Scaled residual of the Codazzi condition ∇_k Z_jl = ∇_j Z_kl.
pub fn check_codazzi_z<S: Scalar>(geo: &GeometryAtPoint<S>) -> f64 {
    let nz = tv_f(&geo.z.covariant_derivative().values());
    let n = geo.n;
    let mut swapped = TensorValue::zeros(n, vec![Slot::Down; 3], nz.point().to_vec());
    for_each_index(n, 3, |idx| {
        swapped.set(idx, nz.get(&[idx[1], idx[0], idx[2]]));
    });
    scaled_diff(&nz, &swapped).residual
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NcsRecord {
    /// ∇_kR_jl − ∇_jR_kl against (g_jl∇_k − g_kl∇_j)R/(2(n−1)), scaled.
    pub two_sided_residual: f64,
    /// Scaled norm of ∇_k[R + 2(n−1)φ].
    pub conservation_residual: f64,
}

/// Nearly-conformally-symmetric diagnostics: the curl of Ricci against its
/// closed form, and the conservation of R + 2(n−1)φ.
pub fn check_ncs<S: Scalar>(geo: &GeometryAtPoint<S>) -> NcsRecord {
    let n = geo.n;
    let nr = tv_f(&geo.ricci.covariant_derivative().values());
    let g = tv_f(&geo.metric.values());
    let grad_r = tv_f(&geo.grad_scalar().values());
    let point = nr.point().to_vec();

    let mut lhs = TensorValue::zeros(n, vec![Slot::Down; 3], point.clone());
    let mut rhs = TensorValue::zeros(n, vec![Slot::Down; 3], point);
    let c = 1.0 / (2.0 * (n as f64 - 1.0));
    for_each_index(n, 3, |idx| {
        let (k, j, l) = (idx[0], idx[1], idx[2]);
        lhs.set(idx, nr.get(&[k, j, l]) - nr.get(&[j, k, l]));
        rhs.set(
            idx,
            c * (g.get(&[j, l]) * grad_r.get(&[k]) - g.get(&[k, l]) * grad_r.get(&[j])),
        );
    });

    let grad_phi = tv_f(&geo.grad_phi().values());
    let scaled_grad_phi = grad_phi.scale(-2.0 * (n as f64 - 1.0));
    NcsRecord {
        two_sided_residual: scaled_diff(&lhs, &rhs).residual,
        conservation_residual: scaled_diff(&grad_r, &scaled_grad_phi).residual,
    }
}

// ---------------------------------------------------------------------------
// Single-covector recurrence ∇_i Z_kl = λ_i Z_kl
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrenceRecord {
    pub lambda: Vec<f64>,
    /// μ_i = (λ_i φ − ∇_iφ)/(n−1), the induced coefficient on g.
    pub mu: Vec<f64>,
    pub residual: f64,
    /// Set when ‖Z‖ is too small to fit against.
    pub degenerate: bool,
}

pub fn solve_recurrence<S: Scalar>(geo: &GeometryAtPoint<S>) -> RecurrenceRecord {
    let n = geo.n;
    let z = tv_f(&geo.z.values());
    let nz = tv_f(&geo.z.covariant_derivative().values());
    let z2: f64 = z.components().iter().map(|c| c * c).sum();
    let ric_frob = frobenius(&tv_f(&geo.ricci.values()));
    let degenerate = z2.sqrt() < DEGENERATE_EPS * (1.0 + ric_frob);

    let mut lambda = vec![0.0; n];
    if !degenerate {
        for (i, li) in lambda.iter_mut().enumerate() {
            let mut dot = 0.0;
            for_each_index(n, 2, |jl| {
                dot += nz.get(&[i, jl[0], jl[1]]) * z.get(jl);
            });
            *li = dot / z2;
        }
    }
    let mut fitted = TensorValue::zeros(n, vec![Slot::Down; 3], nz.point().to_vec());
    for_each_index(n, 3, |idx| {
        fitted.set(idx, lambda[idx[0]] * z.get(&[idx[1], idx[2]]));
    });
    let phi = to_f(geo.phi.value());
    let grad_phi = tv_f(&geo.grad_phi().values());
    let mu = lambda
        .iter()
        .enumerate()
        .map(|(i, l)| (l * phi - grad_phi.get(&[i])) / (n as f64 - 1.0))
        .collect();
    RecurrenceRecord {
        lambda,
        mu,
        residual: scaled_diff(&nz, &fitted).residual,
        degenerate,
    }
}

// ---------------------------------------------------------------------------
// ω as an eigenvector of Z, and the induced Ricci form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenOmegaRecord {
    pub applicable: bool,
    /// Rayleigh quotient ζ = ω^kZ_klω^l / ω^jω_j.
    pub zeta: Option<f64>,
    /// Scaled residual of Z_klω^l = ζ ω_k.
    pub residual: Option<f64>,
}

pub fn check_eigen_omega(
    z: &TensorValue<f64>,
    omega: &[f64],
    g_inv: &DMatrix<f64>,
) -> EigenOmegaRecord {
    let w = DVector::from_column_slice(omega);
    let wu = g_inv * &w;
    let quad = (&w.transpose() * &wu)[(0, 0)];
    if quad.max(0.0).sqrt() < COVECTOR_EPS * (1.0 + frobenius(z)) {
        return EigenOmegaRecord {
            applicable: false,
            zeta: None,
            residual: None,
        };
    }
    let zm = z.to_matrix();
    let zeta = (&wu.transpose() * &zm * &wu)[(0, 0)] / quad;
    let lhs = &zm * &wu;
    let diff = (&lhs - w.scale(zeta)).amax();
    let scale = 1.0 + lhs.amax().max(zeta.abs() * w.amax());
    EigenOmegaRecord {
        applicable: true,
        zeta: Some(zeta),
        residual: Some(diff / scale),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RicciFormRecord {
    pub applicable: bool,
    pub zeta: Option<f64>,
    /// Scaled residual of the two-coefficient Ricci reconstruction.
    pub residual: Option<f64>,
}

/// Reconstruct Ricci from (Z scalar, ζ, φ, ω) as
/// R_kl = [(Z−ζ)/(n−1) − φ] g_kl + [(nζ−Z)/(n−1)] ω_kω_l/(ω_jω^j)
/// and report the misfit.
pub fn ricci_form_from_omega<S: Scalar>(
    geo: &GeometryAtPoint<S>,
    sol: &WzsSolution,
) -> RicciFormRecord {
    let not_applicable = RicciFormRecord {
        applicable: false,
        zeta: None,
        residual: None,
    };
    if sol.omega_zero {
        return not_applicable;
    }
    let g_inv = mat_f(&geo.metric_inv_matrix());
    let z = tv_f(&geo.z.values());
    let eig = check_eigen_omega(&z, &sol.omega, &g_inv);
    let Some(zeta) = eig.zeta else {
        return not_applicable;
    };
    let n = geo.n as f64;
    let zs = to_f(geo.z_scalar.value());
    let phi = to_f(geo.phi.value());
    let g = mat_f(&geo.metric_matrix());
    let w = DVector::from_column_slice(&sol.omega);
    let quad = (&w.transpose() * &g_inv * &w)[(0, 0)];
    let c_g = (zs - zeta) / (n - 1.0) - phi;
    let c_w = (n * zeta - zs) / (n - 1.0);
    let pred_m = g.scale(c_g) + (&w * w.transpose()).scale(c_w / quad);
    let ricci = tv_f(&geo.ricci.values());
    let pred = TensorValue::from_matrix(&pred_m, [Slot::Down, Slot::Down], ricci.point().to_vec());
    RicciFormRecord {
        applicable: true,
        zeta: Some(zeta),
        residual: Some(scaled_diff(&ricci, &pred).residual),
    }
}

/// Scaled residual of (v_j ∇_k − v_k ∇_j)φ = 0 for a covector v.
pub fn phi_compatibility_residual(covector: &[f64], grad_phi: &[f64]) -> f64 {
    let n = covector.len();
    let mut worst = 0.0f64;
    let mut vmax = 0.0f64;
    let mut dmax = 0.0f64;
    for j in 0..n {
        vmax = vmax.max(covector[j].abs());
        dmax = dmax.max(grad_phi[j].abs());
        for k in 0..n {
            worst = worst.max((covector[j] * grad_phi[k] - covector[k] * grad_phi[j]).abs());
        }
    }
    worst / (1.0 + vmax * dmax)
}

// ---------------------------------------------------------------------------
// Concircular structure of a unit covector field
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcircularRecord {
    pub applicable: bool,
    /// Best-fit f in ∇_jT_l = f (T_jT_l − g_jl).
    pub f: Option<f64>,
    /// Best-fit μ in ∇_jf = μ T_j.
    pub mu: Option<f64>,
    pub concircular_residual: Option<f64>,
    /// Curl of the normalized field (closedness of T).
    pub closed_residual: Option<f64>,
    /// Misfit of ∇f against μT (closedness of fT).
    pub grad_f_residual: Option<f64>,
}

fn concircular_na() -> ConcircularRecord {
    ConcircularRecord {
        applicable: false,
        f: None,
        mu: None,
        concircular_residual: None,
        closed_residual: None,
        grad_f_residual: None,
    }
}

/// Fit the concircular shape ∇T̂ = f (T̂⊗T̂ − g) for the g-normalized
/// version T̂ of a covector field given componentwise as expressions.
pub fn check_concircular<S: Scalar>(
    geo: &GeometryAtPoint<S>,
    t_exprs: &[Expr],
) -> Result<ConcircularRecord, GeometryError> {
    let n = geo.n;
    if t_exprs.len() != n {
        return Err(GeometryError::Invalid(format!(
            "covector field needs {n} components, got {}",
            t_exprs.len()
        )));
    }
    let mut t = TensorJet::new(
        &geo.space,
        vec![Slot::Down],
        4,
        geo.point.clone(),
        Some(geo.gamma.clone()),
    );
    for j in 0..n {
        t.set(&[j], crate::jets::jet_eval(&t_exprs[j], &geo.env)?);
    }

    // Normalize as a field (jets), so derivatives see the normalization.
    let mut norm2 = Jet::constant(&geo.space, S::zero(), 4);
    for j in 0..n {
        for l in 0..n {
            norm2 = norm2.add(&t.get(&[j]).mul(t.get(&[l])).mul(geo.metric_inv.get(&[j, l])));
        }
    }
    if to_f(norm2.value()) <= 1e-16 {
        return Ok(concircular_na());
    }
    let norm = norm2.sqrt().map_err(jet_err)?;
    let mut t_hat = t.clone();
    for j in 0..n {
        t_hat.set(&[j], t.get(&[j]).div(&norm).map_err(jet_err)?);
    }

    let grad_t = t_hat.covariant_derivative(); // [c, j], order 3

    // P_jl = T̂_jT̂_l − g_jl as jets.
    let mut p = TensorJet::new(
        &geo.space,
        vec![Slot::Down, Slot::Down],
        4,
        geo.point.clone(),
        Some(geo.gamma.clone()),
    );
    for j in 0..n {
        for l in 0..n {
            p.set(
                &[j, l],
                t_hat.get(&[j]).mul(t_hat.get(&[l])).sub(geo.metric.get(&[j, l])),
            );
        }
    }

    // Jet-level Rayleigh quotient f = ⟨∇T̂, P⟩_g / ⟨P, P⟩_g.
    let inner = |x: &TensorJet<S>, y: &TensorJet<S>, order: usize| -> Jet<S> {
        let mut acc = Jet::constant(&geo.space, S::zero(), order);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for e in 0..n {
                        acc = acc.add(
                            &x.get(&[a, b])
                                .mul(y.get(&[c, e]))
                                .mul(geo.metric_inv.get(&[a, c]))
                                .mul(geo.metric_inv.get(&[b, e])),
                        );
                    }
                }
            }
        }
        acc
    };
    let num = inner(&grad_t, &p, 3);
    let den = inner(&p, &p, 4);
    let f = num.div(&den).map_err(jet_err)?;

    let fitted = p.scale_by_jet(&f);
    let concircular_residual = scaled_diff(&grad_t.values(), &fitted.values()).residual;

    // Closedness of T̂ from raw partials (the Christoffel terms cancel in
    // the antisymmetrization).
    let mut curl = TensorValue::zeros(n, vec![Slot::Down; 2], geo.point.clone());
    let mut dmax = S::zero();
    for i in 0..n {
        for j in 0..n {
            let dij = t_hat.get(&[j]).partial(i).value();
            dmax = num_traits::Float::max(dmax, num_traits::Float::abs(dij));
            curl.set(&[i, j], dij - t_hat.get(&[i]).partial(j).value());
        }
    }
    let closed_residual = scaled_zero(&curl, dmax).residual;

    // μ from ∇f = μ T̂ at values.
    let mut df = TensorValue::zeros(n, vec![Slot::Down], geo.point.clone());
    for i in 0..n {
        df.set(&[i], f.partial(i).value());
    }
    let t_vals = t_hat.values();
    let ginv = geo.metric_inv.values();
    let mut num_mu = S::zero();
    let mut den_mu = S::zero();
    for i in 0..n {
        for l in 0..n {
            num_mu += df.get(&[i]) * ginv.get(&[i, l]) * t_vals.get(&[l]);
            den_mu += t_vals.get(&[i]) * ginv.get(&[i, l]) * t_vals.get(&[l]);
        }
    }
    let mu = num_mu / den_mu;
    let grad_f_residual = scaled_diff(&df, &t_vals.scale(mu)).residual;

    Ok(ConcircularRecord {
        applicable: true,
        f: Some(to_f(f.value())),
        mu: Some(to_f(mu)),
        concircular_residual: Some(concircular_residual),
        closed_residual: Some(closed_residual),
        grad_f_residual: Some(grad_f_residual),
    })
}

/// Scaled curl ∂_iω_j − ∂_jω_i of a one-form jet (closedness; equal to the
/// covariant antisymmetrization by symmetry of the connection).
pub fn check_closed<S: Scalar>(one_form: &TensorJet<S>) -> f64 {
    assert_eq!(one_form.rank(), 1, "closedness applies to one-forms");
    assert!(one_form.order() >= 1, "need at least one derivative order");
    let n = one_form.dim();
    let mut curl = TensorValue::zeros(n, vec![Slot::Down; 2], one_form.point().to_vec());
    let mut dmax = S::zero();
    for i in 0..n {
        for j in 0..n {
            let dij = one_form.get(&[j]).partial(i).value();
            dmax = num_traits::Float::max(dmax, num_traits::Float::abs(dij));
            curl.set(&[i, j], dij - one_form.get(&[i]).partial(j).value());
        }
    }
    scaled_zero(&curl, dmax).residual
}

// ---------------------------------------------------------------------------
// Curvature cyclic condition and commutator proportionality
// ---------------------------------------------------------------------------

/// Scaled residual of R_{im}R_{jkl}{}^m + R_{jm}R_{kil}{}^m + R_{km}R_{ijl}{}^m = 0.
pub fn curvature_cyclic_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> PointResidual {
    let cyc = ricci_riemann_cyclic(geo);
    let comparison = geo.ricci.values().max_abs() * geo.riemann.values().max_abs();
    scaled_zero(&cyc, comparison)
}

/// Which base tensor the commutator is fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeszczKind {
    /// Fit against the g-wedge action Q(g, R).
    Pseudosymmetric,
    /// Fit against the Ricci-wedge action Q(Ric, R).
    GeneralizedRicci,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeszczRecord {
    pub kind: DeszczKind,
    /// Best-fit proportionality coefficient; `None` when the wedge action
    /// vanishes (locally symmetric / constant-curvature situations).
    pub l: Option<f64>,
    pub residual: f64,
    pub undefined: bool,
    /// For the Ricci-wedge fit: whether L sits at the distinguished value −1/3.
    pub l_near_minus_one_third: Option<bool>,
}

/// Fit (∇_s∇_i − ∇_i∇_s)R_{jklm} = L · Q over all six indices, with the
/// commutator obtained from the curvature action (no second derivatives).
pub fn fit_deszcz<S: Scalar>(geo: &GeometryAtPoint<S>, kind: DeszczKind) -> DeszczRecord {
    let n = geo.n;
    let riem = tv_f(&geo.riemann.values()); // R_{sij}{}^a
    let rlow = tv_f(&geo.riemann.lower_slot(3, &geo.metric).values());
    let base = match kind {
        DeszczKind::Pseudosymmetric => tv_f(&geo.metric.values()),
        DeszczKind::GeneralizedRicci => tv_f(&geo.ricci.values()),
    };
    let point: Vec<f64> = geo.point.iter().map(|&x| to_f(x)).collect();

    let mut com = TensorValue::zeros(n, vec![Slot::Down; 6], point.clone());
    for_each_index(n, 6, |idx| {
        let (s, i, j, k, l, m) = (idx[0], idx[1], idx[2], idx[3], idx[4], idx[5]);
        let mut acc = 0.0;
        for a in 0..n {
            acc += riem.get(&[s, i, j, a]) * rlow.get(&[a, k, l, m])
                + riem.get(&[s, i, k, a]) * rlow.get(&[j, a, l, m])
                + riem.get(&[s, i, l, a]) * rlow.get(&[j, k, a, m])
                + riem.get(&[s, i, m, a]) * rlow.get(&[j, k, l, a]);
        }
        com.set(idx, acc);
    });

    let mut q = TensorValue::zeros(n, vec![Slot::Down; 6], point);
    for_each_index(n, 6, |idx| {
        let (s, i, j, k, l, m) = (idx[0], idx[1], idx[2], idx[3], idx[4], idx[5]);
        let v = base.get(&[j, s]) * rlow.get(&[i, k, l, m])
            - base.get(&[j, i]) * rlow.get(&[s, k, l, m])
            + base.get(&[k, s]) * rlow.get(&[j, i, l, m])
            - base.get(&[k, i]) * rlow.get(&[j, s, l, m])
            + base.get(&[l, s]) * rlow.get(&[j, k, i, m])
            - base.get(&[l, i]) * rlow.get(&[j, k, s, m])
            + base.get(&[m, s]) * rlow.get(&[j, k, l, i])
            - base.get(&[m, i]) * rlow.get(&[j, k, l, s]);
        q.set(idx, v);
    });

    let undefined = q.max_abs() < DEGENERATE_EPS * (1.0 + base.max_abs() * rlow.max_abs());
    let l = if undefined {
        None
    } else {
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, w) in com.components().iter().zip(q.components()) {
            num += c * w;
            den += w * w;
        }
        Some(num / den)
    };
    let residual = scaled_diff(&com, &q.scale(l.unwrap_or(0.0))).residual;
    let l_near_minus_one_third = match (kind, l) {
        (DeszczKind::GeneralizedRicci, Some(l)) => Some((l + 1.0 / 3.0).abs() < 1e-6),
        _ => None,
    };
    DeszczRecord {
        kind,
        l,
        residual,
        undefined,
        l_near_minus_one_third,
    }
}

// ---------------------------------------------------------------------------
// Simple pointwise residuals
// ---------------------------------------------------------------------------

/// Scaled deviation of Ricci from (R/n) g.
pub fn einstein_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> f64 {
    let ric = geo.ricci.values();
    let g = geo.metric.values();
    let k = geo.scalar.value() / S::from_usize(geo.n).unwrap();
    to_f(S::from_f64(scaled_diff(&ric, &g.scale(k)).residual).unwrap())
}

/// Scaled norm of Z against its ingredients.
pub fn z_flat_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> f64 {
    let z = geo.z.values();
    let comparison = num_traits::Float::max(
        geo.ricci.values().max_abs(),
        num_traits::Float::abs(geo.phi.value()) * geo.metric.values().max_abs(),
    );
    scaled_zero(&z, comparison).residual
}

/// Scaled norm of the conformal-family tensor against the Riemann tensor.
pub fn conformal_flatness_residual<S: Scalar>(
    geo: &GeometryAtPoint<S>,
) -> Result<f64, GeometryError> {
    let c = curvature_family(geo, CurvatureKind::Conformal)?;
    let comparison = geo.riemann.values().max_abs();
    Ok(scaled_zero(&c.values(), comparison).residual)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicityRecord {
    pub kind: String,
    /// ‖∇·K‖ scaled against ‖∇·Riemann‖.
    pub residual: f64,
}

/// Scaled norm of the divergence of one family tensor.
pub fn harmonicity_residual<S: Scalar>(
    geo: &GeometryAtPoint<S>,
    kind: CurvatureKind,
) -> Result<HarmonicityRecord, GeometryError> {
    let family = curvature_family(geo, kind)?;
    let div = family.covariant_derivative().contract(0, 4).values();
    let comparison = geo.div_riemann().values().max_abs();
    Ok(HarmonicityRecord {
        kind: kind.name().to_string(),
        residual: scaled_zero(&div, comparison).residual,
    })
}

// ---------------------------------------------------------------------------
// Full per-point classification
// ---------------------------------------------------------------------------

/// Knobs for [`classify_point`].
#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    /// Verdict tolerance (eigenvalue clustering, pass flags).
    pub tolerance: f64,
    /// (a, b) for the two-parameter family diagnostics.
    pub w_constants: (f64, f64),
    /// Optional covector field for the concircular fit.
    pub t_covector: Option<Vec<Expr>>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            tolerance: 1e-8,
            w_constants: (1.0, 1.0),
            t_covector: None,
        }
    }
}

/// Everything the classifier reports at one base point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointClassification {
    pub point: Vec<f64>,
    pub einstein_residual: f64,
    pub z_flat_residual: f64,
    pub quasi_einstein: QuasiEinsteinVerdict,
    pub codazzi_z_residual: f64,
    pub ncs: NcsRecord,
    pub recurrence: RecurrenceRecord,
    pub conformal_flatness_residual: f64,
    pub harmonicity: Vec<HarmonicityRecord>,
    pub wzs: WzsSolution,
    pub z_rank: ZRankRecord,
    pub rank1: Rank1Record,
    pub eigen_omega: EigenOmegaRecord,
    pub ricci_form: RicciFormRecord,
    /// (ω_j∇_k − ω_k∇_j)φ, when ω is significant.
    pub omega_phi_residual: Option<f64>,
    /// (η_j∇_k − η_k∇_j)φ, when η is significant.
    pub eta_phi_residual: Option<f64>,
    pub concircular: Option<ConcircularRecord>,
    pub curvature_cyclic_residual: f64,
    pub deszcz: Vec<DeszczRecord>,
}

/// Run the whole battery at one point.
pub fn classify_point<S: Scalar>(
    geo: &GeometryAtPoint<S>,
    opts: &ClassifyOptions,
) -> Result<PointClassification, GeometryError> {
    let g = mat_f(&geo.metric_matrix());
    let g_inv = mat_f(&geo.metric_inv_matrix());
    let ricci = tv_f(&geo.ricci.values());
    let z = tv_f(&geo.z.values());
    let grad_phi = tv_f(&geo.grad_phi().values());
    let grad_phi_slice: Vec<f64> = (0..geo.n).map(|i| grad_phi.get(&[i])).collect();

    let wzs = solve_wzs(geo);
    let rank1 = check_rank1_z(&z, &wzs.eta, &g_inv);
    let eigen_omega = check_eigen_omega(&z, &wzs.omega, &g_inv);
    let ricci_form = ricci_form_from_omega(geo, &wzs);
    let omega_phi_residual = (!wzs.omega_zero)
        .then(|| phi_compatibility_residual(&wzs.omega, &grad_phi_slice));
    let eta_phi_residual =
        (!wzs.eta_zero).then(|| phi_compatibility_residual(&wzs.eta, &grad_phi_slice));

    let (wa, wb) = opts.w_constants;
    let mut harmonicity = Vec::new();
    for kind in [
        CurvatureKind::Conformal,
        CurvatureKind::Projective,
        CurvatureKind::Concircular,
        CurvatureKind::Conharmonic,
        CurvatureKind::QuasiConformal { a: wa, b: wb },
    ] {
        harmonicity.push(harmonicity_residual(geo, kind)?);
    }

    let concircular = match &opts.t_covector {
        Some(exprs) => Some(check_concircular(geo, exprs)?),
        None => None,
    };

    Ok(PointClassification {
        point: geo.point.iter().map(|&x| to_f(x)).collect(),
        einstein_residual: einstein_residual(geo),
        z_flat_residual: z_flat_residual(geo),
        quasi_einstein: quasi_einstein_decompose(&ricci, &g, opts.tolerance),
        codazzi_z_residual: check_codazzi_z(geo),
        ncs: check_ncs(geo),
        recurrence: solve_recurrence(geo),
        conformal_flatness_residual: conformal_flatness_residual(geo)?,
        harmonicity,
        wzs,
        z_rank: z_rank(&z, &g),
        rank1,
        eigen_omega,
        ricci_form,
        omega_phi_residual,
        eta_phi_residual,
        concircular,
        curvature_cyclic_residual: curvature_cyclic_residual(geo).residual,
        deszcz: vec![
            fit_deszcz(geo, DeszczKind::Pseudosymmetric),
            fit_deszcz(geo, DeszczKind::GeneralizedRicci),
        ],
    })
}
