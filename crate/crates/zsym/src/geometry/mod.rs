//! Curvature of a closed-form Riemannian metric at a point.
//!
//! [`geometry_at`] evaluates the metric's derivative jets at a base point and
//! assembles, in order: the inverse metric (solved order by order against the
//! value-level inverse), Christoffel symbols, the Riemann tensor, Ricci,
//! scalar curvature, the scalar field φ, and the generalized Ricci-type
//! tensor Z_kl = R_kl + φ g_kl. Every stage is a jet, so covariant
//! derivatives of any of these — including second covariant derivatives —
//! come out of the same tables with no step-size error.
//!
//! Curvature sign conventions, fixed once and tested below:
//!
//! ```text
//! (∇_j∇_k − ∇_k∇_j) ω_l = R_{jkl}{}^m ω_m
//! R_{jkl}{}^m = ∂_k Γ^m_{jl} − ∂_j Γ^m_{kl} + Γ^b_{jl} Γ^m_{kb} − Γ^b_{kl} Γ^m_{jb}
//! R_kl = −R_{mkl}{}^m          (unit n-sphere has scalar +n(n−1))
//! ∇_m R_{jkl}{}^m = ∇_k R_jl − ∇_j R_kl
//! ```

pub mod tensor;

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_rational::Ratio;
use thiserror::Error;

use crate::exprlang::{DomainError, Expr};
use crate::jets::{jet_eval, Jet, JetEnv, JetSpace};
use crate::scalar::{fl, fu, to_f, Scalar};
use tensor::{for_each_index, Christoffel, Slot, TensorJet};

/// How the scalar field φ pairing with the metric inside Z is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiSpec {
    /// φ ≡ 0, so Z is plain Ricci.
    Zero,
    /// φ = −R/n, which makes Z trace-free.
    Classical,
    /// A closed-form expression in the coordinates (and constants).
    Expr(Expr),
}

/// A closed-form metric on a coordinate box.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub n: usize,
    pub coords: Vec<String>,
    /// Upper-triangle entries: `upper[i][j - i]` is g_{ij} for i ≤ j.
    pub upper: Vec<Vec<Expr>>,
    pub phi: PhiSpec,
    /// Per-coordinate sampling interval.
    pub domain: Vec<(f64, f64)>,
    pub constants: Vec<(String, f64)>,
}

impl MetricSpec {
    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        let (i, j) = (i.min(j), i.max(j));
        &self.upper[i][j - i]
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("metric is not positive definite at {point}: smallest eigenvalue {eigenvalue:e}")]
    NotPositiveDefinite { point: String, eigenvalue: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub fn fmt_point<S: Scalar>(point: &[S]) -> String {
    let mut s = String::from("(");
    for (i, x) in point.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{x}");
    }
    s.push(')');
    s
}

/// Everything curvature-related at one base point, as jets.
///
/// Jet orders: metric and inverse metric 4, Christoffel 3, Riemann and all
/// Ricci-level fields 2 — enough for one covariant derivative of a second
/// covariant derivative of the metric-level data.
#[derive(Debug)]
pub struct GeometryAtPoint<S: Scalar> {
    pub space: Arc<JetSpace<S>>,
    pub env: JetEnv<S>,
    pub point: Vec<S>,
    pub n: usize,
    /// g_{ij}, jets of order 4, Christoffel data attached.
    pub metric: TensorJet<S>,
    /// g^{ij}, jets of order 4.
    pub metric_inv: TensorJet<S>,
    pub gamma: Arc<Christoffel<S>>,
    /// R_{jkl}{}^m, order 2.
    pub riemann: TensorJet<S>,
    /// R_kl, order 2.
    pub ricci: TensorJet<S>,
    /// Scalar curvature R, order 2.
    pub scalar: Jet<S>,
    /// φ, order 2.
    pub phi: Jet<S>,
    /// Z_kl = R_kl + φ g_kl, order 2.
    pub z: TensorJet<S>,
    /// Z = g^{kl} Z_kl = R + nφ, order 2.
    pub z_scalar: Jet<S>,
}

pub fn geometry_at<S: Scalar>(
    spec: &MetricSpec,
    point: &[S],
) -> Result<GeometryAtPoint<S>, GeometryError> {
    let n = spec.n;
    assert_eq!(point.len(), n, "point dimension must match the metric");
    let space = JetSpace::<S>::new(n, 4);
    let constants: Vec<(String, S)> = spec
        .constants
        .iter()
        .map(|(name, v)| (name.clone(), fl(*v)))
        .collect();
    let env = JetEnv::new(&space, &spec.coords, point, &constants, 4);

    // Metric jets, symmetric fill from the upper triangle.
    let mut metric = TensorJet::new(&space, vec![Slot::Down, Slot::Down], 4, point.to_vec(), None);
    for i in 0..n {
        for j in i..n {
            let jet = jet_eval(spec.entry(i, j), &env)?;
            if j > i {
                metric.set(&[j, i], jet.clone());
            }
            metric.set(&[i, j], jet);
        }
    }

    let g0 = metric.values().to_matrix();
    let eigs = g0.symmetric_eigenvalues();
    let lmax = eigs.iter().fold(S::zero(), |m, &e| {
        num_traits::Float::max(m, num_traits::Float::abs(e))
    });
    let lmin = eigs.iter().fold(S::infinity(), |m, &e| num_traits::Float::min(m, e));
    if !(lmin > fl::<S>(1e-12) * (S::one() + lmax)) {
        return Err(GeometryError::NotPositiveDefinite {
            point: fmt_point(point),
            eigenvalue: to_f(lmin),
        });
    }

    let metric_inv = invert_metric_jets(&space, &metric, &g0);
    let gamma = Arc::new(christoffel(&space, &metric, &metric_inv));
    let metric = metric.with_gamma(gamma.clone());
    let metric_inv = metric_inv.with_gamma(gamma.clone());

    let riemann = riemann_tensor(&space, &gamma, point);
    // R_kl = −R_{mkl}{}^m
    let ricci = riemann.contract(0, 3).scale(-S::one());

    let mut scalar = Jet::constant(&space, S::zero(), 2);
    for_each_index(n, 2, |idx| {
        scalar = scalar.add(&metric_inv.get(idx).mul(ricci.get(idx)));
    });

    let phi = match &spec.phi {
        PhiSpec::Zero => Jet::constant(&space, S::zero(), 2),
        PhiSpec::Classical => scalar.scale(-S::one() / fu(n)),
        PhiSpec::Expr(e) => jet_eval(e, &env)?.truncated(2),
    };

    let z = ricci.add(&metric.scale_by_jet(&phi));
    let z_scalar = scalar.add_scaled(fu(n), &phi);

    Ok(GeometryAtPoint {
        space,
        env,
        point: point.to_vec(),
        n,
        metric,
        metric_inv,
        gamma,
        riemann,
        ricci,
        scalar,
        phi,
        z,
        z_scalar,
    })
}

/// Solve for inverse-metric jets order by order.
///
/// g·h = 1 forces, for every multi-index α > 0,
/// Σ_{β≤α} C(α,β) (∂^β g)(∂^{α−β} h) = 0; the β = 0 term isolates the
/// unknown: ∂^α h = −g(p)^{-1} Σ_{β>0} C(α,β) (∂^β g)(∂^{α−β} h). Graded
/// enumeration guarantees every right-hand side is already known.
fn invert_metric_jets<S: Scalar>(
    space: &Arc<JetSpace<S>>,
    metric: &TensorJet<S>,
    g0: &DMatrix<S>,
) -> TensorJet<S> {
    let n = space.vars();
    let order = metric.order();
    let positions = space.indices_at(order).len();

    let h0 = g0
        .clone()
        .try_inverse()
        .expect("positive-definite matrix must invert");
    let g_tab: Vec<DMatrix<S>> = (0..positions)
        .map(|p| DMatrix::from_fn(n, n, |i, j| metric.get(&[i, j]).coeff(p)))
        .collect();
    let mut h_tab: Vec<DMatrix<S>> = vec![h0.clone(); positions];
    for p in 1..positions {
        let mut acc = DMatrix::<S>::zeros(n, n);
        for &(b, rest, w) in space.leibniz_row(p) {
            if b == 0 {
                continue;
            }
            acc += (&g_tab[b as usize] * &h_tab[rest as usize]).scale(w);
        }
        h_tab[p] = -(&h0 * acc);
    }

    let mut out = TensorJet::new(
        space,
        vec![Slot::Up, Slot::Up],
        order,
        metric.point().to_vec(),
        None,
    );
    for i in 0..n {
        for j in 0..n {
            let c = (0..positions).map(|p| h_tab[p][(i, j)]).collect();
            out.set(&[i, j], Jet::from_coeffs(space, order, c));
        }
    }
    out
}

/// Γ^i_{jk} = ½ g^{im} (∂_j g_{mk} + ∂_k g_{mj} − ∂_m g_{jk}), order 3.
fn christoffel<S: Scalar>(
    space: &Arc<JetSpace<S>>,
    metric: &TensorJet<S>,
    metric_inv: &TensorJet<S>,
) -> Christoffel<S> {
    let n = space.vars();
    let half = fl::<S>(0.5);
    let mut jets = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut acc = Jet::constant(space, S::zero(), 3);
                for m in 0..n {
                    let bracket = metric
                        .get(&[m, k])
                        .partial(j)
                        .add(&metric.get(&[m, j]).partial(k))
                        .sub(&metric.get(&[j, k]).partial(m));
                    acc = acc.add(&metric_inv.get(&[i, m]).mul(&bracket));
                }
                jets.push(acc.scale(half));
            }
        }
    }
    Christoffel::new(n, jets)
}

/// R_{jkl}{}^m as order-2 jets from order-3 Christoffel jets.
fn riemann_tensor<S: Scalar>(
    space: &Arc<JetSpace<S>>,
    gamma: &Arc<Christoffel<S>>,
    point: &[S],
) -> TensorJet<S> {
    let n = space.vars();
    let sig = vec![Slot::Down, Slot::Down, Slot::Down, Slot::Up];
    let mut out = TensorJet::new(space, sig, 2, point.to_vec(), Some(gamma.clone()));
    for_each_index(n, 4, |idx| {
        let (j, k, l, m) = (idx[0], idx[1], idx[2], idx[3]);
        let mut jet = gamma
            .get(m, j, l)
            .partial(k)
            .sub(&gamma.get(m, k, l).partial(j));
        for b in 0..n {
            jet = jet
                .add(&gamma.get(b, j, l).mul(gamma.get(m, k, b)))
                .sub(&gamma.get(b, k, l).mul(gamma.get(m, j, b)));
        }
        out.set(idx, jet.truncated(2));
    });
    out
}

impl<S: Scalar> GeometryAtPoint<S> {
    /// ∇_k R as a covector of order-1 jets.
    pub fn grad_scalar(&self) -> TensorJet<S> {
        TensorJet::scalar(
            self.scalar.clone(),
            self.point.clone(),
            Some(self.gamma.clone()),
        )
        .covariant_derivative()
    }

    /// ∇_k φ as a covector of order-1 jets.
    pub fn grad_phi(&self) -> TensorJet<S> {
        TensorJet::scalar(self.phi.clone(), self.point.clone(), Some(self.gamma.clone()))
            .covariant_derivative()
    }

    /// ∇_m R_{jkl}{}^m, order 1.
    pub fn div_riemann(&self) -> TensorJet<S> {
        self.riemann.covariant_derivative().contract(0, 4)
    }

    pub fn metric_matrix(&self) -> DMatrix<S> {
        self.metric.values().to_matrix()
    }

    pub fn metric_inv_matrix(&self) -> DMatrix<S> {
        self.metric_inv.values().to_matrix()
    }
}

/// The curvature-tensor family sharing the divergence structure
/// ∇_m K_{jkl}{}^m = A ∇_m R_{jkl}{}^m + B (g_kl ∇_j − g_jl ∇_k) R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureKind {
    Conformal,
    Projective,
    Concircular,
    Conharmonic,
    /// a·Riemann − b·(Ricci wedge) + trace correction; reduces to a linear
    /// combination of the conformal and concircular tensors.
    QuasiConformal { a: f64, b: f64 },
}

impl CurvatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurvatureKind::Conformal => "conformal",
            CurvatureKind::Projective => "projective",
            CurvatureKind::Concircular => "concircular",
            CurvatureKind::Conharmonic => "conharmonic",
            CurvatureKind::QuasiConformal { .. } => "quasi_conformal",
        }
    }
}

/// Assemble a family member K_{jkl}{}^m as order-2 jets.
///
/// All five members are instances of
/// a·R_{jkl}{}^m + p(δ_j^m R_kl − δ_k^m R_jl) + q(R_j{}^m g_kl − R_k{}^m g_jl)
/// + r·R(δ_j^m g_kl − δ_k^m g_jl).
pub fn curvature_family<S: Scalar>(
    geo: &GeometryAtPoint<S>,
    kind: CurvatureKind,
) -> Result<TensorJet<S>, GeometryError> {
    let n = geo.n;
    if n < 3 {
        return Err(GeometryError::Invalid(format!(
            "the {} tensor needs dimension ≥ 3, got {n}",
            kind.name()
        )));
    }
    let nf = fu::<S>(n);
    let one = S::one();
    let (a, p, q, r): (S, S, S, S) = match kind {
        CurvatureKind::Conformal => (
            one,
            one / (nf - fl(2.0)),
            one / (nf - fl(2.0)),
            -one / ((nf - one) * (nf - fl(2.0))),
        ),
        CurvatureKind::Projective => (one, one / (nf - one), S::zero(), S::zero()),
        CurvatureKind::Concircular => (one, S::zero(), S::zero(), one / (nf * (nf - one))),
        CurvatureKind::Conharmonic => (
            one,
            one / (nf - fl(2.0)),
            one / (nf - fl(2.0)),
            S::zero(),
        ),
        CurvatureKind::QuasiConformal { a, b } => {
            let (a, b) = (fl::<S>(a), fl::<S>(b));
            (
                a,
                -b,
                -b,
                (a + fl::<S>(2.0) * b * (nf - one)) / (nf * (nf - one)),
            )
        }
    };

    let ric_up = geo.ricci.raise_slot(1, &geo.metric_inv); // R_j{}^m
    let mut out = TensorJet::new(
        &geo.space,
        vec![Slot::Down, Slot::Down, Slot::Down, Slot::Up],
        2,
        geo.point.clone(),
        Some(geo.gamma.clone()),
    );
    for_each_index(n, 4, |idx| {
        let (j, k, l, m) = (idx[0], idx[1], idx[2], idx[3]);
        let mut jet = geo.riemann.get(idx).scale(a);
        if j == m {
            jet = jet.add_scaled(p, geo.ricci.get(&[k, l]));
            jet = jet.add(&geo.scalar.mul(geo.metric.get(&[k, l])).scale(r));
        }
        if k == m {
            jet = jet.add_scaled(-p, geo.ricci.get(&[j, l]));
            jet = jet.add(&geo.scalar.mul(geo.metric.get(&[j, l])).scale(-r));
        }
        jet = jet.add(&ric_up.get(&[j, m]).mul(geo.metric.get(&[k, l])).scale(q));
        jet = jet.add(&ric_up.get(&[k, m]).mul(geo.metric.get(&[j, l])).scale(-q));
        out.set(idx, jet.truncated(2));
    });
    Ok(out)
}

/// Exact divergence coefficients (A, B) with
/// ∇_m K_{jkl}{}^m = A ∇_m R_{jkl}{}^m + B (g_kl ∇_j − g_jl ∇_k) R.
/// `None` for the quasi-conformal tensor, whose coefficients depend on the
/// real parameters (a, b); use [`divergence_coefficients`] for those.
pub fn divergence_coefficients_exact(
    kind: CurvatureKind,
    n: usize,
) -> Option<(Ratio<i64>, Ratio<i64>)> {
    let n = n as i64;
    let r = |num: i64, den: i64| Ratio::new(num, den);
    match kind {
        CurvatureKind::Conformal => Some((
            r(n - 3, n - 2),
            r(n - 3, 2 * (n - 1) * (n - 2)),
        )),
        CurvatureKind::Projective => Some((r(n - 2, n - 1), r(0, 1))),
        CurvatureKind::Concircular => Some((r(1, 1), r(1, n * (n - 1)))),
        CurvatureKind::Conharmonic => Some((r(n - 3, n - 2), r(1, 2 * (n - 2)))),
        CurvatureKind::QuasiConformal { .. } => None,
    }
}

pub fn divergence_coefficients<S: Scalar>(kind: CurvatureKind, n: usize) -> (S, S) {
    if let CurvatureKind::QuasiConformal { a, b } = kind {
        let nf = n as f64;
        return (
            fl(a + b),
            fl((2.0 * a - b * (nf - 1.0) * (nf - 4.0)) / (2.0 * nf * (nf - 1.0))),
        );
    }
    let (a, b) = divergence_coefficients_exact(kind, n).expect("exact row exists");
    let conv = |x: Ratio<i64>| fl::<S>(*x.numer() as f64) / fl::<S>(*x.denom() as f64);
    (conv(a), conv(b))
}
