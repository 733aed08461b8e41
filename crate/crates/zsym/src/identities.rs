//! Differential identities of the curvature stack, checked numerically.
//!
//! every check here evaluates *both* sides of an identity independently —
//! the direct tensor computation and the closed form — and reports the
//! scaled difference ‖LHS − RHS‖∞ / (1 + max(‖LHS‖∞, ‖RHS‖∞)). a
//! convention error therefore shows up as a fat residual instead of
//! silently cancelling.

use serde::{Deserialize, Serialize};

use crate::geometry::tensor::{for_each_index, Slot, TensorValue};
use crate::geometry::{
    curvature_family, divergence_coefficients, CurvatureKind, GeometryAtPoint, GeometryError,
};
use crate::scalar::{fl, fu, to_f, Scalar};

/// Scaled residual of one identity at one base point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointResidual {
    /// ‖LHS − RHS‖∞ over the denominator.
    pub residual: f64,
    /// Denominator 1 + max(‖LHS‖∞, ‖RHS‖∞).
    pub scale: f64,
    /// Index tuple of the worst component.
    pub component: Vec<usize>,
}

/// Worst point of an aggregated check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstOffender {
    pub point: Vec<f64>,
    pub component: Vec<usize>,
    pub residual: f64,
    pub scale: f64,
}

/// Aggregate of one identity over a sample of base points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub points: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub worst: Option<WorstOffender>,
}

/// Difference of two independently computed tensors, scaled.
pub fn scaled_diff<S: Scalar>(lhs: &TensorValue<S>, rhs: &TensorValue<S>) -> PointResidual {
    let diff = lhs.sub(rhs);
    let (component, raw) = diff.max_abs_arg();
    let scale = S::one() + num_traits::Float::max(lhs.max_abs(), rhs.max_abs());
    PointResidual {
        residual: to_f(raw / scale),
        scale: to_f(scale),
        component,
    }
}

/// Deviation of a tensor from zero, scaled by 1 + the norm of a natural
/// comparison tensor (so "small" means small against the curvature that
/// feeds the quantity, not against an absolute unit).
pub fn scaled_zero<S: Scalar>(t: &TensorValue<S>, comparison_norm: S) -> PointResidual {
    let (component, raw) = t.max_abs_arg();
    let scale = S::one() + comparison_norm;
    PointResidual {
        residual: to_f(raw / scale),
        scale: to_f(scale),
        component,
    }
}

/// Fold per-point residuals into an [`IdentityReport`].
pub fn aggregate<S: Scalar>(
    name: &str,
    geos: &[GeometryAtPoint<S>],
    tolerance: f64,
    f: impl Fn(&GeometryAtPoint<S>) -> Result<PointResidual, GeometryError>,
) -> Result<IdentityReport, GeometryError> {
    let mut max_residual = 0.0f64;
    let mut sum = 0.0f64;
    let mut worst: Option<WorstOffender> = None;
    for geo in geos {
        let r = f(geo)?;
        sum += r.residual;
        if r.residual >= max_residual || worst.is_none() {
            max_residual = r.residual;
            worst = Some(WorstOffender {
                point: geo.point.iter().map(|&x| to_f(x)).collect(),
                component: r.component.clone(),
                residual: r.residual,
                scale: r.scale,
            });
        }
    }
    let points = geos.len();
    let mean_residual = if points == 0 { 0.0 } else { sum / points as f64 };
    Ok(IdentityReport {
        name: name.to_string(),
        points,
        max_residual,
        mean_residual,
        tolerance,
        pass: max_residual < tolerance,
        worst,
    })
}

/// ∇_c g_ij = 0 and ∇_c g^ij = 0.
pub fn metric_compatibility_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> PointResidual {
    let ng = geo.metric.covariant_derivative().values();
    let nginv = geo.metric_inv.covariant_derivative().values();
    let scale = num_traits::Float::max(
        geo.metric.values().max_abs(),
        geo.metric_inv.values().max_abs(),
    );
    let a = scaled_zero(&ng, scale);
    let b = scaled_zero(&nginv, scale);
    if a.residual >= b.residual {
        a
    } else {
        b
    }
}

/// Antisymmetry in both index pairs, pair exchange, and the first Bianchi
/// identity of the fully lowered Riemann tensor.
pub fn riemann_symmetry_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> PointResidual {
    let low = geo.riemann.lower_slot(3, &geo.metric).values();
    let n = geo.n;
    let mut raw = S::zero();
    let mut component = vec![0usize; 4];
    let mut consider = |v: S, idx: &[usize]| {
        let a = num_traits::Float::abs(v);
        if a > raw {
            raw = a;
            component = idx.to_vec();
        }
    };
    for_each_index(n, 4, |idx| {
        let (j, k, l, m) = (idx[0], idx[1], idx[2], idx[3]);
        let v = low.get(idx);
        consider(v + low.get(&[k, j, l, m]), idx);
        consider(v + low.get(&[j, k, m, l]), idx);
        consider(v - low.get(&[l, m, j, k]), idx);
        consider(
            v + low.get(&[k, l, j, m]) + low.get(&[l, j, k, m]),
            idx,
        );
    });
    let scale = S::one() + low.max_abs();
    PointResidual {
        residual: to_f(raw / scale),
        scale: to_f(scale),
        component,
    }
}

/// Second Bianchi identity: ∇_i R_{jkl}{}^m + ∇_j R_{kil}{}^m + ∇_k R_{ijl}{}^m = 0.
pub fn second_bianchi_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> PointResidual {
    let nr = geo.riemann.covariant_derivative().values();
    let n = geo.n;
    let mut defect = TensorValue::zeros(n, vec![Slot::Down; 5], geo.point.clone());
    for_each_index(n, 5, |idx| {
        let (i, j, k, l, m) = (idx[0], idx[1], idx[2], idx[3], idx[4]);
        let cyc = nr.get(idx) + nr.get(&[j, k, i, l, m]) + nr.get(&[k, i, j, l, m]);
        defect.set(idx, cyc);
    });
    scaled_zero(&defect, nr.max_abs())
}

/// Contracted second Bianchi: ∇_m R_{jkl}{}^m = ∇_k R_jl − ∇_j R_kl.
pub fn contracted_bianchi_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> PointResidual {
    let lhs = geo.div_riemann().values();
    let nric = geo.ricci.covariant_derivative().values();
    let n = geo.n;
    let mut rhs = TensorValue::zeros(n, vec![Slot::Down; 3], geo.point.clone());
    for_each_index(n, 3, |idx| {
        let (j, k, l) = (idx[0], idx[1], idx[2]);
        rhs.set(idx, nric.get(&[k, j, l]) - nric.get(&[j, k, l]));
    });
    scaled_diff(&lhs, &rhs)
}

/// Contracted Bianchi written through Z:
/// ∇_m R_{jkl}{}^m = ∇_k Z_jl − ∇_j Z_kl + (g_kl ∇_j − g_jl ∇_k) φ.
pub fn contracted_bianchi_z_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> PointResidual {
    let lhs = geo.div_riemann().values();
    let nz = geo.z.covariant_derivative().values();
    let nphi = geo.grad_phi().values();
    let g = geo.metric.values();
    let n = geo.n;
    let mut rhs = TensorValue::zeros(n, vec![Slot::Down; 3], geo.point.clone());
    for_each_index(n, 3, |idx| {
        let (j, k, l) = (idx[0], idx[1], idx[2]);
        let v = nz.get(&[k, j, l]) - nz.get(&[j, k, l]) + g.get(&[k, l]) * nphi.get(&[j])
            - g.get(&[j, l]) * nphi.get(&[k]);
        rhs.set(idx, v);
    });
    scaled_diff(&lhs, &rhs)
}

/// Differential identity tying the cyclic second divergence of Riemann to
/// Ricci–Riemann products:
/// ∇_i∇_m R_{jkl}{}^m + ∇_j∇_m R_{kil}{}^m + ∇_k∇_m R_{ijl}{}^m
///   = −(R_{im} R_{jkl}{}^m + R_{jm} R_{kil}{}^m + R_{km} R_{ijl}{}^m).
pub fn lovelock_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> PointResidual {
    let nd = geo.div_riemann().covariant_derivative().values();
    let n = geo.n;
    let mut lhs = TensorValue::zeros(n, vec![Slot::Down; 4], geo.point.clone());
    for_each_index(n, 4, |idx| {
        let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
        let v = nd.get(idx) + nd.get(&[j, k, i, l]) + nd.get(&[k, i, j, l]);
        lhs.set(idx, v);
    });
    let rhs = ricci_riemann_cyclic(geo).scale(-S::one());
    scaled_diff(&lhs, &rhs)
}

/// Cyclic commutator identity on the Ricci tensor:
/// (∇_i∇_k − ∇_k∇_i)R_jl + (∇_j∇_i − ∇_i∇_j)R_kl + (∇_k∇_j − ∇_j∇_k)R_il
///   = −(R_{im} R_{jkl}{}^m + R_{jm} R_{kil}{}^m + R_{km} R_{ijl}{}^m).
pub fn ricci_commutator_residual<S: Scalar>(geo: &GeometryAtPoint<S>) -> PointResidual {
    let t = geo
        .ricci
        .covariant_derivative()
        .covariant_derivative()
        .values(); // t[i, c, k, l] = ∇_i ∇_c R_kl
    let n = geo.n;
    let mut lhs = TensorValue::zeros(n, vec![Slot::Down; 4], geo.point.clone());
    for_each_index(n, 4, |idx| {
        let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
        let v = t.get(&[i, k, j, l]) - t.get(&[k, i, j, l]) + t.get(&[j, i, k, l])
            - t.get(&[i, j, k, l])
            + t.get(&[k, j, i, l])
            - t.get(&[j, k, i, l]);
        lhs.set(idx, v);
    });
    let rhs = ricci_riemann_cyclic(geo).scale(-S::one());
    scaled_diff(&lhs, &rhs)
}

/// R_{im} R_{jkl}{}^m + R_{jm} R_{kil}{}^m + R_{km} R_{ijl}{}^m as values.
/// The contraction slot is already an up/down pair (Ricci's second index
/// down, Riemann's last index up), so no metric is involved.
pub fn ricci_riemann_cyclic<S: Scalar>(geo: &GeometryAtPoint<S>) -> TensorValue<S> {
    let ric = geo.ricci.values();
    let riem = geo.riemann.values();
    let n = geo.n;
    let mut out = TensorValue::zeros(n, vec![Slot::Down; 4], geo.point.clone());
    for_each_index(n, 4, |idx| {
        let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
        let mut acc = S::zero();
        for m in 0..n {
            acc += ric.get(&[i, m]) * riem.get(&[j, k, l, m])
                + ric.get(&[j, m]) * riem.get(&[k, i, l, m])
                + ric.get(&[k, m]) * riem.get(&[i, j, l, m]);
        }
        out.set(idx, acc);
    });
    out
}

/// Total trace-freeness of the conformal tensor: the contraction on every
/// up/down pairing vanishes.
pub fn conformal_traceless_residual<S: Scalar>(
    geo: &GeometryAtPoint<S>,
) -> Result<PointResidual, GeometryError> {
    let c = curvature_family(geo, CurvatureKind::Conformal)?;
    let n = geo.n;
    let scale = S::one() + c.values().max_abs();
    let mut raw = S::zero();
    let mut component = vec![0usize; 2];
    let mut consider = |v: S, a: usize, b: usize| {
        let m = num_traits::Float::abs(v);
        if m > raw {
            raw = m;
            component = vec![a, b];
        }
    };
    // C_{mkl}{}^m
    let tr = c.contract(0, 3).values();
    for_each_index(n, 2, |idx| consider(tr.get(idx), idx[0], idx[1]));
    // g^{jl} C_{jkl}{}^m and g^{kl} C_{jkl}{}^m
    let raised = c.raise_slot(2, &geo.metric_inv).values();
    for k in 0..n {
        for m in 0..n {
            let mut acc = S::zero();
            for j in 0..n {
                acc += raised.get(&[j, k, j, m]);
            }
            consider(acc, k, m);
        }
    }
    for j in 0..n {
        for m in 0..n {
            let mut acc = S::zero();
            for k in 0..n {
                acc += raised.get(&[j, k, k, m]);
            }
            consider(acc, j, m);
        }
    }
    Ok(PointResidual {
        residual: to_f(raw / scale),
        scale: to_f(scale),
        component,
    })
}

/// Direct divergence of a family tensor against its closed form
/// A ∇_m R_{jkl}{}^m + B (g_kl ∇_j − g_jl ∇_k) R.
pub fn divergence_formula_residual<S: Scalar>(
    geo: &GeometryAtPoint<S>,
    kind: CurvatureKind,
) -> Result<PointResidual, GeometryError> {
    let family = curvature_family(geo, kind)?;
    let lhs = family.covariant_derivative().contract(0, 4).values();

    let (a, b): (S, S) = divergence_coefficients(kind, geo.n);
    let divr = geo.div_riemann().values();
    let grad_r = geo.grad_scalar().values();
    let g = geo.metric.values();
    let n = geo.n;
    let mut rhs = TensorValue::zeros(n, vec![Slot::Down; 3], geo.point.clone());
    for_each_index(n, 3, |idx| {
        let (j, k, l) = (idx[0], idx[1], idx[2]);
        let v = a * divr.get(idx)
            + b * (g.get(&[k, l]) * grad_r.get(&[j]) - g.get(&[j, l]) * grad_r.get(&[k]));
        rhs.set(idx, v);
    });
    Ok(scaled_diff(&lhs, &rhs))
}

/// Trace of the quasi-conformal divergence:
/// 2 g^{jl} ∇_m W_{jkl}{}^m = (1 − 2/n)[a + b(n−2)] ∇_k R.
pub fn qch_scalar_residual<S: Scalar>(
    geo: &GeometryAtPoint<S>,
    a: f64,
    b: f64,
) -> Result<PointResidual, GeometryError> {
    let w = curvature_family(geo, CurvatureKind::QuasiConformal { a, b })?;
    let divw = w.covariant_derivative().contract(0, 4).values();
    let ginv = geo.metric_inv.values();
    let grad_r = geo.grad_scalar().values();
    let n = geo.n;
    let nf = fu::<S>(n);
    let prefactor =
        (S::one() - fl::<S>(2.0) / nf) * (fl::<S>(a) + fl::<S>(b) * (nf - fl::<S>(2.0)));
    let mut lhs = TensorValue::zeros(n, vec![Slot::Down], geo.point.clone());
    let mut rhs = TensorValue::zeros(n, vec![Slot::Down], geo.point.clone());
    for k in 0..n {
        let mut acc = S::zero();
        for j in 0..n {
            for l in 0..n {
                acc += ginv.get(&[j, l]) * divw.get(&[j, k, l]);
            }
        }
        lhs.set(&[k], fl::<S>(2.0) * acc);
        rhs.set(&[k], prefactor * grad_r.get(&[k]));
    }
    Ok(scaled_diff(&lhs, &rhs))
}

/// The quasi-conformal tensor as the announced combination of the conformal
/// and concircular tensors: W = −(n−2)·b·C + [a + (n−2)·b]·C̃.
pub fn w_combination_residual<S: Scalar>(
    geo: &GeometryAtPoint<S>,
    a: f64,
    b: f64,
) -> Result<PointResidual, GeometryError> {
    let w = curvature_family(geo, CurvatureKind::QuasiConformal { a, b })?.values();
    let c = curvature_family(geo, CurvatureKind::Conformal)?.values();
    let ct = curvature_family(geo, CurvatureKind::Concircular)?.values();
    let nf = geo.n as f64;
    let combo = c
        .scale(fl::<S>(-(nf - 2.0) * b))
        .add(&ct.scale(fl::<S>(a + (nf - 2.0) * b)));
    Ok(scaled_diff(&w, &combo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse;
    use crate::geometry::{geometry_at, MetricSpec, PhiSpec};

    fn wiggly(n: usize, phi: PhiSpec) -> MetricSpec {
        let upper = (0..n)
            .map(|i| {
                (i..n)
                    .map(|j| {
                        if i == j {
                            format!("1 + 0.12*sin(x{} + 2*x{})", i + 1, (i + 1) % n + 1)
                        } else {
                            format!("0.06*cos(x{} - 2*x{})", i + 1, j + 1)
                        }
                    })
                    .map(|s| parse(&s).unwrap())
                    .collect()
            })
            .collect();
        MetricSpec {
            n,
            coords: (1..=n).map(|i| format!("x{i}")).collect(),
            upper,
            phi,
            domain: vec![(-1.0, 1.0); n],
            constants: Vec::new(),
        }
    }

    fn geos(n: usize, phi: PhiSpec) -> Vec<crate::geometry::GeometryAtPoint<f64>> {
        let spec = wiggly(n, phi);
        [
            vec![0.21, -0.37, 0.52, 0.11, -0.6, 0.3],
            vec![-0.45, 0.18, 0.77, -0.2, 0.05, -0.1],
        ]
        .iter()
        .map(|p| geometry_at(&spec, &p[..n]).unwrap())
        .collect()
    }

    #[test]
    fn identity_suite_on_generic_metric() {
        let phi = PhiSpec::Expr(parse("0.3*exp(x1) + x2^2").unwrap());
        let geos = geos(4, phi);
        let tol = 1e-9;
        for (name, f) in [
            (
                "metric",
                Box::new(|g: &crate::geometry::GeometryAtPoint<f64>| {
                    Ok(metric_compatibility_residual(g))
                })
                    as Box<
                        dyn Fn(
                            &crate::geometry::GeometryAtPoint<f64>,
                        )
                            -> Result<PointResidual, GeometryError>,
                    >,
            ),
            ("riemann", Box::new(|g| Ok(riemann_symmetry_residual(g)))),
            ("bianchi2", Box::new(|g| Ok(second_bianchi_residual(g)))),
            ("contracted", Box::new(|g| Ok(contracted_bianchi_residual(g)))),
            (
                "contracted_z",
                Box::new(|g| Ok(contracted_bianchi_z_residual(g))),
            ),
            ("lovelock", Box::new(|g| Ok(lovelock_residual(g)))),
            ("commutator", Box::new(|g| Ok(ricci_commutator_residual(g)))),
            ("traceless", Box::new(conformal_traceless_residual)),
        ] {
            let report = aggregate(name, &geos, tol, f).unwrap();
            assert!(
                report.pass,
                "{name}: max residual {:e} at {:?}",
                report.max_residual, report.worst
            );
        }
    }

    #[test]
    fn divergence_table_on_generic_metric() {
        let geos = geos(4, PhiSpec::Zero);
        for kind in [
            CurvatureKind::Conformal,
            CurvatureKind::Projective,
            CurvatureKind::Concircular,
            CurvatureKind::Conharmonic,
            CurvatureKind::QuasiConformal { a: 1.0, b: 1.0 },
            CurvatureKind::QuasiConformal { a: 0.6, b: -2.3 },
        ] {
            let report = aggregate(kind.name(), &geos, 1e-9, |g| {
                divergence_formula_residual(g, kind)
            })
            .unwrap();
            assert!(
                report.pass,
                "{}: max residual {:e}",
                kind.name(),
                report.max_residual
            );
        }
    }

    #[test]
    fn qch_trace_and_combination() {
        let geos = geos(4, PhiSpec::Zero);
        for (a, b) in [(1.0, 1.0), (0.7, -1.4), (2.0, -1.0)] {
            let r = aggregate("qch", &geos, 1e-9, |g| qch_scalar_residual(g, a, b)).unwrap();
            assert!(r.pass, "qch ({a},{b}): {:e}", r.max_residual);
            let r = aggregate("combo", &geos, 1e-11, |g| w_combination_residual(g, a, b)).unwrap();
            assert!(r.pass, "combo ({a},{b}): {:e}", r.max_residual);
        }
    }

    #[test]
    fn qch_prefactor_vanishes_when_a_cancels_b() {
        // a = −(n−2) b makes the trace side identically zero even though
        // ∇R is generic; the direct side must agree.
        let geos = geos(4, PhiSpec::Zero);
        let (a, b) = (-2.0 * 1.3, 1.3);
        for g in &geos {
            let w = curvature_family(g, CurvatureKind::QuasiConformal { a, b }).unwrap();
            let divw = w.covariant_derivative().contract(0, 4).values();
            let ginv = g.metric_inv.values();
            let n = g.n;
            for k in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    for l in 0..n {
                        acc += ginv.get(&[j, l]) * divw.get(&[j, k, l]);
                    }
                }
                assert!(acc.abs() < 1e-10, "trace at k={k}: {acc:e}");
            }
        }
    }

    #[test]
    fn aggregate_tracks_worst_point() {
        let geos = geos(4, PhiSpec::Zero);
        let report = aggregate("riemann", &geos, 1e-8, |g| {
            Ok(riemann_symmetry_residual(g))
        })
        .unwrap();
        assert_eq!(report.points, 2);
        let w = report.worst.as_ref().unwrap();
        assert_eq!(w.point.len(), 4);
        assert!(w.residual <= report.max_residual);
        assert!(report.mean_residual <= report.max_residual);
    }
}
