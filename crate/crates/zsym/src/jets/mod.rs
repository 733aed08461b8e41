//! Truncated multivariate derivative jets.
//!
//! A [`Jet`] stores every partial derivative ∂^α f(p) for multi-indices
//! |α| ≤ K over n variables — *derivative values*, not Taylor coefficients.
//! Arithmetic is closed under truncation: products use the Leibniz rule with
//! multinomial binomial weights, elementary functions compose the inner jet
//! with the univariate Taylor series of the outer function. There is no
//! step-size anywhere; results are exact up to floating-point rounding.
//!
//! Supported range: n ≤ 6 variables, K ≤ 4 (a dense table has at most
//! C(6+4,4) = 210 entries). Orders shrink under differentiation: ∂_i maps an
//! order-K jet to order K−1, and binary operations meet at the smaller order.

mod eval;

use std::collections::HashMap;
use std::sync::Arc;

use num_rational::Ratio;
use num_traits::Float;
use thiserror::Error;

use crate::scalar::{fl, fu, Scalar};

pub use eval::{jet_eval, JetEnv};

pub const MAX_VARS: usize = 6;
pub const MAX_ORDER: usize = 4;

/// A jet arithmetic failure. Carries no source location; callers attach the
/// offending subexpression and base point.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct JetError(pub String);

fn jerr<T>(reason: impl Into<String>) -> Result<T, JetError> {
    Err(JetError(reason.into()))
}

/// Shared tables for one (n, max order) pair: the graded-lexicographic
/// multi-index enumeration, the Leibniz pairing table, and the index shifts
/// used by differentiation.
#[derive(Debug)]
pub struct JetSpace<S> {
    n: usize,
    max_order: usize,
    indices: Vec<Box<[u8]>>,
    /// Table length for each truncation order: entries with |α| ≤ k form a
    /// prefix of the graded enumeration.
    len_at: Vec<usize>,
    /// `mult[p]` lists (pos β, pos α−β, Π binom(α_i, β_i)) over all β ≤ α_p.
    mult: Vec<Vec<(u32, u32, S)>>,
    /// `shift[i][p]` = position of α_p + e_i, defined for |α_p| < max order.
    shift: Vec<Vec<u32>>,
    pos: HashMap<Box<[u8]>, usize>,
}

impl<S: Scalar> JetSpace<S> {
    pub fn new(n: usize, max_order: usize) -> Arc<JetSpace<S>> {
        assert!(n >= 1 && n <= MAX_VARS, "jet space supports 1..=6 variables");
        assert!(max_order <= MAX_ORDER, "jet space supports order <= 4");

        let mut indices: Vec<Box<[u8]>> = Vec::new();
        let mut len_at = vec![0usize; max_order + 1];
        for degree in 0..=max_order {
            let mut alpha = vec![0u8; n];
            push_degree(&mut indices, &mut alpha, 0, degree as u8);
            len_at[degree] = indices.len();
        }
        let pos: HashMap<Box<[u8]>, usize> = indices
            .iter()
            .enumerate()
            .map(|(p, a)| (a.clone(), p))
            .collect();

        // Pascal triangle up to the max per-variable order.
        let mut binom = [[0u32; MAX_ORDER + 1]; MAX_ORDER + 1];
        for (i, row) in binom.iter_mut().enumerate() {
            row[0] = 1;
            for j in 1..=i {
                row[j] = if j == i { 1 } else { 0 };
            }
        }
        for i in 2..=MAX_ORDER {
            for j in 1..i {
                binom[i][j] = binom[i - 1][j - 1] + binom[i - 1][j];
            }
        }

        let mut mult = Vec::with_capacity(indices.len());
        for alpha in &indices {
            let mut row = Vec::new();
            let mut beta = vec![0u8; n];
            loop {
                let mut coeff = 1u32;
                let mut gamma = vec![0u8; n];
                for i in 0..n {
                    coeff *= binom[alpha[i] as usize][beta[i] as usize];
                    gamma[i] = alpha[i] - beta[i];
                }
                row.push((
                    pos[beta.as_slice()] as u32,
                    pos[gamma.as_slice()] as u32,
                    fu::<S>(coeff as usize),
                ));
                // odometer over 0..=alpha componentwise
                let mut i = 0;
                loop {
                    if i == n {
                        break;
                    }
                    if beta[i] < alpha[i] {
                        beta[i] += 1;
                        break;
                    }
                    beta[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
            mult.push(row);
        }

        let interior = if max_order == 0 { 0 } else { len_at[max_order - 1] };
        let mut shift = vec![vec![0u32; interior]; n];
        for (i, shift_i) in shift.iter_mut().enumerate() {
            for (p, slot) in shift_i.iter_mut().enumerate() {
                let mut up = indices[p].to_vec();
                up[i] += 1;
                *slot = pos[up.as_slice()] as u32;
            }
        }

        Arc::new(JetSpace {
            n,
            max_order,
            indices,
            len_at,
            mult,
            shift,
            pos,
        })
    }

    pub fn vars(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Multi-indices with |α| ≤ `order`, in table order.
    pub fn indices_at(&self, order: usize) -> &[Box<[u8]>] {
        &self.indices[..self.len_at[order]]
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.pos.get(alpha).copied()
    }

    /// Leibniz pairing row for table position `p` (multi-index α): entries
    /// (pos β, pos α−β, Π binom(α_i, β_i)) over all β ≤ α, with β = 0 first.
    /// `(a·b)[p] = Σ w · a[i] · b[j]` over the row — also the backbone of
    /// order-by-order solves where one factor is the unknown.
    pub fn leibniz_row(&self, p: usize) -> &[(u32, u32, S)] {
        &self.mult[p]
    }
}

fn push_degree(out: &mut Vec<Box<[u8]>>, alpha: &mut Vec<u8>, from: usize, left: u8) {
    if from + 1 == alpha.len() {
        alpha[from] = left;
        out.push(alpha.clone().into_boxed_slice());
        return;
    }
    for head in 0..=left {
        alpha[from] = head;
        push_degree(out, alpha, from + 1, left - head);
    }
    alpha[from] = 0;
}

#[derive(Debug, Clone)]
pub struct Jet<S> {
    space: Arc<JetSpace<S>>,
    order: usize,
    c: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn constant(space: &Arc<JetSpace<S>>, value: S, order: usize) -> Jet<S> {
        assert!(order <= space.max_order);
        let mut c = vec![S::zero(); space.len_at[order]];
        c[0] = value;
        Jet {
            space: space.clone(),
            order,
            c,
        }
    }

    /// Seed for the i-th coordinate: value, unit first derivative in slot i,
    /// everything higher zero.
    pub fn coordinate(space: &Arc<JetSpace<S>>, i: usize, value: S, order: usize) -> Jet<S> {
        let mut jet = Jet::constant(space, value, order);
        if order >= 1 {
            let mut e_i = vec![0u8; space.n];
            e_i[i] = 1;
            jet.c[space.pos[e_i.as_slice()]] = S::one();
        }
        jet
    }

    /// Assemble a jet from raw table coefficients (derivative values in the
    /// space's graded order). `c` must span exactly the table for `order`.
    pub fn from_coeffs(space: &Arc<JetSpace<S>>, order: usize, c: Vec<S>) -> Jet<S> {
        assert!(order <= space.max_order);
        assert_eq!(c.len(), space.len_at[order]);
        Jet {
            space: space.clone(),
            order,
            c,
        }
    }

    pub fn space(&self) -> &Arc<JetSpace<S>> {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> S {
        self.c[0]
    }

    /// Raw coefficient at table position `p` (see [`JetSpace::indices_at`]).
    pub fn coeff(&self, p: usize) -> S {
        self.c[p]
    }

    /// ∂^α at the base point. Panics if |α| exceeds the jet order.
    pub fn derivative(&self, alpha: &[u8]) -> S {
        let p = self.space.index_of(alpha).expect("multi-index in range");
        self.c[p]
    }

    pub fn truncated(&self, order: usize) -> Jet<S> {
        assert!(order <= self.order);
        Jet {
            space: self.space.clone(),
            order,
            c: self.c[..self.space.len_at[order]].to_vec(),
        }
    }

    /// ∂_i as a jet of one order less.
    pub fn partial(&self, i: usize) -> Jet<S> {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let len = self.space.len_at[self.order - 1];
        let shift = &self.space.shift[i];
        let c = (0..len).map(|p| self.c[shift[p] as usize]).collect();
        Jet {
            space: self.space.clone(),
            order: self.order - 1,
            c,
        }
    }

    fn zip(&self, rhs: &Jet<S>, f: impl Fn(S, S) -> S) -> Jet<S> {
        debug_assert!(Arc::ptr_eq(&self.space, &rhs.space));
        let order = self.order.min(rhs.order);
        let len = self.space.len_at[order];
        let c = (0..len).map(|p| f(self.c[p], rhs.c[p])).collect();
        Jet {
            space: self.space.clone(),
            order,
            c,
        }
    }

    pub fn add(&self, rhs: &Jet<S>) -> Jet<S> {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Jet<S>) -> Jet<S> {
        self.zip(rhs, |a, b| a - b)
    }

    pub fn neg(&self) -> Jet<S> {
        self.scale(-S::one())
    }

    pub fn scale(&self, k: S) -> Jet<S> {
        Jet {
            space: self.space.clone(),
            order: self.order,
            c: self.c.iter().map(|&v| v * k).collect(),
        }
    }

    pub fn add_scaled(&self, k: S, rhs: &Jet<S>) -> Jet<S> {
        self.zip(rhs, |a, b| a + k * b)
    }

    /// Leibniz product: ∂^α(fg) = Σ_{β≤α} (Π binom(α_i,β_i)) ∂^β f ∂^{α−β} g.
    pub fn mul(&self, rhs: &Jet<S>) -> Jet<S> {
        debug_assert!(Arc::ptr_eq(&self.space, &rhs.space));
        let order = self.order.min(rhs.order);
        let len = self.space.len_at[order];
        let mut c = vec![S::zero(); len];
        for (p, out) in c.iter_mut().enumerate() {
            let mut acc = S::zero();
            for &(bf, bg, coeff) in &self.space.mult[p] {
                acc += coeff * self.c[bf as usize] * rhs.c[bg as usize];
            }
            *out = acc;
        }
        Jet {
            space: self.space.clone(),
            order,
            c,
        }
    }

    /// Composition with a univariate Taylor expansion around this jet's
    /// value: Σ_k series[k]·(f − f(p))^k, evaluated by Horner. Exact under
    /// truncation because f − f(p) has no constant term.
    pub fn compose(&self, series: &[S]) -> Jet<S> {
        debug_assert_eq!(series.len(), self.order + 1);
        let mut du = self.clone();
        du.c[0] = S::zero();
        let mut acc = Jet::constant(&self.space, series[self.order], self.order);
        for k in (0..self.order).rev() {
            acc = acc.mul(&du);
            acc.c[0] += series[k];
        }
        acc
    }

    pub fn exp(&self) -> Jet<S> {
        let e = Float::exp(self.value());
        let mut series = vec![e; self.order + 1];
        let mut fact = S::one();
        for (k, s) in series.iter_mut().enumerate().skip(1) {
            fact *= fu(k);
            *s = e / fact;
        }
        self.compose(&series)
    }

    pub fn ln(&self) -> Result<Jet<S>, JetError> {
        let u0 = self.value();
        if u0 <= S::zero() {
            return jerr("log of non-positive value");
        }
        let mut series = vec![S::zero(); self.order + 1];
        series[0] = Float::ln(u0);
        // d^k/du^k ln u = (-1)^{k-1} (k-1)! / u^k  ⇒  coefficient (-1)^{k-1}/(k u^k)
        let mut upow = S::one();
        for (k, s) in series.iter_mut().enumerate().skip(1) {
            upow *= u0;
            let sign = if k % 2 == 1 { S::one() } else { -S::one() };
            *s = sign / (fu::<S>(k) * upow);
        }
        Ok(self.compose(&series))
    }

    pub fn sin(&self) -> Jet<S> {
        self.circular(true)
    }

    pub fn cos(&self) -> Jet<S> {
        self.circular(false)
    }

    fn circular(&self, sin_first: bool) -> Jet<S> {
        let (s0, c0) = (Float::sin(self.value()), Float::cos(self.value()));
        let cycle = if sin_first {
            [s0, c0, -s0, -c0]
        } else {
            [c0, -s0, -c0, s0]
        };
        let mut series = vec![S::zero(); self.order + 1];
        let mut fact = S::one();
        for (k, s) in series.iter_mut().enumerate() {
            if k > 0 {
                fact *= fu(k);
            }
            *s = cycle[k % 4] / fact;
        }
        self.compose(&series)
    }

    pub fn sinh(&self) -> Jet<S> {
        self.hyperbolic(true)
    }

    pub fn cosh(&self) -> Jet<S> {
        self.hyperbolic(false)
    }

    fn hyperbolic(&self, sinh_first: bool) -> Jet<S> {
        let (s0, c0) = (Float::sinh(self.value()), Float::cosh(self.value()));
        let mut series = vec![S::zero(); self.order + 1];
        let mut fact = S::one();
        for (k, s) in series.iter_mut().enumerate() {
            if k > 0 {
                fact *= fu(k);
            }
            let even = k % 2 == 0;
            *s = if even == sinh_first { s0 } else { c0 } / fact;
        }
        self.compose(&series)
    }

    pub fn tan(&self) -> Result<Jet<S>, JetError> {
        let c = self.cos();
        if Float::abs(c.value()) <= fl(crate::exprlang::DIV_EPS) {
            return jerr("tan at a pole");
        }
        Ok(self.sin().mul(&c.recip()?))
    }

    pub fn tanh(&self) -> Result<Jet<S>, JetError> {
        // cosh ≥ 1, so the division is always defined
        Ok(self.sinh().mul(&self.cosh().recip()?))
    }

    pub fn recip(&self) -> Result<Jet<S>, JetError> {
        let u0 = self.value();
        if Float::abs(u0) <= fl(crate::exprlang::DIV_EPS) {
            return jerr("division by zero");
        }
        // d^k/du^k u^{-1} / k! = (-1)^k / u^{k+1}
        let mut series = vec![S::zero(); self.order + 1];
        let mut upow = u0;
        for (k, s) in series.iter_mut().enumerate() {
            let sign = if k % 2 == 0 { S::one() } else { -S::one() };
            *s = sign / upow;
            upow *= u0;
        }
        Ok(self.compose(&series))
    }

    pub fn div(&self, rhs: &Jet<S>) -> Result<Jet<S>, JetError> {
        Ok(self.mul(&rhs.recip()?))
    }

    pub fn sqrt(&self) -> Result<Jet<S>, JetError> {
        self.pow_ratio(Ratio::new(1, 2))
    }

    /// Integer power by binary exponentiation. Exact for any base, including
    /// zero; negative exponents go through the reciprocal.
    pub fn powi(&self, k: i64) -> Result<Jet<S>, JetError> {
        if k < 0 {
            return self.recip()?.powi(-k);
        }
        let mut acc = Jet::constant(&self.space, S::one(), self.order);
        let mut base = self.clone();
        let mut k = k as u64;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        Ok(acc)
    }

    /// Rational power. Integer exponents dispatch to [`Jet::powi`]; genuine
    /// fractions require a strictly positive base.
    pub fn pow_ratio(&self, r: Ratio<i64>) -> Result<Jet<S>, JetError> {
        if r.is_integer() {
            return self.powi(*r.numer());
        }
        let u0 = self.value();
        if u0 <= S::zero() {
            return jerr("non-positive base with fractional exponent");
        }
        let rf = fl::<S>(*r.numer() as f64) / fl(*r.denom() as f64);
        // series[k] = binom(r, k) u0^{r-k}
        let mut series = vec![S::zero(); self.order + 1];
        let mut binom = S::one();
        for (k, s) in series.iter_mut().enumerate() {
            if k > 0 {
                binom *= (rf - fu(k - 1)) / fu(k);
            }
            *s = binom * Float::powf(u0, rf - fu(k));
        }
        Ok(self.compose(&series))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type J = Jet<f64>;

    fn space(n: usize, k: usize) -> Arc<JetSpace<f64>> {
        JetSpace::new(n, k)
    }

    #[test]
    fn table_sizes_are_binomial() {
        let sp = space(6, 4);
        assert_eq!(sp.indices_at(4).len(), 210); // C(10,4)
        assert_eq!(sp.indices_at(0).len(), 1);
        let sp = space(2, 2);
        assert_eq!(sp.indices_at(2).len(), 6);
    }

    #[test]
    fn enumeration_is_graded() {
        let sp = space(3, 3);
        let mut last_degree = 0;
        for alpha in sp.indices_at(3) {
            let d: u8 = alpha.iter().sum();
            assert!(d >= last_degree, "degrees must not decrease");
            last_degree = d;
        }
    }

    #[test]
    fn coordinate_seed_shape() {
        let sp = space(2, 2);
        let x = J::coordinate(&sp, 0, 3.0, 2);
        assert_eq!(x.value(), 3.0);
        assert_eq!(x.derivative(&[1, 0]), 1.0);
        assert_eq!(x.derivative(&[0, 1]), 0.0);
        assert_eq!(x.derivative(&[2, 0]), 0.0);
        assert_eq!(x.derivative(&[1, 1]), 0.0);
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        // f = x^2 y at (2, 5): fx = 2xy = 20, fy = x^2 = 4, fxx = 2y = 10,
        // fxy = 2x = 4, fyy = 0, fxxy = 2
        let sp = space(2, 3);
        let x = J::coordinate(&sp, 0, 2.0, 3);
        let y = J::coordinate(&sp, 1, 5.0, 3);
        let f = x.mul(&x).mul(&y);
        assert_eq!(f.value(), 20.0);
        assert_eq!(f.derivative(&[1, 0]), 20.0);
        assert_eq!(f.derivative(&[0, 1]), 4.0);
        assert_eq!(f.derivative(&[2, 0]), 10.0);
        assert_eq!(f.derivative(&[1, 1]), 4.0);
        assert_eq!(f.derivative(&[0, 2]), 0.0);
        assert_eq!(f.derivative(&[2, 1]), 2.0);
        assert_eq!(f.derivative(&[3, 0]), 0.0);
    }

    #[test]
    fn exp_xy_matches_hand_computation() {
        // g = exp(x y) at (1,1): value e, gx = gy = e, gxx = gyy = e,
        // gxy = 2e (from (1+xy)e^{xy} at x=y=1)
        let sp = space(2, 2);
        let x = J::coordinate(&sp, 0, 1.0, 2);
        let y = J::coordinate(&sp, 1, 1.0, 2);
        let g = x.mul(&y).exp();
        let e = std::f64::consts::E;
        let tol = 1e-14;
        assert!((g.value() - e).abs() < tol);
        assert!((g.derivative(&[1, 0]) - e).abs() < tol);
        assert!((g.derivative(&[0, 1]) - e).abs() < tol);
        assert!((g.derivative(&[2, 0]) - e).abs() < tol);
        assert!((g.derivative(&[0, 2]) - e).abs() < tol);
        assert!((g.derivative(&[1, 1]) - 2.0 * e).abs() < tol);
    }

    #[test]
    fn quotient_and_sqrt_derivatives() {
        // h = sin(x)/x at x = 1 (1 variable, order 4), against the closed
        // forms h' = cos/x - sin/x^2, h'' = -sin/x - 2cos/x^2 + 2sin/x^3.
        let sp = space(1, 4);
        let x = J::coordinate(&sp, 0, 1.0, 4);
        let h = x.sin().div(&x).unwrap();
        let (s, c) = (1.0f64.sin(), 1.0f64.cos());
        assert!((h.value() - s).abs() < 1e-15);
        assert!((h.derivative(&[1]) - (c - s)).abs() < 1e-14);
        assert!((h.derivative(&[2]) - (-s - 2.0 * c + 2.0 * s)).abs() < 1e-14);

        let r = x.mul(&x).add(&Jet::constant(&sp, 3.0, 4)).sqrt().unwrap();
        // r = sqrt(x^2+3) at 1: r = 2, r' = x/r = 1/2, r'' = 3/r^3 = 3/8
        assert!((r.value() - 2.0).abs() < 1e-15);
        assert!((r.derivative(&[1]) - 0.5).abs() < 1e-15);
        assert!((r.derivative(&[2]) - 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn powi_handles_zero_base_and_negatives() {
        let sp = space(1, 3);
        let x = J::coordinate(&sp, 0, 0.0, 3);
        let f = x.powi(3).unwrap(); // x^3 at 0: all zero except f''' = 6
        assert_eq!(f.value(), 0.0);
        assert_eq!(f.derivative(&[1]), 0.0);
        assert_eq!(f.derivative(&[2]), 0.0);
        assert_eq!(f.derivative(&[3]), 6.0);

        let x = J::coordinate(&sp, 0, -2.0, 3);
        let f = x.powi(-2).unwrap(); // u^{-2}: value 1/4, f' = -2u^{-3} = 1/4
        assert!((f.value() - 0.25).abs() < 1e-15);
        assert!((f.derivative(&[1]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_surface() {
        let sp = space(1, 2);
        let x = J::coordinate(&sp, 0, 0.0, 2);
        assert!(x.recip().is_err());
        assert!(x.ln().is_err());
        let neg = J::coordinate(&sp, 0, -1.0, 2);
        assert!(neg.sqrt().is_err());
    }

    #[test]
    fn tan_derivative_identity() {
        // tan' = 1 + tan^2; near the pole the quotient is finite in exact
        // arithmetic because cos(pi/2) never rounds to zero in binary.
        let sp = space(1, 2);
        let x = J::coordinate(&sp, 0, 0.3, 2);
        let t = x.tan().unwrap();
        let expect = 1.0 + 0.3f64.tan().powi(2);
        assert!((t.derivative(&[1]) - expect).abs() < 1e-14);
    }

    #[test]
    fn partial_commutes_with_product_rule() {
        // d/dx (f*g) == fx*g + f*gx as jets (order drops by one)
        let sp = space(2, 3);
        let x = J::coordinate(&sp, 0, 0.7, 3);
        let y = J::coordinate(&sp, 1, -0.3, 3);
        let f = x.sin().mul(&y.exp());
        let g = x.mul(&y).add(&Jet::constant(&sp, 2.0, 3)).recip().unwrap();
        let lhs = f.mul(&g).partial(0);
        let rhs = f.partial(0).mul(&g).add(&f.mul(&g.partial(0)));
        for (a, b) in lhs.c.iter().zip(rhs.c.iter()) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }
}
