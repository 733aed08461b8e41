//! Dense tensors at a point.
//!
//! [`TensorValue`] holds plain components; [`TensorJet`] holds a jet per
//! component plus the Christoffel jets needed to turn partial derivatives
//! into covariant ones. Components are stored row-major over the index
//! tuple; slot variance is tracked so contractions can insist on an
//! up/down pairing. Covariant differentiation prepends the derivative slot
//! on the left and lowers the jet order by one.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::jets::{Jet, JetSpace};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Up,
    Down,
}

/// Row-major linear index.
pub fn lin(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Visit every index tuple of the given rank, last position fastest
/// (matching [`lin`]'s layout).
pub fn for_each_index(n: usize, rank: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; rank];
    loop {
        f(&idx);
        let mut i = rank;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < n {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Christoffel symbols Γ^i_{jk} as jets, indexed `[i][j][k]`.
#[derive(Debug)]
pub struct Christoffel<S> {
    n: usize,
    jets: Vec<Jet<S>>,
}

impl<S: Scalar> Christoffel<S> {
    pub fn new(n: usize, jets: Vec<Jet<S>>) -> Christoffel<S> {
        assert_eq!(jets.len(), n * n * n);
        Christoffel { n, jets }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> &Jet<S> {
        &self.jets[(i * self.n + j) * self.n + k]
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> S {
        self.get(i, j, k).value()
    }
}

#[derive(Debug, Clone)]
pub struct TensorValue<S> {
    sig: Vec<Slot>,
    n: usize,
    comps: Vec<S>,
    point: Vec<S>,
}

impl<S: Scalar> TensorValue<S> {
    pub fn zeros(n: usize, sig: Vec<Slot>, point: Vec<S>) -> TensorValue<S> {
        let comps = vec![S::zero(); n.pow(sig.len() as u32)];
        TensorValue {
            sig,
            n,
            comps,
            point,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.sig.len()
    }

    pub fn signature(&self) -> &[Slot] {
        &self.sig
    }

    pub fn point(&self) -> &[S] {
        &self.point
    }

    pub fn get(&self, idx: &[usize]) -> S {
        self.comps[lin(self.n, idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: S) {
        let p = lin(self.n, idx);
        self.comps[p] = value;
    }

    pub fn components(&self) -> &[S] {
        &self.comps
    }

    pub fn map2(&self, rhs: &TensorValue<S>, f: impl Fn(S, S) -> S) -> TensorValue<S> {
        assert_eq!(self.sig, rhs.sig);
        let comps = self
            .comps
            .iter()
            .zip(rhs.comps.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        TensorValue {
            sig: self.sig.clone(),
            n: self.n,
            comps,
            point: self.point.clone(),
        }
    }

    pub fn add(&self, rhs: &TensorValue<S>) -> TensorValue<S> {
        self.map2(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &TensorValue<S>) -> TensorValue<S> {
        self.map2(rhs, |a, b| a - b)
    }

    pub fn scale(&self, k: S) -> TensorValue<S> {
        let mut out = self.clone();
        for c in &mut out.comps {
            *c *= k;
        }
        out
    }

    /// ∞-norm over components.
    pub fn max_abs(&self) -> S {
        self.comps.iter().fold(S::zero(), |m, &c| {
            num_traits::Float::max(num_traits::Float::abs(c), m)
        })
    }

    /// Largest-magnitude component and where it sits.
    pub fn max_abs_arg(&self) -> (Vec<usize>, S) {
        let mut best = (0usize, S::zero());
        for (p, &c) in self.comps.iter().enumerate() {
            let a = num_traits::Float::abs(c);
            if a > best.1 {
                best = (p, a);
            }
        }
        let mut idx = vec![0usize; self.rank()];
        let mut p = best.0;
        for slot in idx.iter_mut().rev() {
            *slot = p % self.n;
            p /= self.n;
        }
        (idx, best.1)
    }

    /// Rank-2 components as a matrix (row = first index).
    pub fn to_matrix(&self) -> DMatrix<S> {
        assert_eq!(self.rank(), 2);
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(&[i, j]))
    }

    pub fn from_matrix(
        m: &DMatrix<S>,
        sig: [Slot; 2],
        point: Vec<S>,
    ) -> TensorValue<S> {
        let n = m.nrows();
        let mut out = TensorValue::zeros(n, sig.to_vec(), point);
        for i in 0..n {
            for j in 0..n {
                out.set(&[i, j], m[(i, j)]);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TensorJet<S> {
    sig: Vec<Slot>,
    n: usize,
    order: usize,
    comps: Vec<Jet<S>>,
    point: Vec<S>,
    gamma: Option<Arc<Christoffel<S>>>,
}

impl<S: Scalar> TensorJet<S> {
    pub fn new(
        space: &Arc<JetSpace<S>>,
        sig: Vec<Slot>,
        order: usize,
        point: Vec<S>,
        gamma: Option<Arc<Christoffel<S>>>,
    ) -> TensorJet<S> {
        let n = space.vars();
        let comps = vec![Jet::constant(space, S::zero(), order); n.pow(sig.len() as u32)];
        TensorJet {
            sig,
            n,
            order,
            comps,
            point,
            gamma,
        }
    }

    pub fn scalar(jet: Jet<S>, point: Vec<S>, gamma: Option<Arc<Christoffel<S>>>) -> TensorJet<S> {
        TensorJet {
            sig: Vec::new(),
            n: jet.space().vars(),
            order: jet.order(),
            comps: vec![jet],
            point,
            gamma,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.sig.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn signature(&self) -> &[Slot] {
        &self.sig
    }

    pub fn point(&self) -> &[S] {
        &self.point
    }

    pub fn gamma(&self) -> Option<&Arc<Christoffel<S>>> {
        self.gamma.as_ref()
    }

    pub fn get(&self, idx: &[usize]) -> &Jet<S> {
        &self.comps[lin(self.n, idx)]
    }

    pub fn set(&mut self, idx: &[usize], jet: Jet<S>) {
        debug_assert_eq!(jet.order(), self.order);
        let p = lin(self.n, idx);
        self.comps[p] = jet;
    }

    /// Order-0 snapshot.
    pub fn values(&self) -> TensorValue<S> {
        TensorValue {
            sig: self.sig.clone(),
            n: self.n,
            comps: self.comps.iter().map(|j| j.value()).collect(),
            point: self.point.clone(),
        }
    }

    pub fn truncated(&self, order: usize) -> TensorJet<S> {
        let mut out = self.clone();
        out.order = order;
        for c in &mut out.comps {
            *c = c.truncated(order);
        }
        out
    }

    pub fn map2(&self, rhs: &TensorJet<S>, f: impl Fn(&Jet<S>, &Jet<S>) -> Jet<S>) -> TensorJet<S> {
        assert_eq!(self.sig, rhs.sig);
        let comps: Vec<Jet<S>> = self
            .comps
            .iter()
            .zip(rhs.comps.iter())
            .map(|(a, b)| f(a, b))
            .collect();
        TensorJet {
            sig: self.sig.clone(),
            n: self.n,
            order: comps.first().map(|j| j.order()).unwrap_or(0),
            comps,
            point: self.point.clone(),
            gamma: self.gamma.clone(),
        }
    }

    pub fn add(&self, rhs: &TensorJet<S>) -> TensorJet<S> {
        self.map2(rhs, |a, b| a.add(b))
    }

    pub fn sub(&self, rhs: &TensorJet<S>) -> TensorJet<S> {
        self.map2(rhs, |a, b| a.sub(b))
    }

    pub fn scale(&self, k: S) -> TensorJet<S> {
        let mut out = self.clone();
        for c in &mut out.comps {
            *c = c.scale(k);
        }
        out
    }

    /// Multiply every component by a scalar jet (e.g. φ·g). The order meets
    /// the factor's order.
    pub fn scale_by_jet(&self, jet: &Jet<S>) -> TensorJet<S> {
        let mut out = self.clone();
        out.order = self.order.min(jet.order());
        for c in &mut out.comps {
            *c = c.mul(jet);
        }
        out
    }

    /// Attach (or replace) the Christoffel data used by covariant derivatives.
    pub fn with_gamma(mut self, gamma: Arc<Christoffel<S>>) -> TensorJet<S> {
        self.gamma = Some(gamma);
        self
    }

    /// Covariant derivative ∇_c, prepended as a new leftmost covariant slot.
    /// Consumes one jet order.
    pub fn covariant_derivative(&self) -> TensorJet<S> {
        assert!(self.order >= 1, "no jet orders left to differentiate");
        let gamma = self
            .gamma
            .clone()
            .expect("covariant derivative requires Christoffel data");
        let rank = self.rank();
        let mut sig = Vec::with_capacity(rank + 1);
        sig.push(Slot::Down);
        sig.extend_from_slice(&self.sig);

        let mut out_comps: Vec<Jet<S>> = Vec::with_capacity(self.n * self.comps.len());
        let mut scratch = Vec::with_capacity(rank);
        for c in 0..self.n {
            for_each_index(self.n, rank, |idx| {
                let mut jet = self.get(idx).partial(c);
                for (a, &slot) in idx.iter().enumerate() {
                    scratch.clear();
                    scratch.extend_from_slice(idx);
                    for m in 0..self.n {
                        scratch[a] = m;
                        let t = self.get(&scratch);
                        let term = match self.sig[a] {
                            // Γ^{i_a}_{c m} T^{..m..}
                            Slot::Up => gamma.get(slot, c, m).mul(t),
                            // -Γ^{m}_{c i_a} T_{..m..}
                            Slot::Down => gamma.get(m, c, slot).mul(t).neg(),
                        };
                        jet = jet.add(&term);
                    }
                }
                out_comps.push(jet);
            });
        }
        TensorJet {
            sig,
            n: self.n,
            order: self.order - 1,
            comps: out_comps,
            point: self.point.clone(),
            gamma: Some(gamma),
        }
    }

    /// Contract slots `a` and `b` (one Up, one Down).
    pub fn contract(&self, a: usize, b: usize) -> TensorJet<S> {
        assert_ne!(a, b);
        assert_ne!(self.sig[a], self.sig[b], "contraction needs an up/down pair");
        let (lo, hi) = (a.min(b), a.max(b));
        let rank = self.rank();
        let mut sig = self.sig.clone();
        sig.remove(hi);
        sig.remove(lo);

        let mut out = TensorJet::new(
            self.comps[0].space(),
            sig,
            self.order,
            self.point.clone(),
            self.gamma.clone(),
        );
        let mut full = vec![0usize; rank];
        for_each_index(self.n, rank - 2, |idx| {
            let mut k = 0;
            for (pos, slot) in full.iter_mut().enumerate() {
                if pos != lo && pos != hi {
                    *slot = idx[k];
                    k += 1;
                }
            }
            let mut acc = Jet::constant(self.comps[0].space(), S::zero(), self.order);
            for m in 0..self.n {
                full[lo] = m;
                full[hi] = m;
                acc = acc.add(self.get(&full));
            }
            out.set(idx, acc);
        });
        out
    }

    /// Raise a covariant slot with inverse-metric jets g^{im}.
    pub fn raise_slot(&self, slot: usize, metric_inv: &TensorJet<S>) -> TensorJet<S> {
        assert_eq!(self.sig[slot], Slot::Down);
        self.transvect_slot(slot, metric_inv, Slot::Up)
    }

    /// Lower a contravariant slot with metric jets g_{im}.
    pub fn lower_slot(&self, slot: usize, metric: &TensorJet<S>) -> TensorJet<S> {
        assert_eq!(self.sig[slot], Slot::Up);
        self.transvect_slot(slot, metric, Slot::Down)
    }

    fn transvect_slot(
        &self,
        slot: usize,
        metric_like: &TensorJet<S>,
        new_variance: Slot,
    ) -> TensorJet<S> {
        let rank = self.rank();
        let mut sig = self.sig.clone();
        sig[slot] = new_variance;
        let space = self.comps[0].space();
        let order = self.order.min(metric_like.order());
        let mut out = TensorJet::new(space, sig, order, self.point.clone(), self.gamma.clone());
        let mut scratch = vec![0usize; rank];
        for_each_index(self.n, rank, |idx| {
            scratch.copy_from_slice(idx);
            let mut acc = Jet::constant(space, S::zero(), order);
            for m in 0..self.n {
                scratch[slot] = m;
                acc = acc.add(&metric_like.get(&[idx[slot], m]).mul(self.get(&scratch)));
            }
            out.set(idx, acc);
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_iteration_matches_linear_layout() {
        let mut seen = Vec::new();
        for_each_index(3, 2, |idx| seen.push(lin(3, idx)));
        assert_eq!(seen, (0..9).collect::<Vec<_>>());
        let mut count = 0;
        for_each_index(4, 0, |idx| {
            assert!(idx.is_empty());
            count += 1;
        });
        assert_eq!(count, 1);
    }

    #[test]
    fn max_abs_arg_finds_component() {
        let mut t = TensorValue::<f64>::zeros(3, vec![Slot::Down, Slot::Down], vec![0.0; 3]);
        t.set(&[1, 2], -7.0);
        t.set(&[0, 1], 3.0);
        let (idx, mag) = t.max_abs_arg();
        assert_eq!(idx, vec![1, 2]);
        assert_eq!(mag, 7.0);
    }
}
