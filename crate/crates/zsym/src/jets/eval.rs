//! Jet evaluation of expressions.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::exprlang::{BinOp, DomainError, Expr, Func};
use crate::scalar::{fl, Scalar};

use super::{Jet, JetError, JetSpace};

/// Evaluation context: a jet space, the base point, and name bindings.
/// Coordinates are seeded once at construction; named constants evaluate to
/// constant jets.
#[derive(Debug)]
pub struct JetEnv<S> {
    space: Arc<JetSpace<S>>,
    order: usize,
    names: Vec<String>,
    seeds: Vec<Jet<S>>,
    point: Vec<S>,
}

impl<S: Scalar> JetEnv<S> {
    pub fn new(
        space: &Arc<JetSpace<S>>,
        coords: &[String],
        point: &[S],
        constants: &[(String, S)],
        order: usize,
    ) -> JetEnv<S> {
        assert_eq!(coords.len(), space.vars());
        assert_eq!(point.len(), space.vars());
        assert!(order <= space.max_order());
        let mut names: Vec<String> = coords.to_vec();
        let mut seeds: Vec<Jet<S>> = point
            .iter()
            .enumerate()
            .map(|(i, &x)| Jet::coordinate(space, i, x, order))
            .collect();
        for (name, value) in constants {
            names.push(name.clone());
            seeds.push(Jet::constant(space, *value, order));
        }
        JetEnv {
            space: space.clone(),
            order,
            names,
            seeds,
            point: point.to_vec(),
        }
    }

    pub fn space(&self) -> &Arc<JetSpace<S>> {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn point(&self) -> &[S] {
        &self.point
    }

    fn lookup(&self, name: &str) -> Option<&Jet<S>> {
        self.names
            .iter()
            .position(|candidate| candidate == name)
            .map(|i| &self.seeds[i])
    }

    fn point_string(&self) -> String {
        let mut s = String::from("(");
        for (i, x) in self.point.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "{x}");
        }
        s.push(')');
        s
    }
}

/// Propagate derivative values of `expr` through order `env.order()`.
/// Domain violations name the offending subexpression and the base point.
pub fn jet_eval<S: Scalar>(expr: &Expr, env: &JetEnv<S>) -> Result<Jet<S>, DomainError> {
    let fail = |node: &Expr, reason: String| DomainError {
        expr: format!("{node} at {}", env.point_string()),
        reason,
    };
    let lift = |node: &Expr, r: Result<Jet<S>, JetError>| r.map_err(|e| fail(node, e.0));
    match expr {
        Expr::Number(x) => Ok(Jet::constant(&env.space, fl(*x), env.order)),
        Expr::Pi => Ok(Jet::constant(
            &env.space,
            fl(std::f64::consts::PI),
            env.order,
        )),
        Expr::Var(name) => env
            .lookup(name)
            .cloned()
            .ok_or_else(|| fail(expr, format!("unbound variable `{name}`"))),
        Expr::Neg(a) => Ok(jet_eval(a, env)?.neg()),
        Expr::Bin(op, a, b) => {
            let (x, y) = (jet_eval(a, env)?, jet_eval(b, env)?);
            match op {
                BinOp::Add => Ok(x.add(&y)),
                BinOp::Sub => Ok(x.sub(&y)),
                BinOp::Mul => Ok(x.mul(&y)),
                BinOp::Div => lift(expr, x.div(&y)),
            }
        }
        Expr::Pow(a, r) => {
            let x = jet_eval(a, env)?;
            lift(expr, x.pow_ratio(*r))
        }
        Expr::Call(f, a) => {
            let x = jet_eval(a, env)?;
            match f {
                Func::Exp => Ok(x.exp()),
                Func::Log => lift(expr, x.ln()),
                Func::Sin => Ok(x.sin()),
                Func::Cos => Ok(x.cos()),
                Func::Tan => lift(expr, x.tan()),
                Func::Sinh => Ok(x.sinh()),
                Func::Cosh => Ok(x.cosh()),
                Func::Tanh => lift(expr, x.tanh()),
                Func::Sqrt => lift(expr, x.sqrt()),
            }
        }
    }
}
