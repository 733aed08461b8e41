//! Closed-form scalar expressions of the coordinates.
//!
//! This is the input language for metric components, φ, and covector fields:
//! decimal literals, named variables, `pi`, the four arithmetic operators,
//! unary minus, `^` with a *literal* integer or rational exponent, and the
//! elementary functions `exp log sin cos tan sinh cosh tanh sqrt`.
//! Precedence: `^` > unary `-` > `* /` > `+ -`.
//!
//! Expressions are kept as parsed — no simplification, no constant folding —
//! so that printing and reparsing round-trips the AST exactly.

mod parser;
mod printer;

use num_rational::Ratio;
use num_traits::Float;
use thiserror::Error;

use crate::scalar::{fl, Scalar};

pub use parser::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Exp,
        Func::Log,
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Non-negative decimal literal. Negative constants are `Neg(Number)`,
    /// which is what the parser produces; keeping literals canonical makes
    /// print → parse the identity on ASTs.
    Number(f64),
    Pi,
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Power with a constant exponent. `den > 0`, fraction fully reduced.
    Pow(Box<Expr>, Ratio<i64>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        if x < 0.0 {
            Expr::Neg(Box::new(Expr::Number(-x)))
        } else {
            Expr::Number(x)
        }
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_owned())
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Bin(BinOp::Div, Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }

    pub fn powi(a: Expr, k: i64) -> Expr {
        Expr::Pow(Box::new(a), Ratio::new(k, 1))
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    /// Names of all variables referenced, in first-appearance order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Var(name) = e {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Number(_) | Expr::Pi | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.walk(f),
            Expr::Bin(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }

    /// Copy with every variable renamed through `f` (e.g. shifting fiber
    /// coordinates when a metric is embedded into a product).
    pub fn rename_variables(&self, f: &impl Fn(&str) -> String) -> Expr {
        match self {
            Expr::Number(_) | Expr::Pi => self.clone(),
            Expr::Var(name) => Expr::Var(f(name)),
            Expr::Neg(a) => Expr::Neg(Box::new(a.rename_variables(f))),
            Expr::Pow(a, r) => Expr::Pow(Box::new(a.rename_variables(f)), *r),
            Expr::Call(func, a) => Expr::Call(*func, Box::new(a.rename_variables(f))),
            Expr::Bin(op, a, b) => Expr::Bin(
                *op,
                Box::new(a.rename_variables(f)),
                Box::new(b.rename_variables(f)),
            ),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown variable `{name}`")]
pub struct UnknownVariable {
    pub name: String,
}

/// Check that every variable is one of `names` (coordinates plus any bound
/// constants). Reports the first offender.
pub fn validate(expr: &Expr, names: &[&str]) -> Result<(), UnknownVariable> {
    for v in expr.variables() {
        if !names.contains(&v) {
            return Err(UnknownVariable { name: v.to_owned() });
        }
    }
    Ok(())
}

/// Domain violation while evaluating: the offending subexpression is kept in
/// printed form so errors can point at the term, not just the input string.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{reason} in `{expr}`")]
pub struct DomainError {
    pub expr: String,
    pub reason: String,
}

/// Denominators (and non-integer power bases) smaller than this in absolute
/// value are treated as zero.
pub const DIV_EPS: f64 = 1e-300;

/// Plain recursive evaluation at a point. This path is deliberately
/// independent of the jet evaluator; tests difference the two.
pub fn eval<S: Scalar>(
    expr: &Expr,
    lookup: &impl Fn(&str) -> Option<S>,
) -> Result<S, DomainError> {
    let bad = |reason: &str| DomainError {
        expr: expr.to_string(),
        reason: reason.to_owned(),
    };
    match expr {
        Expr::Number(x) => Ok(fl(*x)),
        Expr::Pi => Ok(S::from_f64(std::f64::consts::PI).unwrap()),
        Expr::Var(name) => lookup(name).ok_or_else(|| bad("unbound variable")),
        Expr::Neg(a) => Ok(-eval(a, lookup)?),
        Expr::Bin(op, a, b) => {
            let (x, y) = (eval(a, lookup)?, eval(b, lookup)?);
            match op {
                BinOp::Add => Ok(x + y),
                BinOp::Sub => Ok(x - y),
                BinOp::Mul => Ok(x * y),
                BinOp::Div => {
                    if Float::abs(y) <= fl(DIV_EPS) {
                        Err(bad("division by zero"))
                    } else {
                        Ok(x / y)
                    }
                }
            }
        }
        Expr::Pow(a, r) => {
            let x = eval(a, lookup)?;
            if r.is_integer() {
                let k = *r.numer();
                if k < 0 && Float::abs(x) <= fl(DIV_EPS) {
                    return Err(bad("zero base with negative exponent"));
                }
                Ok(Float::powi(x, k as i32))
            } else if x > S::zero() {
                let e = fl::<S>(*r.numer() as f64) / fl(*r.denom() as f64);
                Ok(Float::powf(x, e))
            } else {
                Err(bad("non-positive base with fractional exponent"))
            }
        }
        Expr::Call(f, a) => {
            let x = eval(a, lookup)?;
            match f {
                Func::Exp => Ok(Float::exp(x)),
                Func::Log => {
                    if x > S::zero() {
                        Ok(Float::ln(x))
                    } else {
                        Err(bad("log of non-positive value"))
                    }
                }
                Func::Sin => Ok(Float::sin(x)),
                Func::Cos => Ok(Float::cos(x)),
                Func::Tan => {
                    let c = Float::cos(x);
                    if Float::abs(c) <= fl(DIV_EPS) {
                        Err(bad("tan at a pole"))
                    } else {
                        Ok(Float::sin(x) / c)
                    }
                }
                Func::Sinh => Ok(Float::sinh(x)),
                Func::Cosh => Ok(Float::cosh(x)),
                Func::Tanh => Ok(Float::tanh(x)),
                Func::Sqrt => {
                    if x < S::zero() {
                        Err(bad("sqrt of negative value"))
                    } else {
                        Ok(Float::sqrt(x))
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env<'a>(pairs: &'a [(&'a str, f64)]) -> impl Fn(&str) -> Option<f64> + 'a {
        move |name| pairs.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    #[test]
    fn parses_with_precedence() {
        let e = parse("1 + x1*x2^2").unwrap();
        assert_eq!(
            e,
            Expr::add(
                Expr::Number(1.0),
                Expr::mul(Expr::var("x1"), Expr::powi(Expr::var("x2"), 2))
            )
        );
        // ^ binds tighter than unary minus
        let e = parse("-x1^2").unwrap();
        assert_eq!(e, Expr::neg(Expr::powi(Expr::var("x1"), 2)));
    }

    #[test]
    fn parses_functions_and_pi() {
        let e = parse("exp(x1*x2) - sin(pi/4)").unwrap();
        assert_eq!(
            e,
            Expr::sub(
                Expr::call(Func::Exp, Expr::mul(Expr::var("x1"), Expr::var("x2"))),
                Expr::call(Func::Sin, Expr::div(Expr::Pi, Expr::Number(4.0)))
            )
        );
    }

    #[test]
    fn rational_and_negative_exponents() {
        assert_eq!(
            parse("x1^(3/2)").unwrap(),
            Expr::Pow(Box::new(Expr::var("x1")), Ratio::new(3, 2))
        );
        assert_eq!(
            parse("x1^-2").unwrap(),
            Expr::Pow(Box::new(Expr::var("x1")), Ratio::new(-2, 1))
        );
        // decimal exponents are exact rationals
        assert_eq!(
            parse("x1^2.5").unwrap(),
            Expr::Pow(Box::new(Expr::var("x1")), Ratio::new(5, 2))
        );
    }

    #[test]
    fn rejects_non_literal_exponent() {
        let err = parse("x1^(x2)").unwrap_err();
        assert!(err.message.contains("exponent"), "{err}");
        assert_eq!(err.offset, 4); // points at the non-literal token
    }

    #[test]
    fn reports_offset_of_syntax_errors() {
        let err = parse("1 + * 2").unwrap_err();
        assert_eq!(err.offset, 4);
        let err = parse("sin(x1").unwrap_err();
        assert!(err.message.contains(')'), "{err}");
    }

    #[test]
    fn rejects_unknown_function() {
        let err = parse("foo(x1)").unwrap_err();
        assert!(err.message.contains("unknown function"), "{err}");
    }

    #[test]
    fn validate_flags_stray_variables() {
        let e = parse("x1 + q*sin(x2)").unwrap();
        assert_eq!(validate(&e, &["x1", "x2"]).unwrap_err().name, "q");
        assert!(validate(&e, &["x1", "x2", "q"]).is_ok());
    }

    #[test]
    fn eval_matches_hand_values() {
        let e = parse("(1 + x1^2)^(-2)").unwrap();
        let v: f64 = eval(&e, &env(&[("x1", 2.0)])).unwrap();
        assert_eq!(v, 0.04);
        let e = parse("tan(x1)/x1").unwrap();
        let v: f64 = eval(&e, &env(&[("x1", 0.3)])).unwrap();
        assert!((v - 0.3f64.tan() / 0.3).abs() < 1e-15);
    }

    #[test]
    fn eval_domain_errors() {
        let e = parse("1/(x1 - 1)").unwrap();
        let err = eval(&e, &env(&[("x1", 1.0)])).unwrap_err();
        assert!(err.reason.contains("division"), "{err}");
        let e = parse("log(x1)").unwrap();
        assert!(eval(&e, &env(&[("x1", -1.0)])).is_err());
        let e = parse("x1^(1/2)").unwrap();
        assert!(eval(&e, &env(&[("x1", -1.0)])).is_err());
    }

    #[test]
    fn print_parse_round_trip_examples() {
        for src in [
            "1 + x1*x2^2",
            "-x1^2",
            "exp(x1*x2) - sin(pi/4)",
            "x1^(3/2) + x2^-2",
            "(x1 + x2)*(x1 - x2)",
            "1 - (x2 - x1)",
            "x1/(x2/x3)",
            "-(x1 + x2)",
            "2*pi*x1",
        ] {
            let e = parse(src).unwrap();
            let printed = e.to_string();
            let reparsed = parse(&printed)
                .unwrap_or_else(|err| panic!("`{printed}` from `{src}`: {err}"));
            assert_eq!(reparsed, e, "round trip of `{src}` via `{printed}`");
        }
    }

    fn arb_expr() -> impl proptest::strategy::Strategy<Value = Expr> {
        use proptest::prelude::*;
        let leaf = prop_oneof![
            (1u32..2048).prop_map(|k| Expr::Number(f64::from(k) / 8.0)),
            (1usize..=6).prop_map(|i| Expr::var(&format!("x{i}"))),
            Just(Expr::Pi),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let exponent = prop_oneof![
                (-3i64..=5).prop_map(|k| Ratio::new(k, 1)),
                (-5i64..=5, 2i64..=4).prop_map(|(p, q)| Ratio::new(p, q)),
            ];
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
                inner.clone().prop_map(Expr::neg),
                (inner.clone(), exponent).prop_map(|(a, r)| Expr::Pow(Box::new(a), r)),
                (0..Func::ALL.len(), inner).prop_map(|(k, a)| Expr::call(Func::ALL[k], a)),
            ]
        })
    }

    proptest::proptest! {
        /// Printing then parsing is the identity on ASTs.
        #[test]
        fn print_parse_round_trip_property(e in arb_expr()) {
            let printed = e.to_string();
            let back = parse(&printed)
                .unwrap_or_else(|err| panic!("`{printed}`: {err}"));
            proptest::prop_assert_eq!(&back, &e, "printed as `{}`", printed);
        }
    }
}
