//! Precedence-aware printing. Parenthesization is chosen so that parsing the
//! output reproduces the AST node-for-node (right operands of `+ - * /` are
//! parenthesized at equal precedence to preserve association structure).

use std::fmt;

use super::{BinOp, Expr};

/// Binding strength; atoms are tightest.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Number(_) | Expr::Pi | Expr::Var(_) | Expr::Call(..) => 5,
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // {:?} prints the shortest decimal that round-trips the f64.
            Expr::Number(x) => write!(f, "{x:?}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_wrapped(f, a, prec(a) < 3)
            }
            Expr::Bin(op, a, b) => {
                let (p, sym) = match op {
                    BinOp::Add => (1, " + "),
                    BinOp::Sub => (1, " - "),
                    BinOp::Mul => (2, "*"),
                    BinOp::Div => (2, "/"),
                };
                write_wrapped(f, a, prec(a) < p)?;
                write!(f, "{sym}")?;
                write_wrapped(f, b, prec(b) <= p)
            }
            Expr::Pow(base, r) => {
                write_wrapped(f, base, prec(base) < 5)?;
                if r.is_integer() {
                    if *r.numer() < 0 {
                        write!(f, "^({})", r.numer())
                    } else {
                        write!(f, "^{}", r.numer())
                    }
                } else {
                    write!(f, "^({}/{})", r.numer(), r.denom())
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
