//! Recursive-descent parser.
//!
//! Grammar (lowest precedence first):
//!
//! ```text
//! expr     := term  (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)*
//! exponent := ['-'] number | '(' ['-'] number ['/' number] ')'
//! atom     := number | '(' expr ')' | ident '(' expr ')' | ident
//! ```
//!
//! `ident` is `[a-zA-Z_][a-zA-Z0-9_]*`; `pi` is a constant, the fixed
//! function set is recognized by name, anything else is a variable.
//! Exponents must be literal: integers stay exact, decimal exponents are
//! converted digit-exactly to rationals.

use num_rational::Ratio;

use super::{Expr, Func, ParseError};

pub fn parse(input: &str) -> Result<Expr, ParseError> {
    let tokens = lex(input)?;
    let mut p = Parser { tokens, pos: 0 };
    let expr = p.expr()?;
    match p.peek() {
        Token::End(_) => Ok(expr),
        t => Err(err(t.offset(), "unexpected trailing input")),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number { value: f64, text: String, offset: usize },
    Ident { name: String, offset: usize },
    Op { ch: char, offset: usize },
    End(usize),
}

impl Token {
    fn offset(&self) -> usize {
        match self {
            Token::Number { offset, .. } | Token::Ident { offset, .. } | Token::Op { offset, .. } => {
                *offset
            }
            Token::End(offset) => *offset,
        }
    }
}

fn err(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        offset,
        message: message.into(),
    }
}

fn lex(input: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
            }
            // exponent part, e.g. 1e-4 (printer output for small literals)
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &input[start..i];
            let value: f64 = text
                .parse()
                .map_err(|_| err(start, format!("malformed number `{text}`")))?;
            tokens.push(Token::Number {
                value,
                text: text.to_owned(),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            tokens.push(Token::Ident {
                name: input[start..i].to_owned(),
                offset: start,
            });
        } else if "+-*/^()".contains(c) {
            tokens.push(Token::Op { ch: c, offset: i });
            i += 1;
        } else {
            return Err(err(i, format!("unexpected character `{c}`")));
        }
    }
    tokens.push(Token::End(input.len()));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_op(&mut self, ch: char) -> bool {
        if matches!(self.peek(), Token::Op { ch: c, .. } if *c == ch) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, ch: char) -> Result<(), ParseError> {
        if self.eat_op(ch) {
            Ok(())
        } else {
            Err(err(self.peek().offset(), format!("expected `{ch}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat_op('-') {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Expr::mul(lhs, self.unary()?);
            } else if self.eat_op('/') {
                lhs = Expr::div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op('-') {
            Ok(Expr::neg(self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.atom()?;
        while self.eat_op('^') {
            let exponent = self.exponent()?;
            base = Expr::Pow(Box::new(base), exponent);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Ratio<i64>, ParseError> {
        if self.eat_op('(') {
            let neg = self.eat_op('-');
            let num = self.literal_ratio("exponent")?;
            let ratio = if self.eat_op('/') {
                let den = self.literal_ratio("exponent denominator")?;
                if !den.is_integer() || !num.is_integer() {
                    return Err(err(
                        self.peek().offset(),
                        "exponent ratio must be integer/integer",
                    ));
                }
                if *den.numer() == 0 {
                    return Err(err(self.peek().offset(), "zero exponent denominator"));
                }
                Ratio::new(*num.numer(), *den.numer())
            } else {
                num
            };
            self.expect_op(')')?;
            Ok(if neg { -ratio } else { ratio })
        } else {
            let neg = self.eat_op('-');
            let ratio = self.literal_ratio("exponent")?;
            Ok(if neg { -ratio } else { ratio })
        }
    }

    fn literal_ratio(&mut self, what: &str) -> Result<Ratio<i64>, ParseError> {
        match self.next() {
            Token::Number { text, offset, .. } => decimal_to_ratio(&text)
                .ok_or_else(|| err(offset, format!("{what} literal out of exact range"))),
            t => Err(err(t.offset(), format!("{what} must be a literal number"))),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Token::Number { value, .. } => Ok(Expr::Number(value)),
            Token::Op { ch: '(', .. } => {
                let inner = self.expr()?;
                self.expect_op(')')?;
                Ok(inner)
            }
            Token::Ident { name, offset } => {
                if self.eat_op('(') {
                    let f = Func::from_name(&name)
                        .ok_or_else(|| err(offset, format!("unknown function `{name}`")))?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    Ok(Expr::call(f, arg))
                } else if name == "pi" {
                    Ok(Expr::Pi)
                } else {
                    Ok(Expr::Var(name))
                }
            }
            t => Err(err(t.offset(), "expected a number, name, or `(`")),
        }
    }
}

/// Exact decimal-text → rational conversion (`"2.5"` → 5/2, `"1e2"` → 100).
/// Returns `None` when the exact value overflows `i64`.
fn decimal_to_ratio(text: &str) -> Option<Ratio<i64>> {
    let (mantissa, exp10) = match text.find(['e', 'E']) {
        Some(split) => (&text[..split], text[split + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(dot) => (&mantissa[..dot], &mantissa[dot + 1..]),
        None => (mantissa, ""),
    };
    let mut numer: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().ok()?
    };
    let mut denom: i64 = 1;
    for digit in frac_part.bytes() {
        numer = numer.checked_mul(10)?.checked_add((digit - b'0') as i64)?;
        denom = denom.checked_mul(10)?;
    }
    let mut e = exp10;
    while e > 0 {
        numer = numer.checked_mul(10)?;
        e -= 1;
    }
    while e < 0 {
        denom = denom.checked_mul(10)?;
        e += 1;
    }
    Some(Ratio::new(numer, denom))
}
