//! Closed-form traction expressions such as `(0, 1/10 - 3/10*y)`.
//!
//! Grammar: two comma-separated components in parentheses, each built from
//! numeric literals, `x`, `y`, `pi`, `+ - * / ^` and parentheses. `^` binds
//! tighter than unary minus, so `-x^2` is `-(x^2)`. Constant subexpressions
//! are folded as exact rationals before conversion to `f64`.

use std::fmt;
use std::sync::Arc;

use cavphase_core::elasticity::Traction;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    /// Character offset into the input.
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at column {}: {}", self.position + 1, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Num {
    Rat(i128, i128),
    Real(f64),
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

impl Num {
    fn rat(n: i128, d: i128) -> Option<Num> {
        if d == 0 {
            return None;
        }
        let g = gcd(n, d).max(1);
        let s = if d < 0 { -1 } else { 1 };
        Some(Num::Rat(s * n / g, s * d / g))
    }

    fn value(self) -> f64 {
        match self {
            Num::Rat(n, d) => n as f64 / d as f64,
            Num::Real(x) => x,
        }
    }

    fn binary(op: Op, a: Num, b: Num) -> Num {
        if let (Num::Rat(an, ad), Num::Rat(bn, bd)) = (a, b) {
            let exact = match op {
                Op::Add => an
                    .checked_mul(bd)
                    .zip(bn.checked_mul(ad))
                    .and_then(|(p, q)| p.checked_add(q))
                    .zip(ad.checked_mul(bd))
                    .and_then(|(n, d)| Num::rat(n, d)),
                Op::Sub => an
                    .checked_mul(bd)
                    .zip(bn.checked_mul(ad))
                    .and_then(|(p, q)| p.checked_sub(q))
                    .zip(ad.checked_mul(bd))
                    .and_then(|(n, d)| Num::rat(n, d)),
                Op::Mul => an
                    .checked_mul(bn)
                    .zip(ad.checked_mul(bd))
                    .and_then(|(n, d)| Num::rat(n, d)),
                Op::Div => an
                    .checked_mul(bd)
                    .zip(ad.checked_mul(bn))
                    .and_then(|(n, d)| Num::rat(n, d)),
                Op::Pow if bd == 1 && (0..=64).contains(&bn.abs()) => {
                    let e = bn.unsigned_abs() as u32;
                    let p = an.checked_pow(e).zip(ad.checked_pow(e));
                    p.and_then(|(n, d)| if bn >= 0 { Num::rat(n, d) } else { Num::rat(d, n) })
                }
                Op::Pow => None,
            };
            if let Some(r) = exact {
                return r;
            }
        }
        Num::Real(op.apply(a.value(), b.value()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl Op {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => a / b,
            Op::Pow => pow(a, b),
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(Num),
    X,
    Y,
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Node::Const(c) => c.value(),
            Node::X => x,
            Node::Y => y,
            Node::Neg(a) => -a.eval(x, y),
            Node::Bin(op, a, b) => op.apply(a.eval(x, y), b.eval(x, y)),
        }
    }

    fn neg(a: Node) -> Node {
        match a {
            Node::Const(Num::Rat(n, d)) => Node::Const(Num::Rat(-n, d)),
            Node::Const(Num::Real(v)) => Node::Const(Num::Real(-v)),
            other => Node::Neg(Box::new(other)),
        }
    }

    fn bin(op: Op, a: Node, b: Node) -> Node {
        match (&a, &b) {
            (Node::Const(p), Node::Const(q)) => Node::Const(Num::binary(op, *p, *q)),
            _ => Node::Bin(op, Box::new(a), Box::new(b)),
        }
    }
}

/// A parsed scalar expression in `x` and `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Node);

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.0.eval(x, y)
    }
}

/// A parsed two-component traction with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct TractionExpr {
    pub text: String,
    pub components: [Expr; 2],
}

impl TractionExpr {
    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        [self.components[0].eval(p[0], p[1]), self.components[1].eval(p[0], p[1])]
    }

    pub fn to_traction(&self) -> Traction {
        let me = Arc::new(self.clone());
        Arc::new(move |p| me.eval(p))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Num),
    Ident(String),
    Sym(char),
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            out.push((Tok::Num(literal(&s, start)?), start));
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else if c == '\u{2212}' {
            out.push((Tok::Sym('-'), i));
            i += 1;
        } else {
            return Err(ParseError {
                position: i,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    out.push((Tok::End, chars.len()));
    Ok(out)
}

/// Decimal literals become exact rationals when they fit.
fn literal(s: &str, position: usize) -> Result<Num, ParseError> {
    let bad = || ParseError {
        position,
        message: format!("malformed number '{s}'"),
    };
    let value: f64 = s.parse().map_err(|_| bad())?;
    if !s.contains(['e', 'E']) {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let digits = format!("{int}{frac}");
        if digits.len() <= 30 {
            if let Ok(n) = digits.parse::<i128>() {
                if let Some(r) = Num::rat(n, 10i128.pow(frac.len() as u32)) {
                    return Ok(r);
                }
            }
        }
    }
    Ok(Num::Real(value))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => Op::Add,
                Tok::Sym('-') => Op::Sub,
                _ => return Ok(lhs),
            };
            self.at += 1;
            lhs = Node::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => Op::Mul,
                Tok::Sym('/') => Op::Div,
                _ => return Ok(lhs),
            };
            self.at += 1;
            lhs = Node::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Tok::Sym('-') => {
                self.at += 1;
                Ok(Node::neg(self.unary()?))
            }
            Tok::Sym('+') => {
                self.at += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            self.at += 1;
            let exp = self.unary()?;
            return Ok(Node::bin(Op::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let node = match self.peek().clone() {
            Tok::Num(n) => Node::Const(n),
            Tok::Ident(name) => match name.as_str() {
                "x" => Node::X,
                "y" => Node::Y,
                "pi" => Node::Const(Num::Real(std::f64::consts::PI)),
                _ => return self.err(format!("unknown variable '{name}'")),
            },
            Tok::Sym('(') => {
                self.at += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                return Ok(inner);
            }
            Tok::End => return self.err("unexpected end of input"),
            Tok::Sym(c) => return self.err(format!("unexpected '{c}'")),
        };
        self.at += 1;
        Ok(node)
    }
}

/// Parses a single scalar expression.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err("trailing input");
    }
    Ok(Expr(e))
}

/// Parses `(e1, e2)`.
pub fn parse_traction_expression(text: &str) -> Result<TractionExpr, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    p.expect('(')?;
    let a = p.expr()?;
    p.expect(',')?;
    let b = p.expr()?;
    p.expect(')')?;
    if *p.peek() != Tok::End {
        return p.err("trailing input after the closing parenthesis");
    }
    Ok(TractionExpr {
        text: text.trim().to_string(),
        components: [Expr(a), Expr(b)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_fold_exactly() {
        let e = parse_expression("1/10 + 2/10").unwrap();
        assert_eq!(e.0, Node::Const(Num::Rat(3, 10)));
        assert_eq!(e.eval(0.0, 0.0), 0.3);
        let e = parse_expression("(1/3)^2 * 9").unwrap();
        assert_eq!(e.eval(5.0, 5.0), 1.0);
        assert_eq!(parse_expression("0.25").unwrap().0, Node::Const(Num::Rat(1, 4)));
    }

    #[test]
    fn precedence() {
        let e = parse_expression("-x^2 + 2*y - 1/2").unwrap();
        assert_eq!(e.eval(3.0, 1.0), -9.0 + 2.0 - 0.5);
        assert_eq!(parse_expression("2^3^2").unwrap().eval(0.0, 0.0), 512.0);
        assert_eq!(parse_expression("2*-x").unwrap().eval(1.5, 0.0), -3.0);
        assert_eq!(parse_expression("1.5e-1").unwrap().eval(0.0, 0.0), 0.15);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_traction_expression("(x, y $ 2)").unwrap_err();
        assert_eq!(e.position, 6);
        let e = parse_traction_expression("(x, z)").unwrap_err();
        assert_eq!(e.position, 4);
        let e = parse_traction_expression("(x y)").unwrap_err();
        assert_eq!(e.position, 3);
        let e = parse_traction_expression("(x, (y)").unwrap_err();
        assert_eq!(e.position, 7);
        assert!(e.to_string().contains("column 8"));
        assert!(parse_traction_expression("(x, y) 1").is_err());
        assert!(parse_expression("").is_err());
    }
}
