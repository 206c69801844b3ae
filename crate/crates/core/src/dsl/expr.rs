use std::fmt;

use thiserror::Error;

use super::lexer::{tokenize, Pos, Tok, Token};
use super::{DslError, ErrorKind};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 7] = [Func::Sin, Func::Cos, Func::Tan, Func::Exp, Func::Log, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    /// Variable slot and its source name.
    Var(usize, String),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed arithmetic expression with identifiers bound to variable slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("domain fault in {op} at {point:?}")]
    DomainFault { op: &'static str, point: Vec<f64> },
}

impl Expression {
    pub fn constant(v: f64) -> Self {
        Self { root: Node::Num(v) }
    }

    pub fn from_node(root: Node) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Parses `text`, binding identifiers to positions in `vars`.
    pub fn parse(text: &str, vars: &[&str]) -> Result<Self, DslError> {
        let tokens = tokenize(text)?;
        let mut p = ExprParser::new(&tokens, vars);
        let e = p.expression()?;
        if let Some(t) = p.peek() {
            return Err(DslError::new(
                ErrorKind::Syntax(format!("unexpected {} after expression", t.tok.describe())),
                t.pos,
            ));
        }
        Ok(e)
    }

    /// True if the expression reads variable `slot`.
    pub fn uses(&self, slot: usize) -> bool {
        fn walk(n: &Node, slot: usize) -> bool {
            match n {
                Node::Num(_) | Node::Pi => false,
                Node::Var(s, _) => *s == slot,
                Node::Neg(a) | Node::Call(_, a) => walk(a, slot),
                Node::Bin(_, a, b) => walk(a, slot) || walk(b, slot),
            }
        }
        walk(&self.root, slot)
    }

    pub fn is_zero(&self) -> bool {
        self.root == Node::Num(0.0)
    }

    /// Evaluates at `vars`; any non-finite intermediate is a domain fault.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        eval_node(&self.root, vars)
    }
}

fn fault(op: &'static str, vars: &[f64]) -> EvalError {
    EvalError::DomainFault { op, point: vars.to_vec() }
}

fn eval_node(n: &Node, vars: &[f64]) -> Result<f64, EvalError> {
    let v = match n {
        Node::Num(v) => *v,
        Node::Pi => std::f64::consts::PI,
        Node::Var(s, _) => vars[*s],
        Node::Neg(a) => -eval_node(a, vars)?,
        Node::Bin(op, a, b) => {
            let (x, y) = (eval_node(a, vars)?, eval_node(b, vars)?);
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(fault("division", vars));
                    }
                    x / y
                }
                BinOp::Pow => {
                    let r = x.powf(y);
                    if !r.is_finite() {
                        return Err(fault("power", vars));
                    }
                    r
                }
            }
        }
        Node::Call(f, a) => {
            let x = eval_node(a, vars)?;
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Exp => x.exp(),
                Func::Log => {
                    if x <= 0.0 {
                        return Err(fault("log", vars));
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(fault("sqrt", vars));
                    }
                    x.sqrt()
                }
                Func::Abs => x.abs(),
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(fault("arithmetic", vars))
    }
}

impl fmt::Display for Expression {
    /// Fully parenthesized; reparses to an identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(n: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match n {
                Node::Num(v) => write!(f, "{v:?}"),
                Node::Pi => f.write_str("pi"),
                Node::Var(_, name) => f.write_str(name),
                Node::Neg(a) => {
                    f.write_str("(-")?;
                    go(a, f)?;
                    f.write_str(")")
                }
                Node::Bin(op, a, b) => {
                    f.write_str("(")?;
                    go(a, f)?;
                    write!(f, " {} ", op.symbol())?;
                    go(b, f)?;
                    f.write_str(")")
                }
                Node::Call(func, a) => {
                    write!(f, "{}(", func.name())?;
                    go(a, f)?;
                    f.write_str(")")
                }
            }
        }
        go(&self.root, f)
    }
}

/// Recursive-descent parser over a token slice.
///
/// `^` binds tightest and is right-associative, then unary minus, then
/// `* /`, then `+ -`.
pub(crate) struct ExprParser<'a> {
    tokens: &'a [Token],
    at: usize,
    nest: usize,
    vars: &'a [&'a str],
}

impl<'a> ExprParser<'a> {
    pub fn new(tokens: &'a [Token], vars: &'a [&'a str]) -> Self {
        Self { tokens, at: 0, nest: 0, vars }
    }

    pub fn position(&self) -> usize {
        self.at
    }

    pub fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.at)
    }

    fn end_pos(&self) -> Pos {
        self.tokens.last().map_or(Pos { line: 1, column: 1 }, |t| t.pos)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.at);
        self.at += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    pub fn expression(&mut self) -> Result<Expression, DslError> {
        let (root, _) = self.sum()?;
        Ok(Expression { root })
    }

    fn deep(&self, depth: usize) -> Result<usize, DslError> {
        if depth > MAX_DEPTH {
            let pos = self.peek().map_or(self.end_pos(), |t| t.pos);
            return Err(DslError::new(ErrorKind::Syntax("expression nested too deeply".into()), pos));
        }
        Ok(depth)
    }

    fn sum(&mut self) -> Result<(Node, usize), DslError> {
        let (mut lhs, mut d) = self.product()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok((lhs, d)),
            };
            self.at += 1;
            let (rhs, dr) = self.product()?;
            d = self.deep(d.max(dr) + 1)?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<(Node, usize), DslError> {
        let (mut lhs, mut d) = self.unary()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok((lhs, d)),
            };
            self.at += 1;
            let (rhs, dr) = self.unary()?;
            d = self.deep(d.max(dr) + 1)?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<(Node, usize), DslError> {
        if self.eat(&Tok::Minus) {
            self.nest = self.deep(self.nest + 1)?;
            let (a, d) = self.unary()?;
            self.nest -= 1;
            let d = self.deep(d + 1)?;
            return Ok((Node::Neg(Box::new(a)), d));
        }
        self.power()
    }

    fn power(&mut self) -> Result<(Node, usize), DslError> {
        let (base, d) = self.primary()?;
        if self.eat(&Tok::Caret) {
            self.nest = self.deep(self.nest + 1)?;
            let (exp, de) = self.unary()?;
            self.nest -= 1;
            let d = self.deep(d.max(de) + 1)?;
            return Ok((Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)), d));
        }
        Ok((base, d))
    }

    fn primary(&mut self) -> Result<(Node, usize), DslError> {
        let end = self.end_pos();
        let Some(t) = self.bump() else {
            return Err(DslError::new(ErrorKind::Syntax("expected an expression".into()), end));
        };
        match &t.tok {
            Tok::Number(v) => Ok((Node::Num(*v), 1)),
            Tok::LParen => {
                self.nest = self.deep(self.nest + 1)?;
                let (inner, d) = self.sum()?;
                self.nest -= 1;
                self.expect_close(t.pos)?;
                Ok((inner, d))
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(name) {
                    if !self.eat(&Tok::LParen) {
                        let pos = self.peek().map_or(end, |t| t.pos);
                        return Err(DslError::new(
                            ErrorKind::Syntax(format!("expected `(` after `{name}`")),
                            pos,
                        ));
                    }
                    self.nest = self.deep(self.nest + 1)?;
                    let (arg, d) = self.sum()?;
                    self.nest -= 1;
                    self.expect_close(t.pos)?;
                    let d = self.deep(d + 1)?;
                    return Ok((Node::Call(f, Box::new(arg)), d));
                }
                if name == "pi" {
                    return Ok((Node::Pi, 1));
                }
                match self.vars.iter().position(|v| v == name) {
                    Some(slot) => Ok((Node::Var(slot, name.clone()), 1)),
                    None => Err(DslError::new(ErrorKind::UnknownIdentifier(name.clone()), t.pos)),
                }
            }
            other => Err(DslError::new(
                ErrorKind::Syntax(format!("expected an expression, found {}", other.describe())),
                t.pos,
            )),
        }
    }

    fn expect_close(&mut self, open: Pos) -> Result<(), DslError> {
        if self.eat(&Tok::RParen) {
            return Ok(());
        }
        let (pos, msg) = match self.peek() {
            Some(t) => (t.pos, format!("expected `)`, found {}", t.tok.describe())),
            None => (open, "unclosed `(`".to_string()),
        };
        Err(DslError::new(ErrorKind::Syntax(msg), pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, vars: &[&str], at: &[f64]) -> f64 {
        Expression::parse(s, vars).unwrap().eval(at).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("-x^2", &["x"], &[3.0]), -9.0);
        assert_eq!(ev("2^3^2", &[], &[]), 512.0);
        assert_eq!(ev("2^-1", &[], &[]), 0.5);
        assert_eq!(ev("1 - 2 - 3", &[], &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(ev("-2*3 + 1", &[], &[]), -5.0);
        let v = ev("r^2*sin(theta)", &["r", "theta"], &[2.0, std::f64::consts::FRAC_PI_2]);
        assert_eq!(v, 4.0);
    }

    #[test]
    fn faults() {
        let e = Expression::parse("1/r", &["r"]).unwrap();
        assert_eq!(e.eval(&[0.0]), Err(EvalError::DomainFault { op: "division", point: vec![0.0] }));
        assert!(Expression::parse("log(x)", &["x"]).unwrap().eval(&[0.0]).is_err());
        assert!(Expression::parse("sqrt(x)", &["x"]).unwrap().eval(&[-1.0]).is_err());
        assert!(Expression::parse("exp(x)", &["x"]).unwrap().eval(&[1000.0]).is_err());
        assert!(Expression::parse("(-1)^0.5", &[]).unwrap().eval(&[]).is_err());
    }

    #[test]
    fn diagnostics_carry_positions() {
        let e = Expression::parse("x + y", &["x"]).unwrap_err();
        assert_eq!(e.kind, ErrorKind::UnknownIdentifier("y".into()));
        assert_eq!((e.line, e.column), (1, 5));
        assert!(matches!(Expression::parse("(x", &["x"]).unwrap_err().kind, ErrorKind::Syntax(_)));
        assert!(matches!(Expression::parse("sin x", &["x"]).unwrap_err().kind, ErrorKind::Syntax(_)));
        let deep = "(".repeat(300) + "1" + &")".repeat(300);
        assert!(Expression::parse(&deep, &[]).is_err());
        let long = vec!["1"; 500].join("+");
        assert!(Expression::parse(&long, &[]).is_err());
    }

    #[test]
    fn printing_reparses() {
        let e = Expression::parse("-x^2 + 3*sin(pi*x)/2 - 1e-3", &["x"]).unwrap();
        let again = Expression::parse(&e.to_string(), &["x"]).unwrap();
        assert_eq!(e, again);
    }
}
