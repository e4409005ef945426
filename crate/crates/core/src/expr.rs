//! Scalar expression trees over the game variables.
//!
//! Expressions are written in infix notation over the alphabet
//! `t1..tm, x1..xn, u1..up, v1..vq`, numeric literals, the operators
//! `+ - * / ^`, and the functions `sin cos exp sqrt abs min max`.
//! The grammar is documented in `docs/grammar.md`. Parsing binds every
//! identifier against a declared [`VarSpace`], so a well-formed tree is
//! closed by construction.

use crate::error::{Error, Result};
use std::fmt;

/// Sizes of the four variable families an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarSpace {
    /// Number of time axes (variables `t1..tm`).
    pub m: usize,
    /// State dimension (variables `x1..xn`).
    pub n: usize,
    /// First-team control dimension (variables `u1..up`).
    pub p: usize,
    /// Second-team control dimension (variables `v1..vq`).
    pub q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Time,
    State,
    CtrlU,
    CtrlV,
}

impl VarKind {
    fn prefix(self) -> char {
        match self {
            VarKind::Time => 't',
            VarKind::State => 'x',
            VarKind::CtrlU => 'u',
            VarKind::CtrlV => 'v',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(VarKind, usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed, closed scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    root: Node,
    vars: VarSpace,
}

/// Variable bindings for one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalEnv<'a> {
    pub t: &'a [f64],
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
}

impl<'a> EvalEnv<'a> {
    pub fn new(t: &'a [f64], x: &'a [f64], u: &'a [f64], v: &'a [f64]) -> Self {
        EvalEnv { t, x, u, v }
    }

    fn get(&self, kind: VarKind, idx: usize) -> f64 {
        match kind {
            VarKind::Time => self.t[idx],
            VarKind::State => self.x[idx],
            VarKind::CtrlU => self.u[idx],
            VarKind::CtrlV => self.v[idx],
        }
    }
}

impl ScalarExpr {
    /// Parses `src` against the declared variable space.
    pub fn parse(src: &str, vars: VarSpace) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut parser = Parser { tokens, pos: 0, vars };
        let root = parser.expression()?;
        parser.expect_end()?;
        Ok(ScalarExpr { root, vars })
    }

    /// Builds the constant expression `value`.
    pub fn constant(value: f64, vars: VarSpace) -> Self {
        ScalarExpr { root: Node::Const(value), vars }
    }

    /// The expression multiplied by a constant factor.
    pub fn scaled(&self, factor: f64) -> Self {
        ScalarExpr {
            root: Node::Bin(
                BinOp::Mul,
                Box::new(Node::Const(factor)),
                Box::new(self.root.clone()),
            ),
            vars: self.vars,
        }
    }

    pub fn vars(&self) -> VarSpace {
        self.vars
    }

    pub fn eval(&self, env: &EvalEnv) -> Result<f64> {
        let v = eval_node(&self.root, env)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::EvalDomain(format!("non-finite result from `{self}`")))
        }
    }
}

fn eval_node(node: &Node, env: &EvalEnv) -> Result<f64> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(kind, idx) => env.get(*kind, *idx),
        Node::Neg(inner) => -eval_node(inner, env)?,
        Node::Bin(op, lhs, rhs) => {
            let a = eval_node(lhs, env)?;
            let b = eval_node(rhs, env)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(Error::EvalDomain(format!("division by zero: {a} / 0")));
                    }
                    a / b
                }
                BinOp::Pow => power(a, b)?,
            }
        }
        Node::Call(f, args) => {
            let a = eval_node(&args[0], env)?;
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(Error::EvalDomain(format!("sqrt of negative value {a}")));
                    }
                    a.sqrt()
                }
                Func::Abs => a.abs(),
                Func::Min => a.min(eval_node(&args[1], env)?),
                Func::Max => a.max(eval_node(&args[1], env)?),
            }
        }
    })
}

/// `a^b` with integer exponents honored for negative bases. `0^0 = 1`.
fn power(a: f64, b: f64) -> Result<f64> {
    if a == 0.0 && b < 0.0 {
        return Err(Error::EvalDomain("zero base with negative exponent".into()));
    }
    if a < 0.0 {
        if b.fract() != 0.0 {
            return Err(Error::EvalDomain(format!(
                "negative base {a} with non-integer exponent {b}"
            )));
        }
        let mag = (-a).powf(b);
        let odd = (b.abs() % 2.0) == 1.0;
        return Ok(if odd { -mag } else { mag });
    }
    Ok(a.powf(b))
}

// ---------------------------------------------------------------------------
// Canonical printer
// ---------------------------------------------------------------------------

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Neg(_) => 3,
        Node::Bin(BinOp::Pow, ..) => 4,
        Node::Const(_) | Node::Var(..) | Node::Call(..) => 5,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node) -> fmt::Result {
    match node {
        Node::Const(c) => write!(f, "{c}"),
        Node::Var(kind, idx) => write!(f, "{}{}", kind.prefix(), idx + 1),
        Node::Neg(inner) => {
            write!(f, "-")?;
            write_child(f, inner, precedence(node), false)
        }
        Node::Bin(op, lhs, rhs) => {
            let prec = precedence(node);
            match op {
                BinOp::Pow => {
                    // Left operand of ^ must be an atom; right is a unary.
                    write_child(f, lhs, 5, false)?;
                    write!(f, "^")?;
                    write_child(f, rhs, 3, false)
                }
                _ => {
                    write_child(f, lhs, prec, false)?;
                    let sym = match op {
                        BinOp::Add => " + ",
                        BinOp::Sub => " - ",
                        BinOp::Mul => "*",
                        BinOp::Div => "/",
                        BinOp::Pow => unreachable!(),
                    };
                    write!(f, "{sym}")?;
                    // All four are left-associative: a right child of equal
                    // precedence keeps its parentheses.
                    write_child(f, rhs, prec, true)
                }
            }
        }
        Node::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_node(f, a)?;
            }
            write!(f, ")")
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Node, parent_prec: u8, strict: bool) -> fmt::Result {
    let cp = precedence(child);
    let need = if strict { cp <= parent_prec } else { cp < parent_prec };
    if need {
        write!(f, "(")?;
        write_node(f, child)?;
        write!(f, ")")
    } else {
        write_node(f, child)
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root)
    }
}

// ---------------------------------------------------------------------------
// Tokenizer and recursive-descent parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Spanned>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                out.push(Spanned {
                    tok: match c {
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '*' => Tok::Star,
                        '/' => Tok::Slash,
                        '^' => Tok::Caret,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        _ => Tok::Comma,
                    },
                    pos,
                });
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| Error::Parse {
                    position: start,
                    message: format!("invalid number literal `{text}`"),
                })?;
                out.push(Spanned { tok: Tok::Num(value), pos });
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                out.push(Spanned { tok: Tok::Ident(src[start..i].to_string()), pos });
            }
            _ => {
                return Err(Error::Parse {
                    position: pos,
                    message: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    vars: VarSpace,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|s| s.pos)
            .unwrap_or_else(|| self.tokens.last().map(|s| s.pos + 1).unwrap_or(0))
    }

    fn advance(&mut self) -> Option<Spanned> {
        let s = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        s
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse { position: self.here(), message: format!("expected {what}") })
        }
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(Error::Parse { position: self.here(), message: "unexpected trailing input".into() })
        }
    }

    fn expression(&mut self) -> Result<Node> {
        let mut node = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    node = Node::Bin(BinOp::Add, Box::new(node), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    node = Node::Bin(BinOp::Sub, Box::new(node), Box::new(self.term()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut node = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    node = Node::Bin(BinOp::Mul, Box::new(node), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    node = Node::Bin(BinOp::Div, Box::new(node), Box::new(self.unary()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let here = self.here();
        match self.advance() {
            Some(Spanned { tok: Tok::Num(v), .. }) => Ok(Node::Const(v)),
            Some(Spanned { tok: Tok::LParen, .. }) => {
                let node = self.expression()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(node)
            }
            Some(Spanned { tok: Tok::Ident(name), pos }) => self.ident(&name, pos),
            _ => Err(Error::Parse { position: here, message: "expected a value".into() }),
        }
    }

    fn ident(&mut self, name: &str, pos: usize) -> Result<Node> {
        let func = match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            _ => None,
        };
        if let Some(func) = func {
            self.expect(Tok::LParen, "`(` after function name")?;
            let mut args = vec![self.expression()?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                args.push(self.expression()?);
            }
            self.expect(Tok::RParen, "`)`")?;
            if args.len() != func.arity() {
                return Err(Error::Parse {
                    position: pos,
                    message: format!(
                        "{} takes {} argument(s), got {}",
                        func.name(),
                        func.arity(),
                        args.len()
                    ),
                });
            }
            return Ok(Node::Call(func, args));
        }
        // Indexed variable: one of t/x/u/v followed by a 1-based index.
        let mut chars = name.chars();
        let head = chars.next().unwrap();
        let rest: String = chars.collect();
        let kind = match head {
            't' => Some(VarKind::Time),
            'x' => Some(VarKind::State),
            'u' => Some(VarKind::CtrlU),
            'v' => Some(VarKind::CtrlV),
            _ => None,
        };
        let limit = |k: VarKind| match k {
            VarKind::Time => self.vars.m,
            VarKind::State => self.vars.n,
            VarKind::CtrlU => self.vars.p,
            VarKind::CtrlV => self.vars.q,
        };
        if let (Some(kind), Ok(idx)) = (kind, rest.parse::<usize>()) {
            if idx >= 1 && idx <= limit(kind) {
                return Ok(Node::Var(kind, idx - 1));
            }
        }
        Err(Error::UnknownIdentifier { name: name.to_string(), position: pos })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs() -> VarSpace {
        VarSpace { m: 2, n: 2, p: 2, q: 2 }
    }

    fn parse(src: &str) -> ScalarExpr {
        ScalarExpr::parse(src, vs()).unwrap()
    }

    fn eval(src: &str, t: &[f64], x: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        parse(src).eval(&EvalEnv::new(t, x, u, v))
    }

    #[test]
    fn parses_linear_combination() {
        let e = parse("x1 + 2*u1");
        assert_eq!(
            e.eval(&EvalEnv::new(&[0.0, 0.0], &[3.0, 0.0], &[0.5, 0.0], &[0.0, 0.0])).unwrap(),
            4.0
        );
        assert_eq!(e.to_string(), "x1 + 2*u1");
    }

    #[test]
    fn parses_min_under_power() {
        let e = parse("min(u1, v1)^2");
        let got = e
            .eval(&EvalEnv::new(&[0.0; 2], &[0.0; 2], &[-3.0, 0.0], &[1.0, 0.0]))
            .unwrap();
        assert_eq!(got, 9.0);
    }

    #[test]
    fn reports_parse_error_position() {
        let err = ScalarExpr::parse("x1 +", vs()).unwrap_err();
        match err {
            Error::Parse { position, .. } => assert_eq!(position, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_identifier() {
        let err = ScalarExpr::parse("x1 + y2", vs()).unwrap_err();
        assert!(matches!(err, Error::UnknownIdentifier { .. }));
        // Out-of-range index is also unknown.
        let err = ScalarExpr::parse("x3", vs()).unwrap_err();
        assert!(matches!(err, Error::UnknownIdentifier { .. }));
    }

    #[test]
    fn exp_of_zero_is_one() {
        assert_eq!(eval("exp(0)", &[0.0; 2], &[0.0; 2], &[0.0; 2], &[0.0; 2]).unwrap(), 1.0);
    }

    #[test]
    fn pole_raises_eval_domain() {
        let err = eval("1/(x1 - 1)", &[0.0; 2], &[1.0, 0.0], &[0.0; 2], &[0.0; 2]).unwrap_err();
        assert!(matches!(err, Error::EvalDomain(_)));
    }

    #[test]
    fn sqrt_of_negative_raises() {
        let err = eval("sqrt(x1)", &[0.0; 2], &[-1.0, 0.0], &[0.0; 2], &[0.0; 2]).unwrap_err();
        assert!(matches!(err, Error::EvalDomain(_)));
    }

    #[test]
    fn negative_base_integer_exponent() {
        assert_eq!(eval("(0 - 2)^3", &[0.0; 2], &[0.0; 2], &[0.0; 2], &[0.0; 2]).unwrap(), -8.0);
        assert!(eval("(0 - 2)^0.5", &[0.0; 2], &[0.0; 2], &[0.0; 2], &[0.0; 2]).is_err());
    }

    #[test]
    fn printer_keeps_structure() {
        for src in [
            "x1 - (x2 - u1)",
            "(x1 + x2)*u1",
            "x1/(x2 + 1)",
            "-x1^2",
            "(-x1)^2",
            "2^u1^2",
            "abs(x1 - v1)",
            "max(min(u1, v1), 0)",
        ] {
            let e = parse(src);
            let printed = e.to_string();
            let reparsed = ScalarExpr::parse(&printed, vs()).unwrap();
            assert_eq!(e, reparsed, "round trip failed for `{src}` -> `{printed}`");
        }
    }

    proptest::proptest! {
        #[test]
        fn print_parse_roundtrip(tree in arb_expr()) {
            let printed = tree.to_string();
            let reparsed = ScalarExpr::parse(&printed, tree.vars()).unwrap();
            proptest::prop_assert_eq!(tree, reparsed);
        }
    }

    fn arb_expr() -> impl proptest::strategy::Strategy<Value = ScalarExpr> {
        use proptest::prelude::*;
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(|c| Node::Const((c * 8.0).round() / 8.0)),
            (0usize..2).prop_map(|i| Node::Var(VarKind::Time, i)),
            (0usize..2).prop_map(|i| Node::Var(VarKind::State, i)),
            (0usize..2).prop_map(|i| Node::Var(VarKind::CtrlU, i)),
            (0usize..2).prop_map(|i| Node::Var(VarKind::CtrlV, i)),
        ];
        leaf.prop_recursive(5, 64, 4, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), prop_oneof![
                    Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul),
                    Just(BinOp::Div), Just(BinOp::Pow)
                ])
                    .prop_map(|(a, b, op)| Node::Bin(op, Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (inner.clone(), prop_oneof![
                    Just(Func::Sin), Just(Func::Cos), Just(Func::Exp),
                    Just(Func::Sqrt), Just(Func::Abs)
                ])
                    .prop_map(|(a, f)| Node::Call(f, vec![a])),
                (inner.clone(), inner, prop_oneof![Just(Func::Min), Just(Func::Max)])
                    .prop_map(|(a, b, f)| Node::Call(f, vec![a, b])),
            ]
        })
        .prop_map(|root| ScalarExpr { root, vars: VarSpace { m: 2, n: 2, p: 2, q: 2 } })
    }
}
