//! A small expression language for dynamics, costs and jump maps.
//!
//! Models are plain data: every function of the state is written as an
//! expression string over a fixed set of variables.
//!
//! | name            | meaning                                          |
//! |-----------------|--------------------------------------------------|
//! | `t`             | time                                             |
//! | `x1`, `x2`, ... | state coordinates (1-based)                      |
//! | `u1`, ...       | continuous control components                    |
//! | `v1`, ...       | discrete control components                      |
//! | `y1`, ...       | destination coordinates of a controlled jump     |
//! | `dest`          | destination chart index of a controlled jump     |
//! | `chart`         | chart index of the evaluation point              |
//! | `pi`, `e`       | constants                                        |
//!
//! Operators are `+ - * / ^`, comparisons (`< <= > >= == !=`, yielding 1 or
//! 0) and the functions `exp ln log sqrt abs sin cos tan tanh min max pow
//! if(c, a, b)` and `piecewise(c1, v1, c2, v2, ..., default)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X(usize),
    U(usize),
    V(usize),
    Y(usize),
    Dest,
    Chart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sin,
    Cos,
    Tan,
    Tanh,
    Min,
    Max,
    Pow,
    If,
    Piecewise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Variable bindings for one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a, S> {
    pub t: S,
    pub x: &'a [S],
    pub u: &'a [S],
    pub v: &'a [S],
    pub y: &'a [S],
    pub dest: S,
    pub chart: S,
}

impl<'a, S: Scalar> Env<'a, S> {
    pub fn new(x: &'a [S]) -> Self {
        Self {
            t: S::zero(),
            x,
            u: &[],
            v: &[],
            y: &[],
            dest: S::zero(),
            chart: S::zero(),
        }
    }

    pub fn time(mut self, t: S) -> Self {
        self.t = t;
        self
    }

    pub fn control(mut self, u: &'a [S]) -> Self {
        self.u = u;
        self
    }

    pub fn discrete(mut self, v: &'a [S]) -> Self {
        self.v = v;
        self
    }

    pub fn destination(mut self, dest_chart: usize, y: &'a [S]) -> Self {
        self.y = y;
        self.dest = S::from_usize_lossy(dest_chart);
        self
    }

    pub fn on_chart(mut self, chart: usize) -> Self {
        self.chart = S::from_usize_lossy(chart);
        self
    }
}

/// Largest 1-based index used per indexed variable family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VarUsage {
    pub x: usize,
    pub u: usize,
    pub v: usize,
    pub y: usize,
    pub t: bool,
    pub dest: bool,
    pub chart: bool,
}

/// A parsed expression together with its source text.
#[derive(Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source).map_err(|m| expr_err(source, m))?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr().map_err(|m| expr_err(source, m))?;
        if parser.pos != parser.tokens.len() {
            return Err(expr_err(
                source,
                format!("unexpected trailing token {:?}", parser.tokens[parser.pos]),
            ));
        }
        Ok(Self {
            source: source.to_string(),
            root,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            source: format!("{value:?}"),
            root: Node::Num(value),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Returns the constant value when the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        fold_constant(&self.root)
    }

    pub fn usage(&self) -> VarUsage {
        let mut usage = VarUsage::default();
        collect_usage(&self.root, &mut usage);
        usage
    }

    /// Evaluates the expression; out-of-range indexed variables read as NaN.
    pub fn eval<S: Scalar>(&self, env: &Env<'_, S>) -> S {
        eval_node(&self.root, env)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => Expr::parse(&s).map_err(serde::de::Error::custom),
            Raw::Number(v) => Ok(Expr::constant(v)),
        }
    }
}

fn expr_err(source: &str, message: impl Into<String>) -> Error {
    Error::Expression {
        source_text: source.to_string(),
        message: message.into(),
    }
}

fn fold_constant(node: &Node) -> Option<f64> {
    match node {
        Node::Num(v) => Some(*v),
        Node::Var(_) => None,
        _ => {
            let mut usage = VarUsage::default();
            collect_usage(node, &mut usage);
            if usage == VarUsage::default() {
                let env = Env::<f64>::new(&[]);
                Some(eval_node(node, &env))
            } else {
                None
            }
        }
    }
}

fn collect_usage(node: &Node, usage: &mut VarUsage) {
    match node {
        Node::Num(_) => {}
        Node::Var(var) => match *var {
            Var::T => usage.t = true,
            Var::X(i) => usage.x = usage.x.max(i + 1),
            Var::U(i) => usage.u = usage.u.max(i + 1),
            Var::V(i) => usage.v = usage.v.max(i + 1),
            Var::Y(i) => usage.y = usage.y.max(i + 1),
            Var::Dest => usage.dest = true,
            Var::Chart => usage.chart = true,
        },
        Node::Neg(inner) => collect_usage(inner, usage),
        Node::Bin(_, a, b) => {
            collect_usage(a, usage);
            collect_usage(b, usage);
        }
        Node::Call(_, args) => args.iter().for_each(|a| collect_usage(a, usage)),
    }
}

#[inline]
fn indexed<S: Scalar>(values: &[S], i: usize) -> S {
    values.get(i).copied().unwrap_or_else(S::nan)
}

#[inline]
fn truth<S: Scalar>(b: bool) -> S {
    if b {
        S::one()
    } else {
        S::zero()
    }
}

fn eval_node<S: Scalar>(node: &Node, env: &Env<'_, S>) -> S {
    match node {
        Node::Num(v) => S::lit(*v),
        Node::Var(var) => match *var {
            Var::T => env.t,
            Var::X(i) => indexed(env.x, i),
            Var::U(i) => indexed(env.u, i),
            Var::V(i) => indexed(env.v, i),
            Var::Y(i) => indexed(env.y, i),
            Var::Dest => env.dest,
            Var::Chart => env.chart,
        },
        Node::Neg(inner) => -eval_node(inner, env),
        Node::Bin(op, a, b) => {
            let a = eval_node(a, env);
            let b = eval_node(b, env);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
                BinOp::Lt => truth(a < b),
                BinOp::Le => truth(a <= b),
                BinOp::Gt => truth(a > b),
                BinOp::Ge => truth(a >= b),
                BinOp::Eq => truth(a == b),
                BinOp::Ne => truth(a != b),
            }
        }
        Node::Call(func, args) => eval_call(*func, args, env),
    }
}

fn eval_call<S: Scalar>(func: Func, args: &[Node], env: &Env<'_, S>) -> S {
    let arg = |i: usize| eval_node(&args[i], env);
    match func {
        Func::Exp => arg(0).exp(),
        Func::Ln => arg(0).ln(),
        Func::Sqrt => arg(0).sqrt(),
        Func::Abs => arg(0).abs(),
        Func::Sin => arg(0).sin(),
        Func::Cos => arg(0).cos(),
        Func::Tan => arg(0).tan(),
        Func::Tanh => arg(0).tanh(),
        Func::Pow => arg(0).powf(arg(1)),
        Func::Min => args.iter().map(|a| eval_node(a, env)).fold(S::infinity(), S::min),
        Func::Max => args.iter().map(|a| eval_node(a, env)).fold(S::neg_infinity(), S::max),
        Func::If => {
            if arg(0) != S::zero() {
                arg(1)
            } else {
                arg(2)
            }
        }
        Func::Piecewise => {
            let pairs = args.len() / 2;
            for k in 0..pairs {
                if arg(2 * k) != S::zero() {
                    return arg(2 * k + 1);
                }
            }
            arg(args.len() - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> std::result::Result<Vec<Token>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
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
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<f64>()
                .map_err(|_| format!("bad number literal `{text}`"))?;
            out.push(Token::Num(value));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let op = match two.as_str() {
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => Some("=="),
            "!=" => Some("!="),
            _ => None,
        };
        if let Some(op) = op {
            out.push(Token::Op(op));
            i += 2;
            continue;
        }
        let tok = match c {
            '+' => Token::Op("+"),
            '-' => Token::Op("-"),
            '*' => Token::Op("*"),
            '/' => Token::Op("/"),
            '^' => Token::Op("^"),
            '<' => Token::Op("<"),
            '>' => Token::Op(">"),
            '(' => Token::LParen,
            ')' => Token::RParen,
            ',' => Token::Comma,
            other => return Err(format!("unexpected character `{other}`")),
        };
        out.push(tok);
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult = std::result::Result<Node, String>;

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        if let Some(Token::Op(op)) = self.peek() {
            if let Some(found) = ops.iter().find(|o| *o == op) {
                let found = *found;
                self.pos += 1;
                return Some(found);
            }
        }
        None
    }

    fn expr(&mut self) -> PResult {
        let lhs = self.additive()?;
        if let Some(op) = self.eat_op(&["<", "<=", ">", ">=", "==", "!="]) {
            let rhs = self.additive()?;
            let op = match op {
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                ">=" => BinOp::Ge,
                "==" => BinOp::Eq,
                _ => BinOp::Ne,
            };
            return Ok(Node::Bin(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> PResult {
        let mut lhs = self.multiplicative()?;
        while let Some(op) = self.eat_op(&["+", "-"]) {
            let rhs = self.multiplicative()?;
            let op = if op == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> PResult {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&["*", "/"]) {
            let rhs = self.unary()?;
            let op = if op == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult {
        if self.eat_op(&["-"]).is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op(&["+"]).is_some() {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> PResult {
        let base = self.atom()?;
        if self.eat_op(&["^"]).is_some() {
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> PResult {
        match self.next() {
            Some(Token::Num(v)) => Ok(Node::Num(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    other => Err(format!("expected `)`, found {other:?}")),
                }
            }
            Some(Token::Ident(name)) => {
                if matches!(self.peek(), Some(Token::LParen)) {
                    self.pos += 1;
                    let args = self.arguments()?;
                    return call(&name, args);
                }
                variable(&name)
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }

    fn arguments(&mut self) -> std::result::Result<Vec<Node>, String> {
        let mut args = Vec::new();
        if matches!(self.peek(), Some(Token::RParen)) {
            self.pos += 1;
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.next() {
                Some(Token::Comma) => continue,
                Some(Token::RParen) => return Ok(args),
                other => return Err(format!("expected `,` or `)`, found {other:?}")),
            }
        }
    }
}

fn variable(name: &str) -> PResult {
    match name {
        "t" => return Ok(Node::Var(Var::T)),
        "dest" => return Ok(Node::Var(Var::Dest)),
        "chart" => return Ok(Node::Var(Var::Chart)),
        "pi" => return Ok(Node::Num(std::f64::consts::PI)),
        "e" => return Ok(Node::Num(std::f64::consts::E)),
        _ => {}
    }
    let (head, tail) = name.split_at(1);
    let index: usize = tail.parse().map_err(|_| format!("unknown variable `{name}`"))?;
    if index == 0 {
        return Err(format!("variable indices are 1-based, got `{name}`"));
    }
    let i = index - 1;
    match head {
        "x" => Ok(Node::Var(Var::X(i))),
        "u" => Ok(Node::Var(Var::U(i))),
        "v" => Ok(Node::Var(Var::V(i))),
        "y" => Ok(Node::Var(Var::Y(i))),
        _ => Err(format!("unknown variable `{name}`")),
    }
}

fn call(name: &str, args: Vec<Node>) -> PResult {
    let (func, arity): (Func, Option<usize>) = match name {
        "exp" => (Func::Exp, Some(1)),
        "ln" | "log" => (Func::Ln, Some(1)),
        "sqrt" => (Func::Sqrt, Some(1)),
        "abs" => (Func::Abs, Some(1)),
        "sin" => (Func::Sin, Some(1)),
        "cos" => (Func::Cos, Some(1)),
        "tan" => (Func::Tan, Some(1)),
        "tanh" => (Func::Tanh, Some(1)),
        "pow" => (Func::Pow, Some(2)),
        "if" => (Func::If, Some(3)),
        "min" => (Func::Min, None),
        "max" => (Func::Max, None),
        "piecewise" => (Func::Piecewise, None),
        _ => return Err(format!("unknown function `{name}`")),
    };
    if let Some(n) = arity {
        if args.len() != n {
            return Err(format!("`{name}` takes {n} argument(s), got {}", args.len()));
        }
    }
    match func {
        Func::Min | Func::Max if args.is_empty() => return Err(format!("`{name}` needs at least one argument")),
        Func::Piecewise if args.len().is_multiple_of(2) => {
            return Err("`piecewise` takes condition/value pairs followed by a default".into())
        }
        _ => {}
    }
    Ok(Node::Call(func, args))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(&Env::new(x))
    }

    #[test]
    fn arithmetic_precedence() {
        assert_eq!(eval1("1 + 2 * 3", &[]), 7.0);
        assert_eq!(eval1("(1 + 2) * 3", &[]), 9.0);
        assert_eq!(eval1("2 ^ 3 ^ 2", &[]), 512.0);
        assert_eq!(eval1("-2 ^ 2", &[]), -4.0);
        assert_eq!(eval1("1e-3 * 1000", &[]), 1.0);
        assert_eq!(eval1("10 / 4 - 0.5", &[]), 2.0);
    }

    #[test]
    fn variables_and_functions() {
        let x = [3.0, -4.0];
        assert_eq!(eval1("sqrt(x1^2 + x2^2)", &x), 5.0);
        assert_eq!(eval1("min(x1, x2, 0)", &x), -4.0);
        assert_eq!(eval1("max(abs(x2), 1)", &x), 4.0);
        assert_eq!(eval1("exp(0) + ln(e)", &x), 2.0);
        assert_eq!(eval1("if(x1 > 2, 10, 20)", &x), 10.0);
        assert_eq!(eval1("piecewise(x1 < 0, -1, x1 < 5, 1, 2)", &x), 1.0);
        assert_eq!(eval1("piecewise(x1 < 0, -1, 7)", &x), 7.0);
    }

    #[test]
    fn environment_binding() {
        let e = Expr::parse("t + u1 + v2 + y1 + dest + chart + x1").unwrap();
        let x = [1.0];
        let u = [10.0];
        let v = [0.0, 100.0];
        let y = [1000.0];
        let env = Env::new(&x)
            .time(0.5)
            .control(&u)
            .discrete(&v)
            .destination(2, &y)
            .on_chart(3);
        assert_eq!(e.eval(&env), 1116.5);
        let usage = e.usage();
        assert_eq!((usage.x, usage.u, usage.v, usage.y), (1, 1, 2, 1));
        assert!(usage.t && usage.dest && usage.chart);
    }

    #[test]
    fn missing_variable_reads_nan() {
        assert!(eval1("x3", &[1.0]).is_nan());
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "1 +",
            "foo(1)",
            "x0",
            "z1",
            "min()",
            "piecewise(1, 2)",
            "(1",
            "1 2",
            "#",
        ] {
            assert!(Expr::parse(bad).is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn constants_fold() {
        assert_eq!(Expr::parse("2 * 3").unwrap().as_constant(), Some(6.0));
        assert_eq!(Expr::parse("x1").unwrap().as_constant(), None);
    }

    #[test]
    fn serde_accepts_numbers_and_strings() {
        let e: Vec<Expr> = serde_json::from_str(r#"["x1 + 1", 2.5]"#).unwrap();
        assert_eq!(e[0].eval(&Env::new(&[1.0])), 2.0);
        assert_eq!(e[1].as_constant(), Some(2.5));
    }

    #[test]
    fn generic_over_precision() {
        let e = Expr::parse("x1 * 0.5").unwrap();
        let v: f32 = e.eval(&Env::new(&[3.0_f32]));
        assert_eq!(v, 1.5);
    }
}
