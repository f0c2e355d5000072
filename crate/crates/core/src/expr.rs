//! Arithmetic expressions and comparisons over named columns.
//!
//! Used by formula rules (`sales = qty * price`) and by the conditions of
//! conditional semantic rules (`ship_date - order_date > scheduled_days * 86400`).
//! Both ASCII operators and `×`, `÷`, `−` are accepted. Column names that are
//! not plain identifiers are written in backticks; string literals use double
//! quotes.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::table::Value;

/// Nesting limit for parentheses and unary minus.
const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{msg} at byte {pos}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("missing value in column `{0}`")]
    Missing(String),
    #[error("unknown column `{0}`")]
    Unknown(String),
    #[error("division by zero")]
    DivByZero,
    #[error("non-finite result")]
    NonFinite,
    #[error("type mismatch")]
    Type,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn holds<T: PartialOrd>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

/// Variable lookup used during evaluation.
pub trait Env {
    /// `None` when the name is not a known column.
    fn lookup(&self, name: &str) -> Option<Value>;
}

impl<F: Fn(&str) -> Option<Value>> Env for F {
    fn lookup(&self, name: &str) -> Option<Value> {
        self(name)
    }
}

enum Operand {
    Num(f64),
    Text(String),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser::new(src)?;
        let e = p.expr(0)?;
        p.expect_end()?;
        Ok(e)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    /// Column names referenced, sorted and deduplicated.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Num(_) | Expr::Str(_) => {}
        }
    }

    /// Numeric evaluation; timestamps evaluate to epoch seconds.
    pub fn eval(&self, env: &dyn Env) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(x) => *x,
            Expr::Str(_) => return Err(EvalError::Type),
            Expr::Var(name) => match env.lookup(name) {
                None => return Err(EvalError::Unknown(name.clone())),
                Some(Value::Missing) => return Err(EvalError::Missing(name.clone())),
                Some(v) => v.as_f64().ok_or(EvalError::Type)?,
            },
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivByZero);
                        }
                        a / b
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn operand(&self, env: &dyn Env) -> Result<Operand, EvalError> {
        match self {
            Expr::Str(s) => Ok(Operand::Text(s.clone())),
            Expr::Var(name) => match env.lookup(name) {
                Some(Value::Category(s)) => Ok(Operand::Text(s)),
                _ => self.eval(env).map(Operand::Num),
            },
            _ => self.eval(env).map(Operand::Num),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

impl Condition {
    pub fn parse(src: &str) -> Result<Condition, ParseError> {
        let mut p = Parser::new(src)?;
        let lhs = p.expr(0)?;
        let (pos, tok) = p.next_tok();
        let op = match tok {
            Some(Tok::Cmp(op)) => op,
            _ => return Err(p.error(pos, "expected comparison operator")),
        };
        let rhs = p.expr(0)?;
        p.expect_end()?;
        Ok(Condition { lhs, op, rhs })
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut v = self.lhs.vars();
        v.extend(self.rhs.vars());
        v
    }

    /// Text operands (string literals, categorical columns) compare as
    /// strings, everything else numerically. Mixing the two is a type error.
    pub fn eval(&self, env: &dyn Env) -> Result<bool, EvalError> {
        match (self.lhs.operand(env)?, self.rhs.operand(env)?) {
            (Operand::Num(a), Operand::Num(b)) => Ok(self.op.holds(&a, &b)),
            (Operand::Text(a), Operand::Text(b)) => Ok(self.op.holds(&a, &b)),
            _ => Err(EvalError::Type),
        }
    }
}

pub(crate) fn is_plain_ident(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

pub(crate) fn write_name(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    if is_plain_ident(name) {
        f.write_str(name)
    } else {
        write!(f, "`{name}`")
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) if *x < 0.0 || (*x == 0.0 && x.is_sign_negative()) => write!(f, "({x})"),
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
            Expr::Var(v) => write_name(f, v),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                write_child(f, a, a.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, b, b.precedence() <= p)
            }
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <$ty>::parse(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Expr);
string_serde!(Condition);

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Str(String),
    LParen,
    RParen,
    Op(BinOp),
    Cmp(CmpOp),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    depth: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Self {
            toks: lex(src)?,
            at: 0,
            end: src.len(),
            depth: 0,
        })
    }

    fn error(&self, pos: usize, msg: &str) -> ParseError {
        ParseError {
            pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn next_tok(&mut self) -> (usize, Option<Tok>) {
        let pos = self.pos();
        let tok = self.toks.get(self.at).map(|(_, t)| t.clone());
        if tok.is_some() {
            self.at += 1;
        }
        (pos, tok)
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.error(self.pos(), "unexpected trailing input")),
        }
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn expr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            if op.precedence() < min_prec {
                break;
            }
            self.at += 1;
            let rhs = self.expr(op.precedence() + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error(self.pos(), "expression nested too deeply"));
        }
        let out = if self.peek() == Some(&Tok::Op(BinOp::Sub)) {
            self.at += 1;
            self.unary().map(|e| Expr::Neg(Box::new(e)))
        } else {
            self.atom()
        };
        self.depth -= 1;
        out
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (pos, tok) = self.next_tok();
        match tok {
            Some(Tok::Num(x)) => Ok(Expr::Num(x)),
            Some(Tok::Ident(s)) => Ok(Expr::Var(s)),
            Some(Tok::Str(s)) => Ok(Expr::Str(s)),
            Some(Tok::LParen) => {
                let e = self.expr(0)?;
                match self.next_tok() {
                    (_, Some(Tok::RParen)) => Ok(e),
                    (pos, _) => Err(self.error(pos, "expected `)`")),
                }
            }
            Some(_) => Err(self.error(pos, "expected operand")),
            None => Err(self.error(pos, "unexpected end of expression")),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let err = |pos: usize, msg: &str| ParseError {
        pos,
        msg: msg.to_string(),
    };
    let mut out = Vec::new();
    let mut it = src.char_indices().peekable();
    while let Some(&(pos, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
            continue;
        }
        let tok = match c {
            '(' => {
                it.next();
                Tok::LParen
            }
            ')' => {
                it.next();
                Tok::RParen
            }
            '+' => {
                it.next();
                Tok::Op(BinOp::Add)
            }
            '-' | '−' => {
                it.next();
                Tok::Op(BinOp::Sub)
            }
            '*' | '×' => {
                it.next();
                Tok::Op(BinOp::Mul)
            }
            '/' | '÷' => {
                it.next();
                Tok::Op(BinOp::Div)
            }
            '<' | '>' | '=' | '!' => {
                it.next();
                let eq = it.next_if(|&(_, c)| c == '=').is_some();
                Tok::Cmp(match (c, eq) {
                    ('<', false) => CmpOp::Lt,
                    ('<', true) => CmpOp::Le,
                    ('>', false) => CmpOp::Gt,
                    ('>', true) => CmpOp::Ge,
                    ('=', _) => CmpOp::Eq,
                    ('!', true) => CmpOp::Ne,
                    _ => return Err(err(pos, "expected `!=`")),
                })
            }
            '`' => {
                it.next();
                let mut name = String::new();
                loop {
                    match it.next() {
                        Some((_, '`')) => break,
                        Some((_, c)) => name.push(c),
                        None => return Err(err(pos, "unterminated `name`")),
                    }
                }
                if name.is_empty() {
                    return Err(err(pos, "empty column name"));
                }
                Tok::Ident(name)
            }
            '"' => {
                it.next();
                let mut s = String::new();
                loop {
                    match it.next() {
                        Some((_, '"')) => break,
                        Some((_, '\\')) => match it.next() {
                            Some((_, c)) => s.push(c),
                            None => return Err(err(pos, "unterminated string")),
                        },
                        Some((_, c)) => s.push(c),
                        None => return Err(err(pos, "unterminated string")),
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = pos;
                let mut stop = src.len();
                let mut prev = ' ';
                while let Some(&(p, c)) = it.peek() {
                    let exp_sign = (c == '+' || c == '-') && (prev == 'e' || prev == 'E');
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                        prev = c;
                        it.next();
                    } else {
                        stop = p;
                        break;
                    }
                }
                let text = &src[start..stop];
                match text.parse::<f64>() {
                    Ok(x) if x.is_finite() => Tok::Num(x),
                    _ => return Err(err(start, "malformed number")),
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = pos;
                let mut stop = src.len();
                while let Some(&(p, c)) = it.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        it.next();
                    } else {
                        stop = p;
                        break;
                    }
                }
                Tok::Ident(src[start..stop].to_string())
            }
            _ => return Err(err(pos, "unexpected character")),
        };
        out.push((pos, tok));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, Value)]) -> HashMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn eval(src: &str, vars: &HashMap<String, Value>) -> Result<f64, EvalError> {
        let lookup = |n: &str| vars.get(n).cloned();
        Expr::parse(src).unwrap().eval(&lookup)
    }

    #[test]
    fn precedence_and_associativity() {
        let vars = env(&[("a", Value::Number(8.0)), ("b", Value::Number(4.0))]);
        assert_eq!(eval("a - b - 2", &vars), Ok(2.0));
        assert_eq!(eval("a / b / 2", &vars), Ok(1.0));
        assert_eq!(eval("a + b * 2", &vars), Ok(16.0));
        assert_eq!(eval("(a + b) * 2", &vars), Ok(24.0));
        assert_eq!(eval("-a + b", &vars), Ok(-4.0));
        assert_eq!(eval("a × b ÷ 2 − 1", &vars), Ok(15.0));
        assert_eq!(eval("1.5e1 + .5", &vars), Ok(15.5));
    }

    #[test]
    fn division_by_zero_and_missing() {
        let vars = env(&[("a", Value::Number(1.0)), ("b", Value::Number(0.0)), ("m", Value::Missing)]);
        assert_eq!(eval("a / b", &vars), Err(EvalError::DivByZero));
        assert_eq!(eval("a + m", &vars), Err(EvalError::Missing("m".into())));
        assert_eq!(eval("a + z", &vars), Err(EvalError::Unknown("z".into())));
    }

    #[test]
    fn timestamps_are_seconds() {
        let vars = env(&[("t0", Value::Timestamp(100)), ("t1", Value::Timestamp(400))]);
        assert_eq!(eval("t1 - t0", &vars), Ok(300.0));
    }

    #[test]
    fn conditions_compare_numbers_and_text() {
        let vars = env(&[
            ("a", Value::Number(3.0)),
            ("b", Value::Number(2.0)),
            ("mode", Value::Category("Same Day".into())),
        ]);
        let lookup = |n: &str| vars.get(n).cloned();
        let c = Condition::parse("a > b").unwrap();
        assert_eq!(c.eval(&lookup), Ok(true));
        let c = Condition::parse("mode = \"Same Day\"").unwrap();
        assert_eq!(c.eval(&lookup), Ok(true));
        let c = Condition::parse("mode != \"Same Day\"").unwrap();
        assert_eq!(c.eval(&lookup), Ok(false));
        let c = Condition::parse("mode > 1").unwrap();
        assert_eq!(c.eval(&lookup), Err(EvalError::Type));
    }

    #[test]
    fn backticked_names() {
        let e = Expr::parse("`order item total` * 2").unwrap();
        assert_eq!(e.vars().into_iter().collect::<Vec<_>>(), vec!["order item total"]);
        assert_eq!(e.to_string(), "`order item total` * 2");
    }

    #[test]
    fn parse_errors_carry_position() {
        assert_eq!(Expr::parse("a +").unwrap_err().pos, 3);
        assert_eq!(Expr::parse("a $ b").unwrap_err().pos, 2);
        assert!(Expr::parse("(a").is_err());
        assert!(Expr::parse("a b").is_err());
        assert!(Expr::parse("").is_err());
        assert!(Condition::parse("a + b").is_err());
        assert!(Condition::parse("a < b < c").is_err());
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let deep = "(".repeat(10_000) + "a" + &")".repeat(10_000);
        assert!(Expr::parse(&deep).is_err());
        let negs = "-".repeat(10_000) + "a";
        assert!(Expr::parse(&negs).is_err());
    }

    #[test]
    fn canonical_rendering_reparses() {
        for src in [
            "a - (b - c)",
            "(a - b) - c",
            "a / (b * c)",
            "-(a + b) * c",
            "--a",
            "qty×price",
            "x * 0.2",
            "\"a \\\"q\\\"\"",
        ] {
            let e = Expr::parse(src).unwrap();
            assert_eq!(Expr::parse(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
        assert_eq!(Expr::parse("qty×price").unwrap().to_string(), "qty * price");
    }

    #[test]
    fn serde_as_string() {
        let e = Expr::parse("a*b").unwrap();
        let j = serde_json::to_string(&e).unwrap();
        assert_eq!(j, "\"a * b\"");
        assert_eq!(serde_json::from_str::<Expr>(&j).unwrap(), e);
        assert!(serde_json::from_str::<Expr>("\"a *\"").is_err());
    }
}
