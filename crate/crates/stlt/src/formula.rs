//! STL formulas in positive normal form.
//!
//! Concrete syntax:
//!
//! ```text
//! phi := "T" | ident | "!" ident | phi "&" phi | phi "|" phi
//!      | phi "U[" num "," num "]" phi | "F[" num "," num "]" phi
//!      | "G[" num "," num "]" phi | "(" phi ")"
//! ```
//!
//! Unary temporal operators bind tightest, then `U`, then `&`, then `|`.
//! `T`, `F`, `G` and `U` are reserved words.

use std::fmt;

use thiserror::Error;

use crate::regions::Region;

pub const DEFAULT_NODE_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, FormulaError> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 {
            return Err(FormulaError::BadInterval { lo, hi });
        }
        if lo > hi {
            return Err(FormulaError::BadInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(t: f64) -> Self {
        Interval { lo: t, hi: t }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Pred(String),
    NegPred(String),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Until(Box<Formula>, Box<Formula>, Interval),
    Eventually(Box<Formula>, Interval),
    Always(Box<Formula>, Interval),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulaError {
    #[error("syntax error at {position}: {message}")]
    Syntax { message: String, position: usize },
    #[error("negation at {position} applies to a non-predicate")]
    NegationOnNonPredicate { position: usize },
    #[error("invalid interval [{lo},{hi}]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("rewriting exceeded the node cap of {cap}")]
    NodeCapExceeded { cap: usize },
}

/// A named predicate and the region it denotes.
#[derive(Debug, Clone)]
pub struct PredicateDecl {
    pub name: String,
    pub region: Region,
}

impl Formula {
    pub fn pred(name: &str) -> Formula {
        Formula::Pred(name.to_string())
    }

    pub fn not_pred(name: &str) -> Formula {
        Formula::NegPred(name.to_string())
    }

    pub fn eventually(child: Formula, lo: f64, hi: f64) -> Formula {
        Formula::Eventually(Box::new(child), Interval { lo, hi })
    }

    pub fn always(child: Formula, lo: f64, hi: f64) -> Formula {
        Formula::Always(Box::new(child), Interval { lo, hi })
    }

    pub fn until(left: Formula, right: Formula, lo: f64, hi: f64) -> Formula {
        Formula::Until(Box::new(left), Box::new(right), Interval { lo, hi })
    }

    /// Conjunction with nested conjunctions flattened. A single child is returned as is.
    pub fn and(children: Vec<Formula>) -> Formula {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c {
                Formula::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Formula::And(flat)
        }
    }

    pub fn or(children: Vec<Formula>) -> Formula {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c {
                Formula::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Formula::Or(flat)
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) | Formula::NegPred(_) => 1,
            Formula::And(cs) | Formula::Or(cs) => 1 + cs.iter().map(|c| c.node_count()).sum::<usize>(),
            Formula::Until(l, r, _) => 1 + l.node_count() + r.node_count(),
            Formula::Eventually(c, _) | Formula::Always(c, _) => 1 + c.node_count(),
        }
    }

    /// Predicate names in order of first appearance.
    pub fn predicates(&self) -> Vec<String> {
        fn walk(f: &Formula, out: &mut Vec<String>) {
            match f {
                Formula::True => {}
                Formula::Pred(n) | Formula::NegPred(n) => {
                    if !out.contains(n) {
                        out.push(n.clone());
                    }
                }
                Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| walk(c, out)),
                Formula::Until(l, r, _) => {
                    walk(l, out);
                    walk(r, out);
                }
                Formula::Eventually(c, _) | Formula::Always(c, _) => walk(c, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn contains_until(&self) -> bool {
        match self {
            Formula::Until(..) => true,
            Formula::True | Formula::Pred(_) | Formula::NegPred(_) => false,
            Formula::And(cs) | Formula::Or(cs) => cs.iter().any(|c| c.contains_until()),
            Formula::Eventually(c, _) | Formula::Always(c, _) => c.contains_until(),
        }
    }

    pub fn contains_or(&self) -> bool {
        match self {
            Formula::Or(_) => true,
            Formula::True | Formula::Pred(_) | Formula::NegPred(_) => false,
            Formula::And(cs) => cs.iter().any(|c| c.contains_or()),
            Formula::Until(l, r, _) => l.contains_or() || r.contains_or(),
            Formula::Eventually(c, _) | Formula::Always(c, _) => c.contains_or(),
        }
    }

    /// True when the formula has no Until and every Or sits above all other operators.
    pub fn is_desired_form(&self) -> bool {
        match self {
            Formula::Or(cs) => cs.iter().all(|c| c.is_desired_form()),
            other => !other.contains_until() && !other.contains_or(),
        }
    }
}

/// Largest sum of nested interval upper bounds over all branches.
pub fn horizon(phi: &Formula) -> f64 {
    match phi {
        Formula::True | Formula::Pred(_) | Formula::NegPred(_) => 0.0,
        Formula::And(cs) | Formula::Or(cs) => cs.iter().map(horizon).fold(0.0, f64::max),
        Formula::Until(l, r, i) => i.hi + horizon(l).max(horizon(r)),
        Formula::Eventually(c, i) | Formula::Always(c, i) => i.hi + horizon(c),
    }
}

/// Rewrites into desired form with the default node cap.
pub fn to_desired_form(phi: &Formula) -> Result<Formula, FormulaError> {
    to_desired_form_capped(phi, DEFAULT_NODE_CAP)
}

/// Removes Until and lifts every disjunction to the top.
///
/// The result is `d1 | ... | dn` where no `di` contains Or or Until.
pub fn to_desired_form_capped(phi: &Formula, cap: usize) -> Result<Formula, FormulaError> {
    let disjuncts = disjuncts(phi, cap)?;
    Ok(Formula::or(disjuncts))
}

fn check_cap(items: &[Formula], cap: usize) -> Result<(), FormulaError> {
    let total: usize = items.iter().map(|f| f.node_count()).sum();
    if total > cap {
        Err(FormulaError::NodeCapExceeded { cap })
    } else {
        Ok(())
    }
}

fn disjuncts(phi: &Formula, cap: usize) -> Result<Vec<Formula>, FormulaError> {
    let out = match phi {
        Formula::True | Formula::Pred(_) | Formula::NegPred(_) => vec![phi.clone()],
        Formula::Or(cs) => {
            let mut out = Vec::new();
            for c in cs {
                out.extend(disjuncts(c, cap)?);
                check_cap(&out, cap)?;
            }
            out
        }
        Formula::And(cs) => {
            let mut acc: Vec<Vec<Formula>> = vec![Vec::new()];
            for c in cs {
                let ds = disjuncts(c, cap)?;
                let mut next = Vec::with_capacity(acc.len() * ds.len());
                for prefix in &acc {
                    for d in &ds {
                        let mut combo = prefix.clone();
                        combo.push(d.clone());
                        next.push(combo);
                    }
                }
                let size: usize = next.iter().flatten().map(|f| f.node_count()).sum();
                if size > cap {
                    return Err(FormulaError::NodeCapExceeded { cap });
                }
                acc = next;
            }
            acc.into_iter().map(Formula::and).collect()
        }
        Formula::Until(l, r, i) => {
            let encoded = Formula::and(vec![
                Formula::Always(l.clone(), Interval { lo: 0.0, hi: i.hi }),
                Formula::Eventually(r.clone(), *i),
            ]);
            disjuncts(&encoded, cap)?
        }
        Formula::Eventually(c, i) => disjuncts(c, cap)?
            .into_iter()
            .map(|d| Formula::Eventually(Box::new(d), *i))
            .collect(),
        Formula::Always(c, i) => disjuncts(c, cap)?
            .into_iter()
            .map(|d| Formula::Always(Box::new(d), *i))
            .collect(),
    };
    check_cap(&out, cap)?;
    Ok(out)
}

// Printing

fn precedence(f: &Formula) -> u8 {
    match f {
        Formula::Or(_) => 0,
        Formula::And(_) => 1,
        Formula::Until(..) => 2,
        _ => 3,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Formula, min_prec: u8) -> fmt::Result {
    if precedence(child) < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "T"),
            Formula::Pred(n) => write!(f, "{n}"),
            Formula::NegPred(n) => write!(f, "!{n}"),
            Formula::And(cs) | Formula::Or(cs) => {
                let (sep, prec) = if matches!(self, Formula::And(_)) { (" & ", 2) } else { (" | ", 1) };
                for (k, c) in cs.iter().enumerate() {
                    if k > 0 {
                        write!(f, "{sep}")?;
                    }
                    write_child(f, c, prec)?;
                }
                Ok(())
            }
            Formula::Until(l, r, i) => {
                // left-associative: the right operand needs parentheses when it is an Until
                write_child(f, l, 2)?;
                write!(f, " U{i} ")?;
                write_child(f, r, 3)
            }
            Formula::Eventually(c, i) => {
                write!(f, "F{i} ")?;
                write_child(f, c, 3)
            }
            Formula::Always(c, i) => {
                write!(f, "G{i} ")?;
                write_child(f, c, 3)
            }
        }
    }
}

// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    True,
    Ident(String),
    Not,
    And,
    Or,
    LParen,
    RParen,
    Temporal(char, Interval),
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn syntax<T>(&self, position: usize, message: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax { message: message.into(), position })
    }

    fn number(&mut self) -> Result<f64, FormulaError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || matches!(self.src[self.pos], b'.' | b'e' | b'E' | b'+' | b'-'))
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.syntax(start, "expected a number"),
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), FormulaError> {
        self.skip_ws();
        if self.pos < self.src.len() && self.src[self.pos] == byte {
            self.pos += 1;
            Ok(())
        } else {
            self.syntax(self.pos, format!("expected '{}'", byte as char))
        }
    }

    fn interval(&mut self) -> Result<Interval, FormulaError> {
        self.expect(b'[')?;
        let lo = self.number()?;
        self.expect(b',')?;
        let hi = self.number()?;
        self.expect(b']')?;
        Interval::new(lo, hi)
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, FormulaError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            let start = self.pos;
            let Some(&c) = self.src.get(self.pos) else { break };
            let tok = match c {
                b'!' => {
                    self.pos += 1;
                    Tok::Not
                }
                b'&' => {
                    self.pos += 1;
                    Tok::And
                }
                b'|' => {
                    self.pos += 1;
                    Tok::Or
                }
                b'(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                        self.pos += 1;
                    }
                    let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
                    match word.as_str() {
                        "T" => Tok::True,
                        "F" | "G" | "U" => {
                            let op = word.chars().next().unwrap();
                            Tok::Temporal(op, self.interval()?)
                        }
                        _ => Tok::Ident(word),
                    }
                }
                _ => return self.syntax(start, format!("unexpected character '{}'", c as char)),
            };
            out.push((tok, start));
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, message: &str) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax { message: message.to_string(), position: self.pos() })
    }

    fn disjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut items = vec![self.conjunction()?];
        while self.peek() == Some(&Tok::Or) {
            self.idx += 1;
            items.push(self.conjunction()?);
        }
        Ok(Formula::or(items))
    }

    fn conjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut items = vec![self.until()?];
        while self.peek() == Some(&Tok::And) {
            self.idx += 1;
            items.push(self.until()?);
        }
        Ok(Formula::and(items))
    }

    fn until(&mut self) -> Result<Formula, FormulaError> {
        let mut left = self.unary()?;
        while let Some(Tok::Temporal('U', i)) = self.peek() {
            let i = *i;
            self.idx += 1;
            let right = self.unary()?;
            left = Formula::Until(Box::new(left), Box::new(right), i);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        let position = self.pos();
        match self.peek().cloned() {
            Some(Tok::True) => {
                self.idx += 1;
                Ok(Formula::True)
            }
            Some(Tok::Ident(name)) => {
                self.idx += 1;
                Ok(Formula::Pred(name))
            }
            Some(Tok::Not) => {
                self.idx += 1;
                match self.peek().cloned() {
                    Some(Tok::Ident(name)) => {
                        self.idx += 1;
                        Ok(Formula::NegPred(name))
                    }
                    None => self.err("expected a predicate after '!'"),
                    Some(_) => Err(FormulaError::NegationOnNonPredicate { position }),
                }
            }
            Some(Tok::Temporal(op @ ('F' | 'G'), i)) => {
                self.idx += 1;
                let child = Box::new(self.unary()?);
                Ok(if op == 'F' { Formula::Eventually(child, i) } else { Formula::Always(child, i) })
            }
            Some(Tok::LParen) => {
                self.idx += 1;
                let inner = self.disjunction()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("expected ')'");
                }
                self.idx += 1;
                Ok(inner)
            }
            Some(_) => self.err("expected a formula"),
            None => self.err("unexpected end of input"),
        }
    }
}

pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let toks = Lexer { src: text.as_bytes(), pos: 0 }.tokens()?;
    let mut parser = Parser { toks, idx: 0, end: text.len() };
    let phi = parser.disjunction()?;
    if parser.idx != parser.toks.len() {
        return parser.err("unexpected trailing input");
    }
    Ok(phi)
}

impl std::str::FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}
