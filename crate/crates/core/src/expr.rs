//! The expression mini-catalog for observables, Hamiltonians and scale
//! factors.
//!
//! Atoms are `cos<k>pi<axis>` and `sin<k>pi<axis>` (for example `cos2pix`,
//! `sin4piz`), with `k` a positive even integer so the atom is periodic on
//! the unit box, and decimal constants. Atoms combine with `*`, `+`, `-`,
//! parentheses and `exp(...)`. Axis names come from the model.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::ScalarField;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Trig { sine: bool, k: f64, axis: usize },
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Exp(Box<Node>),
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Trig { sine, k, axis } => {
                let t = k * PI * x[*axis];
                if *sine {
                    t.sin()
                } else {
                    t.cos()
                }
            }
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Neg(a) => -a.eval(x),
            Node::Exp(a) => a.eval(x).exp(),
        }
    }

    fn grad(&self, x: &[f64], out: &mut [f64], scale: f64) {
        match self {
            Node::Const(_) => {}
            Node::Trig { sine, k, axis } => {
                let t = k * PI * x[*axis];
                let d = if *sine { t.cos() } else { -t.sin() };
                out[*axis] += scale * k * PI * d;
            }
            Node::Add(a, b) => {
                a.grad(x, out, scale);
                b.grad(x, out, scale);
            }
            Node::Sub(a, b) => {
                a.grad(x, out, scale);
                b.grad(x, out, -scale);
            }
            Node::Mul(a, b) => {
                a.grad(x, out, scale * b.eval(x));
                b.grad(x, out, scale * a.eval(x));
            }
            Node::Neg(a) => a.grad(x, out, -scale),
            Node::Exp(a) => a.grad(x, out, scale * a.eval(x).exp()),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
    axes: &'a [String],
}

impl<'a> Parser<'a> {
    fn fail<T>(&self) -> Result<T> {
        Err(Error::UnknownExpression(self.src.to_string()))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                '-' => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        while self.peek() == Some('*') {
            self.pos += 1;
            lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.factor()?)))
            }
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return self.fail();
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.word(),
            _ => self.fail(),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            let exp_sign = (c == '-' || c == '+') && matches!(self.chars[self.pos - 1], 'e' | 'E');
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Node::Const(v)),
            _ => self.fail(),
        }
    }

    fn word(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let w: String = self.chars[start..self.pos].iter().collect();
        if w == "exp" {
            if self.peek() != Some('(') {
                return self.fail();
            }
            return Ok(Node::Exp(Box::new(self.factor()?)));
        }
        let (sine, rest) = match (w.strip_prefix("sin"), w.strip_prefix("cos")) {
            (Some(r), _) => (true, r),
            (_, Some(r)) => (false, r),
            _ => return self.fail(),
        };
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let Some(axis_name) = rest[digits.len()..].strip_prefix("pi") else {
            return self.fail();
        };
        let k: u32 = match digits.parse() {
            Ok(k) if k > 0 && k % 2 == 0 => k,
            _ => return self.fail(),
        };
        match self.axes.iter().position(|a| a == axis_name) {
            Some(axis) => Ok(Node::Trig { sine, k: k as f64, axis }),
            None => self.fail(),
        }
    }
}

/// Parses one expression over the named axes.
pub fn parse(src: &str, axes: &[String]) -> Result<ScalarField> {
    let mut p = Parser { src, chars: src.chars().collect(), pos: 0, axes };
    let node = p.expr()?;
    if p.peek().is_some() {
        return p.fail();
    }
    let dim = axes.len();
    let node = Arc::new(node);
    let n2 = node.clone();
    Ok(ScalarField::new(src.trim(), move |x| node.eval(x)).with_grad(move |x| {
        let mut g = vec![0.0; dim];
        n2.grad(x, &mut g, 1.0);
        g
    }))
}

/// Parses a comma-separated list of expressions.
pub fn parse_list(src: &str, axes: &[String]) -> Result<Vec<ScalarField>> {
    if src.trim().is_empty() {
        return Err(Error::UnknownExpression(src.to_string()));
    }
    src.split(',').map(|s| parse(s, axes)).collect()
}
