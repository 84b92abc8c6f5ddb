//! Guard expressions attached to pattern steps.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! guard  := expr cmp expr
//! cmp    := "<" | "<=" | "=" | "==" | ">=" | ">"
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := NUMBER
//!         | "attr(" IDENT ")"            current event attribute
//!         | "step(" INT ").attr(" IDENT ")"  attribute of the event bound at
//!                                            an earlier step
//!         | "abs(" expr ")"
//!         | "-" factor
//!         | "(" expr ")"
//! ```
//!
//! Evaluation is total: a missing attribute or a division by zero makes the
//! guard evaluate to false instead of erroring.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::event::Event;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ArithExpr {
    Const(f64),
    /// Attribute of the event being evaluated.
    Attr(String),
    /// Attribute of the event bound at an earlier step (first-bound event for
    /// any-of-k steps).
    BoundAttr {
        step: usize,
        attr: String,
    },
    Abs(Box<ArithExpr>),
    Neg(Box<ArithExpr>),
    Bin {
        op: BinOp,
        lhs: Box<ArithExpr>,
        rhs: Box<ArithExpr>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardExpr {
    pub lhs: ArithExpr,
    pub op: CmpOp,
    pub rhs: ArithExpr,
    /// Source text the guard was parsed from, kept for diagnostics and
    /// round-tripping pattern files.
    pub source: String,
}

/// Resolves `step(i)` references during evaluation. The engine maps step
/// indices to binding slots; plain slices treat index and slot as identical.
pub trait BindingLookup {
    fn bound_event(&self, step: usize) -> Option<&Event>;
}

impl BindingLookup for [&Event] {
    fn bound_event(&self, step: usize) -> Option<&Event> {
        self.get(step).copied()
    }
}

impl BindingLookup for [std::sync::Arc<Event>] {
    fn bound_event(&self, step: usize) -> Option<&Event> {
        self.get(step).map(|a| a.as_ref())
    }
}

impl GuardExpr {
    pub fn parse(src: &str) -> Result<GuardExpr> {
        Parser::new(src).parse_guard()
    }

    /// Largest step index referenced, if any.
    pub fn max_step_ref(&self) -> Option<usize> {
        fn walk(e: &ArithExpr, max: &mut Option<usize>) {
            match e {
                ArithExpr::BoundAttr { step, .. } => {
                    *max = Some(max.map_or(*step, |m: usize| m.max(*step)));
                }
                ArithExpr::Abs(inner) | ArithExpr::Neg(inner) => walk(inner, max),
                ArithExpr::Bin { lhs, rhs, .. } => {
                    walk(lhs, max);
                    walk(rhs, max);
                }
                _ => {}
            }
        }
        let mut max = None;
        walk(&self.lhs, &mut max);
        walk(&self.rhs, &mut max);
        max
    }

    /// True iff the comparison holds. Missing attributes, unbound step
    /// references, and zero denominators yield false.
    pub fn eval<B: BindingLookup + ?Sized>(&self, current: &Event, bindings: &B) -> bool {
        let (Some(l), Some(r)) = (
            eval_arith(&self.lhs, current, bindings),
            eval_arith(&self.rhs, current, bindings),
        ) else {
            return false;
        };
        match self.op {
            CmpOp::Lt => l < r,
            CmpOp::Le => l <= r,
            CmpOp::Eq => l == r,
            CmpOp::Ge => l >= r,
            CmpOp::Gt => l > r,
        }
    }
}

fn eval_arith<B: BindingLookup + ?Sized>(
    e: &ArithExpr,
    current: &Event,
    bindings: &B,
) -> Option<f64> {
    match e {
        ArithExpr::Const(c) => Some(*c),
        ArithExpr::Attr(name) => current.attr(name),
        ArithExpr::BoundAttr { step, attr } => bindings.bound_event(*step)?.attr(attr),
        ArithExpr::Abs(inner) => eval_arith(inner, current, bindings).map(f64::abs),
        ArithExpr::Neg(inner) => eval_arith(inner, current, bindings).map(|v| -v),
        ArithExpr::Bin { op, lhs, rhs } => {
            let l = eval_arith(lhs, current, bindings)?;
            let r = eval_arith(rhs, current, bindings)?;
            match op {
                BinOp::Add => Some(l + r),
                BinOp::Sub => Some(l - r),
                BinOp::Mul => Some(l * r),
                BinOp::Div => {
                    if r == 0.0 {
                        None
                    } else {
                        Some(l / r)
                    }
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> CoreError {
        CoreError::GuardParse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{token}'")))
        }
    }

    fn parse_guard(&mut self) -> Result<GuardExpr> {
        let lhs = self.parse_expr()?;
        self.skip_ws();
        let op = if self.eat("<=") {
            CmpOp::Le
        } else if self.eat(">=") {
            CmpOp::Ge
        } else if self.eat("==") || self.eat("=") {
            CmpOp::Eq
        } else if self.eat("<") {
            CmpOp::Lt
        } else if self.eat(">") {
            CmpOp::Gt
        } else {
            return Err(self.err("expected comparison operator"));
        };
        let rhs = self.parse_expr()?;
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return Err(self.err("trailing input after guard"));
        }
        Ok(GuardExpr {
            lhs,
            op,
            rhs,
            source: self.src.to_string(),
        })
    }

    fn parse_expr(&mut self) -> Result<ArithExpr> {
        let mut lhs = self.parse_term()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                // A '-' here is a binary operator; unary minus is handled in
                // parse_factor.
                Some(b'-') => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_term()?;
            lhs = ArithExpr::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<ArithExpr> {
        let mut lhs = self.parse_factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_factor()?;
            lhs = ArithExpr::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_factor(&mut self) -> Result<ArithExpr> {
        self.skip_ws();
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(ArithExpr::Neg(Box::new(self.parse_factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(")")?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.parse_number(),
            Some(_) => {
                if self.eat("abs(") {
                    let inner = self.parse_expr()?;
                    self.expect(")")?;
                    Ok(ArithExpr::Abs(Box::new(inner)))
                } else if self.eat("attr(") {
                    let name = self.parse_ident()?;
                    self.expect(")")?;
                    Ok(ArithExpr::Attr(name))
                } else if self.eat("step(") {
                    let step = self.parse_uint()?;
                    self.expect(")")?;
                    self.expect(".attr(")?;
                    let attr = self.parse_ident()?;
                    self.expect(")")?;
                    Ok(ArithExpr::BoundAttr { step, attr })
                } else {
                    Err(self.err("expected number, attr(..), step(..).attr(..), or abs(..)"))
                }
            }
            None => Err(self.err("unexpected end of guard")),
        }
    }

    fn parse_number(&mut self) -> Result<ArithExpr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit()
                || self.bytes[self.pos] == b'.'
                || ((self.bytes[self.pos] == b'e' || self.bytes[self.pos] == b'E')
                    && self.pos > start))
        {
            self.pos += 1;
            // Allow exponent sign right after e/E.
            if self.pos < self.bytes.len()
                && (self.bytes[self.pos - 1] == b'e' || self.bytes[self.pos - 1] == b'E')
                && (self.bytes[self.pos] == b'+' || self.bytes[self.pos] == b'-')
            {
                self.pos += 1;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(ArithExpr::Const)
            .map_err(|e| CoreError::GuardParse {
                pos: start,
                msg: format!("bad number: {e}"),
            })
    }

    fn parse_uint(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .parse::<usize>()
            .map_err(|e| CoreError::GuardParse {
                pos: start,
                msg: format!("bad index: {e}"),
            })
    }

    fn parse_ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(self.src[start..self.pos].to_string())
    }
}
