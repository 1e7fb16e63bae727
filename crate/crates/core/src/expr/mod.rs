//! Expression trees: representation, text grammar, evaluation, and the
//! parameterized model templates used by the library engine.

mod eval;
mod parse;
mod print;
pub mod template;

use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use eval::Evaluation;
pub use parse::{parse, ParseError, ParseErrorKind};
pub use template::{library, ModelTemplate, TemplateId};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "ln" => UnaryOp::Ln,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }
}

/// Immutable expression tree over variables `x1..xn` (0-based internally).
///
/// `Param` nodes are template slots; a finished model never contains them.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Const(f64),
    Var(usize),
    Param(usize),
    Unary(UnaryOp, Box<Expression>),
    Binary(BinaryOp, Box<Expression>, Box<Expression>),
}

impl Expression {
    pub fn constant(v: f64) -> Self {
        Expression::Const(v)
    }

    pub fn var(index: usize) -> Self {
        Expression::Var(index)
    }

    pub fn param(slot: usize) -> Self {
        Expression::Param(slot)
    }

    pub fn unary(op: UnaryOp, child: Expression) -> Self {
        Expression::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, lhs: Expression, rhs: Expression) -> Self {
        Expression::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: Expression, rhs: Expression) -> Self {
        Self::binary(BinaryOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Expression, rhs: Expression) -> Self {
        Self::binary(BinaryOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Expression, rhs: Expression) -> Self {
        Self::binary(BinaryOp::Mul, lhs, rhs)
    }

    pub fn div(lhs: Expression, rhs: Expression) -> Self {
        Self::binary(BinaryOp::Div, lhs, rhs)
    }

    pub fn pow(lhs: Expression, rhs: Expression) -> Self {
        Self::binary(BinaryOp::Pow, lhs, rhs)
    }

    pub fn depth(&self) -> usize {
        match self {
            Expression::Const(_) | Expression::Var(_) | Expression::Param(_) => 1,
            Expression::Unary(_, c) => 1 + c.depth(),
            Expression::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expression::Const(_) | Expression::Var(_) | Expression::Param(_) => 1,
            Expression::Unary(_, c) => 1 + c.node_count(),
            Expression::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Sorted set of variable indices referenced by the tree.
    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expression::Var(i) = e {
                out.insert(*i);
            }
        });
        out
    }

    /// Sorted set of parameter slots referenced by the tree.
    pub fn parameter_slots(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expression::Param(s) = e {
                out.insert(*s);
            }
        });
        out
    }

    pub fn has_parameters(&self) -> bool {
        !self.parameter_slots().is_empty()
    }

    fn visit(&self, f: &mut impl FnMut(&Expression)) {
        f(self);
        match self {
            Expression::Unary(_, c) => c.visit(f),
            Expression::Binary(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            _ => {}
        }
    }

    /// Replaces every `Param(s)` with `Const(params[s])`.
    pub fn substitute_params(&self, params: &[f64]) -> Result<Expression> {
        Ok(match self {
            Expression::Param(s) => Expression::Const(*params.get(*s).ok_or(
                Error::ParameterCount {
                    expected: s + 1,
                    got: params.len(),
                },
            )?),
            Expression::Const(_) | Expression::Var(_) => self.clone(),
            Expression::Unary(op, c) => Expression::unary(*op, c.substitute_params(params)?),
            Expression::Binary(op, l, r) => Expression::binary(
                *op,
                l.substitute_params(params)?,
                r.substitute_params(params)?,
            ),
        })
    }

    /// Renames variables: `Var(i)` becomes `Var(map[i])`.
    pub fn remap_variables(&self, map: &[usize]) -> Expression {
        match self {
            Expression::Var(i) => Expression::Var(map[*i]),
            Expression::Const(_) | Expression::Param(_) => self.clone(),
            Expression::Unary(op, c) => Expression::unary(*op, c.remap_variables(map)),
            Expression::Binary(op, l, r) => {
                Expression::binary(*op, l.remap_variables(map), r.remap_variables(map))
            }
        }
    }

    /// Visits constants in pre-order, allowing in-place edits.
    pub(crate) fn constants_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        match self {
            Expression::Const(c) => f(c),
            Expression::Unary(_, c) => c.constants_mut(f),
            Expression::Binary(_, l, r) => {
                l.constants_mut(f);
                r.constants_mut(f);
            }
            _ => {}
        }
    }

    pub fn constant_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if matches!(e, Expression::Const(_)) {
                n += 1;
            }
        });
        n
    }

    /// Re-parseable text form. Fails if a parameter slot is still present.
    pub fn to_text(&self) -> Result<String> {
        if let Some(&s) = self.parameter_slots().iter().next() {
            return Err(Error::UnfilledParameter(s));
        }
        Ok(self.to_string())
    }
}

impl Serialize for Expression {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expression {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let e = parse("1.2 + 10*sin(2*x1 - x3) - 3*x2^2").unwrap();
        assert_eq!(e.variables().into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(e.node_count(), 16);
        assert_eq!(e.depth(), 7);
    }

    #[test]
    fn remap() {
        let e = parse("x1 * x2").unwrap().remap_variables(&[3, 5]);
        assert_eq!(e.to_string(), "x4 * x6");
    }

    #[test]
    fn unfilled_slot_refuses_to_print() {
        let e = Expression::mul(Expression::param(0), Expression::var(0));
        assert!(matches!(e.to_text(), Err(Error::UnfilledParameter(0))));
    }
}
