//! The uni- and bi-variable model library searched by the library engine.
//!
//! Every template has the form `k * body` (or `k / body` for the reciprocal
//! variants), with `k` in slot 0 and `m1..m4` in slots 1..4. Variables are
//! local: `x1` is the first variable of the factor, `x2` the second.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BinaryOp, Expression, UnaryOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateId {
    pub arity: u8,
    /// 1-based row of the library table.
    pub row: u8,
    pub reciprocal: bool,
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.arity == 1 { "uni" } else { "bi" };
        write!(f, "{kind}-{}", self.row)?;
        if self.reciprocal {
            f.write_str("-recip")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelTemplate {
    pub id: TemplateId,
    /// Body without the leading `k`, using slots 1..=n.
    pub body: Expression,
    /// Total slot count including `k`.
    pub slot_count: usize,
    /// `(slot, variable)` pairs where the slot is the exponent of a bare
    /// variable; such slots are restricted to integers on data with negative
    /// values.
    pub exponent_slots: Vec<(usize, usize)>,
}

fn p(s: usize) -> Expression {
    Expression::param(s)
}

fn x(i: usize) -> Expression {
    Expression::var(i)
}

fn mul(a: Expression, b: Expression) -> Expression {
    Expression::mul(a, b)
}

fn add(a: Expression, b: Expression) -> Expression {
    Expression::add(a, b)
}

impl ModelTemplate {
    pub fn arity(&self) -> usize {
        self.id.arity as usize
    }

    /// Full template expression with `k` in slot 0.
    pub fn expression(&self) -> Expression {
        let op = if self.id.reciprocal {
            BinaryOp::Div
        } else {
            BinaryOp::Mul
        };
        Expression::binary(op, p(0), self.body.clone())
    }

    /// Replaces every slot by its value; `params = [k, m1, ..]`.
    pub fn instantiate(&self, params: &[f64]) -> Result<Expression> {
        if params.len() != self.slot_count {
            return Err(Error::ParameterCount {
                expected: self.slot_count,
                got: params.len(),
            });
        }
        self.expression().substitute_params(params)
    }

    /// The template with `k` dropped: `body` or `1 / body`.
    pub fn shape(&self, params: &[f64]) -> Result<Expression> {
        if params.len() != self.slot_count {
            return Err(Error::ParameterCount {
                expected: self.slot_count,
                got: params.len(),
            });
        }
        let body = self.body.substitute_params(params)?;
        Ok(if self.id.reciprocal {
            Expression::div(Expression::Const(1.0), body)
        } else {
            body
        })
    }

    pub fn reciprocal(&self) -> ModelTemplate {
        ModelTemplate {
            id: TemplateId {
                reciprocal: true,
                ..self.id
            },
            ..self.clone()
        }
    }
}

fn template(arity: u8, row: u8, body: Expression, exponent_slots: Vec<(usize, usize)>) -> ModelTemplate {
    let slot_count = body.parameter_slots().len() + 1;
    ModelTemplate {
        id: TemplateId {
            arity,
            row,
            reciprocal: false,
        },
        body,
        slot_count,
        exponent_slots,
    }
}

/// Direct templates in table order: uni rows 1-4, then bi rows 1-4.
pub fn direct_library() -> Vec<ModelTemplate> {
    vec![
        // k(x^m1 + m2)
        template(1, 1, add(Expression::pow(x(0), p(1)), p(2)), vec![(1, 0)]),
        // k(e^(m1 x) + m2)
        template(
            1,
            2,
            add(Expression::unary(UnaryOp::Exp, mul(p(1), x(0))), p(2)),
            vec![],
        ),
        // k sin(m1 x^m2 + m3)
        template(
            1,
            3,
            Expression::unary(
                UnaryOp::Sin,
                add(mul(p(1), Expression::pow(x(0), p(2))), p(3)),
            ),
            vec![(2, 0)],
        ),
        // k ln(m1 x + m2)
        template(
            1,
            4,
            Expression::unary(UnaryOp::Ln, add(mul(p(1), x(0)), p(2))),
            vec![],
        ),
        // k(m1 x1 + m2 x2 + m3)
        template(2, 1, add(add(mul(p(1), x(0)), mul(p(2), x(1))), p(3)), vec![]),
        // k (m1 x1 + m2) / (m3 x2 + m4)
        template(
            2,
            2,
            Expression::div(add(mul(p(1), x(0)), p(2)), add(mul(p(3), x(1)), p(4))),
            vec![],
        ),
        // k(e^(m1 x1 x2) + m2)
        template(
            2,
            3,
            add(
                Expression::unary(UnaryOp::Exp, mul(mul(p(1), x(0)), x(1))),
                p(2),
            ),
            vec![],
        ),
        // k sin(m1 x1 + m2 x2 + m3 x1 x2 + m4)
        template(
            2,
            4,
            Expression::unary(
                UnaryOp::Sin,
                add(
                    add(
                        add(mul(p(1), x(0)), mul(p(2), x(1))),
                        mul(mul(p(3), x(0)), x(1)),
                    ),
                    p(4),
                ),
            ),
            vec![],
        ),
    ]
}

/// Search order used by the library engine: the direct templates in table
/// order, then their reciprocals `k / body` in the same order.
pub fn library() -> Vec<ModelTemplate> {
    let direct = direct_library();
    let recip: Vec<_> = direct.iter().map(ModelTemplate::reciprocal).collect();
    direct.into_iter().chain(recip).collect()
}

/// Templates of one arity, in search order.
pub fn library_for_arity(arity: usize) -> Vec<ModelTemplate> {
    library()
        .into_iter()
        .filter(|t| t.arity() == arity)
        .collect()
}
