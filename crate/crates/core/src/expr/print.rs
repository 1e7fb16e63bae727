use std::fmt;

use super::{BinaryOp, Expression, UnaryOp};

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expression) -> u8 {
    match e {
        Expression::Const(c) if c.is_sign_negative() => PREC_NEG,
        Expression::Const(_) | Expression::Var(_) | Expression::Param(_) => PREC_ATOM,
        Expression::Unary(UnaryOp::Neg, _) => PREC_NEG,
        Expression::Unary(..) => PREC_ATOM,
        Expression::Binary(op, ..) => match op {
            BinaryOp::Add | BinaryOp::Sub => PREC_ADD,
            BinaryOp::Mul | BinaryOp::Div => PREC_MUL,
            BinaryOp::Pow => PREC_POW,
        },
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expression, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Const(c) => write!(f, "{c}"),
            Expression::Var(i) => write!(f, "x{}", i + 1),
            Expression::Param(s) => write!(f, "p{s}"),
            Expression::Unary(UnaryOp::Neg, c) => {
                f.write_str("-")?;
                // "-3" would re-parse as a negative literal
                let literal = matches!(**c, Expression::Const(v) if !v.is_sign_negative());
                write_child(f, c, literal || precedence(c) < PREC_NEG)
            }
            Expression::Unary(op, c) => write!(f, "{}({c})", op.name()),
            Expression::Binary(op, l, r) => {
                let p = precedence(self);
                let (lp, rp) = match op {
                    BinaryOp::Pow => (precedence(l) <= PREC_POW, precedence(r) < PREC_NEG),
                    _ => (precedence(l) < p, precedence(r) <= p),
                };
                write_child(f, l, lp)?;
                if *op == BinaryOp::Pow {
                    f.write_str("^")?;
                } else {
                    write!(f, " {} ", op.symbol())?;
                }
                write_child(f, r, rp)
            }
        }
    }
}
