//! Black-box targets evaluated on batches of sample points.

use crate::error::{Error, Result};
use crate::expr::{Evaluation, Expression};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// A target function `f: R^n -> R` evaluated row-wise.
///
/// Implementations must be pure and tolerate concurrent calls.
pub trait Oracle<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Evaluates every row of `x` (which has `dim()` columns). Rows outside the
    /// function's domain come back invalid.
    fn evaluate(&self, x: &Matrix<T>) -> Evaluation<T>;
}

/// Oracle backed by an expression tree.
#[derive(Debug, Clone)]
pub struct ExprOracle {
    expr: Expression,
    dim: usize,
}

impl ExprOracle {
    pub fn new(expr: Expression, dim: usize) -> Result<Self> {
        if expr.has_parameters() {
            return Err(Error::UnfilledParameter(
                *expr.parameter_slots().iter().next().unwrap(),
            ));
        }
        if let Some(&max) = expr.variables().iter().next_back() {
            if max >= dim {
                return Err(Error::DimensionMismatch { index: max, dim });
            }
        }
        Ok(Self { expr, dim })
    }

    pub fn expression(&self) -> &Expression {
        &self.expr
    }
}

impl<T: Scalar> Oracle<T> for ExprOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &Matrix<T>) -> Evaluation<T> {
        self.expr
            .evaluate(x)
            .expect("dimension checked at construction")
    }
}

/// Expression oracle that additionally rejects rows where any guard
/// expression (typically a denominator) is smaller than `threshold` in
/// magnitude.
#[derive(Debug, Clone)]
pub struct GuardedOracle {
    inner: ExprOracle,
    guards: Vec<Expression>,
    threshold: f64,
}

impl GuardedOracle {
    pub fn new(expr: Expression, dim: usize, guards: Vec<Expression>, threshold: f64) -> Result<Self> {
        for g in &guards {
            ExprOracle::new(g.clone(), dim)?;
        }
        Ok(Self {
            inner: ExprOracle::new(expr, dim)?,
            guards,
            threshold,
        })
    }

    pub fn expression(&self) -> &Expression {
        self.inner.expression()
    }

    pub fn guards(&self) -> &[Expression] {
        &self.guards
    }
}

impl<T: Scalar> Oracle<T> for GuardedOracle {
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn evaluate(&self, x: &Matrix<T>) -> Evaluation<T> {
        let mut out = Oracle::<T>::evaluate(&self.inner, x);
        let th = T::of(self.threshold);
        for g in &self.guards {
            let gv = g.evaluate(x).expect("dimension checked at construction");
            for (r, v) in gv.values.iter().enumerate() {
                if !(v.abs() >= th) {
                    out.values[r] = T::nan();
                    out.valid[r] = false;
                }
            }
        }
        out
    }
}

/// Oracle from a plain point function; non-finite outputs are invalid.
pub struct FnOracle<F> {
    dim: usize,
    f: F,
}

impl<F> FnOracle<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T, F> Oracle<T> for FnOracle<F>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &Matrix<T>) -> Evaluation<T> {
        let values = (0..x.nrows())
            .map(|r| {
                let v = (self.f)(x.row(r));
                if v.is_finite() {
                    v
                } else {
                    T::nan()
                }
            })
            .collect();
        Evaluation::from_values(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn guard_rejects_small_denominators() {
        let o = GuardedOracle::new(
            parse("1 / (x1 + x2)").unwrap(),
            2,
            vec![parse("x1 + x2").unwrap()],
            1e-3,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -0.9995], vec![1.0, 1.0]]);
        let e: Evaluation<f64> = o.evaluate(&x);
        assert_eq!(e.valid, vec![false, true]);
    }

    #[test]
    fn construction_checks_dimension() {
        assert!(ExprOracle::new(parse("x3").unwrap(), 2).is_err());
        assert!(ExprOracle::new(parse("x2").unwrap(), 2).is_ok());
    }

    #[test]
    fn closure_oracle() {
        let o = FnOracle::new(1, |p: &[f64]| 1.0 / p[0]);
        let e = o.evaluate(&Matrix::from_rows(&[vec![0.0], vec![2.0]]));
        assert_eq!(e.valid, vec![false, true]);
    }
}
