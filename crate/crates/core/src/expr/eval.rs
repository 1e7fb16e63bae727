use super::{BinaryOp, Expression, UnaryOp};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Absolute threshold below which a denominator counts as zero.
pub const DIVISION_GUARD: f64 = 1e-12;

/// Row-wise evaluation result. Invalid rows hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub values: Vec<T>,
    pub valid: Vec<bool>,
}

impl<T: Scalar> Evaluation<T> {
    pub fn from_values(values: Vec<T>) -> Self {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self { values, valid }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }
}

fn pow_guarded<T: Scalar>(base: T, exponent: T) -> T {
    let e = exponent.as_f64();
    if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
        if base == T::zero() && e < 0.0 {
            return T::nan();
        }
        return base.powi(e as i32);
    }
    if base < T::zero() || (base == T::zero() && exponent < T::zero()) {
        return T::nan();
    }
    base.powf(exponent)
}

fn unary<T: Scalar>(op: UnaryOp, v: T) -> T {
    match op {
        UnaryOp::Neg => -v,
        UnaryOp::Sin => v.sin(),
        UnaryOp::Cos => v.cos(),
        UnaryOp::Exp => v.exp(),
        UnaryOp::Ln => {
            if v > T::zero() {
                v.ln()
            } else {
                T::nan()
            }
        }
        UnaryOp::Sqrt => {
            if v >= T::zero() {
                v.sqrt()
            } else {
                T::nan()
            }
        }
    }
}

fn binary<T: Scalar>(op: BinaryOp, a: T, b: T, guard: T) -> T {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b.abs() < guard {
                T::nan()
            } else {
                a / b
            }
        }
        BinaryOp::Pow => pow_guarded(a, b),
    }
}

struct Ctx<'a, T> {
    columns: &'a [Vec<T>],
    rows: usize,
    params: Option<&'a [f64]>,
    guard: T,
}

impl Expression {
    fn check(&self, dim: usize, params: Option<&[f64]>) -> Result<()> {
        if let Some(&max) = self.variables().iter().next_back() {
            if max >= dim {
                return Err(Error::DimensionMismatch { index: max, dim });
            }
        }
        let slots = self.parameter_slots();
        match (slots.iter().next_back(), params) {
            (Some(&s), None) => Err(Error::UnfilledParameter(s)),
            (Some(&s), Some(p)) if s >= p.len() => Err(Error::ParameterCount {
                expected: s + 1,
                got: p.len(),
            }),
            _ => Ok(()),
        }
    }

    fn eval_columns<T: Scalar>(&self, ctx: &Ctx<'_, T>) -> Vec<T> {
        match self {
            Expression::Const(c) => vec![T::of(*c); ctx.rows],
            Expression::Param(s) => vec![T::of(ctx.params.map_or(f64::NAN, |p| p[*s])); ctx.rows],
            Expression::Var(i) => ctx.columns[*i].clone(),
            Expression::Unary(op, c) => {
                let mut v = c.eval_columns(ctx);
                for x in &mut v {
                    *x = unary(*op, *x);
                }
                v
            }
            Expression::Binary(op, l, r) => {
                let mut a = l.eval_columns(ctx);
                let b = r.eval_columns(ctx);
                for (x, &y) in a.iter_mut().zip(&b) {
                    *x = binary(*op, *x, y, ctx.guard);
                }
                a
            }
        }
    }

    fn evaluate_inner<T: Scalar>(
        &self,
        x: &Matrix<T>,
        params: Option<&[f64]>,
    ) -> Result<Evaluation<T>> {
        self.check(x.ncols(), params)?;
        let used = self.variables();
        let columns: Vec<Vec<T>> = (0..x.ncols())
            .map(|j| {
                if used.contains(&j) {
                    x.column(j)
                } else {
                    Vec::new()
                }
            })
            .collect();
        let ctx = Ctx {
            columns: &columns,
            rows: x.nrows(),
            params,
            guard: T::of(DIVISION_GUARD),
        };
        let mut values = self.eval_columns(&ctx);
        for v in &mut values {
            if !v.is_finite() {
                *v = T::nan();
            }
        }
        Ok(Evaluation::from_values(values))
    }

    /// Evaluates the expression on every row of `x`.
    ///
    /// Domain violations (`ln` of a non-positive value, a denominator below
    /// 1e-12 in magnitude, a non-integer power of a negative base, overflow)
    /// mark the row invalid instead of failing the call.
    pub fn evaluate<T: Scalar>(&self, x: &Matrix<T>) -> Result<Evaluation<T>> {
        self.evaluate_inner(x, None)
    }

    /// Like [`Expression::evaluate`], with `Param(s)` read from `params[s]`.
    pub fn evaluate_with_params<T: Scalar>(
        &self,
        x: &Matrix<T>,
        params: &[f64],
    ) -> Result<Evaluation<T>> {
        self.evaluate_inner(x, Some(params))
    }

    /// Scalar evaluation at one point; `None` when the point is invalid.
    pub fn eval_point(&self, point: &[f64]) -> Option<f64> {
        let v = self.eval_scalar(point, &[]);
        v.is_finite().then_some(v)
    }

    pub(crate) fn eval_scalar(&self, point: &[f64], params: &[f64]) -> f64 {
        match self {
            Expression::Const(c) => *c,
            Expression::Param(s) => params.get(*s).copied().unwrap_or(f64::NAN),
            Expression::Var(i) => point.get(*i).copied().unwrap_or(f64::NAN),
            Expression::Unary(op, c) => unary(*op, c.eval_scalar(point, params)),
            Expression::Binary(op, l, r) => binary(
                *op,
                l.eval_scalar(point, params),
                r.eval_scalar(point, params),
                DIVISION_GUARD,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn case2_at_known_point() {
        let e = parse("0.5 * exp(x3) * sin(x1) * cos(x2)").unwrap();
        let x = Matrix::from_rows(&[vec![std::f64::consts::FRAC_PI_2, 0.0, 0.0]]);
        let r = e.evaluate(&x).unwrap();
        assert_eq!(r.values, vec![0.5]);
        assert!(r.all_valid());
    }

    #[test]
    fn constant_over_matrix() {
        let e = parse("1.2").unwrap();
        let x = Matrix::<f64>::zeros(5, 3);
        let r = e.evaluate(&x).unwrap();
        assert_eq!(r.values, vec![1.2; 5]);
        assert_eq!(r.valid_count(), 5);
    }

    #[test]
    fn domain_guards_flag_rows() {
        let x = Matrix::from_rows(&[vec![-1.0], vec![2.0], vec![0.0]]);
        let ln = parse("ln(x1)").unwrap().evaluate(&x).unwrap();
        assert_eq!(ln.valid, vec![false, true, false]);
        let div = parse("1 / x1").unwrap().evaluate(&x).unwrap();
        assert_eq!(div.valid, vec![true, true, false]);
        let tiny = Matrix::from_rows(&[vec![1e-13]]);
        assert!(!parse("1 / x1").unwrap().evaluate(&tiny).unwrap().valid[0]);
        let frac = parse("x1^1.2").unwrap().evaluate(&x).unwrap();
        assert_eq!(frac.valid, vec![false, true, true]);
        let int = parse("x1^3").unwrap().evaluate(&x).unwrap();
        assert_eq!(int.values, vec![-1.0, 8.0, 0.0]);
        let neg_int = parse("x1^-2").unwrap().evaluate(&x).unwrap();
        assert_eq!(neg_int.valid, vec![true, true, false]);
        let sq = parse("sqrt(x1)").unwrap().evaluate(&x).unwrap();
        assert_eq!(sq.valid, vec![false, true, true]);
        let big = parse("exp(exp(x1 * 10))").unwrap().evaluate::<f64>(&x).unwrap();
        assert!(!big.valid[1]);
        assert!(big.values[1].is_nan());
    }

    #[test]
    fn dimension_mismatch() {
        let e = parse("x4").unwrap();
        let x = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            e.evaluate(&x),
            Err(Error::DimensionMismatch { index: 3, dim: 3 })
        ));
    }

    #[test]
    fn params_and_f32() {
        let e = Expression::mul(Expression::param(0), Expression::var(0));
        let x = Matrix::from_rows(&[vec![2.0f32]]);
        assert_eq!(e.evaluate_with_params(&x, &[3.0]).unwrap().values, vec![6.0f32]);
        assert!(matches!(e.evaluate(&x), Err(Error::UnfilledParameter(0))));
        assert!(matches!(
            e.evaluate_with_params(&x, &[]),
            Err(Error::ParameterCount { .. })
        ));
    }

    #[test]
    fn point_and_batch_agree_bitwise() {
        let e = parse("sin(2*x1 - x3) / (x2 + 0.5) + x1^2.5").unwrap();
        let rows = vec![vec![0.3, 1.1, -0.7], vec![2.0, -0.5, 1.0], vec![1.7, 2.2, 0.1]];
        let x = Matrix::from_rows(&rows);
        let batch = e.evaluate(&x).unwrap();
        for (r, row) in rows.iter().enumerate() {
            match e.eval_point(row) {
                Some(v) => assert_eq!(v.to_bits(), batch.values[r].to_bits()),
                None => assert!(!batch.valid[r]),
            }
        }
    }
}
