//! Small statistics kernels shared by the separability tests and the engines.

use crate::scalar::Scalar;

pub fn mean<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        return T::nan();
    }
    v.iter().fold(T::zero(), |a, &b| a + b) / T::of(v.len() as f64)
}

/// Population standard deviation.
pub fn std_dev<T: Scalar>(v: &[T]) -> T {
    let m = mean(v);
    let ss = v.iter().fold(T::zero(), |a, &b| a + (b - m) * (b - m));
    (ss / T::of(v.len() as f64)).sqrt()
}

pub fn mean_abs<T: Scalar>(v: &[T]) -> T {
    mean(&v.iter().map(|x| x.abs()).collect::<Vec<_>>())
}

/// Spread of `v` relative to its magnitude: `std / mean(|v|)`.
pub fn relative_spread<T: Scalar>(v: &[T]) -> T {
    let scale = mean_abs(v);
    if scale == T::zero() {
        return T::zero();
    }
    std_dev(v) / scale
}

/// Pearson correlation; NaN when either input has zero variance.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return T::nan();
    }
    (sab / (saa.sqrt() * sbb.sqrt())).max(-T::one()).min(T::one())
}

/// Ordinary least squares `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub intercept: T,
    pub slope: T,
}

pub fn fit_line<T: Scalar>(x: &[T], y: &[T]) -> LineFit<T> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
    }
    let slope = if sxx == T::zero() { T::zero() } else { sxy / sxx };
    LineFit {
        intercept: my - slope * mx,
        slope,
    }
}

/// Least-squares scale `y ≈ slope * x` through the origin.
pub fn fit_through_origin<T: Scalar>(x: &[T], y: &[T]) -> T {
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + a * b;
        sxx = sxx + a * a;
    }
    if sxx == T::zero() {
        T::zero()
    } else {
        sxy / sxx
    }
}

pub fn mse<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    if n == 0 {
        return T::nan();
    }
    let s = a
        .iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    s / T::of(n as f64)
}
