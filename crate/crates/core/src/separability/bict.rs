//! Bi-correlation tests.
//!
//! A test varies one set of variables over shared random samples while a
//! second set is pinned at two (additive) or three (multiplicative) anchor
//! points; every remaining variable sits at a context point. The linear
//! relation between the resulting response vectors decides separability.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle::Oracle;
use crate::rng::rng_for;
use crate::sampling::{DomainBox, MIN_TRAINING_ROWS};
use crate::scalar::Scalar;
use crate::stats;

/// Redraws allowed when anchors make a slice degenerate.
pub const MAX_ANCHOR_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Soft threshold: correlations within `epsilon` of +-1 count as exact.
    pub epsilon: f64,
    /// Independent anchor/context draws per test; one failure is decisive.
    pub repetitions: usize,
    /// Rows per test slice.
    pub samples: usize,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            repetitions: 3,
            samples: 100,
            seed: 0x0BB9,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConfig("epsilon must lie in (0, 1)".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        if self.samples < MIN_TRAINING_ROWS {
            return Err(Error::InvalidConfig(format!(
                "samples must be at least {MIN_TRAINING_ROWS}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    AdditiveSeparable,
    MultiplicativeSeparable,
    NotSeparable,
    Degenerate,
}

/// Outcome of one bi-correlation test, reporting the least favourable
/// repetition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiCTVerdict {
    pub correlation: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Difference-constancy (additive) or zero-intercept (multiplicative)
    /// statistic; compared against `epsilon`.
    pub statistic: f64,
    pub kind: VerdictKind,
}

impl BiCTVerdict {
    fn degenerate() -> Self {
        Self {
            correlation: 0.0,
            slope: 0.0,
            intercept: 0.0,
            statistic: 0.0,
            kind: VerdictKind::Degenerate,
        }
    }

    pub fn is_separable(&self) -> bool {
        matches!(
            self.kind,
            VerdictKind::AdditiveSeparable | VerdictKind::MultiplicativeSeparable
        )
    }
}

/// Which variables vary, which are anchored, and where the rest sit.
#[derive(Debug, Clone)]
pub(crate) struct Slice<'a, T> {
    pub varying: &'a [usize],
    pub anchored: &'a [usize],
    /// Full-length point; read only outside `varying` and `anchored`.
    pub context: &'a [T],
}

fn draw_anchor<T: Scalar>(domain: &DomainBox<T>, vars: &[usize], rng: &mut ChaCha8Rng) -> Vec<T> {
    vars.iter().map(|&v| domain.draw(v, rng)).collect()
}

/// Anchors far enough apart that the responses differ in a measurable way.
fn separated<T: Scalar>(domain: &DomainBox<T>, vars: &[usize], a: &[T], b: &[T]) -> bool {
    vars.iter().enumerate().any(|(k, &v)| {
        let (lo, hi) = domain.interval(v);
        ((a[k] - b[k]) / (hi - lo)).abs() >= T::of(0.1)
    })
}

fn draw_anchors<T: Scalar>(
    domain: &DomainBox<T>,
    vars: &[usize],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut cand = draw_anchor(domain, vars, rng);
        for _ in 0..20 {
            if out.iter().all(|p| separated(domain, vars, p, &cand)) {
                break;
            }
            cand = draw_anchor(domain, vars, rng);
        }
        out.push(cand);
    }
    out
}

/// Evaluates the slice at each anchor on shared varying samples. Returns the
/// responses restricted to rows valid under every anchor.
fn evaluate_slice<T: Scalar>(
    oracle: &dyn Oracle<T>,
    domain: &DomainBox<T>,
    slice: &Slice<'_, T>,
    anchors: &[Vec<T>],
    rows: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec<T>>> {
    let n = oracle.dim();
    let mut base = Matrix::zeros(rows, n);
    for r in 0..rows {
        for c in 0..n {
            base.set(r, c, slice.context[c]);
        }
        for &v in slice.varying {
            base.set(r, v, domain.draw(v, rng));
        }
    }
    let evals: Vec<_> = anchors
        .iter()
        .map(|anchor| {
            let mut x = base.clone();
            for (k, &v) in slice.anchored.iter().enumerate() {
                x.fill_column(v, anchor[k]);
            }
            oracle.evaluate(&x)
        })
        .collect();
    let keep: Vec<bool> = (0..rows)
        .map(|r| evals.iter().all(|e| e.valid[r]))
        .collect();
    if keep.iter().filter(|&&k| k).count() < MIN_TRAINING_ROWS {
        return None;
    }
    Some(
        evals
            .into_iter()
            .map(|e| {
                e.values
                    .into_iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(v, _)| v)
                    .collect()
            })
            .collect(),
    )
}

/// `std(d) / max(|mean(d)|, 1e-3 * scale)` for `d = f1 - f2`.
pub fn difference_constancy<T: Scalar>(f1: &[T], f2: &[T]) -> T {
    let d: Vec<T> = f1.iter().zip(f2).map(|(&a, &b)| a - b).collect();
    let scale = stats::std_dev(f1).max(stats::std_dev(f2));
    let denom = stats::mean(&d)
        .abs()
        .max(T::of(1e-3) * scale)
        .max(T::min_positive_value());
    stats::std_dev(&d) / denom
}

/// `|intercept| / (|slope| * std(d1))` of the regression `d2 = a + b d1`.
pub fn zero_intercept_statistic<T: Scalar>(d1: &[T], d2: &[T]) -> (T, stats::LineFit<T>) {
    let fit = stats::fit_line(d1, d2);
    let denom = fit.slope.abs() * stats::std_dev(d1) + T::min_positive_value();
    (fit.intercept.abs() / denom, fit)
}

/// One additive repetition; `None` when the slice was degenerate after all
/// anchor redraws.
pub(crate) fn additive_repetition<T: Scalar>(
    oracle: &dyn Oracle<T>,
    domain: &DomainBox<T>,
    slice: &Slice<'_, T>,
    config: &DetectionConfig,
    rng: &mut ChaCha8Rng,
) -> Option<BiCTVerdict> {
    let eps = T::of(config.epsilon);
    for _ in 0..MAX_ANCHOR_ATTEMPTS {
        let anchors = draw_anchors(domain, slice.anchored, 2, rng);
        let Some(f) = evaluate_slice(oracle, domain, slice, &anchors, config.samples, rng) else {
            continue;
        };
        let (f1, f2) = (&f[0], &f[1]);
        if stats::relative_spread(f1) < eps || stats::relative_spread(f2) < eps {
            continue;
        }
        let rho = stats::pearson(f1, f2);
        let fit = stats::fit_line(f1, f2);
        let stat = difference_constancy(f1, f2);
        let additive = stat < eps && rho.abs() >= T::one() - eps;
        return Some(BiCTVerdict {
            correlation: rho.as_f64(),
            slope: fit.slope.as_f64(),
            intercept: fit.intercept.as_f64(),
            statistic: stat.as_f64(),
            kind: if additive {
                VerdictKind::AdditiveSeparable
            } else {
                VerdictKind::NotSeparable
            },
        });
    }
    None
}

/// One multiplicative repetition with anchors A, B, C.
pub(crate) fn multiplicative_repetition<T: Scalar>(
    oracle: &dyn Oracle<T>,
    domain: &DomainBox<T>,
    slice: &Slice<'_, T>,
    config: &DetectionConfig,
    rng: &mut ChaCha8Rng,
) -> Option<BiCTVerdict> {
    let eps = T::of(config.epsilon);
    for _ in 0..MAX_ANCHOR_ATTEMPTS {
        let anchors = draw_anchors(domain, slice.anchored, 3, rng);
        let Some(f) = evaluate_slice(oracle, domain, slice, &anchors, config.samples, rng) else {
            continue;
        };
        let d1: Vec<T> = f[0].iter().zip(&f[1]).map(|(&a, &b)| a - b).collect();
        let d2: Vec<T> = f[0].iter().zip(&f[2]).map(|(&a, &c)| a - c).collect();
        let magnitude = stats::mean_abs(&f[0])
            .max(stats::mean_abs(&f[1]))
            .max(stats::mean_abs(&f[2]));
        let spread_ok = |d: &[T]| stats::std_dev(d) >= eps * magnitude && magnitude > T::zero();
        if !spread_ok(&d1) || !spread_ok(&d2) {
            continue;
        }
        let rho = stats::pearson(&d1, &d2);
        let (stat, fit) = zero_intercept_statistic(&d1, &d2);
        let separable = stat < eps && rho.abs() >= T::one() - eps;
        return Some(BiCTVerdict {
            correlation: rho.as_f64(),
            slope: fit.slope.as_f64(),
            intercept: fit.intercept.as_f64(),
            statistic: stat.as_f64(),
            kind: if separable {
                VerdictKind::MultiplicativeSeparable
            } else {
                VerdictKind::NotSeparable
            },
        });
    }
    None
}

/// Folds repetitions: any non-separable repetition decides; all-degenerate
/// gives a degenerate verdict; otherwise the worst separable repetition.
pub(crate) fn combine(reps: Vec<Option<BiCTVerdict>>) -> BiCTVerdict {
    let informative: Vec<BiCTVerdict> = reps.into_iter().flatten().collect();
    if let Some(v) = informative
        .iter()
        .find(|v| v.kind == VerdictKind::NotSeparable)
    {
        return *v;
    }
    informative
        .into_iter()
        .max_by(|a, b| a.statistic.total_cmp(&b.statistic))
        .unwrap_or_else(BiCTVerdict::degenerate)
}

fn check_subset(dim: usize, subset: &[usize], within: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::InvalidStructure("test subset is empty".into()));
    }
    if let Some(&v) = subset.iter().find(|&&v| v >= dim || !within.contains(&v)) {
        return Err(Error::InvalidStructure(format!(
            "x{} is not part of the tested variables",
            v + 1
        )));
    }
    if subset.len() >= within.len() {
        return Err(Error::InvalidStructure(
            "test subset must be a proper subset".into(),
        ));
    }
    Ok(())
}

/// Tests whether `f(x) = g(x_S) + h(x_rest)`: the subset varies on shared
/// samples while the complement sits at two random anchors.
pub fn bict_additive<T: Scalar>(
    oracle: &dyn Oracle<T>,
    subset: &[usize],
    domain: &DomainBox<T>,
    config: &DetectionConfig,
) -> Result<BiCTVerdict> {
    config.validate()?;
    let n = oracle.dim();
    let all: Vec<usize> = (0..n).collect();
    check_subset(n, subset, &all)?;
    let complement: Vec<usize> = all.iter().copied().filter(|v| !subset.contains(v)).collect();
    let context = vec![T::zero(); n];
    let slice = Slice {
        varying: subset,
        anchored: &complement,
        context: &context,
    };
    let mut stream = vec![0xADD, n as u64];
    stream.extend(subset.iter().map(|&v| v as u64));
    let mut rng = rng_for(config.seed, &stream);
    let reps = (0..config.repetitions)
        .map(|_| additive_repetition(oracle, domain, &slice, config, &mut rng))
        .collect();
    Ok(combine(reps))
}

/// Tests whether `subset` forms a multiplicative factor inside `block`:
/// the rest of the block sits at anchors A, B, C and variables outside the
/// block at `context`. `(f_A - f_B)` and `(f_A - f_C)` must be proportional
/// with zero intercept, which cancels every additive contribution from other
/// blocks and the global constant.
pub fn bict_multiplicative<T: Scalar>(
    oracle: &dyn Oracle<T>,
    subset: &[usize],
    block: &[usize],
    context: &[T],
    domain: &DomainBox<T>,
    config: &DetectionConfig,
) -> Result<BiCTVerdict> {
    config.validate()?;
    let n = oracle.dim();
    check_subset(n, subset, block)?;
    if context.len() != n {
        return Err(Error::DimensionMismatch {
            index: context.len(),
            dim: n,
        });
    }
    let rest: Vec<usize> = block.iter().copied().filter(|v| !subset.contains(v)).collect();
    let slice = Slice {
        varying: subset,
        anchored: &rest,
        context,
    };
    let mut stream = vec![0x3A1, n as u64];
    stream.extend(subset.iter().map(|&v| v as u64));
    stream.extend(block.iter().map(|&v| 100 + v as u64));
    let mut rng = rng_for(config.seed, &stream);
    let reps = (0..config.repetitions)
        .map(|_| multiplicative_repetition(oracle, domain, &slice, config, &mut rng))
        .collect();
    Ok(combine(reps))
}

/// Random point in the domain.
pub(crate) fn random_point<T: Scalar, R: Rng>(domain: &DomainBox<T>, rng: &mut R) -> Vec<T> {
    (0..domain.dim()).map(|v| domain.draw(v, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::oracle::ExprOracle;

    fn oracle(s: &str, n: usize) -> ExprOracle {
        ExprOracle::new(parse(s).unwrap(), n).unwrap()
    }

    fn dom(n: usize) -> DomainBox<f64> {
        DomainBox::uniform(n, -3.0, 3.0).unwrap()
    }

    #[test]
    fn additive_verdicts() {
        let cfg = DetectionConfig::default();
        let v = bict_additive(&oracle("x1 + x2^2", 2), &[0], &dom(2), &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::AdditiveSeparable);
        assert!(v.correlation >= 1.0 - cfg.epsilon);
        assert!(v.statistic < cfg.epsilon);

        let v = bict_additive(&oracle("x1 * x2", 2), &[0], &dom(2), &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::NotSeparable);

        let v = bict_additive(&oracle("sin(x1 * x2)", 2), &[0], &dom(2), &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::NotSeparable);
    }

    #[test]
    fn product_is_correlated_but_not_additive() {
        // Brute force: the responses are perfectly correlated (slope A/B)
        // yet their difference is not constant.
        let cfg = DetectionConfig {
            repetitions: 1,
            ..Default::default()
        };
        let v = bict_additive(&oracle("x1 * x2", 2), &[0], &dom(2), &cfg).unwrap();
        assert!(v.correlation.abs() > 1.0 - 1e-12);
        assert!((v.slope - 1.0).abs() > 1e-3);
        assert!(v.statistic > 1e-3);
    }

    #[test]
    fn multiplicative_verdicts() {
        let cfg = DetectionConfig::default();
        let ctx = [0.0, 0.0];
        let block = [0, 1];
        let v = bict_multiplicative(&oracle("5 + x1 * x2", 2), &[0], &block, &ctx, &dom(2), &cfg)
            .unwrap();
        assert_eq!(v.kind, VerdictKind::MultiplicativeSeparable);
        let v = bict_multiplicative(&oracle("x1 * x2", 2), &[0], &block, &ctx, &dom(2), &cfg)
            .unwrap();
        assert_eq!(v.kind, VerdictKind::MultiplicativeSeparable);
        let v = bict_multiplicative(&oracle("exp(x1 * x2)", 2), &[0], &block, &ctx, &dom(2), &cfg)
            .unwrap();
        assert_eq!(v.kind, VerdictKind::NotSeparable);
    }

    #[test]
    fn baseline_from_other_block_cancels() {
        let cfg = DetectionConfig::default();
        let o = oracle("sin(x1) * exp(x2) + 3 * cos(x3)", 3);
        let ctx = [0.0, 0.0, 1.3];
        let v = bict_multiplicative(&o, &[0], &[0, 1], &ctx, &dom(3), &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::MultiplicativeSeparable);
    }

    #[test]
    fn constant_slices_are_degenerate() {
        let cfg = DetectionConfig::default();
        let v = bict_additive(&oracle("x2 + 0 * x1", 2), &[0], &dom(2), &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::Degenerate);
    }

    #[test]
    fn bad_subsets() {
        let cfg = DetectionConfig::default();
        let o = oracle("x1 + x2", 2);
        assert!(bict_additive(&o, &[], &dom(2), &cfg).is_err());
        assert!(bict_additive(&o, &[0, 1], &dom(2), &cfg).is_err());
        assert!(bict_additive(&o, &[2], &dom(2), &cfg).is_err());
    }

    #[test]
    fn f32_soft_threshold() {
        let cfg = DetectionConfig {
            epsilon: 1e-3,
            ..Default::default()
        };
        let d = DomainBox::uniform(2, -3.0f32, 3.0).unwrap();
        let v = bict_additive(&oracle("sin(x1) + x2^2", 2), &[0], &d, &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::AdditiveSeparable);
        let v = bict_additive(&oracle("sin(x1 * x2)", 2), &[0], &d, &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::NotSeparable);
    }

    #[test]
    fn config_validation() {
        let bad = DetectionConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DetectionConfig {
            repetitions: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
