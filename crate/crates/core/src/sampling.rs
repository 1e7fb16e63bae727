//! Base samples, paired factor slices, and difference responses used to train
//! one factor in isolation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle::Oracle;
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::separability::SeparableStructure;
use crate::stats;

/// Minimum number of rows a training set must keep.
pub const MIN_TRAINING_ROWS: usize = 10;

/// Axis-aligned box `[lo_k, hi_k]` per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox<T> {
    bounds: Vec<(T, T)>,
}

impl<T: Scalar> DomainBox<T> {
    pub fn new(bounds: Vec<(T, T)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidPlan("domain has no variables".into()));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidPlan(format!(
                    "empty or unbounded interval for x{}",
                    k + 1
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn interval(&self, var: usize) -> (T, T) {
        self.bounds[var]
    }

    pub fn contains(&self, var: usize, v: T) -> bool {
        let (lo, hi) = self.bounds[var];
        v >= lo && v <= hi
    }

    pub(crate) fn draw<R: Rng>(&self, var: usize, rng: &mut R) -> T {
        let (lo, hi) = self.bounds[var];
        let (lo, hi) = (lo.as_f64(), hi.as_f64());
        T::of(rng.gen_range(lo..=hi))
    }

    /// Uniform draw from the central `fraction` of the interval.
    pub(crate) fn draw_central<R: Rng>(&self, var: usize, fraction: f64, rng: &mut R) -> T {
        let (lo, hi) = self.bounds[var];
        let (lo, hi) = (lo.as_f64(), hi.as_f64());
        let margin = 0.5 * (1.0 - fraction) * (hi - lo);
        T::of(rng.gen_range(lo + margin..=hi - margin))
    }

    /// Compact description such as `[-3,3]^3` or `[-3,3]x[0.1,3]`.
    pub fn describe(&self) -> String {
        let first = self.bounds[0];
        if self.bounds.iter().all(|&b| b == first) {
            format!("[{},{}]^{}", first.0, first.1, self.dim())
        } else {
            self.bounds
                .iter()
                .map(|(lo, hi)| format!("[{lo},{hi}]"))
                .collect::<Vec<_>>()
                .join("x")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan<T> {
    pub domain: DomainBox<T>,
    pub samples: usize,
    pub seed: u64,
}

impl<T: Scalar> SamplingPlan<T> {
    pub fn new(domain: DomainBox<T>, samples: usize, seed: u64) -> Result<Self> {
        let plan = Self {
            domain,
            samples,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Plan with the default sample count of 100 per variable.
    pub fn with_default_samples(domain: DomainBox<T>, seed: u64) -> Self {
        let samples = 100 * domain.dim();
        Self {
            domain,
            samples,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidPlan(format!(
                "need at least 2 samples, got {}",
                self.samples
            )));
        }
        DomainBox::new(self.domain.bounds.clone()).map(|_| ())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Uniform i.i.d. sample of `plan.samples` points inside the domain box.
pub fn draw_base_sample<T: Scalar>(plan: &SamplingPlan<T>) -> Result<Matrix<T>> {
    plan.validate()?;
    let mut rng = rng_for(plan.seed, &[0x5a4d_504c]);
    let n = plan.dim();
    let mut m = Matrix::zeros(plan.samples, n);
    for r in 0..plan.samples {
        for c in 0..n {
            m.set(r, c, plan.domain.draw(c, &mut rng));
        }
    }
    Ok(m)
}

/// Sample where every row is valid for `oracle`, obtained by redrawing
/// rejected rows. Returns the matrix and the oracle values on it.
pub fn draw_valid_sample<T: Scalar>(
    oracle: &dyn Oracle<T>,
    plan: &SamplingPlan<T>,
) -> Result<(Matrix<T>, Vec<T>)> {
    let mut x = draw_base_sample(plan)?;
    let mut y = oracle.evaluate(&x);
    let mut rng = rng_for(plan.seed, &[0x7265_6a65]);
    let n = plan.dim();
    for _round in 0..200 {
        let bad: Vec<usize> = (0..x.nrows()).filter(|&r| !y.valid[r]).collect();
        if bad.is_empty() {
            return Ok((x, y.values));
        }
        let mut fresh = Matrix::zeros(bad.len(), n);
        for r in 0..bad.len() {
            for c in 0..n {
                fresh.set(r, c, plan.domain.draw(c, &mut rng));
            }
        }
        let fy = oracle.evaluate(&fresh);
        for (k, &r) in bad.iter().enumerate() {
            for c in 0..n {
                x.set(r, c, fresh.get(k, c));
            }
            y.values[r] = fy.values[k];
            y.valid[r] = fy.valid[k];
        }
    }
    if y.valid_count() == 0 {
        return Err(Error::OracleFailure);
    }
    Err(Error::InsufficientData {
        valid: y.valid_count(),
        total: x.nrows(),
        required: x.nrows(),
    })
}

/// Anchor points for factor slicing, stored as full-length points; only the
/// relevant coordinates are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchors<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub g: Vec<T>,
}

impl<T: Scalar> Anchors<T> {
    /// Draws `a`, `b`, `g` uniformly from the central 60% of every interval.
    pub fn draw<R: Rng>(domain: &DomainBox<T>, rng: &mut R) -> Self {
        let draw = |rng: &mut R| -> Vec<T> {
            (0..domain.dim())
                .map(|v| domain.draw_central(v, 0.6, rng))
                .collect()
        };
        let a = draw(rng);
        let b = draw(rng);
        let g = draw(rng);
        Self { a, b, g }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceMode {
    /// The block has other factors; the response is `f(X1) - f(X2)`.
    MultiFactor,
    /// The block is this single factor; the response is `f(X1)` and the fit
    /// needs an intercept.
    SingleFactor,
}

/// Paired evaluation matrices for one factor.
///
/// `x1` and `x2` share the free columns and the out-of-block columns (all at
/// `anchor_g`); they differ only on in-block complement columns (`anchor_a`
/// in `x1`, `anchor_b` in `x2`).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSlices<T> {
    pub x1: Matrix<T>,
    pub x2: Matrix<T>,
    /// Free variables (the factor's own), sorted.
    pub free: Vec<usize>,
    /// In-block variables not in the factor.
    pub complement: Vec<usize>,
    /// Variables of other blocks.
    pub outside: Vec<usize>,
    pub anchor_a: Vec<T>,
    pub anchor_b: Vec<T>,
    pub anchor_g: Vec<T>,
    pub x_train: Matrix<T>,
    pub mode: SliceMode,
}

pub fn build_factor_slices<T: Scalar>(
    x: &Matrix<T>,
    domain: &DomainBox<T>,
    structure: &SeparableStructure,
    block: usize,
    factor: usize,
    anchors: &Anchors<T>,
) -> Result<FactorSlices<T>> {
    let n = structure.dim();
    if x.ncols() != n || domain.dim() != n {
        return Err(Error::DimensionMismatch {
            index: x.ncols().max(domain.dim()),
            dim: n,
        });
    }
    if block >= structure.block_count() || factor >= structure.factor_count(block) {
        return Err(Error::InvalidStructure(format!(
            "factor ({}, {}) does not exist",
            block + 1,
            factor + 1
        )));
    }
    let free = structure.factor(block, factor).to_vec();
    let in_block = structure.block_variables(block);
    let complement: Vec<usize> = in_block
        .iter()
        .copied()
        .filter(|v| !free.contains(v))
        .collect();
    let outside: Vec<usize> = (0..n).filter(|v| !in_block.contains(v)).collect();

    for (name, point, vars) in [
        ("A", &anchors.a, &complement),
        ("B", &anchors.b, &complement),
        ("G", &anchors.g, &outside),
    ] {
        for &v in vars {
            if !domain.contains(v, point[v]) {
                return Err(Error::DegenerateAnchors(format!(
                    "anchor {name} is outside the domain on x{}",
                    v + 1
                )));
            }
        }
    }
    if !complement.is_empty() && complement.iter().all(|&v| anchors.a[v] == anchors.b[v]) {
        return Err(Error::DegenerateAnchors(
            "anchors A and B coincide on the block complement".into(),
        ));
    }

    let mut x1 = x.clone();
    for &v in &outside {
        x1.fill_column(v, anchors.g[v]);
    }
    let mut x2 = x1.clone();
    for &v in &complement {
        x1.fill_column(v, anchors.a[v]);
        x2.fill_column(v, anchors.b[v]);
    }
    let mode = if complement.is_empty() {
        SliceMode::SingleFactor
    } else {
        SliceMode::MultiFactor
    };
    Ok(FactorSlices {
        x_train: x.select_columns(&free),
        anchor_a: complement.iter().map(|&v| anchors.a[v]).collect(),
        anchor_b: complement.iter().map(|&v| anchors.b[v]).collect(),
        anchor_g: outside.iter().map(|&v| anchors.g[v]).collect(),
        x1,
        x2,
        free,
        complement,
        outside,
        mode,
    })
}

/// Training set for one factor after dropping invalid rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData<T> {
    pub x_train: Matrix<T>,
    pub f_train: Vec<T>,
    pub mode: SliceMode,
    pub retained: usize,
    pub total: usize,
}

impl<T: Scalar> TrainingData<T> {
    pub fn retained_fraction(&self) -> f64 {
        self.retained as f64 / self.total.max(1) as f64
    }

    /// Spread of the response relative to its magnitude.
    pub fn relative_spread(&self) -> T {
        stats::relative_spread(&self.f_train)
    }
}

/// Training response for a factor: `f(X1) - f(X2)` in multi-factor mode,
/// `f(X1)` in single-factor mode. Rows invalid in either evaluation are
/// dropped from both the inputs and the response.
pub fn difference_response<T: Scalar>(
    oracle: &dyn Oracle<T>,
    slices: &FactorSlices<T>,
) -> Result<TrainingData<T>> {
    let e1 = oracle.evaluate(&slices.x1);
    let (values, keep): (Vec<T>, Vec<bool>) = match slices.mode {
        SliceMode::SingleFactor => (e1.values.clone(), e1.valid.clone()),
        SliceMode::MultiFactor => {
            let e2 = oracle.evaluate(&slices.x2);
            e1.values
                .iter()
                .zip(&e2.values)
                .zip(e1.valid.iter().zip(&e2.valid))
                .map(|((&a, &b), (&va, &vb))| (a - b, va && vb))
                .unzip()
        }
    };
    let total = values.len();
    let retained = keep.iter().filter(|&&k| k).count();
    if retained == 0 {
        return Err(Error::OracleFailure);
    }
    if retained < MIN_TRAINING_ROWS {
        return Err(Error::InsufficientData {
            valid: retained,
            total,
            required: MIN_TRAINING_ROWS,
        });
    }
    let f_train = values
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&v, _)| v)
        .collect();
    Ok(TrainingData {
        x_train: slices.x_train.filter_rows(&keep),
        f_train,
        mode: slices.mode,
        retained,
        total,
    })
}
