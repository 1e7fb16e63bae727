//! End-to-end driver: structure detection, per-factor modelling, and global
//! assembly by linear least squares.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engines::{fit_factor, EngineConfig, EngineKind, FactorModel, FitMode};
use crate::error::{Error, Result};
use crate::expr::{Evaluation, Expression};
use crate::matrix::Matrix;
use crate::oracle::Oracle;
use crate::rng::{derive_seed, rng_for};
use crate::sampling::{
    build_factor_slices, difference_response, draw_base_sample, draw_valid_sample, Anchors,
    SamplingPlan, SliceMode, TrainingData,
};
use crate::separability::{
    detect_structure, Detection, DetectionConfig, SeparableStructure, StructureDocument,
    MAX_ANCHOR_ATTEMPTS,
};
use crate::stats;

/// Rows of the fresh sample used for the validation MSE.
pub const VALIDATION_SAMPLES: usize = 1000;

const FIT_STREAM: u64 = 0xF17;
const VALIDATION_STREAM: u64 = 0x7A1;

/// `beta0 + sum_i beta_i prod_j psi_ij(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledModel {
    pub structure: SeparableStructure,
    /// Factor shapes in block order, factors in order within each block.
    pub factors: Vec<FactorModel>,
    /// `beta0, beta1, .., beta_p`.
    pub coefficients: Vec<f64>,
    pub validation_mse: f64,
    /// Set when the design matrix was rank deficient and the minimum-norm
    /// solution was used.
    pub collinear: bool,
}

impl AssembledModel {
    /// Constant model `beta0` for a target without variation.
    pub fn constant(dim: usize, beta0: f64) -> Self {
        Self {
            structure: SeparableStructure::constant(dim),
            factors: Vec::new(),
            coefficients: vec![beta0],
            validation_mse: f64::NAN,
            collinear: false,
        }
    }

    fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        if self.factors.is_empty() {
            return Vec::new();
        }
        let mut start = 0;
        (0..self.structure.block_count())
            .map(|i| {
                let r = start..start + self.structure.factor_count(i);
                start = r.end;
                r
            })
            .collect()
    }

    /// Block products `prod_j psi_ij` on every row of `x`.
    fn block_columns(&self, x: &Matrix<f64>) -> Result<Vec<Vec<f64>>> {
        self.block_ranges()
            .into_iter()
            .map(|range| {
                let mut prod: Option<Vec<f64>> = None;
                for f in &self.factors[range] {
                    let v = f.expression.evaluate(x)?.values;
                    prod = Some(match prod {
                        None => v,
                        Some(p) => p.iter().zip(&v).map(|(a, b)| a * b).collect(),
                    });
                }
                Ok(prod.unwrap_or_default())
            })
            .collect()
    }

    /// Structured evaluation, in the same operation order as
    /// [`AssembledModel::expression`].
    pub fn evaluate(&self, x: &Matrix<f64>) -> Result<Evaluation<f64>> {
        if x.ncols() != self.structure.dim() {
            return Err(Error::DimensionMismatch {
                index: x.ncols(),
                dim: self.structure.dim(),
            });
        }
        let cols = self.block_columns(x)?;
        let mut acc = vec![self.coefficients[0]; x.nrows()];
        for (col, &beta) in cols.iter().zip(&self.coefficients[1..]) {
            for (a, p) in acc.iter_mut().zip(col) {
                *a += beta * p;
            }
        }
        for v in &mut acc {
            if !v.is_finite() {
                *v = f64::NAN;
            }
        }
        Ok(Evaluation::from_values(acc))
    }

    /// The model as one expression tree.
    pub fn expression(&self) -> Expression {
        let mut acc = Expression::Const(self.coefficients[0]);
        for (range, &beta) in self.block_ranges().into_iter().zip(&self.coefficients[1..]) {
            let mut prod: Option<Expression> = None;
            for f in &self.factors[range] {
                let e = f.expression.clone();
                prod = Some(match prod {
                    None => e,
                    Some(p) => Expression::mul(p, e),
                });
            }
            let term = Expression::mul(Expression::Const(beta), prod.unwrap());
            acc = Expression::add(acc, term);
        }
        acc
    }
}

/// Least squares with a leading intercept column. Returns the coefficients
/// and whether the design was rank deficient.
fn fit_coefficients(columns: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, bool)> {
    let rows = y.len();
    let q = columns.len() + 1;
    if rows < q {
        return Err(Error::InsufficientData {
            valid: rows,
            total: rows,
            required: q,
        });
    }
    let mut scale = vec![1.0; q];
    for (k, c) in columns.iter().enumerate() {
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt() / (rows as f64).sqrt();
        scale[k + 1] = if n > 0.0 && n.is_finite() { n } else { 1.0 };
    }
    let design = DMatrix::from_fn(rows, q, |r, c| {
        if c == 0 {
            1.0
        } else {
            columns[c - 1][r] / scale[c]
        }
    });
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let sol = svd
        .solve(&DVector::from_column_slice(y), tol)
        .map_err(|e| Error::InvalidStructure(e.to_string()))?;
    let beta = (0..q).map(|k| sol[k] / scale[k]).collect();
    Ok((beta, rank < q))
}

/// Fits `beta` on `x_fit` and reports the MSE on `x_validation`.
///
/// Rows where the oracle or any factor is invalid are dropped.
pub fn assemble_global(
    oracle: &dyn Oracle<f64>,
    structure: &SeparableStructure,
    factor_models: Vec<FactorModel>,
    x_fit: &Matrix<f64>,
    x_validation: &Matrix<f64>,
) -> Result<AssembledModel> {
    let n = structure.dim();
    if factor_models.len() != structure.total_factors() {
        return Err(Error::InvalidStructure(format!(
            "expected {} factor models, got {}",
            structure.total_factors(),
            factor_models.len()
        )));
    }
    for ((_, _, vars), m) in structure.iter_factors().zip(&factor_models) {
        if let Some(v) = m.expression.variables().iter().find(|v| !vars.contains(v)) {
            return Err(Error::InvalidStructure(format!(
                "factor model uses x{} outside its factor",
                v + 1
            )));
        }
    }
    if x_fit.ncols() != n || x_validation.ncols() != n {
        return Err(Error::DimensionMismatch {
            index: x_fit.ncols(),
            dim: n,
        });
    }
    let mut model = AssembledModel {
        structure: structure.clone(),
        factors: factor_models,
        coefficients: Vec::new(),
        validation_mse: f64::NAN,
        collinear: false,
    };
    let y = oracle.evaluate(x_fit);
    let cols = model.block_columns(x_fit)?;
    let keep: Vec<bool> = (0..x_fit.nrows())
        .map(|r| y.valid[r] && cols.iter().all(|c| c[r].is_finite()))
        .collect();
    let filter = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&a, _)| a)
            .collect()
    };
    let cols: Vec<Vec<f64>> = cols.iter().map(|c| filter(c)).collect();
    let (beta, collinear) = fit_coefficients(&cols, &filter(&y.values))?;
    model.coefficients = beta;
    model.collinear = collinear;
    model.validation_mse = validation_mse(oracle, &model, x_validation)?;
    Ok(model)
}

/// Mean squared error against the oracle over rows valid for both.
pub fn validation_mse(
    oracle: &dyn Oracle<f64>,
    model: &AssembledModel,
    x: &Matrix<f64>,
) -> Result<f64> {
    let truth = oracle.evaluate(x);
    let pred = model.evaluate(x)?;
    let sq: Vec<f64> = (0..x.nrows())
        .filter(|&r| truth.valid[r])
        .map(|r| {
            let d = pred.values[r] - truth.values[r];
            if d.is_finite() {
                d * d
            } else {
                f64::INFINITY
            }
        })
        .collect();
    if sq.is_empty() {
        return Err(Error::OracleFailure);
    }
    Ok(stats::mean(&sq))
}

/// Per-factor record kept in [`BBPResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDiagnostics {
    pub block: usize,
    pub factor: usize,
    pub variables: Vec<usize>,
    pub mode: SliceMode,
    /// Anchor draws used, including the accepted one.
    pub anchor_attempts: usize,
    pub retained_rows: usize,
    pub total_rows: usize,
    pub seconds: f64,
}

fn training_data(
    oracle: &dyn Oracle<f64>,
    structure: &SeparableStructure,
    block: usize,
    factor: usize,
    plan: &SamplingPlan<f64>,
) -> Result<(TrainingData<f64>, usize)> {
    let x = draw_base_sample(plan)?;
    let mut rng = rng_for(plan.seed, &[0xA7C, block as u64, factor as u64]);
    let mut last = Error::DegenerateAnchors("no anchor draw succeeded".into());
    for attempt in 1..=MAX_ANCHOR_ATTEMPTS {
        let anchors = Anchors::draw(&plan.domain, &mut rng);
        let slices = match build_factor_slices(&x, &plan.domain, structure, block, factor, &anchors) {
            Ok(s) => s,
            Err(e @ Error::DegenerateAnchors(_)) => {
                last = e;
                continue;
            }
            Err(e) => return Err(e),
        };
        let data = match difference_response(oracle, &slices) {
            Ok(d) => d,
            Err(e @ (Error::InsufficientData { .. } | Error::OracleFailure)) => {
                last = e;
                continue;
            }
            Err(e) => return Err(e),
        };
        if data.retained_fraction() < 0.5 {
            last = Error::InsufficientData {
                valid: data.retained,
                total: data.total,
                required: data.total.div_ceil(2),
            };
            continue;
        }
        if data.mode == SliceMode::MultiFactor && stats::std_dev(&data.f_train) == 0.0 {
            last = Error::DegenerateAnchors(format!(
                "factor ({}, {}) response does not vary",
                block + 1,
                factor + 1
            ));
            continue;
        }
        return Ok((data, attempt));
    }
    Err(last)
}

fn factor_seed(config: &EngineConfig, block: usize, factor: usize) -> u64 {
    derive_seed(config.seed, &[block as u64, factor as u64])
}

/// Configuration used when the library engine cannot take a factor.
pub fn fallback_config(config: &EngineConfig) -> EngineConfig {
    EngineConfig {
        kind: EngineKind::Gp,
        population: None,
        generations: None,
        eps_target: None,
        ..config.clone()
    }
}

fn model_factor_detailed(
    oracle: &dyn Oracle<f64>,
    structure: &SeparableStructure,
    block: usize,
    factor: usize,
    engine: &EngineConfig,
    plan: &SamplingPlan<f64>,
) -> Result<(FactorModel, FactorDiagnostics)> {
    let start = Instant::now();
    let (data, attempts) = training_data(oracle, structure, block, factor, plan)?;
    let mode = FitMode::from(data.mode);
    let config = engine.with_seed(factor_seed(engine, block, factor));
    let model = match fit_factor(&data.x_train, &data.f_train, mode, &config) {
        Err(Error::UnsupportedArity(_)) if config.kind == EngineKind::Library => {
            let mut m = fit_factor(&data.x_train, &data.f_train, mode, &fallback_config(&config))?;
            m.fallback = true;
            m
        }
        other => other?,
    };
    let variables = structure.factor(block, factor).to_vec();
    let diagnostics = FactorDiagnostics {
        block,
        factor,
        variables: variables.clone(),
        mode: data.mode,
        anchor_attempts: attempts,
        retained_rows: data.retained,
        total_rows: data.total,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model.into_global(&variables), diagnostics))
}

/// Fits the shape of factor `(block, factor)` from paired slices of a base
/// sample drawn from `plan`. The fitted scale (and intercept) is discarded;
/// the returned expression uses global variable indices.
pub fn model_factor(
    oracle: &dyn Oracle<f64>,
    structure: &SeparableStructure,
    block: usize,
    factor: usize,
    engine: &EngineConfig,
    plan: &SamplingPlan<f64>,
) -> Result<FactorModel> {
    model_factor_detailed(oracle, structure, block, factor, engine, plan).map(|(m, _)| m)
}

/// Wall-clock seconds per stage; `t` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t: f64,
}

impl Timings {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Self {
        Self {
            t1,
            t2,
            t3,
            t: t1 + t2 + t3,
        }
    }

    /// Share of the total spent in detection.
    pub fn detection_ratio(&self) -> f64 {
        if self.t > 0.0 {
            self.t1 / self.t
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResultFlags {
    pub below_tolerance: bool,
    pub gp_fallback: bool,
    pub collinear: bool,
    pub degenerate_constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBPResult {
    pub structure: StructureDocument,
    pub model: AssembledModel,
    /// The assembled model as text.
    pub expression: String,
    pub timings: Timings,
    pub factors: Vec<FactorDiagnostics>,
    pub detection: Detection,
    pub flags: ResultFlags,
    pub sampling_seed: u64,
    pub detection_config: DetectionConfig,
    pub engine_config: EngineConfig,
}

impl BBPResult {
    pub fn validation_mse(&self) -> f64 {
        self.model.validation_mse
    }
}

/// Fresh fitting and validation samples derived from `plan`.
pub fn assembly_samples(
    oracle: &dyn Oracle<f64>,
    plan: &SamplingPlan<f64>,
) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let fit_plan = plan.with_seed(derive_seed(plan.seed, &[FIT_STREAM]));
    let val_plan = SamplingPlan::new(
        plan.domain.clone(),
        VALIDATION_SAMPLES,
        derive_seed(plan.seed, &[VALIDATION_STREAM]),
    )?;
    let (x_fit, _) = draw_valid_sample(oracle, &fit_plan)?;
    let (x_val, _) = draw_valid_sample(oracle, &val_plan)?;
    Ok((x_fit, x_val))
}

/// Detects the structure (t1), fits every factor (t2), and assembles the
/// global model (t3).
pub fn run_bbp(
    oracle: &dyn Oracle<f64>,
    detection: &DetectionConfig,
    engine: &EngineConfig,
    plan: &SamplingPlan<f64>,
) -> Result<BBPResult> {
    plan.validate()?;
    engine.validate()?;
    if oracle.dim() != plan.dim() {
        return Err(Error::DimensionMismatch {
            index: plan.dim(),
            dim: oracle.dim(),
        });
    }
    let start = Instant::now();
    let found = detect_structure(oracle, &plan.domain, detection)?;
    let t1 = start.elapsed().as_secs_f64();
    let structure = found.structure.clone();

    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = structure.iter_factors().map(|(i, j, _)| (i, j)).collect();
    let fitted: Vec<(FactorModel, FactorDiagnostics)> = if structure.is_degenerate_constant() {
        Vec::new()
    } else {
        jobs.par_iter()
            .map(|&(i, j)| model_factor_detailed(oracle, &structure, i, j, engine, plan))
            .collect::<Result<_>>()?
    };
    let t2 = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (x_fit, x_val) = assembly_samples(oracle, plan)?;
    let (models, diagnostics): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let model = if structure.is_degenerate_constant() {
        let y = oracle.evaluate(&x_fit);
        let mut m = AssembledModel::constant(structure.dim(), stats::mean(&y.values));
        m.validation_mse = validation_mse(oracle, &m, &x_val)?;
        m
    } else {
        assemble_global(oracle, &structure, models, &x_fit, &x_val)?
    };
    let t3 = start.elapsed().as_secs_f64();

    let flags = ResultFlags {
        below_tolerance: !(model.validation_mse <= engine.eps()),
        gp_fallback: model.factors.iter().any(|f| f.fallback),
        collinear: model.collinear,
        degenerate_constant: structure.is_degenerate_constant(),
    };
    Ok(BBPResult {
        structure: structure.document(detection.epsilon, detection.seed),
        expression: model.expression().to_string(),
        model,
        timings: Timings::new(t1, t2, t3),
        factors: diagnostics,
        detection: found,
        flags,
        sampling_seed: plan.seed,
        detection_config: detection.clone(),
        engine_config: engine.clone(),
    })
}
