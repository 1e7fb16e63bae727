//! Factor-fitting engines.
//!
//! Both engines take the local training matrix of one factor (columns are the
//! factor's variables in ascending order) and a response vector, and return a
//! [`FactorModel`] whose expression uses local variable indices. The pipeline
//! renames the variables to global indices.

mod config;
mod de;
mod gp;
mod library;
mod lm;

use serde::{Deserialize, Serialize};

pub use config::{EngineConfig, EngineKind};
pub use de::{differential_evolution, DeOutcome, DeSettings};
pub use gp::{fit_gp, GpOutcome};
pub use library::{fit_library, optimize_params, ParamFit, TemplateAttempt};
pub use lm::{levenberg_marquardt, LmOutcome};

use crate::error::Result;
use crate::expr::{Expression, TemplateId};
use crate::matrix::Matrix;
use crate::sampling::SliceMode;
use crate::stats;

/// How the response relates to the factor shape `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// `y = k * psi(x)`.
    Scaled,
    /// `y = c + k * psi(x)`; used when a block has a single factor.
    ScaledWithIntercept,
}

impl From<SliceMode> for FitMode {
    fn from(mode: SliceMode) -> Self {
        match mode {
            SliceMode::MultiFactor => FitMode::Scaled,
            SliceMode::SingleFactor => FitMode::ScaledWithIntercept,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum EngineMetadata {
    Library {
        template: TemplateId,
        /// `[k, m1, ..]` of the winning template.
        params: Vec<f64>,
        attempts: Vec<TemplateAttempt>,
    },
    Gp {
        generations: usize,
        restarts: usize,
        /// Set when the run stopped on the wall-clock limit.
        timed_out: bool,
    },
}

/// Fitted shape of one factor with its discarded scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    /// Variables the expression is written in; empty while still local.
    pub variables: Vec<usize>,
    pub expression: Expression,
    /// Mean squared residual of the scale-fitted shape on the response the
    /// engine was given (unit-scaled when called through [`fit_factor`]).
    pub mse: f64,
    /// Fitted `k`; kept for diagnostics only.
    pub local_scale: f64,
    /// Fitted intercept in [`FitMode::ScaledWithIntercept`].
    pub intercept: Option<f64>,
    pub meets_tolerance: bool,
    /// Set when the library engine handed the factor to the GP engine.
    pub fallback: bool,
    pub metadata: EngineMetadata,
}

impl FactorModel {
    /// Renames local variable `i` to `variables[i]`.
    pub fn into_global(mut self, variables: &[usize]) -> Self {
        self.expression = self.expression.remap_variables(variables);
        self.variables = variables.to_vec();
        self
    }

    pub fn arity(&self) -> usize {
        self.expression.variables().len()
    }
}

/// A factor-fitting engine.
pub trait FactorEngine: Sync {
    fn fit(&self, x: &Matrix<f64>, y: &[f64], mode: FitMode) -> Result<FactorModel>;
}

/// Template library sequence search.
#[derive(Debug, Clone)]
pub struct LibraryEngine(pub EngineConfig);

/// Single-tree genetic programming.
#[derive(Debug, Clone)]
pub struct GpEngine(pub EngineConfig);

impl FactorEngine for LibraryEngine {
    fn fit(&self, x: &Matrix<f64>, y: &[f64], mode: FitMode) -> Result<FactorModel> {
        fit_library(x, y, mode, &self.0)
    }
}

impl FactorEngine for GpEngine {
    fn fit(&self, x: &Matrix<f64>, y: &[f64], mode: FitMode) -> Result<FactorModel> {
        fit_gp(x, y, mode, &self.0).map(|o| o.model)
    }
}

/// Dispatches on `config.kind` after rescaling `y` to unit size.
///
/// A slice response carries an anchor-dependent scale that can be tiny, and
/// an absolute tolerance would then accept a wrong shape. The engine sees
/// `y / s` (RMS in [`FitMode::Scaled`], standard deviation with an
/// intercept), so `mse` is relative to the response size; `local_scale` and
/// `intercept` are mapped back to the original units.
pub fn fit_factor(
    x: &Matrix<f64>,
    y: &[f64],
    mode: FitMode,
    config: &EngineConfig,
) -> Result<FactorModel> {
    let s = match mode {
        FitMode::Scaled => (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt(),
        FitMode::ScaledWithIntercept => stats::std_dev(y),
    };
    let s = if s.is_finite() && s > 0.0 { s } else { 1.0 };
    let scaled: Vec<f64> = y.iter().map(|v| v / s).collect();
    let mut model = match config.kind {
        EngineKind::Library => LibraryEngine(config.clone()).fit(x, &scaled, mode),
        EngineKind::Gp => GpEngine(config.clone()).fit(x, &scaled, mode),
    }?;
    model.local_scale *= s;
    model.intercept = model.intercept.map(|c| c * s);
    Ok(model)
}
