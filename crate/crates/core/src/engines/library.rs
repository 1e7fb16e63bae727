//! Template library sequence search.
//!
//! Each template is fitted in variable-projection form: parameters that
//! enter linearly (the scale `k`, additive offsets, the phase of a sine via
//! its sine/cosine pair) are solved by least squares for every candidate,
//! and only the remaining nonlinear parameters are searched. The search is a
//! coarse grid scan of a central box that seeds differential evolution,
//! followed by Levenberg-Marquardt on the full parameter vector.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::de::{differential_evolution, DeSettings};
use super::lm::levenberg_marquardt;
use super::{EngineConfig, EngineMetadata, FactorModel, FitMode};
use crate::error::{Error, Result};
use crate::expr::template::library_for_arity;
use crate::expr::{Expression, ModelTemplate, TemplateId};
use crate::matrix::Matrix;
use crate::rng::rng_for;
use crate::stats;

/// Result of fitting one template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFit {
    /// `[k, m1, ..]`.
    pub params: Vec<f64>,
    pub intercept: Option<f64>,
    pub mse: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateAttempt {
    pub template: TemplateId,
    /// `None` when no candidate was valid on the data.
    pub mse: Option<f64>,
}

/// Least squares of `y` on `cols`; returns coefficients and the residual sum
/// of squares. Columns are normalized before solving the normal equations.
fn least_squares(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let q = cols.len();
    if q == 0 {
        return Some((Vec::new(), y.iter().map(|v| v * v).sum()));
    }
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if norms.iter().any(|n| !n.is_finite()) {
        return None;
    }
    let scale: Vec<f64> = norms.iter().map(|&n| if n > 0.0 { n } else { 1.0 }).collect();
    let mut g = DMatrix::<f64>::zeros(q, q);
    let mut h = DVector::<f64>::zeros(q);
    for a in 0..q {
        for b in a..q {
            let s: f64 = cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).sum();
            g[(a, b)] = s / (scale[a] * scale[b]);
            g[(b, a)] = g[(a, b)];
        }
        h[a] = cols[a].iter().zip(y).map(|(u, v)| u * v).sum::<f64>() / scale[a];
    }
    let sol = match g.clone().cholesky() {
        Some(ch) => ch.solve(&h),
        None => g.svd(true, true).solve(&h, 1e-12).ok()?,
    };
    let coefs: Vec<f64> = (0..q).map(|a| sol[a] / scale[a]).collect();
    let mut sse = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let fit: f64 = cols.iter().zip(&coefs).map(|(c, k)| c[i] * k).sum();
        let r = yi - fit;
        sse += r * r;
    }
    (sse.is_finite() && coefs.iter().all(|c| c.is_finite())).then_some((coefs, sse))
}

/// How a template is reduced to a nonlinear search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduction {
    /// Template-specific projection of the direct template.
    Direct,
    /// Reciprocal template fitted as the direct template on `1 / y`.
    Inverted,
    /// Every `m` searched; only `k` (and the intercept) solved linearly.
    Generic,
}

struct Problem<'a> {
    tpl: &'a ModelTemplate,
    x: &'a Matrix<f64>,
    cols: Vec<Vec<f64>>,
    /// Response the reduction is fitted to (`y`, or `1 / y` when inverted).
    target: Vec<f64>,
    y: &'a [f64],
    mode: FitMode,
    reduction: Reduction,
    lower: f64,
    upper: f64,
    /// Columns containing non-positive values force integer exponents.
    negative: Vec<bool>,
}

fn row_of(tpl: &ModelTemplate) -> (u8, u8) {
    (tpl.id.arity, tpl.id.row)
}

/// Template slot holding a pure additive offset of the body, if any.
fn offset_slot(tpl: &ModelTemplate) -> Option<usize> {
    match row_of(tpl) {
        (1, 1) | (1, 2) | (2, 3) => Some(2),
        (2, 1) => Some(3),
        _ => None,
    }
}

impl<'a> Problem<'a> {
    fn nonlinear_dims(&self) -> usize {
        match self.reduction {
            Reduction::Generic => self.tpl.slot_count - 1,
            _ => match row_of(self.tpl) {
                (1, 1) | (1, 2) | (2, 3) => 1,
                (1, 3) | (1, 4) | (2, 2) => 2,
                (2, 1) => 0,
                _ => 3,
            },
        }
    }

    /// Nonlinear coordinates that are exponents of a column with
    /// non-positive values; they are rounded to integers.
    fn integer_dims(&self) -> Vec<usize> {
        let pairs: Vec<(usize, usize)> = match self.reduction {
            Reduction::Generic => self
                .tpl
                .exponent_slots
                .iter()
                .map(|&(slot, var)| (slot - 1, var))
                .collect(),
            _ => match row_of(self.tpl) {
                (1, 1) => vec![(0, 0)],
                (1, 3) => vec![(1, 0)],
                _ => vec![],
            },
        };
        pairs
            .into_iter()
            .filter(|&(_, var)| self.negative[var])
            .map(|(d, _)| d)
            .collect()
    }

    fn decode(&self, theta: &[f64]) -> Vec<f64> {
        let mut t = theta.to_vec();
        for d in self.integer_dims() {
            t[d] = t[d].round();
        }
        t
    }

    fn with_intercept(&self) -> bool {
        self.mode == FitMode::ScaledWithIntercept
            || (self.reduction != Reduction::Generic && offset_slot(self.tpl).is_some())
    }

    /// Basis columns whose linear combination (plus an optional constant
    /// column) models the target.
    fn basis(&self, t: &[f64]) -> Option<Vec<Vec<f64>>> {
        let c = &self.cols;
        let map1 = |f: &dyn Fn(f64) -> f64| -> Vec<f64> { c[0].iter().map(|&v| f(v)).collect() };
        let map2 = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            c[0].iter().zip(&c[1]).map(|(&a, &b)| f(a, b)).collect()
        };
        let out = match self.reduction {
            Reduction::Generic => {
                let mut params = Vec::with_capacity(self.tpl.slot_count);
                params.push(1.0);
                params.extend_from_slice(t);
                let e = self.tpl.shape(&params).ok()?.evaluate(self.x).ok()?;
                vec![e.values]
            }
            _ => match row_of(self.tpl) {
                (1, 1) => vec![map1(&|v| pow(v, t[0]))],
                (1, 2) => vec![map1(&|v| (t[0] * v).exp())],
                (1, 3) => {
                    let u = map1(&|v| t[0] * pow(v, t[1]));
                    vec![
                        u.iter().map(|v| v.sin()).collect(),
                        u.iter().map(|v| v.cos()).collect(),
                    ]
                }
                (1, 4) => vec![map1(&|v| {
                    let a = t[0] * v + t[1];
                    if a > 0.0 {
                        a.ln()
                    } else {
                        f64::NAN
                    }
                })],
                (2, 1) => vec![c[0].clone(), c[1].clone()],
                (2, 2) => {
                    let den = c[1].iter().map(|&b| t[0] * b + t[1]);
                    let inv: Vec<f64> = den
                        .map(|d| if d.abs() < 1e-12 { f64::NAN } else { 1.0 / d })
                        .collect();
                    vec![
                        c[0].iter().zip(&inv).map(|(a, i)| a * i).collect(),
                        inv,
                    ]
                }
                (2, 3) => vec![map2(&|a, b| (t[0] * a * b).exp())],
                _ => {
                    let u = map2(&|a, b| t[0] * a + t[1] * b + t[2] * a * b);
                    vec![
                        u.iter().map(|v| v.sin()).collect(),
                        u.iter().map(|v| v.cos()).collect(),
                    ]
                }
            },
        };
        out.iter().flatten().all(|v| v.is_finite()).then_some(out)
    }

    /// Projects the target onto the basis at `theta`.
    fn project(&self, theta: &[f64]) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let t = self.decode(theta);
        let mut cols = self.basis(&t)?;
        if self.with_intercept() {
            cols.push(vec![1.0; self.target.len()]);
        }
        let (coefs, sse) = least_squares(&cols, &self.target)?;
        Some((t, coefs, sse))
    }

    fn cost(&self, theta: &[f64]) -> f64 {
        match self.project(theta) {
            Some((t, coefs, sse)) if self.params_from(&t, &coefs).is_some() => {
                sse / self.target.len() as f64
            }
            _ => f64::INFINITY,
        }
    }

    fn in_bounds(&self, params: &[f64]) -> bool {
        params[1..]
            .iter()
            .all(|&m| m >= self.lower && m <= self.upper && m.is_finite())
            && params[0].is_finite()
            && params[0] != 0.0
    }

    /// Maps a projection back to template slots `[k, m1, ..]` and intercept.
    fn params_from(&self, t: &[f64], coefs: &[f64]) -> Option<(Vec<f64>, Option<f64>)> {
        let single = self.mode == FitMode::ScaledWithIntercept;
        let constant = self.with_intercept().then(|| *coefs.last().unwrap());
        let intercept = if single { constant } else { None };
        let offset = |a: f64| if single { 0.0 } else { constant.unwrap() / a };
        let mut params = match self.reduction {
            Reduction::Generic => {
                let mut p = vec![coefs[0]];
                p.extend_from_slice(t);
                p
            }
            _ => match row_of(self.tpl) {
                (1, 1) | (1, 2) | (2, 3) => vec![coefs[0], t[0], offset(coefs[0])],
                (1, 3) => {
                    let k = coefs[0].hypot(coefs[1]);
                    vec![k, t[0], t[1], coefs[1].atan2(coefs[0])]
                }
                (1, 4) => vec![coefs[0], t[0], t[1]],
                (2, 1) => {
                    let c = if single { 0.0 } else { constant.unwrap() };
                    let k = coefs[0].abs().max(coefs[1].abs()).max(c.abs());
                    vec![k, coefs[0] / k, coefs[1] / k, c / k]
                }
                (2, 2) => {
                    let k = coefs[0].abs().max(coefs[1].abs());
                    vec![k, coefs[0] / k, coefs[1] / k, t[0], t[1]]
                }
                _ => {
                    let k = coefs[0].hypot(coefs[1]);
                    vec![k, t[0], t[1], t[2], coefs[1].atan2(coefs[0])]
                }
            },
        };
        if self.reduction == Reduction::Inverted {
            // z = k_z * body  <=>  y = (1 / k_z) / body
            params[0] = 1.0 / params[0];
        }
        self.in_bounds(&params).then_some((params, intercept))
    }

    /// Mean squared residual of the template itself on `y`.
    fn template_mse(&self, params: &[f64], intercept: Option<f64>) -> f64 {
        match self.residuals(params, intercept) {
            Some(r) => r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64,
            None => f64::INFINITY,
        }
    }

    fn residuals(&self, params: &[f64], intercept: Option<f64>) -> Option<Vec<f64>> {
        let e = self
            .tpl
            .expression()
            .evaluate_with_params(self.x, params)
            .ok()?;
        if !e.all_valid() {
            return None;
        }
        let c = intercept.unwrap_or(0.0);
        Some(e.values.iter().zip(self.y).map(|(f, y)| f + c - y).collect())
    }

    /// Refines all free slots (and the intercept) on the original response.
    fn polish(&self, params: Vec<f64>, intercept: Option<f64>) -> (Vec<f64>, Option<f64>, f64) {
        let before = self.template_mse(&params, intercept);
        let n = params.len();
        let mut start = params.clone();
        let mut free = vec![true; n];
        let int_slots: Vec<usize> = self
            .tpl
            .exponent_slots
            .iter()
            .filter(|&&(_, var)| self.negative[var])
            .map(|&(slot, _)| slot)
            .collect();
        for s in int_slots {
            free[s] = false;
        }
        if intercept.is_some() {
            if let Some(s) = offset_slot(self.tpl) {
                free[s] = false;
            }
            start.push(intercept.unwrap());
            free.push(true);
        }
        if row_of(self.tpl) == (2, 1) && !self.tpl.id.reciprocal {
            // Linear in every slot; the scale k is redundant with m.
            free[0] = false;
        }
        let out = levenberg_marquardt(
            |p| self.residuals(&p[..n], intercept.map(|_| p[n])),
            &start,
            &free,
            100,
        );
        let p = out.params[..n].to_vec();
        let c = intercept.map(|_| out.params[n]);
        let after = self.template_mse(&p, c);
        if self.in_bounds(&p) && after <= before {
            (p, c, after)
        } else {
            (params, intercept, before)
        }
    }
}

fn pow(v: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
        if v == 0.0 && e < 0.0 {
            return f64::NAN;
        }
        v.powi(e as i32)
    } else if v < 0.0 || (v == 0.0 && e < 0.0) {
        f64::NAN
    } else {
        v.powf(e)
    }
}

/// Grid over `[-radius, radius]^dims`, integer-spaced on integer dims.
fn scan_grid(dims: usize, integer: &[usize], radius: f64) -> Vec<Vec<f64>> {
    let step = match dims {
        1 => 0.05,
        2 => 0.2,
        3 => 0.5,
        _ => return Vec::new(),
    };
    let axes: Vec<Vec<f64>> = (0..dims)
        .map(|d| {
            let s = if integer.contains(&d) { 1.0 } else { step };
            let n = (radius / s).floor() as i64;
            (-n..=n).map(|i| i as f64 * s).collect()
        })
        .collect();
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    grid
}

/// Best scan points, greedily thinned so seeds sit in different basins.
fn diverse_seeds(scored: &[(Vec<f64>, f64)], count: usize, spacing: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (p, c) in scored {
        if out.len() >= count || !c.is_finite() {
            break;
        }
        let far = out.iter().all(|q| {
            q.iter()
                .zip(p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                > spacing
        });
        if far {
            out.push(p.clone());
        }
    }
    out
}

fn column_has_nonpositive(x: &Matrix<f64>, j: usize) -> bool {
    x.column(j).iter().any(|&v| v <= 0.0)
}

/// Fits one template to `(x, y)`; `x` has one column per template variable.
pub fn optimize_params(
    tpl: &ModelTemplate,
    x: &Matrix<f64>,
    y: &[f64],
    mode: FitMode,
    config: &EngineConfig,
) -> Result<ParamFit> {
    config.validate()?;
    if x.ncols() != tpl.arity() {
        return Err(Error::DimensionMismatch {
            index: tpl.arity().saturating_sub(1),
            dim: x.ncols(),
        });
    }
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::InsufficientData {
            valid: y.len(),
            total: x.nrows(),
            required: 1,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("response must be finite".into()));
    }
    let reduction = match (tpl.id.reciprocal, mode) {
        (false, _) => Reduction::Direct,
        (true, FitMode::Scaled) => Reduction::Inverted,
        (true, FitMode::ScaledWithIntercept) => Reduction::Generic,
    };
    let target: Vec<f64> = match reduction {
        Reduction::Inverted => y.iter().map(|v| 1.0 / v).collect(),
        _ => y.to_vec(),
    };
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoValidCandidate);
    }
    let problem = Problem {
        tpl,
        x,
        cols: (0..x.ncols()).map(|j| x.column(j)).collect(),
        target,
        y,
        mode,
        reduction,
        lower: config.lower,
        upper: config.upper,
        negative: (0..x.ncols()).map(|j| column_has_nonpositive(x, j)).collect(),
    };
    let eps = config.eps();
    let dims = problem.nonlinear_dims();
    let arity = tpl.arity();
    let np = config.population_for(arity);
    let generations = config.generations_for(arity);
    let radius = config.scan_radius.min(config.upper).min(-config.lower);
    let inner_target = match reduction {
        Reduction::Inverted => {
            eps * stats::mean(&problem.target.iter().map(|v| v * v).collect::<Vec<_>>())
                / stats::mean(&y.iter().map(|v| v * v).collect::<Vec<_>>())
        }
        _ => eps,
    };

    let grid = if dims == 0 {
        vec![Vec::new()]
    } else {
        scan_grid(dims, &problem.integer_dims(), radius)
    };
    let mut evaluations = grid.len();
    let mut scored: Vec<(Vec<f64>, f64)> = grid
        .into_par_iter()
        .map(|p| {
            let c = problem.cost(&p);
            (p, c)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    let per_run = (np / 2).max(1);
    let seeds = diverse_seeds(&scored, per_run * (config.restarts + 1), 0.6);

    let mut best: Option<(Vec<f64>, Option<f64>, f64)> = None;
    for run in 0..=config.restarts {
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if dims == 0 {
            candidates.push(Vec::new());
        } else {
            let chunk: Vec<Vec<f64>> = seeds.iter().skip(run * per_run).take(per_run).cloned().collect();
            let mut settings = DeSettings::new(np, generations, config.lower, config.upper);
            settings.init_lower = -radius;
            settings.init_upper = radius;
            settings.init_inner_fraction = 0.75;
            settings.target = inner_target;
            let mut rng = rng_for(
                config.seed,
                &[tpl.id.arity as u64, tpl.id.row as u64, tpl.id.reciprocal as u64, run as u64],
            );
            let out = differential_evolution(|t| problem.cost(t), dims, &settings, &chunk, &mut rng);
            evaluations += out.evaluations;
            for (p, c) in &out.population {
                if !c.is_finite() || candidates.len() >= 3 {
                    break;
                }
                let dp = problem.decode(p);
                if !candidates.iter().any(|q| q == &dp) {
                    candidates.push(dp);
                }
            }
        }
        for theta in candidates {
            let Some((t, coefs, _)) = problem.project(&theta) else {
                continue;
            };
            let Some((params, intercept)) = problem.params_from(&t, &coefs) else {
                continue;
            };
            let (p, c, mse) = problem.polish(params, intercept);
            evaluations += 1;
            if best.as_ref().is_none_or(|b| mse < b.2) {
                best = Some((p, c, mse));
            }
        }
        if dims == 0 || best.as_ref().is_some_and(|b| b.2 <= eps) {
            break;
        }
    }
    match best {
        Some((params, intercept, mse)) if mse.is_finite() => Ok(ParamFit {
            params,
            intercept,
            mse,
            evaluations,
        }),
        _ => Err(Error::NoValidCandidate),
    }
}

/// Tries the templates of the factor's arity in library order and returns
/// the first whose mean squared error is within `eps_target`, or else the
/// best one found, flagged as below tolerance.
pub fn fit_library(
    x: &Matrix<f64>,
    y: &[f64],
    mode: FitMode,
    config: &EngineConfig,
) -> Result<FactorModel> {
    config.validate()?;
    let arity = x.ncols();
    if !(1..=2).contains(&arity) {
        return Err(Error::UnsupportedArity(arity));
    }
    let templates = library_for_arity(arity);
    if !y.is_empty() && y.iter().all(|&v| v == y[0]) {
        let c = y[0];
        let (scale, intercept) = match mode {
            FitMode::Scaled => (c, None),
            FitMode::ScaledWithIntercept => (0.0, Some(c)),
        };
        return Ok(FactorModel {
            variables: Vec::new(),
            expression: Expression::Const(1.0),
            mse: 0.0,
            local_scale: scale,
            intercept,
            meets_tolerance: true,
            fallback: false,
            metadata: EngineMetadata::Library {
                template: templates[0].id,
                params: Vec::new(),
                attempts: Vec::new(),
            },
        });
    }
    let eps = config.eps();
    let mut attempts = Vec::new();
    let mut best: Option<(&ModelTemplate, ParamFit)> = None;
    for tpl in &templates {
        let fit = match optimize_params(tpl, x, y, mode, config) {
            Ok(f) => f,
            Err(Error::NoValidCandidate) => {
                attempts.push(TemplateAttempt {
                    template: tpl.id,
                    mse: None,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        attempts.push(TemplateAttempt {
            template: tpl.id,
            mse: Some(fit.mse),
        });
        let done = fit.mse <= eps;
        if best.as_ref().is_none_or(|(_, b)| fit.mse < b.mse) {
            best = Some((tpl, fit));
        }
        if done {
            break;
        }
    }
    let (tpl, fit) = best.ok_or(Error::NoValidCandidate)?;
    Ok(FactorModel {
        variables: Vec::new(),
        expression: tpl.shape(&fit.params)?,
        mse: fit.mse,
        local_scale: fit.params[0],
        intercept: fit.intercept,
        meets_tolerance: fit.mse <= eps,
        fallback: false,
        metadata: EngineMetadata::Library {
            template: tpl.id,
            params: fit.params,
            attempts,
        },
    })
}
