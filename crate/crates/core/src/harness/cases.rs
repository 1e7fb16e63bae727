use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse, Expression};
use crate::oracle::GuardedOracle;
use crate::sampling::DomainBox;
use crate::separability::SeparableStructure;

/// Rows whose guarded denominator is smaller than this are resampled.
pub const DENOMINATOR_GUARD: f64 = 1e-3;

/// One benchmark target with its known decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCase {
    pub id: usize,
    pub expression: Expression,
    pub dim: usize,
    pub domain: DomainBox<f64>,
    pub samples: usize,
    pub structure: SeparableStructure,
    /// Exact factor shapes in canonical structure order (blocks by smallest
    /// variable, factors likewise).
    pub shapes: Vec<Expression>,
    /// `beta0..beta_p` that go with `shapes`.
    pub coefficients: Vec<f64>,
    /// Denominators kept away from zero when sampling.
    pub guards: Vec<Expression>,
    /// Deviation of the domain from the published box, if any.
    pub note: Option<String>,
}

impl TargetCase {
    pub fn oracle(&self) -> GuardedOracle {
        GuardedOracle::new(
            self.expression.clone(),
            self.dim,
            self.guards.clone(),
            DENOMINATOR_GUARD,
        )
        .expect("built-in case expressions are well formed")
    }
}

struct Spec {
    expr: &'static str,
    dim: usize,
    lo: f64,
    hi: f64,
    samples: usize,
    blocks: &'static [&'static [&'static [usize]]],
    shapes: &'static [&'static str],
    coefficients: &'static [f64],
    guards: &'static [&'static str],
}

const SPECS: [Spec; 10] = [
    Spec {
        expr: "1.2 + 10 * sin(2 * x1 - x3) - 3 * x2^2",
        dim: 3,
        lo: -3.0,
        hi: 3.0,
        samples: 300,
        blocks: &[&[&[0, 2]], &[&[1]]],
        shapes: &["sin(2 * x1 - x3)", "x2^2"],
        coefficients: &[1.2, 10.0, -3.0],
        guards: &[],
    },
    Spec {
        expr: "0.5 * exp(x3) * sin(x1) * cos(x2)",
        dim: 3,
        lo: -3.0,
        hi: 3.0,
        samples: 300,
        blocks: &[&[&[0], &[1], &[2]]],
        shapes: &["sin(x1)", "cos(x2)", "exp(x3)"],
        coefficients: &[0.0, 0.5],
        guards: &[],
    },
    Spec {
        expr: "cos(x1 + x2) + sin(3 * x3 - x4)",
        dim: 4,
        lo: -3.0,
        hi: 3.0,
        samples: 400,
        blocks: &[&[&[0, 1]], &[&[2, 3]]],
        shapes: &["cos(x1 + x2)", "sin(3 * x3 - x4)"],
        coefficients: &[0.0, 1.0, 1.0],
        guards: &[],
    },
    Spec {
        expr: "5 * sin(3 * x1 * x2) / (x3 + x4)",
        dim: 4,
        lo: -3.0,
        hi: 3.0,
        samples: 400,
        blocks: &[&[&[0, 1], &[2, 3]]],
        shapes: &["sin(3 * x1 * x2)", "1 / (x3 + x4)"],
        coefficients: &[0.0, 5.0],
        guards: &["x3 + x4"],
    },
    Spec {
        expr: "2 * x1 * sin(x2 + x3) - cos(x4)",
        dim: 4,
        lo: -3.0,
        hi: 3.0,
        samples: 400,
        blocks: &[&[&[0], &[1, 2]], &[&[3]]],
        shapes: &["x1", "sin(x2 + x3)", "cos(x4)"],
        coefficients: &[0.0, 2.0, -1.0],
        guards: &[],
    },
    Spec {
        expr: "10 + 0.2 * x1 - 5 * sin(5 * x2 + x3) + ln(3 * x4 + 1.2) - 1.2 * exp(0.5 * x5)",
        dim: 5,
        lo: 1.0,
        hi: 4.0,
        samples: 300,
        blocks: &[&[&[0]], &[&[1, 2]], &[&[3]], &[&[4]]],
        shapes: &["x1", "sin(5 * x2 + x3)", "ln(3 * x4 + 1.2)", "exp(0.5 * x5)"],
        coefficients: &[10.0, 0.2, -5.0, 1.0, -1.2],
        guards: &[],
    },
    Spec {
        expr: "10 * sin(x1 * x2) * x3 / (x4 + x5)",
        dim: 5,
        lo: -3.0,
        hi: 3.0,
        samples: 500,
        blocks: &[&[&[0, 1], &[2], &[3, 4]]],
        shapes: &["sin(x1 * x2)", "x3", "1 / (x4 + x5)"],
        coefficients: &[0.0, 10.0],
        guards: &["x4 + x5"],
    },
    Spec {
        expr: "1.2 + 2 * x4 * cos(x2) + 0.5 * exp(1.2 * x3) * sin(3 * x1) - 2 * cos(1.5 * x5 + 5)",
        dim: 5,
        lo: -3.0,
        hi: 3.0,
        samples: 500,
        blocks: &[&[&[1], &[3]], &[&[0], &[2]], &[&[4]]],
        shapes: &["sin(3 * x1)", "exp(1.2 * x3)", "cos(x2)", "x4", "cos(1.5 * x5 + 5)"],
        coefficients: &[1.2, 0.5, 2.0, -2.0],
        guards: &[],
    },
    Spec {
        expr: "100 * cos(x3 * x4) / (exp(x1) * x2^1.2) * sin(1.5 * x5 - 2 * x6)",
        dim: 6,
        lo: -3.0,
        hi: 3.0,
        samples: 600,
        blocks: &[&[&[0], &[1], &[2, 3], &[4, 5]]],
        shapes: &["exp(-x1)", "x2^-1.2", "cos(x3 * x4)", "sin(1.5 * x5 - 2 * x6)"],
        coefficients: &[0.0, 100.0],
        guards: &[],
    },
    Spec {
        expr: "(x1 + x2) / x3 + x4 * sin(x5 * x6)",
        dim: 6,
        lo: -3.0,
        hi: 3.0,
        samples: 600,
        blocks: &[&[&[0, 1], &[2]], &[&[3], &[4, 5]]],
        shapes: &["x1 + x2", "1 / x3", "x4", "sin(x5 * x6)"],
        coefficients: &[0.0, 1.0, 1.0],
        guards: &["x3"],
    },
];

fn build(id: usize, spec: &Spec) -> TargetCase {
    let p = |s: &str| parse(s).expect("built-in expression parses");
    let mut bounds = vec![(spec.lo, spec.hi); spec.dim];
    let mut note = None;
    if id == 9 {
        // x2^1.2 is undefined for negative x2.
        bounds[1] = (0.1, 3.0);
        note = Some("x2 restricted to [0.1, 3] so that x2^1.2 is defined".to_string());
    }
    let blocks = spec
        .blocks
        .iter()
        .map(|b| b.iter().map(|f| f.to_vec()).collect())
        .collect();
    TargetCase {
        id,
        expression: p(spec.expr),
        dim: spec.dim,
        domain: DomainBox::new(bounds).expect("valid bounds"),
        samples: spec.samples,
        structure: SeparableStructure::new(spec.dim, blocks).expect("valid partition"),
        shapes: spec.shapes.iter().map(|s| p(s)).collect(),
        coefficients: spec.coefficients.to_vec(),
        guards: spec.guards.iter().map(|s| p(s)).collect(),
        note,
    }
}

/// The ten benchmark targets, in order.
pub fn builtin_cases() -> Vec<TargetCase> {
    SPECS
        .iter()
        .enumerate()
        .map(|(k, s)| build(k + 1, s))
        .collect()
}

pub fn builtin_case(id: usize) -> Result<TargetCase> {
    if !(1..=SPECS.len()).contains(&id) {
        return Err(Error::InvalidConfig(format!(
            "case {id} does not exist (expected 1-{})",
            SPECS.len()
        )));
    }
    Ok(build(id, &SPECS[id - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::oracle::Oracle;
    use crate::pipeline::{assemble_global, AssembledModel};
    use crate::sampling::{draw_valid_sample, SamplingPlan};

    #[test]
    fn ten_cases_with_table_shapes() {
        let cases = builtin_cases();
        assert_eq!(cases.len(), 10);
        let dims: Vec<usize> = cases.iter().map(|c| c.dim).collect();
        assert_eq!(dims, vec![3, 3, 4, 4, 4, 5, 5, 5, 6, 6]);
        let samples: Vec<usize> = cases.iter().map(|c| c.samples).collect();
        assert_eq!(samples, vec![300, 300, 400, 400, 400, 300, 500, 500, 600, 600]);
        assert_eq!(cases[6].domain.describe(), "[-3,3]^5");
        assert_eq!(cases[5].domain.describe(), "[1,4]^5");
        for c in &cases {
            assert_eq!(c.expression.variables().len(), c.dim);
            assert_eq!(c.shapes.len(), c.structure.total_factors());
            assert_eq!(c.coefficients.len(), c.structure.block_count() + 1);
        }
    }

    #[test]
    fn case5_text_and_case3_structure() {
        let c5 = builtin_case(5).unwrap();
        assert_eq!(c5.expression.to_string(), "2 * x1 * sin(x2 + x3) - cos(x4)");
        assert_eq!(c5.expression, parse("2 * x1 * sin(x2 + x3) − cos x4").unwrap());
        let c3 = builtin_case(3).unwrap();
        assert_eq!(c3.structure.to_string(), "{x1, x2} | {x3, x4}");
        assert!(builtin_case(11).is_err());
    }

    /// The exact shapes and coefficients reproduce every target, which
    /// checks the recorded decompositions against the expressions.
    #[test]
    fn shapes_reproduce_targets() {
        for c in builtin_cases() {
            let oracle = c.oracle();
            let plan = SamplingPlan::new(c.domain.clone(), 500, 11).unwrap();
            let (x, y) = draw_valid_sample(&oracle, &plan).unwrap();
            let factors = c
                .structure
                .iter_factors()
                .zip(&c.shapes)
                .map(|((_, _, vars), s)| crate::engines::FactorModel {
                    variables: vars.to_vec(),
                    expression: s.clone(),
                    mse: 0.0,
                    local_scale: 1.0,
                    intercept: None,
                    meets_tolerance: true,
                    fallback: false,
                    metadata: crate::engines::EngineMetadata::Gp {
                        generations: 0,
                        restarts: 0,
                        timed_out: false,
                    },
                })
                .collect();
            let model = AssembledModel {
                structure: c.structure.clone(),
                factors,
                coefficients: c.coefficients.clone(),
                validation_mse: 0.0,
                collinear: false,
            };
            let got = model.evaluate(&x).unwrap().values;
            for (g, t) in got.iter().zip(&y) {
                assert!((g - t).abs() <= 1e-9 * (1.0 + t.abs()), "case {}: {g} vs {t}", c.id);
            }
            let fitted = assemble_global(&oracle, &c.structure, model.factors.clone(), &x, &x).unwrap();
            assert!(fitted.validation_mse < 1e-12, "case {}", c.id);
        }
    }

    #[test]
    fn guards_reject_small_denominators() {
        let c = builtin_case(10).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 1.0, 1e-4, 1.0, 1.0, 1.0], vec![1.0, 1.0, 0.5, 1.0, 1.0, 1.0]]);
        let e = Oracle::<f64>::evaluate(&c.oracle(), &x);
        assert_eq!(e.valid, vec![false, true]);
    }
}
