//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::process::ExitCode;

use bbp_core::engines::{EngineConfig, EngineMetadata, FactorModel};
use bbp_core::harness::{
    builtin_case, builtin_cases, compare_direct, run_case, synthetic_target, CaseReport,
    DirectOptions,
};
use bbp_core::pipeline::{assemble_global, BBPResult};
use bbp_core::sampling::{draw_base_sample, draw_valid_sample, DomainBox, SamplingPlan};
use bbp_core::separability::{bict_additive, bict_multiplicative, VerdictKind};
use bbp_core::{detect_structure, parse, DetectionConfig, ExprOracle, Oracle};

const SEED: u64 = 0x0BB9;
/// Direct-run cap for the comparison criterion; the CLI default is 300 s.
const DIRECT_CAP: f64 = 30.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn library_runs() -> Vec<(CaseReport, Option<BBPResult>)> {
    builtin_cases()
        .iter()
        .map(|case| {
            match run_case(case, &EngineConfig::library(), &DetectionConfig::default(), SEED) {
                Ok(r) => (CaseReport::from_result(case, &r), Some(r)),
                Err(e) => (CaseReport::failed(case, &e), None),
            }
        })
        .collect()
}

fn exact_recovery(runs: &[(CaseReport, Option<BBPResult>)]) -> Outcome {
    let total: f64 = runs.iter().map(|(c, _)| c.t).sum();
    let bad: Vec<String> = runs
        .iter()
        .filter(|(c, _)| !(c.structure_match && c.mse.is_some_and(|m| m <= 1e-6)))
        .map(|(c, _)| format!("case {} (match {}, mse {:?})", c.case, c.structure_match, c.mse))
        .collect();
    let worst = runs
        .iter()
        .filter_map(|(c, _)| c.mse)
        .fold(0.0f64, f64::max);
    if bad.is_empty() {
        outcome(true, format!("10/10 structures match, worst mse {worst:.2e}, {total:.1} s total"))
    } else {
        outcome(false, format!("failing: {}", bad.join(", ")))
    }
}

fn exact_shape_coefficients(id: usize) -> Vec<f64> {
    let case = builtin_case(id).unwrap();
    let oracle = case.oracle();
    let fit = SamplingPlan::new(case.domain.clone(), case.samples, 101).unwrap();
    let val = SamplingPlan::new(case.domain.clone(), 1000, 102).unwrap();
    let (x_fit, _) = draw_valid_sample(&oracle, &fit).unwrap();
    let (x_val, _) = draw_valid_sample(&oracle, &val).unwrap();
    let factors = case
        .structure
        .iter_factors()
        .zip(&case.shapes)
        .map(|((_, _, vars), s)| FactorModel {
            variables: vars.to_vec(),
            expression: s.clone(),
            mse: 0.0,
            local_scale: 1.0,
            intercept: None,
            meets_tolerance: true,
            fallback: false,
            metadata: EngineMetadata::Gp {
                generations: 0,
                restarts: 0,
                timed_out: false,
            },
        })
        .collect();
    assemble_global(&oracle, &case.structure, factors, &x_fit, &x_val)
        .unwrap()
        .coefficients
}

fn coefficient_recovery(runs: &[(CaseReport, Option<BBPResult>)]) -> Outcome {
    let close = |got: &[f64], want: &[f64]| {
        got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-6)
    };
    let c1 = exact_shape_coefficients(1);
    let c5 = exact_shape_coefficients(5);
    let recovered = runs[0]
        .1
        .as_ref()
        .map(|r| format!("{:?}", r.model.coefficients))
        .unwrap_or_default();
    let pass = close(&c1, &[1.2, 10.0, -3.0]) && close(&c5, &[0.0, 2.0, -1.0]);
    outcome(
        pass,
        format!("case 1 beta {c1:?}, case 5 beta {c5:?}; case 1 library run beta {recovered}"),
    )
}

fn detection_overhead(runs: &[(CaseReport, Option<BBPResult>)]) -> Outcome {
    let mut ratios: Vec<f64> = runs.iter().map(|(c, _)| c.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let median = (ratios[4] + ratios[5]) / 2.0;
    outcome(
        median < 0.10,
        format!(
            "median T_d/T_BBP {:.3}% (range {:.3}%..{:.3}%)",
            100.0 * median,
            100.0 * ratios[0],
            100.0 * ratios[9]
        ),
    )
}

fn detection_soundness() -> Outcome {
    let mut misses = Vec::new();
    for seed in 0..100u64 {
        let t = synthetic_target(seed);
        let oracle = ExprOracle::new(t.expression.clone(), t.dim).unwrap();
        let found = detect_structure(&oracle, &t.domain, &DetectionConfig::default());
        if !matches!(&found, Ok(d) if d.structure == t.structure) {
            misses.push(seed);
        }
    }
    let hits = 100 - misses.len();
    outcome(hits >= 95, format!("{hits}/100 partitions recovered, misses at seeds {misses:?}"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Additive,
    Multiplicative,
    Inseparable,
}

/// Classifies a two-variable function from a 10 x 10 grid: mixed second
/// differences vanish for additive functions, cross ratios for
/// multiplicative ones.
fn grid_kind(oracle: &ExprOracle, domain: &DomainBox<f64>) -> Kind {
    let axis = |v: usize| {
        let (a, b) = domain.interval(v);
        (0..10).map(move |k| a + (b - a) * (k as f64 + 0.5) / 10.0)
    };
    let mut rows = Vec::new();
    for u in axis(0) {
        for v in axis(1) {
            rows.push(vec![u, v]);
        }
    }
    let x = bbp_core::Matrix::from_rows(&rows);
    let f = Oracle::<f64>::evaluate(oracle, &x).values;
    let at = |i: usize, j: usize| f[i * 10 + j];
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-9 * scale * scale;
    let (mut additive, mut multiplicative) = (true, true);
    for i in 1..10 {
        for j in 1..10 {
            let d = at(i, j) - at(i, 0) - at(0, j) + at(0, 0);
            if d.abs() > 1e-9 * scale {
                additive = false;
            }
            let r = at(i, j) * at(0, 0) - at(i, 0) * at(0, j);
            if r.abs() > tol {
                multiplicative = false;
            }
        }
    }
    match (additive, multiplicative) {
        (true, _) => Kind::Additive,
        (false, true) => Kind::Multiplicative,
        _ => Kind::Inseparable,
    }
}

fn bict_equivalence() -> Outcome {
    let fixtures = [
        ("x1 + x2", Kind::Additive),
        ("sin(x1) + x2^2", Kind::Additive),
        ("exp(0.5 * x1) - 3 * x2", Kind::Additive),
        ("ln(x1 + 4) + cos(x2)", Kind::Additive),
        ("x1^3 + sin(2 * x2 + 1)", Kind::Additive),
        ("2 * x1 + exp(x2)", Kind::Additive),
        ("x1 * x2", Kind::Multiplicative),
        ("sin(x1) * exp(0.5 * x2)", Kind::Multiplicative),
        ("(x1^2 + 1) * cos(x2)", Kind::Multiplicative),
        ("sin(x1 + x2)", Kind::Inseparable),
        ("exp(x1 * x2)", Kind::Inseparable),
        ("ln(x1 + x2 + 7)", Kind::Inseparable),
    ];
    let domain = DomainBox::uniform(2, -3.0, 3.0).unwrap();
    let config = DetectionConfig::default();
    let mut agree = 0;
    let mut wrong = Vec::new();
    for (text, label) in fixtures {
        let oracle = ExprOracle::new(parse(text).unwrap(), 2).unwrap();
        let grid = grid_kind(&oracle, &domain);
        let add = bict_additive(&oracle, &[0], &domain, &config).unwrap();
        let bict = if add.kind == VerdictKind::AdditiveSeparable {
            Kind::Additive
        } else {
            let mul = bict_multiplicative(&oracle, &[0], &[0, 1], &[0.0, 0.0], &domain, &config)
                .unwrap();
            if mul.kind == VerdictKind::MultiplicativeSeparable {
                Kind::Multiplicative
            } else {
                Kind::Inseparable
            }
        };
        if bict == grid && grid == label {
            agree += 1;
        } else {
            wrong.push(format!("{text}: bict {bict:?}, grid {grid:?}"));
        }
    }
    outcome(agree == 12, format!("{agree}/12 verdicts agree {wrong:?}"))
}

fn round_trip(runs: &[(CaseReport, Option<BBPResult>)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut bitwise = 0;
    let mut failures = Vec::new();
    for (c, r) in runs {
        let Some(r) = r else {
            failures.push(format!("case {} has no model", c.case));
            continue;
        };
        let case = builtin_case(c.case).unwrap();
        let plan = SamplingPlan::new(case.domain.clone(), 1000, 0xB17 + c.case as u64).unwrap();
        let x = draw_base_sample(&plan).unwrap();
        let structured = r.model.evaluate(&x).unwrap();
        let flat = parse(&r.expression).unwrap().evaluate(&x).unwrap();
        let mut same = true;
        for k in 0..x.nrows() {
            let (a, b) = (structured.values[k], flat.values[k]);
            if structured.valid[k] != flat.valid[k] {
                failures.push(format!("case {} row {k}: validity differs", c.case));
                same = false;
                break;
            }
            if !structured.valid[k] {
                continue;
            }
            if a.to_bits() != b.to_bits() {
                same = false;
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
            }
        }
        if same {
            bitwise += 1;
        }
    }
    let pass = failures.is_empty() && worst <= 1e-12;
    outcome(
        pass,
        format!("{bitwise}/10 bit-identical, worst relative gap {worst:.1e} {failures:?}"),
    )
}

fn gp_capability() -> Outcome {
    let case2 = builtin_case(2).unwrap();
    let mut hits = 0;
    for seed in 0..20u64 {
        if let Ok(r) = run_case(&case2, &EngineConfig::gp(), &DetectionConfig::default(), seed) {
            if r.validation_mse() <= 1e-8 {
                hits += 1;
            }
        }
    }
    let options = DirectOptions {
        gp: EngineConfig::gp(),
        cap_seconds: DIRECT_CAP,
    };
    let mut etas = Vec::new();
    let mut all_above = true;
    for id in [2, 5, 7, 10] {
        let case = builtin_case(id).unwrap();
        match compare_direct(&case, &options, &DetectionConfig::default(), SEED) {
            Ok(d) => {
                all_above &= d.eta > 1.0;
                etas.push(format!("case {id} eta {}{:.1}", if d.lower_bound { ">" } else { "" }, d.eta));
            }
            Err(e) => {
                all_above = false;
                etas.push(format!("case {id} error {e}"));
            }
        }
    }
    outcome(
        hits >= 10 && all_above,
        format!("case 2 reached 1e-8 in {hits}/20 runs; {}", etas.join(", ")),
    )
}

fn cost_ordering(runs: &[(CaseReport, Option<BBPResult>)]) -> Outcome {
    let bad: Vec<String> = runs
        .iter()
        .filter(|(c, _)| !(c.t2 >= c.t1.max(c.t3)))
        .map(|(c, _)| format!("case {} ({:.4}, {:.4}, {:.4})", c.case, c.t1, c.t2, c.t3))
        .collect();
    outcome(bad.is_empty(), format!("t2 dominates in {}/10 runs {bad:?}", 10 - bad.len()))
}

fn main() -> ExitCode {
    let runs = library_runs();
    let results = [
        ("1 exact recovery", exact_recovery(&runs)),
        ("2 coefficient recovery", coefficient_recovery(&runs)),
        ("3 detection overhead", detection_overhead(&runs)),
        ("4 detection soundness", detection_soundness()),
        ("5 BiCT grid equivalence", bict_equivalence()),
        ("6 structured/flattened round trip", round_trip(&runs)),
        ("7 GP capability", gp_capability()),
        ("8 cost ordering", cost_ordering(&runs)),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
