//! Random targets with a known block/factor partition, built from the
//! library template shapes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{parse, Expression};
use crate::rng::rng_for;
use crate::sampling::DomainBox;
use crate::separability::SeparableStructure;

const SYNTHETIC_STREAM: u64 = 0x5E7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTarget {
    pub expression: Expression,
    pub dim: usize,
    pub domain: DomainBox<f64>,
    /// The partition the target was generated from.
    pub structure: SeparableStructure,
}

fn magnitude<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let v = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        v
    } else {
        -v
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn uni<R: Rng>(rng: &mut R, v: &str) -> String {
    match rng.gen_range(0..4) {
        0 => {
            let k = rng.gen_range(1..=3);
            let c = round2(rng.gen_range(0.5..2.0));
            if k == 1 {
                format!("({v} + {c})")
            } else {
                format!("({v}^{k} + {c})")
            }
        }
        1 => {
            let m = round2(magnitude(rng, 0.3, 1.0));
            let c = round2(rng.gen_range(0.5..2.0));
            format!("(exp({m} * {v}) + {c})")
        }
        2 => {
            let m1 = round2(magnitude(rng, 0.5, 2.0));
            let m3 = round2(rng.gen_range(-1.5..1.5));
            format!("sin({m1} * {v} + {m3})")
        }
        _ => {
            // Positive on [-3, 3] for either sign of m1.
            let m1 = round2(magnitude(rng, 0.5, 1.5));
            let m2 = round2(3.0 * m1.abs() + 0.5);
            format!("ln({m1} * {v} + {m2})")
        }
    }
}

/// `linear` is only allowed inside a block with several factors, where the
/// sum is not split into separate blocks.
fn bi<R: Rng>(rng: &mut R, u: &str, v: &str, linear: bool) -> String {
    let pick = if linear { rng.gen_range(0..3) } else { rng.gen_range(1..3) };
    match pick {
        0 => {
            let m1 = round2(magnitude(rng, 0.5, 2.0));
            let m2 = round2(magnitude(rng, 0.5, 2.0));
            let m3 = round2(rng.gen_range(-1.0..1.0));
            format!("({m1} * {u} + {m2} * {v} + {m3})")
        }
        1 => {
            let m1 = round2(magnitude(rng, 0.5, 0.8));
            let c = round2(rng.gen_range(0.5..2.0));
            format!("(exp({m1} * {u} * {v}) + {c})")
        }
        _ => {
            let m1 = round2(magnitude(rng, 0.5, 1.5));
            let m2 = round2(magnitude(rng, 0.5, 1.5));
            let m3 = round2(magnitude(rng, 0.5, 1.0));
            let m4 = round2(rng.gen_range(-1.5..1.5));
            format!("sin({m1} * {u} + {m2} * {v} + {m3} * {u} * {v} + {m4})")
        }
    }
}

/// A random separable target on 2 to 6 variables. Factors have one or two
/// variables; blocks hold one or more factors.
pub fn synthetic_target(seed: u64) -> SyntheticTarget {
    let mut rng = rng_for(seed, &[SYNTHETIC_STREAM]);
    let dim = rng.gen_range(2..=6);
    let mut vars: Vec<usize> = (0..dim).collect();
    vars.shuffle(&mut rng);

    let mut factors: Vec<Vec<usize>> = Vec::new();
    let mut rest = &vars[..];
    while !rest.is_empty() {
        let take = if rest.len() >= 2 && rng.gen_bool(0.35) { 2 } else { 1 };
        factors.push(rest[..take].to_vec());
        rest = &rest[take..];
    }
    let nblocks = rng.gen_range(1..=factors.len());
    let mut blocks: Vec<Vec<Vec<usize>>> = vec![Vec::new(); nblocks];
    for (k, f) in factors.into_iter().enumerate() {
        let b = if k < nblocks { k } else { rng.gen_range(0..nblocks) };
        blocks[b].push(f);
    }

    let name = |i: usize| format!("x{}", i + 1);
    let beta0 = round2(rng.gen_range(-2.0..2.0));
    let mut text = format!("{beta0}");
    for block in &blocks {
        let beta = round2(magnitude(&mut rng, 0.5, 3.0));
        let shapes: Vec<String> = block
            .iter()
            .map(|f| match f.as_slice() {
                [v] => uni(&mut rng, &name(*v)),
                [u, v] => bi(&mut rng, &name(*u), &name(*v), block.len() > 1),
                _ => unreachable!("factors have one or two variables"),
            })
            .collect();
        text.push_str(&format!(" + ({beta}) * {}", shapes.join(" * ")));
    }
    let lo = if rng.gen_bool(0.5) { -3.0 } else { 0.5 };

    SyntheticTarget {
        expression: parse(&text).expect("generated text parses"),
        dim,
        domain: DomainBox::uniform(dim, lo, 3.0).expect("valid bounds"),
        structure: SeparableStructure::new(dim, blocks).expect("generated partition is valid"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_are_reproducible_and_cover_all_variables() {
        for seed in 0..50 {
            let t = synthetic_target(seed);
            assert_eq!(t, synthetic_target(seed));
            assert!((2..=6).contains(&t.dim));
            assert_eq!(t.expression.variables().len(), t.dim, "{}", t.expression);
            for (_, _, f) in t.structure.iter_factors() {
                assert!(f.len() <= 2);
            }
        }
    }

    #[test]
    fn targets_are_finite_on_their_domain() {
        use crate::sampling::{draw_base_sample, SamplingPlan};
        for seed in 0..50 {
            let t = synthetic_target(seed);
            let plan = SamplingPlan::new(t.domain.clone(), 200, seed).unwrap();
            let x = draw_base_sample(&plan).unwrap();
            let e = t.expression.evaluate(&x).unwrap();
            assert!(e.valid.iter().all(|&v| v), "{}", t.expression);
        }
    }
}
