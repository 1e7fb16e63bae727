//! Structure detection: additive blocks first, then multiplicative factors
//! inside each block.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bict::{
    additive_repetition, bict_additive, bict_multiplicative, combine, multiplicative_repetition,
    random_point, BiCTVerdict, DetectionConfig, Slice, VerdictKind,
};
use super::structure::SeparableStructure;
use super::union_find::UnionFind;
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::rng::rng_for;
use crate::sampling::DomainBox;
use crate::scalar::Scalar;
use crate::stats;

/// Verdict of one pairwise test, variables 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub i: usize,
    pub j: usize,
    pub verdict: BiCTVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub structure: SeparableStructure,
    pub additive_pairs: Vec<PairVerdict>,
    pub multiplicative_pairs: Vec<PairVerdict>,
    /// Blocks or factors merged because a whole-set test failed.
    pub merges: usize,
    /// Wall-clock seconds spent in detection.
    pub elapsed: f64,
}

fn check_domain<T: Scalar>(oracle: &dyn Oracle<T>, domain: &DomainBox<T>) -> Result<()> {
    if oracle.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            index: domain.dim(),
            dim: oracle.dim(),
        });
    }
    Ok(())
}

/// True when `f` shows no measurable variation over a random sample.
pub fn is_constant<T: Scalar>(
    oracle: &dyn Oracle<T>,
    domain: &DomainBox<T>,
    config: &DetectionConfig,
) -> Result<bool> {
    check_domain(oracle, domain)?;
    let mut rng = rng_for(config.seed, &[0xC0, oracle.dim() as u64]);
    let rows = config.samples.max(10 * oracle.dim());
    let pts: Vec<Vec<T>> = (0..rows).map(|_| random_point(domain, &mut rng)).collect();
    let x = crate::matrix::Matrix::from_rows(&pts);
    let e = oracle.evaluate(&x);
    let vals: Vec<T> = e
        .values
        .iter()
        .zip(&e.valid)
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| v)
        .collect();
    if vals.is_empty() {
        return Err(Error::OracleFailure);
    }
    Ok(stats::std_dev(&vals) <= T::of(config.epsilon) * stats::mean_abs(&vals))
}

fn pairs(vars: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (a, &i) in vars.iter().enumerate() {
        for &j in &vars[a + 1..] {
            out.push((i, j));
        }
    }
    out
}

fn additive_pair<T: Scalar>(
    oracle: &dyn Oracle<T>,
    domain: &DomainBox<T>,
    config: &DetectionConfig,
    i: usize,
    j: usize,
) -> BiCTVerdict {
    let mut rng = rng_for(config.seed, &[0xA9, i as u64, j as u64]);
    let reps = (0..config.repetitions)
        .map(|_| {
            let context = random_point(domain, &mut rng);
            let slice = Slice {
                varying: &[i],
                anchored: &[j],
                context: &context,
            };
            additive_repetition(oracle, domain, &slice, config, &mut rng)
        })
        .collect();
    combine(reps)
}

fn multiplicative_pair<T: Scalar>(
    oracle: &dyn Oracle<T>,
    domain: &DomainBox<T>,
    config: &DetectionConfig,
    i: usize,
    j: usize,
) -> BiCTVerdict {
    let mut rng = rng_for(config.seed, &[0x39, i as u64, j as u64]);
    let reps = (0..config.repetitions)
        .map(|_| {
            let context = random_point(domain, &mut rng);
            let slice = Slice {
                varying: &[i],
                anchored: &[j],
                context: &context,
            };
            multiplicative_repetition(oracle, domain, &slice, config, &mut rng)
        })
        .collect();
    combine(reps)
}

/// Groups from the union-find over interacting pairs, as sorted variable sets.
fn components(vars: &[usize], verdicts: &[PairVerdict]) -> Vec<Vec<usize>> {
    let pos = |v: usize| vars.iter().position(|&u| u == v).unwrap();
    let mut uf = UnionFind::new(vars.len());
    for p in verdicts {
        if p.verdict.kind == VerdictKind::NotSeparable {
            uf.union(pos(p.i), pos(p.j));
        }
    }
    uf.components()
        .into_iter()
        .map(|c| {
            let mut g: Vec<usize> = c.into_iter().map(|k| vars[k]).collect();
            g.sort_unstable();
            g
        })
        .collect()
}

/// Merges every group failing `passes` into one until all pass.
fn merge_failing(
    mut groups: Vec<Vec<usize>>,
    mut passes: impl FnMut(&[usize]) -> Result<bool>,
) -> Result<(Vec<Vec<usize>>, usize)> {
    let mut merges = 0;
    while groups.len() > 1 {
        let mut failing = Vec::new();
        for (k, g) in groups.iter().enumerate() {
            if !passes(g)? {
                failing.push(k);
            }
        }
        if failing.is_empty() {
            break;
        }
        // A single failing group absorbs the smallest remaining one.
        if failing.len() == 1 {
            let other = (0..groups.len())
                .filter(|&k| k != failing[0])
                .min_by_key(|&k| groups[k].len())
                .unwrap();
            failing.push(other);
        }
        failing.sort_unstable();
        let mut merged = Vec::new();
        for &k in failing.iter().rev() {
            merged.extend(groups.remove(k));
        }
        merged.sort_unstable();
        groups.push(merged);
        merges += 1;
    }
    Ok((groups, merges))
}

/// Additive blocks: pairwise tests joined by union-find, then each block is
/// confirmed by a whole-block additive test.
pub fn detect_blocks<T: Scalar>(
    oracle: &dyn Oracle<T>,
    domain: &DomainBox<T>,
    config: &DetectionConfig,
) -> Result<(Vec<Vec<usize>>, Vec<PairVerdict>, usize)> {
    config.validate()?;
    check_domain(oracle, domain)?;
    let vars: Vec<usize> = (0..oracle.dim()).collect();
    let verdicts: Vec<PairVerdict> = pairs(&vars)
        .into_par_iter()
        .map(|(i, j)| PairVerdict {
            i,
            j,
            verdict: additive_pair(oracle, domain, config, i, j),
        })
        .collect();
    let groups = components(&vars, &verdicts);
    let (blocks, merges) = merge_failing(groups, |g| {
        let v = bict_additive(oracle, g, domain, config)?;
        Ok(v.kind != VerdictKind::NotSeparable)
    })?;
    Ok((blocks, verdicts, merges))
}

/// Multiplicative factors of one block, confirmed by whole-factor tests.
pub fn detect_factors<T: Scalar>(
    oracle: &dyn Oracle<T>,
    block: &[usize],
    domain: &DomainBox<T>,
    config: &DetectionConfig,
) -> Result<(Vec<Vec<usize>>, Vec<PairVerdict>, usize)> {
    config.validate()?;
    check_domain(oracle, domain)?;
    if block.len() < 2 {
        return Ok((vec![block.to_vec()], Vec::new(), 0));
    }
    let verdicts: Vec<PairVerdict> = pairs(block)
        .into_par_iter()
        .map(|(i, j)| PairVerdict {
            i,
            j,
            verdict: multiplicative_pair(oracle, domain, config, i, j),
        })
        .collect();
    let groups = components(block, &verdicts);
    let mut rng = rng_for(config.seed, &[0xF5, block[0] as u64]);
    let context = random_point(domain, &mut rng);
    let (factors, merges) = merge_failing(groups, |g| {
        let v = bict_multiplicative(oracle, g, block, &context, domain, config)?;
        Ok(v.kind != VerdictKind::NotSeparable)
    })?;
    Ok((factors, verdicts, merges))
}

/// Full block/factor structure of `oracle` over `domain`.
pub fn detect_structure<T: Scalar>(
    oracle: &dyn Oracle<T>,
    domain: &DomainBox<T>,
    config: &DetectionConfig,
) -> Result<Detection> {
    let start = Instant::now();
    config.validate()?;
    check_domain(oracle, domain)?;
    let n = oracle.dim();
    if is_constant(oracle, domain, config)? {
        return Ok(Detection {
            structure: SeparableStructure::constant(n),
            additive_pairs: Vec::new(),
            multiplicative_pairs: Vec::new(),
            merges: 0,
            elapsed: start.elapsed().as_secs_f64(),
        });
    }
    let (blocks, additive_pairs, mut merges) = detect_blocks(oracle, domain, config)?;
    let mut multiplicative_pairs = Vec::new();
    let mut layout = Vec::with_capacity(blocks.len());
    for block in &blocks {
        let (factors, verdicts, m) = detect_factors(oracle, block, domain, config)?;
        multiplicative_pairs.extend(verdicts);
        merges += m;
        layout.push(factors);
    }
    Ok(Detection {
        structure: SeparableStructure::new(n, layout)?,
        additive_pairs,
        multiplicative_pairs,
        merges,
        elapsed: start.elapsed().as_secs_f64(),
    })
}
