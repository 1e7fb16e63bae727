//! Single-tree genetic programming with linear scaling.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lm::levenberg_marquardt;
use super::{EngineConfig, EngineMetadata, FactorModel, FitMode};
use crate::error::{Error, Result};
use crate::expr::{BinaryOp, Expression, UnaryOp};
use crate::matrix::Matrix;
use crate::rng::rng_for;
use crate::sampling::MIN_TRAINING_ROWS;
use crate::stats;

const MAX_INITIAL_DEPTH: usize = 4;
const MAX_DEPTH: usize = 10;
const MAX_NODES: usize = 80;
const TOURNAMENT: usize = 4;
const CROSSOVER_RATE: f64 = 0.85;
const STALL_GENERATIONS: usize = 50;
const STALL_IMPROVEMENT: f64 = 1e-12;
const CONSTANT_RANGE: f64 = 5.0;

const UNARY: [UnaryOp; 4] = [UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp, UnaryOp::Ln];
const BINARY: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

#[derive(Debug, Clone, PartialEq)]
pub struct GpOutcome {
    pub model: FactorModel,
    /// Best-ever MSE after each generation.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Scored {
    tree: Expression,
    mse: f64,
    scale: f64,
    intercept: f64,
}

struct Data<'a> {
    x: &'a Matrix<f64>,
    y: &'a [f64],
    mode: FitMode,
}

impl Data<'_> {
    /// Linearly scaled fit of `tree` to `y`; infinite MSE on any invalid row.
    fn score(&self, tree: Expression) -> Scored {
        let bad = |tree| Scored {
            tree,
            mse: f64::INFINITY,
            scale: 0.0,
            intercept: 0.0,
        };
        let Ok(e) = tree.evaluate(self.x) else {
            return bad(tree);
        };
        if !e.all_valid() {
            return bad(tree);
        }
        let v = &e.values;
        let (intercept, scale) = match self.mode {
            FitMode::Scaled => (0.0, stats::fit_through_origin(v, self.y)),
            FitMode::ScaledWithIntercept => {
                if stats::std_dev(v) == 0.0 {
                    (stats::mean(self.y), 0.0)
                } else {
                    let l = stats::fit_line(v, self.y);
                    (l.intercept, l.slope)
                }
            }
        };
        let mse = v
            .iter()
            .zip(self.y)
            .map(|(f, y)| {
                let r = intercept + scale * f - y;
                r * r
            })
            .sum::<f64>()
            / v.len() as f64;
        if mse.is_finite() && scale.is_finite() {
            Scored {
                tree,
                mse,
                scale,
                intercept,
            }
        } else {
            bad(tree)
        }
    }

    /// Tunes the constants of `s.tree` by Levenberg-Marquardt.
    fn polish(&self, s: &Scored) -> Scored {
        let n = s.tree.constant_count();
        if n == 0 || !s.mse.is_finite() {
            return s.clone();
        }
        let mut start = Vec::with_capacity(n);
        let mut tree = s.tree.clone();
        tree.constants_mut(&mut |c| start.push(*c));
        let with = |p: &[f64]| {
            let mut t = tree.clone();
            let mut k = 0;
            t.constants_mut(&mut |c| {
                *c = p[k];
                k += 1;
            });
            t
        };
        let residuals = |p: &[f64]| {
            let sc = self.score(with(p));
            if !sc.mse.is_finite() {
                return None;
            }
            let e = sc.tree.evaluate(self.x).ok()?;
            Some(
                e.values
                    .iter()
                    .zip(self.y)
                    .map(|(f, y)| sc.intercept + sc.scale * f - y)
                    .collect(),
            )
        };
        let out = levenberg_marquardt(residuals, &start, &vec![true; n], 30);
        let polished = self.score(with(&out.params));
        if polished.mse < s.mse {
            polished
        } else {
            s.clone()
        }
    }
}

fn random_terminal(arity: usize, rng: &mut ChaCha8Rng) -> Expression {
    if rng.gen_bool(0.7) {
        Expression::Var(rng.gen_range(0..arity))
    } else {
        Expression::Const(rng.gen_range(-CONSTANT_RANGE..=CONSTANT_RANGE))
    }
}

/// Random tree; `full` grows every branch to `depth`.
fn random_tree(arity: usize, depth: usize, full: bool, rng: &mut ChaCha8Rng) -> Expression {
    let leaf = depth <= 1 || (!full && rng.gen_bool(0.3));
    if leaf {
        return random_terminal(arity, rng);
    }
    if rng.gen_bool(0.4) {
        let op = *UNARY.choose(rng).unwrap();
        Expression::unary(op, random_tree(arity, depth - 1, full, rng))
    } else {
        let op = *BINARY.choose(rng).unwrap();
        let l = random_tree(arity, depth - 1, full, rng);
        let r = random_tree(arity, depth - 1, full, rng);
        Expression::binary(op, l, r)
    }
}

fn subtree(e: &Expression, mut index: usize) -> &Expression {
    let mut node = e;
    loop {
        if index == 0 {
            return node;
        }
        index -= 1;
        match node {
            Expression::Unary(_, c) => node = c,
            Expression::Binary(_, l, r) => {
                let n = l.node_count();
                if index < n {
                    node = l;
                } else {
                    index -= n;
                    node = r;
                }
            }
            _ => unreachable!("index within node count"),
        }
    }
}

fn replace_subtree(e: &Expression, index: usize, new: &Expression) -> Expression {
    if index == 0 {
        return new.clone();
    }
    match e {
        Expression::Unary(op, c) => Expression::unary(*op, replace_subtree(c, index - 1, new)),
        Expression::Binary(op, l, r) => {
            let n = l.node_count();
            if index - 1 < n {
                Expression::binary(*op, replace_subtree(l, index - 1, new), (**r).clone())
            } else {
                Expression::binary(*op, (**l).clone(), replace_subtree(r, index - 1 - n, new))
            }
        }
        _ => unreachable!("index within node count"),
    }
}

fn crossover(a: &Expression, b: &Expression, rng: &mut ChaCha8Rng) -> Expression {
    let i = rng.gen_range(0..a.node_count());
    let j = rng.gen_range(0..b.node_count());
    replace_subtree(a, i, subtree(b, j))
}

fn point_mutation(e: &Expression, arity: usize, rng: &mut ChaCha8Rng) -> Expression {
    let i = rng.gen_range(0..e.node_count());
    let node = match subtree(e, i) {
        Expression::Const(c) => {
            if rng.gen_bool(0.5) {
                Expression::Const(c + rng.gen_range(-1.0..1.0) * c.abs().max(0.1))
            } else {
                random_terminal(arity, rng)
            }
        }
        Expression::Var(_) | Expression::Param(_) => random_terminal(arity, rng),
        Expression::Unary(_, c) => Expression::Unary(*UNARY.choose(rng).unwrap(), c.clone()),
        Expression::Binary(_, l, r) => {
            Expression::Binary(*BINARY.choose(rng).unwrap(), l.clone(), r.clone())
        }
    };
    replace_subtree(e, i, &node)
}

fn subtree_mutation(e: &Expression, arity: usize, rng: &mut ChaCha8Rng) -> Expression {
    let i = rng.gen_range(0..e.node_count());
    let depth = rng.gen_range(1..=3);
    replace_subtree(e, i, &random_tree(arity, depth, false, rng))
}

fn within_limits(e: &Expression) -> bool {
    e.depth() <= MAX_DEPTH && e.node_count() <= MAX_NODES
}

/// Ramped half-and-half over depths 2..=MAX_INITIAL_DEPTH.
fn initial_population(arity: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Expression> {
    (0..size)
        .map(|i| {
            let depth = 2 + i % (MAX_INITIAL_DEPTH - 1);
            random_tree(arity, depth, i % 2 == 0, rng)
        })
        .collect()
}

fn better(a: &Scored, b: &Scored) -> bool {
    a.mse < b.mse || (a.mse == b.mse && a.tree.node_count() < b.tree.node_count())
}

fn tournament<'a>(pop: &'a [Scored], rng: &mut ChaCha8Rng) -> &'a Scored {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..TOURNAMENT {
        let c = &pop[rng.gen_range(0..pop.len())];
        if better(c, best) {
            best = c;
        }
    }
    best
}

/// Evolves a tree `psi` with `y ~ k psi` (or `c + k psi`), restarting on
/// stagnation until the MSE reaches `eps_target` or the generation budget
/// (or wall-clock limit) is spent. Returns the best individual seen.
pub fn fit_gp(x: &Matrix<f64>, y: &[f64], mode: FitMode, config: &EngineConfig) -> Result<GpOutcome> {
    config.validate()?;
    if y.len() < MIN_TRAINING_ROWS || x.nrows() != y.len() {
        return Err(Error::InsufficientData {
            valid: y.len().min(x.nrows()),
            total: x.nrows(),
            required: MIN_TRAINING_ROWS,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("response must be finite".into()));
    }
    let start = Instant::now();
    let arity = x.ncols().max(1);
    let data = Data { x, y, mode };
    let eps = config.eps();
    let size = config.population_for(arity);
    let budget = config.generations_for(arity);
    let mut rng = rng_for(config.seed, &[0x69, arity as u64]);

    let finish = |best: Scored, generations, restarts, timed_out, history| {
        let meets_tolerance = best.mse <= eps;
        GpOutcome {
            model: FactorModel {
                variables: Vec::new(),
                expression: best.tree,
                mse: best.mse,
                local_scale: best.scale,
                intercept: (mode == FitMode::ScaledWithIntercept).then_some(best.intercept),
                meets_tolerance,
                fallback: false,
                metadata: EngineMetadata::Gp {
                    generations,
                    restarts,
                    timed_out,
                },
            },
            history,
        }
    };

    let constant = data.score(Expression::Const(1.0));
    if y.iter().all(|&v| v == y[0]) {
        let exact = match mode {
            FitMode::Scaled => Scored {
                scale: y[0],
                intercept: 0.0,
                mse: 0.0,
                ..constant
            },
            FitMode::ScaledWithIntercept => Scored {
                scale: 0.0,
                intercept: y[0],
                mse: 0.0,
                ..constant
            },
        };
        return Ok(finish(exact, 0, 0, false, vec![0.0]));
    }

    let mut best = constant;
    let mut history = Vec::new();
    let mut generations = 0;
    let mut restarts = 0;
    let mut timed_out = false;
    'runs: while generations < budget {
        let trees = initial_population(arity, size, &mut rng);
        let mut pop: Vec<Scored> = trees.into_par_iter().map(|t| data.score(t)).collect();
        let mut run_best = f64::INFINITY;
        let mut stall_ref = f64::INFINITY;
        let mut stall = 0;
        loop {
            let leader = pop
                .iter()
                .fold(&pop[0], |acc, s| if better(s, acc) { s } else { acc })
                .clone();
            if better(&leader, &best) {
                best = leader.clone();
            }
            run_best = run_best.min(leader.mse);
            history.push(best.mse);
            if best.mse <= eps {
                break 'runs;
            }
            if let Some(limit) = config.time_limit {
                if start.elapsed().as_secs_f64() >= limit {
                    timed_out = true;
                    break 'runs;
                }
            }
            if stall_ref - run_best >= STALL_IMPROVEMENT || stall_ref.is_infinite() {
                stall_ref = run_best;
                stall = 0;
            } else {
                stall += 1;
            }
            if stall >= STALL_GENERATIONS {
                let polished = data.polish(&leader);
                if better(&polished, &best) {
                    best = polished;
                }
                restarts += 1;
                if best.mse <= eps {
                    break 'runs;
                }
                continue 'runs;
            }
            if generations >= budget {
                break 'runs;
            }
            generations += 1;
            let mut children = vec![leader.tree];
            while children.len() < size {
                let p = tournament(&pop, &mut rng);
                let child = if rng.gen_bool(CROSSOVER_RATE) {
                    let q = tournament(&pop, &mut rng);
                    crossover(&p.tree, &q.tree, &mut rng)
                } else if rng.gen_bool(0.5) {
                    subtree_mutation(&p.tree, arity, &mut rng)
                } else {
                    point_mutation(&p.tree, arity, &mut rng)
                };
                children.push(if within_limits(&child) {
                    child
                } else {
                    p.tree.clone()
                });
            }
            pop = children.into_par_iter().map(|t| data.score(t)).collect();
        }
    }
    if best.mse > eps {
        let polished = data.polish(&best);
        if better(&polished, &best) {
            best = polished;
            if let Some(last) = history.last_mut() {
                *last = best.mse;
            }
        }
    }
    Ok(finish(best, generations, restarts, timed_out, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn grid(rows: usize, lo: f64, hi: f64) -> Matrix<f64> {
        let v: Vec<f64> = (0..rows)
            .map(|i| lo + (hi - lo) * i as f64 / (rows - 1) as f64)
            .collect();
        Matrix::from_row_major(rows, 1, v)
    }

    #[test]
    fn constant_response_first_generation() {
        let x = grid(50, -3.0, 3.0);
        let y = vec![4.2; 50];
        let out = fit_gp(&x, &y, FitMode::Scaled, &EngineConfig::gp()).unwrap();
        assert_eq!(out.model.mse, 0.0);
        assert_eq!(out.model.expression, Expression::Const(1.0));
        assert!(matches!(out.model.metadata, EngineMetadata::Gp { generations: 0, .. }));
    }

    #[test]
    fn finds_sine() {
        let x = grid(100, -3.0, 3.0);
        let y = parse("sin(x1)").unwrap().evaluate(&x).unwrap().values;
        let cfg = EngineConfig {
            generations: Some(2000),
            ..EngineConfig::gp()
        };
        let out = fit_gp(&x, &y, FitMode::Scaled, &cfg).unwrap();
        assert!(out.model.mse <= 1e-8, "{}", out.model.mse);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_rows_get_infinite_fitness() {
        let x = grid(20, -1.0, 1.0);
        let y = vec![0.5; 20];
        let d = Data {
            x: &x,
            y: &y,
            mode: FitMode::Scaled,
        };
        assert!(d.score(parse("ln(x1)").unwrap()).mse.is_infinite());
    }

    #[test]
    fn deterministic_per_seed() {
        let x = grid(40, -2.0, 2.0);
        let y = parse("x1 * exp(x1)").unwrap().evaluate(&x).unwrap().values;
        let cfg = EngineConfig {
            generations: Some(30),
            ..EngineConfig::gp()
        };
        let a = fit_gp(&x, &y, FitMode::ScaledWithIntercept, &cfg).unwrap();
        let b = fit_gp(&x, &y, FitMode::ScaledWithIntercept, &cfg).unwrap();
        assert_eq!(a.model.expression, b.model.expression);
        assert_eq!(a.model.mse.to_bits(), b.model.mse.to_bits());
    }

    #[test]
    fn subtree_surgery() {
        let e = parse("sin(x1) + 2 * x2").unwrap();
        assert_eq!(subtree(&e, 1).to_string(), "sin(x1)");
        assert_eq!(subtree(&e, 3).to_string(), "2 * x2");
        let r = replace_subtree(&e, 3, &Expression::Var(0));
        assert_eq!(r.to_string(), "sin(x1) + x1");
    }

    #[test]
    fn too_few_rows() {
        let x = grid(5, 0.0, 1.0);
        assert!(fit_gp(&x, &[1.0; 5], FitMode::Scaled, &EngineConfig::gp()).is_err());
    }
}
