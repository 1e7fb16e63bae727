//! Differential evolution (rand/1/bin with dithered F).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct DeSettings {
    pub population: usize,
    pub generations: usize,
    pub lower: f64,
    pub upper: f64,
    /// Box that most of the random initial population is drawn from.
    pub init_lower: f64,
    pub init_upper: f64,
    /// Fraction of random members drawn from `[init_lower, init_upper]`.
    pub init_inner_fraction: f64,
    pub crossover: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Stop as soon as the best cost is at or below this value.
    pub target: f64,
}

impl DeSettings {
    pub fn new(population: usize, generations: usize, lower: f64, upper: f64) -> Self {
        Self {
            population,
            generations,
            lower,
            upper,
            init_lower: lower,
            init_upper: upper,
            init_inner_fraction: 1.0,
            crossover: 0.9,
            f_min: 0.5,
            f_max: 1.0,
            target: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Final population sorted by cost.
    pub population: Vec<(Vec<f64>, f64)>,
    /// Best cost after initialization and after every generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn sanitize(c: f64) -> f64 {
    if c.is_nan() {
        f64::INFINITY
    } else {
        c
    }
}

/// Minimizes `cost` over `[lower, upper]^dim`.
///
/// `seeds` fill the initial population first. Trial vectors are generated
/// sequentially from `rng` and evaluated in parallel, so the result depends
/// only on the seed.
pub fn differential_evolution<F>(
    cost: F,
    dim: usize,
    settings: &DeSettings,
    seeds: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> DeOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let np = settings.population.max(4);
    let (lo, hi) = (settings.lower, settings.upper);
    let mut pop: Vec<Vec<f64>> = seeds
        .iter()
        .take(np)
        .map(|s| s.iter().map(|v| v.clamp(lo, hi)).collect())
        .collect();
    while pop.len() < np {
        let inner = rng.gen::<f64>() < settings.init_inner_fraction;
        let (a, b) = if inner {
            (settings.init_lower.max(lo), settings.init_upper.min(hi))
        } else {
            (lo, hi)
        };
        pop.push((0..dim).map(|_| rng.gen_range(a..=b)).collect());
    }
    let mut costs: Vec<f64> = pop.par_iter().map(|p| sanitize(cost(p))).collect();
    let mut evaluations = np;
    let best_of = |costs: &[f64]| {
        costs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap()
    };
    let mut best = best_of(&costs);
    let mut history = vec![costs[best]];

    if dim > 0 {
        for _ in 0..settings.generations {
            if costs[best] <= settings.target {
                break;
            }
            let f = rng.gen_range(settings.f_min..=settings.f_max);
            let trials: Vec<Vec<f64>> = (0..np)
                .map(|i| {
                    let pick = |rng: &mut ChaCha8Rng, taken: &[usize]| loop {
                        let r = rng.gen_range(0..np);
                        if !taken.contains(&r) {
                            return r;
                        }
                    };
                    let r1 = pick(rng, &[i]);
                    let r2 = pick(rng, &[i, r1]);
                    let r3 = pick(rng, &[i, r1, r2]);
                    let jrand = rng.gen_range(0..dim);
                    (0..dim)
                        .map(|j| {
                            if j == jrand || rng.gen::<f64>() < settings.crossover {
                                let v = pop[r1][j] + f * (pop[r2][j] - pop[r3][j]);
                                // Out-of-bounds moves land between parent and bound.
                                if v < lo {
                                    (lo + pop[i][j]) / 2.0
                                } else if v > hi {
                                    (hi + pop[i][j]) / 2.0
                                } else {
                                    v
                                }
                            } else {
                                pop[i][j]
                            }
                        })
                        .collect()
                })
                .collect();
            let trial_costs: Vec<f64> = trials.par_iter().map(|t| sanitize(cost(t))).collect();
            evaluations += np;
            for (i, (t, c)) in trials.into_iter().zip(trial_costs).enumerate() {
                if c <= costs[i] {
                    pop[i] = t;
                    costs[i] = c;
                }
            }
            best = best_of(&costs);
            history.push(costs[best]);
        }
    }

    let mut population: Vec<(Vec<f64>, f64)> = pop.into_iter().zip(costs).collect();
    population.sort_by(|a, b| a.1.total_cmp(&b.1));
    DeOutcome {
        best: population[0].0.clone(),
        best_cost: population[0].1,
        population,
        history,
        evaluations,
    }
}
