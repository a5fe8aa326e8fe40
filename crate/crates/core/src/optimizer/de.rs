//! DE/rand/1/bin differential evolution over a box.
//!
//! All random draws of a generation happen on the calling thread before the
//! trial vectors are evaluated, so the result depends only on the seed and
//! never on how evaluations are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::{self, Execution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeError {
    #[error("population size must be at least 4, got {0}")]
    PopulationTooSmall(usize),
    #[error("mutation factor must lie in (0, 2], got {0}")]
    BadMutation(f64),
    #[error("crossover rate must lie in [0, 1], got {0}")]
    BadCrossover(f64),
    #[error("penalty weight must be positive, got {0}")]
    BadPenalty(f64),
    #[error("empty search box")]
    NoDimensions,
    #[error("invalid bound ({0}, {1}) for coordinate {2}")]
    BadBound(f64, f64, usize),
    #[error("seed {index} has {got} coordinates, expected {expected}")]
    SeedDimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("{seeds} seeds do not fit in a population of {population}")]
    TooManySeeds { seeds: usize, population: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeConfig {
    /// Population size; `None` means `20 * D`.
    pub population_size: Option<usize>,
    pub mutation: f64,
    pub crossover: f64,
    pub generations: usize,
    pub seed: u64,
    /// Weight of the constraint violation in the cost.
    pub penalty: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            mutation: 0.8,
            crossover: 0.9,
            generations: 300,
            seed: 42,
            penalty: 1e3,
        }
    }
}

impl DeConfig {
    pub fn population_for(&self, dimension: usize) -> usize {
        self.population_size.unwrap_or(20 * dimension)
    }

    pub fn validate(&self, dimension: usize) -> Result<(), DeError> {
        let np = self.population_for(dimension);
        if np < 4 {
            return Err(DeError::PopulationTooSmall(np));
        }
        if !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return Err(DeError::BadMutation(self.mutation));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(DeError::BadCrossover(self.crossover));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(DeError::BadPenalty(self.penalty));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub best: Vec<f64>,
    pub best_cost: f64,
    pub evaluations: usize,
    /// Best cost after initialization and after each generation.
    pub history: Vec<f64>,
    /// Final population with its costs.
    pub population: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
}

impl DeOutcome {
    /// Final population ordered by cost, ties by index.
    pub fn ranked(&self) -> Vec<(&[f64], f64)> {
        let mut order: Vec<usize> = (0..self.costs.len()).collect();
        order.sort_by(|&a, &b| self.costs[a].total_cmp(&self.costs[b]));
        order
            .into_iter()
            .map(|i| (self.population[i].as_slice(), self.costs[i]))
            .collect()
    }
}

/// Mirrors an out-of-box coordinate back inside `[lo, hi]`.
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let mut v = x;
    if v < lo {
        v = lo + (lo - v);
    } else if v > hi {
        v = hi - (v - hi);
    }
    v.clamp(lo, hi)
}

/// Minimizes `cost` over `bounds`.
///
/// `seeds` enter generation 0 unchanged; the rest of the population is drawn
/// uniformly. With zero generations and at least one seed no search is done and
/// only the seeds are evaluated. Non-finite costs rank as `+inf`.
pub fn de_minimize<F>(
    seeds: &[Vec<f64>],
    bounds: &[(f64, f64)],
    config: &DeConfig,
    execution: Execution,
    cost: F,
) -> Result<DeOutcome, DeError>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let dim = bounds.len();
    if dim == 0 {
        return Err(DeError::NoDimensions);
    }
    config.validate(dim)?;
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(DeError::BadBound(lo, hi, i));
        }
    }
    for (index, s) in seeds.iter().enumerate() {
        if s.len() != dim {
            return Err(DeError::SeedDimension {
                index,
                got: s.len(),
                expected: dim,
            });
        }
    }
    let np = config.population_for(dim);
    if seeds.len() > np {
        return Err(DeError::TooManySeeds {
            seeds: seeds.len(),
            population: np,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eval = |x: &Vec<f64>| {
        let c = cost(x);
        if c.is_nan() {
            f64::INFINITY
        } else {
            c
        }
    };

    let mut population: Vec<Vec<f64>> = seeds.to_vec();
    if config.generations > 0 || seeds.is_empty() {
        while population.len() < np {
            population.push(
                bounds
                    .iter()
                    .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                    .collect(),
            );
        }
    }
    let mut costs = parallel::map(execution, &population, eval);
    let mut evaluations = population.len();
    let best_index = |costs: &[f64]| {
        costs
            .iter()
            .enumerate()
            .fold(0, |b, (i, &c)| if c < costs[b] { i } else { b })
    };
    let mut history = vec![costs[best_index(&costs)]];

    let n = population.len();
    for _ in 0..config.generations {
        let mut trials = Vec::with_capacity(n);
        for i in 0..n {
            let (r1, r2, r3) = distinct_three(&mut rng, n, i);
            let forced = rng.random_range(0..dim);
            let target = &population[i];
            let trial: Vec<f64> = (0..dim)
                .map(|j| {
                    let cross = rng.random::<f64>() < config.crossover || j == forced;
                    if cross {
                        let (lo, hi) = bounds[j];
                        let v = population[r1][j]
                            + config.mutation * (population[r2][j] - population[r3][j]);
                        reflect(v, lo, hi)
                    } else {
                        target[j]
                    }
                })
                .collect();
            trials.push(trial);
        }
        let trial_costs = parallel::map(execution, &trials, eval);
        evaluations += n;
        for (i, (trial, c)) in trials.into_iter().zip(trial_costs).enumerate() {
            if c <= costs[i] {
                population[i] = trial;
                costs[i] = c;
            }
        }
        history.push(costs[best_index(&costs)]);
    }

    let b = best_index(&costs);
    Ok(DeOutcome {
        best: population[b].clone(),
        best_cost: costs[b],
        evaluations,
        history,
        population,
        costs,
    })
}

/// Three distinct indices in `0..n`, all different from `exclude`.
fn distinct_three(rng: &mut ChaCha8Rng, n: usize, exclude: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let r = rng.random_range(0..n);
        if r != exclude && !taken.contains(&r) {
            return r;
        }
    };
    let a = pick(&[]);
    let b = pick(&[a]);
    let c = pick(&[a, b]);
    (a, b, c)
}
