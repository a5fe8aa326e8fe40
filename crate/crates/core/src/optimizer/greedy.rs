//! Staged optimization with harmonic doubling.
//!
//! Each stage optimizes a control with twice the harmonics of the previous
//! one over twice the period. The previous optimum, lifted into the new basis,
//! is part of the initial population; since DE never discards a better
//! incumbent, stage quality cannot decrease. The reported distance of every
//! stage comes from a simulation over the full validation horizon.

use std::f64::consts::TAU;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::de::{de_minimize, DeConfig, DeError};
use crate::fourier::{
    coordinate_bounds, ControlBounds, ControlLaw, ControlParams, FourierError, HarmonicBasis,
};
use crate::model::SystemParams;
use crate::parallel::Execution;
use crate::simulator::{
    check_constraints, simulate, ActuatorLimits, ConstraintReport, SimError, SimOptions,
    DEFAULT_STEP,
};

/// Lower edge of `p` and `q` in the search box.
pub const SPAN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("invalid stage plan: {0}")]
    Plan(String),
    #[error(transparent)]
    De(#[from] DeError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub harmonics: usize,
    pub omega: f64,
}

impl Stage {
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }
}

/// Time span the optimizer's cost simulates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostHorizon {
    /// One period of the stage's control.
    #[default]
    OnePeriod,
    /// The full validation horizon.
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
    pub cost_horizon: CostHorizon,
    /// Number of periods of the first stage covered by the validation run.
    pub validation_periods: usize,
}

impl Default for StagePlan {
    fn default() -> Self {
        Self {
            stages: vec![
                Stage {
                    harmonics: 3,
                    omega: 1.0,
                },
                Stage {
                    harmonics: 6,
                    omega: 0.5,
                },
                Stage {
                    harmonics: 12,
                    omega: 0.25,
                },
            ],
            cost_horizon: CostHorizon::OnePeriod,
            validation_periods: 24,
        }
    }
}

impl StagePlan {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let first = self
            .stages
            .first()
            .ok_or_else(|| OptimizeError::Plan("at least one stage is required".into()))?;
        HarmonicBasis::new(first.harmonics, first.omega)?;
        for w in self.stages.windows(2) {
            if w[1].harmonics != 2 * w[0].harmonics
                || (w[1].omega - w[0].omega / 2.0).abs() > 1e-15 * w[0].omega
            {
                return Err(OptimizeError::Plan(format!(
                    "stage ({}, {}) must double the harmonics and halve the frequency of ({}, {})",
                    w[1].harmonics, w[1].omega, w[0].harmonics, w[0].omega
                )));
            }
        }
        if self.validation_periods == 0 {
            return Err(OptimizeError::Plan(
                "validation_periods must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Total dimensionless duration of a validation run.
    pub fn validation_horizon(&self) -> f64 {
        self.validation_periods as f64 * self.stages[0].period()
    }

    /// Keeps only the first `n` stages.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            stages: self.stages.iter().take(n).copied().collect(),
            ..self.clone()
        }
    }
}

/// Everything about the plant a cost evaluation needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlProblem {
    pub system: SystemParams,
    pub limits: ActuatorLimits,
    pub zero_start: bool,
    /// Integration and constraint sampling step.
    pub step: f64,
}

impl Default for ControlProblem {
    fn default() -> Self {
        Self {
            system: SystemParams::default(),
            limits: ActuatorLimits::default(),
            zero_start: true,
            step: DEFAULT_STEP,
        }
    }
}

impl ControlProblem {
    /// Admissible control interval: the speed limit.
    pub fn control_bounds(&self) -> ControlBounds {
        ControlBounds::symmetric(self.limits.speed_max)
    }
}

/// `-distance + penalty * violation` over `sim_horizon`; constraints are checked
/// over `check_horizon`. Controls that cannot be reconstructed cost `penalty`.
pub fn cost(
    params: &ControlParams,
    problem: &ControlProblem,
    sim_horizon: f64,
    check_horizon: f64,
    penalty: f64,
) -> f64 {
    let Ok(law) = params.reconstruct() else {
        return penalty;
    };
    cost_of_law(&law, problem, sim_horizon, check_horizon, penalty)
}

pub fn cost_of_law(
    law: &ControlLaw,
    problem: &ControlProblem,
    sim_horizon: f64,
    check_horizon: f64,
    penalty: f64,
) -> f64 {
    let report = check_constraints(
        law,
        &problem.limits,
        &problem.system,
        check_horizon,
        problem.step,
    );
    match simulate(
        law,
        &problem.system,
        &problem.limits,
        sim_horizon,
        &SimOptions::unrecorded(problem.step),
    ) {
        Ok(out) => -out.distance + penalty * report.total_violation(),
        Err(_) => penalty,
    }
}

/// Full-horizon evaluation of a control.
#[derive(Debug, Clone)]
pub struct Validation {
    pub law: ControlLaw,
    pub distance: f64,
    pub report: ConstraintReport,
    /// Cost over the validation horizon.
    pub cost: f64,
}

pub fn validate_params(
    params: &ControlParams,
    problem: &ControlProblem,
    horizon: f64,
    penalty: f64,
) -> Result<Validation, OptimizeError> {
    let law = params.reconstruct()?;
    let report = check_constraints(
        &law,
        &problem.limits,
        &problem.system,
        horizon,
        problem.step,
    );
    let out = simulate(
        &law,
        &problem.system,
        &problem.limits,
        horizon,
        &SimOptions::unrecorded(problem.step),
    )?;
    Ok(Validation {
        cost: -out.distance + penalty * report.total_violation(),
        distance: out.distance,
        report,
        law,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub harmonics: usize,
    pub omega: f64,
    pub best_params: ControlParams,
    /// Cost over the validation horizon; equals `-distance` when feasible.
    pub best_cost: f64,
    /// Best cost seen by the optimizer over its own horizon.
    pub search_cost: f64,
    pub distance: f64,
    pub report: ConstraintReport,
    pub evaluations: usize,
    pub seed: u64,
    /// The optimizer did not beat the lifted previous solution, which is kept.
    pub carried_over: bool,
}

/// One row of the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub k: usize,
    pub omega: f64,
    pub phi: Vec<f64>,
    pub p: f64,
    pub q: f64,
    #[serde(rename = "J")]
    pub cost: f64,
    pub distance: f64,
    pub feasible: bool,
    pub evaluations: usize,
    pub seed: u64,
}

impl From<&StageResult> for StageSummary {
    fn from(r: &StageResult) -> Self {
        Self {
            k: r.harmonics,
            omega: r.omega,
            phi: r.best_params.shape.phi.clone(),
            p: r.best_params.span.p,
            q: r.best_params.span.q,
            cost: r.best_cost,
            distance: r.distance,
            feasible: r.report.feasible,
            evaluations: r.evaluations,
            seed: r.seed,
        }
    }
}

/// Per-stage generation budgets; missing entries use the DE config's value.
pub type GenerationSchedule = Vec<usize>;

pub fn greedy_optimize(
    plan: &StagePlan,
    problem: &ControlProblem,
    de_config: &DeConfig,
    execution: Execution,
) -> Result<Vec<StageResult>, OptimizeError> {
    greedy_optimize_with_schedule(plan, problem, de_config, &[], execution)
}

pub fn greedy_optimize_with_schedule(
    plan: &StagePlan,
    problem: &ControlProblem,
    de_config: &DeConfig,
    generations: &[usize],
    execution: Execution,
) -> Result<Vec<StageResult>, OptimizeError> {
    plan.validate()?;
    let validation_horizon = plan.validation_horizon();
    let bounds = problem.control_bounds();
    let penalty = de_config.penalty;
    let mut results: Vec<StageResult> = Vec::with_capacity(plan.stages.len());

    for (index, stage) in plan.stages.iter().enumerate() {
        let basis = HarmonicBasis::new(stage.harmonics, stage.omega)?;
        let sim_horizon = match plan.cost_horizon {
            CostHorizon::OnePeriod => basis.period,
            CostHorizon::Validation => validation_horizon,
        };
        let lifted = match results.last() {
            Some(prev) => Some(prev.best_params.lift()?),
            None => None,
        };
        let seeds: Vec<Vec<f64>> = lifted.iter().map(|p| p.to_vector()).collect();
        let config = DeConfig {
            seed: de_config.seed.wrapping_add(index as u64),
            generations: generations
                .get(index)
                .copied()
                .unwrap_or(de_config.generations),
            ..de_config.clone()
        };
        let box_bounds = coordinate_bounds(stage.harmonics, problem.zero_start, SPAN_FLOOR);
        // best reconstructible point seen; a failed reconstruction costs a flat
        // penalty, so the final population may hold no reconstructible member
        let tracker: Mutex<Option<(f64, Vec<f64>)>> = Mutex::new(None);
        let outcome = de_minimize(&seeds, &box_bounds, &config, execution, |x| {
            let Ok(params) = ControlParams::from_vector(basis, bounds, problem.zero_start, x)
            else {
                return penalty;
            };
            let Ok(law) = params.reconstruct() else {
                return penalty;
            };
            let c = cost_of_law(&law, problem, sim_horizon, validation_horizon, penalty);
            let mut best = tracker.lock().expect("tracker lock");
            if best.as_ref().is_none_or(|(bc, bx)| earlier(c, x, *bc, bx)) {
                *best = Some((c, x.to_vec()));
            }
            c
        })?;
        let seen = tracker.into_inner().expect("tracker lock");
        let candidate = match (seen, &lifted) {
            (Some((_, x)), _) => ControlParams::from_vector(basis, bounds, problem.zero_start, &x)?,
            (None, Some(l)) => l.clone(),
            (None, None) => {
                let best =
                    ControlParams::from_vector(basis, bounds, problem.zero_start, &outcome.best)?;
                best.reconstruct()?;
                best
            }
        };
        let validated = validate_params(&candidate, problem, validation_horizon, penalty);

        let result = match (results.last(), lifted, validated) {
            (Some(prev), Some(lifted), validated) => {
                let improves = matches!(&validated, Ok(v) if v.report.feasible && v.distance >= prev.distance)
                    || matches!(&validated, Ok(v) if !prev.report.feasible && v.cost <= prev.best_cost);
                if improves {
                    let v = validated.expect("checked above");
                    stage_result(
                        stage,
                        candidate,
                        &v,
                        outcome.best_cost,
                        outcome.evaluations,
                        config.seed,
                        false,
                    )
                } else {
                    // the lifted control is the previous control in a larger basis
                    StageResult {
                        harmonics: stage.harmonics,
                        omega: stage.omega,
                        best_params: lifted,
                        best_cost: prev.best_cost,
                        search_cost: outcome.best_cost,
                        distance: prev.distance,
                        report: prev.report,
                        evaluations: outcome.evaluations,
                        seed: config.seed,
                        carried_over: true,
                    }
                }
            }
            (_, _, validated) => {
                let v = validated?;
                stage_result(
                    stage,
                    candidate,
                    &v,
                    outcome.best_cost,
                    outcome.evaluations,
                    config.seed,
                    false,
                )
            }
        };
        results.push(result);
    }
    Ok(results)
}

/// Order on (cost, point) that does not depend on evaluation order.
fn earlier(c: f64, x: &[f64], best_c: f64, best_x: &[f64]) -> bool {
    let c = if c.is_nan() { f64::INFINITY } else { c };
    match c.total_cmp(&best_c) {
        std::cmp::Ordering::Equal => {
            x.iter()
                .zip(best_x)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                == Some(std::cmp::Ordering::Less)
        }
        o => o.is_lt(),
    }
}

fn stage_result(
    stage: &Stage,
    params: ControlParams,
    v: &Validation,
    search_cost: f64,
    evaluations: usize,
    seed: u64,
    carried_over: bool,
) -> StageResult {
    StageResult {
        harmonics: stage.harmonics,
        omega: stage.omega,
        best_params: params,
        best_cost: v.cost,
        search_cost,
        distance: v.distance,
        report: v.report,
        evaluations,
        seed,
        carried_over,
    }
}
