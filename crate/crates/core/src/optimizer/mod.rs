//! Differential evolution and the staged harmonic-doubling scheduler.

pub mod de;
pub mod greedy;

pub use de::{de_minimize, DeConfig, DeError, DeOutcome};
pub use greedy::{
    cost, greedy_optimize, greedy_optimize_with_schedule, validate_params, ControlProblem,
    CostHorizon, OptimizeError, Stage, StagePlan, StageResult, StageSummary, Validation,
    SPAN_FLOOR,
};
