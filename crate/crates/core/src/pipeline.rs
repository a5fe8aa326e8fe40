//! Reproducible runs: configuration, artifact generation and the run manifest.
//!
//! Everything is computed first and written afterwards from a single place,
//! so parallel evaluation never touches the file system.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::average_speed_cm_per_s;
use crate::fourier::{ControlLaw, ControlParams, FourierError};
use crate::model::{ScalingContext, SystemParams};
use crate::optimizer::{
    greedy_optimize, ControlProblem, DeConfig, OptimizeError, StagePlan, StageResult, StageSummary,
};
use crate::parallel::Execution;
use crate::simulator::{
    check_constraints, simulate, ActuatorLimits, ConstraintReport, SimError, SimOptions,
    DEFAULT_STEP,
};
use crate::tracking::{
    track_simulate, PhysicalParams, PidGains, TrackingError, TrackingOptions, TrackingSummary,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

impl PipelineError {
    /// Process exit code: 1 for configuration and input problems, 2 when no
    /// admissible control was found, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Optimize(OptimizeError::Fourier(
                FourierError::InfeasibleZeroStart { .. },
            )) => 2,
            PipelineError::Config(_) | PipelineError::Io { .. } => 1,
            PipelineError::Optimize(OptimizeError::Plan(_) | OptimizeError::De(_)) => 1,
            PipelineError::Simulation(SimError::Setup(_))
            | PipelineError::Tracking(TrackingError::Setup(_)) => 1,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub physical: PhysicalParams,
    pub gains: PidGains,
    pub options: TrackingOptions,
    /// Stage whose optimized control is tracked.
    pub harmonics: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            physical: PhysicalParams::default(),
            gains: tuned_gains(),
            options: TrackingOptions::default(),
            harmonics: 3,
        }
    }
}

/// Gains used by default for tracking runs. The nominal gains
/// [`PidGains::default`] saturate and limit-cycle on this plant at 100 Hz.
pub fn tuned_gains() -> PidGains {
    PidGains {
        kp: 0.7,
        ki: 0.5,
        kd: 0.015,
        ..PidGains::default()
    }
}

/// Complete description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: SystemParams,
    pub limits: ActuatorLimits,
    pub scaling: ScalingContext,
    pub plan: StagePlan,
    pub de: DeConfig,
    pub zero_start: bool,
    /// Integration step of the dimensionless simulator.
    pub step: f64,
    /// Keep every n-th step in trajectory artifacts.
    pub record_every: usize,
    pub execution: Execution,
    pub output_dir: PathBuf,
    pub tracking: TrackingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            system: SystemParams::default(),
            limits: ActuatorLimits::default(),
            scaling: ScalingContext::default(),
            plan: StagePlan::default(),
            de: DeConfig::default(),
            zero_start: true,
            step: DEFAULT_STEP,
            record_every: 10,
            execution: Execution::default(),
            output_dir: PathBuf::from("out"),
            tracking: TrackingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config: RunConfig,
    /// SHA-256 of every artifact, keyed by file name.
    pub artifacts: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses a config document, or the config embedded in a run manifest.
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let is_manifest = value.get("artifacts").is_some() && value.get("config").is_some();
        let config: RunConfig = if is_manifest {
            serde_json::from_value::<RunManifest>(value)
                .map_err(|e| PipelineError::Config(format!("manifest: {e}")))?
                .config
        } else {
            serde_json::from_value(value).map_err(|e| PipelineError::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: String| PipelineError::Config(e);
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.system
            .validate()
            .map_err(|e| cfg(format!("system: {e}")))?;
        self.scaling
            .validate()
            .map_err(|e| cfg(format!("scaling: {e}")))?;
        self.limits
            .validate()
            .map_err(|e| cfg(format!("limits: {e}")))?;
        self.plan
            .validate()
            .map_err(|e| cfg(format!("plan: {e}")))?;
        self.de
            .validate(crate::fourier::search_dimension(
                self.plan.stages[0].harmonics,
                self.zero_start,
            ))
            .map_err(|e| cfg(format!("de: {e}")))?;
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(cfg(format!("step must be positive, got {}", self.step)));
        }
        if self.record_every == 0 {
            return Err(cfg("record_every must be at least 1".into()));
        }
        self.tracking
            .physical
            .validate()
            .map_err(|e| cfg(format!("tracking.physical: {e}")))?;
        self.tracking
            .gains
            .validate()
            .map_err(|e| cfg(format!("tracking.gains: {e}")))?;
        Ok(())
    }

    pub fn problem(&self) -> ControlProblem {
        ControlProblem {
            system: self.system,
            limits: self.limits,
            zero_start: self.zero_start,
            step: self.step,
        }
    }

    pub fn validation_horizon(&self) -> f64 {
        self.plan.validation_horizon()
    }
}

/// Named file contents waiting to be written.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn insert(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    pub fn insert_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        self.insert(name, bytes);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.files
            .iter()
            .map(|(k, v)| (k.clone(), sha256_hex(v)))
            .collect()
    }

    /// Writes every artifact plus a manifest into `dir`.
    pub fn write(&self, dir: &Path, config: &RunConfig) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(io_err(&path))?;
        }
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            artifacts: self.hashes(),
        };
        let path = dir.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(io_err(&path))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One period of the control: `tau, u, theta, theta_ddot`.
pub fn control_csv(law: &ControlLaw, step: f64) -> Vec<u8> {
    use std::fmt::Write;
    let n = (law.period / step).ceil().max(1.0) as usize;
    let mut out = String::from("tau,u,theta,theta_ddot\n");
    for i in 0..=n {
        let tau = if i == n {
            law.period
        } else {
            i as f64 * law.period / n as f64
        };
        let s = law.sample(tau);
        writeln!(out, "{tau},{},{},{}", s.theta_dot, s.theta, s.theta_ddot)
            .expect("write to string");
    }
    out.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    #[serde(flatten)]
    pub summary: StageSummary,
    pub carried_over: bool,
    pub distance_cm: f64,
    pub speed_cm_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub seed: u64,
    /// Validation horizon (dimensionless).
    pub horizon: f64,
    pub horizon_s: f64,
    pub stages: Vec<StageReport>,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizeRun {
    pub results: Vec<StageResult>,
    pub summary: RunSummary,
    pub artifacts: Artifacts,
}

/// Trajectory CSV of a control over `horizon`, decimated by `record_every`.
pub fn trajectory_artifact(
    law: &ControlLaw,
    config: &RunConfig,
    horizon: f64,
) -> Result<(Vec<u8>, ConstraintReport, f64), PipelineError> {
    let options = SimOptions {
        step: config.step,
        record_every: Some(config.record_every),
    };
    let out = simulate(law, &config.system, &config.limits, horizon, &options)?;
    let report = check_constraints(law, &config.limits, &config.system, horizon, config.step);
    let mut bytes = Vec::new();
    out.trajectory
        .write_csv(&mut bytes)
        .expect("write to memory");
    Ok((bytes, report, out.distance))
}

/// Runs the staged optimization and prepares all artifacts.
pub fn run_optimize(config: &RunConfig) -> Result<OptimizeRun, PipelineError> {
    config.validate()?;
    let results = greedy_optimize(
        &config.plan,
        &config.problem(),
        &config.de,
        config.execution,
    )?;
    let horizon = config.validation_horizon();
    let mut artifacts = Artifacts::default();
    let mut stages = Vec::with_capacity(results.len());
    for r in &results {
        let law = r.best_params.reconstruct()?;
        let k = r.harmonics;
        artifacts.insert_json(format!("stage_{k}.json"), r);
        artifacts.insert(format!("control_{k}.csv"), control_csv(&law, config.step));
        let (trajectory, _, _) = trajectory_artifact(&law, config, horizon)?;
        artifacts.insert(format!("trajectory_{k}.csv"), trajectory);
        stages.push(StageReport {
            summary: StageSummary::from(r),
            carried_over: r.carried_over,
            distance_cm: config.scaling.position_cm(r.distance),
            speed_cm_per_s: average_speed_cm_per_s(r.distance, horizon, &config.scaling),
        });
    }
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        seed: config.de.seed,
        horizon,
        horizon_s: config.scaling.to_seconds(horizon),
        feasible: results.iter().all(|r| r.report.feasible),
        stages,
    };
    artifacts.insert_json("summary.json", &summary);
    Ok(OptimizeRun {
        results,
        summary,
        artifacts,
    })
}

/// Control description accepted by the simulate and track commands.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ParamsInput {
    Stage(Box<StageResult>),
    Params(ControlParams),
    Law(ControlLaw),
}

impl ParamsInput {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|_| {
            PipelineError::Config(
                "params file is neither a stage result, control parameters nor a control law"
                    .into(),
            )
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn law(&self) -> Result<ControlLaw, PipelineError> {
        let law = match self {
            ParamsInput::Stage(s) => s.best_params.reconstruct()?,
            ParamsInput::Params(p) => p.reconstruct()?,
            ParamsInput::Law(l) => l.clone(),
        };
        Ok(law)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub horizon: f64,
    pub distance: f64,
    pub distance_cm: f64,
    pub speed_cm_per_s: f64,
    pub feasible: bool,
    pub constraints: ConstraintReport,
}

#[derive(Debug, Clone)]
pub struct SimulateRun {
    pub report: SimulationReport,
    pub trajectory: Vec<u8>,
}

/// Simulates a control over `periods` of its own period, or over the
/// configured validation horizon.
pub fn run_simulate(
    law: &ControlLaw,
    config: &RunConfig,
    periods: Option<usize>,
) -> Result<SimulateRun, PipelineError> {
    let horizon = match periods {
        Some(0) => {
            return Err(PipelineError::Config(
                "horizon must be at least one period".into(),
            ))
        }
        Some(n) => n as f64 * law.period,
        None => config.validation_horizon(),
    };
    let (trajectory, constraints, distance) = trajectory_artifact(law, config, horizon)?;
    Ok(SimulateRun {
        report: SimulationReport {
            horizon,
            distance,
            distance_cm: config.scaling.position_cm(distance),
            speed_cm_per_s: average_speed_cm_per_s(distance, horizon, &config.scaling),
            feasible: constraints.feasible,
            constraints,
        },
        trajectory,
    })
}

#[derive(Debug, Clone)]
pub struct TrackRun {
    pub summary: TrackingSummary,
    pub csv: Vec<u8>,
}

pub fn run_track(law: &ControlLaw, tracking: &TrackingConfig) -> Result<TrackRun, PipelineError> {
    let result = track_simulate(law, &tracking.physical, &tracking.gains, &tracking.options)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv).expect("write to memory");
    Ok(TrackRun {
        summary: result.summary,
        csv,
    })
}
