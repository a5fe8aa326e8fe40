//! Fixed-step integration of the capsule under a prescribed pendulum motion.
//!
//! While slipping, the friction direction is held for the whole step, which
//! makes the capsule acceleration a known function of time; the classical
//! fourth-order step then reduces to Simpson weights on three samples. A
//! velocity sign change inside a step clamps the velocity to zero and
//! re-tests the stick condition at the step end.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::ControlLaw;
use crate::model::{
    contact_load, horizontal_force, sign, FrictionMode, PendulumSample, SystemParams,
    STICK_VELOCITY_EPS,
};

/// Default dimensionless integration step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Excesses up to this size still count as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("integration diverged at tau = {tau}")]
    Diverged { tau: f64 },
    #[error("invalid simulation setup: {0}")]
    Setup(String),
}

/// Kinematic and torque limits of the pendulum actuator (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorLimits {
    pub theta_min: f64,
    pub theta_max: f64,
    pub speed_max: f64,
    /// Stall torque `u_max`.
    pub u_max_torque: f64,
    /// Slope of the torque-speed line.
    pub kappa: f64,
    /// Fraction of the available torque that may be used.
    pub torque_margin: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            theta_min: -std::f64::consts::FRAC_PI_3,
            theta_max: std::f64::consts::FRAC_PI_3,
            speed_max: 3.4,
            u_max_torque: 25.0,
            kappa: 10.85,
            torque_margin: 0.7,
        }
    }
}

impl ActuatorLimits {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.theta_min < self.theta_max) {
            return Err("theta_min must be below theta_max".into());
        }
        if !(self.speed_max > 0.0) {
            return Err("speed_max must be positive".into());
        }
        if !(self.u_max_torque > 0.0) {
            return Err("u_max_torque must be positive".into());
        }
        if !(self.kappa >= 0.0) {
            return Err("kappa must be non-negative".into());
        }
        if !(self.torque_margin > 0.0 && self.torque_margin <= 1.0) {
            return Err("torque_margin must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Usable torque at pendulum speed `theta_dot`.
    pub fn available_torque(&self, theta_dot: f64) -> f64 {
        self.torque_margin * (self.u_max_torque - self.kappa * theta_dot).abs()
    }
}

/// Worst-case constraint margins; every entry is `<= 0` when satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub max_angle_excess: f64,
    pub max_speed_excess: f64,
    pub max_torque_deficit: f64,
    pub max_leap_excess: f64,
    pub min_contact_load: f64,
    pub feasible: bool,
}

impl ConstraintReport {
    fn empty() -> Self {
        Self {
            max_angle_excess: f64::NEG_INFINITY,
            max_speed_excess: f64::NEG_INFINITY,
            max_torque_deficit: f64::NEG_INFINITY,
            max_leap_excess: f64::NEG_INFINITY,
            min_contact_load: f64::INFINITY,
            feasible: false,
        }
    }

    fn observe(&mut self, s: &PendulumSample, limits: &ActuatorLimits, system: &SystemParams) {
        let angle = (s.theta - limits.theta_max).max(limits.theta_min - s.theta);
        let speed = s.theta_dot.abs() - limits.speed_max;
        let torque = (s.theta_ddot + s.theta.sin()).abs() - limits.available_torque(s.theta_dot);
        let leap = s.theta_dot * s.theta_dot - (1.0 + system.gamma);
        self.max_angle_excess = self.max_angle_excess.max(angle);
        self.max_speed_excess = self.max_speed_excess.max(speed);
        self.max_torque_deficit = self.max_torque_deficit.max(torque);
        self.max_leap_excess = self.max_leap_excess.max(leap);
        self.min_contact_load = self.min_contact_load.min(contact_load(s, system));
    }

    fn finish(mut self) -> Self {
        self.feasible = self.max_angle_excess <= FEASIBILITY_TOL
            && self.max_speed_excess <= FEASIBILITY_TOL
            && self.max_torque_deficit <= FEASIBILITY_TOL
            && self.max_leap_excess <= FEASIBILITY_TOL
            && self.min_contact_load >= 0.0;
        self
    }

    /// Sum of the positive parts of all violations, contact loss included.
    pub fn total_violation(&self) -> f64 {
        [
            self.max_angle_excess,
            self.max_speed_excess,
            self.max_torque_deficit,
            self.max_leap_excess,
            -self.min_contact_load,
        ]
        .iter()
        .map(|v| v.max(0.0))
        .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsuleState {
    pub tau: f64,
    pub z: f64,
    pub z_dot: f64,
    pub mode: FrictionMode,
}

impl CapsuleState {
    pub fn at_rest() -> Self {
        Self {
            tau: 0.0,
            z: 0.0,
            z_dot: 0.0,
            mode: FrictionMode::Stick,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub tau: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
    pub z: f64,
    pub z_dot: f64,
    pub mode: FrictionMode,
    pub r_y: f64,
    pub r_z: f64,
    pub f_z: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub const CSV_HEADER: &'static str = "tau,theta,theta_dot,theta_ddot,z,z_dot,mode,r_y,r_z,f_z";

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.tau,
                r.theta,
                r.theta_dot,
                r.theta_ddot,
                r.z,
                r.z_dot,
                r.mode,
                r.r_y,
                r.r_z,
                r.f_z
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, String> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers().map_err(|e| e.to_string())?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| format!("missing column {name:?}"))
        };
        let idx: Vec<usize> = Self::CSV_HEADER
            .split(',')
            .map(col)
            .collect::<Result<_, _>>()?;
        let mut records = Vec::new();
        for (line, row) in reader.records().enumerate() {
            let row = row.map_err(|e| e.to_string())?;
            let num = |i: usize| -> Result<f64, String> {
                row.get(idx[i])
                    .ok_or_else(|| format!("row {}: short record", line + 2))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: {e}", line + 2))
            };
            let mode = row
                .get(idx[6])
                .ok_or_else(|| format!("row {}: short record", line + 2))?
                .parse::<FrictionMode>()?;
            records.push(TrajectoryRecord {
                tau: num(0)?,
                theta: num(1)?,
                theta_dot: num(2)?,
                theta_ddot: num(3)?,
                z: num(4)?,
                z_dot: num(5)?,
                mode,
                r_y: num(7)?,
                r_z: num(8)?,
                f_z: num(9)?,
            });
        }
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub step: f64,
    /// Keep every n-th step in the trajectory (the final state is always kept);
    /// `None` records nothing.
    pub record_every: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            record_every: Some(1),
        }
    }
}

impl SimOptions {
    pub fn unrecorded(step: f64) -> Self {
        Self {
            step,
            record_every: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trajectory: Trajectory,
    /// Constraints sampled at every integration step.
    pub report: ConstraintReport,
    pub distance: f64,
    pub final_state: CapsuleState,
}

/// Friction regime in force over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    Stick,
    /// Sliding with friction opposing `direction`.
    Slip {
        direction: f64,
    },
}

fn resolve(z_dot: f64, s: &PendulumSample, system: &SystemParams) -> (Regime, f64, f64) {
    let r_y = contact_load(s, system);
    let r_z = horizontal_force(s);
    let regime = if z_dot.abs() > STICK_VELOCITY_EPS {
        Regime::Slip {
            direction: z_dot.signum(),
        }
    } else if r_z.abs() < system.mu * r_y {
        Regime::Stick
    } else {
        Regime::Slip {
            direction: sign(r_z),
        }
    };
    (regime, r_y, r_z)
}

fn slip_accel(s: &PendulumSample, direction: f64, system: &SystemParams) -> f64 {
    let r_y = contact_load(s, system);
    (horizontal_force(s) - system.mu * r_y * direction) / (system.gamma + 1.0)
}

/// Advances `state` by `h`, with `start` the pendulum sample at `state.tau`.
fn advance(
    state: &CapsuleState,
    start: &PendulumSample,
    law: &ControlLaw,
    system: &SystemParams,
    h: f64,
    tau_next: f64,
) -> (CapsuleState, PendulumSample) {
    let end = law.sample(tau_next);
    let (regime, _, _) = resolve(state.z_dot, start, system);
    let direction = match regime {
        Regime::Stick => {
            let next = CapsuleState {
                tau: tau_next,
                z: state.z,
                z_dot: 0.0,
                mode: FrictionMode::Stick,
            };
            return (next, end);
        }
        Regime::Slip { direction } => direction,
    };
    let mid = law.sample(0.5 * (state.tau + tau_next));
    let a0 = slip_accel(start, direction, system);
    let a1 = slip_accel(&mid, direction, system);
    let a2 = slip_accel(&end, direction, system);
    let z = state.z + h * state.z_dot + h * h / 6.0 * (a0 + 2.0 * a1);
    let z_dot = state.z_dot + h / 6.0 * (a0 + 4.0 * a1 + a2);
    let next = if z_dot * direction <= 0.0 {
        // velocity reached zero inside the step: stop at the linearly
        // interpolated crossing, re-test the stick condition at the step end
        // and carry the rest of the step in the new regime
        let v0 = state.z_dot;
        let frac = if v0 == z_dot { 0.0 } else { v0 / (v0 - z_dot) };
        let z_stop = state.z + 0.5 * h * frac * v0;
        match resolve(0.0, &end, system).0 {
            Regime::Stick => CapsuleState {
                tau: tau_next,
                z: z_stop,
                z_dot: 0.0,
                mode: FrictionMode::Stick,
            },
            Regime::Slip { direction } => {
                let rest = (1.0 - frac) * h;
                let a = slip_accel(&end, direction, system);
                CapsuleState {
                    tau: tau_next,
                    z: z_stop + 0.5 * a * rest * rest,
                    z_dot: a * rest,
                    mode: FrictionMode::Slip,
                }
            }
        }
    } else {
        CapsuleState {
            tau: tau_next,
            z,
            z_dot,
            mode: FrictionMode::Slip,
        }
    };
    (next, end)
}

/// One fixed step of length `h`.
pub fn step(
    state: &CapsuleState,
    law: &ControlLaw,
    system: &SystemParams,
    h: f64,
) -> Result<CapsuleState, SimError> {
    let start = law.sample(state.tau);
    let (next, _) = advance(state, &start, law, system, h, state.tau + h);
    if !(next.z.is_finite() && next.z_dot.is_finite()) {
        return Err(SimError::Diverged { tau: next.tau });
    }
    Ok(next)
}

fn record(state: &CapsuleState, s: &PendulumSample, system: &SystemParams) -> TrajectoryRecord {
    let (regime, r_y, r_z) = resolve(state.z_dot, s, system);
    let (mode, f_z) = match regime {
        Regime::Stick => (FrictionMode::Stick, r_z),
        Regime::Slip { direction } => (FrictionMode::Slip, system.mu * r_y * direction),
    };
    TrajectoryRecord {
        tau: state.tau,
        theta: s.theta,
        theta_dot: s.theta_dot,
        theta_ddot: s.theta_ddot,
        z: state.z,
        z_dot: state.z_dot,
        mode,
        r_y,
        r_z,
        f_z,
    }
}

/// Integrates the capsule from rest over `[0, horizon]`.
pub fn simulate(
    law: &ControlLaw,
    system: &SystemParams,
    limits: &ActuatorLimits,
    horizon: f64,
    options: &SimOptions,
) -> Result<SimOutcome, SimError> {
    let h = options.step;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::Setup(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(SimError::Setup(format!("step must be positive, got {h}")));
    }
    if options.record_every == Some(0) {
        return Err(SimError::Setup("record_every must be at least 1".into()));
    }
    let n_steps = ((horizon / h) - 1e-9).ceil().max(1.0) as usize;
    let mut state = CapsuleState::at_rest();
    let mut sample = law.sample(0.0);
    let mut report = ConstraintReport::empty();
    let mut trajectory = Trajectory::default();
    if let Some(every) = options.record_every {
        trajectory.records.reserve(n_steps / every + 2);
    }

    for n in 0..n_steps {
        report.observe(&sample, limits, system);
        if let Some(every) = options.record_every {
            if n % every == 0 {
                trajectory.records.push(record(&state, &sample, system));
            }
        }
        let tau_next = if n + 1 == n_steps {
            horizon
        } else {
            (n + 1) as f64 * h
        };
        let (next, end) = advance(&state, &sample, law, system, tau_next - state.tau, tau_next);
        if !(next.z.is_finite() && next.z_dot.is_finite()) {
            return Err(SimError::Diverged { tau: tau_next });
        }
        state = next;
        sample = end;
    }
    report.observe(&sample, limits, system);
    if options.record_every.is_some() {
        trajectory.records.push(record(&state, &sample, system));
    }
    Ok(SimOutcome {
        trajectory,
        report: report.finish(),
        distance: state.z.abs(),
        final_state: state,
    })
}

/// Constraint margins over `[0, horizon]`, sampled every `sample_step` within one
/// period and extended across periods through the per-period angle drift.
pub fn check_constraints(
    law: &ControlLaw,
    limits: &ActuatorLimits,
    system: &SystemParams,
    horizon: f64,
    sample_step: f64,
) -> ConstraintReport {
    let period = law.period;
    let repetitions = ((horizon / period) - 1e-9).ceil().max(1.0) as usize;
    let n = (period / sample_step).ceil().max(1.0) as usize;
    let drift = law.per_period_drift;
    let (drift_sin, drift_cos) = drift.sin_cos();
    let mut report = ConstraintReport::empty();
    for i in 0..=n {
        let s = (i as f64 * period / n as f64).min(period);
        let base = law.sample(s);
        let speed = base.theta_dot.abs() - limits.speed_max;
        let leap = base.theta_dot * base.theta_dot - (1.0 + system.gamma);
        report.max_speed_excess = report.max_speed_excess.max(speed);
        report.max_leap_excess = report.max_leap_excess.max(leap);
        let available = limits.available_torque(base.theta_dot);
        let v2 = base.theta_dot * base.theta_dot;
        // theta + j * drift is monotone in j, so the ends bound the angle
        let last = base.theta + (repetitions - 1) as f64 * drift;
        for theta in [base.theta, last] {
            let angle = (theta - limits.theta_max).max(limits.theta_min - theta);
            report.max_angle_excess = report.max_angle_excess.max(angle);
        }
        // sin/cos of theta + j * drift by rotation
        let (mut sn, mut cs) = base.theta.sin_cos();
        let mut push = f64::NEG_INFINITY;
        let mut load = f64::INFINITY;
        for _ in 0..repetitions {
            push = push.max((base.theta_ddot + sn).abs());
            load = load.min((system.gamma + 1.0) - base.theta_ddot * sn - v2 * cs);
            let next_sn = sn * drift_cos + cs * drift_sin;
            cs = cs * drift_cos - sn * drift_sin;
            sn = next_sn;
        }
        report.max_torque_deficit = report.max_torque_deficit.max(push - available);
        report.min_contact_load = report.min_contact_load.min(load);
    }
    report.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{
        ControlBounds, ControlParams, FourierCoefficients, HarmonicBasis, ShapeCoordinates,
        SpanParams,
    };
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn paper() -> SystemParams {
        SystemParams::default()
    }

    fn sample_law() -> ControlLaw {
        ControlParams {
            basis: HarmonicBasis::new(3, 1.0).unwrap(),
            shape: ShapeCoordinates::new(vec![FRAC_PI_2, 0.9, 2.3, 1.2, 4.4]),
            span: SpanParams { p: 0.8, q: 0.9 },
            bounds: ControlBounds::symmetric(3.4),
            zero_start: true,
        }
        .reconstruct()
        .unwrap()
    }

    #[test]
    fn zero_control_stays_at_rest() {
        let law = ControlLaw::zero(1.0);
        let out = simulate(
            &law,
            &paper(),
            &ActuatorLimits::default(),
            24.0 * TAU,
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(out.distance, 0.0);
        assert!(out
            .trajectory
            .records
            .iter()
            .all(|r| r.z == 0.0 && r.mode == FrictionMode::Stick));
        assert!(out.report.feasible);
        assert_eq!(out.report.min_contact_load, 15.5);
    }

    #[test]
    fn stick_step_only_advances_time() {
        let law = ControlLaw::zero(1.0);
        let s = step(&CapsuleState::at_rest(), &law, &paper(), 1e-3).unwrap();
        assert_eq!(
            s,
            CapsuleState {
                tau: 1e-3,
                ..CapsuleState::at_rest()
            }
        );
    }

    #[test]
    fn breakaway_moves_along_the_push() {
        // theta'' = 5 cos(t) near t = 0 pushes harder than mu * r_y = 2.635
        let law = ControlLaw::from_coefficients(FourierCoefficients {
            a0: 0.0,
            a: vec![0.0],
            b: vec![5.0],
            omega: 1.0,
        });
        let h = 1e-3;
        let s = step(&CapsuleState::at_rest(), &law, &paper(), h).unwrap();
        assert_eq!(s.mode, FrictionMode::Slip);
        // small-h expansion: z' ~ h (r_z - mu r_y)/(1 + gamma) with r_z = 5, r_y = 15.5
        let expected = h * (5.0 - 0.17 * 15.5) / 15.5;
        assert!(s.z_dot > 0.0);
        assert!(
            (s.z_dot - expected).abs() < 1e-3 * expected,
            "{} vs {}",
            s.z_dot,
            expected
        );
    }

    #[test]
    fn velocity_reversal_clamps_to_zero() {
        // coasting capsule with no pendulum push decelerates at mu * g
        let law = ControlLaw::zero(1.0);
        let start = CapsuleState {
            tau: 0.0,
            z: 0.0,
            z_dot: 1e-4,
            mode: FrictionMode::Slip,
        };
        let s = step(&start, &law, &paper(), 1e-3).unwrap();
        assert_eq!(s.z_dot, 0.0);
        assert_eq!(s.mode, FrictionMode::Stick);
        // stops after v0^2 / (2 mu)
        let expected = 1e-8 / (2.0 * 0.17);
        assert!(
            (s.z - expected).abs() < 1e-12 * expected.max(1.0) + 1e-3 * expected,
            "{}",
            s.z
        );
    }

    #[test]
    fn reversal_under_push_keeps_sliding() {
        // theta'' ~ 5 at tau = 0: a capsule sliding backwards stops after
        // v0 / a_back and then slides forwards with a_fwd
        let law = ControlLaw::from_coefficients(FourierCoefficients {
            a0: 0.0,
            a: vec![0.0],
            b: vec![5.0],
            omega: 1.0,
        });
        let v0 = -1e-4;
        let start = CapsuleState {
            tau: 0.0,
            z: 0.0,
            z_dot: v0,
            mode: FrictionMode::Slip,
        };
        let h = 1e-3;
        let s = step(&start, &law, &paper(), h).unwrap();
        let a_back = (5.0 + 0.17 * 15.5) / 15.5;
        let a_fwd = (5.0 - 0.17 * 15.5) / 15.5;
        let t_stop = -v0 / a_back;
        let z_dot = a_fwd * (h - t_stop);
        let z = -v0 * v0 / (2.0 * a_back) + 0.5 * a_fwd * (h - t_stop).powi(2);
        assert_eq!(s.mode, FrictionMode::Slip);
        assert!(
            (s.z_dot - z_dot).abs() < 1e-3 * z_dot,
            "{} vs {z_dot}",
            s.z_dot
        );
        assert!((s.z - z).abs() < 1e-2 * z.abs(), "{} vs {z}", s.z);
    }

    #[test]
    fn step_refinement_converges() {
        let law = sample_law();
        let z = |h: f64| {
            simulate(
                &law,
                &paper(),
                &ActuatorLimits::default(),
                law.period,
                &SimOptions::unrecorded(h),
            )
            .unwrap()
            .final_state
            .z
        };
        let (coarse, fine) = (z(1e-3), z(1e-5));
        assert!(fine.abs() > 1e-3, "{fine}");
        assert!(((coarse - fine) / fine).abs() < 1e-3, "{coarse} vs {fine}");
    }

    #[test]
    fn stick_records_have_zero_velocity_and_bounded_friction() {
        let law = sample_law();
        let out = simulate(
            &law,
            &paper(),
            &ActuatorLimits::default(),
            2.0 * TAU,
            &SimOptions::default(),
        )
        .unwrap();
        assert!(out
            .trajectory
            .records
            .iter()
            .any(|r| r.mode == FrictionMode::Slip));
        for r in &out.trajectory.records {
            if r.mode == FrictionMode::Stick {
                assert_eq!(r.z_dot, 0.0);
            }
            assert!(r.f_z.abs() <= 0.17 * r.r_y + 1e-12);
        }
        let taus: Vec<f64> = out.trajectory.records.iter().map(|r| r.tau).collect();
        assert!(taus.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*taus.last().unwrap(), 2.0 * TAU);
    }

    #[test]
    fn deterministic() {
        let law = sample_law();
        let a = simulate(
            &law,
            &paper(),
            &ActuatorLimits::default(),
            TAU,
            &SimOptions::default(),
        )
        .unwrap();
        let b = simulate(
            &law,
            &paper(),
            &ActuatorLimits::default(),
            TAU,
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.distance.to_bits(), b.distance.to_bits());
    }

    #[test]
    fn step_refinement_agrees() {
        let law = sample_law();
        let coarse = simulate(
            &law,
            &paper(),
            &ActuatorLimits::default(),
            TAU,
            &SimOptions::unrecorded(1e-3),
        )
        .unwrap();
        let fine = simulate(
            &law,
            &paper(),
            &ActuatorLimits::default(),
            TAU,
            &SimOptions::unrecorded(1e-4),
        )
        .unwrap();
        let (a, b) = (coarse.final_state.z, fine.final_state.z);
        assert!(b.abs() > 1e-3);
        assert!((a - b).abs() <= 1e-3 * b.abs(), "{a} vs {b}");
    }

    #[test]
    fn decimation_keeps_final_state() {
        let law = sample_law();
        let out = simulate(
            &law,
            &paper(),
            &ActuatorLimits::default(),
            1.0,
            &SimOptions {
                step: 1e-3,
                record_every: Some(100),
            },
        )
        .unwrap();
        assert_eq!(out.trajectory.records.len(), 11);
        assert_eq!(out.trajectory.records.last().unwrap().tau, 1.0);
    }

    #[test]
    fn constraint_examples() {
        let limits = ActuatorLimits::default();
        let zero = check_constraints(&ControlLaw::zero(1.0), &limits, &paper(), 24.0 * TAU, 1e-3);
        assert!(zero.feasible);
        assert_eq!(zero.min_contact_load, 15.5);

        // theta' = 3.4 with theta'' = 0 and theta = 0: 0.7 |25 - 10.85 * 3.4| = 8.323
        assert!((limits.available_torque(3.4) - 8.323).abs() < 1e-12);
    }

    #[test]
    fn drift_is_checked_across_repetitions() {
        // constant speed 0.01 drifts 0.0628 rad per period
        let law = ControlLaw::from_coefficients(FourierCoefficients {
            a0: 0.02,
            a: vec![0.0],
            b: vec![0.0],
            omega: 1.0,
        });
        let limits = ActuatorLimits::default();
        assert!(check_constraints(&law, &limits, &paper(), TAU, 1e-3).feasible);
        let long = check_constraints(&law, &limits, &paper(), 24.0 * TAU, 1e-3);
        assert!(!long.feasible);
        let expected = 0.01 * 24.0 * TAU - std::f64::consts::FRAC_PI_3;
        assert!((long.max_angle_excess - expected).abs() < 1e-9);
    }

    #[test]
    fn check_agrees_with_per_step_report() {
        let law = sample_law();
        let limits = ActuatorLimits::default();
        let sim = simulate(
            &law,
            &paper(),
            &limits,
            3.0 * TAU,
            &SimOptions::unrecorded(1e-3),
        )
        .unwrap();
        let chk = check_constraints(&law, &limits, &paper(), 3.0 * TAU, 1e-3);
        assert!((sim.report.max_speed_excess - chk.max_speed_excess).abs() < 1e-5);
        assert!((sim.report.max_angle_excess - chk.max_angle_excess).abs() < 1e-5);
        assert!((sim.report.min_contact_load - chk.min_contact_load).abs() < 1e-4);
        assert!((sim.report.max_torque_deficit - chk.max_torque_deficit).abs() < 1e-4);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let law = sample_law();
        let out = simulate(
            &law,
            &paper(),
            &ActuatorLimits::default(),
            1.0,
            &SimOptions {
                step: 1e-2,
                record_every: Some(1),
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        out.trajectory.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(Trajectory::CSV_HEADER));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, out.trajectory);
        assert!(Trajectory::read_csv("tau,theta\n0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_bad_setup() {
        let law = ControlLaw::zero(1.0);
        let limits = ActuatorLimits::default();
        assert!(simulate(&law, &paper(), &limits, 0.0, &SimOptions::default()).is_err());
        assert!(simulate(&law, &paper(), &limits, 1.0, &SimOptions::unrecorded(-1.0)).is_err());
    }
}
