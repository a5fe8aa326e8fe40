//! Dimensional closed-loop simulation of the pendulum and capsule.
//!
//! The pendulum follows a reference angle through a PID controller with
//! friction and gravity compensation, sampled with zero-order hold. The motor
//! torque is limited by a linear torque-speed line. The capsule is coupled to
//! the pendulum through the full two-degree-of-freedom equations with Coulomb
//! friction at the ground.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{per_period_rmse, rmse, AnalysisError, SignalSeries};
use crate::fourier::ControlLaw;
use crate::model::{sign, FrictionMode, ScalingContext, SystemParams, STICK_VELOCITY_EPS};

/// Angle beyond which a run is considered diverged (rad).
const DIVERGENCE_ANGLE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("invalid tracking setup: {0}")]
    Setup(String),
    #[error("tracking diverged at t = {t} s with gains Kp={kp}, Ki={ki}, Kd={kd}")]
    Diverged { t: f64, kp: f64, ki: f64, kd: f64 },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Physical parameters of the prototype in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    /// Capsule mass (kg).
    #[serde(rename = "M")]
    pub capsule_mass: f64,
    /// Pendulum mass (kg).
    pub m: f64,
    pub l: f64,
    pub g: f64,
    /// Rotational stiffness (N m/rad).
    pub k_spring: f64,
    /// Rotational damping (N m s/rad).
    pub c_damp: f64,
    pub mu: f64,
    /// Motor stall torque (N m).
    #[serde(rename = "M_max")]
    pub torque_max: f64,
    /// Motor no-load speed (rad/s).
    pub omega_max: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            capsule_mass: 0.58,
            m: 0.04,
            l: 0.1,
            g: 9.81,
            k_spring: 0.0,
            c_damp: 0.0,
            mu: 0.17,
            torque_max: 1.5,
            // 330 rpm
            omega_max: 330.0 * std::f64::consts::TAU / 60.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), TrackingError> {
        let positive = [
            ("M", self.capsule_mass),
            ("m", self.m),
            ("l", self.l),
            ("g", self.g),
            ("M_max", self.torque_max),
            ("omega_max", self.omega_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrackingError::Setup(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("k_spring", self.k_spring),
            ("c_damp", self.c_damp),
            ("mu", self.mu),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TrackingError::Setup(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Slope of the torque-speed line, `M_max / omega_max`.
    pub fn zeta(&self) -> f64 {
        self.torque_max / self.omega_max
    }

    pub fn scaling(&self) -> ScalingContext {
        ScalingContext {
            l: self.l,
            m: self.m,
            g: self.g,
        }
    }

    pub fn system(&self) -> SystemParams {
        SystemParams {
            gamma: self.capsule_mass / self.m,
            mu: self.mu,
        }
    }

    /// Physical parameters matching a dimensionless system under `scaling`.
    pub fn from_system(system: &SystemParams, scaling: &ScalingContext) -> Self {
        Self {
            capsule_mass: system.gamma * scaling.m,
            m: scaling.m,
            l: scaling.l,
            g: scaling.g,
            mu: system.mu,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    #[serde(rename = "Kp")]
    pub kp: f64,
    #[serde(rename = "Ki")]
    pub ki: f64,
    #[serde(rename = "Kd")]
    pub kd: f64,
    /// Friction compensation (N m).
    pub u_f: f64,
    /// Gravity compensation (N m).
    pub u_0: f64,
    /// Controller frequency (Hz).
    pub loop_rate: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 2.0,
            ki: 0.5,
            kd: 0.05,
            u_f: 0.0,
            u_0: 0.0,
            loop_rate: 100.0,
        }
    }
}

impl PidGains {
    pub fn zero() -> Self {
        Self {
            kp: 0.0,
            ki: 0.0,
            kd: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrackingError> {
        for (name, v) in [("Kp", self.kp), ("Ki", self.ki), ("Kd", self.kd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TrackingError::Setup(format!(
                    "gain {name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.u_f.is_finite() && self.u_0.is_finite()) {
            return Err(TrackingError::Setup(
                "compensation terms must be finite".into(),
            ));
        }
        if !(self.loop_rate > 0.0 && self.loop_rate.is_finite()) {
            return Err(TrackingError::Setup(format!(
                "loop_rate must be positive, got {}",
                self.loop_rate
            )));
        }
        Ok(())
    }
}

/// PID output with friction and gravity compensation.
pub fn controller_output(
    e: f64,
    e_integral: f64,
    e_derivative: f64,
    theta: f64,
    theta_dot: f64,
    gains: &PidGains,
) -> f64 {
    gains.kp * e
        + gains.ki * e_integral
        + gains.kd * e_derivative
        + gains.u_f * sign(theta_dot)
        + gains.u_0 * theta.sin()
}

/// Torque the motor can deliver at shaft speed `theta_dot`.
pub fn available_torque(theta_dot: f64, params: &PhysicalParams) -> f64 {
    (params.torque_max - params.zeta() * theta_dot.abs()).max(0.0)
}

/// Clamps a commanded torque to the torque-speed line, keeping its sign.
pub fn motor_saturate(command: f64, theta_dot: f64, params: &PhysicalParams) -> f64 {
    let limit = available_torque(theta_dot, params);
    command.clamp(-limit, limit)
}

/// How the pendulum angle is produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMode {
    /// PID loop driving the motor.
    #[default]
    ClosedLoop,
    /// The reference angle is imposed exactly.
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingOptions {
    /// Simulated time (s).
    pub duration: f64,
    /// Physics integration step (s).
    pub physics_step: f64,
    pub mode: TrackingMode,
    /// Keep the capsule acceleration term in the pendulum equation.
    pub coupling: bool,
    /// Apply the motor torque-speed limit.
    pub saturation: bool,
    /// Encoder resolution in bits; `None` measures the exact angle.
    pub encoder_bits: Option<u32>,
    /// Record every this many physics steps; defaults to one controller period.
    pub record_every: Option<usize>,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            duration: 15.1,
            physics_step: 1e-4,
            mode: TrackingMode::ClosedLoop,
            coupling: true,
            saturation: true,
            encoder_bits: None,
            record_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingSample {
    pub t: f64,
    pub theta_ref: f64,
    pub theta: f64,
    pub x: f64,
    pub x_dot: f64,
    pub torque: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub rmse_full: f64,
    pub rmse_per_period: Vec<f64>,
    /// Reference period (s).
    pub period: f64,
    pub distance: f64,
    /// Largest ratio of applied torque to the available torque.
    pub max_torque_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub samples: Vec<TrackingSample>,
    pub summary: TrackingSummary,
}

impl TrackingResult {
    pub const CSV_HEADER: &'static str = "t,theta_ref,theta,x,x_dot,torque";

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.t, s.theta_ref, s.theta, s.x, s.x_dot, s.torque
            )?;
        }
        Ok(())
    }
}

/// Mechanical state of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Plant {
    x: f64,
    x_dot: f64,
    theta: f64,
    theta_dot: f64,
}

#[derive(Debug, Clone, Copy)]
enum Contact {
    Stick,
    Slip(f64),
}

/// Accelerations `(x'', theta'')` of the coupled plant for a fixed contact
/// regime and torque.
fn accelerations(
    p: &PhysicalParams,
    s: &Plant,
    torque: f64,
    contact: Contact,
    coupling: bool,
) -> (f64, f64) {
    let (sin, cos) = s.theta.sin_cos();
    let ml = p.m * p.l;
    let ml2 = ml * p.l;
    let rhs_theta = p.m * p.g * p.l * sin - p.k_spring * s.theta - p.c_damp * s.theta_dot + torque;
    match contact {
        Contact::Stick => (0.0, rhs_theta / ml2),
        Contact::Slip(dir) => {
            let total = p.capsule_mass + p.m;
            let w2 = s.theta_dot * s.theta_dot;
            let a11 = total;
            let a12 = -ml * cos - p.mu * dir * ml * sin;
            let b1 = -ml * w2 * sin - p.mu * dir * (total * p.g - ml * w2 * cos);
            let a21 = if coupling { -ml * cos } else { 0.0 };
            let a22 = ml2;
            let det = a11 * a22 - a12 * a21;
            (
                (b1 * a22 - a12 * rhs_theta) / det,
                (a11 * rhs_theta - a21 * b1) / det,
            )
        }
    }
}

/// Contact regime at the start of a step.
fn contact_regime(p: &PhysicalParams, s: &Plant, theta_ddot: f64) -> Contact {
    if s.x_dot.abs() > STICK_VELOCITY_EPS * p.l * (p.g / p.l).sqrt() {
        return Contact::Slip(s.x_dot.signum());
    }
    let (r_x, r_y) = reactions(p, s.theta, s.theta_dot, theta_ddot);
    if r_x.abs() >= p.mu * r_y {
        Contact::Slip(sign(r_x))
    } else {
        Contact::Stick
    }
}

/// Horizontal and vertical reaction of the pendulum on the capsule.
pub fn reactions(p: &PhysicalParams, theta: f64, theta_dot: f64, theta_ddot: f64) -> (f64, f64) {
    let (sin, cos) = theta.sin_cos();
    let ml = p.m * p.l;
    let w2 = theta_dot * theta_dot;
    let r_x = ml * theta_ddot * cos - ml * w2 * sin;
    let r_y = (p.capsule_mass + p.m) * p.g - ml * theta_ddot * sin - ml * w2 * cos;
    (r_x, r_y)
}

fn rk4(s: &Plant, h: f64, f: impl Fn(&Plant) -> (f64, f64)) -> Plant {
    let deriv = |s: &Plant| {
        let (ax, at) = f(s);
        [s.x_dot, ax, s.theta_dot, at]
    };
    let add = |s: &Plant, k: &[f64; 4], c: f64| Plant {
        x: s.x + c * k[0],
        x_dot: s.x_dot + c * k[1],
        theta: s.theta + c * k[2],
        theta_dot: s.theta_dot + c * k[3],
    };
    let k1 = deriv(s);
    let k2 = deriv(&add(s, &k1, h / 2.0));
    let k3 = deriv(&add(s, &k2, h / 2.0));
    let k4 = deriv(&add(s, &k3, h));
    let w = |i: usize| (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0 * h;
    Plant {
        x: s.x + w(0),
        x_dot: s.x_dot + w(1),
        theta: s.theta + w(2),
        theta_dot: s.theta_dot + w(3),
    }
}

/// Advances the plant by `h` under a torque held constant over the step.
fn plant_step(
    p: &PhysicalParams,
    s: &Plant,
    torque: &dyn Fn(&Plant) -> f64,
    h: f64,
    coupling: bool,
) -> Plant {
    let tau0 = torque(s);
    let stick_theta_ddot = accelerations(p, s, tau0, Contact::Stick, coupling).1;
    let contact = contact_regime(p, s, stick_theta_ddot);
    let mut next = rk4(s, h, |st| {
        accelerations(p, st, torque(st), contact, coupling)
    });
    if let Contact::Slip(dir) = contact {
        if next.x_dot * dir <= STICK_VELOCITY_EPS * p.l * (p.g / p.l).sqrt() {
            next.x_dot = 0.0;
        }
    }
    next
}

/// Capsule step with the pendulum motion prescribed.
fn prescribed_step(
    p: &PhysicalParams,
    s: &Plant,
    law: &ControlLaw,
    omega: f64,
    t: f64,
    h: f64,
) -> Plant {
    let total = p.capsule_mass + p.m;
    let accel = |t: f64, dir: f64| {
        let q = law.sample(omega * t);
        let (r_x, r_y) = reactions(
            p,
            q.theta,
            q.theta_dot * omega,
            q.theta_ddot * omega * omega,
        );
        (r_x - p.mu * r_y * dir) / total
    };
    let eps = STICK_VELOCITY_EPS * p.l * omega;
    let contact = if s.x_dot.abs() > eps {
        Some(s.x_dot.signum())
    } else {
        let q = law.sample(omega * t);
        let (r_x, r_y) = reactions(
            p,
            q.theta,
            q.theta_dot * omega,
            q.theta_ddot * omega * omega,
        );
        (r_x.abs() >= p.mu * r_y).then(|| sign(r_x))
    };
    // the forcing depends on time only, so RK4 reduces to Simpson's rule
    let (a0, am, a1) = match contact {
        Some(dir) => (accel(t, dir), accel(t + h / 2.0, dir), accel(t + h, dir)),
        None => (0.0, 0.0, 0.0),
    };
    let mut next = Plant {
        x: s.x + h * s.x_dot + h * h / 6.0 * (a0 + 2.0 * am),
        x_dot: s.x_dot + h / 6.0 * (a0 + 4.0 * am + a1),
        ..*s
    };
    if let Some(dir) = contact {
        if next.x_dot * dir <= eps {
            next.x_dot = 0.0;
        }
    }
    let q = law.sample(omega * (t + h));
    next.theta = q.theta;
    next.theta_dot = q.theta_dot * omega;
    next
}

fn quantize(theta: f64, bits: Option<u32>) -> f64 {
    match bits {
        Some(b) => {
            let lsb = std::f64::consts::TAU / f64::from(1u32 << b.min(31));
            (theta / lsb).round() * lsb
        }
        None => theta,
    }
}

/// Controller state between updates.
#[derive(Debug, Clone, Copy, Default)]
struct Pid {
    integral: f64,
    /// Filtered derivative of the measured angle.
    rate: f64,
    last_measurement: Option<f64>,
    command: f64,
}

impl Pid {
    fn update(
        &mut self,
        reference: f64,
        measured: f64,
        theta_dot_true: f64,
        gains: &PidGains,
        params: &PhysicalParams,
        saturation: bool,
    ) {
        let dt = 1.0 / gains.loop_rate;
        if let Some(prev) = self.last_measurement {
            let raw = (measured - prev) / dt;
            // first-order filter with time constant 2 dt, discretised exactly
            let alpha = 1.0 - (-0.5f64).exp();
            self.rate += alpha * (raw - self.rate);
        }
        self.last_measurement = Some(measured);
        let e = reference - measured;
        let candidate = self.integral + e * dt;
        let command = controller_output(e, candidate, -self.rate, measured, self.rate, gains);
        let clamped = saturation && command.abs() > available_torque(theta_dot_true, params);
        if !clamped {
            self.integral = candidate;
            self.command = command;
        } else {
            // conditional integration: hold the integral while saturated
            self.command =
                controller_output(e, self.integral, -self.rate, measured, self.rate, gains);
        }
    }
}

/// Runs the tracking simulation of the angle reference produced by `law`.
///
/// The law is expressed in dimensionless time; the reference in seconds is
/// `theta_ref(t) = theta(Omega t)` with `Omega = sqrt(g / l)`.
pub fn track_simulate(
    law: &ControlLaw,
    params: &PhysicalParams,
    gains: &PidGains,
    options: &TrackingOptions,
) -> Result<TrackingResult, TrackingError> {
    params.validate()?;
    gains.validate()?;
    if !(options.duration > 0.0 && options.physics_step > 0.0) {
        return Err(TrackingError::Setup(
            "duration and physics_step must be positive".into(),
        ));
    }
    let h = options.physics_step;
    let steps_per_control = (1.0 / (gains.loop_rate * h)).round().max(1.0) as usize;
    if options.mode == TrackingMode::ClosedLoop
        && ((steps_per_control as f64) * h * gains.loop_rate - 1.0).abs() > 1e-9
    {
        return Err(TrackingError::Setup(format!(
            "controller period 1/{} s is not a whole number of physics steps of {h} s",
            gains.loop_rate
        )));
    }
    let record_every = options.record_every.unwrap_or(steps_per_control).max(1);
    let n_steps = (options.duration / h).round() as usize;
    let omega = (params.g / params.l).sqrt();
    let reference = |t: f64| law.angle_at(omega * t);

    let start = law.sample(0.0);
    let mut state = Plant {
        theta: start.theta,
        theta_dot: start.theta_dot * omega,
        ..Plant::default()
    };
    let mut pid = Pid::default();
    let mut samples = Vec::with_capacity(n_steps / record_every + 2);
    let mut max_ratio = 0.0f64;
    let diverged = |t: f64| TrackingError::Diverged {
        t,
        kp: gains.kp,
        ki: gains.ki,
        kd: gains.kd,
    };

    for n in 0..=n_steps {
        let t = n as f64 * h;
        let closed = options.mode == TrackingMode::ClosedLoop;
        if closed && n % steps_per_control == 0 {
            let measured = quantize(state.theta, options.encoder_bits);
            pid.update(
                reference(t),
                measured,
                state.theta_dot,
                gains,
                params,
                options.saturation,
            );
        }
        let applied = |s: &Plant| {
            if options.saturation {
                motor_saturate(pid.command, s.theta_dot, params)
            } else {
                pid.command
            }
        };
        let torque_now = if closed { applied(&state) } else { 0.0 };
        if closed && options.saturation {
            let avail = available_torque(state.theta_dot, params);
            if torque_now != 0.0 {
                max_ratio = max_ratio.max(if avail > 0.0 {
                    torque_now.abs() / avail
                } else {
                    f64::INFINITY
                });
            }
        }
        if n % record_every == 0 || n == n_steps {
            samples.push(TrackingSample {
                t,
                theta_ref: reference(t),
                theta: state.theta,
                x: state.x,
                x_dot: state.x_dot,
                torque: torque_now,
            });
        }
        if n == n_steps {
            break;
        }
        state = if closed {
            plant_step(params, &state, &applied, h, options.coupling)
        } else {
            prescribed_step(params, &state, law, omega, t, h)
        };
        if !(state.theta.is_finite() && state.x.is_finite()) || state.theta.abs() > DIVERGENCE_ANGLE
        {
            return Err(diverged(t + h));
        }
    }

    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let reference_series =
        SignalSeries::new(times.clone(), samples.iter().map(|s| s.theta_ref).collect())?;
    let measured_series = SignalSeries::new(times, samples.iter().map(|s| s.theta).collect())?;
    let period = law.period / omega;
    let rmse_full = rmse(&reference_series, &measured_series)?;
    let rmse_per_period = if options.duration >= period {
        per_period_rmse(&reference_series, &measured_series, period)?
    } else {
        Vec::new()
    };
    let distance = samples.last().map_or(0.0, |s| s.x.abs());
    Ok(TrackingResult {
        samples,
        summary: TrackingSummary {
            rmse_full,
            rmse_per_period,
            period,
            distance,
            max_torque_ratio: max_ratio,
        },
    })
}

/// Friction force of the dimensional model for a given state.
pub fn dimensional_friction(x_dot: f64, r_x: f64, r_y: f64, mu: f64) -> (f64, FrictionMode) {
    if x_dot != 0.0 {
        (mu * r_y * sign(x_dot), FrictionMode::Slip)
    } else if r_x.abs() >= mu * r_y {
        (mu * r_y * sign(r_x), FrictionMode::Slip)
    } else {
        (r_x, FrictionMode::Stick)
    }
}
