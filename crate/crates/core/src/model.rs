//! Dimensionless pendulum-capsule dynamics.
//!
//! The pendulum angle and its derivatives are a known input; the capsule only
//! responds through the horizontal inertial force of the pendulum and the
//! Coulomb friction at the contact. All quantities here are dimensionless:
//! time is `tau = Omega * t`, positions are scaled by the pendulum length and
//! forces by `m * Omega^2 * l`.

use serde::{Deserialize, Serialize};

/// Capsule velocities at or below this magnitude are treated as zero.
pub const STICK_VELOCITY_EPS: f64 = 1e-8;

/// Mass ratio and friction coefficient of the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    /// Capsule mass over pendulum mass, `M / m`.
    pub gamma: f64,
    /// Coulomb friction coefficient between capsule and ground.
    pub mu: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            gamma: 14.5,
            mu: 0.17,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(format!("mu must be non-negative, got {}", self.mu));
        }
        Ok(())
    }

    /// Pendulum speed at which the centrifugal force equals the total weight.
    pub fn leap_speed(&self) -> f64 {
        (1.0 + self.gamma).sqrt()
    }
}

/// Pendulum angle with its first and second derivative in dimensionless time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PendulumSample {
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
}

impl PendulumSample {
    pub fn new(theta: f64, theta_dot: f64, theta_ddot: f64) -> Self {
        Self {
            theta,
            theta_dot,
            theta_ddot,
        }
    }
}

/// Converts between physical and dimensionless quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingContext {
    /// Pendulum length (m).
    pub l: f64,
    /// Pendulum mass (kg).
    pub m: f64,
    /// Gravitational acceleration (m/s^2).
    pub g: f64,
}

impl Default for ScalingContext {
    fn default() -> Self {
        Self {
            l: 0.1,
            m: 0.04,
            g: 9.81,
        }
    }
}

impl ScalingContext {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("l", self.l), ("m", self.m), ("g", self.g)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("scaling {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Natural frequency `sqrt(g / l)` in rad/s.
    pub fn omega(&self) -> f64 {
        (self.g / self.l).sqrt()
    }

    pub fn to_dimensionless_time(&self, t: f64) -> f64 {
        t * self.omega()
    }

    pub fn to_seconds(&self, tau: f64) -> f64 {
        tau / self.omega()
    }

    /// Force unit `m * Omega^2 * l` (N).
    pub fn force_scale(&self) -> f64 {
        self.m * self.omega().powi(2) * self.l
    }

    /// Converts a physical pendulum state (rad, rad/s, rad/s^2) to dimensionless form.
    pub fn pendulum_to_dimensionless(
        &self,
        theta: f64,
        theta_dot: f64,
        theta_ddot: f64,
    ) -> PendulumSample {
        let w = self.omega();
        PendulumSample::new(theta, theta_dot / w, theta_ddot / (w * w))
    }

    /// Dimensionless position to centimetres.
    pub fn position_cm(&self, z: f64) -> f64 {
        z * self.l * 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrictionMode {
    Stick,
    Slip,
}

impl FrictionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrictionMode::Stick => "stick",
            FrictionMode::Slip => "slip",
        }
    }
}

impl std::str::FromStr for FrictionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "stick" => Ok(FrictionMode::Stick),
            "slip" => Ok(FrictionMode::Slip),
            other => Err(format!("unknown friction mode {other:?}")),
        }
    }
}

impl std::fmt::Display for FrictionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Resolved friction force at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Friction {
    pub force: f64,
    pub mode: FrictionMode,
    /// The contact load was negative: the capsule would leave the ground.
    pub contact_lost: bool,
}

/// Vertical contact load `r_y`.
pub fn contact_load(sample: &PendulumSample, params: &SystemParams) -> f64 {
    let (sin, cos) = sample.theta.sin_cos();
    (params.gamma + 1.0) - sample.theta_ddot * sin - sample.theta_dot * sample.theta_dot * cos
}

/// Horizontal force `r_z` the pendulum exerts on the capsule.
pub fn horizontal_force(sample: &PendulumSample) -> f64 {
    let (sin, cos) = sample.theta.sin_cos();
    sample.theta_ddot * cos - sample.theta_dot * sample.theta_dot * sin
}

/// Coulomb friction with a stick branch for (numerically) zero velocity.
pub fn friction_force(z_dot: f64, r_y: f64, r_z: f64, params: &SystemParams) -> Friction {
    let limit = params.mu * r_y;
    let contact_lost = r_y < 0.0;
    if z_dot.abs() > STICK_VELOCITY_EPS {
        Friction {
            force: limit * z_dot.signum(),
            mode: FrictionMode::Slip,
            contact_lost,
        }
    } else if r_z.abs() >= limit {
        Friction {
            force: limit * sign(r_z),
            mode: FrictionMode::Slip,
            contact_lost,
        }
    } else {
        Friction {
            force: r_z,
            mode: FrictionMode::Stick,
            contact_lost,
        }
    }
}

/// Capsule acceleration `z''` for a given friction force.
pub fn capsule_accel(sample: &PendulumSample, f_z: f64, params: &SystemParams) -> f64 {
    (horizontal_force(sample) - f_z) / (params.gamma + 1.0)
}

/// `sgn` with `sgn(0) = 0`.
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
