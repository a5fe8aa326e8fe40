//! Fourier-series control functions parametrized by shape and span.
//!
//! A control `u(t) = a0/2 + sum_k a_k cos(k w t) + b_k sin(k w t)` is described
//! by the direction of its amplitude vector `H = [a1, b1, ..., aK, bK]` (given
//! as hyperspherical angles) together with two numbers `p, q` in `(0, 1]` that
//! place the range of `u` inside the admissible interval `[u_min, u_max]`.
//! Every parameter lives in a fixed box, so the admissible set is exactly the
//! search box of a derivative-free optimizer.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PendulumSample;

/// Grid points per harmonic used when scanning for extremes.
pub const EXTREME_GRID_PER_HARMONIC: usize = 256;
/// Half-width of the amplitude interval searched for the zero-start amplitude.
pub const ZERO_START_BRACKET: f64 = 3.0;
/// Accepted residual `|u(0)|` for zero-start controls.
pub const ZERO_START_TOL: f64 = 1e-10;

const GOLDEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FourierError {
    #[error("harmonic count must be at least 1")]
    NoHarmonics,
    #[error("fundamental frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape angle phi[{index}] = {value} outside [{lo}, {hi}]")]
    AngleOutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("span parameter {name} = {value} outside (0, 1]")]
    SpanOutOfRange { name: &'static str, value: f64 },
    #[error("control bounds must satisfy u_min < u_max, got [{0}, {1}]")]
    BadBounds(f64, f64),
    #[error("zero-start controls pin phi[1] to pi/2, got {0}")]
    ZeroStartAngle(f64),
    #[error("degenerate shape: amplitude vector is zero")]
    DegenerateShape,
    #[error("infeasible zero-start shape: no amplitude in [-{bracket}, {bracket}] gives u(0) = 0")]
    InfeasibleZeroStart { bracket: f64 },
}

/// Harmonic count and fundamental frequency of a control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicBasis {
    #[serde(rename = "K")]
    pub harmonics: usize,
    pub omega: f64,
    pub period: f64,
}

impl HarmonicBasis {
    pub fn new(harmonics: usize, omega: f64) -> Result<Self, FourierError> {
        if harmonics == 0 {
            return Err(FourierError::NoHarmonics);
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(FourierError::BadFrequency(omega));
        }
        Ok(Self {
            harmonics,
            omega,
            period: TAU / omega,
        })
    }

    pub fn validate(&self) -> Result<(), FourierError> {
        let fresh = Self::new(self.harmonics, self.omega)?;
        if (fresh.period - self.period).abs() > 1e-12 * fresh.period {
            return Err(FourierError::BadFrequency(self.omega));
        }
        Ok(())
    }

    /// Length of the amplitude vector, `2K`.
    pub fn amplitude_len(&self) -> usize {
        2 * self.harmonics
    }

    /// The basis with twice the harmonics at half the frequency.
    pub fn doubled(&self) -> Self {
        Self::new(2 * self.harmonics, self.omega / 2.0).expect("doubling keeps the basis valid")
    }
}

/// Hyperspherical angles `phi_1 .. phi_{2K-1}` of the amplitude direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCoordinates {
    pub phi: Vec<f64>,
}

impl ShapeCoordinates {
    pub fn new(phi: Vec<f64>) -> Self {
        Self { phi }
    }

    pub fn validate(&self, basis: &HarmonicBasis) -> Result<(), FourierError> {
        let expected = basis.amplitude_len() - 1;
        if self.phi.len() != expected {
            return Err(FourierError::DimensionMismatch {
                expected,
                got: self.phi.len(),
            });
        }
        for (i, &v) in self.phi.iter().enumerate() {
            let hi = if i + 1 == expected { TAU } else { PI };
            if !(v >= 0.0 && v <= hi) {
                return Err(FourierError::AngleOutOfRange {
                    index: i + 1,
                    value: v,
                    lo: 0.0,
                    hi,
                });
            }
        }
        Ok(())
    }
}

/// Placement of the control range inside the admissible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanParams {
    pub p: f64,
    pub q: f64,
}

impl SpanParams {
    pub fn validate(&self) -> Result<(), FourierError> {
        for (name, value) in [("p", self.p), ("q", self.q)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(FourierError::SpanOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// Admissible control interval `[u_min, u_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub u_min: f64,
    pub u_max: f64,
}

impl ControlBounds {
    pub fn symmetric(limit: f64) -> Self {
        Self {
            u_min: -limit,
            u_max: limit,
        }
    }

    pub fn validate(&self) -> Result<(), FourierError> {
        if !(self.u_min < self.u_max && self.u_min.is_finite() && self.u_max.is_finite()) {
            return Err(FourierError::BadBounds(self.u_min, self.u_max));
        }
        Ok(())
    }
}

/// A point of the control search space together with its fixed context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub basis: HarmonicBasis,
    pub shape: ShapeCoordinates,
    pub span: SpanParams,
    pub bounds: ControlBounds,
    /// Enforce `u(0) = 0`; `phi[1]` is then pinned to `pi/2` and the first
    /// amplitude is solved for instead of optimized.
    pub zero_start: bool,
}

impl ControlParams {
    pub fn validate(&self) -> Result<(), FourierError> {
        self.basis.validate()?;
        self.shape.validate(&self.basis)?;
        self.span.validate()?;
        self.bounds.validate()?;
        if self.zero_start && (self.shape.phi[0] - FRAC_PI_2).abs() > 1e-12 {
            return Err(FourierError::ZeroStartAngle(self.shape.phi[0]));
        }
        Ok(())
    }

    /// Number of free coordinates: `2K + 1`, or `2K` with `zero_start`.
    pub fn dimension(&self) -> usize {
        search_dimension(self.basis.harmonics, self.zero_start)
    }

    /// Free coordinates in optimizer order: angles (without the pinned one), then `p`, `q`.
    pub fn to_vector(&self) -> Vec<f64> {
        let skip = usize::from(self.zero_start);
        let mut x: Vec<f64> = self.shape.phi[skip..].to_vec();
        x.push(self.span.p);
        x.push(self.span.q);
        x
    }

    pub fn from_vector(
        basis: HarmonicBasis,
        bounds: ControlBounds,
        zero_start: bool,
        x: &[f64],
    ) -> Result<Self, FourierError> {
        let expected = search_dimension(basis.harmonics, zero_start);
        if x.len() != expected {
            return Err(FourierError::DimensionMismatch {
                expected,
                got: x.len(),
            });
        }
        let n_angles = x.len() - 2;
        let mut phi = Vec::with_capacity(basis.amplitude_len() - 1);
        if zero_start {
            phi.push(FRAC_PI_2);
        }
        phi.extend_from_slice(&x[..n_angles]);
        let params = Self {
            basis,
            shape: ShapeCoordinates::new(phi),
            span: SpanParams {
                p: x[n_angles],
                q: x[n_angles + 1],
            },
            bounds,
            zero_start,
        };
        params.validate()?;
        Ok(params)
    }

    /// The amplitude vector used for reconstruction.
    ///
    /// Without `zero_start` this is the unit vector of the shape angles. With
    /// `zero_start` the first entry is the solved amplitude and the rest is the
    /// unit vector of `phi[2..]`, so the result is not normalized.
    pub fn amplitudes(&self) -> Result<Vec<f64>, FourierError> {
        self.validate()?;
        if !self.zero_start {
            return Ok(unit_vector_from_angles(&self.shape));
        }
        let tail = zero_start_tail(&self.shape);
        let (sup, inf) = range_targets(&self.span, &self.bounds);
        let h1 = solve_zero_start_amplitude(&tail, self.basis.omega, sup, inf)?;
        let mut h = Vec::with_capacity(tail.len() + 1);
        h.push(h1);
        h.extend(tail);
        Ok(h)
    }

    pub fn reconstruct(&self) -> Result<ControlLaw, FourierError> {
        reconstruct(self)
    }

    pub fn lift(&self) -> Result<ControlParams, FourierError> {
        lift(self)
    }
}

/// Search-space dimension for `harmonics` harmonics.
pub fn search_dimension(harmonics: usize, zero_start: bool) -> usize {
    2 * harmonics + 1 - usize::from(zero_start)
}

/// Box bounds of the free coordinates, in [`ControlParams::to_vector`] order.
///
/// `p` and `q` must stay strictly positive; `span_floor` is their lower edge.
pub fn coordinate_bounds(harmonics: usize, zero_start: bool, span_floor: f64) -> Vec<(f64, f64)> {
    let n_angles = 2 * harmonics - 1;
    let mut bounds = Vec::with_capacity(search_dimension(harmonics, zero_start));
    for i in usize::from(zero_start)..n_angles {
        bounds.push((0.0, if i + 1 == n_angles { TAU } else { PI }));
    }
    bounds.push((span_floor, 1.0));
    bounds.push((span_floor, 1.0));
    bounds
}

/// Cascaded sine/cosine product mapping `2K - 1` angles to a unit vector in `R^{2K}`.
pub fn unit_vector_from_angles(shape: &ShapeCoordinates) -> Vec<f64> {
    spherical_to_unit(&shape.phi)
}

fn spherical_to_unit(phi: &[f64]) -> Vec<f64> {
    let mut h = Vec::with_capacity(phi.len() + 1);
    let mut sin_prod = 1.0;
    for &angle in phi {
        let (s, c) = angle.sin_cos();
        h.push(sin_prod * c);
        sin_prod *= s;
    }
    h.push(sin_prod);
    h
}

/// Inverse of [`unit_vector_from_angles`].
///
/// When every component from some index on is zero, the remaining angles are
/// set to zero.
pub fn angles_from_unit_vector(h: &[f64]) -> ShapeCoordinates {
    assert!(
        h.len() >= 2,
        "amplitude vectors have at least two components"
    );
    let n = h.len();
    let mut phi = Vec::with_capacity(n - 1);
    // tail[i] = || h[i..] ||
    let mut tail = vec![0.0f64; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1].hypot(h[i]);
    }
    for i in 0..n - 1 {
        if tail[i] == 0.0 {
            phi.push(0.0);
        } else if i == n - 2 {
            phi.push(h[n - 1].atan2(h[n - 2]).rem_euclid(TAU));
        } else {
            phi.push(tail[i + 1].atan2(h[i]));
        }
    }
    // rem_euclid can round up to exactly TAU for tiny negative angles
    if let Some(last) = phi.last_mut() {
        if *last >= TAU {
            *last = 0.0;
        }
    }
    ShapeCoordinates::new(phi)
}

/// Calls `f(k, cos(k x), sin(k x))` for `k = 1..=n` by angle addition.
#[inline]
fn for_each_harmonic(x: f64, n: usize, mut f: impl FnMut(usize, f64, f64)) {
    let (s1, c1) = x.sin_cos();
    let (mut c, mut s) = (c1, s1);
    for k in 1..=n {
        f(k, c, s);
        let next_c = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = next_c;
    }
}

/// `H . [cos(w t), sin(w t), ..., cos(K w t), sin(K w t)]`.
pub fn evaluate_hat(h: &[f64], omega: f64, t: f64) -> f64 {
    let mut acc = 0.0;
    for_each_harmonic(omega * t, h.len() / 2, |k, c, s| {
        acc += h[2 * k - 2] * c + h[2 * k - 1] * s;
    });
    acc
}

/// Bound on `|u''|` for the harmonic sum with amplitudes `h`.
fn curvature_bound(h: &[f64], omega: f64) -> f64 {
    h.chunks(2)
        .enumerate()
        .map(|(i, ab)| {
            let kw = (i + 1) as f64 * omega;
            kw * kw * (ab[0].abs() + ab[1].abs())
        })
        .sum()
}

/// Uniform samples of the harmonic sum over one period.
struct HatGrid {
    omega: f64,
    dt: f64,
    values: Vec<f64>,
}

impl HatGrid {
    fn len_for(harmonics: usize) -> usize {
        EXTREME_GRID_PER_HARMONIC * harmonics
    }

    fn times(omega: f64, n: usize) -> impl Iterator<Item = f64> {
        let dt = TAU / omega / n as f64;
        (0..n).map(move |i| i as f64 * dt)
    }

    fn sample(h: &[f64], omega: f64) -> Self {
        let n = Self::len_for(h.len() / 2);
        let values = Self::times(omega, n)
            .map(|t| evaluate_hat(h, omega, t))
            .collect();
        Self {
            omega,
            dt: TAU / omega / n as f64,
            values,
        }
    }

    /// Refined `(min, max)` of the function whose grid samples are `values`.
    fn extremes(&self, h: &[f64], values: &[f64]) -> (f64, f64) {
        let slack = 1.01 * curvature_bound(h, self.omega) * self.dt * self.dt / 8.0 + 1e-15;
        let f = |t: f64| evaluate_hat(h, self.omega, t);
        let max = refine_extreme(values, self.dt, slack, f);
        let min = -refine_extreme_neg(values, self.dt, slack, |t| -f(t));
        (min, max)
    }
}

fn refine_extreme(values: &[f64], dt: f64, slack: f64, g: impl Fn(f64) -> f64) -> f64 {
    let grid_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    refine_clusters(
        values.iter().map(|&v| v >= grid_max - slack),
        values.len(),
        dt,
        grid_max,
        g,
    )
}

fn refine_extreme_neg(values: &[f64], dt: f64, slack: f64, g: impl Fn(f64) -> f64) -> f64 {
    let grid_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    refine_clusters(
        values.iter().map(|&v| v <= grid_min + slack),
        values.len(),
        dt,
        -grid_min,
        g,
    )
}

/// Golden-section maximization of `g` around every run of flagged grid points.
fn refine_clusters(
    flags: impl Iterator<Item = bool>,
    n: usize,
    dt: f64,
    floor: f64,
    g: impl Fn(f64) -> f64,
) -> f64 {
    let flags: Vec<bool> = flags.collect();
    let mut best = floor;
    let mut i = 0;
    while i < n {
        if !flags[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && flags[i] {
            i += 1;
        }
        let lo = (start as f64 - 1.0) * dt;
        let hi = i as f64 * dt;
        best = best.max(golden_max(&g, lo, hi));
    }
    best
}

fn golden_max(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while b - a > GOLDEN_TOL {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    gc.max(gd)
}

/// Minimum and maximum of `u_hat` over one period.
pub fn extremes_of_hat(h: &[f64], basis: &HarmonicBasis) -> Result<(f64, f64), FourierError> {
    if h.len() != basis.amplitude_len() {
        return Err(FourierError::DimensionMismatch {
            expected: basis.amplitude_len(),
            got: h.len(),
        });
    }
    if h.iter().all(|v| v.abs() < 1e-300) {
        return Err(FourierError::DegenerateShape);
    }
    let grid = HatGrid::sample(h, basis.omega);
    let (min, max) = grid.extremes(h, &grid.values);
    if max <= min {
        return Err(FourierError::DegenerateShape);
    }
    Ok((min, max))
}

/// Supremum and infimum of the control range selected by `p` and `q`.
pub fn range_targets(span: &SpanParams, bounds: &ControlBounds) -> (f64, f64) {
    let width = bounds.u_max - bounds.u_min;
    let sup = span.p * bounds.u_max + (1.0 - span.p) * bounds.u_min;
    let inf = width * (1.0 - span.q) * span.p + bounds.u_min;
    (sup, inf)
}

/// Unit vector of the zero-start tail: components `2..2K` from `phi[2..]` with `phi[1] = pi/2`.
fn zero_start_tail(shape: &ShapeCoordinates) -> Vec<f64> {
    spherical_to_unit(&shape.phi[1..])
}

/// Solves the first amplitude so that the reconstructed control vanishes at `t = 0`.
///
/// `h1 = 0` is taken when it already satisfies the condition; otherwise bracketed
/// bisection on `[-ZERO_START_BRACKET, ZERO_START_BRACKET]`.
fn solve_zero_start_amplitude(
    tail: &[f64],
    omega: f64,
    sup: f64,
    inf: f64,
) -> Result<f64, FourierError> {
    let harmonics = tail.len().div_ceil(2);
    let n = HatGrid::len_for(harmonics);
    let mut cos1 = Vec::with_capacity(n);
    let mut rest = Vec::with_capacity(n);
    let mut full = Vec::with_capacity(tail.len() + 1);
    full.push(0.0);
    full.extend_from_slice(tail);
    for t in HatGrid::times(omega, n) {
        let mut c1 = 0.0;
        let mut acc = 0.0;
        for_each_harmonic(omega * t, harmonics, |k, c, s| {
            if k == 1 {
                c1 = c;
            } else {
                acc += full[2 * k - 2] * c;
            }
            acc += full[2 * k - 1] * s;
        });
        cos1.push(c1);
        rest.push(acc);
    }
    let grid = HatGrid {
        omega,
        dt: TAU / omega / n as f64,
        values: Vec::new(),
    };
    let cos_sum_tail: f64 = (2..=harmonics).map(|k| full[2 * k - 2]).sum();
    let mut values = vec![0.0; n];
    let mut u0 = |h1: f64| -> f64 {
        for ((v, &c), &r) in values.iter_mut().zip(&cos1).zip(&rest) {
            *v = h1 * c + r;
        }
        full[0] = h1;
        let (min, max) = grid.extremes(&full, &values);
        let hat0 = h1 + cos_sum_tail;
        inf + (sup - inf) * (hat0 - min) / (max - min)
    };

    if u0(0.0).abs() <= ZERO_START_TOL {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-ZERO_START_BRACKET, ZERO_START_BRACKET);
    let (mut f_lo, mut f_hi) = (u0(lo), u0(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(FourierError::InfeasibleZeroStart {
            bracket: ZERO_START_BRACKET,
        });
    }
    // Illinois regula falsi, with a bisection step whenever the bracket stalls
    let mut best = (f64::INFINITY, 0.0);
    let mut side = 0i8;
    let mut width = hi - lo;
    for _ in 0..200 {
        let secant = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let x = if secant > lo && secant < hi {
            secant
        } else {
            0.5 * (lo + hi)
        };
        let f_x = u0(x);
        if f_x.abs() < best.0 {
            best = (f_x.abs(), x);
        }
        if f_x.abs() <= 1e-13 || hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
        if f_x.signum() == f_lo.signum() {
            lo = x;
            f_lo = f_x;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = f_x;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo > 0.5 * width {
            let mid = 0.5 * (lo + hi);
            let f_mid = u0(mid);
            if f_mid.abs() < best.0 {
                best = (f_mid.abs(), mid);
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
            side = 0;
        }
        width = hi - lo;
    }
    if best.0 <= ZERO_START_TOL {
        Ok(best.1)
    } else {
        Err(FourierError::InfeasibleZeroStart {
            bracket: ZERO_START_BRACKET,
        })
    }
}

/// Builds the control `u = s * u_hat + off` whose range is `[inf, sup]`.
pub fn reconstruct(params: &ControlParams) -> Result<ControlLaw, FourierError> {
    let h = params.amplitudes()?;
    let (min, max) = extremes_of_hat(&h, &params.basis)?;
    let (sup, inf) = range_targets(&params.span, &params.bounds);
    let scale = (sup - inf) / (max - min);
    let offset = inf - scale * min;
    let k = params.basis.harmonics;
    let coeffs = FourierCoefficients {
        a0: 2.0 * offset,
        a: (0..k).map(|i| scale * h[2 * i]).collect(),
        b: (0..k).map(|i| scale * h[2 * i + 1]).collect(),
        omega: params.basis.omega,
    };
    Ok(ControlLaw::from_coefficients(coeffs))
}

/// Re-expresses a `k`-harmonic control in the `2k`-harmonic basis at half the frequency.
///
/// The lifted control equals the original one pointwise. Without `zero_start`
/// the angles are interleaved with `pi/2` pairs. With `zero_start` the solved
/// first amplitude becomes an ordinary harmonic of the new basis, so the new
/// angles are recomputed from the interleaved amplitude vector.
pub fn lift(params: &ControlParams) -> Result<ControlParams, FourierError> {
    params.validate()?;
    let basis = params.basis.doubled();
    let shape = if params.zero_start {
        let old = params.amplitudes()?;
        let mut tail = Vec::with_capacity(2 * old.len() - 1);
        // new amplitudes [0, 0, h1, h2, 0, 0, h3, h4, ...] without the leading (solved) entry
        for pair in old.chunks(2) {
            tail.extend_from_slice(&[0.0, 0.0]);
            tail.extend_from_slice(pair);
        }
        tail.remove(0);
        let norm = tail.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit: Vec<f64> = tail.iter().map(|v| v / norm).collect();
        let mut phi = vec![FRAC_PI_2];
        phi.extend(angles_from_unit_vector(&unit).phi);
        ShapeCoordinates::new(phi)
    } else {
        let old = &params.shape.phi;
        let mut phi = Vec::with_capacity(2 * old.len() + 1);
        for pair in old.chunks(2) {
            phi.push(FRAC_PI_2);
            phi.push(FRAC_PI_2);
            phi.extend_from_slice(pair);
        }
        ShapeCoordinates::new(phi)
    };
    let lifted = ControlParams {
        basis,
        shape,
        span: params.span,
        bounds: params.bounds,
        zero_start: params.zero_start,
    };
    lifted.validate()?;
    Ok(lifted)
}

/// Coefficients of `u(t) = a0/2 + sum_k a_k cos(k w t) + b_k sin(k w t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub omega: f64,
}

impl FourierCoefficients {
    pub fn zero(harmonics: usize, omega: f64) -> Self {
        Self {
            a0: 0.0,
            a: vec![0.0; harmonics],
            b: vec![0.0; harmonics],
            omega,
        }
    }

    pub fn harmonics(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<(), FourierError> {
        if self.a.len() != self.b.len() {
            return Err(FourierError::DimensionMismatch {
                expected: self.a.len(),
                got: self.b.len(),
            });
        }
        if self.a.is_empty() {
            return Err(FourierError::NoHarmonics);
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(FourierError::BadFrequency(self.omega));
        }
        Ok(())
    }
}

/// `constant + sum_k cos_k cos(k w s) + sin_k sin(k w s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

/// Antiderivative of the speed: a linear drift plus a periodic part, zero at `s = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSeries {
    pub drift_rate: f64,
    pub periodic: TrigSeries,
}

/// A reconstructed control `u = theta'` with its analytic angle and acceleration.
///
/// Evaluation beyond one period uses the periodic extension of the speed; the
/// angle then accumulates `per_period_drift` per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlLaw {
    pub coeffs: FourierCoefficients,
    pub angle_coeffs: AngleSeries,
    pub accel_coeffs: TrigSeries,
    pub period: f64,
    pub per_period_drift: f64,
}

impl ControlLaw {
    pub fn from_coefficients(coeffs: FourierCoefficients) -> Self {
        let w = coeffs.omega;
        let kw = |i: usize| (i + 1) as f64 * w;
        let n = coeffs.harmonics();
        let angle_sin: Vec<f64> = (0..n).map(|i| coeffs.a[i] / kw(i)).collect();
        let angle_cos: Vec<f64> = (0..n).map(|i| -coeffs.b[i] / kw(i)).collect();
        let angle_const = -angle_cos.iter().sum::<f64>();
        let period = TAU / w;
        let drift_rate = coeffs.a0 / 2.0;
        let accel = TrigSeries {
            constant: 0.0,
            cos: (0..n).map(|i| coeffs.b[i] * kw(i)).collect(),
            sin: (0..n).map(|i| -coeffs.a[i] * kw(i)).collect(),
        };
        Self {
            angle_coeffs: AngleSeries {
                drift_rate,
                periodic: TrigSeries {
                    constant: angle_const,
                    cos: angle_cos,
                    sin: angle_sin,
                },
            },
            accel_coeffs: accel,
            period,
            per_period_drift: drift_rate * period,
            coeffs,
        }
    }

    /// The control that keeps the pendulum at rest.
    pub fn zero(omega: f64) -> Self {
        Self::from_coefficients(FourierCoefficients::zero(1, omega))
    }

    pub fn harmonics(&self) -> usize {
        self.coeffs.harmonics()
    }

    /// Splits `tau` into a whole number of periods and the phase within the period.
    #[inline]
    fn reduce(&self, tau: f64) -> (f64, f64) {
        let j = (tau / self.period).floor();
        let s = tau - j * self.period;
        if s >= self.period {
            (j + 1.0, s - self.period)
        } else if s < 0.0 {
            (j - 1.0, s + self.period)
        } else {
            (j, s)
        }
    }

    /// Angle, speed and acceleration at `tau`, evaluated with one shared trig pass.
    #[inline]
    pub fn sample(&self, tau: f64) -> PendulumSample {
        let (j, s) = self.reduce(tau);
        let c = &self.coeffs;
        let ang = &self.angle_coeffs.periodic;
        let acc = &self.accel_coeffs;
        let mut theta = ang.constant + self.angle_coeffs.drift_rate * s;
        let mut speed = 0.5 * c.a0;
        let mut accel = 0.0;
        for_each_harmonic(c.omega * s, c.a.len(), |k, cs, sn| {
            let i = k - 1;
            speed += c.a[i] * cs + c.b[i] * sn;
            theta += ang.cos[i] * cs + ang.sin[i] * sn;
            accel += acc.cos[i] * cs + acc.sin[i] * sn;
        });
        PendulumSample {
            theta: theta + j * self.per_period_drift,
            theta_dot: speed,
            theta_ddot: accel,
        }
    }

    pub fn angle_at(&self, tau: f64) -> f64 {
        self.sample(tau).theta
    }

    pub fn speed_at(&self, tau: f64) -> f64 {
        let (_, s) = self.reduce(tau);
        let c = &self.coeffs;
        let mut speed = 0.5 * c.a0;
        for_each_harmonic(c.omega * s, c.a.len(), |k, cs, sn| {
            speed += c.a[k - 1] * cs + c.b[k - 1] * sn;
        });
        speed
    }

    pub fn accel_at(&self, tau: f64) -> f64 {
        self.sample(tau).theta_ddot
    }
}
