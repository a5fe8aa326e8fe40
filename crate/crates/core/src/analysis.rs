//! Post-processing metrics: tracking error, speed comparisons and stick-slip
//! phase segmentation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FrictionMode, ScalingContext};
use crate::simulator::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("series have no overlapping time support")]
    NoOverlap,
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("reference value must be non-zero")]
    ZeroReference,
    #[error("markers horizontally aligned")]
    MarkersAligned,
    #[error("period must be positive, got {0}")]
    BadPeriod(f64),
    #[error("csv: {0}")]
    Csv(String),
}

/// Samples `(t, value)` with strictly increasing `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl SignalSeries {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self, AnalysisError> {
        if t.len() != v.len() {
            return Err(AnalysisError::InvalidSeries(format!(
                "{} times for {} values",
                t.len(),
                v.len()
            )));
        }
        if t.is_empty() {
            return Err(AnalysisError::InvalidSeries("empty series".into()));
        }
        if t.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(AnalysisError::InvalidSeries("non-finite sample".into()));
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(AnalysisError::InvalidSeries(format!(
                "time not increasing at sample {}",
                i + 1
            )));
        }
        Ok(Self { t, v })
    }

    pub fn from_fn(t: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self, AnalysisError> {
        let v = t.iter().map(|&t| f(t)).collect();
        Self::new(t, v)
    }

    /// Reads two columns of a CSV file. Without explicit names the time column
    /// is `t`, `tau` or the first column, and the value column is the one
    /// following it.
    pub fn from_csv<R: std::io::Read>(
        input: R,
        time_col: Option<&str>,
        value_col: Option<&str>,
    ) -> Result<Self, AnalysisError> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| AnalysisError::Csv(e.to_string()))?
            .clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| AnalysisError::Csv(format!("missing column {name:?}")))
        };
        let ti = match time_col {
            Some(name) => find(name)?,
            None => find("t").or_else(|_| find("tau")).unwrap_or(0),
        };
        let vi = match value_col {
            Some(name) => find(name)?,
            None => ti + 1,
        };
        if vi >= headers.len() {
            return Err(AnalysisError::Csv("no value column".into()));
        }
        let (mut t, mut v) = (Vec::new(), Vec::new());
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| AnalysisError::Csv(e.to_string()))?;
            let parse = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        AnalysisError::Csv(format!(
                            "row {}: bad number in column {}",
                            row + 1,
                            i + 1
                        ))
                    })
            };
            t.push(parse(ti)?);
            v.push(parse(vi)?);
        }
        Self::new(t, v)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Linear interpolation; `None` outside the support.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let (first, last) = (self.t[0], self.t[self.t.len() - 1]);
        if t < first || t > last {
            return None;
        }
        let i = self.t.partition_point(|&x| x <= t);
        if i == 0 {
            return Some(self.v[0]);
        }
        if i == self.t.len() || self.t[i - 1] == t {
            return Some(self.v[i - 1]);
        }
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let w = (t - t0) / (t1 - t0);
        Some(self.v[i - 1] + w * (self.v[i] - self.v[i - 1]))
    }
}

fn squared_errors(reference: &SignalSeries, measured: &SignalSeries) -> Vec<(f64, f64)> {
    reference
        .t
        .iter()
        .zip(&reference.v)
        .filter_map(|(&t, &r)| measured.interpolate(t).map(|m| (t, (r - m) * (r - m))))
        .collect()
}

/// Root mean square difference, with `measured` resampled onto the reference
/// timestamps. Reference samples outside the measured support are dropped.
pub fn rmse(reference: &SignalSeries, measured: &SignalSeries) -> Result<f64, AnalysisError> {
    let sq = squared_errors(reference, measured);
    if sq.is_empty() {
        return Err(AnalysisError::NoOverlap);
    }
    Ok((sq.iter().map(|(_, e)| e).sum::<f64>() / sq.len() as f64).sqrt())
}

/// RMSE over each whole period `[t0 + j P, t0 + (j + 1) P)` of the reference,
/// where `t0` is its first timestamp. A trailing partial period is ignored.
pub fn per_period_rmse(
    reference: &SignalSeries,
    measured: &SignalSeries,
    period: f64,
) -> Result<Vec<f64>, AnalysisError> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(AnalysisError::BadPeriod(period));
    }
    let sq = squared_errors(reference, measured);
    if sq.is_empty() {
        return Err(AnalysisError::NoOverlap);
    }
    let t0 = reference.t[0];
    let span = reference.t[reference.t.len() - 1] - t0;
    // tolerate the rounding of sample times that should land on a boundary
    let slack = 1e-9 * period;
    let periods = ((span + slack) / period).floor() as usize;
    let mut sums = vec![(0.0, 0usize); periods];
    for (t, e) in sq {
        let j = ((t - t0 + slack) / period).floor() as usize;
        if j < periods {
            sums[j].0 += e;
            sums[j].1 += 1;
        }
    }
    sums.into_iter()
        .map(|(s, n)| {
            if n == 0 {
                Err(AnalysisError::NoOverlap)
            } else {
                Ok((s / n as f64).sqrt())
            }
        })
        .collect()
}

/// Relative difference in percent, `|v_num - v_exp| / v_num * 100`.
pub fn relative_difference(v_num: f64, v_exp: f64) -> Result<f64, AnalysisError> {
    if v_num == 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    Ok((v_num - v_exp).abs() / v_num * 100.0)
}

/// Pendulum angle from two tracked markers: `O1` on the pivot and `O2` on the
/// pendulum. Uses the single-argument arctangent, valid for `|theta| < pi/2`.
pub fn marker_angle(o1: (f64, f64), o2: (f64, f64)) -> Result<f64, AnalysisError> {
    let dy = o2.1 - o1.1;
    if dy == 0.0 {
        return Err(AnalysisError::MarkersAligned);
    }
    Ok(((o1.0 - o2.0) / dy).atan())
}

pub fn average_speed(distance: f64, duration: f64) -> f64 {
    assert!(duration > 0.0, "duration must be positive");
    distance / duration
}

/// Average speed in cm/s of a dimensionless distance covered in dimensionless time.
pub fn average_speed_cm_per_s(distance: f64, tau: f64, scaling: &ScalingContext) -> f64 {
    average_speed(scaling.position_cm(distance), scaling.to_seconds(tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub mode: FrictionMode,
}

impl PhaseSegment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseSegmentation {
    pub segments: Vec<PhaseSegment>,
}

impl PhaseSegmentation {
    pub fn total_duration(&self) -> f64 {
        match (self.segments.first(), self.segments.last()) {
            (Some(a), Some(b)) => b.t_end - a.t_start,
            _ => 0.0,
        }
    }

    pub fn time_in(&self, mode: FrictionMode) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.mode == mode)
            .map(PhaseSegment::duration)
            .sum()
    }
}

/// Merges consecutive samples with the same mode into intervals. Each interval
/// ends where the next one starts; the last ends at the final sample, so a
/// mode change on the final sample yields a zero-length interval.
pub fn segment_modes(samples: impl IntoIterator<Item = (f64, FrictionMode)>) -> PhaseSegmentation {
    let mut segments: Vec<PhaseSegment> = Vec::new();
    for (t, mode) in samples {
        match segments.last_mut() {
            Some(last) if last.mode == mode => last.t_end = t,
            Some(last) => {
                last.t_end = t;
                segments.push(PhaseSegment {
                    t_start: t,
                    t_end: t,
                    mode,
                });
            }
            None => segments.push(PhaseSegment {
                t_start: t,
                t_end: t,
                mode,
            }),
        }
    }
    PhaseSegmentation { segments }
}

pub fn stick_slip_segments(trajectory: &Trajectory) -> PhaseSegmentation {
    segment_modes(trajectory.records.iter().map(|r| (r.tau, r.mode)))
}
