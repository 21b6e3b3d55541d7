//! Time-dependent energy landscapes, thermal states, and driving schedules.
//!
//! A landscape is a list of segments over [0, τ], each with linearly
//! interpolated level energies (constant when start == end). Discontinuities
//! between consecutive segments (and against the pre-protocol energies at
//! t = 0) are instantaneous jumps: the work reservoir moves the levels with
//! the occupations frozen.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::simplex::Distribution;

/// One smooth piece of the drive: energies ramp linearly from `e_start` at
/// `t0` to `e_end` at `t1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub e_start: Vec<f64>,
    pub e_end: Vec<f64>,
}

impl Segment {
    pub fn is_constant(&self) -> bool {
        self.e_start == self.e_end
    }

    pub fn energies_at(&self, t: f64) -> Vec<f64> {
        let f = if self.t1 > self.t0 { ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0) } else { 0.0 };
        self.e_start
            .iter()
            .zip(&self.e_end)
            .map(|(a, b)| a + (b - a) * f)
            .collect()
    }

    /// dE/dt for each level (constant within the segment).
    pub fn energy_rates(&self) -> Vec<f64> {
        let dt = self.t1 - self.t0;
        self.e_start
            .iter()
            .zip(&self.e_end)
            .map(|(a, b)| if dt > 0.0 { (b - a) / dt } else { 0.0 })
            .collect()
    }
}

/// Piecewise landscape plus the pre-protocol energies the system starts
/// thermalized against. A jump at t = 0 (initial != first segment start) is
/// part of the protocol and its work is charged to the drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyLandscape {
    pub initial_energies: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl EnergyLandscape {
    pub fn new(initial_energies: Vec<f64>, segments: Vec<Segment>) -> Result<Self> {
        if initial_energies.is_empty() || segments.is_empty() {
            return Err(CoreError::Empty);
        }
        let n = initial_energies.len();
        for (i, &e) in initial_energies.iter().enumerate() {
            if !e.is_finite() {
                return Err(CoreError::NonFinite { index: i, value: e });
            }
        }
        let mut t_prev = 0.0;
        for (k, seg) in segments.iter().enumerate() {
            if seg.e_start.len() != n || seg.e_end.len() != n {
                return Err(CoreError::LengthMismatch { expected: n, got: seg.e_start.len() });
            }
            if !(seg.t1 > seg.t0) {
                return Err(CoreError::InvalidArgument(format!(
                    "segment {k} has non-increasing span [{}, {}]",
                    seg.t0, seg.t1
                )));
            }
            if (seg.t0 - t_prev).abs() > 1e-12 * seg.t1.abs().max(1.0) {
                return Err(CoreError::InvalidArgument(format!(
                    "segment {k} starts at {} but previous ends at {t_prev}",
                    seg.t0
                )));
            }
            for &e in seg.e_start.iter().chain(&seg.e_end) {
                if !e.is_finite() {
                    return Err(CoreError::NonFinite { index: k, value: e });
                }
            }
            t_prev = seg.t1;
        }
        Ok(Self { initial_energies, segments })
    }

    /// Constant landscape (no drive) over [0, tau].
    pub fn constant(energies: Vec<f64>, tau: f64) -> Result<Self> {
        let seg =
            Segment { t0: 0.0, t1: tau, e_start: energies.clone(), e_end: energies.clone() };
        Self::new(energies, vec![seg])
    }

    pub fn n_levels(&self) -> usize {
        self.initial_energies.len()
    }

    pub fn tau(&self) -> f64 {
        self.segments.last().map(|s| s.t1).unwrap_or(0.0)
    }

    pub fn final_energies(&self) -> Vec<f64> {
        self.segments.last().unwrap().e_end.clone()
    }

    /// Energies just before segment `k` begins (initial energies for k = 0).
    pub fn energies_before_segment(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.initial_energies
        } else {
            &self.segments[k - 1].e_end
        }
    }
}

/// Gibbs state γ_i = e^{−βE_i − logZ}; log-domain so βE up to ~700 survives.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub gamma: Distribution,
    pub log_z: f64,
}

pub fn thermal_state(energies: &[f64], beta: f64) -> Result<ThermalState> {
    if energies.is_empty() {
        return Err(CoreError::Empty);
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(CoreError::InvalidArgument(format!("beta = {beta} must be positive")));
    }
    let max_exp = energies.iter().map(|e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = energies.iter().map(|e| (-beta * e - max_exp).exp()).collect();
    let z_shifted: f64 = weights.iter().sum();
    let log_z = max_exp + z_shifted.ln();
    for w in &mut weights {
        *w /= z_shifted;
    }
    Ok(ThermalState { gamma: Distribution::new(weights)?, log_z })
}

/// How a schedule was built; `ConstantShifting` carries the step-protocol
/// parameters the analytic bounds need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolKind {
    ConstantShifting { n_steps: usize, e_max: f64 },
    Custom,
}

/// A landscape plus the run parameters (τ, β) and its construction tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSchedule {
    pub landscape: EnergyLandscape,
    pub tau: f64,
    pub beta: f64,
    pub kind: ProtocolKind,
}

impl ProtocolSchedule {
    pub fn new(landscape: EnergyLandscape, beta: f64, kind: ProtocolKind) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(CoreError::InvalidArgument(format!("beta = {beta} must be positive")));
        }
        let tau = landscape.tau();
        if !(tau > 0.0) {
            return Err(CoreError::InvalidArgument(format!("tau = {tau} must be positive")));
        }
        Ok(Self { landscape, tau, beta, kind })
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn initial_thermal(&self) -> Result<ThermalState> {
        thermal_state(&self.landscape.initial_energies, self.beta)
    }

    pub fn final_thermal(&self) -> Result<ThermalState> {
        thermal_state(&self.landscape.final_energies(), self.beta)
    }
}

/// Work in the infinitely slow limit, k_B T ln(Z(0)/Z(τ)). Z(0) is taken
/// before any t = 0 jump: the jump belongs to the drive, not the preparation.
pub fn quasistatic_work(schedule: &ProtocolSchedule) -> Result<f64> {
    let z0 = schedule.initial_thermal()?;
    let zt = schedule.final_thermal()?;
    Ok(schedule.temperature() * (z0.log_z - zt.log_z))
}

/// The N-step level-shifting schedule: E_0 ≡ 0; E_1 jumps by E_max / N at
/// t = (k−1)τ/N for k = 1..N, each jump followed by a thermalization window
/// of length τ/N.
pub fn constant_shifting_schedule(
    n_steps: usize,
    e_max: f64,
    tau: f64,
    beta: f64,
) -> Result<ProtocolSchedule> {
    if n_steps < 1 {
        return Err(CoreError::InvalidArgument("n_steps must be ≥ 1".into()));
    }
    if !(e_max >= 0.0) || !e_max.is_finite() {
        return Err(CoreError::InvalidArgument(format!("e_max = {e_max} must be ≥ 0")));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(CoreError::InvalidArgument(format!("tau = {tau} must be positive")));
    }
    let n = n_steps as f64;
    let segments = (1..=n_steps)
        .map(|k| {
            // E_1 = E_max * k/N so the final value is exactly E_max
            let e1 = e_max * (k as f64) / n;
            let energies = vec![0.0, e1];
            Segment {
                t0: tau * ((k - 1) as f64) / n,
                t1: tau * (k as f64) / n,
                e_start: energies.clone(),
                e_end: energies,
            }
        })
        .collect();
    let landscape = EnergyLandscape::new(vec![0.0, 0.0], segments)?;
    ProtocolSchedule::new(landscape, beta, ProtocolKind::ConstantShifting { n_steps, e_max })
}
