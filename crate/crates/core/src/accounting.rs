//! First-law bookkeeping along trajectories: work, heat, entropy change,
//! and entropy production by two independent routes.
//!
//! Entropy production is exposed both as the state-function difference
//! ΔS − Q/T and as the time integral of the flow-form rate; their agreement
//! is the engine's master self-test. The penalty-equality residual is built
//! on the rate-integral route: with Q defined through the first law the
//! state-function route satisfies the equality identically, so only the
//! rate route gives the residual diagnostic power (it converges at the
//! integrator's order).

use serde::{Deserialize, Serialize};

use crate::dynamics::{RateMatrix, Trajectory};
use crate::error::{CoreError, Result};
use crate::landscape::thermal_state;
use crate::simplex::{relative_entropy, shannon_entropy, Distribution};

/// Totals for one run. Energies (w, q, w_qs, w_pn, delta_u) are in absolute
/// units; ds, sigma, sigma_rate are in k_B; d_initial/d_final are
/// dimensionless relative entropies against the instantaneous thermal states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermoLedger {
    pub beta: f64,
    pub w: f64,
    pub q: f64,
    pub delta_u: f64,
    pub ds: f64,
    pub sigma: f64,
    pub sigma_rate: f64,
    pub d_initial: f64,
    pub d_final: f64,
    pub w_qs: f64,
    pub w_pn: f64,
}

pub fn internal_energy(state: &Distribution, energies: &[f64]) -> f64 {
    state.weights().iter().zip(energies).map(|(p, e)| p * e).sum()
}

/// Total work input: jump work (occupations frozen) plus ramp work
/// accumulated by in-step quadrature during integration.
pub fn work(trajectory: &Trajectory) -> Result<f64> {
    if trajectory.energies().len() != trajectory.len() {
        return Err(CoreError::InvalidArgument("trajectory missing energy samples".into()));
    }
    Ok(trajectory.work_increments().iter().sum())
}

/// Heat from the bath, Q = ΔU − W.
pub fn heat(trajectory: &Trajectory) -> f64 {
    let du = internal_energy(trajectory.final_state(), trajectory.final_energies())
        - internal_energy(trajectory.initial_state(), trajectory.initial_energies());
    du - trajectory.work_increments().iter().sum::<f64>()
}

pub fn entropy_change(trajectory: &Trajectory) -> f64 {
    shannon_entropy(trajectory.final_state()) - shannon_entropy(trajectory.initial_state())
}

/// Entropy production as the state-function combination ΔS − Q/T (k_B units).
pub fn entropy_production(trajectory: &Trajectory, temperature: f64) -> f64 {
    entropy_change(trajectory) - heat(trajectory) / temperature
}

/// Flow-form entropy production rate
/// (1/2) Σ_{i≠j} (Γ_ij p_j − Γ_ji p_i) ln(Γ_ij p_j / Γ_ji p_i) at one sample.
/// Terms where either directed flow underflows contribute zero (under
/// detailed balance both vanish together).
pub fn entropy_production_rate(rates: &RateMatrix, state: &Distribution) -> f64 {
    let p = state.weights();
    let n = rates.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let fwd = rates.get(i, j) * p[j];
            let bwd = rates.get(j, i) * p[i];
            if fwd > 1e-300 && bwd > 1e-300 {
                total += (fwd - bwd) * (fwd / bwd).ln();
            }
        }
    }
    total
}

/// Composite-Simpson integral of per-sample values over the trajectory's
/// uniform spans (substep counts are even by construction; a trapezoid
/// cleanup handles any odd remainder).
pub(crate) fn integrate_over_spans(trajectory: &Trajectory, values: &[f64]) -> f64 {
    let times = trajectory.times();
    let mut total = 0.0;
    for span in trajectory.spans() {
        total += simpson_uniform(&times[span.start..=span.end], &values[span.start..=span.end]);
    }
    total
}

pub(crate) fn simpson_uniform(t: &[f64], f: &[f64]) -> f64 {
    let n = t.len();
    if n < 2 {
        return 0.0;
    }
    let h = (t[n - 1] - t[0]) / (n - 1) as f64;
    let intervals = n - 1;
    let pairs = intervals / 2;
    let mut total = 0.0;
    for k in 0..pairs {
        let i = 2 * k;
        total += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
    }
    if intervals % 2 == 1 {
        total += 0.5 * h * (f[n - 2] + f[n - 1]);
    }
    total
}

/// Entropy production by the rate-integral route (k_B units), accumulated by
/// the integrator at substep resolution so post-jump relaxation transients
/// are resolved.
pub fn entropy_production_rate_integral(trajectory: &Trajectory) -> f64 {
    trajectory.entropy_flow_integral()
}

/// Full ledger for a trajectory.
pub fn ledger(trajectory: &Trajectory) -> Result<ThermoLedger> {
    let beta = trajectory.beta();
    let temperature = 1.0 / beta;
    let w = work(trajectory)?;
    let q = heat(trajectory);
    let delta_u = w + q;
    let ds = entropy_change(trajectory);
    let sigma = ds - q / temperature;
    let sigma_rate = entropy_production_rate_integral(trajectory);
    let g0 = thermal_state(trajectory.initial_energies(), beta)?;
    let gt = thermal_state(trajectory.final_energies(), beta)?;
    let d_initial = relative_entropy(trajectory.initial_state(), &g0.gamma)?;
    let d_final = relative_entropy(trajectory.final_state(), &gt.gamma)?;
    let w_qs = temperature * (g0.log_z - gt.log_z);
    Ok(ThermoLedger {
        beta,
        w,
        q,
        delta_u,
        ds,
        sigma,
        sigma_rate,
        d_initial,
        d_final,
        w_qs,
        w_pn: w - w_qs,
    })
}

/// |W_pn − (k_B T ΔD + T Σ)| with Σ from the rate integral; < 1e-6 for
/// dt_max small enough.
pub fn penalty_equality_residual(trajectory: &Trajectory, temperature: f64) -> Result<f64> {
    let led = ledger(trajectory)?;
    let dd = led.d_final - led.d_initial;
    Ok((led.w_pn - (temperature * dd + temperature * led.sigma_rate)).abs())
}

/// Per-step terms of a constant-shifting run: `sigma` in k_B,
/// `w_pn` in energy units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepTerms {
    pub sigma: f64,
    pub w_pn: f64,
}

/// Splits a step-protocol run into per-step entropy production and work
/// penalty: Σ^k = D[P^{k−1}‖γ^k] − D[P^k‖γ^k] and
/// W_pn^k = T (D[P^{k−1}‖γ^k] − D[P^{k−1}‖γ^{k−1}]). Sums reproduce the
/// ledger totals.
pub fn step_decomposition(trajectory: &Trajectory) -> Result<Vec<StepTerms>> {
    if !trajectory.is_step_protocol() {
        return Err(CoreError::Unsupported(
            "step decomposition requires a pure step (jump + hold) protocol".into(),
        ));
    }
    let beta = trajectory.beta();
    let temperature = 1.0 / beta;
    let mut out = Vec::with_capacity(trajectory.spans().len());
    for span in trajectory.spans() {
        let e_new = &trajectory.energies()[span.start];
        let e_prev = if span.start == 0 {
            &trajectory.energies()[0]
        } else {
            &trajectory.energies()[span.start - 1]
        };
        let g_new = thermal_state(e_new, beta)?;
        let g_prev = thermal_state(e_prev, beta)?;
        let p_before = &trajectory.states()[span.start];
        let p_after = &trajectory.states()[span.end];
        let d_before_new = relative_entropy(p_before, &g_new.gamma)?;
        let d_after_new = relative_entropy(p_after, &g_new.gamma)?;
        let d_before_prev = relative_entropy(p_before, &g_prev.gamma)?;
        out.push(StepTerms {
            sigma: d_before_new - d_after_new,
            w_pn: temperature * (d_before_new - d_before_prev),
        });
    }
    Ok(out)
}
