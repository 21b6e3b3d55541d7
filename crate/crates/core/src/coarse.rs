//! Bit-level projection of states and dynamics: coarse-grained distributions,
//! effective two-state rates, swap rate μ(t), coarse entropy production, and
//! the local-equilibrium saturation diagnostics.

use serde::{Deserialize, Serialize};

use crate::accounting::{integrate_over_spans, simpson_uniform};
use crate::dynamics::{RateMatrix, Span, Trajectory};
use crate::error::{CoreError, Result};
use crate::landscape::{thermal_state, ThermalState};
use crate::simplex::{BinaryDistribution, Distribution};

/// Block probability below which the outgoing coarse rate is defined as 0:
/// the flow Γ·p vanishes along with the occupation, so 0/0 is resolved to 0.
const BLOCK_UNDERFLOW: f64 = 1e-300;

/// Disjoint, jointly exhaustive index blocks defining the logical bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitPartition {
    omega0: Vec<usize>,
    omega1: Vec<usize>,
}

impl BitPartition {
    pub fn new(omega0: Vec<usize>, omega1: Vec<usize>) -> Result<Self> {
        if omega0.is_empty() || omega1.is_empty() {
            return Err(CoreError::InvalidArgument("both blocks must be non-empty".into()));
        }
        let n = omega0.len() + omega1.len();
        let mut seen = vec![false; n];
        for &i in omega0.iter().chain(&omega1) {
            if i >= n {
                return Err(CoreError::InvalidArgument(format!(
                    "index {i} exceeds the {n} states covered by the blocks"
                )));
            }
            if seen[i] {
                return Err(CoreError::InvalidArgument(format!("index {i} appears twice")));
            }
            seen[i] = true;
        }
        Ok(Self { omega0, omega1 })
    }

    /// Block 0 from explicit indices, block 1 as the complement in 0..n.
    pub fn from_block0(omega0: &[usize], n: usize) -> Result<Self> {
        let omega1: Vec<usize> = (0..n).filter(|i| !omega0.contains(i)).collect();
        Self::new(omega0.to_vec(), omega1)
    }

    /// The trivial partition of a two-level system.
    pub fn two_level() -> Self {
        Self { omega0: vec![0], omega1: vec![1] }
    }

    pub fn omega0(&self) -> &[usize] {
        &self.omega0
    }

    pub fn omega1(&self) -> &[usize] {
        &self.omega1
    }

    pub fn n_states(&self) -> usize {
        self.omega0.len() + self.omega1.len()
    }
}

/// P_a^bit = Σ_{i∈Ω_a} p_i.
pub fn coarse_state(p: &Distribution, part: &BitPartition) -> Result<BinaryDistribution> {
    if part.n_states() != p.len() {
        return Err(CoreError::LengthMismatch { expected: part.n_states(), got: p.len() });
    }
    let w = p.weights();
    let p1: f64 = part.omega1.iter().map(|&i| w[i]).sum();
    BinaryDistribution::new(p1.clamp(0.0, 1.0))
}

/// Effective bit rates (Γ^bit_01, Γ^bit_10):
/// Γ^bit_{aā} = Σ_{i∈Ω_a} Σ_{j∈Ω_ā} Γ_ij p_j / P_ā. An underflowed block
/// contributes zero outgoing rate.
pub fn coarse_rates(
    rates: &RateMatrix,
    p: &Distribution,
    part: &BitPartition,
) -> Result<(f64, f64)> {
    if part.n_states() != rates.n() || p.len() != rates.n() {
        return Err(CoreError::LengthMismatch { expected: rates.n(), got: part.n_states() });
    }
    let w = p.weights();
    let bit = coarse_state(p, part)?;
    let (p0, p1) = (bit.p0(), bit.p1());
    let mut flow01 = 0.0; // into Ω0 from Ω1
    let mut flow10 = 0.0; // into Ω1 from Ω0
    for &i in &part.omega0 {
        for &j in &part.omega1 {
            flow01 += rates.get(i, j) * w[j];
            flow10 += rates.get(j, i) * w[i];
        }
    }
    let g01 = if p1 > BLOCK_UNDERFLOW { flow01 / p1 } else { 0.0 };
    let g10 = if p0 > BLOCK_UNDERFLOW { flow10 / p0 } else { 0.0 };
    Ok((g01, g10))
}

/// State-independent bound μ(t) ≤ Σ_{i∈Ω0} max_{j∈Ω1} Γ_ij + Σ_{j∈Ω1} max_{i∈Ω0} Γ_ji.
pub fn swap_rate_upper_bound(rates: &RateMatrix, part: &BitPartition) -> f64 {
    let mut bound = 0.0;
    for &i in &part.omega0 {
        bound += part.omega1.iter().map(|&j| rates.get(i, j)).fold(0.0, f64::max);
    }
    for &j in &part.omega1 {
        bound += part.omega0.iter().map(|&i| rates.get(j, i)).fold(0.0, f64::max);
    }
    bound
}

/// P^st = [Γ01, Γ10] / (Γ01 + Γ10): the fixed point of the coarse flow, which
/// rewrites it in partial-swap form ṗ^bit = μ (P^st − p^bit).
pub fn coarse_stationary_state(gamma01: f64, gamma10: f64) -> Result<BinaryDistribution> {
    let mu = gamma01 + gamma10;
    if !(mu > 0.0) {
        return Err(CoreError::InvalidArgument(
            "both coarse rates vanish; stationary state undefined".into(),
        ));
    }
    BinaryDistribution::new(gamma10 / mu)
}

/// Swap rate μ(t) via the local-equilibrium shortcut ω(t) = Γ^bit_{01}/γ^bit_0,
/// computable from the rates and the thermal state alone.
pub fn local_equilibrium_swap_rate(
    rates: &RateMatrix,
    gamma: &ThermalState,
    part: &BitPartition,
) -> Result<f64> {
    let (g01, _) = coarse_rates(rates, &gamma.gamma, part)?;
    let gbit = coarse_state(&gamma.gamma, part)?;
    if gbit.p0() <= BLOCK_UNDERFLOW {
        return Err(CoreError::InvalidArgument("thermal weight of block 0 underflows".into()));
    }
    Ok(g01 / gbit.p0())
}

/// Max over blocks of the relative spread of p_i/γ_i; zero means exact local
/// equilibrium, the case saturating the coarse-graining inequalities.
pub fn local_equilibrium_check(
    p: &Distribution,
    gamma: &ThermalState,
    part: &BitPartition,
) -> Result<f64> {
    if part.n_states() != p.len() || gamma.gamma.len() != p.len() {
        return Err(CoreError::LengthMismatch { expected: part.n_states(), got: p.len() });
    }
    let g = gamma.gamma.weights();
    for (i, &gi) in g.iter().enumerate() {
        if gi <= 0.0 {
            return Err(CoreError::InvalidArgument(format!("gamma[{i}] is not positive")));
        }
    }
    let w = p.weights();
    let mut worst = 0.0f64;
    for block in [&part.omega0, &part.omega1] {
        let ratios: Vec<f64> = block.iter().map(|&i| w[i] / g[i]).collect();
        let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            worst = worst.max((max - min) / max);
        }
    }
    Ok(worst)
}

/// Bit-level record of a run: per-sample coarse state, coarse thermal state,
/// measured rates, swap rate, and coarse stationary state.
#[derive(Debug, Clone)]
pub struct CoarseTrace {
    pub times: Vec<f64>,
    pub p_bit: Vec<BinaryDistribution>,
    pub gamma_bit: Vec<BinaryDistribution>,
    pub gamma01: Vec<f64>,
    pub gamma10: Vec<f64>,
    pub mu: Vec<f64>,
    /// Coarse stationary state; equals γ^bit where the rates vanish.
    pub p_st: Vec<BinaryDistribution>,
    spans: Vec<Span>,
    tau: f64,
}

impl CoarseTrace {
    /// Assembles a trace from externally measured columns (the continuum
    /// backend builds its trace this way).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        times: Vec<f64>,
        p_bit: Vec<BinaryDistribution>,
        gamma_bit: Vec<BinaryDistribution>,
        gamma01: Vec<f64>,
        gamma10: Vec<f64>,
        mu: Vec<f64>,
        p_st: Vec<BinaryDistribution>,
        spans: Vec<Span>,
        tau: f64,
    ) -> Self {
        Self { times, p_bit, gamma_bit, gamma01, gamma10, mu, p_st, spans, tau }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn initial_bit(&self) -> BinaryDistribution {
        self.p_bit[0]
    }

    pub fn final_bit(&self) -> BinaryDistribution {
        *self.p_bit.last().unwrap()
    }

    /// Reset error ε = P_1^bit(τ), always measured from the trajectory.
    pub fn reset_error(&self) -> f64 {
        self.final_bit().p1()
    }

    /// Time-averaged swap rate ⟨μ⟩_τ = τ⁻¹ ∫ μ dt (trapezoidal).
    pub fn avg_swap_rate(&self) -> f64 {
        let mut total = 0.0;
        for span in &self.spans {
            for k in span.start..span.end {
                total += 0.5 * (self.mu[k] + self.mu[k + 1]) * (self.times[k + 1] - self.times[k]);
            }
        }
        total / self.tau
    }

    /// Coarse entropy production rate at sample `k` (k_B per time), with the
    /// underflow guard on vanishing flows.
    pub fn sigma_bit_rate(&self, k: usize) -> f64 {
        let f01 = self.gamma01[k] * self.p_bit[k].p1();
        let f10 = self.gamma10[k] * self.p_bit[k].p0();
        if f01 > BLOCK_UNDERFLOW && f10 > BLOCK_UNDERFLOW {
            (f01 - f10) * (f01 / f10).ln()
        } else {
            0.0
        }
    }
}

/// Projects a fine trajectory through a partition. The coarse rates are
/// measured from the stored fine rates and states, the way an experimenter
/// following bit trajectories would.
pub fn coarse_trace(trajectory: &Trajectory, part: &BitPartition) -> Result<CoarseTrace> {
    let n = trajectory.len();
    let beta = trajectory.beta();
    let mut p_bit = Vec::with_capacity(n);
    let mut gamma_bit = Vec::with_capacity(n);
    let mut gamma01 = Vec::with_capacity(n);
    let mut gamma10 = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut p_st = Vec::with_capacity(n);
    for k in 0..n {
        let state = &trajectory.states()[k];
        let bit = coarse_state(state, part)?;
        let gm = thermal_state(&trajectory.energies()[k], beta)?;
        let gbit = coarse_state(&gm.gamma, part)?;
        let (g01, g10) = coarse_rates(&trajectory.rates()[k], state, part)?;
        let m = g01 + g10;
        p_st.push(if m > 0.0 { coarse_stationary_state(g01, g10)? } else { gbit });
        p_bit.push(bit);
        gamma_bit.push(gbit);
        gamma01.push(g01);
        gamma10.push(g10);
        mu.push(m);
    }

    // sampling-density advisory: strongly varying rates between samples make
    // the measured staircase coarse
    let mut worst_jump = 0.0f64;
    for span in trajectory.spans() {
        for k in span.start..span.end {
            let (a, b) = (mu[k], mu[k + 1]);
            let m = a.max(b);
            if m > 0.0 {
                worst_jump = worst_jump.max((a - b).abs() / m);
            }
        }
    }
    if worst_jump > 0.10 {
        log::warn!(
            "coarse rates change by {:.0}% between samples; densify dt_max for a faithful μ(t)",
            worst_jump * 100.0
        );
    }

    Ok(CoarseTrace {
        times: trajectory.times().to_vec(),
        p_bit,
        gamma_bit,
        gamma01,
        gamma10,
        mu,
        p_st,
        spans: trajectory.spans().to_vec(),
        tau: trajectory.tau(),
    })
}

/// Σ^bit(τ): composite-Simpson time integral of the coarse entropy
/// production rate over the trace's uniform spans (k_B units).
pub fn coarse_entropy_production(trace: &CoarseTrace) -> f64 {
    let vals: Vec<f64> = (0..trace.times.len()).map(|k| trace.sigma_bit_rate(k)).collect();
    let mut total = 0.0;
    for span in &trace.spans {
        total +=
            simpson_uniform(&trace.times[span.start..=span.end], &vals[span.start..=span.end]);
    }
    total
}

/// Fine entropy production by the rate-integral route, for hierarchy checks
/// against Σ^bit on the same grid.
pub fn fine_entropy_production_on_grid(trajectory: &Trajectory) -> f64 {
    let vals: Vec<f64> = trajectory
        .rates()
        .iter()
        .zip(trajectory.states())
        .map(|(r, s)| crate::accounting::entropy_production_rate(r, s))
        .collect();
    integrate_over_spans(trajectory, &vals)
}
