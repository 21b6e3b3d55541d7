//! Master-equation time evolution: detailed-balance rate matrices, exact
//! partial-swap stepping, and a generic 4th-order integrator for arbitrary
//! rate models.
//!
//! Convention: `rates[(i, j)]` is the transition rate from state `j` to
//! state `i`; columns sum to zero.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::landscape::{thermal_state, ProtocolSchedule, ThermalState};
use crate::simplex::Distribution;

/// Relative tolerance for the detailed-balance validation
/// |Γ_ij γ_j − Γ_ji γ_i| ≤ DB_REL_TOL · max(Γ_ij γ_j, Γ_ji γ_i).
pub const DB_REL_TOL: f64 = 1e-10;

/// Generator of a continuous-time Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    m: Array2<f64>,
}

impl RateMatrix {
    /// Full matrix; validates non-negative off-diagonals and zero column sums.
    pub fn new(m: Array2<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(CoreError::Empty);
        }
        if m.ncols() != n {
            return Err(CoreError::LengthMismatch { expected: n, got: m.ncols() });
        }
        let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
        for j in 0..n {
            let mut col_sum = 0.0;
            for i in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(CoreError::NonFinite { index: i * n + j, value: v });
                }
                if i != j && v < 0.0 {
                    return Err(CoreError::InvalidArgument(format!(
                        "negative off-diagonal rate Γ[{i},{j}] = {v}"
                    )));
                }
                col_sum += v;
            }
            if col_sum.abs() > 1e-12 * scale {
                return Err(CoreError::InvalidArgument(format!(
                    "column {j} sums to {col_sum:.3e}, not 0"
                )));
            }
        }
        Ok(Self { m })
    }

    /// Builds from off-diagonal rates only, setting each diagonal to minus
    /// its column sum (so conservation holds exactly).
    pub fn from_offdiagonal(mut m: Array2<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(CoreError::Empty);
        }
        if m.ncols() != n {
            return Err(CoreError::LengthMismatch { expected: n, got: m.ncols() });
        }
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                if i != j {
                    let v = m[(i, j)];
                    if !v.is_finite() {
                        return Err(CoreError::NonFinite { index: i * n + j, value: v });
                    }
                    if v < 0.0 {
                        return Err(CoreError::InvalidArgument(format!(
                            "negative off-diagonal rate Γ[{i},{j}] = {v}"
                        )));
                    }
                    s += v;
                }
            }
            m[(j, j)] = -s;
        }
        Ok(Self { m })
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.m
    }

    /// ṗ = Γ p.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let pj = p[j];
            if pj == 0.0 {
                continue;
            }
            for i in 0..n {
                out[i] += self.m[(i, j)] * pj;
            }
        }
        out
    }

    /// Pairwise flow balance against `gamma`: Γ_ij γ_j = Γ_ji γ_i.
    pub fn check_detailed_balance(&self, gamma: &ThermalState, t: f64) -> Result<()> {
        let g = gamma.gamma.weights();
        let n = self.n();
        for i in 0..n {
            for j in (i + 1)..n {
                let f = self.m[(i, j)] * g[j];
                let b = self.m[(j, i)] * g[i];
                let m = f.max(b);
                if m > 0.0 && (f - b).abs() > DB_REL_TOL * m {
                    return Err(CoreError::DetailedBalance {
                        t,
                        i,
                        j,
                        residual: (f - b).abs() / m,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Γ_ij = μ (γ_i − δ_ij): the generator whose flow is ṗ = μ (γ − p).
/// Detailed balance holds by construction.
pub fn partial_swap_generator(gamma: &ThermalState, mu: f64) -> Result<RateMatrix> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(CoreError::InvalidArgument(format!("mu = {mu} must be ≥ 0")));
    }
    let g = gamma.gamma.weights();
    let n = g.len();
    let mut m = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            if i != j {
                m[(i, j)] = mu * g[i];
            }
        }
    }
    RateMatrix::from_offdiagonal(m)
}

/// Closed-form relaxation p(dt) = e^{−μ dt} p(0) + (1 − e^{−μ dt}) γ.
pub fn evolve_partial_swap_constant(
    p0: &Distribution,
    gamma: &ThermalState,
    mu: f64,
    dt: f64,
) -> Result<Distribution> {
    if !(dt >= 0.0) {
        return Err(CoreError::InvalidArgument(format!("dt = {dt} must be ≥ 0")));
    }
    if !(mu >= 0.0) {
        return Err(CoreError::InvalidArgument(format!("mu = {mu} must be ≥ 0")));
    }
    if p0.len() != gamma.gamma.len() {
        return Err(CoreError::LengthMismatch { expected: p0.len(), got: gamma.gamma.len() });
    }
    let decay = (-mu * dt).exp();
    let w = p0
        .weights()
        .iter()
        .zip(gamma.gamma.weights())
        .map(|(p, g)| decay * p + (1.0 - decay) * g)
        .collect();
    Distribution::new(w)
}

/// Supplies the generator at any protocol time. `gamma` is the thermal state
/// of the instantaneous landscape.
pub trait RateModel: Sync {
    fn rate_matrix(&self, t: f64, gamma: &ThermalState) -> Result<RateMatrix>;

    /// `Some(μ)` when the model is exactly ṗ = μ(γ − p) with constant μ,
    /// enabling closed-form stepping on constant-energy segments.
    fn partial_swap_rate(&self) -> Option<f64> {
        None
    }
}

/// Constant-rate partial swap toward the instantaneous thermal state.
#[derive(Debug, Clone, Copy)]
pub struct PartialSwap {
    pub mu: f64,
}

impl RateModel for PartialSwap {
    fn rate_matrix(&self, _t: f64, gamma: &ThermalState) -> Result<RateMatrix> {
        partial_swap_generator(gamma, self.mu)
    }

    fn partial_swap_rate(&self) -> Option<f64> {
        Some(self.mu)
    }
}

/// Partial swap with a time-dependent rate μ(t); runs through the generic
/// integrator path.
pub struct TimeDependentSwap<F: Fn(f64) -> f64 + Sync> {
    pub mu_of_t: F,
}

impl<F: Fn(f64) -> f64 + Sync> RateModel for TimeDependentSwap<F> {
    fn rate_matrix(&self, t: f64, gamma: &ThermalState) -> Result<RateMatrix> {
        partial_swap_generator(gamma, (self.mu_of_t)(t))
    }
}

/// Γ_ij = A_ij √(γ_i/γ_j) for a symmetric non-negative activity matrix A.
/// Satisfies detailed balance for any A: Γ_ij γ_j = A_ij √(γ_i γ_j) = Γ_ji γ_i.
#[derive(Debug, Clone)]
pub struct ActivityRates {
    activity: Array2<f64>,
}

impl ActivityRates {
    pub fn new(activity: Array2<f64>) -> Result<Self> {
        let n = activity.nrows();
        if n == 0 {
            return Err(CoreError::Empty);
        }
        if activity.ncols() != n {
            return Err(CoreError::LengthMismatch { expected: n, got: activity.ncols() });
        }
        for i in 0..n {
            for j in 0..n {
                let v = activity[(i, j)];
                if v < 0.0 || !v.is_finite() {
                    return Err(CoreError::InvalidArgument(format!(
                        "activity[{i},{j}] = {v} must be finite and ≥ 0"
                    )));
                }
                if (v - activity[(j, i)]).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(CoreError::InvalidArgument(
                        "activity matrix must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(Self { activity })
    }
}

impl RateModel for ActivityRates {
    fn rate_matrix(&self, _t: f64, gamma: &ThermalState) -> Result<RateMatrix> {
        let g = gamma.gamma.weights();
        let n = g.len();
        let mut m = Array2::zeros((n, n));
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    m[(i, j)] = self.activity[(i, j)] * (g[i] / g[j]).sqrt();
                }
            }
        }
        RateMatrix::from_offdiagonal(m)
    }
}

/// Wrapper that hides a model's partial-swap fast path, forcing the generic
/// integrator. Used to cross-validate the exact stepping.
pub struct OpaqueModel<'a>(pub &'a dyn RateModel);

impl RateModel for OpaqueModel<'_> {
    fn rate_matrix(&self, t: f64, gamma: &ThermalState) -> Result<RateMatrix> {
        self.0.rate_matrix(t, gamma)
    }
}

/// Inclusive sample-index range with uniform spacing; one per smooth
/// (jump-free) stretch of the protocol. Quadrature over the trajectory is
/// done span by span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Time-indexed record of one integration: states, energies, rates, and
/// per-interval work/heat increments. Jump times appear twice (pre- and
/// post-jump samples at the same t) so jump work is computable.
#[derive(Debug, Clone)]
pub struct Trajectory {
    beta: f64,
    times: Vec<f64>,
    states: Vec<Distribution>,
    energies: Vec<Vec<f64>>,
    rates: Vec<RateMatrix>,
    dw: Vec<f64>,
    dq: Vec<f64>,
    spans: Vec<Span>,
    prob_drift: f64,
    sigma_rate: f64,
}

impl Trajectory {
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn states(&self) -> &[Distribution] {
        &self.states
    }
    pub fn energies(&self) -> &[Vec<f64>] {
        &self.energies
    }
    pub fn rates(&self) -> &[RateMatrix] {
        &self.rates
    }
    /// Work put in over interval [k, k+1] (jump intervals carry the jump work).
    pub fn work_increments(&self) -> &[f64] {
        &self.dw
    }
    pub fn heat_increments(&self) -> &[f64] {
        &self.dq
    }
    pub fn spans(&self) -> &[Span] {
        &self.spans
    }
    /// Accumulated |Σp − 1| absorbed by renormalization.
    pub fn probability_drift(&self) -> f64 {
        self.prob_drift
    }
    /// Time integral of the flow-form entropy production rate, accumulated
    /// during integration at substep resolution (k_B units).
    pub fn entropy_flow_integral(&self) -> f64 {
        self.sigma_rate
    }
    pub fn initial_state(&self) -> &Distribution {
        &self.states[0]
    }
    pub fn final_state(&self) -> &Distribution {
        self.states.last().unwrap()
    }
    pub fn initial_energies(&self) -> &[f64] {
        &self.energies[0]
    }
    pub fn final_energies(&self) -> &[f64] {
        self.energies.last().unwrap()
    }
    pub fn tau(&self) -> f64 {
        *self.times.last().unwrap()
    }
    /// True when every smooth stretch has constant energies (pure step drive).
    pub fn is_step_protocol(&self) -> bool {
        self.spans.iter().all(|s| {
            let e0 = &self.energies[s.start];
            (s.start..=s.end).all(|k| &self.energies[k] == e0)
        })
    }
}

enum StepOutcome {
    Done(Trajectory),
    Retry(String),
}

/// Evolves the schedule's initial thermal state (or `initial`, if given)
/// under `model`, sampling at least every `dt_max` and at every segment
/// boundary. Constant-energy segments of a constant-μ partial swap use the
/// closed form; everything else takes 4th-order explicit steps with a
/// per-step renormalization guard (total drift budget 1e-9, dt halved until
/// it passes). Models violating detailed balance are rejected.
pub fn integrate_master_equation(
    schedule: &ProtocolSchedule,
    model: &dyn RateModel,
    dt_max: f64,
    initial: Option<&Distribution>,
) -> Result<Trajectory> {
    if !(dt_max > 0.0) || !dt_max.is_finite() {
        return Err(CoreError::InvalidArgument(format!("dt_max = {dt_max} must be positive")));
    }
    let p0 = match initial {
        Some(p) => {
            if p.len() != schedule.landscape.n_levels() {
                return Err(CoreError::LengthMismatch {
                    expected: schedule.landscape.n_levels(),
                    got: p.len(),
                });
            }
            p.clone()
        }
        None => schedule.initial_thermal()?.gamma,
    };
    let mut dt = dt_max;
    let mut last_reason = String::new();
    for _ in 0..24 {
        match integrate_once(schedule, model, dt, &p0)? {
            StepOutcome::Done(t) => return Ok(t),
            StepOutcome::Retry(reason) => {
                last_reason = reason;
                dt *= 0.5;
            }
        }
    }
    Err(CoreError::Numerics(format!(
        "integration failed to meet the drift criterion after step halving: {last_reason}"
    )))
}

fn integrate_once(
    schedule: &ProtocolSchedule,
    model: &dyn RateModel,
    dt_max: f64,
    p0: &Distribution,
) -> Result<StepOutcome> {
    let beta = schedule.beta;
    let land = &schedule.landscape;
    let exact_mu = model.partial_swap_rate();

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut energies: Vec<Vec<f64>> = Vec::new();
    let mut rates = Vec::new();
    let mut dw = Vec::new();
    let mut dq = Vec::new();
    let mut spans = Vec::new();
    let mut drift = 0.0f64;
    let mut sigma_rate = 0.0f64;

    let mut p: Vec<f64> = p0.weights().to_vec();

    // initial (pre-jump) sample
    let e0 = land.initial_energies.clone();
    let g0 = thermal_state(&e0, beta)?;
    let r0 = model.rate_matrix(0.0, &g0)?;
    if exact_mu.is_none() {
        r0.check_detailed_balance(&g0, 0.0)?;
    }
    times.push(0.0);
    states.push(Distribution::new(p.clone())?);
    energies.push(e0);
    rates.push(r0);

    for (k, seg) in land.segments.iter().enumerate() {
        let e_pre = land.energies_before_segment(k);
        let jump = seg
            .e_start
            .iter()
            .zip(e_pre)
            .any(|(a, b)| (a - b).abs() > 0.0);
        let gamma_start = thermal_state(&seg.e_start, beta)?;
        if jump {
            let w_jump: f64 = p
                .iter()
                .zip(seg.e_start.iter().zip(e_pre))
                .map(|(pi, (ea, eb))| pi * (ea - eb))
                .sum();
            let r = model.rate_matrix(seg.t0, &gamma_start)?;
            if exact_mu.is_none() {
                r.check_detailed_balance(&gamma_start, seg.t0)?;
            }
            times.push(seg.t0);
            states.push(Distribution::new(p.clone())?);
            energies.push(seg.e_start.clone());
            rates.push(r);
            dw.push(w_jump);
            dq.push(0.0);
        }

        let span_start = times.len() - 1;
        let seg_len = seg.t1 - seg.t0;
        let mut m = (seg_len / dt_max).ceil() as usize;
        m = m.max(2);
        if m % 2 == 1 {
            m += 1;
        }
        let h = seg_len / m as f64;

        let use_exact = exact_mu.is_some() && seg.is_constant();
        if use_exact {
            let mu = exact_mu.unwrap();
            let g = gamma_start.gamma.weights().to_vec();
            let r = partial_swap_generator(&gamma_start, mu)?;
            let e_here = seg.e_start.clone();
            let decay_half = (-mu * 0.5 * h).exp();
            let mix = |y: &[f64], d: f64| -> Vec<f64> {
                y.iter().zip(&g).map(|(a, b)| d * a + (1.0 - d) * b).collect()
            };
            for j in 1..=m {
                let t = if j == m { seg.t1 } else { seg.t0 + h * j as f64 };
                let p_mid = mix(&p, decay_half);
                let p_new = mix(&p_mid, decay_half);
                let u_old: f64 = p.iter().zip(&e_here).map(|(a, b)| a * b).sum();
                let u_new: f64 = p_new.iter().zip(&e_here).map(|(a, b)| a * b).sum();
                sigma_rate += h / 6.0
                    * (flow_entropy_rate(&r, &p)
                        + 4.0 * flow_entropy_rate(&r, &p_mid)
                        + flow_entropy_rate(&r, &p_new));
                p = p_new;
                times.push(t);
                states.push(Distribution::new(p.clone())?);
                energies.push(e_here.clone());
                rates.push(r.clone());
                dw.push(0.0);
                dq.push(u_new - u_old);
            }
        } else {
            let e_dot = seg.energy_rates();
            let matrix_at = |t: f64| -> Result<RateMatrix> {
                let e = seg.energies_at(t);
                let g = thermal_state(&e, beta)?;
                let r = model.rate_matrix(t, &g)?;
                r.check_detailed_balance(&g, t)?;
                Ok(r)
            };
            // one classic 4-stage step of size hs
            let rk4 = |t: f64, y: &[f64], hs: f64| -> Result<Vec<f64>> {
                let k1 = matrix_at(t)?.apply(y);
                let m1: Vec<f64> = y.iter().zip(&k1).map(|(a, d)| a + 0.5 * hs * d).collect();
                let mid_rates = matrix_at(t + 0.5 * hs)?;
                let k2 = mid_rates.apply(&m1);
                let m2: Vec<f64> = y.iter().zip(&k2).map(|(a, d)| a + 0.5 * hs * d).collect();
                let k3 = mid_rates.apply(&m2);
                let m3: Vec<f64> = y.iter().zip(&k3).map(|(a, d)| a + hs * d).collect();
                let k4 = matrix_at(t + hs)?.apply(&m3);
                Ok(y
                    .iter()
                    .zip(k1.iter().zip(k2.iter().zip(k3.iter().zip(&k4))))
                    .map(|(a, (b, (c, (d, e))))| a + hs / 6.0 * (b + 2.0 * c + 2.0 * d + e))
                    .collect())
            };

            // relaxation rates set the substep count: the Eq.-3 integrand has
            // e^{−2λt} transients after each jump, and its quadrature must
            // resolve them to keep the dual-route Σ agreement near 1e-8
            let stiffness = [seg.t0, 0.5 * (seg.t0 + seg.t1), seg.t1]
                .into_iter()
                .map(|t| {
                    let r = matrix_at(t)?;
                    Ok((0..r.n()).map(|i| r.get(i, i).abs()).fold(0.0f64, f64::max))
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0f64, f64::max);
            let mut n_sub = ((stiffness * h / 0.05).ceil() as usize).max(2);
            if n_sub % 2 == 1 {
                n_sub += 1;
            }
            let hs = h / n_sub as f64;

            let pdot_e =
                |y: &[f64]| -> f64 { y.iter().zip(&e_dot).map(|(a, b)| a * b).sum() };
            let mut sig_vals = vec![0.0f64; n_sub + 1];
            let mut work_vals = vec![0.0f64; n_sub + 1];
            for j in 1..=m {
                let t0 = seg.t0 + h * (j - 1) as f64;
                let t1 = if j == m { seg.t1 } else { seg.t0 + h * j as f64 };
                sig_vals[0] = flow_entropy_rate(&matrix_at(t0)?, &p);
                work_vals[0] = pdot_e(&p);
                let mut p_run = p.clone();
                for s in 1..=n_sub {
                    let ts0 = t0 + hs * (s - 1) as f64;
                    let ts1 = if s == n_sub { t1 } else { t0 + hs * s as f64 };
                    p_run = rk4(ts0, &p_run, ts1 - ts0)?;
                    for v in &mut p_run {
                        if *v < 0.0 {
                            if *v < -1e-12 {
                                return Ok(StepOutcome::Retry(format!(
                                    "negative weight {v:.3e} at t = {ts1}"
                                )));
                            }
                            *v = 0.0;
                        }
                    }
                    let sum: f64 = p_run.iter().sum();
                    drift += (sum - 1.0).abs();
                    if drift > 1e-9 {
                        return Ok(StepOutcome::Retry(format!(
                            "probability drift {drift:.3e} over budget at t = {ts1}"
                        )));
                    }
                    for v in &mut p_run {
                        *v /= sum;
                    }
                    sig_vals[s] = flow_entropy_rate(&matrix_at(ts1)?, &p_run);
                    work_vals[s] = pdot_e(&p_run);
                }
                let p_new = p_run;

                let e_old = seg.energies_at(t0);
                let e_new = seg.energies_at(t1);
                let u_old: f64 = p.iter().zip(&e_old).map(|(a, b)| a * b).sum();
                let u_new: f64 = p_new.iter().zip(&e_new).map(|(a, b)| a * b).sum();
                let w_inc = simpson_even(&work_vals, hs);
                sigma_rate += simpson_even(&sig_vals, hs);

                p = p_new;
                let g = thermal_state(&e_new, beta)?;
                let r = model.rate_matrix(t1, &g)?;
                times.push(t1);
                states.push(Distribution::new(p.clone())?);
                energies.push(e_new);
                rates.push(r);
                dw.push(w_inc);
                dq.push(u_new - u_old - w_inc);
            }
        }
        spans.push(Span { start: span_start, end: times.len() - 1 });
    }

    Ok(StepOutcome::Done(Trajectory {
        beta,
        times,
        states,
        energies,
        rates,
        dw,
        dq,
        spans,
        prob_drift: drift,
        sigma_rate,
    }))
}

/// Composite Simpson on a uniform grid with an even interval count; a
/// trailing odd interval (never produced by the integrator) falls back to
/// the trapezoid.
fn simpson_even(f: &[f64], h: f64) -> f64 {
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < f.len() {
        total += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
        i += 2;
    }
    if f.len() >= 2 && (f.len() - 1) % 2 == 1 {
        total += 0.5 * h * (f[f.len() - 2] + f[f.len() - 1]);
    }
    total
}

/// The Eq.-3 flow form (k_B/2) Σ (Γ_ij p_j − Γ_ji p_i) ln(Γ_ij p_j / Γ_ji p_i)
/// on raw weights; vanishing flows contribute zero.
fn flow_entropy_rate(rates: &RateMatrix, p: &[f64]) -> f64 {
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

/// Null vector of the generator on the simplex. Rejects reducible chains,
/// naming the communicating classes. For detailed-balance rates this is the
/// thermal state.
pub fn stationary_state(rates: &RateMatrix) -> Result<Distribution> {
    let n = rates.n();
    if n == 1 {
        return Distribution::new(vec![1.0]);
    }
    // strong connectivity on the positive-rate graph (forward and transpose)
    let reach = |transpose: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for i in 0..n {
                let r = if transpose { rates.get(j, i) } else { rates.get(i, j) };
                if i != j && r > 0.0 && !seen[i] {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen
    };
    let fwd = reach(false);
    let bwd = reach(true);
    if fwd.iter().any(|v| !v) || bwd.iter().any(|v| !v) {
        return Err(CoreError::ReducibleChain { blocks: communicating_classes(rates) });
    }

    // replace the last balance row with normalization and solve
    let mut a = vec![vec![0.0f64; n]; n];
    let mut b = vec![0.0f64; n];
    for i in 0..n - 1 {
        for j in 0..n {
            a[i][j] = rates.get(i, j);
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    b[n - 1] = 1.0;
    let x = solve_dense(&mut a, &mut b)?;

    let mut w = x;
    for v in &mut w {
        if *v < 0.0 {
            if *v < -1e-10 {
                return Err(CoreError::Numerics(format!(
                    "stationary solve produced weight {v:.3e}"
                )));
            }
            *v = 0.0;
        }
    }
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    let st = Distribution::new(w)?;
    // residual sanity: Γ p ≈ 0
    let resid = rates
        .apply(st.weights())
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let scale = (0..n).map(|i| rates.get(i, i).abs()).fold(1.0f64, f64::max);
    if resid > 1e-9 * scale {
        return Err(CoreError::Numerics(format!("stationary residual {resid:.3e}")));
    }
    Ok(st)
}

fn communicating_classes(rates: &RateMatrix) -> Vec<Vec<usize>> {
    let n = rates.n();
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = count;
        let mut stack = vec![s];
        while let Some(j) = stack.pop() {
            for i in 0..n {
                if i != j
                    && comp[i] == usize::MAX
                    && (rates.get(i, j) > 0.0 || rates.get(j, i) > 0.0)
                {
                    comp[i] = count;
                    stack.push(i);
                }
            }
        }
        count += 1;
    }
    let mut blocks = vec![Vec::new(); count];
    for (i, &c) in comp.iter().enumerate() {
        blocks[c].push(i);
    }
    blocks
}

fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return Err(CoreError::Numerics("singular linear system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::constant_shifting_schedule;
    use crate::simplex::relative_entropy;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_level_gamma(e1: f64) -> ThermalState {
        thermal_state(&[0.0, e1], 1.0).unwrap()
    }

    #[test]
    fn partial_swap_generator_values() {
        let g = thermal_state(&[0.0, (9f64 / 1f64).ln()], 1.0).unwrap(); // [0.9, 0.1]
        let r = partial_swap_generator(&g, 1.0).unwrap();
        assert_abs_diff_eq!(r.get(0, 1), 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(r.get(1, 0), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.get(0, 0), -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.get(1, 1), -0.9, epsilon = 1e-12);
        r.check_detailed_balance(&g, 0.0).unwrap();

        // zero swap rate freezes the dynamics
        let z = partial_swap_generator(&g, 0.0).unwrap();
        assert!(z.as_array().iter().all(|&v| v == 0.0));
        assert!(partial_swap_generator(&g, -1.0).is_err());

        // column sums vanish for any gamma
        let g = thermal_state(&[0.2, 1.4, -0.3, 2.0], 1.3).unwrap();
        let r = partial_swap_generator(&g, 2.5).unwrap();
        for j in 0..4 {
            let s: f64 = (0..4).map(|i| r.get(i, j)).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn evolve_closed_form() {
        let g = thermal_state(&[0.0, (9f64).ln()], 1.0).unwrap(); // [0.9, 0.1]
        let p0 = Distribution::uniform(2).unwrap();
        assert_eq!(
            evolve_partial_swap_constant(&p0, &g, 1.0, 0.0).unwrap().weights(),
            p0.weights()
        );
        let p = evolve_partial_swap_constant(&p0, &g, 1.0, 2f64.ln()).unwrap();
        assert_abs_diff_eq!(p.weights()[0], 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(p.weights()[1], 0.3, epsilon = 1e-14);
        let p = evolve_partial_swap_constant(&p0, &g, 1.0, 1e6).unwrap();
        assert_abs_diff_eq!(p.weights()[0], 0.9, epsilon = 1e-12);
    }

    #[test]
    fn integrate_frozen_dynamics_is_constant() {
        let s = constant_shifting_schedule(3, 2.0, 1.0, 1.0).unwrap();
        let t = integrate_master_equation(&s, &PartialSwap { mu: 0.0 }, 0.1, None).unwrap();
        for st in t.states() {
            assert_abs_diff_eq!(st.weights()[1], 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn integrate_single_window_closed_form() {
        // frozen: e^{−1}·0.5 + (1 − e^{−1})·γ_1(10)
        let s = constant_shifting_schedule(1, 10.0, 10.0, 1.0).unwrap();
        let t = integrate_master_equation(&s, &PartialSwap { mu: 0.1 }, 0.05, None).unwrap();
        assert_abs_diff_eq!(
            t.final_state().weights()[1],
            0.18396841751185497,
            epsilon = 1e-13
        );
        assert_eq!(t.initial_state().weights(), &[0.5, 0.5]);
        assert_eq!(t.times()[0], 0.0);
        assert_eq!(t.tau(), 10.0);
    }

    #[test]
    fn exact_vs_generic_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = rng.gen_range(2..=8);
            let e: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let tau = rng.gen_range(0.5..4.0);
            let land = crate::landscape::EnergyLandscape::constant(e, tau).unwrap();
            let s = crate::landscape::ProtocolSchedule::new(
                land,
                1.0,
                crate::landscape::ProtocolKind::Custom,
            )
            .unwrap();
            let model = PartialSwap { mu: rng.gen_range(0.2..2.0) };
            let p0 = Distribution::delta(n, 0).unwrap();
            let a =
                integrate_master_equation(&s, &model, 1e-3 * tau, Some(&p0)).unwrap();
            let b = integrate_master_equation(&s, &OpaqueModel(&model), 1e-3 * tau, Some(&p0))
                .unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.states().iter().zip(b.states()) {
                for (u, v) in x.weights().iter().zip(y.weights()) {
                    assert!((u - v).abs() < 1e-8, "exact vs generic drifted: {u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn h_theorem_along_windows() {
        let s = constant_shifting_schedule(5, 6.0, 20.0, 1.0).unwrap();
        let t = integrate_master_equation(&s, &PartialSwap { mu: 0.3 }, 0.05, None).unwrap();
        for span in t.spans() {
            let gamma = two_level_gamma(t.energies()[span.start][1]);
            let mut prev = f64::INFINITY;
            for k in span.start..=span.end {
                let d = relative_entropy(&t.states()[k], &gamma.gamma).unwrap();
                assert!(d <= prev + 1e-12, "relative entropy increased in a window");
                prev = d;
            }
        }
    }

    #[test]
    fn probability_conserved_generic_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 5;
        let mut act = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..i {
                let v = rng.gen_range(0.1..1.0);
                act[(i, j)] = v;
                act[(j, i)] = v;
            }
        }
        let model = ActivityRates::new(act).unwrap();
        let segs = vec![crate::landscape::Segment {
            t0: 0.0,
            t1: 3.0,
            e_start: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            e_end: vec![2.0, 1.5, 1.0, 0.5, 0.0],
        }];
        let land =
            crate::landscape::EnergyLandscape::new(vec![0.0, 0.5, 1.0, 1.5, 2.0], segs).unwrap();
        let s = crate::landscape::ProtocolSchedule::new(
            land,
            1.0,
            crate::landscape::ProtocolKind::Custom,
        )
        .unwrap();
        let t = integrate_master_equation(&s, &model, 3e-3, None).unwrap();
        assert!(t.probability_drift() < 1e-9);
        for st in t.states() {
            assert_abs_diff_eq!(st.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn detailed_balance_violation_rejected() {
        struct Bad;
        impl RateModel for Bad {
            fn rate_matrix(&self, _t: f64, _g: &ThermalState) -> Result<RateMatrix> {
                RateMatrix::from_offdiagonal(array![[0.0, 1.0], [3.0, 0.0]])
            }
        }
        let s = constant_shifting_schedule(1, 2.0, 1.0, 1.0).unwrap();
        let e = integrate_master_equation(&s, &Bad, 0.01, None);
        assert!(matches!(e, Err(CoreError::DetailedBalance { .. })));
    }

    #[test]
    fn stationary_fixed_point_of_partial_swap() {
        let g = thermal_state(&[0.0, 0.7, 1.9], 1.0).unwrap();
        let r = partial_swap_generator(&g, 0.8).unwrap();
        let st = stationary_state(&r).unwrap();
        for (a, b) in st.weights().iter().zip(g.gamma.weights()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn stationary_two_level_null_space() {
        // Γ_01 = a (1→0), Γ_10 = b (0→1); solve b·P0 = a·P1
        let (a, b) = (0.7, 0.2);
        let r = RateMatrix::from_offdiagonal(array![[0.0, a], [b, 0.0]]).unwrap();
        let st = stationary_state(&r).unwrap();
        assert_abs_diff_eq!(st.weights()[0], a / (a + b), epsilon = 1e-12);
        assert_abs_diff_eq!(st.weights()[1], b / (a + b), epsilon = 1e-12);
    }

    #[test]
    fn stationary_reducible_is_an_error() {
        let g = thermal_state(&[0.0, 1.0], 1.0).unwrap();
        let r = partial_swap_generator(&g, 0.0).unwrap();
        match stationary_state(&r) {
            Err(CoreError::ReducibleChain { blocks }) => assert_eq!(blocks.len(), 2),
            other => panic!("expected reducible error, got {other:?}"),
        }
    }

    #[test]
    fn time_dependent_swap_runs_generic() {
        let s = constant_shifting_schedule(2, 3.0, 2.0, 1.0).unwrap();
        let model = TimeDependentSwap { mu_of_t: |t: f64| 0.2 + 0.1 * t };
        let t = integrate_master_equation(&s, &model, 1e-3, None).unwrap();
        assert!(t.final_state().weights()[1] < 0.5);
    }

    #[test]
    fn sandwich_decay_on_hypothesis_windows() {
        // e^{−2μt} D0 ≤ D(t) ≤ e^{−μt} D0 for binary windows with
        // γ1 ≤ p1(0) ≤ 1/2
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let g1: f64 = rng.gen_range(1e-6..0.5);
            let p1 = rng.gen_range(g1..=0.5);
            let mu = rng.gen_range(0.01..10.0);
            let t = rng.gen_range(0.0..5.0);
            let gamma = thermal_state(&[0.0, ((1.0 - g1) / g1).ln()], 1.0).unwrap();
            let p0 = Distribution::new(vec![1.0 - p1, p1]).unwrap();
            let d0 = relative_entropy(&p0, &gamma.gamma).unwrap();
            let pt = evolve_partial_swap_constant(&p0, &gamma, mu, t).unwrap();
            let dt = relative_entropy(&pt, &gamma.gamma).unwrap();
            assert!(dt <= (-mu * t).exp() * d0 + 1e-9);
            assert!(dt >= (-2.0 * mu * t).exp() * d0 - 1e-9);
        }
    }
}
