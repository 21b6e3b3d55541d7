//! End-to-end experiment drivers: the time-scaling sweeps at fixed energy or
//! fixed error, the fixed-error root solver, and the (E_max, ε) region map.
//!
//! Sweep cells are independent jobs fanned out with rayon; results are
//! collected in grid order so output is deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{ledger, ThermoLedger};
use crate::bounds::{evaluate_all, final_coarse_relative_entropy, BoundsReport, StepProtocolInfo};
use crate::coarse::{coarse_entropy_production, coarse_trace, BitPartition, CoarseTrace};
use crate::dynamics::{integrate_master_equation, PartialSwap, Trajectory};
use crate::error::{CoreError, Result};
use crate::landscape::constant_shifting_schedule;

/// Default number of samples stored per thermalization window; 64 keeps the
/// Simpson integrals of Σ^bit well below the 1e-9 slack policy on every
/// sweep point.
pub const DEFAULT_SAMPLES_PER_WINDOW: usize = 64;

/// Bisection bracket ceiling β·E_max = 50: γ_1(50/β) < 2e-22 underflows any
/// practical reset error.
pub const DEFAULT_ENERGY_CAP_BETA: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepMode {
    FixedEnergy { e_max: f64 },
    FixedError { eps_target: f64 },
}

/// Parameters of one sweep over a τ grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(flatten)]
    pub mode: SweepMode,
    pub tau_grid: Vec<f64>,
    pub n_steps: usize,
    pub mu: f64,
    pub beta: f64,
    #[serde(default = "default_spw")]
    pub samples_per_window: usize,
}

fn default_spw() -> usize {
    DEFAULT_SAMPLES_PER_WINDOW
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() {
            return Err(CoreError::Empty);
        }
        if !self.tau_grid.windows(2).all(|w| w[1] > w[0]) || self.tau_grid[0] <= 0.0 {
            return Err(CoreError::InvalidArgument(
                "tau grid must be strictly increasing and positive".into(),
            ));
        }
        if self.n_steps < 1 {
            return Err(CoreError::InvalidArgument("n_steps must be ≥ 1".into()));
        }
        if !(self.mu >= 0.0) || !(self.beta > 0.0) {
            return Err(CoreError::InvalidArgument("mu must be ≥ 0 and beta > 0".into()));
        }
        if self.samples_per_window < 2 {
            return Err(CoreError::InvalidArgument("samples_per_window must be ≥ 2".into()));
        }
        match self.mode {
            SweepMode::FixedEnergy { e_max } => {
                if !(e_max >= 0.0) {
                    return Err(CoreError::InvalidArgument("e_max must be ≥ 0".into()));
                }
            }
            SweepMode::FixedError { eps_target } => {
                if !(eps_target > 0.0 && eps_target <= 0.5) {
                    return Err(CoreError::InvalidArgument(
                        "eps_target must lie in (0, 1/2]".into(),
                    ));
                }
                let cap = DEFAULT_ENERGY_CAP_BETA / self.beta;
                let g1_cap = 1.0 / (1.0 + (self.beta * cap).exp());
                if eps_target <= g1_cap {
                    return Err(CoreError::Infeasible(format!(
                        "eps_target = {eps_target} is below the thermal tail γ_1 at the \
                         energy cap ({g1_cap:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything measured at one sweep point. `feasible = false` cells (fixed
/// error unreachable at that τ) carry no run data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub tau: f64,
    pub e_max: f64,
    pub eps: f64,
    pub feasible: bool,
    pub sigma_bit: f64,
    pub d_eps: f64,
    pub mu_avg: f64,
    pub ledger: Option<ThermoLedger>,
    pub bounds: Option<BoundsReport>,
}

/// One constant-shifting run with full accounting, coarse trace, and every
/// bound record.
pub fn run_single(
    n_steps: usize,
    e_max: f64,
    tau: f64,
    mu: f64,
    beta: f64,
    samples_per_window: usize,
) -> Result<(Trajectory, CoarseTrace, ThermoLedger, BoundsReport)> {
    let schedule = constant_shifting_schedule(n_steps, e_max, tau, beta)?;
    let dt_max = tau / n_steps as f64 / samples_per_window as f64;
    let traj = integrate_master_equation(&schedule, &PartialSwap { mu }, dt_max, None)?;
    let trace = coarse_trace(&traj, &BitPartition::two_level())?;
    let led = ledger(&traj)?;
    let report = evaluate_all(&led, &trace, Some(StepProtocolInfo { n_steps, e_max, mu }))?;
    Ok((traj, trace, led, report))
}

fn record_from_run(
    tau: f64,
    e_max: f64,
    trace: &CoarseTrace,
    led: ThermoLedger,
    report: BoundsReport,
) -> RunRecord {
    RunRecord {
        tau,
        e_max,
        eps: trace.reset_error(),
        feasible: true,
        sigma_bit: coarse_entropy_production(trace),
        d_eps: final_coarse_relative_entropy(trace),
        mu_avg: trace.avg_swap_rate(),
        ledger: Some(led),
        bounds: Some(report),
    }
}

/// Fixed-E_max sweep over the τ grid (the left Fig.-style panel).
pub fn run_fixed_energy_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let e_max = match spec.mode {
        SweepMode::FixedEnergy { e_max } => e_max,
        _ => return Err(CoreError::InvalidArgument("spec is not fixed-energy".into())),
    };
    spec.tau_grid
        .par_iter()
        .map(|&tau| {
            let (_, trace, led, report) =
                run_single(spec.n_steps, e_max, tau, spec.mu, spec.beta, spec.samples_per_window)?;
            Ok(record_from_run(tau, e_max, &trace, led, report))
        })
        .collect()
}

/// Final P_1(τ) of the constant-shifting protocol by the closed-form window
/// recursion: P_1^k = e^{−μΔτ} P_1^{k−1} + (1 − e^{−μΔτ}) γ_1(kℰ).
/// Independent of the trajectory engine; used for root solving and as a
/// cross-validation oracle.
pub fn constant_shifting_final_p1(
    n_steps: usize,
    e_max: f64,
    tau: f64,
    mu: f64,
    beta: f64,
) -> f64 {
    let n = n_steps as f64;
    let decay = (-mu * tau / n).exp();
    let mut p1 = 0.5;
    for k in 1..=n_steps {
        let e1 = e_max * k as f64 / n;
        let be = beta * e1;
        let g1 = if be > 700.0 { (-be).exp() } else { 1.0 / (1.0 + be.exp()) };
        p1 = decay * p1 + (1.0 - decay) * g1;
    }
    p1
}

/// Bisection on E_max such that the final P_1 equals `eps_target` within
/// 1e-10. P_1(τ) is monotone decreasing in E_max (asserted on the bracket);
/// an unreachable target reports the minimum achievable error.
pub fn solve_fixed_error_energy(
    eps_target: f64,
    tau: f64,
    n_steps: usize,
    mu: f64,
    beta: f64,
) -> Result<f64> {
    if !(eps_target > 0.0 && eps_target < 0.5) {
        if eps_target == 0.5 {
            return Ok(0.0); // no drive needed
        }
        return Err(CoreError::InvalidArgument(format!(
            "eps_target = {eps_target} outside (0, 1/2]"
        )));
    }
    let cap = DEFAULT_ENERGY_CAP_BETA / beta;
    let p1_cap = constant_shifting_final_p1(n_steps, cap, tau, mu, beta);
    if p1_cap > eps_target {
        return Err(CoreError::Infeasible(format!(
            "minimum achievable error at (tau = {tau}, mu = {mu}, N = {n_steps}) is \
             {p1_cap:.6e} > target {eps_target}"
        )));
    }
    let mut lo = 0.0f64;
    let mut hi = cap;
    let mut p_lo = constant_shifting_final_p1(n_steps, lo, tau, mu, beta);
    let mut p_hi = p1_cap;
    // monotonicity of the forward map on the bracket
    if p_lo < p_hi {
        return Err(CoreError::Numerics(
            "final error is not decreasing in E_max on the bracket".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p_mid = constant_shifting_final_p1(n_steps, mid, tau, mu, beta);
        if !(p_mid <= p_lo + 1e-12 && p_mid >= p_hi - 1e-12) {
            return Err(CoreError::Numerics(
                "final error is not monotone in E_max during bisection".into(),
            ));
        }
        if p_mid > eps_target {
            lo = mid;
            p_lo = p_mid;
        } else {
            hi = mid;
            p_hi = p_mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    let e = 0.5 * (lo + hi);
    let resid = (constant_shifting_final_p1(n_steps, e, tau, mu, beta) - eps_target).abs();
    if resid > 1e-10 {
        return Err(CoreError::Numerics(format!(
            "bisection stalled with residual {resid:.3e}"
        )));
    }
    Ok(e)
}

/// Fixed-error sweep: per τ, solve E_max(τ) and run it as a fixed-energy
/// point. Infeasible τ's become infeasible records and the sweep continues.
pub fn run_fixed_error_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let eps_target = match spec.mode {
        SweepMode::FixedError { eps_target } => eps_target,
        _ => return Err(CoreError::InvalidArgument("spec is not fixed-error".into())),
    };
    spec.tau_grid
        .par_iter()
        .map(|&tau| {
            let e_max =
                match solve_fixed_error_energy(eps_target, tau, spec.n_steps, spec.mu, spec.beta)
                {
                    Ok(e) => e,
                    Err(CoreError::Infeasible(_)) => {
                        return Ok(RunRecord {
                            tau,
                            e_max: f64::NAN,
                            eps: f64::NAN,
                            feasible: false,
                            sigma_bit: f64::NAN,
                            d_eps: f64::NAN,
                            mu_avg: f64::NAN,
                            ledger: None,
                            bounds: None,
                        })
                    }
                    Err(e) => return Err(e),
                };
            let (_, trace, led, report) =
                run_single(spec.n_steps, e_max, tau, spec.mu, spec.beta, spec.samples_per_window)?;
            Ok(record_from_run(tau, e_max, &trace, led, report))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Relative-entropy term dominates: D_ε(τ) > Σ(τ).
    I,
    /// Entropy-production term dominates: D_ε(τ) < Σ(τ).
    II,
    /// Protocol cannot reach the requested error at this E_max.
    III,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegionCell {
    pub e_max: f64,
    pub eps: f64,
    pub label: Region,
    pub d_eps: f64,
    pub sigma: f64,
}

/// Map over (E_max, ε) at fixed τ. Each E_max column is one protocol run
/// giving Σ(τ), γ^bit(τ) and the reachability floor; a cell is III iff the
/// requested ε undercuts γ_1(E_max) or the floor, else its D_ε is evaluated
/// at the requested error against the run's final thermal state. The solid
/// D_ε = Σ contour is emitted per column (D_ε is increasing in ε there).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionMap {
    pub tau: f64,
    pub e_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// Row-major: cells[i_e * eps_grid.len() + i_eps].
    pub cells: Vec<RegionCell>,
    /// Per-column ε where D_ε = Σ (NaN where the contour leaves the grid).
    pub contour: Vec<f64>,
}

pub struct RegionMapSpec {
    pub tau: f64,
    pub n_steps: usize,
    pub mu: f64,
    pub beta: f64,
    pub e_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub samples_per_window: usize,
}

impl RegionMapSpec {
    /// 64×64 log grid over E_max ∈ [0.1, 20], ε ∈ [1e-4, 0.5).
    pub fn default_grid(tau: f64, n_steps: usize, mu: f64, beta: f64) -> Self {
        Self {
            tau,
            n_steps,
            mu,
            beta,
            e_grid: log_grid(0.1, 20.0, 64),
            eps_grid: log_grid(1e-4, 0.4999, 64),
            samples_per_window: 16,
        }
    }
}

pub fn log_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && start > 0.0 && stop > start);
    let (a, b) = (start.ln(), stop.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

fn binary_kl_scalar(p1: f64, q1: f64) -> f64 {
    let mut s = 0.0;
    for (p, q) in [(1.0 - p1, 1.0 - q1), (p1, q1)] {
        if p > 0.0 {
            s += p * (p / q).ln();
        }
    }
    s
}

pub fn region_map(spec: &RegionMapSpec) -> Result<RegionMap> {
    if !(spec.tau > 0.0) {
        return Err(CoreError::InvalidArgument("tau must be positive".into()));
    }
    if spec.e_grid.iter().any(|&e| e <= 0.0) || spec.eps_grid.iter().any(|&e| e <= 0.0) {
        return Err(CoreError::InvalidArgument("grids must be positive".into()));
    }
    struct Column {
        e_max: f64,
        g1: f64,
        eps_floor: f64,
        sigma: f64,
    }
    let columns: Vec<Column> = spec
        .e_grid
        .par_iter()
        .map(|&e_max| {
            let (_, trace, led, _) = run_single(
                spec.n_steps,
                e_max,
                spec.tau,
                spec.mu,
                spec.beta,
                spec.samples_per_window,
            )?;
            Ok(Column {
                e_max,
                g1: trace.gamma_bit.last().unwrap().p1(),
                eps_floor: trace.reset_error(),
                sigma: led.sigma,
            })
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(spec.e_grid.len() * spec.eps_grid.len());
    let mut contour = Vec::with_capacity(spec.e_grid.len());
    for col in &columns {
        for &eps in &spec.eps_grid {
            let infeasible = eps < col.g1 || eps < col.eps_floor * (1.0 - 1e-9);
            let (label, d_eps) = if infeasible {
                (Region::III, f64::NAN)
            } else {
                let d = binary_kl_scalar(eps, col.g1);
                (if d > col.sigma { Region::I } else { Region::II }, d)
            };
            cells.push(RegionCell { e_max: col.e_max, eps, label, d_eps, sigma: col.sigma });
        }
        // D(ε) is increasing in ε above γ_1, so the D = Σ crossing is a
        // bisection in ε
        let lo0 = col.eps_floor.max(col.g1);
        let (mut lo, mut hi) = (lo0, 0.5);
        let f = |e: f64| binary_kl_scalar(e, col.g1) - col.sigma;
        if f(lo) > 0.0 || f(hi) < 0.0 {
            contour.push(f64::NAN);
        } else {
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            contour.push(0.5 * (lo + hi));
        }
    }
    Ok(RegionMap {
        tau: spec.tau,
        e_grid: spec.e_grid.clone(),
        eps_grid: spec.eps_grid.clone(),
        cells,
        contour,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_matches_engine() {
        for &(n, e, tau, mu) in
            &[(1usize, 10.0, 10.0, 0.1), (100, 10.0, 30.0, 0.1), (7, 3.0, 2.0, 0.8)]
        {
            let (traj, ..) = run_single(n, e, tau, mu, 1.0, 16).unwrap();
            let direct = constant_shifting_final_p1(n, e, tau, mu, 1.0);
            assert_abs_diff_eq!(
                traj.final_state().weights()[1],
                direct,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn fixed_energy_sweep_monotone_work() {
        let spec = SweepSpec {
            mode: SweepMode::FixedEnergy { e_max: 10.0 },
            tau_grid: log_grid(0.1, 1000.0, 20),
            n_steps: 100,
            mu: 0.1,
            beta: 1.0,
            samples_per_window: 64,
        };
        let recs = run_fixed_energy_sweep(&spec).unwrap();
        assert_eq!(recs.len(), 20);
        for pair in recs.windows(2) {
            let (a, b) =
                (pair[0].ledger.as_ref().unwrap(), pair[1].ledger.as_ref().unwrap());
            assert!(b.w <= a.w + 1e-12, "W increased along the sweep");
            assert!(b.w_pn <= a.w_pn + 1e-12, "W_pn increased along the sweep");
        }
        for r in &recs {
            assert!(r.bounds.as_ref().unwrap().all_satisfied());
        }
        // short-τ endpoint: sudden quench, W_pn → E_max/2 − W_qs
        let first = recs[0].ledger.as_ref().unwrap();
        assert!((first.w_pn - (5.0 - first.w_qs)).abs() < 0.05);
        // long-τ endpoint obeys the envelope floor
        let last = recs.last().unwrap().ledger.as_ref().unwrap();
        let (lo, _) =
            crate::bounds::penalty_envelope_values(100, 10.0, 1000.0, 0.1, 1.0);
        assert!(last.w_pn >= lo);
    }

    #[test]
    fn fixed_error_solver_cases() {
        // ε = 1/2 needs no drive
        assert_eq!(solve_fixed_error_energy(0.5, 5.0, 10, 0.1, 1.0).unwrap(), 0.0);

        // quasistatic limit: E_max → β⁻¹ ln((1−ε)/ε)
        let e = solve_fixed_error_energy(0.25, 4e4, 400, 1.0, 1.0).unwrap();
        assert!((e - 3f64.ln()).abs() < 1e-3, "E = {e} vs ln 3 = {}", 3f64.ln());

        // forward run at the root reproduces the target
        let e = solve_fixed_error_energy(0.25, 50.0, 100, 0.1, 1.0).unwrap();
        let (traj, ..) = run_single(100, e, 50.0, 0.1, 1.0, 16).unwrap();
        assert!((traj.final_state().weights()[1] - 0.25).abs() < 1e-8);

        // infeasible below the mixing floor e^{−μτ}/2
        let err = solve_fixed_error_energy(0.25, 5.0, 100, 0.1, 1.0);
        assert!(matches!(err, Err(CoreError::Infeasible(_))));
    }

    #[test]
    fn fixed_error_sweep_marks_infeasible_cells() {
        let spec = SweepSpec {
            mode: SweepMode::FixedError { eps_target: 0.25 },
            tau_grid: log_grid(0.1, 300.0, 12),
            n_steps: 100,
            mu: 0.1,
            beta: 1.0,
            samples_per_window: 64,
        };
        let recs = run_fixed_error_sweep(&spec).unwrap();
        let threshold = 2f64.ln() / 0.1;
        for r in &recs {
            assert_eq!(r.feasible, r.tau > threshold, "tau = {}", r.tau);
            if r.feasible {
                assert!((r.eps - 0.25).abs() < 1e-8);
                assert!(r.bounds.as_ref().unwrap().all_satisfied());
            }
        }
    }

    #[test]
    fn sweep_spec_validation() {
        let mut spec = SweepSpec {
            mode: SweepMode::FixedError { eps_target: 1e-30 },
            tau_grid: vec![1.0, 2.0],
            n_steps: 10,
            mu: 0.1,
            beta: 1.0,
            samples_per_window: 8,
        };
        assert!(matches!(spec.validate(), Err(CoreError::Infeasible(_))));
        spec.mode = SweepMode::FixedEnergy { e_max: 1.0 };
        spec.tau_grid = vec![2.0, 1.0];
        assert!(spec.validate().is_err());
        spec.tau_grid = vec![-1.0, 1.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn region_map_structure() {
        let spec = RegionMapSpec {
            tau: 1000.0,
            n_steps: 100,
            mu: 0.1,
            beta: 1.0,
            e_grid: log_grid(0.1, 20.0, 16),
            eps_grid: log_grid(1e-4, 0.4999, 16),
            samples_per_window: 8,
        };
        let map = region_map(&spec).unwrap();
        assert_eq!(map.cells.len(), 256);
        // III exactly below the thermal-tail curve (within one cell)
        for (i, &e_max) in map.e_grid.iter().enumerate() {
            let g1 = 1.0 / (1.0 + e_max.exp());
            let mut mismatches = 0;
            for (j, &eps) in map.eps_grid.iter().enumerate() {
                let want = eps < g1;
                let got = map.cells[i * 16 + j].label == Region::III;
                if want != got {
                    mismatches += 1;
                }
            }
            assert!(mismatches <= 1, "column {i} off by {mismatches} cells");
        }
        // labels in a feasible column switch II → I once as ε grows
        for i in 0..map.e_grid.len() {
            let labels: Vec<Region> = (0..16)
                .map(|j| map.cells[i * 16 + j].label)
                .filter(|&l| l != Region::III)
                .collect();
            let switches =
                labels.windows(2).filter(|w| w[0] != w[1]).count();
            assert!(switches <= 1, "column {i}: {labels:?}");
        }
        // contour is monotone across columns where defined
        let defined: Vec<f64> = map.contour.iter().cloned().filter(|v| v.is_finite()).collect();
        assert!(
            defined.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
                || defined.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)),
            "contour not monotone: {defined:?}"
        );
    }
}
