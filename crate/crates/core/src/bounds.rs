//! Every inequality of the theory evaluated as (lhs, rhs, slack) records:
//! the main work-penalty bound, the coarse-graining and hierarchy
//! inequalities, the speed limit, relative-entropy scaling bounds, the
//! analytic penalty envelope, and the throughput bound.

use serde::{Deserialize, Serialize};

use crate::accounting::ThermoLedger;
use crate::coarse::{coarse_entropy_production, CoarseTrace};
use crate::error::{CoreError, Result};
use crate::simplex::{binary_entropy, binary_relative_entropy, symmetric_relative_entropy};

/// Numerical slack policy: an inequality record passes iff
/// lhs ≥ rhs − (1e-9 + 1e-9·max(|lhs|, |rhs|)).
pub const SLACK_ABS: f64 = 1e-9;
pub const SLACK_REL: f64 = 1e-9;

pub fn inequality_satisfied(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - (SLACK_ABS + SLACK_REL * lhs.abs().max(rhs.abs()))
}

/// One evaluated inequality. `slack = lhs − rhs`; `applicable = false` marks
/// a check whose hypotheses the run does not meet (counted as passing).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub satisfied: bool,
    pub applicable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundRecord {
    fn checked(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack: lhs - rhs,
            satisfied: inequality_satisfied(lhs, rhs),
            applicable: true,
            note: None,
        }
    }

    fn not_applicable(name: &str, note: &str) -> Self {
        Self {
            name: name.to_string(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            slack: f64::NAN,
            satisfied: true,
            applicable: false,
            note: Some(note.to_string()),
        }
    }

    pub fn holds(&self) -> bool {
        !self.applicable || self.satisfied
    }
}

/// Run parameters attached to a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub tau: f64,
    pub beta: f64,
    pub mu_avg: f64,
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub meta: RunMeta,
    pub records: Vec<BoundRecord>,
}

impl BoundsReport {
    pub fn all_satisfied(&self) -> bool {
        self.records.iter().all(BoundRecord::holds)
    }

    pub fn record(&self, name: &str) -> Option<&BoundRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

/// D_ε(τ) = D[P^bit(τ) ‖ γ^bit(τ)].
pub fn final_coarse_relative_entropy(trace: &CoarseTrace) -> f64 {
    binary_relative_entropy(&trace.final_bit(), trace.gamma_bit.last().unwrap())
}

/// Speed limit in its implied form: Σ^bit(τ) ≥ k_B L²/(⟨μ⟩_τ τ), with
/// L the 1-norm displacement of the bit. Σ^bit = 0 with L > 0 is flagged as
/// a violation (it signals an engine bug, not physics).
pub fn speed_limit_check(trace: &CoarseTrace) -> BoundRecord {
    let sigma_bit = coarse_entropy_production(trace);
    let l = (trace.final_bit().p1() - trace.initial_bit().p1()).abs()
        + (trace.final_bit().p0() - trace.initial_bit().p0()).abs();
    let denom = trace.avg_swap_rate() * trace.tau();
    let rhs = if denom > 0.0 {
        l * l / denom
    } else if l > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let mut rec = BoundRecord::checked("speed_limit", sigma_bit, rhs);
    if sigma_bit == 0.0 && l > 0.0 {
        rec.satisfied = false;
        rec.note = Some("bit moved with zero coarse entropy production".into());
    }
    rec
}

/// The main finite-time bound: β W_pn ≥ D_ε(τ) + (1 − 2ε)²/(⟨μ⟩_τ τ).
/// Refuses runs that violate its hypotheses (uniform initial bit, thermal
/// initial fine state); ε is always measured from the trajectory.
pub fn main_penalty_bound_check(
    ledger: &ThermoLedger,
    trace: &CoarseTrace,
) -> Result<BoundRecord> {
    if (trace.initial_bit().p1() - 0.5).abs() > 1e-9 {
        return Err(CoreError::Hypothesis(format!(
            "main bound requires P^bit(0) = [1/2, 1/2]; got P1(0) = {}",
            trace.initial_bit().p1()
        )));
    }
    if ledger.d_initial.abs() > 1e-9 {
        return Err(CoreError::Hypothesis(format!(
            "main bound requires a thermal initial state; D[p(0)‖γ(0)] = {:.3e}",
            ledger.d_initial
        )));
    }
    let eps = trace.reset_error();
    let lhs = ledger.beta * ledger.w_pn;
    let rhs = compose_main_bound_rhs(
        final_coarse_relative_entropy(trace),
        eps,
        trace.avg_swap_rate(),
        trace.tau(),
    );
    Ok(BoundRecord::checked("main_penalty_bound", lhs, rhs))
}

/// Eq. 5's right-hand side assembled from its two parts.
pub fn compose_main_bound_rhs(d_eps: f64, eps: f64, mu_avg: f64, tau: f64) -> f64 {
    let l = 1.0 - 2.0 * eps;
    let denom = mu_avg * tau;
    let speed = if denom > 0.0 {
        l * l / denom
    } else if l != 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    d_eps + speed
}

/// Exponential upper bound for the step protocol:
/// D_ε(τ) ≤ e^{−μτ/N} D[γ(0)‖γ(τ)]. Recorded with the bound as lhs.
pub fn relent_exponential_upper(trace: &CoarseTrace, n_steps: usize) -> Result<BoundRecord> {
    if n_steps == 0 {
        return Err(CoreError::InvalidArgument("n_steps must be ≥ 1".into()));
    }
    let mu = trace.avg_swap_rate();
    let d0n = binary_relative_entropy(&trace.gamma_bit[0], trace.gamma_bit.last().unwrap());
    let lhs = (-mu * trace.tau() / n_steps as f64).exp() * d0n;
    let rhs = final_coarse_relative_entropy(trace);
    Ok(BoundRecord::checked("relent_exponential_upper", lhs, rhs))
}

/// General lower bound on D_ε(τ) from the mixture inequality, with
/// q = e^{−⟨μ⟩τ}:
///
/// D_ε ≥ q D[γ^bit(0)‖γ^bit(τ)] + (1−q) D[P^st(τ)‖γ^bit(τ)]
///        − q(1−q) J[γ^bit(0), P^st(τ)],
///
/// plus the Case-2 form D_ε ≥ q(2q − 1) D[γ^bit(0)‖γ^bit(τ)] when
/// P^st(τ) = γ^bit(τ). Runs whose coarse stationary state is not
/// reset-monotone get not-applicable records instead of guesses.
pub fn relent_general_lower(trace: &CoarseTrace) -> (BoundRecord, BoundRecord) {
    let monotone = trace
        .p_st
        .windows(2)
        .all(|w| w[1].p1() <= w[0].p1() + 1e-12);
    if !monotone {
        return (
            BoundRecord::not_applicable(
                "relent_lower_general",
                "P1^st is not non-increasing along the run",
            ),
            BoundRecord::not_applicable(
                "relent_lower_case2",
                "P1^st is not non-increasing along the run",
            ),
        );
    }
    let q = (-trace.avg_swap_rate() * trace.tau()).exp();
    let g0 = trace.gamma_bit[0];
    let gt = *trace.gamma_bit.last().unwrap();
    let st = *trace.p_st.last().unwrap();
    let d_eps = final_coarse_relative_entropy(trace);

    let rhs = q * binary_relative_entropy(&g0, &gt)
        + (1.0 - q) * binary_relative_entropy(&st, &gt)
        - q * (1.0 - q) * symmetric_relative_entropy(&g0, &st);
    let general = BoundRecord::checked("relent_lower_general", d_eps, rhs);

    let case2 = if (st.p1() - gt.p1()).abs() <= 1e-9 * st.p1().max(gt.p1()).max(1e-30) {
        let rhs2 = q * (2.0 * q - 1.0) * binary_relative_entropy(&g0, &gt);
        BoundRecord::checked("relent_lower_case2", d_eps, rhs2)
    } else {
        BoundRecord::not_applicable("relent_lower_case2", "P^st(τ) differs from γ^bit(τ)")
    };
    (general, case2)
}

/// Analytic envelope of the step-protocol work penalty (energy units):
///
/// W_pn^L = e^{−μτ/N} [1/2 − 1/(1 + e^{β(E_max − ℰ)})] ℰ,
/// W_pn^U = T (e^{βℰ} − 1)/2 + e^{−μτ/N} [E_max/2 − W_qs],   ℰ = E_max/N.
pub fn penalty_envelope_values(
    n_steps: usize,
    e_max: f64,
    tau: f64,
    mu: f64,
    beta: f64,
) -> (f64, f64) {
    let n = n_steps as f64;
    let step = e_max / n;
    let decay = (-mu * tau / n).exp();
    let temperature = 1.0 / beta;
    let w_qs = temperature * (2f64.ln() - (-beta * e_max).exp().ln_1p());
    let lower = decay * (0.5 - 1.0 / (1.0 + (beta * (e_max - step)).exp())) * step;
    let upper = temperature * ((beta * step).exp() - 1.0) / 2.0 + decay * (e_max / 2.0 - w_qs);
    (lower, upper)
}

/// Envelope containment records for a measured W_pn.
pub fn penalty_envelope(
    n_steps: usize,
    e_max: f64,
    tau: f64,
    mu: f64,
    beta: f64,
    w_pn: f64,
) -> (BoundRecord, BoundRecord) {
    let (lo, hi) = penalty_envelope_values(n_steps, e_max, tau, mu, beta);
    (
        BoundRecord::checked("penalty_envelope_lower", w_pn, lo),
        BoundRecord::checked("penalty_envelope_upper", hi, w_pn),
    )
}

/// Broken-out terms of the throughput bound (all dimensionless, per switch).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThroughputTerms {
    pub landauer: f64,
    pub binary_entropy: f64,
    pub energy_tail: f64,
    pub speed: f64,
}

/// Minimal power dissipation per area implied by finite-time reset at the
/// given device parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThroughputReport {
    /// Lower bound on power per area, (k_B T n / τ_SW) · Σ terms.
    pub power_bound: f64,
    /// Lower bound on the per-switch energy E_bit = W_qs + W_pn (energy units).
    pub e_bit_bound: f64,
    /// Information throughput B = n / τ_SW (switches per area per time).
    pub throughput: f64,
    pub terms: ThroughputTerms,
}

/// P ≥ (k_B T n/τ_SW)(ln 2 − H_b(ε) + ε β E_max + (1−2ε)²/(μ τ_SW)).
pub fn throughput_bound(
    n: f64,
    tau_sw: f64,
    temperature: f64,
    mu: f64,
    eps: f64,
    e_max: f64,
) -> Result<ThroughputReport> {
    for (name, v) in
        [("n", n), ("tau_sw", tau_sw), ("T", temperature), ("mu", mu), ("e_max", e_max)]
    {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CoreError::InvalidArgument(format!("{name} = {v} must be positive")));
        }
    }
    if !(0.0..=0.5).contains(&eps) {
        return Err(CoreError::InvalidArgument(format!("eps = {eps} outside [0, 1/2]")));
    }
    let beta = 1.0 / temperature;
    let terms = ThroughputTerms {
        landauer: 2f64.ln(),
        binary_entropy: binary_entropy(eps)?,
        energy_tail: eps * beta * e_max,
        speed: (1.0 - 2.0 * eps).powi(2) / (mu * tau_sw),
    };
    let per_switch = terms.landauer - terms.binary_entropy + terms.energy_tail + terms.speed;
    let e_bit_bound = temperature * per_switch;
    Ok(ThroughputReport {
        power_bound: e_bit_bound * n / tau_sw,
        e_bit_bound,
        throughput: n / tau_sw,
        terms,
    })
}

/// Residual of the two-level algebraic identity
/// ln Z(0)/Z(τ) + D_ε = ln 2 − H_b(ε) + ε β E_max.
pub fn throughput_identity_residual(eps: f64, e_max: f64, beta: f64) -> Result<f64> {
    let ln_z0 = 2f64.ln();
    let ln_zt = (-beta * e_max).exp().ln_1p();
    let g1 = crate::landscape::thermal_state(&[0.0, e_max], beta)?.gamma;
    let final_bit = crate::simplex::BinaryDistribution::new(eps)?;
    let gamma_bit = crate::simplex::BinaryDistribution::new(g1.weights()[1])?;
    let d_eps = binary_relative_entropy(&final_bit, &gamma_bit);
    let lhs = ln_z0 - ln_zt + d_eps;
    let rhs = 2f64.ln() - binary_entropy(eps)? + eps * beta * e_max;
    Ok((lhs - rhs).abs())
}

/// Step-protocol parameters needed by the analytic records.
#[derive(Debug, Clone, Copy)]
pub struct StepProtocolInfo {
    pub n_steps: usize,
    pub e_max: f64,
    pub mu: f64,
}

/// Evaluates every applicable inequality for one run. Analytic records that
/// need the step protocol (exponential D bound, penalty envelope) are
/// emitted only when `step` is given.
pub fn evaluate_all(
    ledger: &ThermoLedger,
    trace: &CoarseTrace,
    step: Option<StepProtocolInfo>,
) -> Result<BoundsReport> {
    let sigma_bit = coarse_entropy_production(trace);
    let mut records = Vec::new();

    records.push(main_penalty_bound_check(ledger, trace)?);
    records.push(BoundRecord::checked(
        "relent_coarse_grain",
        ledger.d_final,
        final_coarse_relative_entropy(trace),
    ));
    records.push(BoundRecord::checked("entropy_hierarchy", ledger.sigma, sigma_bit));
    records.push(BoundRecord::checked("sigma_bit_nonneg", sigma_bit, 0.0));
    records.push(speed_limit_check(trace));
    let (general, case2) = relent_general_lower(trace);
    records.push(general);
    records.push(case2);
    if let Some(info) = step {
        records.push(relent_exponential_upper(trace, info.n_steps)?);
        let (lo, hi) = penalty_envelope(
            info.n_steps,
            info.e_max,
            trace.tau(),
            info.mu,
            ledger.beta,
            ledger.w_pn,
        );
        records.push(lo);
        records.push(hi);
    }

    Ok(BoundsReport {
        meta: RunMeta {
            tau: trace.tau(),
            beta: ledger.beta,
            mu_avg: trace.avg_swap_rate(),
            eps: trace.reset_error(),
            n_steps: step.map(|s| s.n_steps),
            e_max: step.map(|s| s.e_max),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::ledger;
    use crate::coarse::{coarse_trace, BitPartition};
    use crate::dynamics::{integrate_master_equation, PartialSwap};
    use crate::landscape::constant_shifting_schedule;
    use approx::assert_abs_diff_eq;

    fn fig2_run(tau: f64) -> (crate::dynamics::Trajectory, CoarseTrace) {
        let s = constant_shifting_schedule(100, 10.0, tau, 1.0).unwrap();
        let t = integrate_master_equation(&s, &PartialSwap { mu: 0.1 }, tau / 100.0 / 64.0, None)
            .unwrap();
        let trace = coarse_trace(&t, &BitPartition::two_level()).unwrap();
        (t, trace)
    }

    #[test]
    fn slack_policy() {
        assert!(inequality_satisfied(1.0, 1.0));
        assert!(inequality_satisfied(1.0, 1.0 + 1e-10));
        assert!(!inequality_satisfied(1.0, 1.0 + 1e-7));
        assert!(inequality_satisfied(0.0, 0.0));
    }

    #[test]
    fn speed_limit_arithmetic_example() {
        // ε = 0.25, ⟨μ⟩ = 0.1, τ = 100 → rhs = (1 − 0.5)²/10 = 0.025
        let rhs = (1.0f64 - 2.0 * 0.25).powi(2) / (0.1 * 100.0);
        assert_abs_diff_eq!(rhs, 0.025, epsilon = 1e-15);
        // idle bit: rhs = 0, trivially satisfied
        let (_, trace) = fig2_run(1e-3);
        let rec = speed_limit_check(&trace);
        assert!(rec.satisfied);
    }

    #[test]
    fn main_bound_on_fig2_point() {
        let (t, trace) = fig2_run(30.0);
        let led = ledger(&t).unwrap();
        let rec = main_penalty_bound_check(&led, &trace).unwrap();
        assert!(rec.satisfied, "lhs {} rhs {}", rec.lhs, rec.rhs);
        // recompose the rhs from its parts
        let recomposed = compose_main_bound_rhs(
            final_coarse_relative_entropy(&trace),
            trace.reset_error(),
            trace.avg_swap_rate(),
            trace.tau(),
        );
        assert!((rec.rhs - recomposed).abs() < 1e-12);
    }

    #[test]
    fn main_bound_refuses_nonuniform_start() {
        let s = constant_shifting_schedule(10, 4.0, 5.0, 1.0).unwrap();
        let p0 = crate::simplex::Distribution::new(vec![0.8, 0.2]).unwrap();
        let t =
            integrate_master_equation(&s, &PartialSwap { mu: 0.3 }, 0.01, Some(&p0)).unwrap();
        let trace = coarse_trace(&t, &BitPartition::two_level()).unwrap();
        let led = ledger(&t).unwrap();
        assert!(matches!(
            main_penalty_bound_check(&led, &trace),
            Err(CoreError::Hypothesis(_))
        ));
    }

    #[test]
    fn exponential_upper_single_window() {
        // N = 1: D_ε(τ) ≤ e^{−μτ}·D[γ(0)‖γ(τ)], the frozen 4.3068982…
        let s = constant_shifting_schedule(1, 10.0, 10.0, 1.0).unwrap();
        let t = integrate_master_equation(&s, &PartialSwap { mu: 0.1 }, 0.05, None).unwrap();
        let trace = coarse_trace(&t, &BitPartition::two_level()).unwrap();
        let rec = relent_exponential_upper(&trace, 1).unwrap();
        assert!(rec.satisfied);
        assert_abs_diff_eq!(
            rec.lhs,
            (-1.0f64).exp() * 4.306_898_218_339_272,
            epsilon = 1e-10
        );
    }

    #[test]
    fn general_lower_holds_and_case2_applies() {
        let (_, trace) = fig2_run(20.0);
        let (general, case2) = relent_general_lower(&trace);
        assert!(general.applicable && general.satisfied, "{general:?}");
        assert!(case2.applicable && case2.satisfied, "{case2:?}");
        // q < 1/2 makes the Case-2 rhs non-positive
        let (_, trace) = fig2_run(100.0);
        let (_, case2) = relent_general_lower(&trace);
        assert!(case2.rhs <= 0.0);
        assert!(case2.satisfied);
    }

    #[test]
    fn envelope_limits() {
        // μτ/N → ∞: lower → 0, upper → T(e^{βℰ} − 1)/2
        let (lo, hi) = penalty_envelope_values(100, 10.0, 1e6, 0.1, 1.0);
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, (0.1f64.exp() - 1.0) / 2.0, epsilon = 1e-10);
        // containment on a closed-form single-window run
        let s = constant_shifting_schedule(1, 10.0, 10.0, 1.0).unwrap();
        let t = integrate_master_equation(&s, &PartialSwap { mu: 0.1 }, 0.05, None).unwrap();
        let led = ledger(&t).unwrap();
        let (lo, hi) = penalty_envelope(1, 10.0, 10.0, 0.1, 1.0, led.w_pn);
        assert!(lo.satisfied, "{lo:?}");
        assert!(hi.satisfied, "{hi:?}");
    }

    #[test]
    fn throughput_cases() {
        // ε = 1/2: ln2 − H_b cancels and the speed term vanishes
        let r = throughput_bound(1.0, 1.0, 1.0, 0.1, 0.5, 10.0).unwrap();
        assert_abs_diff_eq!(r.power_bound, 0.5 * 10.0, epsilon = 1e-12);
        // ε → 0 limit: ln 2 + 1/(μ τ_SW)
        let r = throughput_bound(1.0, 1.0, 1.0, 0.1, 0.0, 10.0).unwrap();
        assert_abs_diff_eq!(r.power_bound, 2f64.ln() + 10.0, epsilon = 1e-12);
        // frozen from direct evaluation at n=1, τ_SW=1, T=1, μ=0.1, ε=0.25, E_max=10
        let r = throughput_bound(1.0, 1.0, 1.0, 0.1, 0.25, 10.0).unwrap();
        assert_abs_diff_eq!(r.power_bound, 5.130812035941137, epsilon = 1e-12);
        assert!(throughput_bound(1.0, 1.0, 1.0, 0.1, 0.7, 10.0).is_err());

        // cross-check by composing W_qs + D_ε + speed from the run modules
        let beta = 1.0;
        let eps = 0.25;
        let e_max = 10.0;
        let ln_z_ratio = 2f64.ln() - (-beta * e_max as f64).exp().ln_1p();
        let g1 = crate::landscape::thermal_state(&[0.0, e_max], beta).unwrap();
        let d_eps = binary_relative_entropy(
            &crate::simplex::BinaryDistribution::new(eps).unwrap(),
            &crate::simplex::BinaryDistribution::new(g1.gamma.weights()[1]).unwrap(),
        );
        let composed = ln_z_ratio + d_eps + (1.0 - 2.0 * eps) * (1.0 - 2.0 * eps) / 0.1;
        assert!((composed - r.power_bound).abs() < 1e-12);
    }

    #[test]
    fn identity_residual_small_everywhere() {
        for eps in [1e-6, 1e-3, 0.1, 0.25, 0.49] {
            for e_max in [0.5, 2.0, 10.0, 30.0] {
                assert!(throughput_identity_residual(eps, e_max, 1.0).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn evaluate_all_fig2_point() {
        let (t, trace) = fig2_run(10.0);
        let led = ledger(&t).unwrap();
        let report =
            evaluate_all(&led, &trace, Some(StepProtocolInfo { n_steps: 100, e_max: 10.0, mu: 0.1 }))
                .unwrap();
        assert!(report.all_satisfied(), "{report:?}");
        assert!(report.record("main_penalty_bound").is_some());
        assert!(report.record("penalty_envelope_upper").is_some());
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"lhs\""));
    }
}
