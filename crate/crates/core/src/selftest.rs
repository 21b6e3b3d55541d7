//! Headless property/invariant suite: every theorem the engine relies on,
//! exercised on seeded random inputs and the standard sweeps. The CLI's
//! `selftest` subcommand runs this and exits nonzero on any failure.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accounting::{ledger, penalty_equality_residual};
use crate::bounds::{inequality_satisfied, throughput_bound, throughput_identity_residual};
use crate::coarse::{
    coarse_entropy_production, coarse_state, coarse_trace, local_equilibrium_check, BitPartition,
};
use crate::dynamics::{
    evolve_partial_swap_constant, integrate_master_equation, ActivityRates,
};
use crate::error::Result;
use crate::experiments::{
    log_grid, region_map, run_fixed_energy_sweep, run_fixed_error_sweep, run_single, Region,
    RegionMapSpec, SweepMode, SweepSpec,
};
use crate::fokker_planck::{double_well_reset_protocol, run_continuum_reset, Grid1D};
use crate::landscape::{thermal_state, EnergyLandscape, ProtocolKind, ProtocolSchedule, Segment};
use crate::simplex::{relative_entropy, BinaryDistribution, Distribution};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

/// A random ≤8-level detailed-balance protocol: random activity rates plus a
/// landscape mixing jumps, holds, and ramps.
pub fn random_step_protocol(
    rng: &mut ChaCha8Rng,
    with_ramps: bool,
) -> Result<(ProtocolSchedule, ActivityRates)> {
    let n = rng.gen_range(2..=8);
    let tau = rng.gen_range(0.5..4.0);
    let mut act = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let v = rng.gen_range(0.2..1.2);
            act[(i, j)] = v;
            act[(j, i)] = v;
        }
    }
    let rand_e = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(0.0..3.0)).collect()
    };
    let e_init = rand_e(rng);
    let n_seg = rng.gen_range(2..=4);
    let mut segments = Vec::with_capacity(n_seg);
    let mut t0 = 0.0;
    let mut e_prev = rand_e(rng); // jump at t = 0
    for s in 0..n_seg {
        let t1 = if s == n_seg - 1 { tau } else { t0 + (tau - t0) * rng.gen_range(0.3..0.7) };
        let e_end = if with_ramps && rng.gen_bool(0.5) { rand_e(rng) } else { e_prev.clone() };
        segments.push(Segment { t0, t1, e_start: e_prev.clone(), e_end: e_end.clone() });
        t0 = t1;
        e_prev = if rng.gen_bool(0.5) { rand_e(rng) } else { e_end };
    }
    let land = EnergyLandscape::new(e_init, segments)?;
    Ok((ProtocolSchedule::new(land, 1.0, ProtocolKind::Custom)?, ActivityRates::new(act)?))
}

fn fig2_fixed_energy_spec() -> SweepSpec {
    SweepSpec {
        mode: SweepMode::FixedEnergy { e_max: 10.0 },
        tau_grid: log_grid(0.1, 1000.0, 60),
        n_steps: 100,
        mu: 0.1,
        beta: 1.0,
        samples_per_window: 64,
    }
}

fn fig2_fixed_error_spec() -> SweepSpec {
    SweepSpec {
        mode: SweepMode::FixedError { eps_target: 0.25 },
        tau_grid: log_grid(0.1, 1000.0, 60),
        n_steps: 100,
        mu: 0.1,
        beta: 1.0,
        samples_per_window: 64,
    }
}

fn check_penalty_equality(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let with_ramps = k % 2 == 1;
        let (schedule, model) = match random_step_protocol(&mut rng, with_ramps) {
            Ok(v) => v,
            Err(e) => return CheckResult::new("penalty_equality", false, e.to_string()),
        };
        let traj = match integrate_master_equation(&schedule, &model, 1e-3 * schedule.tau, None) {
            Ok(t) => t,
            Err(e) => return CheckResult::new("penalty_equality", false, e.to_string()),
        };
        let resid = penalty_equality_residual(&traj, 1.0).unwrap();
        worst = worst.max(resid);
    }
    CheckResult::new(
        "penalty_equality",
        worst < 1e-6,
        format!("worst residual {worst:.3e} over 50 random protocols (tol 1e-6)"),
    )
}

fn check_sweep_bounds(records: &[crate::experiments::RunRecord], tag: &str) -> CheckResult {
    let mut failures = Vec::new();
    for r in records.iter().filter(|r| r.feasible) {
        let b = r.bounds.as_ref().unwrap();
        for rec in &b.records {
            if !rec.holds() {
                failures.push(format!("tau={:.3}: {} slack={:.3e}", r.tau, rec.name, rec.slack));
            }
        }
    }
    CheckResult::new(
        &format!("sweep_bounds_{tag}"),
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} feasible points, every record satisfied",
                records.iter().filter(|r| r.feasible).count())
        } else {
            failures.join("; ")
        },
    )
}

fn check_fixed_error_slack_trend(records: &[crate::experiments::RunRecord]) -> CheckResult {
    let slacks: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.feasible)
        .map(|r| {
            (r.tau, r.bounds.as_ref().unwrap().record("main_penalty_bound").unwrap().slack)
        })
        .collect();
    let ok = slacks.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9);
    CheckResult::new(
        "fixed_error_slack_trend",
        ok,
        format!(
            "slack falls {:.3e} → {:.3e} over {} feasible points",
            slacks.first().map(|s| s.1).unwrap_or(f64::NAN),
            slacks.last().map(|s| s.1).unwrap_or(f64::NAN),
            slacks.len()
        ),
    )
}

fn check_sandwich(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
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
        worst = worst.max(dt - (-mu * t).exp() * d0);
        worst = worst.max((-2.0 * mu * t).exp() * d0 - dt);
    }
    CheckResult::new(
        "relent_sandwich_windows",
        worst < 1e-9,
        format!("worst overshoot {worst:.3e} over 1000 windows (tol 1e-9)"),
    )
}

fn check_data_processing(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=10);
        let draw = |rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..1.0)).collect();
            let s: f64 = raw.iter().sum();
            Distribution::new(raw.iter().map(|x| x / s).collect()).unwrap()
        };
        let p = draw(&mut rng);
        let g = draw(&mut rng);
        let k = rng.gen_range(1..n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let part = BitPartition::new(idx[..k].to_vec(), idx[k..].to_vec()).unwrap();
        let fine = relative_entropy(&p, &g).unwrap();
        let coarse = relative_entropy(
            &coarse_state(&p, &part).unwrap().as_distribution(),
            &coarse_state(&g, &part).unwrap().as_distribution(),
        )
        .unwrap();
        worst = worst.max(coarse - fine);
    }
    CheckResult::new(
        "data_processing",
        worst < 1e-12,
        format!("worst coarse excess {worst:.3e} over 1e4 triples"),
    )
}

fn check_hierarchy_random_runs(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for k in 0..100 {
        let (schedule, model) = random_step_protocol(&mut rng, k % 2 == 0).unwrap();
        // finer than the residual criterion: two-level partitions make the
        // hierarchy an equality, so the Σ^bit quadrature must sit well under
        // the 1e-9 slack
        let traj =
            integrate_master_equation(&schedule, &model, 2e-4 * schedule.tau, None).unwrap();
        let n = schedule.landscape.n_levels();
        let split = rng.gen_range(1..n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let part = BitPartition::new(idx[..split].to_vec(), idx[split..].to_vec()).unwrap();
        let trace = coarse_trace(&traj, &part).unwrap();
        let led = ledger(&traj).unwrap();
        let sigma_bit = coarse_entropy_production(&trace);
        if !inequality_satisfied(led.sigma, sigma_bit) || !inequality_satisfied(sigma_bit, 0.0) {
            failures.push(format!("run {k}: Σ={:.3e} Σ^bit={sigma_bit:.3e}", led.sigma));
        }
        if !inequality_satisfied(led.d_final, crate::bounds::final_coarse_relative_entropy(&trace))
        {
            failures.push(format!("run {k}: D ordering broken"));
        }
    }
    CheckResult::new(
        "entropy_hierarchy_random_runs",
        failures.is_empty(),
        if failures.is_empty() { "100 random coarse-grained runs pass".into() } else { failures.join("; ") },
    )
}

fn check_local_equilibrium_saturation(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(3..=8);
        let e: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let gamma = thermal_state(&e, 1.0).unwrap();
        let split = rng.gen_range(1..n);
        let part = BitPartition::new(
            (0..split).collect(),
            (split..n).collect(),
        )
        .unwrap();
        let c0: f64 = rng.gen_range(0.3..2.0);
        let gw = gamma.gamma.weights();
        let mut w: Vec<f64> = gw.to_vec();
        for &i in part.omega0() {
            w[i] *= c0;
        }
        let s: f64 = w.iter().sum();
        let p = Distribution::new(w.iter().map(|x| x / s).collect()).unwrap();
        let dev = local_equilibrium_check(&p, &gamma, &part).unwrap();
        worst = worst.max(dev);
        let fine = relative_entropy(&p, &gamma.gamma).unwrap();
        let coarse = relative_entropy(
            &coarse_state(&p, &part).unwrap().as_distribution(),
            &coarse_state(&gamma.gamma, &part).unwrap().as_distribution(),
        )
        .unwrap();
        worst = worst.max((fine - coarse).abs());
    }
    CheckResult::new(
        "local_equilibrium_saturation",
        worst < 1e-10,
        format!("worst deviation/equality gap {worst:.3e} (tol 1e-10)"),
    )
}

fn check_speed_limit_ladder() -> CheckResult {
    // τ ×10 per rung with N scaled along (the step protocol's quasistatic
    // family); both sides of Σ^bit ≥ L²/(⟨μ⟩τ) must fall together
    let mut lhs_prev = f64::INFINITY;
    let mut rhs_prev = f64::INFINITY;
    let mut detail = Vec::new();
    let mut ok = true;
    for r in 0..5u32 {
        let tau = 10.0 * 10f64.powi(r as i32);
        let n = (100 * 10usize.pow(r)).min(100_000);
        let (_, trace, ..) = run_single(n, 10.0, tau, 0.1, 1.0, 2).unwrap();
        let sigma_bit = coarse_entropy_production(&trace);
        let l = 2.0 * (trace.final_bit().p1() - 0.5).abs();
        let lhs = sigma_bit;
        let rhs = l * l / (trace.avg_swap_rate() * tau);
        if !inequality_satisfied(lhs, rhs) || lhs >= lhs_prev || rhs >= rhs_prev {
            ok = false;
        }
        lhs_prev = lhs;
        rhs_prev = rhs;
        detail.push(format!("(τ={tau:.0}, N={n}): Σbit={lhs:.3e} ≥ {rhs:.3e}"));
    }
    CheckResult::new("speed_limit_quasistatic_ladder", ok, detail.join(", "))
}

fn check_region_map() -> CheckResult {
    let spec = RegionMapSpec::default_grid(1000.0, 100, 0.1, 1.0);
    let map = match region_map(&spec) {
        Ok(m) => m,
        Err(e) => return CheckResult::new("region_map_structure", false, e.to_string()),
    };
    let ne = map.eps_grid.len();
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, &e_max) in map.e_grid.iter().enumerate() {
        let g1 = 1.0 / (1.0 + (spec.beta * e_max).exp());
        let mismatches = map
            .eps_grid
            .iter()
            .enumerate()
            .filter(|(j, &eps)| (eps < g1) != (map.cells[i * ne + j].label == Region::III))
            .count();
        if mismatches > 1 {
            ok = false;
            notes.push(format!("column {i} off by {mismatches}"));
        }
        let labels: Vec<Region> = (0..ne)
            .map(|j| map.cells[i * ne + j].label)
            .filter(|&l| l != Region::III)
            .collect();
        if labels.windows(2).filter(|w| w[0] != w[1]).count() > 1 {
            ok = false;
            notes.push(format!("column {i} switches twice"));
        }
    }
    let defined: Vec<f64> = map.contour.iter().cloned().filter(|v| v.is_finite()).collect();
    let mono = defined.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
        || defined.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
    if !mono {
        ok = false;
        notes.push("I/II contour not monotone".into());
    }
    CheckResult::new(
        "region_map_structure",
        ok,
        if notes.is_empty() {
            format!("64×64 map at τ={}: III matches γ_1 curve, single monotone contour", map.tau)
        } else {
            notes.join("; ")
        },
    )
}

fn check_proposition(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    let mut worst = f64::INFINITY;
    while count < 100_000 {
        let x1 = rng.gen_range(1e-6..1.0 - 1e-6);
        let y1 = rng.gen_range(1e-6..1.0 - 1e-6);
        let alpha: f64 = rng.gen();
        let mix = alpha * x1 + (1.0 - alpha) * y1;
        if mix > 0.5 {
            continue;
        }
        let p1 = rng.gen_range(mix..=0.5);
        let hi = p1.min(mix);
        if hi <= 1e-9 {
            continue;
        }
        let q1 = rng.gen_range(1e-9..=hi);
        count += 1;
        let bin = |v: f64| BinaryDistribution::new(v).unwrap();
        match crate::simplex::relent_convexity_bound(&bin(p1), &bin(q1), &bin(x1), &bin(y1), alpha)
        {
            Ok((lhs, rhs)) => worst = worst.min(lhs - rhs),
            Err(e) => return CheckResult::new("relent_convexity_proposition", false, e.to_string()),
        }
    }
    CheckResult::new(
        "relent_convexity_proposition",
        worst > -1e-10,
        format!("worst margin {worst:.3e} over 1e5 tuples"),
    )
}

fn check_throughput_identity(records: &[crate::experiments::RunRecord]) -> CheckResult {
    let mut worst = 0.0f64;
    for r in records.iter().filter(|r| r.feasible) {
        let resid = throughput_identity_residual(r.eps, r.e_max, 1.0).unwrap();
        worst = worst.max(resid);
    }
    // composed bound vs direct formula
    let direct = throughput_bound(1.0, 1.0, 1.0, 0.1, 0.25, 10.0).unwrap();
    let g1 = thermal_state(&[0.0, 10.0], 1.0).unwrap().gamma;
    let d_eps = crate::simplex::binary_relative_entropy(
        &BinaryDistribution::new(0.25).unwrap(),
        &BinaryDistribution::new(g1.weights()[1]).unwrap(),
    );
    let ln_ratio = 2f64.ln() - (-10f64).exp().ln_1p();
    let composed = ln_ratio + d_eps + 0.25 / 0.1;
    let comp_resid = (composed - direct.power_bound).abs();
    CheckResult::new(
        "throughput_identity",
        worst < 1e-10 && comp_resid < 1e-12,
        format!("identity worst {worst:.3e}; composition residual {comp_resid:.3e}"),
    )
}

fn check_continuum_quick() -> CheckResult {
    let grid = Grid1D::symmetric(4.25, 256).unwrap();
    let proto = match double_well_reset_protocol(4.0, 0.0, 2.0, 4.0, 1.0, 1.0) {
        Ok(p) => p,
        Err(e) => return CheckResult::new("continuum_quick", false, e.to_string()),
    };
    match run_continuum_reset(&proto, &grid, None, 200, &[]) {
        Ok(run) => {
            let resid = (run.ledger.w_pn
                - ((run.ledger.d_final - run.ledger.d_initial) + run.ledger.sigma_rate)
                    / run.ledger.beta)
                .abs();
            let ok = run.mass_defects.1 < 1e-9 && run.bounds.all_satisfied() && resid < 1e-4;
            CheckResult::new(
                "continuum_quick",
                ok,
                format!(
                    "mass defect {:.2e}, residual {resid:.2e}, bounds {}",
                    run.mass_defects.1,
                    if run.bounds.all_satisfied() { "all satisfied" } else { "VIOLATED" }
                ),
            )
        }
        Err(e) => CheckResult::new("continuum_quick", false, e.to_string()),
    }
}

/// Runs the whole suite; deterministic for a given seed.
pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let fixed_energy = run_fixed_energy_sweep(&fig2_fixed_energy_spec()).unwrap();
    let fixed_error = run_fixed_error_sweep(&fig2_fixed_error_spec()).unwrap();

    let mut results = vec![
        check_penalty_equality(seed),
        check_sweep_bounds(&fixed_energy, "fixed_energy"),
        check_sweep_bounds(&fixed_error, "fixed_error"),
        check_fixed_error_slack_trend(&fixed_error),
        check_sandwich(seed.wrapping_add(1)),
        check_data_processing(seed.wrapping_add(2)),
        check_hierarchy_random_runs(seed.wrapping_add(3)),
        check_local_equilibrium_saturation(seed.wrapping_add(4)),
        check_speed_limit_ladder(),
        check_region_map(),
        check_proposition(seed.wrapping_add(5)),
        check_throughput_identity(&fixed_energy),
        check_continuum_quick(),
    ];
    // envelope containment comes with the sweeps; surface it as its own line
    let envelope_ok = fixed_energy.iter().chain(&fixed_error).filter(|r| r.feasible).all(|r| {
        let b = r.bounds.as_ref().unwrap();
        b.record("penalty_envelope_lower").map(|x| x.holds()).unwrap_or(false)
            && b.record("penalty_envelope_upper").map(|x| x.holds()).unwrap_or(false)
    });
    results.push(CheckResult::new(
        "penalty_envelope_sweeps",
        envelope_ok,
        "W_pn^L ≤ W_pn ≤ W_pn^U at every feasible sweep point".into(),
    ));
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_protocols_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..20 {
            let (schedule, model) = random_step_protocol(&mut rng, k % 2 == 0).unwrap();
            let t = integrate_master_equation(&schedule, &model, 1e-2, None).unwrap();
            assert!(t.probability_drift() < 1e-9);
        }
    }
}
