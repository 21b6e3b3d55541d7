//! Overdamped Fokker-Planck backend: double-well erasure on a grid.
//!
//! The spatial scheme is a conservative finite volume with exponential
//! fitting of the drift-diffusion flux (Bernoulli-function face weights), so
//! the discretized Gibbs density is an exact fixed point and positivity is
//! preserved under the stability limit. The discrete system is then itself a
//! birth-death master equation in detailed balance, and the whole discrete
//! accounting/coarse-graining stack applies verbatim.
//!
//! Time stepping is Heun with the potential staircased per step: the drive
//! moves V with the density frozen (work), then the density relaxes under
//! the frozen V (heat). Coarse rates across x = 0 are estimated with the
//! short-time Gaussian propagator, the measurable route; their δt dependence
//! is an intrinsic property of the continuum limit and is reported, not
//! hidden.

use serde::{Deserialize, Serialize};

use crate::accounting::ThermoLedger;
use crate::bounds::{evaluate_all, BoundsReport};
use crate::coarse::CoarseTrace;
use crate::dynamics::Span;
use crate::error::{CoreError, Result};
use crate::simplex::BinaryDistribution;

/// Uniform cell-centered grid on [x_min, x_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub m: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, m: usize) -> Result<Self> {
        if !(x_max > x_min) || m < 4 {
            return Err(CoreError::InvalidArgument(
                "grid needs x_max > x_min and at least 4 cells".into(),
            ));
        }
        Ok(Self { x_min, x_max, m })
    }

    /// Symmetric domain [−x_half, x_half]; an even cell count puts a cell
    /// face exactly at the logical boundary x = 0.
    pub fn symmetric(x_half: f64, m: usize) -> Result<Self> {
        Self::new(-x_half, x_half, m)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.m as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.center(i)).collect()
    }
}

/// Probability density per length on a grid; Σ pᵢ Δx = 1.
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub grid: Grid1D,
    pub density: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: Grid1D, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.m {
            return Err(CoreError::LengthMismatch { expected: grid.m, got: density.len() });
        }
        for (i, &p) in density.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                return Err(CoreError::NegativeWeight { index: i, value: p });
            }
        }
        let mass: f64 = density.iter().sum::<f64>() * grid.dx();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(CoreError::NotNormalized { deviation: (mass - 1.0).abs() });
        }
        Ok(Self { grid, density })
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.grid.dx()
    }

    /// Mass left (bit 0) and right (bit 1) of x = 0, split by cell center.
    pub fn block_masses(&self) -> (f64, f64) {
        let dx = self.grid.dx();
        let mut left = 0.0;
        let mut right = 0.0;
        for (i, &p) in self.density.iter().enumerate() {
            if self.grid.center(i) < 0.0 {
                left += p * dx;
            } else {
                right += p * dx;
            }
        }
        (left, right)
    }
}

/// Quartic double-well drive V(x, t) = k x⁴/4 − a(t) x²/2 + f(t) x with
/// piecewise-linear barrier and tilt schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialProtocol {
    pub quartic: f64,
    pub knots: Vec<PotentialKnot>,
    pub diffusion: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialKnot {
    pub t: f64,
    pub barrier: f64,
    pub tilt: f64,
}

impl PotentialProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.quartic > 0.0) {
            return Err(CoreError::InvalidArgument("quartic coefficient must be > 0".into()));
        }
        if !(self.diffusion > 0.0) || !(self.beta > 0.0) {
            return Err(CoreError::InvalidArgument("diffusion and beta must be > 0".into()));
        }
        if self.knots.len() < 2 || self.knots[0].t != 0.0 {
            return Err(CoreError::InvalidArgument("need knots covering [0, τ]".into()));
        }
        if !self.knots.windows(2).all(|w| w[1].t > w[0].t) {
            return Err(CoreError::InvalidArgument("knot times must increase".into()));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.knots.last().unwrap().t
    }

    /// (barrier a, tilt f) at time t by linear interpolation.
    pub fn params_at(&self, t: f64) -> (f64, f64) {
        let knots = &self.knots;
        if t <= knots[0].t {
            return (knots[0].barrier, knots[0].tilt);
        }
        for w in knots.windows(2) {
            if t <= w[1].t {
                let s = (t - w[0].t) / (w[1].t - w[0].t);
                return (
                    w[0].barrier + s * (w[1].barrier - w[0].barrier),
                    w[0].tilt + s * (w[1].tilt - w[0].tilt),
                );
            }
        }
        let last = knots.last().unwrap();
        (last.barrier, last.tilt)
    }

    pub fn potential(&self, x: f64, a: f64, f: f64) -> f64 {
        self.quartic * x.powi(4) / 4.0 - a * x * x / 2.0 + f * x
    }

    pub fn potential_grad(&self, x: f64, a: f64, f: f64) -> f64 {
        self.quartic * x.powi(3) - a * x + f
    }

    pub fn potential_on(&self, grid: &Grid1D, a: f64, f: f64) -> Vec<f64> {
        (0..grid.m).map(|i| self.potential(grid.center(i), a, f)).collect()
    }
}

/// The barrier-lower/tilt/restore erasure drive: a ramps a0 → a1 while the
/// tilt ramps 0 → f1 over the first half, then a is restored with the tilt
/// held.
pub fn double_well_reset_protocol(
    a0: f64,
    a1: f64,
    f1: f64,
    tau: f64,
    diffusion: f64,
    beta: f64,
) -> Result<PotentialProtocol> {
    if !(a0 > 0.0) || a1 > 0.0 || !(f1 > 0.0) || !(tau > 0.0) {
        return Err(CoreError::InvalidArgument(
            "need a0 > 0, a1 ≤ 0, f1 > 0, tau > 0".into(),
        ));
    }
    let proto = PotentialProtocol {
        quartic: 1.0,
        knots: vec![
            PotentialKnot { t: 0.0, barrier: a0, tilt: 0.0 },
            PotentialKnot { t: tau / 2.0, barrier: a1, tilt: f1 },
            PotentialKnot { t: tau, barrier: a0, tilt: f1 },
        ],
        diffusion,
        beta,
    };
    proto.validate()?;
    Ok(proto)
}

/// Discretized Gibbs density e^{−βV}/Z on the grid, log-domain.
pub fn continuum_thermal(proto: &PotentialProtocol, grid: &Grid1D, t: f64) -> GridDensity {
    let (a, f) = proto.params_at(t);
    let v = proto.potential_on(grid, a, f);
    let min_v = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = v.iter().map(|&vi| (-proto.beta * (vi - min_v)).exp()).collect();
    let z: f64 = w.iter().sum::<f64>() * grid.dx();
    for x in &mut w {
        *x /= z;
    }
    GridDensity { grid: *grid, density: w }
}

/// ln Z(t) with Z = Σ e^{−βV} Δx (the discrete partition function the
/// accounting must be consistent with).
pub fn continuum_log_z(proto: &PotentialProtocol, grid: &Grid1D, t: f64) -> f64 {
    let (a, f) = proto.params_at(t);
    let v = proto.potential_on(grid, a, f);
    let min_v = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let s: f64 = v.iter().map(|&vi| (-proto.beta * (vi - min_v)).exp()).sum();
    -proto.beta * min_v + (s * grid.dx()).ln()
}

/// Bernoulli face weight w/(e^w − 1), series near 0.
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-5 {
        1.0 - w / 2.0 + w * w / 12.0
    } else {
        w / w.exp_m1()
    }
}

/// Per-face one-way coefficients (on cell masses): flow i→i+1 is fwd[i]·m[i],
/// flow i+1→i is bwd[i]·m[i+1]; both in units 1/time.
fn face_coefficients(proto: &PotentialProtocol, grid: &Grid1D, a: f64, f: f64) -> (Vec<f64>, Vec<f64>) {
    let v = proto.potential_on(grid, a, f);
    let c = proto.diffusion / (grid.dx() * grid.dx());
    let mut fwd = Vec::with_capacity(grid.m - 1);
    let mut bwd = Vec::with_capacity(grid.m - 1);
    for i in 0..grid.m - 1 {
        let w = proto.beta * (v[i + 1] - v[i]);
        fwd.push(c * bernoulli(w));
        bwd.push(c * bernoulli(-w));
    }
    (fwd, bwd)
}

fn max_outflow(fwd: &[f64], bwd: &[f64]) -> f64 {
    let m = fwd.len() + 1;
    let mut worst = 0.0f64;
    for i in 0..m {
        let out = if i == 0 {
            fwd[0]
        } else if i == m - 1 {
            bwd[m - 2]
        } else {
            fwd[i] + bwd[i - 1]
        };
        worst = worst.max(out);
    }
    worst
}

/// dm/dt from the face flows, zero-flux boundaries.
fn mass_rhs(m: &[f64], fwd: &[f64], bwd: &[f64], out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = 0.0;
    }
    for i in 0..m.len() - 1 {
        let j = fwd[i] * m[i] - bwd[i] * m[i + 1];
        out[i] -= j;
        out[i + 1] += j;
    }
}

/// Flow-form entropy production rate of the discrete chain (k_B per time).
fn sigma_rate_of(m: &[f64], fwd: &[f64], bwd: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..m.len() - 1 {
        let a = fwd[i] * m[i];
        let b = bwd[i] * m[i + 1];
        if a > 1e-300 && b > 1e-300 {
            s += (a - b) * (a / b).ln();
        }
    }
    s
}

/// One conservative finite-volume update (Heun) of length `dt` under the
/// frozen potential (a, f). Rejects dt above the positivity/stability limit
/// with a suggestion.
pub fn fp_step(density: &GridDensity, proto: &PotentialProtocol, a: f64, f: f64, dt: f64) -> Result<GridDensity> {
    let grid = density.grid;
    let (fwd, bwd) = face_coefficients(proto, &grid, a, f);
    let limit = 1.0 / max_outflow(&fwd, &bwd);
    if dt > limit {
        return Err(CoreError::Numerics(format!(
            "dt = {dt:.3e} exceeds the stability limit; use dt ≤ {:.3e}",
            0.5 * limit
        )));
    }
    let dx = grid.dx();
    let mut m: Vec<f64> = density.density.iter().map(|p| p * dx).collect();
    let mut k1 = vec![0.0; grid.m];
    let mut k2 = vec![0.0; grid.m];
    mass_rhs(&m, &fwd, &bwd, &mut k1);
    let pred: Vec<f64> = m.iter().zip(&k1).map(|(x, d)| x + dt * d).collect();
    mass_rhs(&pred, &fwd, &bwd, &mut k2);
    for i in 0..grid.m {
        m[i] += 0.5 * dt * (k1[i] + k2[i]);
        if m[i] < 0.0 {
            m[i] = 0.0;
        }
    }
    GridDensity::new(grid, m.iter().map(|x| x / dx).collect())
}

/// Gaussian short-time propagator estimate of the bit rates across x = 0:
/// mass crossing in δt, divided by δt and block mass. Errors out when the
/// probe moves more than 10% of a block per δt.
pub fn continuum_coarse_rates(
    density: &GridDensity,
    proto: &PotentialProtocol,
    a: f64,
    f: f64,
    dt_probe: f64,
) -> Result<(f64, f64, f64)> {
    if !(dt_probe > 0.0) {
        return Err(CoreError::InvalidArgument("dt_probe must be > 0".into()));
    }
    let grid = density.grid;
    let dx = grid.dx();
    let sigma = (2.0 * proto.diffusion * dt_probe).sqrt();
    let mut cross_10 = 0.0; // mass moving right→left (into bit 0)
    let mut cross_01 = 0.0; // mass moving left→right (into bit 1)
    let mut mass_0 = 0.0;
    let mut mass_1 = 0.0;
    for i in 0..grid.m {
        let x = grid.center(i);
        let m = density.density[i] * dx;
        if m == 0.0 {
            continue;
        }
        let drift = -proto.beta * proto.diffusion * proto.potential_grad(x, a, f) * dt_probe;
        let mean_landing = x + drift;
        // P(landing < 0) = Φ(−mean/σ)
        let p_left = 0.5 * libm::erfc(mean_landing / (sigma * std::f64::consts::SQRT_2));
        if x < 0.0 {
            mass_0 += m;
            cross_01 += m * (1.0 - p_left);
        } else {
            mass_1 += m;
            cross_10 += m * p_left;
        }
    }
    if cross_10 > 0.10 * mass_1 || cross_01 > 0.10 * mass_0 {
        return Err(CoreError::Numerics(
            "dt_probe too large: more than 10% of a block crosses per probe".into(),
        ));
    }
    let g01 = if mass_1 > 1e-300 { cross_10 / (dt_probe * mass_1) } else { 0.0 };
    let g10 = if mass_0 > 1e-300 { cross_01 / (dt_probe * mass_0) } else { 0.0 };
    Ok((g01, g10, g01 + g10))
}

fn grid_entropy(m: &[f64], dx: f64) -> f64 {
    let mut s = 0.0;
    for &mi in m {
        if mi > 0.0 {
            s -= mi * (mi / dx).ln();
        }
    }
    s
}

fn grid_relent(m: &[f64], gamma_density: &[f64], dx: f64) -> f64 {
    let mut d = 0.0;
    for (&mi, &gi) in m.iter().zip(gamma_density) {
        if mi > 0.0 {
            if gi <= 0.0 {
                return f64::INFINITY;
            }
            d += mi * (mi / (dx * gi)).ln();
        }
    }
    d
}

/// A density snapshot for export: (x, p, γ, V) at one time.
#[derive(Debug, Clone, Serialize)]
pub struct DensitySnapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub thermal: Vec<f64>,
    pub potential: Vec<f64>,
}

/// Outcome of a continuum erasure run.
#[derive(Debug)]
pub struct ContinuumRun {
    pub ledger: ThermoLedger,
    pub trace: CoarseTrace,
    pub bounds: BoundsReport,
    pub final_density: GridDensity,
    pub snapshots: Vec<DensitySnapshot>,
    /// Probe interval used for the coarse rates (reports should carry it:
    /// μ in the continuum depends on it by construction).
    pub dt_probe: f64,
    /// Worst per-step and cumulative mass defects.
    pub mass_defects: (f64, f64),
}

/// Default probe interval 0.1·Δx²/D.
pub fn default_probe_interval(grid: &Grid1D, diffusion: f64) -> f64 {
    0.1 * grid.dx() * grid.dx() / diffusion
}

/// Full erasure run: staircased drive, Heun relaxation, grid-quadrature
/// accounting, probe-based coarse trace at the x = 0 partition, and every
/// bound record. `n_save` coarse samples are kept (rounded to an even count).
pub fn run_continuum_reset(
    proto: &PotentialProtocol,
    grid: &Grid1D,
    dt: Option<f64>,
    n_save: usize,
    snapshot_times: &[f64],
) -> Result<ContinuumRun> {
    proto.validate()?;
    let tau = proto.tau();
    let dx = grid.dx();
    let beta = proto.beta;

    // stability budget over the whole drive: sample knots and midpoints
    let mut worst = 0.0f64;
    for w in proto.knots.windows(2) {
        for s in [w[0].t, 0.5 * (w[0].t + w[1].t), w[1].t] {
            let (a, f) = proto.params_at(s);
            let (fwd, bwd) = face_coefficients(proto, grid, a, f);
            worst = worst.max(max_outflow(&fwd, &bwd));
        }
    }
    let dt_stable = 0.4 / worst;
    let dt = dt.unwrap_or(dt_stable);
    if dt > 2.5 * dt_stable {
        return Err(CoreError::Numerics(format!(
            "dt = {dt:.3e} exceeds the stability limit; use dt ≤ {dt_stable:.3e}"
        )));
    }
    let n_steps = (tau / dt).ceil() as usize;
    let dt = tau / n_steps as f64;

    let init = continuum_thermal(proto, grid, 0.0);
    let (b0, b1) = init.block_masses();
    if (b1 - 0.5).abs() > 1e-3 {
        return Err(CoreError::Hypothesis(format!(
            "initial coarse thermal state must be near [1/2, 1/2]; got P1 = {b1}"
        )));
    }
    let _ = b0;

    let mut m: Vec<f64> = init.density.iter().map(|p| p * dx).collect();
    let m0 = m.clone();
    let v0 = {
        let (a, f) = proto.params_at(0.0);
        proto.potential_on(grid, a, f)
    };

    let dt_probe = default_probe_interval(grid, proto.diffusion);
    let n_save = n_save.max(2);
    let save_every = (n_steps / n_save).max(1);

    let mut w_total = 0.0f64;
    let mut sigma_rate_total = 0.0f64;
    let mut prev_sigma_rate: Option<f64> = None;
    let mut worst_step_defect = 0.0f64;

    let mut times = Vec::new();
    let mut p_bit = Vec::new();
    let mut gamma_bit = Vec::new();
    let mut g01s = Vec::new();
    let mut g10s = Vec::new();
    let mut mus = Vec::new();
    let mut p_sts = Vec::new();
    let mut snapshots = Vec::new();
    let mut snap_iter = snapshot_times.iter().cloned().peekable();

    let mut k1 = vec![0.0; grid.m];
    let mut k2 = vec![0.0; grid.m];
    let mut pred = vec![0.0; grid.m];

    let mut v_now = v0.clone();
    let save_sample = |t: f64,
                           m: &[f64],
                           a: f64,
                           f: f64,
                           times: &mut Vec<f64>,
                           p_bit: &mut Vec<BinaryDistribution>,
                           gamma_bit: &mut Vec<BinaryDistribution>,
                           g01s: &mut Vec<f64>,
                           g10s: &mut Vec<f64>,
                           mus: &mut Vec<f64>,
                           p_sts: &mut Vec<BinaryDistribution>|
     -> Result<()> {
        let dens = GridDensity { grid: *grid, density: m.iter().map(|x| x / dx).collect() };
        let (g01, g10, mu) = continuum_coarse_rates(&dens, proto, a, f, dt_probe)?;
        let (_, right) = dens.block_masses();
        let gam = continuum_thermal(proto, grid, t);
        let (_, gright) = gam.block_masses();
        times.push(t);
        p_bit.push(BinaryDistribution::new(right.clamp(0.0, 1.0))?);
        gamma_bit.push(BinaryDistribution::new(gright.clamp(0.0, 1.0))?);
        g01s.push(g01);
        g10s.push(g10);
        mus.push(mu);
        p_sts.push(if mu > 0.0 {
            BinaryDistribution::new((g10 / mu).clamp(0.0, 1.0))?
        } else {
            BinaryDistribution::new(gright.clamp(0.0, 1.0))?
        });
        Ok(())
    };

    {
        let (a, f) = proto.params_at(0.0);
        save_sample(
            0.0, &m, a, f, &mut times, &mut p_bit, &mut gamma_bit, &mut g01s, &mut g10s,
            &mut mus, &mut p_sts,
        )?;
    }

    for step in 0..n_steps {
        let t_new = (step + 1) as f64 * dt;
        let (a, f) = proto.params_at(t_new);
        // drive: potential staircases up with the density frozen
        let v_new = proto.potential_on(grid, a, f);
        for i in 0..grid.m {
            w_total += m[i] * (v_new[i] - v_now[i]);
        }
        v_now = v_new;

        // relax under the frozen potential
        let (fwd, bwd) = face_coefficients(proto, grid, a, f);
        if dt * max_outflow(&fwd, &bwd) > 1.0 {
            return Err(CoreError::Numerics(format!(
                "dt = {dt:.3e} unstable at t = {t_new:.3}; use dt ≤ {:.3e}",
                0.4 / max_outflow(&fwd, &bwd)
            )));
        }
        let s_now = sigma_rate_of(&m, &fwd, &bwd);
        if let Some(prev) = prev_sigma_rate {
            sigma_rate_total += 0.5 * (prev + s_now) * dt;
        }
        let mass_before: f64 = m.iter().sum();
        mass_rhs(&m, &fwd, &bwd, &mut k1);
        for i in 0..grid.m {
            pred[i] = m[i] + dt * k1[i];
        }
        mass_rhs(&pred, &fwd, &bwd, &mut k2);
        for i in 0..grid.m {
            m[i] += 0.5 * dt * (k1[i] + k2[i]);
            if m[i] < 0.0 {
                m[i] = 0.0;
            }
        }
        worst_step_defect = worst_step_defect.max((m.iter().sum::<f64>() - mass_before).abs());
        prev_sigma_rate = Some(sigma_rate_of(&m, &fwd, &bwd));

        if (step + 1) % save_every == 0 || step + 1 == n_steps {
            save_sample(
                t_new, &m, a, f, &mut times, &mut p_bit, &mut gamma_bit, &mut g01s,
                &mut g10s, &mut mus, &mut p_sts,
            )?;
        }
        while let Some(&ts) = snap_iter.peek() {
            if ts <= t_new {
                let gam = continuum_thermal(proto, grid, t_new);
                snapshots.push(DensitySnapshot {
                    t: t_new,
                    x: grid.centers(),
                    density: m.iter().map(|x| x / dx).collect(),
                    thermal: gam.density,
                    potential: v_now.clone(),
                });
                snap_iter.next();
            } else {
                break;
            }
        }
    }

    let cumulative_defect = (m.iter().sum::<f64>() * 1.0 - 1.0).abs();

    // ledger by grid quadrature, consistently against the discrete Z
    let u0: f64 = m0.iter().zip(&v0).map(|(a, b)| a * b).sum();
    let ut: f64 = m.iter().zip(&v_now).map(|(a, b)| a * b).sum();
    let q = (ut - u0) - w_total;
    let ds = grid_entropy(&m, dx) - grid_entropy(&m0, dx);
    let sigma = ds - beta * q;
    let g_t = continuum_thermal(proto, grid, tau);
    let g_0 = continuum_thermal(proto, grid, 0.0);
    let d_initial = grid_relent(&m0, &g_0.density, dx);
    let d_final = grid_relent(&m, &g_t.density, dx);
    let w_qs = (continuum_log_z(proto, grid, 0.0) - continuum_log_z(proto, grid, tau)) / beta;
    let led = ThermoLedger {
        beta,
        w: w_total,
        q,
        delta_u: ut - u0,
        ds,
        sigma,
        sigma_rate: sigma_rate_total,
        d_initial,
        d_final,
        w_qs,
        w_pn: w_total - w_qs,
    };

    let n_samples = times.len();
    let trace = CoarseTrace::from_parts(
        times,
        p_bit,
        gamma_bit,
        g01s,
        g10s,
        mus,
        p_sts,
        vec![Span { start: 0, end: n_samples - 1 }],
        tau,
    );
    let bounds = evaluate_all(&led, &trace, None)?;

    Ok(ContinuumRun {
        ledger: led,
        trace,
        bounds,
        final_density: GridDensity::new(*grid, m.iter().map(|x| x / dx).collect())?,
        snapshots,
        dt_probe,
        mass_defects: (worst_step_defect, cumulative_defect),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn static_proto(a: f64, f: f64) -> PotentialProtocol {
        PotentialProtocol {
            quartic: 1.0,
            knots: vec![
                PotentialKnot { t: 0.0, barrier: a, tilt: f },
                PotentialKnot { t: 1.0, barrier: a, tilt: f },
            ],
            diffusion: 1.0,
            beta: 1.0,
        }
    }

    #[test]
    fn gibbs_is_a_fixed_point() {
        let grid = Grid1D::symmetric(4.25, 128).unwrap();
        let proto = static_proto(4.0, 2.0);
        let g = continuum_thermal(&proto, &grid, 0.0);
        let mut d = g.clone();
        let (fwd, bwd) = face_coefficients(&proto, &grid, 4.0, 2.0);
        let dt = 0.4 / max_outflow(&fwd, &bwd);
        for _ in 0..500 {
            d = fp_step(&d, &proto, 4.0, 2.0, dt).unwrap();
        }
        let dev = d
            .density
            .iter()
            .zip(&g.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(dev < 1e-10, "Gibbs drifted by {dev}");
    }

    #[test]
    fn free_diffusion_variance_grows() {
        // V ≈ 0 box: variance grows ≈ 2 D t before boundaries matter
        let grid = Grid1D::symmetric(8.0, 256).unwrap();
        let mut proto = static_proto(0.0, 0.0);
        proto.quartic = 1e-12;
        // narrow Gaussian start
        let s0 = 0.2;
        let w: Vec<f64> = grid
            .centers()
            .iter()
            .map(|x| (-x * x / (2.0 * s0 * s0)).exp())
            .collect();
        let z: f64 = w.iter().sum::<f64>() * grid.dx();
        let mut d = GridDensity::new(grid, w.iter().map(|x| x / z).collect()).unwrap();
        let (fwd, bwd) = face_coefficients(&proto, &grid, 0.0, 0.0);
        let dt = 0.4 / max_outflow(&fwd, &bwd);
        let t_total = 0.5;
        let n = (t_total / dt).ceil() as usize;
        for _ in 0..n {
            d = fp_step(&d, &proto, 0.0, 0.0, t_total / n as f64).unwrap();
        }
        let var: f64 = grid
            .centers()
            .iter()
            .zip(&d.density)
            .map(|(x, p)| x * x * p * grid.dx())
            .sum();
        assert!((var - (s0 * s0 + 2.0 * t_total)).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn localized_bump_relaxes_monotonically() {
        let grid = Grid1D::symmetric(3.5, 128).unwrap();
        let proto = static_proto(1.0, 0.0);
        let g = continuum_thermal(&proto, &grid, 0.0);
        // near-delta start in one well
        let mut w = vec![0.0; grid.m];
        let i0 = grid.m / 4;
        w[i0] = 1.0 / grid.dx();
        let mut d = GridDensity::new(grid, w).unwrap();
        let (fwd, bwd) = face_coefficients(&proto, &grid, 1.0, 0.0);
        let dt = 0.4 / max_outflow(&fwd, &bwd);
        let dx = grid.dx();
        let mut prev = f64::INFINITY;
        for _ in 0..40 {
            for _ in 0..250 {
                d = fp_step(&d, &proto, 1.0, 0.0, dt).unwrap();
            }
            let masses: Vec<f64> = d.density.iter().map(|p| p * dx).collect();
            let rel = grid_relent(&masses, &g.density, dx);
            assert!(rel <= prev + 1e-10, "D[p‖γ] rose: {prev} -> {rel}");
            prev = rel;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn thermal_shapes() {
        let grid = Grid1D::symmetric(4.25, 256).unwrap();
        let proto = static_proto(4.0, 0.0);
        let g = continuum_thermal(&proto, &grid, 0.0);
        let (l, r) = g.block_masses();
        assert_abs_diff_eq!(l, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-12);
        // strong positive tilt concentrates mass at x < 0
        let tilted = static_proto(4.0, 3.0);
        let g = continuum_thermal(&tilted, &grid, 0.0);
        let (l, _) = g.block_masses();
        assert!(l > 0.99);
        // single well: unimodal
        let single = static_proto(-1.0, 0.0);
        let g = continuum_thermal(&single, &grid, 0.0);
        let peak = g
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((grid.center(peak)).abs() < 0.1);
    }

    #[test]
    fn probe_rates_balance_at_equilibrium() {
        let grid = Grid1D::symmetric(4.25, 256).unwrap();
        let proto = static_proto(4.0, 0.0);
        let g = continuum_thermal(&proto, &grid, 0.0);
        let (g01, g10, mu) =
            continuum_coarse_rates(&g, &proto, 4.0, 0.0, default_probe_interval(&grid, 1.0))
                .unwrap();
        // symmetric well at equilibrium: equal one-way flows
        let f01 = g01 * 0.5;
        let f10 = g10 * 0.5;
        assert!((f01 - f10).abs() < 1e-12 * f01.max(f10));
        assert!(mu > 0.0);
        // an over-long probe is rejected
        assert!(continuum_coarse_rates(&g, &proto, 4.0, 0.0, 50.0).is_err());
    }

    #[test]
    fn fp_step_rejects_unstable_dt() {
        let grid = Grid1D::symmetric(4.25, 128).unwrap();
        let proto = static_proto(4.0, 0.0);
        let g = continuum_thermal(&proto, &grid, 0.0);
        assert!(matches!(
            fp_step(&g, &proto, 4.0, 0.0, 1.0),
            Err(CoreError::Numerics(_))
        ));
    }

    #[test]
    fn reset_run_small_grid() {
        let grid = Grid1D::symmetric(4.25, 128).unwrap();
        let proto = double_well_reset_protocol(4.0, 0.0, 2.0, 4.0, 1.0, 1.0).unwrap();
        let run = run_continuum_reset(&proto, &grid, None, 200, &[2.0]).unwrap();
        assert!(run.mass_defects.0 < 1e-12, "per-step defect {}", run.mass_defects.0);
        assert!(run.mass_defects.1 < 1e-9, "cumulative defect {}", run.mass_defects.1);
        assert!(run.trace.reset_error() < 0.25);
        assert!(run.bounds.all_satisfied(), "{:#?}", run.bounds);
        // Eq. 6 analog via the rate route within the continuum tolerance
        let led = &run.ledger;
        let resid =
            (led.w_pn - ((led.d_final - led.d_initial) / led.beta + led.sigma_rate / led.beta))
                .abs();
        assert!(resid < 1e-4, "continuum penalty residual {resid}");
        assert_eq!(run.snapshots.len(), 1);
        // idle protocol: no penalty, bounds trivial
        let idle = PotentialProtocol {
            quartic: 1.0,
            knots: vec![
                PotentialKnot { t: 0.0, barrier: 4.0, tilt: 0.0 },
                PotentialKnot { t: 2.0, barrier: 4.0, tilt: 0.0 },
            ],
            diffusion: 1.0,
            beta: 1.0,
        };
        let run = run_continuum_reset(&idle, &grid, None, 100, &[]).unwrap();
        assert!(run.ledger.w_pn.abs() < 1e-12);
        assert!(run.bounds.all_satisfied());
    }
}
