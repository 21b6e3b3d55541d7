//! Probability-vector primitives: entropies, divergences, distances, and the
//! elementary inequalities the bound checks rest on.
//!
//! All entropic quantities are in nats with k_B = 1 and the convention
//! 0·ln 0 = 0. A divergence evaluated on mismatched support (p_i > 0 where
//! q_i = 0) returns `f64::INFINITY` rather than an error, because the
//! fixed-error ε → 0 analysis deliberately probes that limit.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Normalization slack treated as exact.
pub const SUM_TOL_STRICT: f64 = 1e-12;
/// Normalization slack up to which a vector is silently renormalized (with a
/// warning); beyond it construction fails. Separates integrator drift from
/// logic bugs.
pub const SUM_TOL_RENORM: f64 = 1e-8;

/// A probability vector on discrete states (or grid cells).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Validates non-negativity and normalization. Deviations of the sum in
    /// `(1e-12, 1e-8]` are renormalized with a warning; larger ones are errors.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CoreError::Empty);
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(CoreError::NonFinite { index: i, value: w });
            }
            if w < 0.0 {
                return Err(CoreError::NegativeWeight { index: i, value: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        let deviation = (sum - 1.0).abs();
        if deviation <= SUM_TOL_STRICT {
            Ok(Self { weights })
        } else if deviation <= SUM_TOL_RENORM {
            log::warn!("renormalizing probability vector (|sum-1| = {deviation:.3e})");
            let weights = weights.iter().map(|w| w / sum).collect();
            Ok(Self { weights })
        } else {
            Err(CoreError::NotNormalized { deviation })
        }
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::Empty);
        }
        Ok(Self { weights: vec![1.0 / n as f64; n] })
    }

    /// All mass on state `i`.
    pub fn delta(n: usize, i: usize) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::Empty);
        }
        if i >= n {
            return Err(CoreError::InvalidArgument(format!("delta index {i} out of range {n}")));
        }
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A two-state distribution `[1 − p1, p1]`, stored by its weight on logical 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryDistribution {
    p1: f64,
}

impl BinaryDistribution {
    pub fn new(p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) || !p1.is_finite() {
            return Err(CoreError::InvalidArgument(format!("p1 = {p1} outside [0, 1]")));
        }
        Ok(Self { p1 })
    }

    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    /// Strictly inside the simplex (no zero weight).
    pub fn is_interior(&self) -> bool {
        self.p1 > 0.0 && self.p1 < 1.0
    }

    pub fn as_distribution(&self) -> Distribution {
        Distribution { weights: vec![self.p0(), self.p1] }
    }
}

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Shannon entropy −Σ p_i ln p_i in units of k_B (= 1).
pub fn shannon_entropy(p: &Distribution) -> f64 {
    -p.weights().iter().map(|&w| xlnx(w)).sum::<f64>()
}

/// Relative entropy D[p‖q] = Σ p_i ln(p_i/q_i), +∞ on support mismatch.
pub fn relative_entropy(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(CoreError::LengthMismatch { expected: p.len(), got: q.len() });
    }
    let mut sum = 0.0;
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            sum += pi * (pi / qi).ln();
        }
    }
    Ok(sum)
}

/// D for binary distributions, sharing the +∞ support-marker convention.
pub fn binary_relative_entropy(r: &BinaryDistribution, s: &BinaryDistribution) -> f64 {
    let mut sum = 0.0;
    for (p, q) in [(r.p0(), s.p0()), (r.p1(), s.p1())] {
        if p > 0.0 {
            if q <= 0.0 {
                return f64::INFINITY;
            }
            sum += p * (p / q).ln();
        }
    }
    sum
}

/// Symmetric relative entropy J[r, s] = D[r‖s] + D[s‖r].
///
/// A boundary distribution yields the +∞ divergence marker unless both
/// arguments sit on the same vertex.
pub fn symmetric_relative_entropy(r: &BinaryDistribution, s: &BinaryDistribution) -> f64 {
    binary_relative_entropy(r, s) + binary_relative_entropy(s, r)
}

/// 1-norm distance Σ_a |p_a − q_a|.
pub fn norm1_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(CoreError::LengthMismatch { expected: p.len(), got: q.len() });
    }
    Ok(p.weights().iter().zip(q.weights()).map(|(a, b)| (a - b).abs()).sum())
}

/// Binary entropy −ε ln ε − (1−ε) ln(1−ε); endpoints give 0.
pub fn binary_entropy(eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) || !eps.is_finite() {
        return Err(CoreError::InvalidArgument(format!("eps = {eps} outside [0, 1]")));
    }
    Ok(-xlnx(eps) - xlnx(1.0 - eps))
}

/// Both sides of the log-sum inequality:
/// `(Σ u_i ln(u_i/v_i), (Σu) ln(Σu/Σv))`, contract lhs ≥ rhs, with equality
/// when u_i/v_i is constant.
pub fn log_sum_lower_bound(u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    if u.is_empty() {
        return Err(CoreError::Empty);
    }
    if u.len() != v.len() {
        return Err(CoreError::LengthMismatch { expected: u.len(), got: v.len() });
    }
    let mut lhs = 0.0;
    let mut su = 0.0;
    let mut sv = 0.0;
    for (i, (&ui, &vi)) in u.iter().zip(v).enumerate() {
        if ui < 0.0 {
            return Err(CoreError::NegativeWeight { index: i, value: ui });
        }
        if vi <= 0.0 {
            return Err(CoreError::InvalidArgument(format!("v[{i}] = {vi} must be positive")));
        }
        if ui > 0.0 {
            lhs += ui * (ui / vi).ln();
        }
        su += ui;
        sv += vi;
    }
    let rhs = if su > 0.0 { su * (su / sv).ln() } else { 0.0 };
    Ok((lhs, rhs))
}

/// Witness for D[r‖s] ≥ D[s‖r] when s1 ≤ r1 ≤ 1/2 (both interior).
/// Returns `(D[r‖s], D[s‖r])`.
pub fn binary_relent_asymmetry(
    r: &BinaryDistribution,
    s: &BinaryDistribution,
) -> Result<(f64, f64)> {
    if !r.is_interior() || !s.is_interior() {
        return Err(CoreError::InvalidArgument("arguments must be interior".into()));
    }
    if !(s.p1() <= r.p1() && r.p1() <= 0.5) {
        return Err(CoreError::InvalidArgument(format!(
            "requires s1 ≤ r1 ≤ 1/2, got s1 = {}, r1 = {}",
            s.p1(),
            r.p1()
        )));
    }
    Ok((binary_relative_entropy(r, s), binary_relative_entropy(s, r)))
}

/// Both sides of the mixture lower bound on binary relative entropy:
///
/// lhs = D[p‖q],
/// rhs = α D[x‖q] + (1−α) D[y‖q] + (α² − α)(D[x‖y] + D[y‖x]),
///
/// valid when p0 ≥ p1, q1 ≤ α x1 + (1−α) y1 ≤ p1, α ∈ [0, 1], all interior.
/// (The mixture must not undershoot q1: dropping that condition admits
/// counterexamples, e.g. p1 = 0.31, q1 = 0.30, x1 = y1 = 0.01.)
pub fn relent_convexity_bound(
    p: &BinaryDistribution,
    q: &BinaryDistribution,
    x: &BinaryDistribution,
    y: &BinaryDistribution,
    alpha: f64,
) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CoreError::InvalidArgument(format!("alpha = {alpha} outside [0, 1]")));
    }
    for (name, d) in [("p", p), ("q", q), ("x", x), ("y", y)] {
        if !d.is_interior() {
            return Err(CoreError::InvalidArgument(format!("{name} must be interior")));
        }
    }
    if p.p0() < p.p1() {
        return Err(CoreError::InvalidArgument("requires p0 ≥ p1".into()));
    }
    let mix1 = alpha * x.p1() + (1.0 - alpha) * y.p1();
    if p.p1() < mix1 {
        return Err(CoreError::InvalidArgument(format!(
            "requires p1 ≥ α x1 + (1−α) y1, got p1 = {} < {}",
            p.p1(),
            mix1
        )));
    }
    if q.p1() > p.p1() {
        return Err(CoreError::InvalidArgument("requires q1 ≤ p1".into()));
    }
    if q.p1() > mix1 {
        return Err(CoreError::InvalidArgument(format!(
            "requires q1 ≤ α x1 + (1−α) y1, got q1 = {} > {}",
            q.p1(),
            mix1
        )));
    }
    let lhs = binary_relative_entropy(p, q);
    let rhs = alpha * binary_relative_entropy(x, q)
        + (1.0 - alpha) * binary_relative_entropy(y, q)
        + (alpha * alpha - alpha)
            * (binary_relative_entropy(x, y) + binary_relative_entropy(y, x));
    Ok((lhs, rhs))
}
