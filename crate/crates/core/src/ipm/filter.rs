//! Filter bookkeeping, fraction-to-boundary rule and barrier merit terms.

use serde::{Deserialize, Serialize};

use crate::kkt::{BoundPair, KktVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchOptions {
    /// Armijo constant.
    pub eta_phi: f64,
    pub gamma_theta: f64,
    pub gamma_phi: f64,
    pub s_theta: f64,
    pub s_phi: f64,
    pub delta: f64,
    /// `θ_min = theta_min_fact · max(1, θ₀)`
    pub theta_min_fact: f64,
    /// `θ_max = theta_max_fact · max(1, θ₀)`
    pub theta_max_fact: f64,
    pub alpha_min: f64,
    /// Dual safeguard band `κ_Σ`.
    pub kappa_sigma: f64,
}

impl Default for LineSearchOptions {
    fn default() -> Self {
        LineSearchOptions {
            eta_phi: 1e-8,
            gamma_theta: 1e-5,
            gamma_phi: 1e-5,
            s_theta: 1.1,
            s_phi: 2.3,
            delta: 1.0,
            theta_min_fact: 1e-4,
            theta_max_fact: 1e4,
            alpha_min: 1e-12,
            kappa_sigma: 1e10,
        }
    }
}

/// `a <= b` up to a few ulps of the larger operand.
pub fn relaxed_le(a: f64, b: f64) -> bool {
    a - b <= 10.0 * f64::EPSILON * a.abs().max(b.abs())
}

/// Set of forbidden `(θ, φ)` corners, already shifted by the margins.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Filter {
    entries: Vec<(f64, f64)>,
}

impl Filter {
    pub fn new() -> Self {
        Filter::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    /// A point is acceptable unless some entry is at least as good in both measures.
    pub fn acceptable(&self, theta: f64, phi: f64) -> bool {
        self.entries.iter().all(|&(t, p)| theta < t || phi < p)
    }

    /// Adds a corner and drops entries it dominates.
    pub fn add(&mut self, theta: f64, phi: f64) {
        self.entries.retain(|&(t, p)| t < theta || p < phi);
        self.entries.push((theta, phi));
    }

    pub fn reset(&mut self) {
        self.entries.clear();
    }
}

/// Largest `α ∈ (0, 1]` with `v + α Δv ≥ (1 − τ)·gap` on every finite bound.
pub fn max_primal_step(x: &[f64], dx: &[f64], b: &BoundPair, tau: f64) -> f64 {
    let mut alpha = 1.0f64;
    for j in 0..x.len() {
        if b.has_lower[j] && dx[j] < 0.0 {
            alpha = alpha.min(-tau * (x[j] - b.lower[j]) / dx[j]);
        }
        if b.has_upper[j] && dx[j] > 0.0 {
            alpha = alpha.min(tau * (b.upper[j] - x[j]) / dx[j]);
        }
    }
    alpha
}

/// Largest `α ∈ (0, 1]` with `z + α Δz ≥ (1 − τ) z` on every entry.
pub fn max_dual_step(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let mut alpha = 1.0f64;
    for j in 0..z.len() {
        if dz[j] < 0.0 {
            alpha = alpha.min(-tau * z[j] / dz[j]);
        }
    }
    alpha
}

/// `−μ Σ ln(gap)` over the finite bounds of `v`.
pub fn log_barrier(v: &[f64], b: &BoundPair, mu: f64) -> f64 {
    let mut sum = 0.0;
    for j in 0..v.len() {
        if b.has_lower[j] {
            sum += (v[j] - b.lower[j]).ln();
        }
        if b.has_upper[j] {
            sum += (b.upper[j] - v[j]).ln();
        }
    }
    -mu * sum
}

/// Directional derivative of `φ = f − μ Σ ln(gaps)` along `(Δx, Δs)`.
pub fn barrier_directional_derivative(
    it: &KktVector,
    step: &KktVector,
    grad: &[f64],
    xb: &BoundPair,
    sb: &BoundPair,
    mu: f64,
) -> f64 {
    let mut d = 0.0;
    for j in 0..it.x.len() {
        let mut gj = grad[j];
        if xb.has_lower[j] {
            gj -= mu / (it.x[j] - xb.lower[j]);
        }
        if xb.has_upper[j] {
            gj += mu / (xb.upper[j] - it.x[j]);
        }
        d += gj * step.x[j];
    }
    for i in 0..it.s.len() {
        let mut gi = 0.0;
        if sb.has_lower[i] {
            gi -= mu / (it.s[i] - sb.lower[i]);
        }
        if sb.has_upper[i] {
            gi += mu / (sb.upper[i] - it.s[i]);
        }
        d += gi * step.s[i];
    }
    d
}

/// `‖g − s‖₁`
pub fn constraint_violation(g: &[f64], s: &[f64]) -> f64 {
    g.iter().zip(s).map(|(a, b)| (a - b).abs()).sum()
}
