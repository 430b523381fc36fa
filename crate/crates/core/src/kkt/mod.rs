//! Newton systems of the slack-relaxed barrier problem.
//!
//! The unreduced system has seven blocks `(x, s, y, zₗˣ, zᵤˣ, zₗˢ, zᵤˢ)`.
//! Bound duals are eliminated first, which leaves the 3×3 augmented system
//!
//! ```text
//! [ W + Σx + δw        .       Aᵀ  ] [Δx]   [qx]
//! [     .         Σs + δw     -I   ] [Δs] = [qs]
//! [     A            -I      -δc   ] [Δy]   [qy]
//! ```
//!
//! The [`condensed`] backend eliminates `(s, y)` as well and factorizes the
//! `n × n` matrix `W + δw I + Σx + Aᵀ D A` with Cholesky; a failed pivot is
//! read as wrong inertia. The [`augmented`] backend keeps the 3×3 form and
//! uses LDLᵀ with an explicit inertia count; it serves as the reference.
//!
//! Sign conventions follow the Lagrangian
//! `f + yᵀ(g − s) − zₗˣᵀ(x − xₗ) − zᵤˣᵀ(xᵤ − x) − zₗˢᵀ(s − sₗ) − zᵤˢᵀ(sᵤ − s)`,
//! so `W` is the Hessian of `f + yᵀg` and the right-hand side `p` is the
//! negated optimality residual.

pub mod augmented;
pub mod condensed;

use std::time::Instant;

use log::{debug, trace};

use crate::sparse::{estimate_condition, NotPositiveDefinite};

pub use augmented::AugmentedSolver;
pub use condensed::{symbolic_condense, CondensedPattern, CondensedSolver};

/// Smallest δw tried when a previous iterate needed regularization.
pub const DELTA_W_MIN: f64 = 1e-20;
pub const DELTA_W_INIT: f64 = 1e-4;
/// Above this the system is declared hopeless.
pub const DELTA_W_MAX: f64 = 1e40;
const GROWTH_FIRST: f64 = 100.0;
const GROWTH: f64 = 8.0;
const SHRINK: f64 = 1.0 / 3.0;
const DELTA_C_BASE: f64 = 1e-8;

const IR_KAPPA: f64 = 10.0;
const IR_MAX_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KktError {
    #[error("inertia correction gave up at delta_w = {delta_w:e}")]
    RegularizationExhausted { delta_w: f64 },
    #[error("iterate is not interior: {block}[{index}] has gap {gap:e}")]
    DegenerateInterior { block: &'static str, index: usize, gap: f64 },
}

/// A vector with the seven blocks of the unreduced system. Used for
/// iterates, right-hand sides, residuals and steps alike.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct KktVector {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub zl_x: Vec<f64>,
    pub zu_x: Vec<f64>,
    pub zl_s: Vec<f64>,
    pub zu_s: Vec<f64>,
}

impl KktVector {
    pub fn zeros(n: usize, m: usize) -> Self {
        KktVector {
            x: vec![0.0; n],
            s: vec![0.0; m],
            y: vec![0.0; m],
            zl_x: vec![0.0; n],
            zu_x: vec![0.0; n],
            zl_s: vec![0.0; m],
            zu_s: vec![0.0; m],
        }
    }

    pub fn blocks(&self) -> [&Vec<f64>; 7] {
        [&self.x, &self.s, &self.y, &self.zl_x, &self.zu_x, &self.zl_s, &self.zu_s]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [&mut self.x, &mut self.s, &mut self.y, &mut self.zl_x, &mut self.zu_x, &mut self.zl_s, &mut self.zu_s]
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &KktVector) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (u, v) in a.iter_mut().zip(b) {
                *u += alpha * v;
            }
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.blocks().iter().flat_map(|b| b.iter()).fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Lower and upper bounds with an activity mask (finite bounds only).
#[derive(Clone, Debug, PartialEq)]
pub struct BoundPair {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub has_lower: Vec<bool>,
    pub has_upper: Vec<bool>,
}

impl BoundPair {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        let has_lower = lower.iter().map(|v| v.is_finite()).collect();
        let has_upper = upper.iter().map(|v| v.is_finite()).collect();
        BoundPair { lower, upper, has_lower, has_upper }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Number of finite bounds on either side.
    pub fn count(&self) -> usize {
        self.has_lower.iter().filter(|&&b| b).count() + self.has_upper.iter().filter(|&&b| b).count()
    }
}

/// Problem data shared by both backends: sparsity, current numeric values of
/// `W` and `A`, bounds, and the diagonal terms of the current iterate.
#[derive(Clone, Debug)]
pub struct KktData {
    pub n: usize,
    pub m: usize,
    pub hess_rows: Vec<usize>,
    pub hess_cols: Vec<usize>,
    pub jac_rows: Vec<usize>,
    pub jac_cols: Vec<usize>,
    /// Lower-triangle Hessian values of the Lagrangian, aligned with `hess_rows`.
    pub w: Vec<f64>,
    /// Jacobian values aligned with `jac_rows`.
    pub a: Vec<f64>,
    pub x_bounds: BoundPair,
    pub s_bounds: BoundPair,
    pub delta_w: f64,
    pub delta_c: f64,
    // iterate-dependent, set by `set_iterate`
    z: KktVector,
    gap_lx: Vec<f64>,
    gap_ux: Vec<f64>,
    gap_ls: Vec<f64>,
    gap_us: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_s: Vec<f64>,
    /// `(δc Σs + (1 + δc δw) I)⁻¹`
    pub c: Vec<f64>,
    /// `(Σs + δw I) C`
    pub d: Vec<f64>,
}

impl KktData {
    pub fn new(
        hess: (&[usize], &[usize]),
        jac: (&[usize], &[usize]),
        x_bounds: BoundPair,
        s_bounds: BoundPair,
    ) -> Self {
        let (n, m) = (x_bounds.len(), s_bounds.len());
        assert_eq!(hess.0.len(), hess.1.len());
        assert_eq!(jac.0.len(), jac.1.len());
        assert!(hess.0.iter().zip(hess.1).all(|(&r, &c)| r < n && c <= r), "hessian entries must be lower triangle");
        assert!(jac.0.iter().zip(jac.1).all(|(&r, &c)| r < m && c < n), "jacobian entry out of range");
        KktData {
            n,
            m,
            hess_rows: hess.0.to_vec(),
            hess_cols: hess.1.to_vec(),
            jac_rows: jac.0.to_vec(),
            jac_cols: jac.1.to_vec(),
            w: vec![0.0; hess.0.len()],
            a: vec![0.0; jac.0.len()],
            x_bounds,
            s_bounds,
            delta_w: 0.0,
            delta_c: 0.0,
            z: KktVector::zeros(n, m),
            gap_lx: vec![0.0; n],
            gap_ux: vec![0.0; n],
            gap_ls: vec![0.0; m],
            gap_us: vec![0.0; m],
            sigma_x: vec![0.0; n],
            sigma_s: vec![0.0; m],
            c: vec![1.0; m],
            d: vec![0.0; m],
        }
    }

    /// Records the bound gaps and duals of `it` and forms `Σx`, `Σs`.
    /// Coordinates without a finite bound get a zero gap and contribute nothing.
    pub fn set_iterate(&mut self, it: &KktVector) {
        fn side(v: &[f64], b: &BoundPair, zl: &[f64], zu: &[f64], gl: &mut [f64], gu: &mut [f64], sigma: &mut [f64]) {
            for j in 0..v.len() {
                let mut s = 0.0;
                gl[j] = 0.0;
                gu[j] = 0.0;
                if b.has_lower[j] {
                    gl[j] = v[j] - b.lower[j];
                    s += zl[j] / gl[j];
                }
                if b.has_upper[j] {
                    gu[j] = b.upper[j] - v[j];
                    s += zu[j] / gu[j];
                }
                sigma[j] = s;
            }
        }
        side(&it.x, &self.x_bounds, &it.zl_x, &it.zu_x, &mut self.gap_lx, &mut self.gap_ux, &mut self.sigma_x);
        side(&it.s, &self.s_bounds, &it.zl_s, &it.zu_s, &mut self.gap_ls, &mut self.gap_us, &mut self.sigma_s);
        self.z.zl_x.clone_from(&it.zl_x);
        self.z.zu_x.clone_from(&it.zu_x);
        self.z.zl_s.clone_from(&it.zl_s);
        self.z.zu_s.clone_from(&it.zu_s);
    }

    /// Sets the regularization and refreshes `C` and `D`.
    pub fn set_regularization(&mut self, delta_w: f64, delta_c: f64) {
        self.delta_w = delta_w;
        self.delta_c = delta_c;
        for i in 0..self.m {
            let c = 1.0 / (delta_c * self.sigma_s[i] + 1.0 + delta_c * delta_w);
            self.c[i] = c;
            self.d[i] = (self.sigma_s[i] + delta_w) * c;
        }
    }

    /// `y = A x`
    pub fn jac_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for k in 0..self.a.len() {
            y[self.jac_rows[k]] += self.a[k] * x[self.jac_cols[k]];
        }
        y
    }

    /// `x = Aᵀ y`
    pub fn jac_t_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for k in 0..self.a.len() {
            x[self.jac_cols[k]] += self.a[k] * y[self.jac_rows[k]];
        }
        x
    }

    /// `W v` from the lower triangle.
    pub fn hess_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for k in 0..self.w.len() {
            let (i, j) = (self.hess_rows[k], self.hess_cols[k]);
            out[i] += self.w[k] * v[j];
            if i != j {
                out[j] += self.w[k] * v[i];
            }
        }
        out
    }

    /// Eliminates the bound-dual blocks: returns `(qx, qs, qy)`.
    pub fn reduce_rhs(&self, p: &KktVector) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut qx = p.x.clone();
        for j in 0..self.n {
            if self.x_bounds.has_lower[j] {
                qx[j] += p.zl_x[j] / self.gap_lx[j];
            }
            if self.x_bounds.has_upper[j] {
                qx[j] -= p.zu_x[j] / self.gap_ux[j];
            }
        }
        let mut qs = p.s.clone();
        for i in 0..self.m {
            if self.s_bounds.has_lower[i] {
                qs[i] += p.zl_s[i] / self.gap_ls[i];
            }
            if self.s_bounds.has_upper[i] {
                qs[i] -= p.zu_s[i] / self.gap_us[i];
            }
        }
        (qx, qs, p.y.clone())
    }

    /// Bound-dual steps from the primal steps. Coordinates without a finite
    /// bound get a zero step.
    pub fn recover_bound_duals(&self, dx: &[f64], ds: &[f64], p: &KktVector) -> Result<[Vec<f64>; 4], KktError> {
        fn side(
            block: &'static str,
            dv: &[f64],
            has: &[bool],
            gap: &[f64],
            z: &[f64],
            pz: &[f64],
            sign: f64,
        ) -> Result<Vec<f64>, KktError> {
            let mut out = vec![0.0; dv.len()];
            for j in 0..dv.len() {
                if has[j] {
                    if !(gap[j] > 0.0) {
                        return Err(KktError::DegenerateInterior { block, index: j, gap: gap[j] });
                    }
                    out[j] = (sign * z[j] * dv[j] + pz[j]) / gap[j];
                }
            }
            Ok(out)
        }
        let (xb, sb) = (&self.x_bounds, &self.s_bounds);
        Ok([
            side("x_lower", dx, &xb.has_lower, &self.gap_lx, &self.z.zl_x, &p.zl_x, -1.0)?,
            side("x_upper", dx, &xb.has_upper, &self.gap_ux, &self.z.zu_x, &p.zu_x, 1.0)?,
            side("s_lower", ds, &sb.has_lower, &self.gap_ls, &self.z.zl_s, &p.zl_s, -1.0)?,
            side("s_upper", ds, &sb.has_upper, &self.gap_us, &self.z.zu_s, &p.zu_s, 1.0)?,
        ])
    }

    /// `M_full · v` for the unreduced system at the current regularization.
    pub fn full_matvec(&self, v: &KktVector) -> KktVector {
        let (n, m) = (self.n, self.m);
        let mut out = KktVector::zeros(n, m);
        let wx = self.hess_mul(&v.x);
        let aty = self.jac_t_mul(&v.y);
        let ax = self.jac_mul(&v.x);
        for j in 0..n {
            out.x[j] = wx[j] + self.delta_w * v.x[j] + aty[j] - v.zl_x[j] + v.zu_x[j];
            if self.x_bounds.has_lower[j] {
                out.zl_x[j] = self.z.zl_x[j] * v.x[j] + self.gap_lx[j] * v.zl_x[j];
            }
            if self.x_bounds.has_upper[j] {
                out.zu_x[j] = -self.z.zu_x[j] * v.x[j] + self.gap_ux[j] * v.zu_x[j];
            }
        }
        for i in 0..m {
            out.s[i] = self.delta_w * v.s[i] - v.y[i] - v.zl_s[i] + v.zu_s[i];
            out.y[i] = ax[i] - v.s[i] - self.delta_c * v.y[i];
            if self.s_bounds.has_lower[i] {
                out.zl_s[i] = self.z.zl_s[i] * v.s[i] + self.gap_ls[i] * v.zl_s[i];
            }
            if self.s_bounds.has_upper[i] {
                out.zu_s[i] = -self.z.zu_s[i] * v.s[i] + self.gap_us[i] * v.zu_s[i];
            }
        }
        out
    }

    /// Largest entry magnitude of `M_full`, used to scale the refinement test.
    pub fn full_matrix_scale(&self) -> f64 {
        let mut scale = 1.0f64.max(self.delta_w).max(self.delta_c);
        for v in self.w.iter().chain(&self.a) {
            scale = scale.max(v.abs());
        }
        for b in [&self.gap_lx, &self.gap_ux, &self.gap_ls, &self.gap_us] {
            scale = b.iter().fold(scale, |acc, v| acc.max(v.abs()));
        }
        for b in [&self.z.zl_x, &self.z.zu_x, &self.z.zl_s, &self.z.zu_s] {
            scale = b.iter().fold(scale, |acc, v| acc.max(v.abs()));
        }
        scale
    }
}

/// Which reduced system is factorized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KktBackend {
    /// Cholesky on the `n × n` condensed matrix.
    #[default]
    Condensed,
    /// LDLᵀ with inertia count on the `(n + 2m)`-dimensional augmented matrix.
    Augmented,
}

/// A factorization strategy for the reduced system.
pub trait ReducedSolver {
    /// Assembles and factorizes at the regularization stored in `data`.
    /// Returns `false` when the inertia is wrong.
    fn factorize(&mut self, data: &KktData) -> bool;
    /// Solves the 3×3 reduced system with the current factor.
    fn solve(&self, data: &KktData, qx: &[f64], qs: &[f64], qy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>);
    /// 1-norm condition estimate of the factorized matrix.
    fn condition_estimate(&self) -> f64;
    fn dimension(&self) -> usize;
}

/// Memory of the inertia correction across iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RegularizationState {
    /// Last nonzero δw that produced a correct inertia; 0 when none yet.
    pub last_delta_w: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FactorInfo {
    pub delta_w: f64,
    pub delta_c: f64,
    pub attempts: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RefinementInfo {
    pub rounds: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Final residual relative to `‖p‖∞ + ‖M‖ₘₐₓ ‖Δ‖∞`.
    pub relative_residual: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub factor: FactorInfo,
    pub refinement: RefinementInfo,
    pub linear_seconds: f64,
}

enum Backend {
    Condensed(CondensedSolver),
    Augmented(AugmentedSolver),
}

impl Backend {
    fn solver(&self) -> &dyn ReducedSolver {
        match self {
            Backend::Condensed(s) => s,
            Backend::Augmented(s) => s,
        }
    }

    fn solver_mut(&mut self) -> &mut dyn ReducedSolver {
        match self {
            Backend::Condensed(s) => s,
            Backend::Augmented(s) => s,
        }
    }
}

/// Everything needed to compute Newton steps for one solve.
pub struct KktWorkspace {
    pub data: KktData,
    backend: Backend,
    kind: KktBackend,
}

impl KktWorkspace {
    pub fn new(data: KktData, kind: KktBackend) -> Self {
        let backend = match kind {
            KktBackend::Condensed => Backend::Condensed(CondensedSolver::new(&data)),
            KktBackend::Augmented => Backend::Augmented(AugmentedSolver::new(&data)),
        };
        KktWorkspace { data, backend, kind }
    }

    pub fn backend(&self) -> KktBackend {
        self.kind
    }

    /// Dimension of the factorized matrix.
    pub fn factor_dimension(&self) -> usize {
        self.backend.solver().dimension()
    }

    /// Factorizes at fixed `(δw, δc)` without any correction.
    pub fn factorize_at(&mut self, delta_w: f64, delta_c: f64) -> Result<(), NotPositiveDefinite> {
        self.data.set_regularization(delta_w, delta_c);
        if self.backend.solver_mut().factorize(&self.data) {
            Ok(())
        } else {
            Err(NotPositiveDefinite { column: usize::MAX })
        }
    }

    /// Inertia correction: first tries `δw = δc = 0`; on failure picks
    /// `δc = 1e-8 μ^¼` and increases `δw` until the factorization succeeds.
    pub fn factorize_with_regularization(
        &mut self,
        reg: &mut RegularizationState,
        mu: f64,
    ) -> Result<FactorInfo, KktError> {
        let mut attempts = 1;
        if self.factorize_at(0.0, 0.0).is_ok() {
            return Ok(FactorInfo { delta_w: 0.0, delta_c: 0.0, attempts });
        }
        let delta_c = DELTA_C_BASE * mu.max(0.0).powf(0.25);
        let mut delta_w =
            if reg.last_delta_w == 0.0 { DELTA_W_INIT } else { (reg.last_delta_w * SHRINK).max(DELTA_W_MIN) };
        loop {
            attempts += 1;
            trace!("inertia correction: trying delta_w = {delta_w:e}, delta_c = {delta_c:e}");
            if self.factorize_at(delta_w, delta_c).is_ok() {
                reg.last_delta_w = delta_w;
                debug!("inertia corrected with delta_w = {delta_w:e} after {attempts} attempts");
                return Ok(FactorInfo { delta_w, delta_c, attempts });
            }
            delta_w *= if reg.last_delta_w == 0.0 { GROWTH_FIRST } else { GROWTH };
            if delta_w > DELTA_W_MAX {
                return Err(KktError::RegularizationExhausted { delta_w });
            }
        }
    }

    /// One solve of the unreduced system with the current factor:
    /// reduce, solve, recover bound duals.
    pub fn solve_once(&self, p: &KktVector) -> Result<KktVector, KktError> {
        let d = &self.data;
        let (qx, qs, qy) = d.reduce_rhs(p);
        let (dx, ds, dy) = self.backend.solver().solve(d, &qx, &qs, &qy);
        let [zlx, zux, zls, zus] = d.recover_bound_duals(&dx, &ds, p)?;
        Ok(KktVector { x: dx, s: ds, y: dy, zl_x: zlx, zu_x: zux, zl_s: zls, zu_s: zus })
    }

    /// `p − M_full Δ`
    pub fn full_residual(&self, step: &KktVector, p: &KktVector) -> KktVector {
        let mut r = p.clone();
        r.axpy(-1.0, &self.data.full_matvec(step));
        r
    }

    /// Refines `step` against the unreduced system, reusing the factor.
    pub fn iterative_refinement(&self, p: &KktVector, step: &mut KktVector) -> Result<RefinementInfo, KktError> {
        let scale = self.data.full_matrix_scale();
        let mut r = self.full_residual(step, p);
        let mut res = r.norm_inf();
        let initial = res;
        let threshold = |step: &KktVector| IR_KAPPA * f64::EPSILON * (p.norm_inf() + scale * step.norm_inf());
        let mut rounds = 0;
        while rounds < IR_MAX_ROUNDS && res > threshold(step) {
            let correction = self.solve_once(&r)?;
            let mut trial = step.clone();
            trial.axpy(1.0, &correction);
            let r_trial = self.full_residual(&trial, p);
            let res_trial = r_trial.norm_inf();
            rounds += 1;
            if !(res_trial < res) {
                break;
            }
            let enough = res_trial > 0.5 * res;
            *step = trial;
            r = r_trial;
            res = res_trial;
            if enough {
                break;
            }
        }
        let denom = p.norm_inf() + scale * step.norm_inf();
        Ok(RefinementInfo {
            rounds,
            initial_residual: initial,
            final_residual: res,
            relative_residual: if denom > 0.0 { res / denom } else { res },
        })
    }

    /// Factorize with inertia correction, solve, refine.
    pub fn solve_with_regularization(
        &mut self,
        p: &KktVector,
        reg: &mut RegularizationState,
        mu: f64,
    ) -> Result<(KktVector, StepInfo), KktError> {
        let t0 = Instant::now();
        let factor = self.factorize_with_regularization(reg, mu)?;
        let mut step = self.solve_once(p)?;
        let refinement = self.iterative_refinement(p, &mut step)?;
        Ok((step, StepInfo { factor, refinement, linear_seconds: t0.elapsed().as_secs_f64() }))
    }

    /// 1-norm condition estimate of the currently factorized matrix.
    pub fn condition_estimate(&self) -> f64 {
        self.backend.solver().condition_estimate()
    }

    pub fn condensed_solver(&self) -> Option<&CondensedSolver> {
        match &self.backend {
            Backend::Condensed(s) => Some(s),
            Backend::Augmented(_) => None,
        }
    }

    pub fn augmented_solver(&self) -> Option<&AugmentedSolver> {
        match &self.backend {
            Backend::Augmented(s) => Some(s),
            Backend::Condensed(_) => None,
        }
    }
}

pub(crate) fn condition_of<S: crate::sparse::SymmetricSolve>(matrix: &crate::sparse::SparseSymmetric, f: &S) -> f64 {
    estimate_condition(matrix, f)
}
