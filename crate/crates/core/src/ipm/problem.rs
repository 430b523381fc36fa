//! The relaxed, scaled problem the iterations actually see:
//!
//! ```text
//! min  σ f(x)   s.t.  D g(x) − s = 0,   xₗ ≤ x ≤ xᵤ,   sₗ ≤ s ≤ sᵤ
//! ```
//!
//! Equality rows get slack bounds `[D b − tol, D b + tol]`; range rows keep
//! their (scaled) range.

use std::time::Instant;

use crate::autodiff::EvalError;
use crate::kkt::{BoundPair, KktData, KktVector};
use crate::model::CompiledModel;

/// Upper limit on a gradient norm before scaling kicks in.
const SCALING_TARGET: f64 = 100.0;
const SCALING_MIN: f64 = 1e-8;
/// Width of the perturbation applied to fixed variables.
const FIX_PERTURBATION: f64 = 1e-8;

/// Gradient-based scale factor `min(1, 100 / ‖v‖∞)`, floored at 1e-8.
pub fn gradient_scale(values: impl IntoIterator<Item = f64>) -> f64 {
    let norm = values.into_iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if norm > SCALING_TARGET {
        (SCALING_TARGET / norm).max(SCALING_MIN)
    } else {
        1.0
    }
}

/// Slack bounds for the relaxed rows `D g(x) − s = 0`.
///
/// Equality rows (`lower == upper == b`) become `[d b − tol, d b + tol]`.
/// Other rows keep `[d lower, d upper]`, with finite sides loosened by
/// `bound_relax · max(1, |bound|)`.
pub fn relax_equalities(model: &CompiledModel, con_scale: &[f64], tol: f64, bound_relax: f64) -> BoundPair {
    let m = model.n_con;
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    for i in 0..m {
        let d = con_scale[i];
        let (lo, hi) = (d * model.con_lower[i], d * model.con_upper[i]);
        if model.is_equality(i) {
            lower.push(lo - tol);
            upper.push(hi + tol);
        } else {
            lower.push(if lo.is_finite() { lo - bound_relax * lo.abs().max(1.0) } else { lo });
            upper.push(if hi.is_finite() { hi + bound_relax * hi.abs().max(1.0) } else { hi });
        }
    }
    BoundPair::new(lower, upper)
}

/// Variable bounds after fixed-variable perturbation and optional relaxation.
pub fn relax_variable_bounds(lower: &[f64], upper: &[f64], bound_relax: f64) -> BoundPair {
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    for j in 0..lo.len() {
        if lo[j] == hi[j] {
            let eps = FIX_PERTURBATION * lo[j].abs().max(1.0);
            lo[j] -= eps;
            hi[j] += eps;
            continue;
        }
        if lo[j].is_finite() {
            lo[j] -= bound_relax * lo[j].abs().max(1.0);
        }
        if hi[j].is_finite() {
            hi[j] += bound_relax * hi[j].abs().max(1.0);
        }
    }
    BoundPair::new(lo, hi)
}

/// Moves `v` strictly inside `[l, u]`: by `push · max(1, |bound|)`, capped at
/// `frac · (u − l)` when both sides are finite.
pub fn push_inside(v: f64, l: f64, u: f64, push: f64, frac: f64) -> f64 {
    let (lf, uf) = (l.is_finite(), u.is_finite());
    let mut v = v;
    if lf && uf {
        let pl = (push * l.abs().max(1.0)).min(frac * (u - l));
        let pu = (push * u.abs().max(1.0)).min(frac * (u - l));
        v = v.max(l + pl).min(u - pu);
    } else if lf {
        v = v.max(l + push * l.abs().max(1.0));
    } else if uf {
        v = v.min(u - push * u.abs().max(1.0));
    }
    v
}

/// Scaled callbacks of the relaxed problem, with wall-clock accounting.
///
/// Variables with `lower == upper` are treated as parameters: the iterations
/// see only the free variables, and callbacks take and return reduced
/// vectors. Jacobian and Hessian entries touching fixed variables are dropped.
pub struct Evaluator<'a> {
    pub model: &'a CompiledModel,
    pub obj_scale: f64,
    pub con_scale: Vec<f64>,
    /// Seconds spent in model callbacks.
    pub seconds: f64,
    weights: Vec<f64>,
    /// Full index of each free variable.
    free: Vec<usize>,
    jac_keep: Vec<usize>,
    hess_keep: Vec<usize>,
    full_x: Vec<f64>,
    full_grad: Vec<f64>,
    full_jac: Vec<f64>,
    full_hess: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn unscaled(model: &'a CompiledModel) -> Self {
        let fixed: Vec<bool> = (0..model.n_var).map(|j| model.var_lower[j] == model.var_upper[j]).collect();
        let free: Vec<usize> = (0..model.n_var).filter(|&j| !fixed[j]).collect();
        let jac_keep = (0..model.jac_nnz()).filter(|&k| !fixed[model.jac_cols[k]]).collect();
        let hess_keep =
            (0..model.hess_nnz()).filter(|&k| !fixed[model.hess_rows[k]] && !fixed[model.hess_cols[k]]).collect();
        let full_x = (0..model.n_var).map(|j| if fixed[j] { model.var_lower[j] } else { model.start[j] }).collect();
        Evaluator {
            model,
            obj_scale: 1.0,
            con_scale: vec![1.0; model.n_con],
            seconds: 0.0,
            weights: vec![0.0; model.n_con],
            free,
            jac_keep,
            hess_keep,
            full_x,
            full_grad: vec![0.0; model.n_var],
            full_jac: vec![0.0; model.jac_nnz()],
            full_hess: vec![0.0; model.hess_nnz()],
        }
    }

    /// Gradient-based scaling computed at the reduced point `x`.
    pub fn scaled_at(model: &'a CompiledModel, x: &[f64]) -> Result<Self, EvalError> {
        let mut ev = Self::unscaled(model);
        let mut grad = vec![0.0; ev.n()];
        ev.gradient(x, &mut grad)?;
        let mut jac = vec![0.0; ev.jac_keep.len()];
        ev.jacobian(x, &mut jac)?;
        ev.obj_scale = gradient_scale(grad.iter().copied());
        let mut row_max = vec![0.0f64; model.n_con];
        for (&k, v) in ev.jac_keep.iter().zip(&jac) {
            let i = model.jac_rows[k];
            row_max[i] = row_max[i].max(v.abs());
        }
        ev.con_scale = row_max.into_iter().map(|v| gradient_scale([v])).collect();
        Ok(ev)
    }

    /// Number of free variables.
    pub fn n(&self) -> usize {
        self.free.len()
    }

    pub fn free_variables(&self) -> &[usize] {
        &self.free
    }

    /// Restriction of a full-length vector to the free variables.
    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&j| full[j]).collect()
    }

    /// Full variable vector with fixed entries at their values.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.full_x.clone();
        for (&j, &v) in self.free.iter().zip(x) {
            full[j] = v;
        }
        full
    }

    /// Jacobian pattern over the free variables, in output order.
    pub fn jacobian_pattern(&self) -> (Vec<usize>, Vec<usize>) {
        let pos = self.positions();
        self.jac_keep.iter().map(|&k| (self.model.jac_rows[k], pos[self.model.jac_cols[k]])).unzip()
    }

    /// Lower-triangle Hessian pattern over the free variables, in output order.
    pub fn hessian_pattern(&self) -> (Vec<usize>, Vec<usize>) {
        let pos = self.positions();
        self.hess_keep.iter().map(|&k| (pos[self.model.hess_rows[k]], pos[self.model.hess_cols[k]])).unzip()
    }

    fn positions(&self) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.model.n_var];
        for (r, &j) in self.free.iter().enumerate() {
            pos[j] = r;
        }
        pos
    }

    fn load(&mut self, x: &[f64]) {
        for (&j, &v) in self.free.iter().zip(x) {
            self.full_x[j] = v;
        }
    }

    pub fn objective(&mut self, x: &[f64]) -> Result<f64, EvalError> {
        self.load(x);
        let t = Instant::now();
        let f = self.model.eval_objective(&self.full_x);
        self.seconds += t.elapsed().as_secs_f64();
        Ok(self.obj_scale * f?)
    }

    pub fn constraints(&mut self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.load(x);
        let t = Instant::now();
        let r = self.model.eval_constraints(&self.full_x, out);
        self.seconds += t.elapsed().as_secs_f64();
        r?;
        for (v, d) in out.iter_mut().zip(&self.con_scale) {
            *v *= d;
        }
        Ok(())
    }

    pub fn gradient(&mut self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.load(x);
        let t = Instant::now();
        let r = self.model.eval_gradient(&self.full_x, &mut self.full_grad);
        self.seconds += t.elapsed().as_secs_f64();
        r?;
        for (o, &j) in out.iter_mut().zip(&self.free) {
            *o = self.obj_scale * self.full_grad[j];
        }
        Ok(())
    }

    pub fn jacobian(&mut self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.load(x);
        let t = Instant::now();
        let r = self.model.eval_jacobian(&self.full_x, &mut self.full_jac);
        self.seconds += t.elapsed().as_secs_f64();
        r?;
        for (o, &k) in out.iter_mut().zip(&self.jac_keep) {
            *o = self.full_jac[k] * self.con_scale[self.model.jac_rows[k]];
        }
        Ok(())
    }

    /// Hessian of `σ f + yᵀ D g` for multipliers `y` of the scaled rows.
    pub fn hessian(&mut self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.load(x);
        for i in 0..y.len() {
            self.weights[i] = y[i] * self.con_scale[i];
        }
        let t = Instant::now();
        let r = self.model.eval_lagrangian_hessian(&self.full_x, &self.weights, self.obj_scale, &mut self.full_hess);
        self.seconds += t.elapsed().as_secs_f64();
        r?;
        for (o, &k) in out.iter_mut().zip(&self.hess_keep) {
            *o = self.full_hess[k];
        }
        Ok(())
    }
}

/// Residual summary of the barrier problem at one iterate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResidual {
    /// Scaled residual at the current μ.
    pub e_mu: f64,
    /// Scaled residual at μ = 0 (termination test).
    pub e_0: f64,
    pub dual_infeasibility: f64,
    pub primal_infeasibility: f64,
    pub complementarity_mu: f64,
    pub complementarity_0: f64,
    pub s_d: f64,
    pub s_c: f64,
}

/// Optimality residual `F` of the barrier problem at `μ`, using the
/// Jacobian values in `data.a`. The Newton right-hand side is `−F`.
pub fn optimality_residual(data: &KktData, it: &KktVector, grad: &[f64], g: &[f64], mu: f64) -> KktVector {
    let (n, m) = (data.n, data.m);
    let mut f = KktVector::zeros(n, m);
    let aty = data.jac_t_mul(&it.y);
    let (xb, sb) = (&data.x_bounds, &data.s_bounds);
    for j in 0..n {
        f.x[j] = grad[j] + aty[j] - it.zl_x[j] + it.zu_x[j];
        if xb.has_lower[j] {
            f.zl_x[j] = it.zl_x[j] * (it.x[j] - xb.lower[j]) - mu;
        }
        if xb.has_upper[j] {
            f.zu_x[j] = it.zu_x[j] * (xb.upper[j] - it.x[j]) - mu;
        }
    }
    for i in 0..m {
        f.s[i] = -it.y[i] - it.zl_s[i] + it.zu_s[i];
        f.y[i] = g[i] - it.s[i];
        if sb.has_lower[i] {
            f.zl_s[i] = it.zl_s[i] * (it.s[i] - sb.lower[i]) - mu;
        }
        if sb.has_upper[i] {
            f.zu_s[i] = it.zu_s[i] * (sb.upper[i] - it.s[i]) - mu;
        }
    }
    f
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn norm_1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Scaled optimality error with the usual multiplier-size scaling
/// `s_d = max(s_max, (‖y‖₁ + ‖z‖₁)/(m + #bounds))/s_max`,
/// `s_c = max(s_max, ‖z‖₁/#bounds)/s_max`, `s_max = 100`.
pub fn kkt_residual(data: &KktData, it: &KktVector, grad: &[f64], g: &[f64], mu: f64) -> KktResidual {
    const S_MAX: f64 = 100.0;
    let f = optimality_residual(data, it, grad, g, mu);
    let nb = data.x_bounds.count() + data.s_bounds.count();
    let z1 = norm_1(&it.zl_x) + norm_1(&it.zu_x) + norm_1(&it.zl_s) + norm_1(&it.zu_s);
    let y1 = norm_1(&it.y);
    let s_d = if data.m + nb > 0 { S_MAX.max((y1 + z1) / (data.m + nb) as f64) / S_MAX } else { 1.0 };
    let s_c = if nb > 0 { S_MAX.max(z1 / nb as f64) / S_MAX } else { 1.0 };
    let dual = norm_inf(&f.x).max(norm_inf(&f.s));
    let primal = norm_inf(&f.y);
    let compl_mu = [&f.zl_x, &f.zu_x, &f.zl_s, &f.zu_s].iter().fold(0.0f64, |acc, v| acc.max(norm_inf(v)));
    // the μ = 0 complementarity differs only by the shift on active bounds
    let mut compl_0 = 0.0f64;
    for (vals, has) in [
        (&f.zl_x, &data.x_bounds.has_lower),
        (&f.zu_x, &data.x_bounds.has_upper),
        (&f.zl_s, &data.s_bounds.has_lower),
        (&f.zu_s, &data.s_bounds.has_upper),
    ] {
        for (v, &h) in vals.iter().zip(has.iter()) {
            if h {
                compl_0 = compl_0.max((v + mu).abs());
            }
        }
    }
    let e_mu = (dual / s_d).max(primal).max(compl_mu / s_c);
    let e_0 = (dual / s_d).max(primal).max(compl_0 / s_c);
    KktResidual {
        e_mu,
        e_0,
        dual_infeasibility: dual,
        primal_infeasibility: primal,
        complementarity_mu: compl_mu,
        complementarity_0: compl_0,
        s_d,
        s_c,
    }
}
