//! Primal-dual interior-point method with inequality relaxation.
//!
//! Every constraint row `g_i(x)` gets a slack `s_i` with `g(x) − s = 0`;
//! equality rows allow `s` to move in a band of width `2·tol` around the
//! right-hand side. With a slack on every row the Newton system condenses to
//! the primal space (see [`crate::kkt`]). Globalization is a filter line
//! search on `(θ, φ) = (‖g − s‖₁, barrier objective)` and the barrier
//! parameter follows the monotone Fiacco-McCormick rule.

pub mod filter;
pub mod problem;

use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::kkt::{KktBackend, KktData, KktError, KktVector, KktWorkspace, RegularizationState};
use crate::model::CompiledModel;

pub use filter::{Filter, LineSearchOptions};
pub use problem::{
    gradient_scale, kkt_residual, optimality_residual, push_inside, relax_equalities, relax_variable_bounds, Evaluator,
    KktResidual,
};

use filter::{
    barrier_directional_derivative, constraint_violation, log_barrier, max_dual_step, max_primal_step, relaxed_le,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Termination tolerance on the scaled residual; also the half-width of
    /// the equality relaxation band.
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Push of the starting point away from variable bounds.
    pub bound_push: f64,
    pub bound_frac: f64,
    /// Push of the initial slacks, as a fraction of the half band width.
    pub slack_push: f64,
    /// Relative loosening of inequality and variable bounds.
    pub bound_relax: f64,
    pub barrier_tol_factor: f64,
    pub mu_linear_decrease: f64,
    pub mu_superlinear_power: f64,
    pub kkt_backend: KktBackend,
    pub line_search: LineSearchOptions,
    /// Estimate condition numbers of both reduced systems at the final iterate.
    pub diagnose_conditioning: bool,
    /// Skip the augmented estimate above this dimension.
    pub max_augmented_dimension: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-4,
            max_iter: 3000,
            mu_init: 0.1,
            bound_push: 0.01,
            bound_frac: 0.01,
            slack_push: 0.01,
            bound_relax: 1e-8,
            barrier_tol_factor: 10.0,
            mu_linear_decrease: 0.2,
            mu_superlinear_power: 1.5,
            kkt_backend: KktBackend::Condensed,
            line_search: LineSearchOptions::default(),
            diagnose_conditioning: false,
            max_augmented_dimension: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid solver option {name}: {reason}")]
pub struct InvalidOption {
    pub name: &'static str,
    pub reason: &'static str,
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), InvalidOption> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(InvalidOption { name: "tol", reason: "must be positive and finite" });
        }
        if !(self.mu_init > 0.0) {
            return Err(InvalidOption { name: "mu_init", reason: "must be positive" });
        }
        if !(self.bound_push > 0.0 && self.bound_frac > 0.0 && self.bound_frac <= 0.5) {
            return Err(InvalidOption { name: "bound_push", reason: "push must be positive and frac in (0, 0.5]" });
        }
        if !(self.slack_push > 0.0 && self.slack_push < 1.0) {
            return Err(InvalidOption { name: "slack_push", reason: "must lie in (0, 1)" });
        }
        if !(self.bound_relax >= 0.0) {
            return Err(InvalidOption { name: "bound_relax", reason: "must be non-negative" });
        }
        if !(self.mu_linear_decrease > 0.0 && self.mu_linear_decrease < 1.0 && self.mu_superlinear_power > 1.0) {
            return Err(InvalidOption { name: "mu_linear_decrease", reason: "barrier decrease must be contracting" });
        }
        Ok(())
    }

    fn mu_min(&self) -> f64 {
        self.tol / 10.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    RegularizationExhausted,
    LineSearchFailure,
    EvalError,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::MaxIter => "MaxIter",
            SolveStatus::RegularizationExhausted => "RegularizationExhausted",
            SolveStatus::LineSearchFailure => "LineSearchFailure",
            SolveStatus::EvalError => "EvalError",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Model callbacks (objective, constraints and derivatives).
    pub ad: f64,
    /// Assembly, factorization, solves and refinement.
    pub linear: f64,
    /// Everything else.
    pub internal: f64,
    pub total: f64,
}

/// One row of the iteration log. Iteration 0 describes the starting point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    /// Unscaled objective.
    pub objective: f64,
    /// `‖g − s‖∞` of the scaled rows.
    pub inf_pr: f64,
    /// Scaled dual infeasibility.
    pub inf_du: f64,
    pub mu: f64,
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub delta_w: f64,
    pub ls_trials: usize,
    pub ir_rounds: usize,
    /// Relative residual of the unreduced system after refinement.
    pub ir_residual: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimates {
    /// κ₁ estimate of the condensed matrix; `None` if it could not be factorized.
    pub condensed: Option<f64>,
    /// κ₁ estimate of the augmented matrix; `None` if skipped or not factorized.
    pub augmented: Option<f64>,
    pub condensed_delta_w: f64,
    pub augmented_delta_w: f64,
    pub augmented_skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub message: Option<String>,
    /// Unscaled objective at the final iterate.
    pub objective: f64,
    /// Inf-norm violation of the original constraint ranges, unscaled.
    pub constraint_violation: f64,
    /// Scaled residual at μ = 0 (the termination measure).
    pub scaled_residual: f64,
    pub iterations: usize,
    pub timings: Timings,
    pub final_mu: f64,
    pub conditioning: Option<ConditionEstimates>,
    pub x: Vec<f64>,
    /// Constraint multipliers for the unscaled rows.
    pub y: Vec<f64>,
    pub trace: Vec<IterationLog>,
}

impl SolveReport {
    /// Iteration traces with timing removed, for reproducibility checks.
    pub fn numeric_trace(&self) -> &[IterationLog] {
        &self.trace
    }
}

/// Unscaled violation `max(lower − g, g − upper, 0)` over all rows.
pub fn range_violation(g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut v = 0.0f64;
    for i in 0..g.len() {
        v = v.max(lower[i] - g[i]).max(g[i] - upper[i]);
    }
    v
}

/// Fills `x`, `s`, `y`, `z` of the starting point: variables pushed inside
/// their bounds, slacks at the pushed constraint values, `y = 0`, `z = 1` on
/// every finite bound.
pub fn initialize(data: &KktData, x0: &[f64], g: &[f64], options: &SolverOptions) -> KktVector {
    let (n, m) = (data.n, data.m);
    let mut it = KktVector::zeros(n, m);
    let (xb, sb) = (&data.x_bounds, &data.s_bounds);
    for j in 0..n {
        it.x[j] = push_inside(x0[j], xb.lower[j], xb.upper[j], options.bound_push, options.bound_frac);
        it.zl_x[j] = if xb.has_lower[j] { 1.0 } else { 0.0 };
        it.zu_x[j] = if xb.has_upper[j] { 1.0 } else { 0.0 };
    }
    for i in 0..m {
        it.s[i] = push_inside(g[i], sb.lower[i], sb.upper[i], options.slack_push, options.slack_push / 2.0);
        it.zl_s[i] = if sb.has_lower[i] { 1.0 } else { 0.0 };
        it.zu_s[i] = if sb.has_upper[i] { 1.0 } else { 0.0 };
    }
    it
}

/// Monotone barrier update. Returns the new μ (unchanged when the
/// subproblem is not yet solved to `κ_ε μ` or μ is at its floor).
pub fn update_barrier(mu: f64, e_mu: f64, options: &SolverOptions) -> f64 {
    let floor = options.mu_min();
    if e_mu > options.barrier_tol_factor * mu || mu <= floor {
        return mu;
    }
    floor.max((options.mu_linear_decrease * mu).min(mu.powf(options.mu_superlinear_power)))
}

/// `(x, s, y) += α Δ`, `z += α_z Δz`, then clips every bound multiplier into
/// `[μ/(κ_Σ gap), κ_Σ μ/gap]`.
pub fn apply_step(
    it: &mut KktVector,
    step: &KktVector,
    alpha: f64,
    alpha_z: f64,
    data: &KktData,
    mu: f64,
    kappa_sigma: f64,
) {
    for (v, d) in [(&mut it.x, &step.x), (&mut it.s, &step.s), (&mut it.y, &step.y)] {
        for (a, b) in v.iter_mut().zip(d) {
            *a += alpha * b;
        }
    }
    for (v, d) in
        [(&mut it.zl_x, &step.zl_x), (&mut it.zu_x, &step.zu_x), (&mut it.zl_s, &step.zl_s), (&mut it.zu_s, &step.zu_s)]
    {
        for (a, b) in v.iter_mut().zip(d) {
            *a += alpha_z * b;
        }
    }
    let clip = |z: &mut f64, gap: f64| {
        let lo = mu / (kappa_sigma * gap);
        let hi = kappa_sigma * mu / gap;
        *z = z.max(lo).min(hi);
    };
    let (xb, sb) = (&data.x_bounds, &data.s_bounds);
    for j in 0..it.x.len() {
        if xb.has_lower[j] {
            clip(&mut it.zl_x[j], it.x[j] - xb.lower[j]);
        }
        if xb.has_upper[j] {
            clip(&mut it.zu_x[j], xb.upper[j] - it.x[j]);
        }
    }
    for i in 0..it.s.len() {
        if sb.has_lower[i] {
            clip(&mut it.zl_s[i], it.s[i] - sb.lower[i]);
        }
        if sb.has_upper[i] {
            clip(&mut it.zu_s[i], sb.upper[i] - it.s[i]);
        }
    }
}

/// Accepted trial point of the line search.
#[derive(Clone, Debug)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub alpha_z: f64,
    pub trials: usize,
    /// Scaled objective and constraints at the accepted point.
    pub f: f64,
    pub g: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("line search failed after {trials} trials (last step {alpha:e})")]
pub struct LineSearchFailure {
    pub trials: usize,
    pub alpha: f64,
}

/// Per-solve constants of the line search.
#[derive(Clone, Copy, Debug)]
pub struct FilterBounds {
    pub theta_min: f64,
    pub theta_max: f64,
}

/// Backtracking filter line search from `α_max` (fraction to boundary with
/// `τ = max(0.99, 1 − μ)`), halving until a trial is accepted.
#[allow(clippy::too_many_arguments)]
pub fn filter_line_search(
    ev: &mut Evaluator<'_>,
    data: &KktData,
    it: &KktVector,
    step: &KktVector,
    grad: &[f64],
    f: f64,
    g: &[f64],
    mu: f64,
    filter: &mut Filter,
    bounds: FilterBounds,
    opts: &LineSearchOptions,
) -> Result<LineSearchResult, LineSearchFailure> {
    let tau = 0.99f64.max(1.0 - mu);
    let (xb, sb) = (&data.x_bounds, &data.s_bounds);
    let alpha_max = max_primal_step(&it.x, &step.x, xb, tau).min(max_primal_step(&it.s, &step.s, sb, tau));
    let mut alpha_z = 1.0f64;
    for (z, dz) in [(&it.zl_x, &step.zl_x), (&it.zu_x, &step.zu_x), (&it.zl_s, &step.zl_s), (&it.zu_s, &step.zu_s)] {
        alpha_z = alpha_z.min(max_dual_step(z, dz, tau));
    }

    let theta = constraint_violation(g, &it.s);
    let phi = f + log_barrier(&it.x, xb, mu) + log_barrier(&it.s, sb, mu);
    let dphi = barrier_directional_derivative(it, step, grad, xb, sb, mu);
    let (n, m) = (it.x.len(), it.s.len());
    let mut xt = vec![0.0; n];
    let mut st = vec![0.0; m];
    let mut gt = vec![0.0; m];
    let mut alpha = alpha_max;
    let mut trials = 0;
    while alpha >= opts.alpha_min {
        trials += 1;
        for j in 0..n {
            xt[j] = it.x[j] + alpha * step.x[j];
        }
        for i in 0..m {
            st[i] = it.s[i] + alpha * step.s[i];
        }
        let evaluated = ev.objective(&xt).and_then(|ft| ev.constraints(&xt, &mut gt).map(|_| ft));
        if let Ok(ft) = evaluated {
            let theta_t = constraint_violation(&gt, &st);
            let phi_t = ft + log_barrier(&xt, xb, mu) + log_barrier(&st, sb, mu);
            if phi_t.is_finite()
                && theta_t.is_finite()
                && theta_t <= bounds.theta_max
                && filter.acceptable(theta_t, phi_t)
            {
                let switching = dphi < 0.0 && alpha * (-dphi).powf(opts.s_phi) > opts.delta * theta.powf(opts.s_theta);
                let accepted = if theta <= bounds.theta_min && switching {
                    relaxed_le(phi_t, phi + opts.eta_phi * alpha * dphi)
                } else {
                    let ok = relaxed_le(theta_t, (1.0 - opts.gamma_theta) * theta)
                        || relaxed_le(phi_t, phi - opts.gamma_phi * theta);
                    if ok {
                        filter.add((1.0 - opts.gamma_theta) * theta, phi - opts.gamma_phi * theta);
                    }
                    ok
                };
                if accepted {
                    return Ok(LineSearchResult { alpha, alpha_z, trials, f: ft, g: gt });
                }
            }
        }
        alpha *= 0.5;
    }
    Err(LineSearchFailure { trials, alpha })
}

#[allow(clippy::too_many_arguments)]
fn finish_report(
    status: SolveStatus,
    message: Option<String>,
    model: &CompiledModel,
    ev: &Evaluator<'_>,
    it: &KktVector,
    residual: f64,
    iterations: usize,
    mu: f64,
    trace: Vec<IterationLog>,
    linear: f64,
    started: Instant,
    conditioning: Option<ConditionEstimates>,
) -> SolveReport {
    let x = ev.expand(&it.x);
    let objective = model.eval_objective(&x).unwrap_or(f64::NAN);
    let mut g = vec![0.0; model.n_con];
    let constraint_violation = match model.eval_constraints(&x, &mut g) {
        Ok(()) => range_violation(&g, &model.con_lower, &model.con_upper),
        Err(_) => f64::NAN,
    };
    let y = it.y.iter().zip(&ev.con_scale).map(|(y, d)| y * d / ev.obj_scale).collect();
    let total = started.elapsed().as_secs_f64();
    let ad = ev.seconds;
    SolveReport {
        status,
        message,
        objective,
        constraint_violation,
        scaled_residual: residual,
        iterations,
        timings: Timings { ad, linear, internal: (total - ad - linear).max(0.0), total },
        final_mu: mu,
        conditioning,
        x,
        y,
        trace,
    }
}

/// κ₁ estimates of the condensed and augmented matrices at the current
/// contents of `data`, each with its own inertia correction from scratch.
pub fn estimate_conditioning(data: &KktData, mu: f64, max_augmented_dimension: usize) -> ConditionEstimates {
    let mut out = ConditionEstimates::default();
    let mut cond = KktWorkspace::new(data.clone(), KktBackend::Condensed);
    if let Ok(info) = cond.factorize_with_regularization(&mut RegularizationState::default(), mu) {
        out.condensed = Some(cond.condition_estimate());
        out.condensed_delta_w = info.delta_w;
    }
    if data.n + 2 * data.m > max_augmented_dimension {
        out.augmented_skipped = true;
        return out;
    }
    let mut aug = KktWorkspace::new(data.clone(), KktBackend::Augmented);
    if let Ok(info) = aug.factorize_with_regularization(&mut RegularizationState::default(), mu) {
        out.augmented = Some(aug.condition_estimate());
        out.augmented_delta_w = info.delta_w;
    }
    out
}

/// Runs the interior-point method on `model`.
pub fn solve(model: &CompiledModel, options: &SolverOptions) -> Result<SolveReport, InvalidOption> {
    options.validate()?;
    let started = Instant::now();
    let m = model.n_con;
    let probe = Evaluator::unscaled(model);
    let n = probe.n();
    let xb =
        relax_variable_bounds(&probe.reduce(&model.var_lower), &probe.reduce(&model.var_upper), options.bound_relax);
    let start = probe.reduce(&model.start);
    let x0: Vec<f64> = (0..n)
        .map(|j| push_inside(start[j], xb.lower[j], xb.upper[j], options.bound_push, options.bound_frac))
        .collect();

    let mut ev = match Evaluator::scaled_at(model, &x0) {
        Ok(ev) => ev,
        Err(e) => {
            let ev = probe;
            let mut it = KktVector::zeros(n, m);
            it.x = x0;
            return Ok(finish_report(
                SolveStatus::EvalError,
                Some(e.to_string()),
                model,
                &ev,
                &it,
                f64::INFINITY,
                0,
                options.mu_init,
                Vec::new(),
                0.0,
                started,
                None,
            ));
        }
    };
    let sb = relax_equalities(model, &ev.con_scale, options.tol, options.bound_relax);
    let (hess_rows, hess_cols) = ev.hessian_pattern();
    let (jac_rows, jac_cols) = ev.jacobian_pattern();
    let data = KktData::new((&hess_rows, &hess_cols), (&jac_rows, &jac_cols), xb, sb);
    let mut ws = KktWorkspace::new(data, options.kkt_backend);
    let mut linear = 0.0;
    let mut mu = options.mu_init;
    let mut trace = Vec::new();

    let mut g = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let first = (|| {
        ev.constraints(&x0, &mut g)?;
        ev.gradient(&x0, &mut grad)?;
        ev.jacobian(&x0, &mut ws.data.a)?;
        ev.objective(&x0)
    })();
    let mut it = initialize(&ws.data, &x0, &g, options);
    let mut f = match first {
        Ok(f) => f,
        Err(e) => {
            return Ok(finish_report(
                SolveStatus::EvalError,
                Some(e.to_string()),
                model,
                &ev,
                &it,
                f64::INFINITY,
                0,
                mu,
                trace,
                linear,
                started,
                None,
            ))
        }
    };

    let theta0 = constraint_violation(&g, &it.s);
    let bounds = FilterBounds {
        theta_min: options.line_search.theta_min_fact * theta0.max(1.0),
        theta_max: options.line_search.theta_max_fact * theta0.max(1.0),
    };
    let mut filter = Filter::new();
    let mut reg = RegularizationState::default();
    let mut iter = 0;
    let mut last = (0.0, 0.0, 0.0, 0usize, 0usize, 0.0);

    let (status, message) = loop {
        ws.data.set_iterate(&it);
        let mut res = kkt_residual(&ws.data, &it, &grad, &g, mu);
        let log = IterationLog {
            iter,
            objective: f / ev.obj_scale,
            inf_pr: res.primal_infeasibility,
            inf_du: res.dual_infeasibility / res.s_d,
            mu,
            alpha_primal: last.0,
            alpha_dual: last.1,
            delta_w: last.2,
            ls_trials: last.3,
            ir_rounds: last.4,
            ir_residual: last.5,
        };
        info!(
            "{:4} {:+.8e} {:.2e} {:.2e} {:.1e} {:.2e} {:.2e} {:.1e} {:2} {:2}",
            log.iter,
            log.objective,
            log.inf_pr,
            log.inf_du,
            log.mu,
            log.alpha_primal,
            log.alpha_dual,
            log.delta_w,
            log.ls_trials,
            log.ir_rounds
        );
        trace.push(log);
        if res.e_0 <= options.tol {
            break (SolveStatus::Optimal, None);
        }
        loop {
            let new_mu = update_barrier(mu, res.e_mu, options);
            if new_mu == mu {
                break;
            }
            debug!("barrier parameter {mu:e} -> {new_mu:e}");
            mu = new_mu;
            filter.reset();
            res = kkt_residual(&ws.data, &it, &grad, &g, mu);
        }
        if iter >= options.max_iter {
            break (SolveStatus::MaxIter, None);
        }

        if let Err(e) = ev.hessian(&it.x, &it.y, &mut ws.data.w) {
            break (SolveStatus::EvalError, Some(e.to_string()));
        }
        let mut p = optimality_residual(&ws.data, &it, &grad, &g, mu);
        for b in p.blocks_mut() {
            for v in b.iter_mut() {
                *v = -*v;
            }
        }
        let (step, info) = match ws.solve_with_regularization(&p, &mut reg, mu) {
            Ok(r) => r,
            Err(KktError::RegularizationExhausted { delta_w }) => {
                break (SolveStatus::RegularizationExhausted, Some(format!("delta_w reached {delta_w:e}")))
            }
            Err(e @ KktError::DegenerateInterior { .. }) => {
                break (SolveStatus::LineSearchFailure, Some(e.to_string()))
            }
        };
        linear += info.linear_seconds;
        if !step.is_finite() {
            break (SolveStatus::RegularizationExhausted, Some("non-finite step".into()));
        }

        let mut attempt = filter_line_search(
            &mut ev,
            &ws.data,
            &it,
            &step,
            &grad,
            f,
            &g,
            mu,
            &mut filter,
            bounds,
            &options.line_search,
        );
        if attempt.is_err() && !filter.is_empty() {
            warn!("line search failed at iteration {iter}; retrying with an empty filter");
            filter.reset();
            attempt = filter_line_search(
                &mut ev,
                &ws.data,
                &it,
                &step,
                &grad,
                f,
                &g,
                mu,
                &mut filter,
                bounds,
                &options.line_search,
            );
        }
        let ls = match attempt {
            Ok(ls) => ls,
            Err(e) => break (SolveStatus::LineSearchFailure, Some(e.to_string())),
        };
        apply_step(&mut it, &step, ls.alpha, ls.alpha_z, &ws.data, mu, options.line_search.kappa_sigma);
        f = ls.f;
        g = ls.g;
        let derivs = ev.gradient(&it.x, &mut grad).and_then(|_| ev.jacobian(&it.x, &mut ws.data.a));
        if let Err(e) = derivs {
            break (SolveStatus::EvalError, Some(e.to_string()));
        }
        iter += 1;
        last = (
            ls.alpha,
            ls.alpha_z,
            info.factor.delta_w,
            ls.trials,
            info.refinement.rounds,
            info.refinement.relative_residual,
        );
    };

    let residual = trace.last().map_or(f64::INFINITY, |_| {
        ws.data.set_iterate(&it);
        kkt_residual(&ws.data, &it, &grad, &g, 0.0).e_0
    });
    let conditioning = if options.diagnose_conditioning && ev.hessian(&it.x, &it.y, &mut ws.data.w).is_ok() {
        ws.data.set_iterate(&it);
        Some(estimate_conditioning(&ws.data, mu, options.max_augmented_dimension))
    } else {
        None
    };
    Ok(finish_report(status, message, model, &ev, &it, residual, iter, mu, trace, linear, started, conditioning))
}
