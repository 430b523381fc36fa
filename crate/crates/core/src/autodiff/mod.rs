//! Objective, constraint and derivative evaluation of a [`CompiledModel`].
//!
//! Each pattern block is evaluated record by record with the block's
//! compiled tape. Per-record results land in a block-local buffer (in
//! parallel for large blocks) and are then scattered into the global
//! outputs in record order, so the result is bitwise independent of the
//! number of worker threads.
//!
//! The Hessian callback returns the lower triangle of
//! `obj_weight * ∇²f(x) + Σ_i y_i ∇²g_i(x)`.

mod tape;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{BlockKind, CompiledBlock, CompiledModel};
use tape::TapeWork;

/// Blocks with at least this many records are evaluated with rayon.
pub const PARALLEL_RECORDS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("non-finite {what} at index {index}")]
    NonFiniteResult { what: &'static str, index: usize },
}

fn check_finite(values: &[f64], what: &'static str) -> Result<(), EvalError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(EvalError::NonFiniteResult { what, index }),
        None => Ok(()),
    }
}

/// Runs `f` on every record, collecting `width` outputs per record.
fn map_records<F>(block: &CompiledBlock, width: usize, f: F) -> Vec<f64>
where
    F: Fn(&mut TapeWork, usize, &mut [f64]) + Sync,
{
    let n = block.len();
    let mut buf = vec![0.0; n * width];
    if width == 0 || n == 0 {
        return buf;
    }
    let ins = &block.block.instruction;
    if n >= PARALLEL_RECORDS {
        buf.par_chunks_mut(width).enumerate().for_each_init(
            || {
                let mut w = TapeWork::default();
                w.prepare(ins);
                w
            },
            |w, (r, out)| f(w, r, out),
        );
    } else {
        let mut w = TapeWork::default();
        w.prepare(ins);
        for (r, out) in buf.chunks_mut(width).enumerate() {
            f(&mut w, r, out);
        }
    }
    buf
}

fn values_of(block: &CompiledBlock, x: &[f64]) -> Vec<f64> {
    let data = &block.block.data;
    let ins = &block.block.instruction;
    map_records(block, 1, |w, r, out| {
        w.load(x, data.vars(r));
        out[0] = tape::forward(ins, data.params(r), w);
    })
}

fn gradients_of(block: &CompiledBlock, x: &[f64]) -> Vec<f64> {
    let data = &block.block.data;
    let ins = &block.block.instruction;
    let template = ins.gradient_template();
    map_records(block, template.len(), |w, r, out| {
        w.load(x, data.vars(r));
        tape::gradient(ins, data.params(r), 1.0, w);
        for (o, &a) in out.iter_mut().zip(template) {
            *o = w.grad[a];
        }
    })
}

impl CompiledModel {
    fn ordered_blocks(&self) -> impl Iterator<Item = &CompiledBlock> {
        // defines first, increments after, each in insertion order
        let defines = self.blocks.iter().filter(|b| b.kind() == BlockKind::ConstraintDefine);
        let increments = self.blocks.iter().filter(|b| b.kind() == BlockKind::ConstraintIncrement);
        defines.chain(increments)
    }

    pub fn eval_objective(&self, x: &[f64]) -> Result<f64, EvalError> {
        assert_eq!(x.len(), self.n_var);
        let mut f = 0.0;
        for block in self.blocks.iter().filter(|b| b.kind() == BlockKind::ObjectiveSum) {
            for v in values_of(block, x) {
                f += v;
            }
        }
        let f = self.objective_sign * f;
        check_finite(&[f], "objective")?;
        Ok(f)
    }

    pub fn eval_constraints(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        assert_eq!(x.len(), self.n_var);
        assert_eq!(out.len(), self.n_con);
        out.fill(0.0);
        for block in self.ordered_blocks() {
            for (&t, v) in block.block.targets.iter().zip(values_of(block, x)) {
                out[t] += v;
            }
        }
        check_finite(out, "constraint")
    }

    pub fn eval_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        assert_eq!(x.len(), self.n_var);
        assert_eq!(out.len(), self.n_var);
        out.fill(0.0);
        for block in self.blocks.iter().filter(|b| b.kind() == BlockKind::ObjectiveSum) {
            let template = block.block.instruction.gradient_template();
            let local = gradients_of(block, x);
            for r in 0..block.len() {
                let vars = block.block.data.vars(r);
                for (k, &a) in template.iter().enumerate() {
                    out[vars[a]] += self.objective_sign * local[r * template.len() + k];
                }
            }
        }
        check_finite(out, "gradient")
    }

    /// Jacobian values aligned with `(jac_rows, jac_cols)`.
    pub fn eval_jacobian(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        assert_eq!(x.len(), self.n_var);
        assert_eq!(out.len(), self.jac_nnz());
        out.fill(0.0);
        for block in self.ordered_blocks() {
            let local = gradients_of(block, x);
            for (&slot, v) in block.jac_slots.iter().zip(local) {
                out[slot] += v;
            }
        }
        check_finite(out, "jacobian")
    }

    /// Lower-triangle Hessian of `obj_weight * f + y' g`, aligned with `(hess_rows, hess_cols)`.
    pub fn eval_lagrangian_hessian(
        &self,
        x: &[f64],
        y: &[f64],
        obj_weight: f64,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        assert_eq!(x.len(), self.n_var);
        assert_eq!(y.len(), self.n_con);
        assert_eq!(out.len(), self.hess_nnz());
        out.fill(0.0);
        let objective = self.blocks.iter().filter(|b| b.kind() == BlockKind::ObjectiveSum);
        for block in objective.chain(self.ordered_blocks()) {
            let ins = &block.block.instruction;
            let pairs = ins.hessian_template();
            if pairs.is_empty() {
                continue;
            }
            let data = &block.block.data;
            let s = ins.var_slots();
            let is_objective = block.kind() == BlockKind::ObjectiveSum;
            let targets = &block.block.targets;
            let local = map_records(block, pairs.len(), |w, r, out| {
                let weight = if is_objective { obj_weight * self.objective_sign } else { y[targets[r]] };
                if weight == 0.0 {
                    return;
                }
                w.load(x, data.vars(r));
                tape::hessian(ins, data.params(r), weight, w);
                for (o, &(a, b)) in out.iter_mut().zip(pairs) {
                    *o = w.hess[b * s + a];
                }
            });
            for (&(slot, mult), v) in block.hess_slots.iter().zip(local) {
                out[slot] += mult * v;
            }
        }
        check_finite(out, "hessian")
    }
}

/// Derivative storage sized for one model, reused across iterations.
#[derive(Clone, Debug)]
pub struct DerivativeBuffers {
    pub gradient: Vec<f64>,
    pub jacobian_values: Vec<f64>,
    pub hessian_values: Vec<f64>,
    pub constraint_values: Vec<f64>,
}

impl DerivativeBuffers {
    pub fn new(model: &CompiledModel) -> Self {
        DerivativeBuffers {
            gradient: vec![0.0; model.n_var],
            jacobian_values: vec![0.0; model.jac_nnz()],
            hessian_values: vec![0.0; model.hess_nnz()],
            constraint_values: vec![0.0; model.n_con],
        }
    }

    /// Fills constraints, gradient and Jacobian; returns the objective.
    pub fn evaluate_first_order(&mut self, model: &CompiledModel, x: &[f64]) -> Result<f64, EvalError> {
        let f = model.eval_objective(x)?;
        model.eval_constraints(x, &mut self.constraint_values)?;
        model.eval_gradient(x, &mut self.gradient)?;
        model.eval_jacobian(x, &mut self.jacobian_values)?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{param, var, DataArray, Model};

    fn quad_block(model: &mut Model, copies: usize) {
        for _ in 0..copies {
            let mut d = DataArray::new(1, 3);
            d.push(&[0], &[1.0, 2.0, 3.0]);
            model.add_objective(param(0) + param(1) * var(0) + param(2) * var(0).powi(2), d).unwrap();
        }
    }

    fn free_vars(model: &mut Model, n: usize) {
        let inf = f64::INFINITY;
        model.add_variables(n, &vec![-inf; n], &vec![inf; n], &vec![0.0; n]).unwrap();
    }

    #[test]
    fn objective_blocks_add_up() {
        let mut m = Model::new();
        free_vars(&mut m, 4);
        quad_block(&mut m, 1);
        let c = m.finalize().unwrap();
        assert_eq!(c.eval_objective(&[0.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(c.eval_objective(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 6.0);
        let mut g = vec![0.0; 4];
        c.eval_gradient(&[1.0, 0.0, 0.0, 0.0], &mut g).unwrap();
        assert_eq!(g, vec![8.0, 0.0, 0.0, 0.0]);

        let mut m = Model::new();
        free_vars(&mut m, 1);
        quad_block(&mut m, 2);
        m.add_objective(var(0), DataArray::new(1, 0)).unwrap();
        let c = m.finalize().unwrap();
        assert_eq!(c.eval_objective(&[1.0]).unwrap(), 12.0);
    }

    #[test]
    fn define_then_increment() {
        let mut m = Model::new();
        free_vars(&mut m, 2);
        let mut d = DataArray::new(2, 0);
        d.push(&[0, 1], &[]);
        m.add_constraints(var(0) - var(1), d).unwrap();
        let c = m.clone().finalize().unwrap();
        let mut g = vec![0.0];
        c.eval_constraints(&[2.0, 1.0], &mut g).unwrap();
        assert_eq!(g, vec![1.0]);
        let mut jac = vec![0.0; 2];
        c.eval_jacobian(&[2.0, 1.0], &mut jac).unwrap();
        assert_eq!(jac, vec![1.0, -1.0]);

        let mut inc = DataArray::new(1, 0);
        inc.push_to(0, &[1], &[]);
        m.add_constraint_increments(var(0), inc).unwrap();
        let c = m.finalize().unwrap();
        c.eval_constraints(&[2.0, 1.0], &mut g).unwrap();
        assert_eq!(g, vec![2.0]);
        c.eval_jacobian(&[2.0, 1.0], &mut jac).unwrap();
        assert_eq!(jac, vec![1.0, 0.0]);
    }

    #[test]
    fn increments_accumulate() {
        let mut m = Model::new();
        free_vars(&mut m, 1);
        let mut d = DataArray::new(1, 0);
        for _ in 0..6 {
            d.push(&[0], &[]);
        }
        m.add_constraints(var(0) * 0.0, d).unwrap();
        let mut inc = DataArray::new(0, 1);
        inc.push_to(5, &[], &[1.5]);
        inc.push_to(5, &[], &[-0.5]);
        m.add_constraint_increments(param(0), inc).unwrap();
        let c = m.finalize().unwrap();
        let mut g = vec![0.0; 6];
        c.eval_constraints(&[0.3], &mut g).unwrap();
        assert_eq!(g[5], 1.0);
    }

    #[test]
    fn sin_constraint_at_zero() {
        let mut m = Model::new();
        free_vars(&mut m, 1);
        let mut d = DataArray::new(1, 0);
        d.push(&[0], &[]);
        m.add_constraints(var(0).sin(), d).unwrap();
        let c = m.finalize().unwrap();
        let mut g = vec![1.0];
        c.eval_constraints(&[0.0], &mut g).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn hessian_examples() {
        let mut m = Model::new();
        free_vars(&mut m, 2);
        let mut d = DataArray::new(1, 0);
        d.push(&[0], &[]);
        m.add_objective(var(0).powi(2), d).unwrap();
        let c = m.clone().finalize().unwrap();
        let mut h = vec![0.0; c.hess_nnz()];
        c.eval_lagrangian_hessian(&[0.4, 0.0], &[], 1.0, &mut h).unwrap();
        assert_eq!((c.hess_rows.clone(), c.hess_cols.clone(), h), (vec![0], vec![0], vec![2.0]));

        let mut d = DataArray::new(2, 0);
        d.push(&[0, 1], &[]);
        m.add_constraints(var(0) * var(1), d).unwrap();
        let c = m.finalize().unwrap();
        let mut h = vec![0.0; c.hess_nnz()];
        c.eval_lagrangian_hessian(&[0.4, 0.2], &[3.0], 0.0, &mut h).unwrap();
        let k = (0..c.hess_nnz()).find(|&k| c.hess_rows[k] == 1 && c.hess_cols[k] == 0).unwrap();
        assert_eq!(h[k], 3.0);
        assert_eq!(h.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn repeated_variable_in_record_doubles_cross_term() {
        // x0 * x1 with both slots bound to variable 0 is x0^2
        let mut m = Model::new();
        free_vars(&mut m, 1);
        let mut d = DataArray::new(2, 0);
        d.push(&[0, 0], &[]);
        m.add_objective(var(0) * var(1), d).unwrap();
        let c = m.finalize().unwrap();
        let mut h = vec![0.0; 1];
        c.eval_lagrangian_hessian(&[1.3], &[], 1.0, &mut h).unwrap();
        assert_eq!(h, vec![2.0]);
        let mut g = vec![0.0];
        c.eval_gradient(&[1.3], &mut g).unwrap();
        assert!((g[0] - 2.6).abs() < 1e-15);
    }

    #[test]
    fn nan_is_reported() {
        let mut m = Model::new();
        free_vars(&mut m, 1);
        let mut d = DataArray::new(1, 0);
        d.push(&[0], &[]);
        m.add_objective(var(0).ln(), d).unwrap();
        let c = m.finalize().unwrap();
        assert!(matches!(c.eval_objective(&[-1.0]), Err(EvalError::NonFiniteResult { what: "objective", .. })));
    }

    #[test]
    fn parallel_matches_sequential() {
        let n = PARALLEL_RECORDS + 17;
        let build = |records: usize| {
            let mut m = Model::new();
            free_vars(&mut m, 8);
            let mut d = DataArray::new(2, 1);
            for r in 0..records {
                d.push(&[r % 8, (r * 3 + 1) % 8], &[r as f64 * 0.01]);
            }
            m.add_objective(param(0) * (var(0) * var(1)).sin(), d).unwrap();
            m.finalize().unwrap()
        };
        let big = build(n);
        let x: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let mut h1 = vec![0.0; big.hess_nnz()];
        let mut h2 = vec![0.0; big.hess_nnz()];
        big.eval_lagrangian_hessian(&x, &[], 1.0, &mut h1).unwrap();
        big.eval_lagrangian_hessian(&x, &[], 1.0, &mut h2).unwrap();
        assert_eq!(h1, h2);
        // same records evaluated one block at a time below the threshold
        let mut m = Model::new();
        free_vars(&mut m, 8);
        for chunk in (0..n).collect::<Vec<_>>().chunks(1000) {
            let mut d = DataArray::new(2, 1);
            for &r in chunk {
                d.push(&[r % 8, (r * 3 + 1) % 8], &[r as f64 * 0.01]);
            }
            m.add_objective(param(0) * (var(0) * var(1)).sin(), d).unwrap();
        }
        let small = m.finalize().unwrap();
        let f1 = big.eval_objective(&x).unwrap();
        let f2 = small.eval_objective(&x).unwrap();
        assert_eq!(f1, f2);
    }
}
