//! Nonlinear programs in pattern-block form.
//!
//! A model is a flat vector of bounded variables plus a list of pattern
//! blocks. Each block pairs one compiled [`Instruction`] with a
//! [`DataArray`] of records; the instruction is applied to every record.
//!
//! * [`BlockKind::ObjectiveSum`]: objective `+= sum_r instr(x; r)`.
//! * [`BlockKind::ConstraintDefine`]: one fresh constraint per record, `c[k_r] = instr(x; r)`.
//! * [`BlockKind::ConstraintIncrement`]: `c[target_r] += instr(x; r)`, targets may repeat.
//!
//! Every constraint reads `c(x) = 0`, or `lower <= c(x) <= upper` for rows added
//! through [`Model::add_range_constraints`].

pub mod expr;
pub mod instruction;

use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;

pub use expr::{constant, param, var, Expr};
pub use instruction::Instruction;

/// Push-inside fraction for start points.
pub const PUSH_INSIDE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid bounds at entry {index}: lower {lower} > upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },
    #[error("array length {got} does not match count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range (n_var = {n_var})")]
    IndexOutOfRange { index: usize, n_var: usize },
    #[error("constraint {target} was never allocated (n_con = {n_con})")]
    UnknownConstraint { target: usize, n_con: usize },
    #[error("instruction uses {0} variable slots, more than supported")]
    TooManySlots(usize),
    #[error("instruction needs {needed} {what} slots, data records carry {available}")]
    SlotMismatch { what: &'static str, needed: usize, available: usize },
    #[error("increment data must carry a target constraint for every record")]
    MissingTargets,
    #[error("model has no variables")]
    NoVariables,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    ObjectiveSum,
    ConstraintDefine,
    ConstraintIncrement,
}

/// Contiguous run of variables in the flat variable vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariableBlock {
    pub offset: usize,
    pub count: usize,
}

impl VariableBlock {
    pub fn index(&self, i: usize) -> usize {
        assert!(i < self.count, "index {i} outside block of {}", self.count);
        self.offset + i
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.count
    }
}

/// Records of a pattern block, stored structure-of-arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DataArray {
    var_width: usize,
    param_width: usize,
    vars: Vec<usize>,
    params: Vec<f64>,
    targets: Vec<usize>,
    len: usize,
}

impl DataArray {
    pub fn new(var_width: usize, param_width: usize) -> Self {
        DataArray { var_width, param_width, ..Default::default() }
    }

    pub fn with_capacity(var_width: usize, param_width: usize, records: usize) -> Self {
        DataArray {
            var_width,
            param_width,
            vars: Vec::with_capacity(records * var_width),
            params: Vec::with_capacity(records * param_width),
            targets: Vec::new(),
            len: 0,
        }
    }

    pub fn push(&mut self, vars: &[usize], params: &[f64]) {
        assert_eq!(vars.len(), self.var_width, "record variable width");
        assert_eq!(params.len(), self.param_width, "record parameter width");
        self.vars.extend_from_slice(vars);
        self.params.extend_from_slice(params);
        self.len += 1;
    }

    /// Record that increments constraint `target`.
    pub fn push_to(&mut self, target: usize, vars: &[usize], params: &[f64]) {
        assert_eq!(self.targets.len(), self.len, "mixing targeted and untargeted records");
        self.push(vars, params);
        self.targets.push(target);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn var_width(&self) -> usize {
        self.var_width
    }

    pub fn param_width(&self) -> usize {
        self.param_width
    }

    pub fn vars(&self, r: usize) -> &[usize] {
        &self.vars[r * self.var_width..(r + 1) * self.var_width]
    }

    pub fn params(&self, r: usize) -> &[f64] {
        &self.params[r * self.param_width..(r + 1) * self.param_width]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Reorders records; `order[k]` is the old index of the new k-th record.
    pub fn permuted(&self, order: &[usize]) -> DataArray {
        assert_eq!(order.len(), self.len);
        let mut out = DataArray::with_capacity(self.var_width, self.param_width, self.len);
        for &r in order {
            if self.targets.is_empty() {
                out.push(self.vars(r), self.params(r));
            } else {
                out.push_to(self.targets[r], self.vars(r), self.params(r));
            }
        }
        out
    }
}

/// One (instruction, data) pair.
#[derive(Clone, Debug)]
pub struct PatternBlock {
    pub kind: BlockKind,
    pub instruction: Arc<Instruction>,
    pub data: DataArray,
    /// Constraint index written by each record; empty for objective blocks.
    pub targets: Vec<usize>,
}

/// Incremental model builder.
#[derive(Clone, Debug, Default)]
pub struct Model {
    blocks: Vec<PatternBlock>,
    var_blocks: Vec<VariableBlock>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    start: Vec<f64>,
    con_lower: Vec<f64>,
    con_upper: Vec<f64>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_var(&self) -> usize {
        self.lower.len()
    }

    pub fn n_con(&self) -> usize {
        self.con_lower.len()
    }

    pub fn blocks(&self) -> &[PatternBlock] {
        &self.blocks
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    /// Appends `count` variables. Starts are clamped into the bounds and, for
    /// two-sided bounds, pushed inside by `PUSH_INSIDE * max(1, |bound|)`
    /// (capped at the same fraction of the bound width).
    pub fn add_variables(
        &mut self,
        count: usize,
        lower: &[f64],
        upper: &[f64],
        start: &[f64],
    ) -> Result<VariableBlock, ModelError> {
        for len in [lower.len(), upper.len(), start.len()] {
            if len != count {
                return Err(ModelError::LengthMismatch { expected: count, got: len });
            }
        }
        for i in 0..count {
            if !(lower[i] <= upper[i]) {
                return Err(ModelError::InvalidBounds { index: i, lower: lower[i], upper: upper[i] });
            }
        }
        let block = VariableBlock { offset: self.n_var(), count };
        for i in 0..count {
            let (l, u) = (lower[i], upper[i]);
            let mut x = start[i].clamp(l, u);
            if l.is_finite() && u.is_finite() {
                let width = PUSH_INSIDE * (u - l);
                let lo = l + (PUSH_INSIDE * l.abs().max(1.0)).min(width);
                let hi = u - (PUSH_INSIDE * u.abs().max(1.0)).min(width);
                x = x.clamp(lo, hi);
            }
            self.lower.push(l);
            self.upper.push(u);
            self.start.push(x);
        }
        self.var_blocks.push(block);
        Ok(block)
    }

    pub fn add_objective(&mut self, instruction: impl IntoInstruction, data: DataArray) -> Result<(), ModelError> {
        let instruction = instruction.into_instruction()?;
        self.check_data(&instruction, &data)?;
        self.blocks.push(PatternBlock { kind: BlockKind::ObjectiveSum, instruction, data, targets: Vec::new() });
        Ok(())
    }

    /// One equality constraint `instr(x; r) = 0` per record.
    pub fn add_constraints(
        &mut self,
        instruction: impl IntoInstruction,
        data: DataArray,
    ) -> Result<Range<usize>, ModelError> {
        let n = data.len();
        self.add_range_constraints(instruction, data, &vec![0.0; n], &vec![0.0; n])
    }

    /// One constraint `lower_r <= instr(x; r) <= upper_r` per record.
    pub fn add_range_constraints(
        &mut self,
        instruction: impl IntoInstruction,
        data: DataArray,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Range<usize>, ModelError> {
        let instruction = instruction.into_instruction()?;
        self.check_data(&instruction, &data)?;
        let n = data.len();
        for len in [lower.len(), upper.len()] {
            if len != n {
                return Err(ModelError::LengthMismatch { expected: n, got: len });
            }
        }
        for i in 0..n {
            if !(lower[i] <= upper[i]) || (lower[i].is_infinite() && upper[i].is_infinite()) {
                return Err(ModelError::InvalidBounds { index: i, lower: lower[i], upper: upper[i] });
            }
        }
        let start = self.n_con();
        self.con_lower.extend_from_slice(lower);
        self.con_upper.extend_from_slice(upper);
        self.blocks.push(PatternBlock {
            kind: BlockKind::ConstraintDefine,
            instruction,
            data,
            targets: (start..start + n).collect(),
        });
        Ok(start..start + n)
    }

    pub fn add_constraint_increments(
        &mut self,
        instruction: impl IntoInstruction,
        data: DataArray,
    ) -> Result<(), ModelError> {
        let instruction = instruction.into_instruction()?;
        self.check_data(&instruction, &data)?;
        if data.targets().len() != data.len() {
            return Err(ModelError::MissingTargets);
        }
        let n_con = self.n_con();
        if let Some(&target) = data.targets().iter().find(|&&t| t >= n_con) {
            return Err(ModelError::UnknownConstraint { target, n_con });
        }
        self.blocks.push(PatternBlock {
            kind: BlockKind::ConstraintIncrement,
            instruction,
            targets: data.targets().to_vec(),
            data,
        });
        Ok(())
    }

    fn check_data(&self, instruction: &Instruction, data: &DataArray) -> Result<(), ModelError> {
        if instruction.var_slots() > data.var_width() {
            return Err(ModelError::SlotMismatch {
                what: "variable",
                needed: instruction.var_slots(),
                available: data.var_width(),
            });
        }
        if instruction.param_slots() > data.param_width() {
            return Err(ModelError::SlotMismatch {
                what: "parameter",
                needed: instruction.param_slots(),
                available: data.param_width(),
            });
        }
        let n_var = self.n_var();
        if let Some(&index) = data.vars.iter().find(|&&v| v >= n_var) {
            return Err(ModelError::IndexOutOfRange { index, n_var });
        }
        Ok(())
    }

    /// Sparsity analysis and slot-map construction. The model itself is left
    /// untouched, so finalizing twice gives identical results.
    pub fn finalize(&self) -> Result<CompiledModel, ModelError> {
        if self.n_var() == 0 {
            return Err(ModelError::NoVariables);
        }
        // Materialize every block's templates over its records.
        let mut jac_coords: Vec<(usize, usize)> = Vec::new();
        let mut hess_coords: Vec<(usize, usize)> = Vec::new();
        for block in &self.blocks {
            let ins = &block.instruction;
            for r in 0..block.data.len() {
                let vars = block.data.vars(r);
                if block.kind != BlockKind::ObjectiveSum {
                    for &a in ins.gradient_template() {
                        jac_coords.push((block.targets[r], vars[a]));
                    }
                }
                for &(a, b) in ins.hessian_template() {
                    let (i, j) = (vars[a], vars[b]);
                    hess_coords.push((i.max(j), i.min(j)));
                }
            }
        }
        jac_coords.sort_unstable();
        jac_coords.dedup();
        hess_coords.sort_unstable();
        hess_coords.dedup();

        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let ins = &block.instruction;
            let mut jac_slots = Vec::new();
            let mut hess_slots = Vec::with_capacity(block.data.len() * ins.hessian_template().len());
            for r in 0..block.data.len() {
                let vars = block.data.vars(r);
                if block.kind != BlockKind::ObjectiveSum {
                    for &a in ins.gradient_template() {
                        let key = (block.targets[r], vars[a]);
                        jac_slots.push(jac_coords.binary_search(&key).expect("jacobian coordinate"));
                    }
                }
                for &(a, b) in ins.hessian_template() {
                    let (i, j) = (vars[a], vars[b]);
                    let key = (i.max(j), i.min(j));
                    let slot = hess_coords.binary_search(&key).expect("hessian coordinate");
                    // Two distinct slots bound to one variable land on the
                    // diagonal from both (a, b) and (b, a).
                    let mult = if a != b && i == j { 2.0 } else { 1.0 };
                    hess_slots.push((slot, mult));
                }
            }
            blocks.push(CompiledBlock { block: block.clone(), jac_slots, hess_slots });
        }

        let (jac_rows, jac_cols) = jac_coords.into_iter().unzip();
        let (hess_rows, hess_cols) = hess_coords.into_iter().unzip();
        Ok(CompiledModel {
            n_var: self.n_var(),
            n_con: self.n_con(),
            var_blocks: self.var_blocks.clone(),
            blocks,
            var_lower: self.lower.clone(),
            var_upper: self.upper.clone(),
            start: self.start.clone(),
            con_lower: self.con_lower.clone(),
            con_upper: self.con_upper.clone(),
            jac_rows,
            jac_cols,
            hess_rows,
            hess_cols,
            objective_sign: 1.0,
        })
    }
}

/// Accepts either an expression (compiled on the spot) or a shared compiled instruction.
pub trait IntoInstruction {
    fn into_instruction(self) -> Result<Arc<Instruction>, ModelError>;
}

impl IntoInstruction for Expr {
    fn into_instruction(self) -> Result<Arc<Instruction>, ModelError> {
        Instruction::compile(self).map(Arc::new)
    }
}

impl IntoInstruction for Instruction {
    fn into_instruction(self) -> Result<Arc<Instruction>, ModelError> {
        Ok(Arc::new(self))
    }
}

impl IntoInstruction for Arc<Instruction> {
    fn into_instruction(self) -> Result<Arc<Instruction>, ModelError> {
        Ok(self)
    }
}

#[derive(Clone, Debug)]
pub struct CompiledBlock {
    pub block: PatternBlock,
    /// Per record, the Jacobian storage slot of each gradient-template entry.
    pub(crate) jac_slots: Vec<usize>,
    /// Per record, the Hessian storage slot (and multiplicity) of each template pair.
    pub(crate) hess_slots: Vec<(usize, f64)>,
}

impl CompiledBlock {
    pub fn kind(&self) -> BlockKind {
        self.block.kind
    }

    pub fn len(&self) -> usize {
        self.block.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block.data.is_empty()
    }
}

/// Finalized model; immutable and shareable across threads.
#[derive(Clone, Debug)]
pub struct CompiledModel {
    pub n_var: usize,
    pub n_con: usize,
    pub var_blocks: Vec<VariableBlock>,
    pub blocks: Vec<CompiledBlock>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub start: Vec<f64>,
    /// Constraint ranges; equality rows have `lower == upper`.
    pub con_lower: Vec<f64>,
    pub con_upper: Vec<f64>,
    pub jac_rows: Vec<usize>,
    pub jac_cols: Vec<usize>,
    /// Lower triangle: `hess_rows[k] >= hess_cols[k]`.
    pub hess_rows: Vec<usize>,
    pub hess_cols: Vec<usize>,
    pub objective_sign: f64,
}

impl CompiledModel {
    pub fn jac_nnz(&self) -> usize {
        self.jac_rows.len()
    }

    pub fn hess_nnz(&self) -> usize {
        self.hess_rows.len()
    }

    pub fn is_equality(&self, row: usize) -> bool {
        self.con_lower[row] == self.con_upper[row]
    }

    /// Number of pattern blocks, counting empty ones.
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }
}
