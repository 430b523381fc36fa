//! Instructions compiled once per pattern block.
//!
//! Compilation flattens the expression tree into a tape in evaluation order
//! and runs the sparsity analysis on the slot level: which variable slots
//! reach the output (gradient template) and which slot pairs interact
//! nonlinearly (Hessian template). The templates are later materialized
//! over every record of the data array.

use std::collections::BTreeSet;

use super::expr::{BinaryOp, Expr, UnaryOp};
use super::ModelError;

/// Upper bound on variable slots per instruction; dependency sets are `u64` masks.
pub const MAX_VAR_SLOTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Node {
    Var(u32),
    Param(u32),
    Const(f64),
    Unary(UnaryOp, u32),
    Binary(BinaryOp, u32, u32),
    /// `base ^ exponent` where the exponent subtree has no variable dependence.
    PowConst(u32, u32),
    Powi(u32, i32),
}

#[derive(Clone, Debug)]
pub struct Instruction {
    expr: Expr,
    pub(crate) nodes: Vec<Node>,
    n_var_slots: usize,
    n_param_slots: usize,
    grad_slots: Vec<usize>,
    hess_pairs: Vec<(usize, usize)>,
    hess_seeds: Vec<usize>,
}

impl Instruction {
    pub fn compile(expr: Expr) -> Result<Self, ModelError> {
        let n_var_slots = expr.var_slots();
        if n_var_slots > MAX_VAR_SLOTS {
            return Err(ModelError::TooManySlots(n_var_slots));
        }
        let mut nodes = Vec::new();
        push_nodes(&expr, &mut nodes);

        let mut deps: Vec<u64> = Vec::with_capacity(nodes.len());
        let mut hess: Vec<BTreeSet<(usize, usize)>> = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let (d, h) = match *node {
                Node::Var(k) => (1u64 << k, BTreeSet::new()),
                Node::Param(_) | Node::Const(_) => (0, BTreeSet::new()),
                Node::Unary(UnaryOp::Neg, a) => (deps[a as usize], hess[a as usize].clone()),
                Node::Unary(_, a) => {
                    let mut h = hess[a as usize].clone();
                    cross(&mut h, deps[a as usize], deps[a as usize]);
                    (deps[a as usize], h)
                }
                Node::Powi(a, n) => {
                    if n == 0 {
                        (0, BTreeSet::new())
                    } else {
                        let mut h = hess[a as usize].clone();
                        if n != 1 {
                            cross(&mut h, deps[a as usize], deps[a as usize]);
                        }
                        (deps[a as usize], h)
                    }
                }
                Node::PowConst(a, _) => {
                    let mut h = hess[a as usize].clone();
                    cross(&mut h, deps[a as usize], deps[a as usize]);
                    (deps[a as usize], h)
                }
                Node::Binary(op, a, b) => {
                    let (da, db) = (deps[a as usize], deps[b as usize]);
                    let mut h = hess[a as usize].clone();
                    h.extend(hess[b as usize].iter().copied());
                    match op {
                        BinaryOp::Add | BinaryOp::Sub => {}
                        BinaryOp::Mul => cross(&mut h, da, db),
                        BinaryOp::Div => {
                            cross(&mut h, da, db);
                            cross(&mut h, db, db);
                        }
                        BinaryOp::Pow => cross(&mut h, da | db, da | db),
                    }
                    (da | db, h)
                }
            };
            deps.push(d);
            hess.push(h);
        }
        let root = nodes.len() - 1;
        let grad_slots: Vec<usize> = (0..n_var_slots).filter(|k| deps[root] >> k & 1 == 1).collect();
        let hess_pairs: Vec<(usize, usize)> = hess[root].iter().copied().collect();
        let seeds: BTreeSet<usize> = hess_pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        Ok(Instruction {
            n_param_slots: expr.param_slots(),
            expr,
            nodes,
            n_var_slots,
            grad_slots,
            hess_pairs,
            hess_seeds: seeds.into_iter().collect(),
        })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn var_slots(&self) -> usize {
        self.n_var_slots
    }

    pub fn param_slots(&self) -> usize {
        self.n_param_slots
    }

    /// Variable slots with a structurally nonzero first derivative, ascending.
    pub fn gradient_template(&self) -> &[usize] {
        &self.grad_slots
    }

    /// Slot pairs `(a, b)` with `a >= b` whose second derivative is structurally nonzero.
    pub fn hessian_template(&self) -> &[(usize, usize)] {
        &self.hess_pairs
    }

    /// Slots that need a forward-over-reverse sweep to fill the Hessian template.
    pub(crate) fn hessian_seeds(&self) -> &[usize] {
        &self.hess_seeds
    }

    pub fn tape_len(&self) -> usize {
        self.nodes.len()
    }
}

impl TryFrom<Expr> for Instruction {
    type Error = ModelError;
    fn try_from(expr: Expr) -> Result<Self, ModelError> {
        Instruction::compile(expr)
    }
}

fn cross(h: &mut BTreeSet<(usize, usize)>, a: u64, b: u64) {
    if a == 0 || b == 0 {
        return;
    }
    for i in 0..MAX_VAR_SLOTS {
        if a >> i & 1 == 0 {
            continue;
        }
        for j in 0..MAX_VAR_SLOTS {
            if b >> j & 1 == 1 {
                h.insert((i.max(j), i.min(j)));
            }
        }
    }
}

fn push_nodes(expr: &Expr, nodes: &mut Vec<Node>) -> u32 {
    let node = match expr {
        Expr::Var(k) => Node::Var(*k as u32),
        Expr::Param(k) => Node::Param(*k as u32),
        Expr::Const(c) => Node::Const(*c),
        Expr::Unary(op, a) => {
            let a = push_nodes(a, nodes);
            Node::Unary(*op, a)
        }
        Expr::Powi(a, n) => {
            let a = push_nodes(a, nodes);
            Node::Powi(a, *n)
        }
        Expr::Binary(BinaryOp::Pow, a, b) if b.is_constant() => {
            let a = push_nodes(a, nodes);
            let b = push_nodes(b, nodes);
            Node::PowConst(a, b)
        }
        Expr::Binary(op, a, b) => {
            let a = push_nodes(a, nodes);
            let b = push_nodes(b, nodes);
            Node::Binary(*op, a, b)
        }
    };
    nodes.push(node);
    (nodes.len() - 1) as u32
}
