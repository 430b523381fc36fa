//! Per-record kernels over a compiled instruction tape.
//!
//! Values go forward, adjoints go backward. Second derivatives use
//! forward-over-reverse: a tangent seeded at one variable slot is pushed
//! forward, then the reverse sweep carries (adjoint, adjoint-tangent) pairs,
//! which yields one Hessian column per seeded slot.

use crate::model::expr::{BinaryOp, UnaryOp};
use crate::model::instruction::{Instruction, Node};

#[derive(Clone, Copy, Debug, Default)]
struct Partials {
    fa: f64,
    fb: f64,
    faa: f64,
    fab: f64,
    fbb: f64,
}

/// Scratch space for one worker; sized on first use.
#[derive(Debug, Default)]
pub(crate) struct TapeWork {
    pub(crate) slots: Vec<f64>,
    val: Vec<f64>,
    partials: Vec<Partials>,
    adj: Vec<f64>,
    dot: Vec<f64>,
    adot: Vec<f64>,
    pub(crate) grad: Vec<f64>,
    pub(crate) hess: Vec<f64>,
}

impl TapeWork {
    pub(crate) fn prepare(&mut self, ins: &Instruction) {
        let n = ins.tape_len();
        let s = ins.var_slots();
        self.slots.resize(s, 0.0);
        self.val.resize(n, 0.0);
        self.partials.resize(n, Partials::default());
        self.adj.resize(n, 0.0);
        self.dot.resize(n, 0.0);
        self.adot.resize(n, 0.0);
        self.grad.resize(s, 0.0);
        self.hess.resize(s * s, 0.0);
    }

    /// Gathers the record's variable values into the slot buffer.
    pub(crate) fn load(&mut self, x: &[f64], vars: &[usize]) {
        for (slot, &v) in self.slots.iter_mut().zip(vars) {
            *slot = x[v];
        }
    }
}

/// Forward sweep; returns the instruction value. `work.slots` must be loaded.
pub(crate) fn forward(ins: &Instruction, params: &[f64], work: &mut TapeWork) -> f64 {
    let val = &mut work.val;
    for (i, node) in ins.nodes.iter().enumerate() {
        val[i] = match *node {
            Node::Var(k) => work.slots[k as usize],
            Node::Param(k) => params[k as usize],
            Node::Const(c) => c,
            Node::Unary(op, a) => {
                let a = val[a as usize];
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => a.ln(),
                    UnaryOp::Sqrt => a.sqrt(),
                }
            }
            Node::Binary(op, a, b) => {
                let (a, b) = (val[a as usize], val[b as usize]);
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                    BinaryOp::Pow => a.powf(b),
                }
            }
            Node::PowConst(a, b) => val[a as usize].powf(val[b as usize]),
            Node::Powi(a, n) => val[a as usize].powi(n),
        };
    }
    val[val.len() - 1]
}

/// Local first and second partials of every node, from forward values.
fn compute_partials(ins: &Instruction, work: &mut TapeWork) {
    let val = &work.val;
    for (i, node) in ins.nodes.iter().enumerate() {
        let v = val[i];
        work.partials[i] = match *node {
            Node::Var(_) | Node::Param(_) | Node::Const(_) => Partials::default(),
            Node::Unary(op, a) => {
                let a = val[a as usize];
                let (fa, faa) = match op {
                    UnaryOp::Neg => (-1.0, 0.0),
                    UnaryOp::Sin => (a.cos(), -v),
                    UnaryOp::Cos => (-a.sin(), -v),
                    UnaryOp::Exp => (v, v),
                    UnaryOp::Log => (1.0 / a, -1.0 / (a * a)),
                    UnaryOp::Sqrt => (0.5 / v, -0.25 / (a * v)),
                };
                Partials { fa, faa, ..Default::default() }
            }
            Node::Binary(op, a, b) => {
                let (a, b) = (val[a as usize], val[b as usize]);
                match op {
                    BinaryOp::Add => Partials { fa: 1.0, fb: 1.0, ..Default::default() },
                    BinaryOp::Sub => Partials { fa: 1.0, fb: -1.0, ..Default::default() },
                    BinaryOp::Mul => Partials { fa: b, fb: a, fab: 1.0, ..Default::default() },
                    BinaryOp::Div => {
                        let inv = 1.0 / b;
                        Partials {
                            fa: inv,
                            fb: -a * inv * inv,
                            faa: 0.0,
                            fab: -inv * inv,
                            fbb: 2.0 * a * inv * inv * inv,
                        }
                    }
                    BinaryOp::Pow => {
                        let ln = a.ln();
                        let am1 = a.powf(b - 1.0);
                        Partials {
                            fa: b * am1,
                            fb: v * ln,
                            faa: b * (b - 1.0) * a.powf(b - 2.0),
                            fab: am1 * (1.0 + b * ln),
                            fbb: v * ln * ln,
                        }
                    }
                }
            }
            Node::PowConst(a, b) => {
                let (a, b) = (val[a as usize], val[b as usize]);
                Partials { fa: b * a.powf(b - 1.0), faa: b * (b - 1.0) * a.powf(b - 2.0), ..Default::default() }
            }
            Node::Powi(a, n) => {
                let a = val[a as usize];
                let nf = n as f64;
                let (fa, faa) = match n {
                    0 => (0.0, 0.0),
                    1 => (1.0, 0.0),
                    2 => (2.0 * a, 2.0),
                    _ => (nf * a.powi(n - 1), nf * (nf - 1.0) * a.powi(n - 2)),
                };
                Partials { fa, faa, ..Default::default() }
            }
        };
    }
}

fn operands(node: &Node) -> (Option<usize>, Option<usize>) {
    match *node {
        Node::Var(_) | Node::Param(_) | Node::Const(_) => (None, None),
        Node::Unary(_, a) | Node::Powi(a, _) => (Some(a as usize), None),
        Node::PowConst(a, _) => (Some(a as usize), None),
        Node::Binary(_, a, b) => (Some(a as usize), Some(b as usize)),
    }
}

/// Value and weighted gradient w.r.t. the variable slots (into `work.grad`).
pub(crate) fn gradient(ins: &Instruction, params: &[f64], weight: f64, work: &mut TapeWork) -> f64 {
    let value = forward(ins, params, work);
    compute_partials(ins, work);
    reverse(ins, weight, work);
    value
}

fn reverse(ins: &Instruction, weight: f64, work: &mut TapeWork) {
    let n = ins.tape_len();
    work.adj[..n].fill(0.0);
    work.grad.fill(0.0);
    work.adj[n - 1] = weight;
    for i in (0..n).rev() {
        let adj = work.adj[i];
        if adj == 0.0 {
            continue;
        }
        let node = &ins.nodes[i];
        if let Node::Var(k) = *node {
            work.grad[k as usize] += adj;
            continue;
        }
        let p = work.partials[i];
        let (a, b) = operands(node);
        if let Some(a) = a {
            work.adj[a] += adj * p.fa;
        }
        if let Some(b) = b {
            work.adj[b] += adj * p.fb;
        }
    }
}

/// Weighted dense slot Hessian (into `work.hess`, column-major `s x s`) for
/// the seeded slots; unseeded columns are left at zero.
pub(crate) fn hessian(ins: &Instruction, params: &[f64], weight: f64, work: &mut TapeWork) {
    let s = ins.var_slots();
    work.hess.fill(0.0);
    forward(ins, params, work);
    compute_partials(ins, work);
    let n = ins.tape_len();
    for &seed in ins.hessian_seeds() {
        // tangent sweep
        for i in 0..n {
            let node = &ins.nodes[i];
            work.dot[i] = match *node {
                Node::Var(k) => (k as usize == seed) as u8 as f64,
                Node::Param(_) | Node::Const(_) => 0.0,
                _ => {
                    let p = work.partials[i];
                    let (a, b) = operands(node);
                    let mut d = 0.0;
                    if let Some(a) = a {
                        d += p.fa * work.dot[a];
                    }
                    if let Some(b) = b {
                        d += p.fb * work.dot[b];
                    }
                    d
                }
            };
        }
        work.adj[..n].fill(0.0);
        work.adot[..n].fill(0.0);
        work.adj[n - 1] = weight;
        let col = &mut work.hess[seed * s..(seed + 1) * s];
        for i in (0..n).rev() {
            let (adj, adot) = (work.adj[i], work.adot[i]);
            if adj == 0.0 && adot == 0.0 {
                continue;
            }
            let node = &ins.nodes[i];
            if let Node::Var(k) = *node {
                col[k as usize] += adot;
                continue;
            }
            let p = work.partials[i];
            let (a, b) = operands(node);
            let da = a.map_or(0.0, |a| work.dot[a]);
            let db = b.map_or(0.0, |b| work.dot[b]);
            if let Some(a) = a {
                work.adj[a] += adj * p.fa;
                work.adot[a] += adot * p.fa + adj * (p.faa * da + p.fab * db);
            }
            if let Some(b) = b {
                work.adj[b] += adj * p.fb;
                work.adot[b] += adot * p.fb + adj * (p.fab * da + p.fbb * db);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expr::{param, var, Expr};

    fn grad_of(e: Expr, x: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
        let ins = Instruction::compile(e).unwrap();
        let mut w = TapeWork::default();
        w.prepare(&ins);
        w.slots.copy_from_slice(x);
        let v = gradient(&ins, p, 1.0, &mut w);
        (v, w.grad.clone())
    }

    fn hess_of(e: Expr, x: &[f64], p: &[f64]) -> Vec<f64> {
        let ins = Instruction::compile(e).unwrap();
        let mut w = TapeWork::default();
        w.prepare(&ins);
        w.slots.copy_from_slice(x);
        hessian(&ins, p, 1.0, &mut w);
        w.hess.clone()
    }

    #[test]
    fn quadratic_cost() {
        let e = param(0) + param(1) * var(0) + param(2) * var(0).powi(2);
        let (v, g) = grad_of(e.clone(), &[1.0], &[1.0, 2.0, 3.0]);
        assert_eq!(v, 6.0);
        assert_eq!(g, vec![8.0]);
        assert_eq!(hess_of(e, &[1.0], &[1.0, 2.0, 3.0]), vec![6.0]);
    }

    #[test]
    fn product_hessian() {
        let h = hess_of(var(0) * var(1), &[2.0, 3.0], &[]);
        assert_eq!(h, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn trig_product_matches_hand_derivatives() {
        // f = x0 * x1 * sin(x0 - x1)
        let e = var(0) * var(1) * (var(0) - var(1)).sin();
        let (a, b): (f64, f64) = (0.7, -0.3);
        let (s, c) = ((a - b).sin(), (a - b).cos());
        let (_, g) = grad_of(e.clone(), &[a, b], &[]);
        assert!((g[0] - (b * s + a * b * c)).abs() < 1e-14);
        assert!((g[1] - (a * s - a * b * c)).abs() < 1e-14);
        let h = hess_of(e, &[a, b], &[]);
        let h00 = 2.0 * b * c - a * b * s;
        let h01 = s - b * c + a * c + a * b * s;
        let h11 = -2.0 * a * c - a * b * s;
        assert!((h[0] - h00).abs() < 1e-14);
        assert!((h[1] - h01).abs() < 1e-14);
        assert!((h[2] - h01).abs() < 1e-14);
        assert!((h[3] - h11).abs() < 1e-14);
    }

    #[test]
    fn division_and_pow() {
        let e = var(0) / var(1) + var(0).powf(var(1));
        let (x, y) = (1.5, 2.5);
        let (_, g) = grad_of(e.clone(), &[x, y], &[]);
        assert!((g[0] - (1.0 / y + y * x.powf(y - 1.0))).abs() < 1e-13);
        assert!((g[1] - (-x / (y * y) + x.powf(y) * x.ln())).abs() < 1e-13);
        let h = hess_of(e, &[x, y], &[]);
        let h01 = -1.0 / (y * y) + x.powf(y - 1.0) * (1.0 + y * x.ln());
        assert!((h[1] - h01).abs() < 1e-13);
        assert!((h[2] - h01).abs() < 1e-13);
    }
}
