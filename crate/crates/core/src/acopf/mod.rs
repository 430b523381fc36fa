//! AC optimal power flow in polar form.
//!
//! [`parse_matpower`] reads a MATPOWER case into per-unit [`NetworkData`];
//! [`build_acopf`] instantiates the problem as fifteen pattern blocks:
//!
//! | block | kind | content |
//! |---|---|---|
//! | 1 | objective | `c2·pg² + c1·pg + c0` per generator |
//! | 2 | define | `va_ref = 0` |
//! | 3–6 | define | `p_f`, `q_f`, `p_t`, `q_t` minus the branch flow expression |
//! | 7 | define | `angmin ≤ va_f − va_t ≤ angmax` |
//! | 8–9 | define | `p² + q² − rate² ≤ 0` on both ends |
//! | 10–11 | define | `−Pd − Gs·vm²`, `−Qd + Bs·vm²` per bus |
//! | 12–13 | increment | `+pg`, `+qg` into the bus balance rows |
//! | 14–15 | increment | `−p`, `−q` of every arc into its bus balance row |

mod parse;

use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::model::{param, var, CompiledModel, DataArray, Model, ModelError, VariableBlock};

pub use parse::parse_matpower;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("line {line}, column {col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("unsupported cost at line {line}: {reason}")]
    UnsupportedCost { line: usize, reason: String },
    #[error("missing table mpc.{0}")]
    MissingTable(&'static str),
    #[error("multiple reference buses: {0:?}")]
    MultipleRefBuses(Vec<usize>),
    #[error("no reference bus")]
    NoRefBus,
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
}

/// Bus record, powers in per-unit and angles in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusType,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
    pub va: f64,
    pub vmax: f64,
    pub vmin: f64,
}

/// Generator record; `bus` is an index into [`NetworkData::buses`].
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub pmax: f64,
    pub pmin: f64,
    pub status: bool,
}

/// Cost `c2·pg² + c1·pg + c0` with `pg` in per-unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenCost {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl GenCost {
    pub fn eval(&self, pg: f64) -> f64 {
        self.c0 + self.c1 * pg + self.c2 * pg * pg
    }
}

/// Branch record; endpoints are bus indices. `rate_a == 0` means unlimited.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    pub rate_a: f64,
    pub tap: f64,
    pub shift: f64,
    pub angmin: f64,
    pub angmax: f64,
    pub status: bool,
}

/// Coefficients of the flow expressions
/// `P = cp·v1² + cc·v1·v2·cos(θ1 − θ2) + cs·v1·v2·sin(θ1 − θ2)`, same shape for `Q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowCoefficients {
    pub p_from: [f64; 3],
    pub q_from: [f64; 3],
    pub p_to: [f64; 3],
    pub q_to: [f64; 3],
}

impl Branch {
    pub fn flow_coefficients(&self) -> FlowCoefficients {
        let den = self.r * self.r + self.x * self.x;
        let (g, b) = (self.r / den, -self.x / den);
        let (tr, ti) = (self.tap * self.shift.cos(), self.tap * self.shift.sin());
        let ttm = self.tap * self.tap;
        let b_sh = self.b / 2.0;
        FlowCoefficients {
            p_from: [g / ttm, (-g * tr + b * ti) / ttm, (-b * tr - g * ti) / ttm],
            q_from: [-(b + b_sh) / ttm, (b * tr + g * ti) / ttm, (-g * tr + b * ti) / ttm],
            p_to: [g, (-g * tr - b * ti) / ttm, (-b * tr + g * ti) / ttm],
            q_to: [-(b + b_sh), (b * tr - g * ti) / ttm, (-g * tr - b * ti) / ttm],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkData {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub costs: Vec<GenCost>,
    pub branches: Vec<Branch>,
}

impl NetworkData {
    pub fn reference_bus(&self) -> usize {
        self.buses.iter().position(|b| b.kind == BusType::Ref).expect("validated at parse time")
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.buses.len(), self.generators.len(), self.branches.len())
    }
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkData, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CaseError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_matpower(&text)
}

/// Where each variable group and constraint group landed in the model.
#[derive(Clone, Debug, PartialEq)]
pub struct AcopfIndex {
    pub va: VariableBlock,
    pub vm: VariableBlock,
    pub pg: VariableBlock,
    pub qg: VariableBlock,
    /// From-side arcs at `0..nbr`, to-side arcs at `nbr..2·nbr`.
    pub p: VariableBlock,
    pub q: VariableBlock,
    pub ref_angle: Range<usize>,
    pub flow_p_from: Range<usize>,
    pub flow_q_from: Range<usize>,
    pub flow_p_to: Range<usize>,
    pub flow_q_to: Range<usize>,
    pub angle_diff: Range<usize>,
    pub angle_branches: Vec<usize>,
    pub thermal_from: Range<usize>,
    pub thermal_to: Range<usize>,
    pub thermal_branches: Vec<usize>,
    pub balance_p: Range<usize>,
    pub balance_q: Range<usize>,
}

pub struct AcopfModel {
    pub model: CompiledModel,
    pub index: AcopfIndex,
}

/// Builds the fifteen-block polar ACOPF.
pub fn build_acopf(data: &NetworkData) -> Result<AcopfModel, CaseError> {
    let (nb, ng, nl) = data.counts();
    let inf = f64::INFINITY;
    let mut m = Model::new();

    let va = m.add_variables(nb, &vec![-inf; nb], &vec![inf; nb], &vec![0.0; nb])?;
    let vmin: Vec<f64> = data.buses.iter().map(|b| b.vmin).collect();
    let vmax: Vec<f64> = data.buses.iter().map(|b| b.vmax).collect();
    let vm = m.add_variables(nb, &vmin, &vmax, &vec![1.0; nb])?;
    let gens = &data.generators;
    let pg = m.add_variables(
        ng,
        &gens.iter().map(|g| g.pmin).collect::<Vec<_>>(),
        &gens.iter().map(|g| g.pmax).collect::<Vec<_>>(),
        &vec![0.0; ng],
    )?;
    let qg = m.add_variables(
        ng,
        &gens.iter().map(|g| g.qmin).collect::<Vec<_>>(),
        &gens.iter().map(|g| g.qmax).collect::<Vec<_>>(),
        &vec![0.0; ng],
    )?;
    let rate: Vec<f64> = data
        .branches
        .iter()
        .map(|br| if br.rate_a > 0.0 { br.rate_a } else { inf })
        .chain(data.branches.iter().map(|br| if br.rate_a > 0.0 { br.rate_a } else { inf }))
        .collect();
    let neg_rate: Vec<f64> = rate.iter().map(|r| -r).collect();
    let p = m.add_variables(2 * nl, &neg_rate, &rate, &vec![0.0; 2 * nl])?;
    let q = m.add_variables(2 * nl, &neg_rate, &rate, &vec![0.0; 2 * nl])?;

    // (1) generation cost
    let mut cost = DataArray::with_capacity(1, 3, ng);
    for (k, c) in data.costs.iter().enumerate() {
        cost.push(&[pg.index(k)], &[c.c0, c.c1, c.c2]);
    }
    let x = var(0);
    m.add_objective(param(0) + param(1) * &x + param(2) * x.clone().powi(2), cost)?;

    // (2) reference angle
    let mut refs = DataArray::new(1, 0);
    refs.push(&[va.index(data.reference_bus())], &[]);
    let ref_angle = m.add_constraints(var(0), refs)?;

    // (3-6) flow definitions, vars [flow, v1, v2, θ1, θ2]
    let flow_expr = || {
        let (v1, v2) = (var(1), var(2));
        let d = var(3) - var(4);
        var(0)
            - (param(0) * v1.clone().powi(2) + param(1) * &v1 * &v2 * d.clone().cos() + param(2) * &v1 * &v2 * d.sin())
    };
    let coeffs: Vec<FlowCoefficients> = data.branches.iter().map(Branch::flow_coefficients).collect();
    let mut flow_rows = Vec::with_capacity(4);
    for side in 0..4 {
        let mut arr = DataArray::with_capacity(5, 3, nl);
        for (l, br) in data.branches.iter().enumerate() {
            let (flow, f, t, c) = match side {
                0 => (p.index(l), br.from, br.to, coeffs[l].p_from),
                1 => (q.index(l), br.from, br.to, coeffs[l].q_from),
                2 => (p.index(nl + l), br.to, br.from, coeffs[l].p_to),
                _ => (q.index(nl + l), br.to, br.from, coeffs[l].q_to),
            };
            arr.push(&[flow, vm.index(f), vm.index(t), va.index(f), va.index(t)], &c);
        }
        flow_rows.push(m.add_constraints(flow_expr(), arr)?);
    }

    // (7) angle differences, only where some limit is finite
    let angle_branches: Vec<usize> =
        (0..nl).filter(|&l| data.branches[l].angmin.is_finite() || data.branches[l].angmax.is_finite()).collect();
    let mut ang = DataArray::with_capacity(2, 0, angle_branches.len());
    for &l in &angle_branches {
        let br = &data.branches[l];
        ang.push(&[va.index(br.from), va.index(br.to)], &[]);
    }
    let lo: Vec<f64> = angle_branches.iter().map(|&l| data.branches[l].angmin).collect();
    let hi: Vec<f64> = angle_branches.iter().map(|&l| data.branches[l].angmax).collect();
    let angle_diff = m.add_range_constraints(var(0) - var(1), ang, &lo, &hi)?;

    // (8-9) thermal limits
    let thermal_branches: Vec<usize> = (0..nl).filter(|&l| data.branches[l].rate_a > 0.0).collect();
    let nt = thermal_branches.len();
    let mut thermal_rows = Vec::with_capacity(2);
    for offset in [0, nl] {
        let mut arr = DataArray::with_capacity(2, 1, nt);
        for &l in &thermal_branches {
            let r = data.branches[l].rate_a;
            arr.push(&[p.index(offset + l), q.index(offset + l)], &[r * r]);
        }
        let expr = var(0).powi(2) + var(1).powi(2) - param(0);
        thermal_rows.push(m.add_range_constraints(expr, arr, &vec![-inf; nt], &vec![0.0; nt])?);
    }

    // (10-11) balance rows seeded with load and shunt
    let mut bal_p = DataArray::with_capacity(1, 2, nb);
    let mut bal_q = DataArray::with_capacity(1, 2, nb);
    for (i, b) in data.buses.iter().enumerate() {
        bal_p.push(&[vm.index(i)], &[b.pd, b.gs]);
        bal_q.push(&[vm.index(i)], &[b.qd, b.bs]);
    }
    let balance_p = m.add_constraints(-param(0) - param(1) * var(0).powi(2), bal_p)?;
    let balance_q = m.add_constraints(-param(0) + param(1) * var(0).powi(2), bal_q)?;

    // (12-13) generator injections
    let mut inj_p = DataArray::with_capacity(1, 0, ng);
    let mut inj_q = DataArray::with_capacity(1, 0, ng);
    for (k, g) in gens.iter().enumerate() {
        inj_p.push_to(balance_p.start + g.bus, &[pg.index(k)], &[]);
        inj_q.push_to(balance_q.start + g.bus, &[qg.index(k)], &[]);
    }
    m.add_constraint_increments(var(0), inj_p)?;
    m.add_constraint_increments(var(0), inj_q)?;

    // (14-15) arc withdrawals
    let mut arc_p = DataArray::with_capacity(1, 0, 2 * nl);
    let mut arc_q = DataArray::with_capacity(1, 0, 2 * nl);
    for a in 0..2 * nl {
        let br = &data.branches[a % nl.max(1)];
        let bus = if a < nl { br.from } else { br.to };
        arc_p.push_to(balance_p.start + bus, &[p.index(a)], &[]);
        arc_q.push_to(balance_q.start + bus, &[q.index(a)], &[]);
    }
    m.add_constraint_increments(-var(0), arc_p)?;
    m.add_constraint_increments(-var(0), arc_q)?;

    let model = m.finalize()?;
    let mut flow_rows = flow_rows.into_iter();
    let mut thermal_rows = thermal_rows.into_iter();
    let index = AcopfIndex {
        va,
        vm,
        pg,
        qg,
        p,
        q,
        ref_angle,
        flow_p_from: flow_rows.next().unwrap(),
        flow_q_from: flow_rows.next().unwrap(),
        flow_p_to: flow_rows.next().unwrap(),
        flow_q_to: flow_rows.next().unwrap(),
        angle_diff,
        angle_branches,
        thermal_from: thermal_rows.next().unwrap(),
        thermal_to: thermal_rows.next().unwrap(),
        thermal_branches,
        balance_p,
        balance_q,
    };
    Ok(AcopfModel { model, index })
}
