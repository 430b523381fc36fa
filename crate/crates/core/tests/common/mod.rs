//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::PathBuf;

use condensed_opf::acopf::{AcopfModel, BusType, NetworkData};
use condensed_opf::kkt::{BoundPair, KktBackend, KktData, KktVector, KktWorkspace, RegularizationState};
use condensed_opf::model::CompiledModel;
use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn pglib(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/pglib").join(format!("pglib_opf_{name}.m"))
}

pub fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// A point strictly inside the variable box; free variables in `[-0.5, 0.5]`,
/// one-sided ones within a unit of their bound.
pub fn random_interior_point(model: &CompiledModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..model.n_var)
        .map(|j| {
            let (l, u) = (model.var_lower[j], model.var_upper[j]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) if u > l => l + (u - l) * rng.gen_range(0.05..0.95),
                (true, true) => l,
                (true, false) => l + rng.gen_range(0.05..1.0),
                (false, true) => u - rng.gen_range(0.05..1.0),
                (false, false) => rng.gen_range(-0.5..0.5),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AdErrors {
    pub gradient: f64,
    pub jacobian: f64,
    pub hessian: f64,
}

impl AdErrors {
    pub fn max(self, o: AdErrors) -> AdErrors {
        AdErrors {
            gradient: self.gradient.max(o.gradient),
            jacobian: self.jacobian.max(o.jacobian),
            hessian: self.hessian.max(o.hessian),
        }
    }
}

/// `∇f + Jᵀy` evaluated through the model.
fn lagrangian_gradient(model: &CompiledModel, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; model.n_var];
    model.eval_gradient(x, &mut g).unwrap();
    let mut jac = vec![0.0; model.jac_nnz()];
    model.eval_jacobian(x, &mut jac).unwrap();
    for k in 0..jac.len() {
        g[model.jac_cols[k]] += jac[k] * y[model.jac_rows[k]];
    }
    g
}

/// Largest relative error of the model's derivatives against central
/// differences: gradient and Jacobian from function values, Hessian from
/// differences of the Lagrangian gradient. Structurally absent entries must
/// also vanish in the finite-difference result.
pub fn ad_errors(model: &CompiledModel, x: &[f64], y: &[f64]) -> AdErrors {
    let (n, m) = (model.n_var, model.n_con);
    let mut grad = vec![0.0; n];
    model.eval_gradient(x, &mut grad).unwrap();
    let mut jac_vals = vec![0.0; model.jac_nnz()];
    model.eval_jacobian(x, &mut jac_vals).unwrap();
    let mut hess_vals = vec![0.0; model.hess_nnz()];
    model.eval_lagrangian_hessian(x, y, 1.0, &mut hess_vals).unwrap();

    let mut jac = DMatrix::zeros(m, n);
    for k in 0..jac_vals.len() {
        jac[(model.jac_rows[k], model.jac_cols[k])] += jac_vals[k];
    }
    let mut hess = DMatrix::zeros(n, n);
    for k in 0..hess_vals.len() {
        let (i, j) = (model.hess_rows[k], model.hess_cols[k]);
        hess[(i, j)] += hess_vals[k];
        if i != j {
            hess[(j, i)] += hess_vals[k];
        }
    }

    let mut err = AdErrors::default();
    let mut xp = x.to_vec();
    let (mut gp, mut gm) = (vec![0.0; m], vec![0.0; m]);
    for j in 0..n {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        let fp = model.eval_objective(&xp).unwrap();
        model.eval_constraints(&xp, &mut gp).unwrap();
        let lp = lagrangian_gradient(model, &xp, y);
        xp[j] = x[j] - h;
        let fm = model.eval_objective(&xp).unwrap();
        model.eval_constraints(&xp, &mut gm).unwrap();
        let lm = lagrangian_gradient(model, &xp, y);
        xp[j] = x[j];

        err.gradient = err.gradient.max(rel(grad[j], (fp - fm) / (2.0 * h)));
        for i in 0..m {
            err.jacobian = err.jacobian.max(rel(jac[(i, j)], (gp[i] - gm[i]) / (2.0 * h)));
        }
        for i in 0..n {
            err.hessian = err.hessian.max(rel(hess[(i, j)], (lp[i] - lm[i]) / (2.0 * h)));
        }
    }
    err
}

pub type Positions = BTreeSet<(usize, usize)>;

/// Nonzero positions found by dense central differences at each point.
pub fn fd_sparsity(model: &CompiledModel, points: &[Vec<f64>], y: &[f64]) -> (Positions, Positions) {
    let (n, m) = (model.n_var, model.n_con);
    let (mut jac, mut hess) = (BTreeSet::new(), BTreeSet::new());
    let (mut gp, mut gm) = (vec![0.0; m], vec![0.0; m]);
    for x in points {
        let mut xp = x.clone();
        for j in 0..n {
            let h = fd_step(x[j]);
            xp[j] = x[j] + h;
            model.eval_constraints(&xp, &mut gp).unwrap();
            let lp = lagrangian_gradient(model, &xp, y);
            xp[j] = x[j] - h;
            model.eval_constraints(&xp, &mut gm).unwrap();
            let lm = lagrangian_gradient(model, &xp, y);
            xp[j] = x[j];
            for i in 0..m {
                if ((gp[i] - gm[i]) / (2.0 * h)).abs() > 1e-10 {
                    jac.insert((i, j));
                }
            }
            for i in j..n {
                if ((lp[i] - lm[i]) / (2.0 * h)).abs() > 1e-10 {
                    hess.insert((i, j));
                }
            }
        }
    }
    (jac, hess)
}

/// Bus admittance data in MATPOWER's complex form.
struct Admittance {
    ybus: DMatrix<Complex<f64>>,
    /// Per branch: `(yff, yft, ytf, ytt)`.
    branch: Vec<[Complex<f64>; 4]>,
}

fn admittance(net: &NetworkData) -> Admittance {
    let nb = net.buses.len();
    let mut ybus = DMatrix::from_element(nb, nb, Complex::new(0.0, 0.0));
    let mut branch = Vec::new();
    for br in &net.branches {
        let ys = Complex::new(1.0, 0.0) / Complex::new(br.r, br.x);
        let ytt = ys + Complex::new(0.0, br.b / 2.0);
        let t = Complex::from_polar(br.tap, br.shift);
        let yff = ytt / (t * t.conj());
        let yft = -ys / t.conj();
        let ytf = -ys / t;
        ybus[(br.from, br.from)] += yff;
        ybus[(br.from, br.to)] += yft;
        ybus[(br.to, br.from)] += ytf;
        ybus[(br.to, br.to)] += ytt;
        branch.push([yff, yft, ytf, ytt]);
    }
    for (i, b) in net.buses.iter().enumerate() {
        ybus[(i, i)] += Complex::new(b.gs, b.bs);
    }
    Admittance { ybus, branch }
}

fn injections(y: &DMatrix<Complex<f64>>, va: &[f64], vm: &[f64]) -> Vec<Complex<f64>> {
    let v: Vec<Complex<f64>> = va.iter().zip(vm).map(|(&a, &m)| Complex::from_polar(m, a)).collect();
    let vv = DVector::from_vec(v.clone());
    let i = y * vv;
    v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
}

/// Newton power flow with a finite-difference Jacobian. PV and reference
/// buses hold their magnitudes, the reference angle is zero, generator
/// active power comes from the case. Returns `(va, vm)`.
pub fn newton_power_flow(net: &NetworkData) -> Option<(Vec<f64>, Vec<f64>)> {
    let nb = net.buses.len();
    let adm = admittance(net);
    let mut sched = vec![Complex::new(0.0, 0.0); nb];
    for (i, b) in net.buses.iter().enumerate() {
        sched[i] -= Complex::new(b.pd, b.qd);
    }
    for g in &net.generators {
        sched[g.bus] += Complex::new(g.pg, 0.0);
    }
    let angle_unknowns: Vec<usize> = (0..nb).filter(|&i| net.buses[i].kind != BusType::Ref).collect();
    let mag_unknowns: Vec<usize> = (0..nb).filter(|&i| net.buses[i].kind == BusType::Pq).collect();
    let mut va = vec![0.0; nb];
    let mut vm: Vec<f64> = net.buses.iter().map(|b| b.vm).collect();
    for &i in &mag_unknowns {
        vm[i] = 1.0;
    }
    let k = angle_unknowns.len() + mag_unknowns.len();
    let mismatch = |va: &[f64], vm: &[f64]| -> DVector<f64> {
        let s = injections(&adm.ybus, va, vm);
        let mut f = DVector::zeros(k);
        for (r, &i) in angle_unknowns.iter().enumerate() {
            f[r] = s[i].re - sched[i].re;
        }
        for (r, &i) in mag_unknowns.iter().enumerate() {
            f[angle_unknowns.len() + r] = s[i].im - sched[i].im;
        }
        f
    };
    let apply = |va: &mut Vec<f64>, vm: &mut Vec<f64>, d: &DVector<f64>, scale: f64| {
        for (r, &i) in angle_unknowns.iter().enumerate() {
            va[i] += scale * d[r];
        }
        for (r, &i) in mag_unknowns.iter().enumerate() {
            vm[i] += scale * d[angle_unknowns.len() + r];
        }
    };
    for _ in 0..50 {
        let f = mismatch(&va, &vm);
        if f.amax() < 1e-12 {
            return Some((va, vm));
        }
        let mut jac = DMatrix::zeros(k, k);
        for c in 0..k {
            let mut e = DVector::zeros(k);
            let h = 1e-7;
            e[c] = 1.0;
            let (mut a1, mut m1) = (va.clone(), vm.clone());
            apply(&mut a1, &mut m1, &e, h);
            let (mut a2, mut m2) = (va.clone(), vm.clone());
            apply(&mut a2, &mut m2, &e, -h);
            jac.set_column(c, &((mismatch(&a1, &m1) - mismatch(&a2, &m2)) / (2.0 * h)));
        }
        let d = jac.lu().solve(&(-f))?;
        apply(&mut va, &mut vm, &d, 1.0);
    }
    let f = mismatch(&va, &vm);
    (f.amax() < 1e-10).then_some((va, vm))
}

/// Full ACOPF variable vector at a power-flow solution: generator outputs
/// from the bus injections (split evenly per bus), flows from the complex
/// branch admittances.
pub fn power_flow_point(net: &NetworkData, acopf: &AcopfModel, va: &[f64], vm: &[f64]) -> Vec<f64> {
    let ix = &acopf.index;
    let adm = admittance(net);
    let s = injections(&adm.ybus, va, vm);
    let mut x = vec![0.0; acopf.model.n_var];
    for i in 0..net.buses.len() {
        x[ix.va.index(i)] = va[i];
        x[ix.vm.index(i)] = vm[i];
    }
    let mut per_bus = vec![0usize; net.buses.len()];
    for g in &net.generators {
        per_bus[g.bus] += 1;
    }
    for (k, g) in net.generators.iter().enumerate() {
        let b = &net.buses[g.bus];
        let total = s[g.bus] + Complex::new(b.pd, b.qd);
        x[ix.pg.index(k)] = total.re / per_bus[g.bus] as f64;
        x[ix.qg.index(k)] = total.im / per_bus[g.bus] as f64;
    }
    let nl = net.branches.len();
    for (l, br) in net.branches.iter().enumerate() {
        let vf = Complex::from_polar(vm[br.from], va[br.from]);
        let vt = Complex::from_polar(vm[br.to], va[br.to]);
        let [yff, yft, ytf, ytt] = adm.branch[l];
        let sf = vf * (yff * vf + yft * vt).conj();
        let st = vt * (ytf * vf + ytt * vt).conj();
        x[ix.p.index(l)] = sf.re;
        x[ix.q.index(l)] = sf.im;
        x[ix.p.index(nl + l)] = st.re;
        x[ix.q.index(nl + l)] = st.im;
    }
    x
}

/// Random bounded instance of the relaxed Newton system, `n ≤ 8`, `m ≤ 5`:
/// matrix data, the iterate it was set at, and a right-hand side.
/// `W` may be indefinite so that some instances need inertia correction.
pub fn random_kkt_instance(rng: &mut ChaCha8Rng) -> (KktData, KktVector, KktVector) {
    let n = rng.gen_range(1..=8);
    let m = rng.gen_range(1..=5);
    let (mut hr, mut hc) = (Vec::new(), Vec::new());
    for j in 0..n {
        for i in j..n {
            if i == j || rng.gen_bool(0.4) {
                hr.push(i);
                hc.push(j);
            }
        }
    }
    let (mut jr, mut jc) = (Vec::new(), Vec::new());
    for i in 0..m {
        for j in 0..n {
            if rng.gen_bool(0.5) {
                jr.push(i);
                jc.push(j);
            }
        }
    }
    let bounds = |len: usize, rng: &mut ChaCha8Rng, need_one: bool| {
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for _ in 0..len {
            let kind = rng.gen_range(if need_one { 1..4 } else { 0..4 });
            let l = rng.gen_range(-2.0..0.0);
            let u = rng.gen_range(0.5..2.0);
            match kind {
                0 => (lo.push(f64::NEG_INFINITY), hi.push(f64::INFINITY)),
                1 => (lo.push(l), hi.push(f64::INFINITY)),
                2 => (lo.push(f64::NEG_INFINITY), hi.push(u)),
                _ => (lo.push(l), hi.push(u)),
            };
        }
        BoundPair::new(lo, hi)
    };
    let xb = bounds(n, rng, false);
    let sb = bounds(m, rng, true);
    let mut data = KktData::new((&hr, &hc), (&jr, &jc), xb, sb);
    let shift = rng.gen_range(-3.0..3.0);
    for k in 0..hr.len() {
        data.w[k] = rng.gen_range(-1.0..1.0) + if hr[k] == hc[k] { shift } else { 0.0 };
    }
    for v in &mut data.a {
        *v = rng.gen_range(-2.0..2.0);
    }
    let mut it = KktVector::zeros(n, m);
    let mut p = KktVector::zeros(n, m);
    let interior = |b: &BoundPair, j: usize, rng: &mut ChaCha8Rng| match (b.has_lower[j], b.has_upper[j]) {
        (true, true) => b.lower[j] + (b.upper[j] - b.lower[j]) * rng.gen_range(0.1..0.9),
        (true, false) => b.lower[j] + rng.gen_range(0.1..2.0),
        (false, true) => b.upper[j] - rng.gen_range(0.1..2.0),
        _ => rng.gen_range(-1.0..1.0),
    };
    for j in 0..n {
        it.x[j] = interior(&data.x_bounds, j, rng);
        p.x[j] = rng.gen_range(-1.0..1.0);
        if data.x_bounds.has_lower[j] {
            it.zl_x[j] = rng.gen_range(0.1..2.0);
            p.zl_x[j] = rng.gen_range(-1.0..1.0);
        }
        if data.x_bounds.has_upper[j] {
            it.zu_x[j] = rng.gen_range(0.1..2.0);
            p.zu_x[j] = rng.gen_range(-1.0..1.0);
        }
    }
    for i in 0..m {
        it.s[i] = interior(&data.s_bounds, i, rng);
        p.s[i] = rng.gen_range(-1.0..1.0);
        p.y[i] = rng.gen_range(-1.0..1.0);
        if data.s_bounds.has_lower[i] {
            it.zl_s[i] = rng.gen_range(0.1..2.0);
            p.zl_s[i] = rng.gen_range(-1.0..1.0);
        }
        if data.s_bounds.has_upper[i] {
            it.zu_s[i] = rng.gen_range(0.1..2.0);
            p.zu_s[i] = rng.gen_range(-1.0..1.0);
        }
    }
    data.set_iterate(&it);
    (data, it, p)
}

fn dense_w(data: &KktData) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(data.n, data.n);
    for k in 0..data.w.len() {
        let (i, j) = (data.hess_rows[k], data.hess_cols[k]);
        w[(i, j)] += data.w[k];
        if i != j {
            w[(j, i)] += data.w[k];
        }
    }
    w
}

fn dense_a(data: &KktData) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(data.m, data.n);
    for k in 0..data.a.len() {
        a[(data.jac_rows[k], data.jac_cols[k])] += data.a[k];
    }
    a
}

fn x_gaps(data: &KktData, it: &KktVector) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let gl = |v: &[f64], b: &BoundPair| -> Vec<f64> {
        (0..v.len()).map(|j| if b.has_lower[j] { v[j] - b.lower[j] } else { 0.0 }).collect()
    };
    let gu = |v: &[f64], b: &BoundPair| -> Vec<f64> {
        (0..v.len()).map(|j| if b.has_upper[j] { b.upper[j] - v[j] } else { 0.0 }).collect()
    };
    (gl(&it.x, &data.x_bounds), gu(&it.x, &data.x_bounds), gl(&it.s, &data.s_bounds), gu(&it.s, &data.s_bounds))
}

/// Dense unreduced seven-block matrix, with one `Δz` column per finite bound.
/// Returns the matrix, the right-hand side and the `(block, index)` of each
/// `Δz` column (blocks 0..4 = zl_x, zu_x, zl_s, zu_s).
pub fn dense_full_system(
    data: &KktData,
    it: &KktVector,
    p: &KktVector,
) -> (DMatrix<f64>, DVector<f64>, Vec<(usize, usize)>) {
    let (n, m) = (data.n, data.m);
    let (glx, gux, gls, gus) = x_gaps(data, it);
    let mut zcols = Vec::new();
    for j in 0..n {
        if data.x_bounds.has_lower[j] {
            zcols.push((0, j));
        }
    }
    for j in 0..n {
        if data.x_bounds.has_upper[j] {
            zcols.push((1, j));
        }
    }
    for i in 0..m {
        if data.s_bounds.has_lower[i] {
            zcols.push((2, i));
        }
    }
    for i in 0..m {
        if data.s_bounds.has_upper[i] {
            zcols.push((3, i));
        }
    }
    let dim = n + 2 * m + zcols.len();
    let (xs, ss, ys, zs) = (0, n, n + m, n + 2 * m);
    let w = dense_w(data);
    let a = dense_a(data);
    let mut k = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        for j in 0..n {
            k[(xs + i, xs + j)] = w[(i, j)];
        }
        k[(xs + i, xs + i)] += data.delta_w;
        rhs[xs + i] = p.x[i];
    }
    for i in 0..m {
        for j in 0..n {
            k[(xs + j, ys + i)] = a[(i, j)];
            k[(ys + i, xs + j)] = a[(i, j)];
        }
        k[(ss + i, ss + i)] = data.delta_w;
        k[(ss + i, ys + i)] = -1.0;
        k[(ys + i, ss + i)] = -1.0;
        k[(ys + i, ys + i)] = -data.delta_c;
        rhs[ss + i] = p.s[i];
        rhs[ys + i] = p.y[i];
    }
    for (c, &(block, j)) in zcols.iter().enumerate() {
        let col = zs + c;
        let (prim, sign, z, gap, pz) = match block {
            0 => (xs + j, -1.0, it.zl_x[j], glx[j], p.zl_x[j]),
            1 => (xs + j, 1.0, it.zu_x[j], gux[j], p.zu_x[j]),
            2 => (ss + j, -1.0, it.zl_s[j], gls[j], p.zl_s[j]),
            _ => (ss + j, 1.0, it.zu_s[j], gus[j], p.zu_s[j]),
        };
        // stationarity row: −Δz_L + Δz_U
        k[(prim, col)] = sign;
        // complementarity row: ±Z Δv + gap Δz
        k[(col, prim)] = -sign * z;
        k[(col, col)] = gap;
        rhs[col] = pz;
    }
    (k, rhs, zcols)
}

/// Dense reduced augmented matrix `[W+Σx+δw, 0, Aᵀ; 0, Σs+δw, −I; A, −I, −δc]`
/// and its right-hand side built from `p` by eliminating the bound duals.
pub fn dense_augmented(data: &KktData, it: &KktVector, p: &KktVector) -> (DMatrix<f64>, DVector<f64>) {
    let (n, m) = (data.n, data.m);
    let (glx, gux, gls, gus) = x_gaps(data, it);
    let w = dense_w(data);
    let a = dense_a(data);
    let dim = n + 2 * m;
    let mut k = DMatrix::zeros(dim, dim);
    let mut q = DVector::zeros(dim);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = w[(i, j)];
        }
        let mut sigma = data.delta_w;
        let mut qi = p.x[i];
        if data.x_bounds.has_lower[i] {
            sigma += it.zl_x[i] / glx[i];
            qi += p.zl_x[i] / glx[i];
        }
        if data.x_bounds.has_upper[i] {
            sigma += it.zu_x[i] / gux[i];
            qi -= p.zu_x[i] / gux[i];
        }
        k[(i, i)] += sigma;
        q[i] = qi;
    }
    for i in 0..m {
        for j in 0..n {
            k[(n + m + i, j)] = a[(i, j)];
            k[(j, n + m + i)] = a[(i, j)];
        }
        let mut sigma = data.delta_w;
        let mut qs = p.s[i];
        if data.s_bounds.has_lower[i] {
            sigma += it.zl_s[i] / gls[i];
            qs += p.zl_s[i] / gls[i];
        }
        if data.s_bounds.has_upper[i] {
            sigma += it.zu_s[i] / gus[i];
            qs -= p.zu_s[i] / gus[i];
        }
        k[(n + i, n + i)] = sigma;
        k[(n + i, n + m + i)] = -1.0;
        k[(n + m + i, n + i)] = -1.0;
        k[(n + m + i, n + m + i)] = -data.delta_c;
        q[n + i] = qs;
        q[n + m + i] = p.y[i];
    }
    (k, q)
}

/// Eigenvalue signs of a symmetric matrix and its smallest |eigenvalue|.
pub fn dense_inertia(k: &DMatrix<f64>) -> ((usize, usize, usize), f64) {
    let ev = SymmetricEigen::new(k.clone()).eigenvalues;
    let scale = ev.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let tiny = 1e-12 * scale;
    let pos = ev.iter().filter(|&&v| v > tiny).count();
    let neg = ev.iter().filter(|&&v| v < -tiny).count();
    let min_abs = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    ((pos, ev.len() - pos - neg, neg), min_abs)
}

#[derive(Clone, Copy, Debug)]
pub struct CondensationOutcome {
    /// ‖Δ_condensed − Δ_dense‖∞ over all seven blocks.
    pub step_difference: f64,
    /// ‖(Δx, Δs, Δy)_condensed − dense reduced augmented solve‖∞.
    pub reduced_difference: f64,
    /// ‖p − M_full Δ‖∞ with the dense matrix.
    pub full_residual: f64,
    /// Unregularized condensed factorization succeeded.
    pub condensed_ok: bool,
    /// Dense augmented inertia equals (n+m, 0, m).
    pub inertia_ok: bool,
    /// Smallest |eigenvalue| of the unregularized augmented matrix.
    pub min_abs_eigenvalue: f64,
}

/// Solves one random instance with the condensed backend and compares it
/// with dense solves of the unreduced and reduced systems at the same
/// regularization.
pub fn condensation_check(data: KktData, it: &KktVector, p: &KktVector) -> CondensationOutcome {
    let (n, m) = (data.n, data.m);
    let it = it.clone();
    let (aug0, _) = dense_augmented(&data, &it, p);
    let (inertia, min_abs_eigenvalue) = dense_inertia(&aug0);

    let mut ws = KktWorkspace::new(data, KktBackend::Condensed);
    let condensed_ok = ws.factorize_at(0.0, 0.0).is_ok();
    let (step, _) = ws.solve_with_regularization(p, &mut RegularizationState::default(), 1e-2).unwrap();

    let (k, rhs, zcols) = dense_full_system(&ws.data, &it, p);
    let dense = k.clone().lu().solve(&rhs).unwrap();
    let mut full = DVector::zeros(rhs.len());
    for j in 0..n {
        full[j] = step.x[j];
    }
    for i in 0..m {
        full[n + i] = step.s[i];
        full[n + m + i] = step.y[i];
    }
    for (c, &(block, j)) in zcols.iter().enumerate() {
        full[n + 2 * m + c] = match block {
            0 => step.zl_x[j],
            1 => step.zu_x[j],
            2 => step.zl_s[j],
            _ => step.zu_s[j],
        };
    }
    let step_difference = (&full - &dense).amax();
    let full_residual = (&rhs - &k * &full).amax();

    let (aug, q) = dense_augmented(&ws.data, &it, p);
    let reduced = aug.lu().solve(&q).unwrap();
    let reduced_difference =
        full.rows(0, n + 2 * m).iter().zip(reduced.iter()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));

    CondensationOutcome {
        step_difference,
        reduced_difference,
        full_residual,
        condensed_ok,
        inertia_ok: inertia == (n + m, 0, m),
        min_abs_eigenvalue,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0) || (a.is_infinite() && a == b)
}

/// Writes per-unit network data back out in MATPOWER units.
pub fn to_matpower(net: &NetworkData) -> String {
    let base = net.base_mva;
    let deg = 180.0 / PI;
    let kind = |k: BusType| match k {
        BusType::Pq => 1,
        BusType::Pv => 2,
        BusType::Ref => 3,
    };
    let ang = |v: f64| if v.is_finite() { v * deg } else { 0.0 };
    let mut s = format!("function mpc = {}\nmpc.baseMVA = {base};\nmpc.bus = [\n", net.name);
    for b in &net.buses {
        s += &format!(
            "{} {} {:e} {:e} {:e} {:e} 1 {:e} {:e} 100 1 {:e} {:e};\n",
            b.id,
            kind(b.kind),
            b.pd * base,
            b.qd * base,
            b.gs * base,
            b.bs * base,
            b.vm,
            b.va * deg,
            b.vmax,
            b.vmin
        );
    }
    s += "];\nmpc.gen = [\n";
    for g in &net.generators {
        s += &format!(
            "{} {:e} {:e} {:e} {:e} 1 100 1 {:e} {:e};\n",
            net.buses[g.bus].id,
            g.pg * base,
            g.qg * base,
            g.qmax * base,
            g.qmin * base,
            g.pmax * base,
            g.pmin * base
        );
    }
    s += "];\nmpc.gencost = [\n";
    for c in &net.costs {
        s += &format!("2 0 0 3 {:e} {:e} {:e};\n", c.c2 / (base * base), c.c1 / base, c.c0);
    }
    s += "];\nmpc.branch = [\n";
    for br in &net.branches {
        let (lo, hi) = if br.angmin.is_finite() || br.angmax.is_finite() {
            (
                if br.angmin.is_finite() { ang(br.angmin) } else { -360.0 },
                if br.angmax.is_finite() { ang(br.angmax) } else { 360.0 },
            )
        } else {
            (0.0, 0.0)
        };
        s += &format!(
            "{} {} {:e} {:e} {:e} {:e} 0 0 {:e} {:e} 1 {:e} {:e};\n",
            net.buses[br.from].id,
            net.buses[br.to].id,
            br.r,
            br.x,
            br.b,
            br.rate_a * base,
            br.tap,
            br.shift * deg,
            lo,
            hi
        );
    }
    s + "];\n"
}

/// First mismatch between two parsed networks, compared to 1e-12 relative.
pub fn network_difference(a: &NetworkData, b: &NetworkData) -> Option<String> {
    if a.name != b.name || a.counts() != b.counts() {
        return Some(format!("{} {:?} vs {} {:?}", a.name, a.counts(), b.name, b.counts()));
    }
    let mut pairs: Vec<(String, f64, f64)> = Vec::new();
    for (k, (x, y)) in a.buses.iter().zip(&b.buses).enumerate() {
        if (x.id, x.kind) != (y.id, y.kind) {
            return Some(format!("bus {k} id or type"));
        }
        for (u, v) in
            [(x.pd, y.pd), (x.qd, y.qd), (x.gs, y.gs), (x.bs, y.bs), (x.vmin, y.vmin), (x.vmax, y.vmax), (x.va, y.va)]
        {
            pairs.push((format!("bus {k}"), u, v));
        }
    }
    for (k, (x, y)) in a.generators.iter().zip(&b.generators).enumerate() {
        if x.bus != y.bus {
            return Some(format!("generator {k} bus"));
        }
        for (u, v) in [(x.pmin, y.pmin), (x.pmax, y.pmax), (x.qmin, y.qmin), (x.qmax, y.qmax), (x.pg, y.pg)] {
            pairs.push((format!("generator {k}"), u, v));
        }
    }
    for (k, (x, y)) in a.costs.iter().zip(&b.costs).enumerate() {
        for (u, v) in [(x.c0, y.c0), (x.c1, y.c1), (x.c2, y.c2)] {
            pairs.push((format!("cost {k}"), u, v));
        }
    }
    for (k, (x, y)) in a.branches.iter().zip(&b.branches).enumerate() {
        if (x.from, x.to) != (y.from, y.to) {
            return Some(format!("branch {k} endpoints"));
        }
        for (u, v) in [
            (x.r, y.r),
            (x.x, y.x),
            (x.b, y.b),
            (x.rate_a, y.rate_a),
            (x.tap, y.tap),
            (x.shift, y.shift),
            (x.angmin, y.angmin),
            (x.angmax, y.angmax),
        ] {
            pairs.push((format!("branch {k}"), u, v));
        }
    }
    pairs.into_iter().find(|(_, u, v)| !close(*u, *v)).map(|(what, u, v)| format!("{what}: {u} vs {v}"))
}
