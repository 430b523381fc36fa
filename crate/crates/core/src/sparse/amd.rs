//! Approximate minimum degree ordering on the quotient graph.
//!
//! Eliminated variables become elements; an element's variable list stands
//! in for the clique its elimination would create, so memory stays
//! proportional to the original graph. Degrees of the variables next to a
//! fresh element are bounded from above with the AMD approximation
//! `|A_i| + |L_p \ i| + sum_e |L_e \ L_p|` instead of being computed exactly.
//! Supervariable detection and aggressive absorption are not performed.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::SparseSymmetric;

const NONE: usize = usize::MAX;

/// Fill-reducing elimination order: `perm[k]` is the original index of the
/// k-th pivot. Ties are broken by index, so the result is deterministic.
pub fn amd_order(pattern: &SparseSymmetric) -> Vec<usize> {
    let n = pattern.n();
    let mut adj_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for p in pattern.col_ptr()[j]..pattern.col_ptr()[j + 1] {
            let i = pattern.row_idx()[p];
            if i != j {
                adj_vars[i].push(j);
                adj_vars[j].push(i);
            }
        }
    }
    for list in adj_vars.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let mut adj_elems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut eliminated = vec![false; n];
    let mut absorbed = vec![false; n];
    let mut degree: Vec<usize> = adj_vars.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((degree[i], i))).collect();

    let mut in_lp = vec![false; n];
    let mut ext = vec![NONE; n];
    let mut perm = Vec::with_capacity(n);

    while let Some(Reverse((d, p))) = heap.pop() {
        if eliminated[p] || d != degree[p] {
            continue;
        }
        eliminated[p] = true;
        perm.push(p);
        let remaining = n - perm.len();

        // L_p = A_p ∪ (∪ L_e for e ∈ E_p) \ {p}
        let mut lp: Vec<usize> = Vec::new();
        for &v in &adj_vars[p] {
            if !eliminated[v] && !in_lp[v] {
                in_lp[v] = true;
                lp.push(v);
            }
        }
        let absorbed_now = std::mem::take(&mut adj_elems[p]);
        for &e in &absorbed_now {
            for &v in &elem_vars[e] {
                if !eliminated[v] && !in_lp[v] {
                    in_lp[v] = true;
                    lp.push(v);
                }
            }
            absorbed[e] = true;
            elem_vars[e] = Vec::new();
        }
        lp.sort_unstable();
        adj_vars[p] = Vec::new();

        for &i in &lp {
            adj_elems[i].retain(|&e| !absorbed[e]);
            adj_elems[i].push(p);
            adj_vars[i].retain(|&v| v != p && !in_lp[v] && !eliminated[v]);
        }

        // |L_e \ L_p| for every other element touching L_p
        let mut touched = Vec::new();
        for &i in &lp {
            for &e in &adj_elems[i] {
                if e == p {
                    continue;
                }
                if ext[e] == NONE {
                    ext[e] = elem_vars[e].len();
                    touched.push(e);
                }
                ext[e] -= 1;
            }
        }
        for &i in &lp {
            let mut d = adj_vars[i].len() + lp.len() - 1;
            for &e in &adj_elems[i] {
                if e != p {
                    d += ext[e];
                }
            }
            let d = d.min(remaining.saturating_sub(1)).min(degree[i] + lp.len());
            if d != degree[i] {
                degree[i] = d;
            }
            heap.push(Reverse((degree[i], i)));
        }
        for e in touched {
            ext[e] = NONE;
        }
        for &i in &lp {
            in_lp[i] = false;
        }
        elem_vars[p] = lp;
    }
    debug_assert_eq!(perm.len(), n);
    perm
}
