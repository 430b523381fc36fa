//! Solves one Newton system of the relaxed problem with the condensed
//! Cholesky backend and with the augmented LDLᵀ reference, then checks both
//! against the unreduced seven-block system.

use condensed_opf::kkt::{BoundPair, KktBackend, KktData, KktVector, KktWorkspace, RegularizationState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two variables, two rows; x0 ∈ [0, 4], x1 free; s0 ∈ [−1e-4, 1e-4], s1 ≤ 0
    let xb = BoundPair::new(vec![0.0, f64::NEG_INFINITY], vec![4.0, f64::INFINITY]);
    let sb = BoundPair::new(vec![-1e-4, f64::NEG_INFINITY], vec![1e-4, 0.0]);
    let mut data = KktData::new((&[0, 1, 1], &[0, 0, 1]), (&[0, 0, 1], &[0, 1, 1]), xb, sb);
    data.w = vec![2.0, 0.3, -0.4];
    data.a = vec![1.0, -1.0, 2.0];

    let mut it = KktVector::zeros(2, 2);
    it.x = vec![1.0, 0.5];
    it.s = vec![2e-5, -0.3];
    it.zl_x = vec![0.2, 0.0];
    it.zu_x = vec![0.1, 0.0];
    it.zl_s = vec![1.5, 0.0];
    it.zu_s = vec![0.7, 0.01];
    data.set_iterate(&it);

    let mut p = KktVector::zeros(2, 2);
    p.x = vec![0.4, -1.0];
    p.s = vec![0.2, 0.1];
    p.y = vec![1e-3, -2e-3];
    p.zl_x = vec![0.01, 0.0];
    p.zu_s = vec![0.0, 1e-4];

    for kind in [KktBackend::Condensed, KktBackend::Augmented] {
        let mut ws = KktWorkspace::new(data.clone(), kind);
        let (step, info) = ws.solve_with_regularization(&p, &mut RegularizationState::default(), 1e-3)?;
        let residual = ws.full_residual(&step, &p).norm_inf();
        println!(
            "{kind:?}: factor dimension {}, delta_w {:e}, {} refinement rounds, residual {:.2e}",
            ws.factor_dimension(),
            info.factor.delta_w,
            info.refinement.rounds,
            residual
        );
        println!("  dx = {:.6?}  ds = {:?}  dy = {:.6?}", step.x, step.s, step.y);
        println!("  kappa_1 estimate {:.3e}", ws.condition_estimate());
    }
    Ok(())
}
