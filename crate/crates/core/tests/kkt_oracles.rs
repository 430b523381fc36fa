mod common;

use common::{condensation_check, random_kkt_instance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn condensed_step_matches_dense_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let (data, it, p) = random_kkt_instance(&mut rng);
        let out = condensation_check(data, &it, &p);
        assert!(out.step_difference <= 1e-9, "instance {case}: {out:?}");
        assert!(out.reduced_difference <= 1e-9, "instance {case}: {out:?}");
        assert!(out.full_residual <= 1e-9, "instance {case}: {out:?}");
    }
}

#[test]
fn positive_definite_condensed_iff_correct_inertia() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut agree, mut both_sides) = (0, [0, 0]);
    while agree < 100 {
        let (data, it, p) = random_kkt_instance(&mut rng);
        let out = condensation_check(data, &it, &p);
        // too close to singular for either test to be decisive
        if out.min_abs_eigenvalue < 1e-8 {
            continue;
        }
        assert_eq!(out.condensed_ok, out.inertia_ok, "{out:?}");
        both_sides[out.inertia_ok as usize] += 1;
        agree += 1;
    }
    assert!(both_sides[0] > 0 && both_sides[1] > 0, "{both_sides:?}");
}
