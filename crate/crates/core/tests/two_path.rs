mod common;

use common::*;
use emff::field_exact::{pair_wrench, q_matrix_exact, total_wrench, CoilSpec, DipoleMoment, SatelliteCoilState};
use emff::Vec3;

#[test]
fn coefficient_matrix_matches_direct_loop_summation() {
    let coil = CoilSpec::new(0.15, 40.0).unwrap();
    let mut rng = rng(11);
    for case in 0..8 {
        let r = random_offset(&mut rng, 0.35, 1.0);
        let (dcm_j, dcm_k) = (random_dcm(&mut rng), random_dcm(&mut rng));
        let (i_j, i_k) = (random_vec(&mut rng, 5.0), random_vec(&mut rng, 5.0));
        let q = q_matrix_exact(&r, &dcm_j, &dcm_k, &coil, 96).unwrap();
        let w = pair_wrench(
            &q,
            &DipoleMoment::from_currents(&i_k, &coil),
            &DipoleMoment::from_currents(&i_j, &coil),
        );
        let (f, t) = direct_wrench(&r, &dcm_j, &i_j, &Vec3::zeros(), &dcm_k, &i_k, 0.15, 40.0, 96);
        assert!(rel_err(w.force.as_slice(), f.as_slice()) < 1e-10, "case {case} force");
        assert!(rel_err(w.torque.as_slice(), t.as_slice()) < 1e-10, "case {case} torque");
    }
}

#[test]
fn total_wrench_sums_pairs() {
    let coil = CoilSpec::reference();
    let mut rng = rng(12);
    let sats: Vec<SatelliteCoilState> = [Vec3::zeros(), Vec3::new(0.6, 0.0, 0.1), Vec3::new(-0.1, 0.7, 0.0)]
        .iter()
        .map(|p| SatelliteCoilState { position: *p, attitude: random_dcm(&mut rng) })
        .collect();
    let moments: Vec<DipoleMoment> = (0..3).map(|_| DipoleMoment(random_vec(&mut rng, 20.0))).collect();
    let total = total_wrench(0, &sats, &moments, &coil, 48).unwrap();
    let mut expect = Vec3::zeros();
    for k in 1..3 {
        let q = q_matrix_exact(&(sats[0].position - sats[k].position), &sats[0].attitude, &sats[k].attitude, &coil, 48)
            .unwrap();
        expect += pair_wrench(&q, &moments[k], &moments[0]).force;
    }
    assert!(rel_err(total.force.as_slice(), expect.as_slice()) < 1e-14);
    assert!(total_wrench(5, &sats, &moments, &coil, 48).is_err());
    assert!(total_wrench(0, &sats, &moments[..2], &coil, 48).is_err());
}
