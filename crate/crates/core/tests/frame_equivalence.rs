mod common;

use common::*;
use emff::field_exact::{pair_kernel, CoilSpec};
use emff::frames::{canonicalize_pair, cyclic_coil_frame, decanonicalize_kernels, Axis};
use emff::surrogate::dataset::label_in_frame_d;
use emff::field_exact::GeometryKernels;

#[test]
fn canonical_path_matches_direct_kernels() {
    let coil = CoilSpec::reference();
    let mut g = rng(21);
    let mut reflected = 0;
    for case in 0..300 {
        let r = random_offset(&mut g, 0.33, 1.0);
        let (dj, dk) = (random_dcm(&mut g), random_dcm(&mut g));
        let (l, m) = (Axis::ALL[case % 3], Axis::ALL[(case / 3) % 3]);
        let direct = pair_kernel(
            &r,
            &cyclic_coil_frame(&dk, l).unwrap(),
            &cyclic_coil_frame(&dj, m).unwrap(),
            &coil,
            128,
        )
        .unwrap();
        let (input, ctx) = canonicalize_pair(&r, &dj.column(m.index()), &dk, l, m).unwrap();
        if ctx.c_d_from_a.det_sign() < 0.0 {
            reflected += 1;
        }
        let in_d = GeometryKernels::from_array(label_in_frame_d(&input, &coil, 128).unwrap());
        let back = decanonicalize_kernels(&in_d, &ctx).unwrap();
        let err = rel_err(&back.to_array(), &direct.to_array());
        assert!(err < 1e-9, "case {case}: relative error {err:e}");
    }
    assert!(reflected > 50 && reflected < 250, "{reflected} reflected cases");
}
