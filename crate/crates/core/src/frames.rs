//! Coordinate conventions and the pair canonicalization used by the surrogate.
//!
//! A [`Dcm`] `C` maps components from a body/coil frame into the frame it is
//! expressed in (`v_a = C v_b`), so its columns are the body axes written in
//! the outer frame.
//!
//! Canonicalization of a (source coil, target coil) pair happens in two steps:
//!
//! 1. [`cyclic_coil_frame`] relabels the source body axes so that the chosen
//!    coil normal becomes the third axis. The source loop then lies in the
//!    x-y plane of that frame.
//! 2. [`canonical_rotation`] spins the frame about that normal so that the
//!    relative position has no second component, and flips the third axis if
//!    needed so that the axial component is non-negative.
//!
//! The composite transform can be a reflection. Under a reflection the
//! target loop, rebuilt from its transformed normal, circulates the opposite
//! way to the mirror image of the true loop. Both kernels flip sign for that
//! reason, and the force kernel (a polar vector) picks up a second flip from
//! the mirror while the torque kernel (axial) does not. The net rule applied
//! in [`decanonicalize_kernels`] is `I_a = det * C^T I_d` and `J_a = C^T J_d`.

use nalgebra::{Matrix3, UnitQuaternion};
use rand::Rng;

use crate::field_exact::GeometryKernels;
use crate::{Error, Mat3, Result, Vec3};

const ORTHO_TOL: f64 = 1e-12;

/// Direction cosine matrix (rotation, or rotation composed with a reflection).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dcm(Mat3);

impl Dcm {
    pub fn identity() -> Self {
        Dcm(Mat3::identity())
    }

    /// Wraps `m` after checking `m^T m = I` to 1e-12.
    pub fn new(m: Mat3) -> Result<Self> {
        let dcm = Dcm(m);
        dcm.validate()?;
        Ok(dcm)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Dcm(*q.to_rotation_matrix().matrix())
    }

    pub fn from_columns(x: &Vec3, y: &Vec3, z: &Vec3) -> Result<Self> {
        Self::new(Matrix3::from_columns(&[*x, *y, *z]))
    }

    pub fn validate(&self) -> Result<()> {
        let err = (self.0.transpose() * self.0 - Mat3::identity()).amax();
        if !err.is_finite() || err > ORTHO_TOL {
            return Err(Error::Validation(format!(
                "matrix is not orthonormal (|C^T C - I|max = {err:e})"
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn transpose(&self) -> Dcm {
        Dcm(self.0.transpose())
    }

    /// +1 for rotations, -1 for improper transforms.
    pub fn det_sign(&self) -> f64 {
        self.0.determinant().signum()
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// `self * other`.
    pub fn compose(&self, other: &Dcm) -> Dcm {
        Dcm(self.0 * other.0)
    }
}

/// One of the three coil axes of a triaxial coil set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }
}

/// Coil frame whose third column is the body axis `axis`.
///
/// The columns follow the cyclic order: `z -> (x, y, z)`, `x -> (y, z, x)`,
/// `y -> (z, x, y)`, so the result is always a proper rotation when
/// `body_dcm` is.
pub fn cyclic_coil_frame(body_dcm: &Dcm, axis: Axis) -> Result<Dcm> {
    body_dcm.validate()?;
    let order = match axis {
        Axis::Z => [0, 1, 2],
        Axis::X => [1, 2, 0],
        Axis::Y => [2, 0, 1],
    };
    let m = body_dcm.matrix();
    Ok(Dcm(Matrix3::from_columns(&[
        m.column(order[0]).into_owned(),
        m.column(order[1]).into_owned(),
        m.column(order[2]).into_owned(),
    ])))
}

/// Rotation about the coil normal (plus an optional flip of the normal) that
/// takes `r` to `[sqrt(rx^2 + ry^2), 0, |rz|]`.
///
/// The spin angle is `atan2(ry, rx)`, taken as 0 when `rx = ry = 0`; the
/// flip is applied only for `rz < 0`.
pub fn canonical_rotation(r_in_coil_frame: &Vec3) -> Result<Dcm> {
    let r = r_in_coil_frame;
    if !(r.norm() > 0.0) {
        return Err(Error::Domain("relative position is zero".into()));
    }
    let theta0 = if r.x == 0.0 && r.y == 0.0 {
        0.0
    } else {
        r.y.atan2(r.x)
    };
    let (s, c) = theta0.sin_cos();
    let flip = if r.z < 0.0 { -1.0 } else { 1.0 };
    Ok(Dcm(Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, flip)))
}

/// Reduced four-number surrogate input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalInput {
    /// In-plane and axial components of the relative position in frame D (m).
    pub r_hat: [f64; 2],
    /// Azimuth in `[-pi, pi]` and elevation in `[0, pi]` of the target coil
    /// normal in frame D (rad).
    pub phi: [f64; 2],
}

impl CanonicalInput {
    pub fn to_array(&self) -> [f64; 4] {
        [self.r_hat[0], self.r_hat[1], self.phi[0], self.phi[1]]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        CanonicalInput {
            r_hat: [x[0], x[1]],
            phi: [x[2], x[3]],
        }
    }

    /// Target coil normal in frame D.
    pub fn target_normal(&self) -> Vec3 {
        let (s1, c1) = self.phi[0].sin_cos();
        let (s2, c2) = self.phi[1].sin_cos();
        Vec3::new(c1 * s2, s1 * s2, c2)
    }

    /// Relative position in frame D (second component zero).
    pub fn position(&self) -> Vec3 {
        Vec3::new(self.r_hat[0], 0.0, self.r_hat[1])
    }

    pub fn distance(&self) -> f64 {
        self.r_hat[0].hypot(self.r_hat[1])
    }
}

/// Transform from the reference frame A into the pair frame D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairFrameContext {
    pub c_d_from_a: Dcm,
    pub source_axis: Axis,
    pub target_axis: Axis,
}

/// Source-only part of the canonicalization: the frame D for source coil
/// `source_axis` and the relative position `r_jk_in_a`.
pub fn pair_frame(r_jk_in_a: &Vec3, source_body_dcm: &Dcm, source_axis: Axis) -> Result<Dcm> {
    let c_a_from_b = cyclic_coil_frame(source_body_dcm, source_axis)?;
    let r_b = c_a_from_b.transpose().apply(r_jk_in_a);
    let c_d_from_b = canonical_rotation(&r_b)?;
    Ok(c_d_from_b.compose(&c_a_from_b.transpose()))
}

/// Reduced input of a normal already expressed in frame D.
pub fn canonical_input(r_d: &Vec3, n_d: &Vec3) -> CanonicalInput {
    let azimuth = if n_d.x == 0.0 && n_d.y == 0.0 {
        0.0
    } else {
        n_d.y.atan2(n_d.x)
    };
    let elevation = n_d.z.clamp(-1.0, 1.0).acos();
    CanonicalInput {
        r_hat: [r_d.x, r_d.z],
        phi: [azimuth, elevation],
    }
}

/// Maps a coil pair given in frame A to its canonical input and the frame
/// context needed to map kernels back.
pub fn canonicalize_pair(
    r_jk_in_a: &Vec3,
    target_normal_in_a: &Vec3,
    source_body_dcm: &Dcm,
    source_axis: Axis,
    target_axis: Axis,
) -> Result<(CanonicalInput, PairFrameContext)> {
    if ((target_normal_in_a.norm() - 1.0).abs()) > 1e-9 {
        return Err(Error::Validation("target normal is not a unit vector".into()));
    }
    let c_d_from_a = pair_frame(r_jk_in_a, source_body_dcm, source_axis)?;
    let r_d = c_d_from_a.apply(r_jk_in_a);
    let n_d = c_d_from_a.apply(target_normal_in_a);
    let input = canonical_input(&r_d, &n_d);
    Ok((
        input,
        PairFrameContext {
            c_d_from_a,
            source_axis,
            target_axis,
        },
    ))
}

/// Maps kernels computed in frame D back to frame A.
pub fn decanonicalize_kernels(
    kernels_in_d: &GeometryKernels,
    ctx: &PairFrameContext,
) -> Result<GeometryKernels> {
    ctx.c_d_from_a.validate()?;
    let back = ctx.c_d_from_a.transpose();
    let det = ctx.c_d_from_a.det_sign();
    Ok(GeometryKernels {
        i: back.apply(&kernels_in_d.i) * det,
        j: back.apply(&kernels_in_d.j),
    })
}

/// A right-handed coil frame whose third column is `normal`.
///
/// For an axisymmetric loop only the normal matters; the in-plane axes just
/// fix where the quadrature nodes start.
pub fn coil_frame_from_normal(normal: &Vec3) -> Result<Dcm> {
    let n = normal.try_normalize(1e-300).ok_or_else(|| {
        Error::Validation("coil normal has zero length".into())
    })?;
    let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let u = helper.cross(&n).normalize();
    let v = n.cross(&u);
    Dcm::from_columns(&u, &v, &n)
}

/// Uniformly distributed random rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    use std::f64::consts::TAU;
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = nalgebra::Quaternion::new(
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    );
    UnitQuaternion::from_quaternion(q)
}
