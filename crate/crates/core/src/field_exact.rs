//! Exact near-field interaction between circular air-core coils.
//!
//! For a source loop `k` and a target loop `j` (unit current, one turn) the
//! loop-integral kernels are
//!
//! ```text
//! I = oint_j [ oint_k (s x dl_k) / |s|^3 ] x dl_j
//! J = oint_j R_j x ( [ oint_k (s x dl_k) / |s|^3 ] x dl_j )
//! ```
//!
//! with `s = r_center + C_j R(theta) - C_k R(phi)` the vector from a source
//! element to a target element and `R_j = C_j R(theta)` the moment arm about
//! the target satellite center. Both loops are integrated with the composite
//! trapezoid rule on `[0, 2 pi)`, which converges geometrically for these
//! smooth periodic integrands as long as the loops stay apart.
//!
//! Force and torque on the target follow from
//! `f = mu0/(4 pi) * mu_k0 mu_j0 / A^2 * I` (and likewise for `J`), where
//! `mu_0 = N_t A c` is the scalar dipole moment of each loop.

use nalgebra::SMatrix;

use crate::frames::{cyclic_coil_frame, Axis, Dcm};
use crate::{Error, Result, Vec3, MU0_OVER_4PI};

/// Default clearance added to `2 * radius` before the integrand is refused.
pub const DEFAULT_GUARD_MARGIN: f64 = 1e-3;

/// Triaxial circular air-core coil set. All three loops share the radius and
/// turn count and are centered on the satellite center of mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoilSpec {
    radius: f64,
    turns: f64,
    guard_margin: f64,
}

impl CoilSpec {
    pub fn new(radius: f64, turns: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("coil radius must be positive, got {radius}")));
        }
        if !(turns >= 1.0 && turns.is_finite()) {
            return Err(Error::Config(format!("coil turns must be >= 1, got {turns}")));
        }
        Ok(CoilSpec {
            radius,
            turns,
            guard_margin: DEFAULT_GUARD_MARGIN,
        })
    }

    /// 0.15 m radius, 100 turns.
    pub fn reference() -> Self {
        CoilSpec::new(0.15, 100.0).expect("reference coil is valid")
    }

    pub fn with_guard_margin(mut self, margin: f64) -> Self {
        self.guard_margin = margin.max(0.0);
        self
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn turns(&self) -> f64 {
        self.turns
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    /// Smallest center distance accepted by the quadrature.
    pub fn min_separation(&self) -> f64 {
        2.0 * self.radius + self.guard_margin
    }

    /// `N_t * A`, the dipole moment per ampere of one loop.
    pub fn moment_per_amp(&self) -> f64 {
        self.turns * self.area()
    }
}

/// Loop-integral kernels of one (source loop, target loop) pair.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct GeometryKernels {
    /// Force kernel (dimensionless).
    pub i: Vec3,
    /// Torque kernel (m).
    pub j: Vec3,
}

impl GeometryKernels {
    pub fn to_array(&self) -> [f64; 6] {
        [self.i.x, self.i.y, self.i.z, self.j.x, self.j.y, self.j.z]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        GeometryKernels {
            i: Vec3::new(a[0], a[1], a[2]),
            j: Vec3::new(a[3], a[4], a[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Force and torque, both in the reference frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn zero() -> Self {
        Wrench::default()
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        ]
    }

    pub fn from_vector(v: &nalgebra::Vector6<f64>) -> Self {
        Wrench {
            force: Vec3::new(v[0], v[1], v[2]),
            torque: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> nalgebra::Vector6<f64> {
        nalgebra::Vector6::from_row_slice(&self.to_array())
    }

    pub fn scale(&self, a: f64) -> Wrench {
        Wrench {
            force: self.force * a,
            torque: self.torque * a,
        }
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
        }
    }
}

/// Triaxial dipole moment in body-axis components (A m^2).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DipoleMoment(pub Vec3);

impl DipoleMoment {
    /// Moment produced by per-axis coil currents (A).
    pub fn from_currents(currents: &Vec3, coil: &CoilSpec) -> Self {
        DipoleMoment(currents * coil.moment_per_amp())
    }

    /// The same moment in the reference frame.
    pub fn in_frame(&self, body_dcm: &Dcm) -> Vec3 {
        body_dcm.apply(&self.0)
    }
}

/// 6x9 coefficient matrix: `[f; tau] = mu0/(4 pi) * Q * (mu_k (x) mu_j)`.
///
/// Column `3 l + m` holds `[I; J] / A^2` for source axis `l` and target axis
/// `m`, so the Kronecker product is source-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QMatrix(pub SMatrix<f64, 6, 9>);

impl QMatrix {
    pub fn zeros() -> Self {
        QMatrix(SMatrix::zeros())
    }

    pub fn column_index(source: Axis, target: Axis) -> usize {
        3 * source.index() + target.index()
    }

    pub fn block(&self, source: Axis, target: Axis) -> GeometryKernels {
        let c = self.0.column(Self::column_index(source, target));
        GeometryKernels {
            i: Vec3::new(c[0], c[1], c[2]),
            j: Vec3::new(c[3], c[4], c[5]),
        }
    }

    /// Stores `kernels / area^2` into block `(source, target)`.
    pub fn set_block(&mut self, source: Axis, target: Axis, kernels: &GeometryKernels, area: f64) {
        let scale = 1.0 / (area * area);
        let col = Self::column_index(source, target);
        for (row, v) in kernels.to_array().iter().enumerate() {
            self.0[(row, col)] = v * scale;
        }
    }

    pub fn matrix(&self) -> &SMatrix<f64, 6, 9> {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Quadrature nodes of one loop: points relative to the satellite center and
/// the line elements `dl = R'(phi) dphi`, both in the reference frame.
struct LoopNodes {
    points: Vec<Vec3>,
    elements: Vec<Vec3>,
}

impl LoopNodes {
    fn new(orientation: &Dcm, radius: f64, n: usize) -> Self {
        let dphi = std::f64::consts::TAU / n as f64;
        let u = orientation.column(0);
        let v = orientation.column(1);
        let mut points = Vec::with_capacity(n);
        let mut elements = Vec::with_capacity(n);
        for i in 0..n {
            let (s, c) = (i as f64 * dphi).sin_cos();
            points.push((u * c + v * s) * radius);
            elements.push((v * c - u * s) * (radius * dphi));
        }
        LoopNodes { points, elements }
    }
}

fn kernels_from_nodes(r_center: &Vec3, source: &LoopNodes, target: &LoopNodes) -> Result<GeometryKernels> {
    let mut i_sum = Vec3::zeros();
    let mut j_sum = Vec3::zeros();
    for (tp, tdl) in target.points.iter().zip(&target.elements) {
        let base = r_center + tp;
        let mut b = Vec3::zeros();
        for (sp, sdl) in source.points.iter().zip(&source.elements) {
            let s = base - sp;
            let d2 = s.norm_squared();
            let inv3 = 1.0 / (d2 * d2.sqrt());
            b += s.cross(sdl) * inv3;
        }
        let df = b.cross(tdl);
        i_sum += df;
        j_sum += tp.cross(&df);
    }
    let k = GeometryKernels { i: i_sum, j: j_sum };
    if !k.is_finite() {
        return Err(Error::Numeric("loop integral produced a non-finite value".into()));
    }
    Ok(k)
}

fn check_separation(r_center: &Vec3, coil: &CoilSpec, n_quad: usize) -> Result<()> {
    if n_quad < 8 {
        return Err(Error::Validation(format!("n_quad must be >= 8, got {n_quad}")));
    }
    let d = r_center.norm();
    if !d.is_finite() {
        return Err(Error::Numeric("relative position is not finite".into()));
    }
    if d <= coil.min_separation() {
        return Err(Error::Domain(format!(
            "coil centers {d:.6} m apart, below the {:.6} m separation guard",
            coil.min_separation()
        )));
    }
    Ok(())
}

/// Kernels `(I, J)` of one loop pair by the double periodic trapezoid rule.
///
/// `source_orientation` and `target_orientation` are coil frames (third
/// column = loop normal, circulation from first to second column).
pub fn pair_kernel(
    r_center: &Vec3,
    source_orientation: &Dcm,
    target_orientation: &Dcm,
    coil: &CoilSpec,
    n_quad: usize,
) -> Result<GeometryKernels> {
    check_separation(r_center, coil, n_quad)?;
    let source = LoopNodes::new(source_orientation, coil.radius(), n_quad);
    let target = LoopNodes::new(target_orientation, coil.radius(), n_quad);
    kernels_from_nodes(r_center, &source, &target)
}

/// Full 6x9 coefficient matrix of target satellite `j` due to source `k`.
///
/// `r_jk` is the center of `j` minus the center of `k`; `dcm_j`, `dcm_k`
/// are the body-to-reference DCMs.
pub fn q_matrix_exact(
    r_jk: &Vec3,
    dcm_j: &Dcm,
    dcm_k: &Dcm,
    coil: &CoilSpec,
    n_quad: usize,
) -> Result<QMatrix> {
    check_separation(r_jk, coil, n_quad)?;
    let mut targets = Vec::with_capacity(3);
    for m in Axis::ALL {
        targets.push(LoopNodes::new(&cyclic_coil_frame(dcm_j, m)?, coil.radius(), n_quad));
    }
    let area = coil.area();
    let mut q = QMatrix::zeros();
    for l in Axis::ALL {
        let source = LoopNodes::new(&cyclic_coil_frame(dcm_k, l)?, coil.radius(), n_quad);
        for m in Axis::ALL {
            let k = kernels_from_nodes(r_jk, &source, &targets[m.index()])?;
            q.set_block(l, m, &k, area);
        }
    }
    Ok(q)
}

/// `mu_k (x) mu_j`, source-major.
pub fn kron_moments(mu_k: &DipoleMoment, mu_j: &DipoleMoment) -> SMatrix<f64, 9, 1> {
    let mut out = SMatrix::<f64, 9, 1>::zeros();
    for l in 0..3 {
        for m in 0..3 {
            out[3 * l + m] = mu_k.0[l] * mu_j.0[m];
        }
    }
    out
}

/// Instantaneous wrench on `j` for body-component moments `mu_k`, `mu_j`.
pub fn pair_wrench(q: &QMatrix, mu_k: &DipoleMoment, mu_j: &DipoleMoment) -> Wrench {
    let w = q.0 * kron_moments(mu_k, mu_j) * MU0_OVER_4PI;
    Wrench::from_vector(&w)
}

/// Position and attitude of one satellite's coil set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SatelliteCoilState {
    pub position: Vec3,
    pub attitude: Dcm,
}

/// Total wrench on satellite `self_id` from every other satellite, summed in
/// index order.
pub fn total_wrench(
    self_id: usize,
    satellites: &[SatelliteCoilState],
    moments: &[DipoleMoment],
    coil: &CoilSpec,
    n_quad: usize,
) -> Result<Wrench> {
    if satellites.len() != moments.len() {
        return Err(Error::Shape(format!(
            "{} satellites but {} moments",
            satellites.len(),
            moments.len()
        )));
    }
    let me = satellites
        .get(self_id)
        .ok_or_else(|| Error::Validation(format!("no satellite with index {self_id}")))?;
    let mut total = Wrench::zero();
    for (k, other) in satellites.iter().enumerate() {
        if k == self_id {
            continue;
        }
        let r = me.position - other.position;
        let q = q_matrix_exact(&r, &me.attitude, &other.attitude, coil, n_quad)?;
        total = total + pair_wrench(&q, &moments[k], &moments[self_id]);
    }
    Ok(total)
}

/// Kernels of a coil scaled by `gamma` from those of the reference coil at
/// the correspondingly scaled position: `I` is unchanged, `J` scales by
/// `gamma`.
pub fn rescale_kernels(kernels: &GeometryKernels, gamma: f64) -> Result<GeometryKernels> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Validation(format!("scale factor must be positive, got {gamma}")));
    }
    Ok(GeometryKernels {
        i: kernels.i,
        j: kernels.j * gamma,
    })
}
