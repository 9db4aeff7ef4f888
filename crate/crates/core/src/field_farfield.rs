//! Dipole (far-field) approximation of the coil interaction.
//!
//! Valid once the center distance is large compared with the coil size; it
//! is used as an alternative controller model and as a cross-check of the
//! exact kernels at long range.

use crate::field_exact::{QMatrix, Wrench};
use crate::frames::{Axis, Dcm};
use crate::{Error, Result, Vec3, MU0_OVER_4PI};

fn unit_and_distance(r: &Vec3) -> Result<(Vec3, f64)> {
    let d = r.norm();
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain("dipole separation must be non-zero and finite".into()));
    }
    Ok((r / d, d))
}

/// Field of dipole `mu_k` (reference-frame components) at offset `r_jk`.
pub fn dipole_field(mu_k: &Vec3, r_jk: &Vec3) -> Result<Vec3> {
    let (e, d) = unit_and_distance(r_jk)?;
    let m_k = mu_k.dot(&e);
    Ok((e * (3.0 * m_k) - mu_k) * (MU0_OVER_4PI / (d * d * d)))
}

/// Force and torque on dipole `mu_j` located at `r_jk` from dipole `mu_k`.
/// Torque is `mu_j x B_k` about the dipole itself.
pub fn farfield_wrench(mu_j: &Vec3, mu_k: &Vec3, r_jk: &Vec3) -> Result<Wrench> {
    let (e, d) = unit_and_distance(r_jk)?;
    let m_k = mu_k.dot(&e);
    let m_j = mu_j.dot(&e);
    let coef = 3.0 * MU0_OVER_4PI / d.powi(4);
    let force = (e * (mu_k.dot(mu_j) - 5.0 * m_k * m_j) + mu_j * m_k + mu_k * m_j) * coef;
    let b = dipole_field(mu_k, r_jk)?;
    Ok(Wrench {
        force,
        torque: mu_j.cross(&b),
    })
}

/// The 6x9 matrix reproducing [`farfield_wrench`] through the same
/// `mu0/(4 pi) Q (mu_k (x) mu_j)` bilinear form as the exact model, with
/// moments given in body-axis components.
pub fn q_matrix_farfield(r_jk: &Vec3, dcm_j: &Dcm, dcm_k: &Dcm) -> Result<QMatrix> {
    let mut q = QMatrix::zeros();
    for l in Axis::ALL {
        let mu_k = dcm_k.column(l.index());
        for m in Axis::ALL {
            let mu_j = dcm_j.column(m.index());
            let w = farfield_wrench(&mu_j, &mu_k, r_jk)?;
            let col = QMatrix::column_index(l, m);
            for (row, v) in w.to_array().iter().enumerate() {
                q.0[(row, col)] = v / MU0_OVER_4PI;
            }
        }
    }
    Ok(q)
}
