//! Reference profiles and PD laws for the docking maneuver.

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::field_exact::Wrench;
use crate::{Mat3, Vec3};

/// Cubic blend `3 tau^2 - 2 tau^3` and its time derivative.
fn smoothstep(t: f64, duration: f64) -> (f64, f64, bool) {
    let clamped = !(0.0..=duration).contains(&t);
    let tau = (t / duration).clamp(0.0, 1.0);
    let s = tau * tau * (3.0 - 2.0 * tau);
    let ds = 6.0 * tau * (1.0 - tau) / duration;
    (s, ds, clamped)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplineSample {
    pub value: Vec3,
    pub rate: Vec3,
    /// Set when `t` was outside `[0, duration]` and got clamped.
    pub clamped: bool,
}

/// Third-order spline from `x0` to `xf` with zero end rates.
pub fn spline_reference(x0: &Vec3, xf: &Vec3, duration: f64, t: f64) -> SplineSample {
    let (s, ds, clamped) = smoothstep(t, duration);
    let delta = xf - x0;
    SplineSample {
        value: x0 + delta * s,
        rate: delta * ds,
        clamped,
    }
}

/// Position and attitude reference at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub position: Vec3,
    pub velocity: Vec3,
    pub quat: UnitQuaternion<f64>,
    /// Reference body rate (rad/s).
    pub rate: Vec3,
}

/// Spline profile for the relative position and one attitude. The attitude
/// follows the shortest rotation from `quat0` to `quatf` with the same cubic
/// timing law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceProfile {
    pub position0: Vec3,
    pub positionf: Vec3,
    pub quat0: UnitQuaternion<f64>,
    pub quatf: UnitQuaternion<f64>,
    pub duration: f64,
}

impl ReferenceProfile {
    pub fn at(&self, t: f64) -> Reference {
        let pos = spline_reference(&self.position0, &self.positionf, self.duration, t);
        let (s, ds, _) = smoothstep(t, self.duration);
        let mut delta = self.quat0.inverse() * self.quatf;
        if delta.w < 0.0 {
            delta = UnitQuaternion::from_quaternion(-delta.into_inner());
        }
        let (axis, angle) = delta
            .axis_angle()
            .map(|(a, ang)| (a.into_inner(), ang))
            .unwrap_or((Vec3::z(), 0.0));
        let quat = self.quat0 * UnitQuaternion::from_scaled_axis(axis * (angle * s));
        Reference {
            position: pos.value,
            velocity: pos.rate,
            quat,
            rate: axis * (angle * ds),
        }
    }
}

/// Translational and attitude PD gains (per unit mass / inertia).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdGains {
    pub kp_pos: f64,
    pub kd_pos: f64,
    pub kp_att: f64,
    pub kd_att: f64,
}

impl PdGains {
    /// `kp = wn^2`, `kd = 2 zeta wn`.
    pub fn from_poles(wn_pos: f64, wn_att: f64, zeta: f64) -> Self {
        PdGains {
            kp_pos: wn_pos * wn_pos,
            kd_pos: 2.0 * zeta * wn_pos,
            kp_att: wn_att * wn_att,
            kd_att: 2.0 * zeta * wn_att,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.kp_pos, self.kd_pos, self.kp_att, self.kd_att]
            .iter()
            .all(|g| *g > 0.0 && g.is_finite())
    }
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains::from_poles(0.05, 0.1, 1.0)
    }
}

/// Small-angle attitude error (rotation vector, body axes) taking the body
/// attitude `quat` to `target`. The quaternion sign is fixed so that the
/// shortest rotation is used.
pub fn attitude_error(quat: &UnitQuaternion<f64>, target: &UnitQuaternion<f64>) -> Vec3 {
    let e: Quaternion<f64> = (quat.inverse() * target).into_inner();
    let sign = if e.w < 0.0 { -1.0 } else { 1.0 };
    e.imag() * (2.0 * sign)
}

/// Desired averaged wrench on the chaser (reference frame).
#[allow(clippy::too_many_arguments)]
pub fn pd_wrench_command(
    reference: &Reference,
    rel_pos: &Vec3,
    rel_vel: &Vec3,
    quat: &UnitQuaternion<f64>,
    omega: &Vec3,
    gains: &PdGains,
    mass: f64,
    inertia: &Mat3,
) -> Wrench {
    let e_pos = reference.position - rel_pos;
    let e_vel = reference.velocity - rel_vel;
    let force = (e_pos * gains.kp_pos + e_vel * gains.kd_pos) * mass;
    let e_att = attitude_error(quat, &reference.quat);
    let e_rate = reference.rate - omega;
    let torque_body = inertia * (e_att * gains.kp_att + e_rate * gains.kd_att);
    Wrench {
        force,
        torque: quat.transform_vector(&torque_body),
    }
}

/// Wheel torque for the target. The body sees `-tau_rw`, so the command is
/// the negated PD torque.
pub fn rw_torque_command(
    quat: &UnitQuaternion<f64>,
    omega: &Vec3,
    target_quat: &UnitQuaternion<f64>,
    target_rate: &Vec3,
    gains: &PdGains,
    inertia: &Mat3,
) -> Vec3 {
    let e_att = attitude_error(quat, target_quat);
    let e_rate = target_rate - omega;
    -(inertia * (e_att * gains.kp_att + e_rate * gains.kd_att))
}
