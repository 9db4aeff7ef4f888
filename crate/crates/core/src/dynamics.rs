//! Relative orbital motion and attitude dynamics of the target/chaser pair.
//!
//! Translation uses the Clohessy-Wiltshire equations for the chaser position
//! relative to the target (x radial, y along-track, z cross-track). Attitude
//! uses Euler's equation with an optional reaction wheel,
//! `J w' + w x (J w + h) = -tau_rw + tau_ext`, `h' = tau_rw`, and quaternion
//! kinematics `q' = q (x) [w, 0] / 2` for body-to-reference quaternions.

use nalgebra::{Quaternion, SVector, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::field_exact::Wrench;
use crate::frames::Dcm;
use crate::{Error, Mat3, Result, Vec3};

pub const EARTH_RADIUS: f64 = 6_378_137.0;
pub const MU_EARTH: f64 = 3.986_004_418e14;

/// How electromagnetic forces enter the relative equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingMode {
    /// `F = f_chaser / m_c - f_target / m_t`.
    Relative,
    /// `F = f_chaser / m_c`, ignoring the target's reaction.
    ChaserOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub mass_chaser: f64,
    pub mass_target: f64,
    /// Row-major inertia tensors (kg m^2). Not given for the reference
    /// vehicles; the default is a 0.3 kg m^2 isotropic body.
    pub inertia_chaser: [[f64; 3]; 3],
    pub inertia_target: [[f64; 3]; 3],
    /// Orbit altitude (m).
    pub altitude: f64,
    pub mu_g: f64,
    pub earth_radius: f64,
    pub forcing: ForcingMode,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let j = [[0.3, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.3]];
        PlantConfig {
            mass_chaser: 20.0,
            mass_target: 20.0,
            inertia_chaser: j,
            inertia_target: j,
            altitude: 700e3,
            mu_g: MU_EARTH,
            earth_radius: EARTH_RADIUS,
            forcing: ForcingMode::Relative,
        }
    }
}

fn mat(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|r, c| rows[r][c])
}

impl PlantConfig {
    pub fn inertia_chaser(&self) -> Mat3 {
        mat(&self.inertia_chaser)
    }

    pub fn inertia_target(&self) -> Mat3 {
        mat(&self.inertia_target)
    }

    /// Mass that converts a chaser force into relative acceleration.
    pub fn effective_mass(&self) -> f64 {
        match self.forcing {
            ForcingMode::Relative => 1.0 / (1.0 / self.mass_chaser + 1.0 / self.mass_target),
            ForcingMode::ChaserOnly => self.mass_chaser,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass_chaser > 0.0 && self.mass_target > 0.0) {
            return Err(Error::Config("satellite masses must be positive".into()));
        }
        if !(self.altitude >= 0.0 && self.mu_g > 0.0 && self.earth_radius > 0.0) {
            return Err(Error::Config("orbit parameters must be positive".into()));
        }
        for (name, j) in [("chaser", self.inertia_chaser()), ("target", self.inertia_target())] {
            let sym = (j - j.transpose()).amax() <= 1e-12 * j.amax();
            let pd = j.cholesky().is_some();
            if !(sym && pd) {
                return Err(Error::Config(format!(
                    "{name} inertia must be symmetric positive definite"
                )));
            }
        }
        Ok(())
    }
}

/// Circular orbit rate `sqrt(mu / R^3)`.
pub fn orbital_rate(cfg: &PlantConfig) -> f64 {
    let r = cfg.earth_radius + cfg.altitude;
    (cfg.mu_g / (r * r * r)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attitude {
    /// Body-to-reference quaternion.
    pub quat: Quaternion<f64>,
    /// Body angular rate in body axes (rad/s).
    pub omega: Vec3,
}

impl Attitude {
    pub fn new(quat: UnitQuaternion<f64>, omega: Vec3) -> Self {
        Attitude {
            quat: quat.into_inner(),
            omega,
        }
    }

    pub fn unit(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_quaternion(self.quat)
    }

    pub fn dcm(&self) -> Dcm {
        Dcm::from_quaternion(&self.unit())
    }
}

/// Relative translational state plus both attitudes and the target wheel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SatelliteState {
    /// Chaser minus target position in the orbit frame (m).
    pub rel_pos: Vec3,
    pub rel_vel: Vec3,
    pub target: Attitude,
    pub chaser: Attitude,
    /// Target reaction-wheel momentum in target body axes (N m s).
    pub h_rw: Vec3,
}

const STATE_DIM: usize = 23;
type StateVector = SVector<f64, STATE_DIM>;

impl SatelliteState {
    fn to_vector(self) -> StateVector {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.rel_pos);
        v.fixed_rows_mut::<3>(3).copy_from(&self.rel_vel);
        v.fixed_rows_mut::<4>(6).copy_from(&self.target.quat.coords);
        v.fixed_rows_mut::<3>(10).copy_from(&self.target.omega);
        v.fixed_rows_mut::<4>(13).copy_from(&self.chaser.quat.coords);
        v.fixed_rows_mut::<3>(17).copy_from(&self.chaser.omega);
        v.fixed_rows_mut::<3>(20).copy_from(&self.h_rw);
        v
    }

    fn from_vector(v: &StateVector) -> Self {
        SatelliteState {
            rel_pos: v.fixed_rows::<3>(0).into_owned(),
            rel_vel: v.fixed_rows::<3>(3).into_owned(),
            target: Attitude {
                quat: Quaternion::from(v.fixed_rows::<4>(6).into_owned()),
                omega: v.fixed_rows::<3>(10).into_owned(),
            },
            chaser: Attitude {
                quat: Quaternion::from(v.fixed_rows::<4>(13).into_owned()),
                omega: v.fixed_rows::<3>(17).into_owned(),
            },
            h_rw: v.fixed_rows::<3>(20).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    fn renormalized(mut self) -> Self {
        self.target.quat = self.target.quat.normalize();
        self.chaser.quat = self.chaser.quat.normalize();
        self
    }
}

/// Relative velocity and acceleration from the CW equations.
pub fn cw_derivative(
    rel_pos: &Vec3,
    rel_vel: &Vec3,
    force_on_chaser: &Vec3,
    force_on_target: &Vec3,
    cfg: &PlantConfig,
    omega_o: f64,
) -> (Vec3, Vec3) {
    let forcing = match cfg.forcing {
        ForcingMode::Relative => force_on_chaser / cfg.mass_chaser - force_on_target / cfg.mass_target,
        ForcingMode::ChaserOnly => force_on_chaser / cfg.mass_chaser,
    };
    let w = omega_o;
    let (x, z) = (rel_pos.x, rel_pos.z);
    let (vx, vy) = (rel_vel.x, rel_vel.y);
    let acc = Vec3::new(
        -2.0 * w * vy + 3.0 * w * w * x,
        2.0 * w * vx,
        -w * w * z,
    ) + forcing;
    (*rel_vel, acc)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttitudeDerivative {
    pub quat: Quaternion<f64>,
    pub omega: Vec3,
    pub h_rw: Vec3,
}

/// Attitude rates; `tau_ext` and `tau_rw` are in body axes.
pub fn attitude_derivative(
    quat: &Quaternion<f64>,
    omega: &Vec3,
    h_rw: &Vec3,
    tau_ext: &Vec3,
    tau_rw: &Vec3,
    inertia: &Mat3,
) -> Result<AttitudeDerivative> {
    let inv = inertia
        .try_inverse()
        .ok_or_else(|| Error::Validation("inertia tensor is singular".into()))?;
    let momentum = inertia * omega + h_rw;
    let domega = inv * (-omega.cross(&momentum) - tau_rw + tau_ext);
    let dq = quat * Quaternion::from_imag(*omega) * 0.5;
    Ok(AttitudeDerivative {
        quat: dq,
        omega: domega,
        h_rw: *tau_rw,
    })
}

/// Loads on the target during a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetLoad {
    /// Equal and opposite force, and the torque that balances angular
    /// momentum about the current geometry: `tau_t = -tau_c - r x f_c`.
    Reaction,
    /// Explicit reference-frame wrench.
    Given(Wrench),
}

/// Inputs held constant over one integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeldInputs {
    /// Electromagnetic wrench on the chaser, reference frame, torque about
    /// the chaser center.
    pub chaser_wrench: Wrench,
    pub target: TargetLoad,
    /// Wheel torque command in target body axes.
    pub tau_rw: Vec3,
}

impl HeldInputs {
    pub fn zero() -> Self {
        HeldInputs {
            chaser_wrench: Wrench::zero(),
            target: TargetLoad::Reaction,
            tau_rw: Vec3::zeros(),
        }
    }
}

fn derivative(
    x: &SatelliteState,
    inputs: &HeldInputs,
    cfg: &PlantConfig,
    omega_o: f64,
) -> Result<StateVector> {
    let wc = inputs.chaser_wrench;
    let wt = match inputs.target {
        TargetLoad::Reaction => Wrench {
            force: -wc.force,
            torque: -wc.torque - x.rel_pos.cross(&wc.force),
        },
        TargetLoad::Given(w) => w,
    };
    let (dpos, dvel) = cw_derivative(&x.rel_pos, &x.rel_vel, &wc.force, &wt.force, cfg, omega_o);
    let to_body = |att: &Attitude, tau: &Vec3| att.unit().inverse_transform_vector(tau);
    let dt = attitude_derivative(
        &x.target.quat,
        &x.target.omega,
        &x.h_rw,
        &to_body(&x.target, &wt.torque),
        &inputs.tau_rw,
        &cfg.inertia_target(),
    )?;
    let dc = attitude_derivative(
        &x.chaser.quat,
        &x.chaser.omega,
        &Vec3::zeros(),
        &to_body(&x.chaser, &wc.torque),
        &Vec3::zeros(),
        &cfg.inertia_chaser(),
    )?;
    let d = SatelliteState {
        rel_pos: dpos,
        rel_vel: dvel,
        target: Attitude { quat: dt.quat, omega: dt.omega },
        chaser: Attitude { quat: dc.quat, omega: dc.omega },
        h_rw: dt.h_rw,
    };
    Ok(d.to_vector())
}

/// One classical RK4 step with `inputs` held over the step. Quaternions are
/// renormalized afterwards.
pub fn integrate_step(
    state: &SatelliteState,
    inputs: &HeldInputs,
    cfg: &PlantConfig,
    omega_o: f64,
    dt: f64,
) -> Result<SatelliteState> {
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("time step must be positive, got {dt}")));
    }
    let x0 = state.to_vector();
    let eval = |v: &StateVector| derivative(&SatelliteState::from_vector(v), inputs, cfg, omega_o);
    let k1 = eval(&x0)?;
    let k2 = eval(&(x0 + k1 * (dt / 2.0)))?;
    let k3 = eval(&(x0 + k2 * (dt / 2.0)))?;
    let k4 = eval(&(x0 + k3 * dt))?;
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let next = SatelliteState::from_vector(&x1).renormalized();
    if !next.is_finite() {
        return Err(Error::Numeric("state became non-finite during integration".into()));
    }
    Ok(next)
}

/// Total angular momentum of the pair about the common center of mass in
/// the reference frame. Meaningful in free space (`omega_o = 0`) with
/// relative forcing.
pub fn total_angular_momentum(state: &SatelliteState, cfg: &PlantConfig) -> Vec3 {
    let mu = 1.0 / (1.0 / cfg.mass_chaser + 1.0 / cfg.mass_target);
    let orbital = state.rel_pos.cross(&state.rel_vel) * mu;
    let target = state
        .target
        .unit()
        .transform_vector(&(cfg.inertia_target() * state.target.omega + state.h_rw));
    let chaser = state
        .chaser
        .unit()
        .transform_vector(&(cfg.inertia_chaser() * state.chaser.omega));
    orbital + target + chaser
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rest_state() -> SatelliteState {
        SatelliteState {
            rel_pos: Vec3::zeros(),
            rel_vel: Vec3::zeros(),
            target: Attitude::new(UnitQuaternion::identity(), Vec3::zeros()),
            chaser: Attitude::new(UnitQuaternion::identity(), Vec3::zeros()),
            h_rw: Vec3::zeros(),
        }
    }

    #[test]
    fn orbital_rate_values() {
        let cfg = PlantConfig::default();
        let w = orbital_rate(&cfg);
        assert!((w - 1.060_206_448e-3).abs() < 1e-12, "{w}");
        let mut far = cfg.clone();
        far.earth_radius *= 2.0;
        far.altitude *= 2.0;
        assert_relative_eq!(orbital_rate(&far), w / (2.0 * 2f64.sqrt()), max_relative = 1e-14);
        let mut higher = cfg.clone();
        higher.altitude += 1e5;
        assert!(orbital_rate(&higher) < w);
    }

    #[test]
    fn cw_trivial_cases() {
        let cfg = PlantConfig::default();
        let (v, a) = cw_derivative(&Vec3::zeros(), &Vec3::zeros(), &Vec3::zeros(), &Vec3::zeros(), &cfg, 1e-3);
        assert_eq!(v, Vec3::zeros());
        assert_eq!(a, Vec3::zeros());
        let f = Vec3::new(0.2, -0.4, 1.0);
        let (_, a) = cw_derivative(&Vec3::new(1.0, 2.0, 3.0), &Vec3::zeros(), &f, &Vec3::zeros(), &cfg, 0.0);
        assert_relative_eq!(a, f / 20.0);
    }

    /// Closed-form CW state transition (Hill's solution), independent of the
    /// integrator.
    /// The plant uses along-track `y` opposite to the textbook Hill frame,
    /// so the textbook solution is applied with `y` mirrored.
    fn cw_closed_form(r0: &Vec3, v0: &Vec3, n: f64, t: f64) -> (Vec3, Vec3) {
        let mirror = Vec3::new(1.0, -1.0, 1.0);
        let (r, v) = hill_textbook(&r0.component_mul(&mirror), &v0.component_mul(&mirror), n, t);
        (r.component_mul(&mirror), v.component_mul(&mirror))
    }

    fn hill_textbook(r0: &Vec3, v0: &Vec3, n: f64, t: f64) -> (Vec3, Vec3) {
        let (s, c) = (n * t).sin_cos();
        let (x0, y0, z0) = (r0.x, r0.y, r0.z);
        let (u0, v0y, w0) = (v0.x, v0.y, v0.z);
        let x = (4.0 - 3.0 * c) * x0 + s / n * u0 + 2.0 / n * (1.0 - c) * v0y;
        let y = 6.0 * (s - n * t) * x0 + y0 - 2.0 / n * (1.0 - c) * u0 + (4.0 * s - 3.0 * n * t) / n * v0y;
        let z = c * z0 + s / n * w0;
        let vx = 3.0 * n * s * x0 + c * u0 + 2.0 * s * v0y;
        let vy = -6.0 * n * (1.0 - c) * x0 - 2.0 * s * u0 + (4.0 * c - 3.0) * v0y;
        let vz = -n * s * z0 + c * w0;
        (Vec3::new(x, y, z), Vec3::new(vx, vy, vz))
    }

    #[test]
    fn unforced_cw_matches_closed_form() {
        let cfg = PlantConfig::default();
        let n = orbital_rate(&cfg);
        let mut x = rest_state();
        x.rel_pos = Vec3::new(0.3, -0.4, 0.6);
        x.rel_vel = Vec3::new(1e-4, -2e-4, 5e-5);
        let (r0, v0) = (x.rel_pos, x.rel_vel);
        let dt = 0.1;
        for _ in 0..10_000 {
            x = integrate_step(&x, &HeldInputs::zero(), &cfg, n, dt).unwrap();
        }
        let (r, v) = cw_closed_form(&r0, &v0, n, 1000.0);
        assert!((x.rel_pos - r).norm() <= 1e-8 * r.norm());
        assert!((x.rel_vel - v).norm() <= 1e-8 * v.norm());
    }

    #[test]
    fn attitude_trivial_cases() {
        let j = Mat3::from_diagonal(&Vec3::new(0.2, 0.3, 0.5));
        let q = Quaternion::identity();
        let z = Vec3::zeros();
        let d = attitude_derivative(&q, &z, &z, &z, &z, &j).unwrap();
        assert_eq!(d.omega, z);
        assert_eq!(d.quat, Quaternion::new(0.0, 0.0, 0.0, 0.0));
        let spin = Vec3::new(0.0, 0.0, 0.7);
        let d = attitude_derivative(&q, &spin, &z, &z, &z, &j).unwrap();
        assert_eq!(d.omega, z);
        assert!(attitude_derivative(&q, &spin, &z, &z, &z, &Mat3::zeros()).is_err());
    }

    fn torque_free_run(dt: f64, t_end: f64) -> SatelliteState {
        let mut cfg = PlantConfig::default();
        cfg.inertia_chaser = [[0.2, 0.0, 0.0], [0.0, 0.3, 0.0], [0.0, 0.0, 0.5]];
        let mut x = rest_state();
        x.chaser.omega = Vec3::new(0.1, 0.4, -0.2);
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            x = integrate_step(&x, &HeldInputs::zero(), &cfg, 0.0, dt).unwrap();
        }
        x
    }

    #[test]
    fn torque_free_body_conserves_energy_and_momentum() {
        let j = Mat3::from_diagonal(&Vec3::new(0.2, 0.3, 0.5));
        let w0 = Vec3::new(0.1, 0.4, -0.2);
        let x = torque_free_run(0.01, 100.0);
        let w = x.chaser.omega;
        let e0 = 0.5 * w0.dot(&(j * w0));
        let e = 0.5 * w.dot(&(j * w));
        assert!(((e - e0) / e0).abs() < 1e-8);
        assert!((((j * w).norm() - (j * w0).norm()) / (j * w0).norm()).abs() < 1e-8);
        assert!((x.chaser.quat.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let reference = torque_free_run(0.005, 20.0);
        let coarse = torque_free_run(0.4, 20.0);
        let fine = torque_free_run(0.2, 20.0);
        let e1 = (coarse.chaser.omega - reference.chaser.omega).norm();
        let e2 = (fine.chaser.omega - reference.chaser.omega).norm();
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let cfg = PlantConfig::default();
        let x = rest_state();
        let y = integrate_step(&x, &HeldInputs::zero(), &cfg, 0.0, 0.1).unwrap();
        assert_eq!(x, y);
        assert!(integrate_step(&x, &HeldInputs::zero(), &cfg, 0.0, 0.0).is_err());
    }

    #[test]
    fn plant_validation() {
        let mut cfg = PlantConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.inertia_target = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(cfg.validate().is_err());
        let mut cfg = PlantConfig::default();
        cfg.mass_chaser = 0.0;
        assert!(cfg.validate().is_err());
    }
}
