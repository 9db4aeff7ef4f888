//! Closed-loop docking simulation.

use nalgebra::UnitQuaternion;

use super::scenario::{ModelSelector, Scenario};
use crate::allocation::{allocate_chaser, averaged_wrench, target_currents, ACCommand};
use crate::control::{attitude_error, pd_wrench_command, rw_torque_command, ReferenceProfile};
use crate::dynamics::{integrate_step, orbital_rate, total_angular_momentum, HeldInputs, SatelliteState, TargetLoad};
use crate::field_exact::{q_matrix_exact, QMatrix, Wrench};
use crate::field_farfield::q_matrix_farfield;
use crate::surrogate::{q_matrix_surrogate, ExtrapolationPolicy, Surrogate};
use crate::{Error, Result, Vec3};

/// Everything logged at one control tick. Commands are the ones held over
/// the following control interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub state: SatelliteState,
    pub ref_pos: Vec3,
    pub desired: Wrench,
    pub realized: Wrench,
    pub target_cmd: ACCommand,
    pub chaser_cmd: ACCommand,
    pub tau_rw: Vec3,
    pub saturated: bool,
    pub scale: f64,
    pub condition: f64,
    pub extrapolated: bool,
    /// Singular allocation this tick (zero chaser currents were held).
    pub fault: bool,
}

/// Column names of the CSV log, in order.
pub const LOG_COLUMNS: [&str; 60] = [
    "t",
    "rel_pos_x", "rel_pos_y", "rel_pos_z",
    "rel_vel_x", "rel_vel_y", "rel_vel_z",
    "q_target_x", "q_target_y", "q_target_z", "q_target_w",
    "omega_target_x", "omega_target_y", "omega_target_z",
    "q_chaser_x", "q_chaser_y", "q_chaser_z", "q_chaser_w",
    "omega_chaser_x", "omega_chaser_y", "omega_chaser_z",
    "h_rw_x", "h_rw_y", "h_rw_z",
    "ref_pos_x", "ref_pos_y", "ref_pos_z",
    "desired_fx", "desired_fy", "desired_fz", "desired_tx", "desired_ty", "desired_tz",
    "realized_fx", "realized_fy", "realized_fz", "realized_tx", "realized_ty", "realized_tz",
    "target_s_x", "target_s_y", "target_s_z", "target_c_x", "target_c_y", "target_c_z",
    "chaser_s_x", "chaser_s_y", "chaser_s_z", "chaser_c_x", "chaser_c_y", "chaser_c_z",
    "tau_rw_x", "tau_rw_y", "tau_rw_z",
    "saturated", "scale", "condition", "extrapolated", "fault", "omega_f",
];

fn flag(b: bool) -> f64 {
    if b { 1.0 } else { 0.0 }
}

impl TickRecord {
    pub fn to_row(&self) -> Vec<f64> {
        let s = &self.state;
        let mut row = Vec::with_capacity(60);
        row.push(self.t);
        row.extend_from_slice(s.rel_pos.as_slice());
        row.extend_from_slice(s.rel_vel.as_slice());
        row.extend_from_slice(s.target.quat.coords.as_slice());
        row.extend_from_slice(s.target.omega.as_slice());
        row.extend_from_slice(s.chaser.quat.coords.as_slice());
        row.extend_from_slice(s.chaser.omega.as_slice());
        row.extend_from_slice(s.h_rw.as_slice());
        row.extend_from_slice(self.ref_pos.as_slice());
        row.extend_from_slice(&self.desired.to_array());
        row.extend_from_slice(&self.realized.to_array());
        for cmd in [&self.target_cmd, &self.chaser_cmd] {
            row.extend_from_slice(cmd.s.as_slice());
            row.extend_from_slice(cmd.c.as_slice());
        }
        row.extend_from_slice(self.tau_rw.as_slice());
        row.extend_from_slice(&[
            flag(self.saturated),
            self.scale,
            self.condition,
            flag(self.extrapolated),
            flag(self.fault),
            self.chaser_cmd.omega_f,
        ]);
        row
    }

    pub fn from_row(row: &[f64]) -> Result<Self> {
        let n = LOG_COLUMNS.len();
        if row.len() != n {
            return Err(Error::Format(format!("log row has {} columns, expected {n}", row.len())));
        }
        let v3 = |i: usize| Vec3::new(row[i], row[i + 1], row[i + 2]);
        let q4 = |i: usize| nalgebra::Quaternion::new(row[i + 3], row[i], row[i + 1], row[i + 2]);
        let w6 = |i: usize| Wrench { force: v3(i), torque: v3(i + 3) };
        let omega_f = row[59];
        let state = SatelliteState {
            rel_pos: v3(1),
            rel_vel: v3(4),
            target: crate::dynamics::Attitude { quat: q4(7), omega: v3(11) },
            chaser: crate::dynamics::Attitude { quat: q4(14), omega: v3(18) },
            h_rw: v3(21),
        };
        Ok(TickRecord {
            t: row[0],
            state,
            ref_pos: v3(24),
            desired: w6(27),
            realized: w6(33),
            target_cmd: ACCommand { s: v3(39), c: v3(42), omega_f },
            chaser_cmd: ACCommand { s: v3(45), c: v3(48), omega_f },
            tau_rw: v3(51),
            saturated: row[54] != 0.0,
            scale: row[55],
            condition: row[56],
            extrapolated: row[57] != 0.0,
            fault: row[58] != 0.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// Coil contact within the capture tolerance of the goal.
    Docked { t: f64, error: f64 },
    /// Coil contact anywhere else.
    Collision { t: f64, distance: f64 },
    /// Singular allocation with `abort_on_singular` set.
    Fault { t: f64, message: String },
}

impl RunOutcome {
    /// Process exit code for this outcome.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunOutcome::Completed | RunOutcome::Docked { .. } => 0,
            RunOutcome::Collision { .. } => 4,
            RunOutcome::Fault { .. } => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<TickRecord>,
    pub outcome: RunOutcome,
    /// State when the run ended (after the last record, or at contact).
    pub end_state: SatelliteState,
    pub end_time: f64,
    pub final_pos: Vec3,
    pub final_quat: UnitQuaternion<f64>,
}

impl TrajectoryLog {
    /// Distance of the end relative position from the goal.
    pub fn terminal_position_error(&self) -> f64 {
        (self.end_state.rel_pos - self.final_pos).norm()
    }

    /// Largest attitude error of either satellite at the end (rad).
    pub fn terminal_attitude_error(&self) -> f64 {
        let s = &self.end_state;
        let et = attitude_error(&s.target.unit(), &self.final_quat).norm();
        let ec = attitude_error(&s.chaser.unit(), &self.final_quat).norm();
        et.max(ec)
    }

    pub fn docked(&self) -> bool {
        matches!(self.outcome, RunOutcome::Docked { .. })
    }

    /// Largest chaser current amplitude over the run (A).
    pub fn peak_chaser_current(&self) -> f64 {
        self.records.iter().map(|r| r.chaser_cmd.peak_amplitude()).fold(0.0, f64::max)
    }

    pub fn collided(&self) -> bool {
        matches!(self.outcome, RunOutcome::Collision { .. })
    }
}

/// Angular momentum of the pair at each record (free-space runs only).
pub fn momentum_history(log: &TrajectoryLog, scenario: &Scenario) -> Vec<Vec3> {
    log.records
        .iter()
        .map(|r| total_angular_momentum(&r.state, &scenario.plant))
        .collect()
}

/// Runs the docking loop. The chosen model only feeds the chaser's current
/// solve; the plant always integrates the exact averaged wrench.
pub fn run_docking(scenario: &Scenario, surrogate: Option<&Surrogate>) -> Result<TrajectoryLog> {
    scenario.validate()?;
    let run = &scenario.run;
    let coil = scenario.coil.spec()?;
    let plant = &scenario.plant;
    let gains = &scenario.gains;
    let alloc_cfg = &scenario.allocator;
    let omega_o = if run.free_space { 0.0 } else { orbital_rate(plant) };
    let surrogate = match run.model {
        ModelSelector::Surrogate => Some(
            surrogate
                .ok_or_else(|| Error::Config("surrogate model selected but none loaded".into()))?
                .clone()
                .with_policy(ExtrapolationPolicy::Ignore),
        ),
        _ => None,
    };
    let gamma = surrogate.as_ref().map_or(1.0, |s| s.scale_for(&coil));

    let mut state = scenario.initial_state()?;
    let r_init = state.rel_pos;
    let final_pos = Vec3::from(scenario.target.rel_pos);
    let final_quat = scenario.final_quat()?;
    let chaser_profile = ReferenceProfile {
        position0: r_init,
        positionf: final_pos,
        quat0: state.chaser.unit(),
        quatf: final_quat,
        duration: run.reference_duration,
    };
    let target_profile = ReferenceProfile { quat0: state.target.unit(), ..chaser_profile };
    let j_c = plant.inertia_chaser();
    let j_t = plant.inertia_target();
    let m_eff = plant.effective_mass();
    let n_ticks = (run.duration / run.control_dt).round() as usize;
    let substeps = (run.control_dt / run.integration_dt).round() as usize;

    let mut records = Vec::with_capacity(n_ticks + 1);
    let mut outcome = RunOutcome::Completed;
    let mut warned = false;
    let mut end_time = 0.0;
    for tick in 0..=n_ticks {
        let t = tick as f64 * run.control_dt;
        let distance = state.rel_pos.norm();
        if distance <= coil.min_separation() {
            let error = (state.rel_pos - final_pos).norm();
            if error <= run.capture_tolerance {
                log::info!("docked at t = {t:.1} s, {error:.4} m from the goal");
                outcome = RunOutcome::Docked { t, error };
            } else {
                log::warn!("collision at t = {t:.1} s, center distance {distance:.4} m");
                outcome = RunOutcome::Collision { t, distance };
            }
            end_time = t;
            break;
        }
        let reference = chaser_profile.at(t);
        let target_ref = target_profile.at(t);
        let q_t = state.target.unit();
        let q_c = state.chaser.unit();
        let dcm_t = state.target.dcm();
        let dcm_c = state.chaser.dcm();

        let target_cmd = target_currents(&state.rel_pos, &r_init, alloc_cfg)?;
        let tau_rw = rw_torque_command(&q_t, &state.target.omega, &target_ref.quat, &target_ref.rate, gains, &j_t);
        let desired = pd_wrench_command(&reference, &state.rel_pos, &state.rel_vel, &q_c, &state.chaser.omega, gains, m_eff, &j_c);

        let q_plant = q_matrix_exact(&state.rel_pos, &dcm_c, &dcm_t, &coil, run.plant_n_quad)?;
        let mut extrapolated = false;
        let q_ctrl: QMatrix = match run.model {
            ModelSelector::Exact if run.n_quad == run.plant_n_quad => q_plant,
            ModelSelector::Exact => q_matrix_exact(&state.rel_pos, &dcm_c, &dcm_t, &coil, run.n_quad)?,
            ModelSelector::Farfield => q_matrix_farfield(&state.rel_pos, &dcm_c, &dcm_t)?,
            ModelSelector::Surrogate => {
                let s = surrogate.as_ref().expect("checked above");
                let out = q_matrix_surrogate(&state.rel_pos, &dcm_c, &dcm_t, &coil, s, gamma)?;
                if out.extrapolated && !warned {
                    log::warn!("t = {t:.1} s: surrogate queried outside its training region");
                    warned = true;
                }
                extrapolated = out.extrapolated;
                out.q
            }
        };
        let (chaser_cmd, saturated, scale, condition, fault) =
            match allocate_chaser(&q_ctrl, &target_cmd, &desired, &coil, alloc_cfg) {
                Ok(a) => (a.command, a.saturated, a.scale, a.condition, false),
                Err(Error::Singular(msg)) => {
                    log::error!("t = {t:.1} s: singular allocation: {msg}");
                    if run.abort_on_singular {
                        end_time = t;
                        outcome = RunOutcome::Fault { t, message: msg };
                        break;
                    }
                    (ACCommand::zero(alloc_cfg.omega_f), false, 0.0, f64::INFINITY, true)
                }
                Err(e) => return Err(e),
            };
        let realized = averaged_wrench(&q_plant, &target_cmd, &chaser_cmd, &coil)?;
        records.push(TickRecord {
            t,
            state,
            ref_pos: reference.position,
            desired,
            realized,
            target_cmd,
            chaser_cmd,
            tau_rw,
            saturated,
            scale,
            condition,
            extrapolated,
            fault,
        });
        end_time = t;
        if tick == n_ticks {
            break;
        }
        let held = HeldInputs {
            chaser_wrench: realized,
            target: TargetLoad::Reaction,
            tau_rw,
        };
        for _ in 0..substeps {
            state = integrate_step(&state, &held, plant, omega_o, run.integration_dt)?;
        }
    }
    Ok(TrajectoryLog {
        records,
        outcome,
        end_state: state,
        end_time,
        final_pos,
        final_quat,
    })
}
