//! AC current modulation and the chaser's decentralized current solve.
//!
//! Each satellite drives its coils with `c(t) = s sin(w t) + c cos(w t)`.
//! Averaged over one period the interaction is
//! `1/2 mu0/(4 pi) Q (s_k (x) s_j + c_k (x) c_j)`, which is linear in the
//! chaser amplitudes once the target amplitudes are fixed. The target picks
//! its amplitudes from a fixed rule so the chaser can solve a 6x6 system on
//! its own.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::field_exact::{pair_wrench, CoilSpec, DipoleMoment, QMatrix, Wrench};
use crate::{Error, Result, Vec3, MU0_OVER_4PI};

/// Sine/cosine current amplitudes (A) per body axis and the shared AC
/// frequency (rad/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ACCommand {
    pub s: Vec3,
    pub c: Vec3,
    pub omega_f: f64,
}

impl ACCommand {
    pub fn zero(omega_f: f64) -> Self {
        ACCommand {
            s: Vec3::zeros(),
            c: Vec3::zeros(),
            omega_f,
        }
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.s.amax().max(self.c.amax())
    }

    /// Per-axis hard clip to `+-limit`.
    pub fn clipped(&self, limit: f64) -> Self {
        let clip = |v: &Vec3| v.map(|x| x.clamp(-limit, limit));
        ACCommand {
            s: clip(&self.s),
            c: clip(&self.c),
            omega_f: self.omega_f,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        ACCommand {
            s: self.s * a,
            c: self.c * a,
            omega_f: self.omega_f,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocatorConfig {
    /// Base target amplitude (A).
    pub c_amp0: f64,
    /// Per-axis weights of the target sine amplitudes.
    pub target_coeffs: [f64; 3],
    /// Amplitude limit (A).
    pub current_limit: f64,
    /// Allocation matrices with a larger 2-norm condition number are refused.
    pub max_condition: f64,
    /// AC angular frequency (rad/s).
    pub omega_f: f64,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        AllocatorConfig {
            c_amp0: 3.0,
            target_coeffs: [0.1, 0.3, 0.7],
            current_limit: 10.0,
            max_condition: 1e8,
            omega_f: 8.0 * std::f64::consts::PI,
        }
    }
}

impl AllocatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_amp0 > 0.0) || !(self.current_limit > 0.0) || !(self.omega_f > 0.0) {
            return Err(Error::Config(
                "c_amp0, current_limit and omega_f must be positive".into(),
            ));
        }
        if !(self.max_condition > 1.0) {
            return Err(Error::Config("max_condition must exceed 1".into()));
        }
        Ok(())
    }
}

/// Predetermined target amplitudes: `s = c_amp0 * rho * coeffs`,
/// `c = c_amp0 * rho * [1, 1, 1] - s`, with `rho = |r_now| / |r_init|`,
/// clipped per axis to the current limit.
pub fn target_currents(r_now: &Vec3, r_init: &Vec3, cfg: &AllocatorConfig) -> Result<ACCommand> {
    let r0 = r_init.norm();
    if !(r0 > 0.0) {
        return Err(Error::Validation("initial relative position is zero".into()));
    }
    let amp = cfg.c_amp0 * r_now.norm() / r0;
    let s = Vec3::from(cfg.target_coeffs) * amp;
    let c = Vec3::repeat(amp) - s;
    Ok(ACCommand {
        s,
        c,
        omega_f: cfg.omega_f,
    }
    .clipped(cfg.current_limit))
}

fn check_frequency(a: &ACCommand, b: &ACCommand) -> Result<()> {
    if a.omega_f != b.omega_f {
        return Err(Error::Validation(format!(
            "AC frequencies differ ({} vs {} rad/s)",
            a.omega_f, b.omega_f
        )));
    }
    Ok(())
}

/// Period-averaged wrench on `j` from `k`.
pub fn averaged_wrench(
    q: &QMatrix,
    cmd_k: &ACCommand,
    cmd_j: &ACCommand,
    coil: &CoilSpec,
) -> Result<Wrench> {
    check_frequency(cmd_k, cmd_j)?;
    let m = |v: &Vec3| DipoleMoment::from_currents(v, coil);
    let sin = pair_wrench(q, &m(&cmd_k.s), &m(&cmd_j.s));
    let cos = pair_wrench(q, &m(&cmd_k.c), &m(&cmd_j.c));
    Ok((sin + cos).scale(0.5))
}

/// Coil currents at time `t`.
pub fn instantaneous_current(cmd: &ACCommand, t: f64) -> Vec3 {
    let (s, c) = (cmd.omega_f * t).sin_cos();
    cmd.s * s + cmd.c * c
}

/// Result of the chaser solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Allocation {
    pub command: ACCommand,
    /// True when the solution was scaled down to respect the limit.
    pub saturated: bool,
    /// Uniform scale applied (1 when unsaturated).
    pub scale: f64,
    /// 2-norm condition number of the 6x6 allocation matrix.
    pub condition: f64,
}

/// The 6x6 map from chaser moment amplitudes `[s_j; c_j]` (A m^2) to the
/// averaged wrench, for target moment amplitudes `s_k`, `c_k` (A m^2).
pub fn allocation_matrix(q: &QMatrix, s_k: &Vec3, c_k: &Vec3) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    for m in 0..3 {
        let mut col_s = Vector6::zeros();
        let mut col_c = Vector6::zeros();
        for l in 0..3 {
            let q_col = q.0.column(3 * l + m);
            col_s += q_col * s_k[l];
            col_c += q_col * c_k[l];
        }
        a.set_column(m, &(col_s * (0.5 * MU0_OVER_4PI)));
        a.set_column(m + 3, &(col_c * (0.5 * MU0_OVER_4PI)));
    }
    a
}

fn singular_cause(s_k: &Vec3, c_k: &Vec3) -> &'static str {
    let (ns, nc) = (s_k.norm(), c_k.norm());
    if ns == 0.0 || nc == 0.0 {
        "a target amplitude vector is zero"
    } else if s_k.cross(c_k).norm() <= 1e-9 * ns * nc {
        "target sine and cosine amplitudes are parallel (s_k || c_k)"
    } else {
        "coefficient matrix Q is rank deficient at this geometry"
    }
}

/// Chaser amplitudes realizing `desired` as the averaged wrench on the
/// chaser, given the target command. Any amplitude above the limit scales
/// the whole solution down uniformly, which preserves the wrench direction.
pub fn allocate_chaser(
    q: &QMatrix,
    cmd_target: &ACCommand,
    desired: &Wrench,
    coil: &CoilSpec,
    cfg: &AllocatorConfig,
) -> Result<Allocation> {
    let per_amp = coil.moment_per_amp();
    let s_k = cmd_target.s * per_amp;
    let c_k = cmd_target.c * per_amp;
    let a = allocation_matrix(q, &s_k, &c_k);
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("allocation matrix is not finite".into()));
    }
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= cfg.max_condition) {
        return Err(Error::Singular(format!(
            "condition number {condition:.3e} exceeds {:.1e}: {}",
            cfg.max_condition,
            singular_cause(&s_k, &c_k)
        )));
    }
    let x = a
        .lu()
        .solve(&desired.to_vector())
        .ok_or_else(|| Error::Singular(singular_cause(&s_k, &c_k).into()))?;
    let s = Vec3::new(x[0], x[1], x[2]) / per_amp;
    let c = Vec3::new(x[3], x[4], x[5]) / per_amp;
    let mut command = ACCommand {
        s,
        c,
        omega_f: cmd_target.omega_f,
    };
    let peak = command.peak_amplitude();
    let mut scale = 1.0;
    let saturated = peak > cfg.current_limit;
    if saturated {
        scale = cfg.current_limit / peak;
        command = command.scaled(scale);
    }
    Ok(Allocation {
        command,
        saturated,
        scale,
        condition,
    })
}
