//! Scenario files: a versioned TOML document whose defaults reproduce the
//! nominal docking case.

use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::AllocatorConfig;
use crate::control::PdGains;
use crate::dynamics::{Attitude, PlantConfig, SatelliteState};
use crate::field_exact::{CoilSpec, DEFAULT_GUARD_MARGIN};
use crate::frames::random_rotation;
use crate::surrogate::dataset::sample_rng;
use crate::{Error, Result, Vec3};

pub const SCENARIO_FORMAT: &str = "emff-scenario";
pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelector {
    #[default]
    Exact,
    Farfield,
    Surrogate,
}

impl std::fmt::Display for ModelSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelSelector::Exact => "exact",
            ModelSelector::Farfield => "farfield",
            ModelSelector::Surrogate => "surrogate",
        })
    }
}

impl std::str::FromStr for ModelSelector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ModelSelector::Exact),
            "farfield" => Ok(ModelSelector::Farfield),
            "surrogate" => Ok(ModelSelector::Surrogate),
            _ => Err(Error::Config(format!("unknown model selector {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    /// Interaction model used by the chaser's current solve.
    pub model: ModelSelector,
    /// Quadrature nodes for the exact controller model.
    pub n_quad: usize,
    /// Quadrature nodes for the plant (always the exact model).
    pub plant_n_quad: usize,
    pub duration: f64,
    pub reference_duration: f64,
    pub control_dt: f64,
    pub integration_dt: f64,
    /// Zero orbital rate, for conservation checks.
    pub free_space: bool,
    /// Stop at the first singular allocation instead of holding zero
    /// chaser currents for that tick.
    pub abort_on_singular: bool,
    /// Coil contact this close to the goal counts as docking (m).
    pub capture_tolerance: f64,
    pub seed: u64,
    pub model_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            model: ModelSelector::Exact,
            n_quad: 64,
            plant_n_quad: 128,
            duration: 300.0,
            reference_duration: 300.0,
            control_dt: 0.1,
            integration_dt: 0.01,
            free_space: false,
            abort_on_singular: true,
            capture_tolerance: 0.02,
            seed: 0,
            model_path: None,
            log_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoilSettings {
    pub radius: f64,
    pub turns: f64,
    pub guard_margin: f64,
}

impl Default for CoilSettings {
    fn default() -> Self {
        CoilSettings {
            radius: 0.15,
            turns: 100.0,
            guard_margin: DEFAULT_GUARD_MARGIN,
        }
    }
}

impl CoilSettings {
    pub fn spec(&self) -> Result<CoilSpec> {
        if !(self.guard_margin >= 0.0) {
            return Err(Error::Config("coil guard margin must be non-negative".into()));
        }
        Ok(CoilSpec::new(self.radius, self.turns)?.with_guard_margin(self.guard_margin))
    }
}

/// Initial state. Quaternions are `[x, y, z, w]`, body to reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub rel_pos: [f64; 3],
    pub rel_vel: [f64; 3],
    pub quat_target: [f64; 4],
    pub omega_target: [f64; 3],
    pub quat_chaser: [f64; 4],
    pub omega_chaser: [f64; 3],
    pub h_rw: [f64; 3],
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState {
            rel_pos: [0.3, -0.4, 0.6],
            rel_vel: [0.0; 3],
            quat_target: [0.0, 0.0, 0.0, 1.0],
            omega_target: [0.01, 0.02, 0.08],
            quat_chaser: [0.0, 0.0, 0.0, 1.0],
            omega_chaser: [1e-4, 2e-4, 8e-4],
            h_rw: [0.0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinalTarget {
    pub rel_pos: [f64; 3],
    /// Attitude both satellites converge to.
    pub quat: [f64; 4],
}

impl Default for FinalTarget {
    fn default() -> Self {
        FinalTarget {
            rel_pos: [0.0, 0.0, 0.3],
            quat: [0.0, 0.0, 0.0, 1.0],
        }
    }
}

/// Random initial conditions for batch runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSettings {
    pub runs: usize,
    /// Shell radii for the initial relative position (m).
    pub shell_min: f64,
    pub shell_max: f64,
    /// Draws whose straight-line reference comes closer than this to the
    /// target are redrawn (m).
    pub min_clearance: f64,
    pub seed: u64,
}

impl Default for BatchSettings {
    fn default() -> Self {
        BatchSettings {
            runs: 40,
            shell_min: 0.5,
            shell_max: 1.0,
            min_clearance: 0.32,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub coil: CoilSettings,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub allocator: AllocatorConfig,
    #[serde(default)]
    pub gains: PdGains,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default, rename = "final")]
    pub target: FinalTarget,
    #[serde(default)]
    pub batch: BatchSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            format: SCENARIO_FORMAT.into(),
            version: SCENARIO_VERSION,
            run: RunSettings::default(),
            coil: CoilSettings::default(),
            plant: PlantConfig::default(),
            allocator: AllocatorConfig::default(),
            gains: PdGains::default(),
            initial: InitialState::default(),
            target: FinalTarget::default(),
            batch: BatchSettings::default(),
        }
    }
}

fn quat_from(q: &[f64; 4], what: &str) -> Result<UnitQuaternion<f64>> {
    let raw = Quaternion::new(q[3], q[0], q[1], q[2]);
    let n = raw.norm();
    if !(n.is_finite() && (n - 1.0).abs() <= 1e-6) {
        return Err(Error::Config(format!("{what} quaternion {q:?} is not unit length")));
    }
    Ok(UnitQuaternion::from_quaternion(raw))
}

pub fn quat_to_array(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.i, q.j, q.k, q.w]
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut sc = Self::from_toml(&text)?;
        // relative paths inside a scenario are relative to the file
        if let Some(dir) = path.parent() {
            for p in [&mut sc.run.model_path, &mut sc.run.log_path].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(sc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_toml()?)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != SCENARIO_FORMAT {
            return Err(Error::Config(format!("not a scenario file (format {:?})", self.format)));
        }
        if self.version != SCENARIO_VERSION {
            return Err(Error::Config(format!("unsupported scenario version {}", self.version)));
        }
        let r = &self.run;
        let times = [r.duration, r.reference_duration, r.control_dt, r.integration_dt];
        if !times.iter().all(|t| *t > 0.0 && t.is_finite()) {
            return Err(Error::Config("run durations and time steps must be positive".into()));
        }
        let ratio = r.control_dt / r.integration_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::Config(format!(
                "control step {} is not a multiple of the integration step {}",
                r.control_dt, r.integration_dt
            )));
        }
        if !(r.capture_tolerance >= 0.0) {
            return Err(Error::Config("capture tolerance must be non-negative".into()));
        }
        if r.n_quad < 8 || r.plant_n_quad < 8 {
            return Err(Error::Config("quadrature node counts must be at least 8".into()));
        }
        if let Some(p) = &r.model_path {
            if r.model == ModelSelector::Surrogate && !p.exists() {
                return Err(Error::Config(format!("model file {} does not exist", p.display())));
            }
        }
        self.coil.spec()?;
        self.plant.validate()?;
        self.allocator.validate()?;
        if !self.gains.is_valid() {
            return Err(Error::Config("PD gains must be positive".into()));
        }
        let i = &self.initial;
        if !finite(&[i.rel_pos, i.rel_vel, i.omega_target, i.omega_chaser, i.h_rw].concat())
            || !finite(&self.target.rel_pos)
        {
            return Err(Error::Config("initial and final states must be finite".into()));
        }
        if Vec3::from(i.rel_pos).norm() == 0.0 {
            return Err(Error::Config("initial relative position must be non-zero".into()));
        }
        quat_from(&i.quat_target, "initial target")?;
        quat_from(&i.quat_chaser, "initial chaser")?;
        quat_from(&self.target.quat, "final")?;
        let b = &self.batch;
        if !(0.0 < b.shell_min && b.shell_min <= b.shell_max && b.min_clearance >= 0.0) {
            return Err(Error::Config("batch shell radii must satisfy 0 < min <= max".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<SatelliteState> {
        let i = &self.initial;
        Ok(SatelliteState {
            rel_pos: Vec3::from(i.rel_pos),
            rel_vel: Vec3::from(i.rel_vel),
            target: Attitude::new(quat_from(&i.quat_target, "initial target")?, Vec3::from(i.omega_target)),
            chaser: Attitude::new(quat_from(&i.quat_chaser, "initial chaser")?, Vec3::from(i.omega_chaser)),
            h_rw: Vec3::from(i.h_rw),
        })
    }

    pub fn final_quat(&self) -> Result<UnitQuaternion<f64>> {
        quat_from(&self.target.quat, "final")
    }
}

/// Distance from the origin to the segment `a -> b`.
fn segment_clearance(a: &Vec3, b: &Vec3) -> f64 {
    let d = b - a;
    let t = (-a.dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (a + d * t).norm()
}

/// Copies of `base` with random initial relative positions (uniform in the
/// shell volume, redrawn while the straight-line reference comes closer to
/// the target than the clearance, or than the goal when the goal is nearer)
/// and uniformly random attitudes. Run `i` uses seed
/// `batch.seed + i`.
pub fn random_batch(base: &Scenario, runs: usize) -> Result<Vec<Scenario>> {
    base.validate()?;
    let b = &base.batch;
    let goal = Vec3::from(base.target.rel_pos);
    let clearance = b.min_clearance.min(goal.norm() * (1.0 - 1e-12));
    let mut out = Vec::with_capacity(runs);
    for i in 0..runs {
        let seed = b.seed.wrapping_add(i as u64);
        let mut rng = sample_rng(seed, 0);
        let mut pos;
        let mut tries = 0;
        loop {
            let (r3min, r3max) = (b.shell_min.powi(3), b.shell_max.powi(3));
            let rho = if r3max > r3min { rng.random_range(r3min..r3max).cbrt() } else { b.shell_min };
            let dir = random_rotation(&mut rng) * Vec3::z();
            pos = dir * rho;
            if segment_clearance(&pos, &goal) >= clearance {
                break;
            }
            tries += 1;
            if tries > 10_000 {
                return Err(Error::Config("batch clearance can not be met in the given shell".into()));
            }
        }
        let mut sc = base.clone();
        sc.run.seed = seed;
        sc.initial.rel_pos = pos.into();
        sc.initial.quat_target = quat_to_array(&random_rotation(&mut rng));
        sc.initial.quat_chaser = quat_to_array(&random_rotation(&mut rng));
        out.push(sc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let sc = Scenario::default();
        let text = sc.to_toml().unwrap();
        assert!(text.contains("format = \"emff-scenario\""));
        assert_eq!(Scenario::from_toml(&text).unwrap(), sc);
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let sc = Scenario::from_toml("format = \"emff-scenario\"\nversion = 1\n").unwrap();
        assert_eq!(sc, Scenario::default());
        let sc = Scenario::from_toml(
            "format = \"emff-scenario\"\nversion = 1\n[run]\nmodel = \"farfield\"\n",
        )
        .unwrap();
        assert_eq!(sc.run.model, ModelSelector::Farfield);
    }

    #[test]
    fn rejects_bad_files() {
        let bad = [
            "format = \"other\"\nversion = 1\n",
            "format = \"emff-scenario\"\nversion = 9\n",
            "format = \"emff-scenario\"\nversion = 1\n[run]\nbogus = 1\n",
            "format = \"emff-scenario\"\nversion = 1\n[run]\nmodel = \"surrogate\"\nmodel_path = \"/nonexistent/model.bin\"\n",
            "format = \"emff-scenario\"\nversion = 1\n[run]\ncontrol_dt = 0.1\nintegration_dt = 0.03\n",
            "format = \"emff-scenario\"\nversion = 1\n[plant]\nmass_chaser = -1.0\n",
            "format = \"emff-scenario\"\nversion = 1\n[initial]\nquat_chaser = [0.0, 0.0, 0.0, 2.0]\n",
        ];
        for text in bad {
            assert!(matches!(Scenario::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn batch_draws_are_seeded_and_clear() {
        let base = Scenario::default();
        let a = random_batch(&base, 12).unwrap();
        let b = random_batch(&base, 12).unwrap();
        assert_eq!(a, b);
        let goal = Vec3::from(base.target.rel_pos);
        let mut seeds: Vec<u64> = a.iter().map(|s| s.run.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), 12);
        for sc in &a {
            let p = Vec3::from(sc.initial.rel_pos);
            assert!(p.norm() >= 0.5 - 1e-12 && p.norm() <= 1.0 + 1e-12);
            assert!(segment_clearance(&p, &goal) >= 0.3 * (1.0 - 1e-12));
        }
    }
}
