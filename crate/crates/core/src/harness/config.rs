//! Scenario description, loaded from TOML.

use crate::adaptation::DobConfig;
use crate::controller::Gains;
use crate::delta::DeltaGeometry;
use crate::dynamics::{Environment, RotorConfig};
use crate::presense::{ObjectPrior, PresenseError, DEFAULT_PAD_HEIGHT};
use crate::spatial::{InertialParams, Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Presense(#[from] PresenseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "baseline")]
    Baseline,
    /// Pre-sensed inertia drives the scheduled gain and the position-loop mass.
    #[serde(rename = "iags", alias = "pre-only")]
    Iags,
    /// Pre-sensed start refined by the disturbance observer.
    #[serde(rename = "iags+dob")]
    IagsDob,
    /// Observer mass from zero; payload treated as a point mass.
    #[serde(rename = "dob-only")]
    DobOnly,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Iags, Mode::IagsDob, Mode::DobOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Iags => "iags",
            Mode::IagsDob => "iags+dob",
            Mode::DobOnly => "dob-only",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "iags" | "pre-only" => Ok(Mode::Iags),
            "iags+dob" | "pre+dob" => Ok(Mode::IagsDob),
            "dob-only" => Ok(Mode::DobOnly),
            other => Err(ConfigError::Invalid(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    pub sim_hz: u32,
    pub control_hz: u32,
    pub dob_hz: u32,
    pub servo_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            sim_hz: 2000,
            control_hz: 400,
            dob_hz: 100,
            servo_hz: 100,
        }
    }
}

impl Rates {
    pub fn sim_dt(&self) -> f64 {
        1.0 / self.sim_hz as f64
    }

    /// Sim ticks per execution of a task running at `hz`.
    pub fn divider(&self, hz: u32) -> u64 {
        (self.sim_hz / hz) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    pub mass: f64,
    /// Principal moments about the vehicle CoM, kg m^2.
    pub inertia: [f64; 3],
    /// Vehicle CoM in frame M (arm base origin), m.
    pub com: [f64; 3],
    pub rotors: RotorConfig,
    pub gains: Gains,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            mass: 1.379,
            inertia: [9.2e-3, 10.5e-3, 14.7e-3],
            com: [0.0, 0.0, 0.05],
            rotors: RotorConfig::default(),
            gains: Gains::default(),
        }
    }
}

impl VehicleConfig {
    pub fn inertial(&self) -> Result<InertialParams, ConfigError> {
        InertialParams::new(
            self.mass,
            Vec3::from(self.com),
            Mat3::from_diagonal(&Vec3::from(self.inertia)),
        )
        .map_err(|e| ConfigError::Invalid(format!("vehicle: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub p: [f64; 3],
}

/// Sinusoid added on top of the arm waypoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillation {
    pub axis: [f64; 3],
    pub amplitude: f64,
    pub frequency: f64,
    pub start: f64,
    pub cycles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmConfig {
    pub geometry: DeltaGeometry,
    pub k_theta: f64,
    pub rate_limit: f64,
    /// End-effector targets in frame M.
    pub waypoints: Vec<Waypoint>,
    pub oscillation: Option<Oscillation>,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            geometry: DeltaGeometry::default(),
            k_theta: 20.0,
            rate_limit: 6.0,
            waypoints: vec![Waypoint {
                t: 0.0,
                p: [0.0, 0.0, -0.17],
            }],
            oscillation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `dims` = [diameter, diameter, height].
    Cylinder,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub beta: f64,
    pub alpha: [f64; 3],
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    /// Catalog label used to pick the prior.
    #[serde(default)]
    pub label: Option<String>,
    /// Explicit prior; takes precedence over `label`.
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    /// Catalog file; the built-in catalog when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    pub shape: Shape,
    pub dims: [f64; 3],
    /// True mass, kg.
    pub mass: f64,
    /// Time the object becomes rigidly attached. Zero means carried from the
    /// start with the grasp already latched.
    #[serde(default)]
    pub attach_time: f64,
    #[serde(default = "default_pad")]
    pub pad_height: f64,
    /// Std of the synthetic observation noise, m.
    #[serde(default)]
    pub cloud_noise: f64,
}

fn default_pad() -> f64 {
    DEFAULT_PAD_HEIGHT
}

impl ObjectConfig {
    /// True inertia about the object CoM (uniform solid).
    pub fn true_inertia(&self) -> Mat3 {
        let m = self.mass;
        let [a, b, h] = self.dims;
        match self.shape {
            Shape::Cylinder => {
                let r = 0.25 * (a + b);
                let side = m * (3.0 * r * r + h * h) / 12.0;
                Mat3::from_diagonal(&Vec3::new(side, side, 0.5 * m * r * r))
            }
            Shape::Box => Mat3::from_diagonal(&Vec3::new(
                m * (b * b + h * h) / 12.0,
                m * (a * a + h * h) / 12.0,
                m * (a * a + b * b) / 12.0,
            )),
        }
    }

    pub fn true_grasp_offset(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, -0.5 * self.dims[2] - self.pad_height)
    }

    pub fn explicit_prior(&self) -> Option<ObjectPrior> {
        self.prior.map(|p| ObjectPrior {
            label: self.label.clone().unwrap_or_else(|| "explicit".into()),
            beta: p.beta,
            alpha: p.alpha,
            rho: p.rho,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    /// Vehicle (frame M origin) waypoints in the world frame.
    pub waypoints: Vec<Waypoint>,
    pub yaw: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            waypoints: vec![Waypoint {
                t: 0.0,
                p: [0.0, 0.0, 1.0],
            }],
            yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraspConfig {
    pub threshold: f64,
    pub persistence: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            persistence: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Evaluation window `[start, end]`, s. `end <= start` means "to the end".
    pub window: [f64; 2],
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { window: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub arm: ArmConfig,
    #[serde(default)]
    pub object: Option<ObjectConfig>,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub environment: Environment,
    #[serde(default)]
    pub dob: DobConfig,
    #[serde(default)]
    pub grasp: GraspConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_mode() -> Mode {
    Mode::IagsDob
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        // catalog paths are relative to the scenario file
        if let Some(obj) = cfg.object.as_mut() {
            if let (Some(cat), Some(dir)) = (obj.catalog.as_mut(), path.parent()) {
                if cat.is_relative() {
                    *cat = dir.join(&*cat);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive".into());
        }
        let r = &self.rates;
        for (name, hz) in [
            ("control_hz", r.control_hz),
            ("dob_hz", r.dob_hz),
            ("servo_hz", r.servo_hz),
        ] {
            if hz == 0 || !r.sim_hz.is_multiple_of(hz) {
                return bad(format!("{name} = {hz} must divide sim_hz = {}", r.sim_hz));
            }
        }
        if r.sim_dt() > crate::dynamics::MAX_STEP {
            return bad(format!("sim_hz = {} gives a step above the integrator limit", r.sim_hz));
        }
        self.vehicle.inertial()?;
        self.vehicle
            .rotors
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.vehicle.gains.validate().map_err(ConfigError::Invalid)?;
        self.arm
            .geometry
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.arm.k_theta >= 0.0) || !(self.arm.rate_limit > 0.0) {
            return bad("arm k_theta must be non-negative and rate_limit positive".into());
        }
        check_waypoints("arm", &self.arm.waypoints)?;
        check_waypoints("trajectory", &self.trajectory.waypoints)?;
        if let Some(o) = &self.arm.oscillation {
            if !(o.frequency > 0.0) || !(o.cycles >= 0.0) || Vec3::from(o.axis).norm() == 0.0 {
                return bad("oscillation needs positive frequency, non-negative cycles and a nonzero axis".into());
            }
        }
        if let Some(obj) = &self.object {
            if !(obj.mass > 0.0) || obj.dims.iter().any(|d| !(*d > 0.0)) {
                return bad("object mass and dims must be positive".into());
            }
            if obj.label.is_none() && obj.prior.is_none() {
                return bad("object needs a catalog label or an explicit prior".into());
            }
            if !(obj.attach_time >= 0.0) || !(obj.pad_height >= 0.0) || !(obj.cloud_noise >= 0.0) {
                return bad("object attach_time, pad_height and cloud_noise must be non-negative".into());
            }
            if let Some(p) = obj.explicit_prior() {
                p.validate()?;
            }
        }
        let g = &self.grasp;
        if !(g.threshold > 0.0) || !(g.persistence > 0.0) {
            return bad("grasp threshold and persistence must be positive".into());
        }
        if !(self.dob.gain > 0.0) || !(self.dob.cutoff_hz > 0.0) {
            return bad("dob gain and cutoff must be positive".into());
        }
        Ok(())
    }
}

fn check_waypoints(what: &str, w: &[Waypoint]) -> Result<(), ConfigError> {
    if w.is_empty() {
        return Err(ConfigError::Invalid(format!("{what} needs at least one waypoint")));
    }
    if w.windows(2).any(|p| !(p[1].t > p[0].t)) {
        return Err(ConfigError::Invalid(format!("{what} waypoint times must increase")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "hover"
duration = 2.0
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.rates, Rates::default());
        assert_eq!(cfg.mode, Mode::IagsDob);
        assert!(cfg.object.is_none());
    }

    #[test]
    fn roundtrip_through_toml() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        let again = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_rates_that_do_not_divide() {
        let text = format!("{MINIMAL}\n[rates]\nsim_hz = 1000\n");
        assert!(matches!(ScenarioConfig::parse(&text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{MINIMAL}\nspeed = 3\n");
        assert!(matches!(ScenarioConfig::parse(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("pre-only".parse::<Mode>().unwrap(), Mode::Iags);
        assert!("pid".parse::<Mode>().is_err());
    }

    #[test]
    fn cylinder_truth() {
        let obj = ObjectConfig {
            label: Some("coffee can".into()),
            prior: None,
            catalog: None,
            shape: Shape::Cylinder,
            dims: [0.1, 0.1, 0.12],
            mass: 0.219,
            attach_time: 3.0,
            pad_height: 0.01,
            cloud_noise: 0.0,
        };
        let j = obj.true_inertia();
        assert!((j[(2, 2)] - 0.5 * 0.219 * 0.05 * 0.05).abs() < 1e-15);
        assert!((j[(0, 0)] - 0.219 * (3.0 * 0.0025 + 0.0144) / 12.0).abs() < 1e-15);
        assert!((obj.true_grasp_offset().z + 0.07).abs() < 1e-15);
    }
}
