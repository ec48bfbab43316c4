//! Scenario files: one JSON document holds everything a run needs —
//! world reference, sensor suite, controller mode, noise settings and the
//! seed — so a result is a pure function of the file plus CLI overrides.

use crawler_core::vehicle::check_collision;
use crawler_core::world::load_world;
use crawler_core::{
    FilterConfig, GlobalPlannerConfig, LidarConfig, LidarMapConfig, LocalPlannerConfig,
    LogOddsConfig, MotionNoise, Pose2, SonarMapConfig, StateVector, UltrasonicConfig,
    VehicleConfig, WorldModel,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    World(#[from] crawler_core::world::WorldError),
    #[error(transparent)]
    Sensor(#[from] crawler_core::sensors::SensorConfigError),
    #[error(transparent)]
    Mapping(#[from] crawler_core::mapping::MappingError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("invalid scenario: {0}")]
    Config(String),
}

/// Which sensor stack feeds the run. `Both` mounts the sonar ring and the
/// lidar together; the benchmark instead runs the two pure suites
/// side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Ultrasonic,
    Lidar,
    Both,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Ultrasonic => "ultrasonic",
            Suite::Lidar => "lidar",
            Suite::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleopStep {
    /// Time the command takes effect, seconds from run start.
    pub t: f64,
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    /// Drive to a world-frame goal, replanning as the map evolves.
    Navigate { goal: [f64; 2] },
    /// Chase frontiers until no reachable boundary with unknown space
    /// remains.
    Explore,
    /// Follow a timed open-loop command script; mapping and localization
    /// still run.
    Teleop { script: Vec<TeleopStep> },
}

/// Map construction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingSection {
    /// Grid cell edge length, meters.
    pub resolution: f64,
    pub log_odds: LogOddsConfig,
    pub sonar: SonarMapConfig,
    pub lidar: LidarMapConfig,
}

impl Default for MappingSection {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            log_odds: LogOddsConfig::default(),
            sonar: SonarMapConfig::default(),
            lidar: LidarMapConfig::default(),
        }
    }
}

fn default_suite() -> Suite {
    Suite::Ultrasonic
}

fn default_dt() -> f64 {
    0.1
}

fn default_goal_tolerance() -> f64 {
    0.2
}

fn default_retarget_ticks() -> u64 {
    25
}

fn default_stuck_ticks() -> u64 {
    30
}

fn default_tick_budget() -> u64 {
    100_000
}

fn zero_noise() -> MotionNoise {
    MotionNoise {
        sigma_v: 0.0,
        sigma_omega: 0.0,
        floor_v: 0.0,
        floor_omega: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// World file path, relative to the scenario file.
    pub world: PathBuf,
    #[serde(default = "default_suite")]
    pub suite: Suite,
    pub start: StartPose,
    pub mode: Mode,
    /// Wall-clock budget of the run, seconds.
    pub duration_s: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ultrasonic: UltrasonicConfig,
    #[serde(default)]
    pub lidar: LidarConfig,
    #[serde(default)]
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub mapping: MappingSection,
    #[serde(default)]
    pub localization: FilterConfig,
    #[serde(default)]
    pub local_planner: LocalPlannerConfig,
    #[serde(default)]
    pub global_planner: GlobalPlannerConfig,
    /// Noise injected into executed commands (ground truth motion);
    /// defaults to none so runs are exactly repeatable dead-reckoned.
    #[serde(default = "zero_noise")]
    pub actuation_noise: MotionNoise,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    /// Map with the true pose instead of the filter estimate
    /// (sensor-fidelity diagnostics).
    #[serde(default)]
    pub ground_truth_pose_mapping: bool,
    /// Localize against the true world instead of the online map
    /// (filter diagnostics).
    #[serde(default)]
    pub ground_truth_likelihood_map: bool,
    /// Exploration re-targets the nearest frontier at least this often.
    #[serde(default = "default_retarget_ticks")]
    pub explore_retarget_ticks: u64,
    /// Consecutive zero-velocity ticks before a forced replan.
    #[serde(default = "default_stuck_ticks")]
    pub stuck_replan_ticks: u64,
    #[serde(default = "default_tick_budget")]
    pub tick_budget: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Parse {
            path: "<inline scenario>".into(),
            message: e.to_string(),
        })
    }

    pub fn start_state(&self) -> StateVector {
        StateVector::new(self.start.x, self.start.y, self.start.yaw)
    }

    pub fn start_pose(&self) -> Pose2 {
        Pose2::new(self.start.x, self.start.y, self.start.yaw)
    }

    pub fn max_ticks(&self) -> u64 {
        (self.duration_s / self.dt).ceil().max(0.0) as u64
    }

    /// Checks everything that can fail before the first tick.
    pub fn validate(&self, world: &WorldModel) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return fail(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if self.max_ticks() > self.tick_budget {
            return fail(format!(
                "{} ticks exceed the budget of {}",
                self.max_ticks(),
                self.tick_budget
            ));
        }
        if !(self.goal_tolerance > 0.0) {
            return fail("goal_tolerance must be positive".into());
        }
        if !(self.vehicle.v_max > 0.0
            && self.vehicle.omega_max > 0.0
            && self.vehicle.footprint_radius > 0.0)
        {
            return fail("vehicle limits and footprint must be positive".into());
        }
        if !(self.mapping.resolution > 0.0) {
            return fail("mapping resolution must be positive".into());
        }
        self.mapping.log_odds.validate()?;
        match self.suite {
            Suite::Ultrasonic => self.ultrasonic.validate()?,
            Suite::Lidar => self.lidar.validate()?,
            Suite::Both => {
                self.ultrasonic.validate()?;
                self.lidar.validate()?;
            }
        }
        if !self.ground_truth_pose_mapping {
            let loc = &self.localization;
            if loc.particles == 0 {
                return fail("localization.particles must be at least 1".into());
            }
            if !(loc.sensor_sigma > 0.0) {
                return fail("localization.sensor_sigma must be positive".into());
            }
            if !(0.0..=1.0).contains(&loc.resample_threshold) {
                return fail("localization.resample_threshold must be in [0, 1]".into());
            }
            if loc.lidar_beam_stride == 0 {
                return fail("localization.lidar_beam_stride must be at least 1".into());
            }
        }
        let noise_ok = |n: &MotionNoise| {
            n.sigma_v >= 0.0 && n.sigma_omega >= 0.0 && n.floor_v >= 0.0 && n.floor_omega >= 0.0
        };
        if !noise_ok(&self.actuation_noise) || !noise_ok(&self.localization.motion_noise) {
            return fail("noise parameters must be non-negative".into());
        }
        match &self.mode {
            Mode::Navigate { goal } => {
                if !world.bounds.contains(crawler_core::Vec2::new(goal[0], goal[1])) {
                    return fail(format!("goal {goal:?} lies outside the world bounds"));
                }
            }
            Mode::Explore => {}
            Mode::Teleop { script } => {
                let mut prev = 0.0;
                for step in script {
                    if !(0.0..=self.duration_s).contains(&step.t) {
                        return fail(format!("teleop step at t={} outside the run", step.t));
                    }
                    if step.t < prev {
                        return fail("teleop script times must be non-decreasing".into());
                    }
                    prev = step.t;
                }
            }
        }
        let world0 = world.active_at(0.0);
        let start = self.start_state();
        if !world.bounds.contains(start.position()) {
            return fail("start pose lies outside the world bounds".into());
        }
        if check_collision(&world0, &start, self.vehicle.footprint_radius) {
            return fail("start pose is in collision".into());
        }
        Ok(())
    }
}

/// A parsed scenario together with its resolved world.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub world: WorldModel,
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads and validates a scenario file; the world path inside it resolves
/// relative to the scenario's directory.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, SimError> {
    let text = read(path)?;
    let config: ScenarioConfig = serde_json::from_str(&text).map_err(|e| SimError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let world_path = match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(&config.world),
        _ => config.world.clone(),
    };
    let world = load_world(&read(&world_path)?)?;
    config.validate(&world)?;
    Ok(LoadedScenario { config, world })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(mode: &str) -> String {
        format!(
            r#"{{
              "name": "t", "world": "w.json",
              "start": {{"x": 1.0, "y": 1.0}},
              "mode": {mode},
              "duration_s": 5.0
            }}"#
        )
    }

    fn test_world() -> WorldModel {
        WorldModel::new("room", crawler_core::Rect::new(6.0, 6.0), Default::default(), vec![])
            .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg =
            ScenarioConfig::from_json(&minimal(r#"{"kind": "explore"}"#)).unwrap();
        assert_eq!(cfg.dt, 0.1);
        assert_eq!(cfg.suite, Suite::Ultrasonic);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.mapping.resolution, 0.1);
        assert_eq!(cfg.actuation_noise.sigma_v, 0.0);
        assert_eq!(cfg.max_ticks(), 50);
        cfg.validate(&test_world()).unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{
          "name": "t", "world": "w.json",
          "start": {"x": 1.0, "y": 1.0},
          "mode": {"kind": "explore"},
          "duration_s": 5.0,
          "warp_drive": true
        }"#;
        assert!(ScenarioConfig::from_json(text).is_err());
    }

    #[test]
    fn tick_budget_is_enforced() {
        let mut cfg =
            ScenarioConfig::from_json(&minimal(r#"{"kind": "explore"}"#)).unwrap();
        cfg.duration_s = 1e9;
        let err = cfg.validate(&test_world()).unwrap_err();
        assert!(matches!(err, SimError::Config(_)));
    }

    #[test]
    fn colliding_start_is_rejected() {
        let mut cfg =
            ScenarioConfig::from_json(&minimal(r#"{"kind": "explore"}"#)).unwrap();
        cfg.start = StartPose { x: 0.05, y: 1.0, yaw: 0.0 };
        let err = cfg.validate(&test_world()).unwrap_err();
        assert!(err.to_string().contains("collision"), "{err}");
    }

    #[test]
    fn goal_outside_bounds_is_rejected() {
        let cfg = ScenarioConfig::from_json(&minimal(
            r#"{"kind": "navigate", "goal": [99.0, 1.0]}"#,
        ))
        .unwrap();
        assert!(cfg.validate(&test_world()).is_err());
    }

    #[test]
    fn teleop_script_times_must_be_ordered() {
        let cfg = ScenarioConfig::from_json(&minimal(
            r#"{"kind": "teleop", "script": [{"t": 2.0, "v": 0.1, "omega": 0.0},
                                             {"t": 1.0, "v": 0.0, "omega": 0.0}]}"#,
        ))
        .unwrap();
        assert!(cfg.validate(&test_world()).is_err());
    }
}
