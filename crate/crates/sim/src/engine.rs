//! The closed-loop simulator. Each tick runs sense -> localize -> map ->
//! plan -> act against the ground-truth world, while the controller only
//! ever sees sensor readings and its own map. Noise comes from per-purpose
//! RNG streams of one seed, so any single stage can be re-run bit-for-bit
//! without disturbing the others.

use crate::metrics::MapMetrics;
use crate::metrics::TruthContext;
use crate::scenario::{LoadedScenario, Mode, ScenarioConfig, SimError, Suite};
use crawler_core::localization::{
    estimate, predict, resample_if_needed, update_weights, RangeMap, SensorObservation,
};
use crawler_core::mapping::{integrate_lidar_scan, integrate_sonar_reading};
use crawler_core::planning::{
    plan_local, plan_to_nearest_frontier, replan, Cell, LocalDecision, SensedObstacles,
};
use crawler_core::sensors::{lidar_scan, sample_sonar_ring};
use crawler_core::vehicle::{check_collision, step_kinematics};
use crawler_core::{
    ClassifiedGrid, GridPath, LidarScan, MotionNoise, OccupancyGrid, ParticleSet, Pose2,
    RangeReading, Real, SensorPose, Vec2, VelocityCommand,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

// RNG stream labels. Keep these stable: golden outputs depend on them.
const STREAM_SONAR: u64 = 1;
const STREAM_LIDAR: u64 = 2;
const STREAM_FILTER: u64 = 3;
const STREAM_ACTUATION: u64 = 4;
const STREAM_INIT: u64 = 5;

fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

/// Sensor cadence in ticks: a 10 Hz device on a 10 Hz loop fires every
/// tick, a 1 Hz device every tenth.
fn period_ticks(rate_hz: f64, dt: f64) -> u64 {
    let p = (1.0 / (rate_hz * dt)).round();
    if p.is_finite() && p >= 1.0 {
        p as u64
    } else {
        1
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Navigate: the true pose came within the goal tolerance.
    GoalReached,
    /// Explore: no reachable frontier remains.
    CoverageComplete,
    /// The planner found no route to the goal or the goal cell is blocked.
    NoPath,
    /// The vehicle footprint hit an obstacle or the bounds; the run stops
    /// at the offending tick.
    Collision,
    /// The duration budget ran out first. Teleop scripts normally end
    /// here.
    Timeout,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::GoalReached => "goal_reached",
            RunStatus::CoverageComplete => "coverage_complete",
            RunStatus::NoPath => "no_path",
            RunStatus::Collision => "collision",
            RunStatus::Timeout => "timeout",
        })
    }
}

/// One row of the pose trace: the state at the start of the tick (the
/// pose the sensors sampled from) plus the command issued during it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    /// Simulation time at the start of the tick, seconds.
    pub t: f64,
    /// True pose `[x, y, yaw]`.
    pub truth: [f64; 3],
    /// Filter estimate `[x, y, yaw]` (equal to truth when the filter is
    /// bypassed).
    pub estimate: [f64; 3],
    /// Trace of the filter covariance; 0 when the filter is bypassed.
    pub cov_trace: f64,
    /// Executed command `[v, omega]` before actuation noise.
    pub cmd: [f64; 2],
}

/// The raw readings produced during one tick. Ticks where a sensor did
/// not fire hold an empty ring / `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub tick: u64,
    pub sonar: Vec<RangeReading>,
    pub lidar: Option<LidarScan>,
}

/// Everything a run produced. `pose_trace`, `readings` and
/// `coverage_trace` all have exactly one entry per executed tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: String,
    pub suite: Suite,
    pub seed: u64,
    pub status: RunStatus,
    /// Number of executed ticks.
    pub ticks: u64,
    /// Global replans after the initial plan.
    pub replans: u64,
    /// Ticks spent in collision (0 or 1: the run stops on contact).
    pub collision_ticks: u64,
    /// True pose after the last executed tick.
    pub final_truth: [f64; 3],
    pub final_estimate: [f64; 3],
    pub metrics: MapMetrics,
    pub pose_trace: Vec<TickRecord>,
    pub readings: Vec<SensorFrame>,
    pub coverage_trace: Vec<f64>,
    pub final_map: OccupancyGrid,
}

impl SimResult {
    /// Whether the run counts as a success for its mode: reaching the
    /// goal, completing coverage, or (teleop only) running out the clock.
    pub fn is_success(&self, mode: &Mode) -> bool {
        match self.status {
            RunStatus::GoalReached | RunStatus::CoverageComplete => true,
            RunStatus::Timeout => matches!(mode, Mode::Teleop { .. }),
            RunStatus::NoPath | RunStatus::Collision => false,
        }
    }
}

/// Planning state shared by the navigate and explore modes: the current
/// path, the replan counter, and (explore) frontier targets that never
/// opened up and are temporarily off the menu.
struct Navigator<'a> {
    cfg: &'a ScenarioConfig,
    path: Option<GridPath>,
    replans: u64,
    planned_once: bool,
    banned: BTreeSet<Cell>,
}

impl<'a> Navigator<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        Self {
            cfg,
            path: None,
            replans: 0,
            planned_once: false,
            banned: BTreeSet::new(),
        }
    }

    fn note_plan(&mut self) {
        if self.planned_once {
            self.replans += 1;
        }
        self.planned_once = true;
    }

    /// Drops the current path; the next tick plans afresh. Exploration
    /// also retires the current target, assuming it is unreachable.
    fn force_replan(&mut self, explore: bool) {
        if explore {
            self.ban_target();
        }
        self.path = None;
    }

    /// Bans the current target cell and its immediate neighbourhood so
    /// the frontier search moves on instead of re-picking it.
    fn ban_target(&mut self) {
        if let Some(p) = &self.path {
            if let Some(&(c, r)) = p.cells.last() {
                for dc in -2i64..=2 {
                    for dr in -2i64..=2 {
                        let cc = c as i64 + dc;
                        let rr = r as i64 + dr;
                        if cc >= 0 && rr >= 0 {
                            self.banned.insert((cc as usize, rr as usize));
                        }
                    }
                }
            }
        }
        self.path = None;
    }

    fn navigate(
        &mut self,
        map: &ClassifiedGrid,
        pose: Pose2,
        goal: Vec2,
        sensed: &SensedObstacles<f64>,
    ) -> Result<VelocityCommand, RunStatus> {
        if self.path.is_none() {
            match replan(map, pose, goal, &self.cfg.global_planner) {
                Ok(p) => {
                    self.note_plan();
                    self.path = Some(p);
                }
                Err(_) => return Err(RunStatus::NoPath),
            }
        }
        let follow = |path: &GridPath| {
            plan_local(
                pose,
                path,
                sensed,
                &self.cfg.local_planner,
                &self.cfg.vehicle,
            )
        };
        match follow(self.path.as_ref().unwrap()) {
            LocalDecision::Command(cmd) => Ok(cmd),
            LocalDecision::Replan => {
                match replan(map, pose, goal, &self.cfg.global_planner) {
                    Ok(p) => {
                        self.note_plan();
                        self.path = Some(p);
                    }
                    Err(_) => return Err(RunStatus::NoPath),
                }
                match follow(self.path.as_ref().unwrap()) {
                    LocalDecision::Command(cmd) => Ok(cmd),
                    // Still obstructed: hold position and let the next
                    // tick's sensing settle the map.
                    LocalDecision::Replan => Ok(VelocityCommand::stop()),
                }
            }
        }
    }

    /// Picks a new frontier target when there is none, when the current
    /// one is reached, or on the periodic refresh; then follows the path.
    fn explore(
        &mut self,
        map: &ClassifiedGrid,
        pose: Pose2,
        sensed: &SensedObstacles<f64>,
        tick: u64,
    ) -> Result<VelocityCommand, RunStatus> {
        let need_target = match &self.path {
            None => true,
            Some(p) => {
                let target = *p.world_waypoints.last().unwrap();
                if pose.position().distance(target) <= self.cfg.local_planner.lookahead {
                    // Arrived and the frontier did not open: retire it.
                    self.ban_target();
                    true
                } else {
                    self.cfg.explore_retarget_ticks > 0
                        && tick > 0
                        && tick % self.cfg.explore_retarget_ticks == 0
                }
            }
        };
        if need_target && !self.pick_frontier(map, pose)? {
            return Ok(VelocityCommand::stop());
        }
        let follow = |path: &GridPath| {
            plan_local(
                pose,
                path,
                sensed,
                &self.cfg.local_planner,
                &self.cfg.vehicle,
            )
        };
        match follow(self.path.as_ref().unwrap()) {
            LocalDecision::Command(cmd) => Ok(cmd),
            LocalDecision::Replan => {
                if !self.pick_frontier(map, pose)? {
                    return Ok(VelocityCommand::stop());
                }
                match follow(self.path.as_ref().unwrap()) {
                    LocalDecision::Command(cmd) => Ok(cmd),
                    LocalDecision::Replan => Ok(VelocityCommand::stop()),
                }
            }
        }
    }

    /// Plans to the nearest frontier. `Ok(false)` means the map holds no
    /// free cell yet (evidence is still accumulating) and the robot should
    /// wait in place rather than declare coverage complete. Bans are
    /// permanent: a frontier that never opened when visited keeps its new
    /// approach cells as the map grows, so exhausting every unbanned
    /// target means the remaining unknown space is unlearnable.
    fn pick_frontier(&mut self, map: &ClassifiedGrid, pose: Pose2) -> Result<bool, RunStatus> {
        match plan_to_nearest_frontier(map, pose, &self.cfg.global_planner, &self.banned) {
            Ok(Some(p)) => {
                self.note_plan();
                self.path = Some(p);
                Ok(true)
            }
            Ok(None) => {
                if !has_free_cell(map) {
                    return Ok(false);
                }
                Err(RunStatus::CoverageComplete)
            }
            Err(_) => Err(RunStatus::NoPath),
        }
    }
}

fn has_free_cell(map: &ClassifiedGrid) -> bool {
    for r in 0..map.height() {
        for c in 0..map.width() {
            if map.get(c, r) == crawler_core::CellState::Free {
                return true;
            }
        }
    }
    false
}

/// Adds actuation noise to the command the vehicle actually executes.
fn perturb(cmd: VelocityCommand, noise: &MotionNoise, rng: &mut ChaCha8Rng) -> VelocityCommand {
    let sv = noise.sigma_v * cmd.v.abs() + noise.floor_v;
    let so = noise.sigma_omega * cmd.omega.abs() + noise.floor_omega;
    if sv <= 0.0 && so <= 0.0 {
        return cmd;
    }
    VelocityCommand {
        v: cmd.v + sv * f64::randn(rng),
        omega: cmd.omega + so * f64::randn(rng),
    }
}

/// Looks up the teleop command active at time `t` (the last step whose
/// start time has passed).
fn teleop_cmd(script: &[crate::scenario::TeleopStep], t: f64) -> VelocityCommand {
    script
        .iter()
        .rev()
        .find(|s| s.t <= t + 1e-9)
        .map(|s| VelocityCommand::new(s.v, s.omega))
        .unwrap_or_else(VelocityCommand::stop)
}

/// Runs a scenario to completion. `seed` and `suite` override the file's
/// values when given (the benchmark uses both); everything else comes
/// from the scenario.
pub fn run_scenario(
    scenario: &LoadedScenario,
    seed: Option<u64>,
    suite: Option<Suite>,
) -> Result<SimResult, SimError> {
    let mut cfg = scenario.config.clone();
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(suite) = suite {
        cfg.suite = suite;
    }
    cfg.validate(&scenario.world)?;
    let world = &scenario.world;

    let dt = cfg.dt;
    let max_ticks = cfg.max_ticks();
    let use_sonar = matches!(cfg.suite, Suite::Ultrasonic | Suite::Both);
    let use_lidar = matches!(cfg.suite, Suite::Lidar | Suite::Both);
    let sonar_period = period_ticks(cfg.ultrasonic.sample_rate_hz, dt);
    let lidar_period = period_ticks(cfg.lidar.scan_rate_hz, dt);
    let mounts = cfg.ultrasonic.mount_angles.clone();

    let mut rng_sonar = stream(cfg.seed, STREAM_SONAR);
    let mut rng_lidar = stream(cfg.seed, STREAM_LIDAR);
    let mut rng_filter = stream(cfg.seed, STREAM_FILTER);
    let mut rng_act = stream(cfg.seed, STREAM_ACTUATION);

    let mut grid = OccupancyGrid::for_bounds(world.bounds, cfg.mapping.resolution, cfg.mapping.log_odds)?;
    let truth_ctx = TruthContext::from_world(
        world,
        cfg.mapping.resolution,
        Vec2::new(cfg.start.x, cfg.start.y),
    )?;

    let mut truth = cfg.start_state();
    let mut particles: Option<ParticleSet> = if cfg.ground_truth_pose_mapping {
        None
    } else {
        let mut rng_init = stream(cfg.seed, STREAM_INIT);
        Some(ParticleSet::around_pose(
            cfg.start_pose(),
            cfg.localization.initial_sigma_xy,
            cfg.localization.initial_sigma_yaw,
            cfg.localization.particles,
            &mut rng_init,
        ))
    };

    let mut nav = Navigator::new(&cfg);
    let mut last_cmd = VelocityCommand::stop();
    let mut last_sensed: SensedObstacles<f64> = SensedObstacles::none();
    let mut stuck_ticks: u64 = 0;
    let mut collision_ticks: u64 = 0;

    let mut pose_trace: Vec<TickRecord> = Vec::new();
    let mut readings: Vec<SensorFrame> = Vec::new();
    let mut coverage_trace: Vec<f64> = Vec::new();
    let mut final_estimate = cfg.start_pose();

    let mut status = RunStatus::Timeout;

    for tick in 0..max_ticks {
        let t = tick as f64 * dt;
        let world_now = world.active_at(t);

        // Termination check against the true pose, so a reported success
        // is a physical one.
        if let Mode::Navigate { goal } = &cfg.mode {
            let goal = Vec2::new(goal[0], goal[1]);
            if truth.position().distance(goal) <= cfg.goal_tolerance {
                status = RunStatus::GoalReached;
                break;
            }
        }

        // Sense from the true pose.
        let sonar_frame: Vec<RangeReading> = if use_sonar && tick % sonar_period == 0 {
            sample_sonar_ring(&world_now, truth.pose(), &cfg.ultrasonic, tick, &mut rng_sonar)
        } else {
            Vec::new()
        };
        let lidar_frame: Option<LidarScan> = if use_lidar && tick % lidar_period == 0 {
            Some(lidar_scan(&world_now, truth.pose(), &cfg.lidar, tick, &mut rng_lidar))
        } else {
            None
        };
        let sensed_any = !sonar_frame.is_empty() || lidar_frame.is_some();

        // The map as it stood before this tick's readings: the filter
        // scores readings against it, and hits it already explains are
        // not treated as new obstacles.
        let pre_map = if sensed_any { Some(grid.classify()) } else { None };

        // Localize.
        let (est_pose, cov_trace) = match particles.as_mut() {
            Some(ps) => {
                predict(ps, last_cmd, dt, &cfg.localization.motion_noise, &mut rng_filter);
                if sensed_any {
                    let range_map = if cfg.ground_truth_likelihood_map {
                        RangeMap::World(&world_now)
                    } else {
                        RangeMap::Grid(pre_map.as_ref().unwrap())
                    };
                    if !sonar_frame.is_empty() {
                        update_weights(
                            ps,
                            &SensorObservation::SonarRing {
                                readings: &sonar_frame,
                                mount_angles: &mounts,
                            },
                            &range_map,
                            cfg.localization.sensor_sigma,
                            cfg.localization.outlier_weight,
                            cfg.ultrasonic.max_range,
                        );
                    }
                    if let Some(scan) = &lidar_frame {
                        update_weights(
                            ps,
                            &SensorObservation::Lidar {
                                scan,
                                stride: cfg.localization.lidar_beam_stride,
                            },
                            &range_map,
                            cfg.localization.sensor_sigma,
                            cfg.localization.outlier_weight,
                            cfg.lidar.max_range,
                        );
                    }
                    resample_if_needed(ps, cfg.localization.resample_threshold, &mut rng_filter);
                }
                let est = estimate(ps);
                (est.pose, est.cov_trace())
            }
            None => (truth.pose(), 0.0),
        };
        final_estimate = est_pose;

        // Map from the pose the controller believes in.
        let map_pose = if cfg.ground_truth_pose_mapping {
            truth.pose()
        } else {
            est_pose
        };
        for reading in &sonar_frame {
            let sensor = SensorPose {
                position: map_pose.position(),
                heading: map_pose.yaw + mounts[reading.sensor_index],
            };
            integrate_sonar_reading(&mut grid, sensor, reading, &cfg.mapping.sonar, tick)?;
        }
        if let Some(scan) = &lidar_frame {
            integrate_lidar_scan(&mut grid, map_pose, scan, &cfg.mapping.lidar, tick)?;
        }

        let classified = grid.classify();
        let coverage = truth_ctx.coverage(&classified);

        // Project this tick's hits for the local planner, flagging the
        // ones the pre-tick map already knew about.
        if sensed_any {
            let mut sensed = if sonar_frame.is_empty() {
                SensedObstacles::none()
            } else {
                SensedObstacles::from_sonar_ring(map_pose, &sonar_frame, &mounts)
            };
            if let Some(scan) = &lidar_frame {
                let mut from_lidar =
                    SensedObstacles::from_lidar(map_pose, scan, cfg.localization.lidar_beam_stride);
                sensed.points.append(&mut from_lidar.points);
            }
            sensed.mark_expected(pre_map.as_ref().unwrap());
            last_sensed = sensed;
        }

        // Plan.
        let decision = match &cfg.mode {
            Mode::Teleop { script } => Ok(teleop_cmd(script, t)),
            Mode::Navigate { goal } => nav.navigate(
                &classified,
                map_pose,
                Vec2::new(goal[0], goal[1]),
                &last_sensed,
            ),
            Mode::Explore => nav.explore(&classified, map_pose, &last_sensed, tick),
        };
        let cmd = match decision {
            Ok(cmd) => cfg.vehicle.clamp(cmd),
            Err(end) => {
                status = end;
                break;
            }
        };

        // A controller that sits still is wedged (a blocked front sector
        // with a clear map, say); force a fresh plan.
        if !matches!(cfg.mode, Mode::Teleop { .. }) {
            if cmd.v.abs() < 1e-3 && cmd.omega.abs() < 1e-3 {
                stuck_ticks += 1;
                if stuck_ticks >= cfg.stuck_replan_ticks {
                    nav.force_replan(matches!(cfg.mode, Mode::Explore));
                    stuck_ticks = 0;
                }
            } else {
                stuck_ticks = 0;
            }
        }

        // Act. Noise applies to the executed motion, not the command the
        // filter was told about.
        let executed = perturb(cmd, &cfg.actuation_noise, &mut rng_act);
        let next_truth = step_kinematics(&truth, executed, dt);
        let collided = check_collision(&world_now, &next_truth, cfg.vehicle.footprint_radius);

        pose_trace.push(TickRecord {
            tick,
            t,
            truth: [truth.x, truth.y, truth.yaw],
            estimate: [est_pose.x, est_pose.y, est_pose.yaw],
            cov_trace,
            cmd: [cmd.v, cmd.omega],
        });
        readings.push(SensorFrame {
            tick,
            sonar: sonar_frame,
            lidar: lidar_frame,
        });
        coverage_trace.push(coverage);

        if collided {
            collision_ticks = 1;
            status = RunStatus::Collision;
            break;
        }
        truth = next_truth;
        last_cmd = cmd;
    }

    let final_classified = grid.classify();
    let truth_xy: Vec<Vec2> = pose_trace
        .iter()
        .map(|r| Vec2::new(r.truth[0], r.truth[1]))
        .collect();
    let est_xy: Vec<Vec2> = pose_trace
        .iter()
        .map(|r| Vec2::new(r.estimate[0], r.estimate[1]))
        .collect();
    let metrics = truth_ctx.evaluate(&final_classified, &truth_xy, &est_xy, &coverage_trace)?;

    Ok(SimResult {
        scenario: cfg.name.clone(),
        suite: cfg.suite,
        seed: cfg.seed,
        status,
        ticks: pose_trace.len() as u64,
        replans: nav.replans,
        collision_ticks,
        final_truth: [truth.x, truth.y, truth.yaw],
        final_estimate: [final_estimate.x, final_estimate.y, final_estimate.yaw],
        metrics,
        pose_trace,
        readings,
        coverage_trace,
        final_map: grid,
    })
}
