//! Range sensor models. The ultrasonic sensor emits a cone of rays and
//! reports the nearest echo, losing returns on soft material, at grazing
//! incidence, or past the attenuation budget. The lidar sweeps many narrow
//! beams, sees every material, and carries a constant systematic offset.

use crate::geom::{Pose2, Vec2};
use crate::real::Real;
use crate::world::{Material, MediumProperties, WorldModel};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single range measurement: either a distance or "nothing in range".
/// Serializes as a number or `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<T>", into = "Option<T>")]
pub enum Echo<T: Clone> {
    Range(T),
    OutOfRange,
}

impl<T: Clone> From<Option<T>> for Echo<T> {
    fn from(v: Option<T>) -> Self {
        match v {
            Some(d) => Echo::Range(d),
            None => Echo::OutOfRange,
        }
    }
}

impl<T: Clone> From<Echo<T>> for Option<T> {
    fn from(e: Echo<T>) -> Self {
        match e {
            Echo::Range(d) => Some(d),
            Echo::OutOfRange => None,
        }
    }
}

impl<T: Clone> Echo<T> {
    pub fn range(&self) -> Option<T> {
        match self {
            Echo::Range(d) => Some(d.clone()),
            Echo::OutOfRange => None,
        }
    }

    pub fn is_out_of_range(&self) -> bool {
        matches!(self, Echo::OutOfRange)
    }
}

/// Position and beam-axis heading of one sensor, world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose<T> {
    pub position: Vec2<T>,
    /// Beam axis direction, radians.
    pub heading: T,
}

/// One ultrasonic measurement with its acquisition context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RangeReading<T: Real> {
    pub sensor_index: usize,
    pub echo: Echo<T>,
    /// Round-trip pulse time, seconds. Max-range readings report the
    /// round-trip time of the configured maximum range.
    pub echo_time: T,
    /// Unit vector of the beam axis in the world frame.
    pub beam_axis_world: Vec2<T>,
    pub beam_width_deg: T,
    pub tick: u64,
    /// Set when another sensor in the same ring returned a similar
    /// distance with an overlapping beam cone.
    pub crosstalk_suspect: bool,
}

impl<T: Real> RangeReading<T> {
    /// CSV trace row: `tick,sensor,distance|MAX,echo_time,crosstalk`.
    pub fn trace_line(&self) -> String {
        let dist = match self.echo {
            Echo::Range(d) => format!("{d}"),
            Echo::OutOfRange => "MAX".to_string(),
        };
        format!(
            "{},{},{},{},{}",
            self.tick, self.sensor_index, dist, self.echo_time, self.crosstalk_suspect
        )
    }
}

/// One full lidar sweep. Beam `i` points along
/// `robot_yaw + start_angle + i * angle_increment`; `start_angle` is in the
/// body frame so the scan can be re-projected from any pose hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LidarScan<T: Real> {
    pub ranges: Vec<Echo<T>>,
    /// Body-frame angle of beam 0, radians.
    pub start_angle: T,
    /// Angular step between consecutive beams, radians.
    pub angle_increment: T,
    pub tick: u64,
}

impl<T: Real> LidarScan<T> {
    /// Body-frame angle of beam `i`.
    pub fn beam_angle(&self, i: usize) -> T {
        self.start_angle + self.angle_increment * T::from_usize(i).unwrap()
    }
}

#[derive(Debug, Error)]
pub enum SensorConfigError {
    #[error("invalid ultrasonic config: {0}")]
    Ultrasonic(String),
    #[error("invalid lidar config: {0}")]
    Lidar(String),
}

/// Ultrasonic rangefinder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct UltrasonicConfig<T: Real> {
    /// Closest measurable distance, meters.
    pub min_range: T,
    /// Farthest measurable distance, meters.
    pub max_range: T,
    /// Full beam cone width, degrees.
    pub beam_width_deg: T,
    /// Measurement cadence, Hz.
    pub sample_rate_hz: T,
    /// Body-frame beam axis of each sensor in the ring, radians.
    pub mount_angles: Vec<T>,
    /// Echoes from surfaces hit at a grazing angle below this (degrees,
    /// measured from the surface plane) are lost.
    pub incidence_threshold_deg: T,
    /// Gaussian range noise, meters (1 sigma).
    pub noise_sigma: T,
    /// Carrier frequency, kHz (documentation of the attenuation regime).
    pub frequency_khz: T,
    /// Rays fanned uniformly across the cone; odd so the axis is included.
    pub rays_per_cone: usize,
    /// Round-trip attenuation budget, dB: echoes needing more are lost.
    pub detection_budget_db: T,
    /// Two same-tick echoes within this distance of each other (meters),
    /// from overlapping cones, are flagged as crosstalk suspects.
    pub crosstalk_epsilon: T,
}

impl<T: Real> Default for UltrasonicConfig<T> {
    fn default() -> Self {
        let pi = T::PI();
        Self {
            min_range: T::real(0.01),
            max_range: T::real(2.0),
            beam_width_deg: T::real(30.0),
            sample_rate_hz: T::real(10.0),
            mount_angles: vec![
                T::zero(),
                pi / T::real(2.0),
                pi,
                pi * T::real(1.5),
            ],
            incidence_threshold_deg: T::real(45.0),
            noise_sigma: T::real(0.003),
            frequency_khz: T::real(10.0),
            rays_per_cone: 7,
            detection_budget_db: T::real(60.0),
            crosstalk_epsilon: T::real(0.05),
        }
    }
}

impl<T: Real> UltrasonicConfig<T> {
    pub fn validate(&self) -> Result<(), SensorConfigError> {
        let err = |m: &str| Err(SensorConfigError::Ultrasonic(m.into()));
        if !(self.min_range > T::zero() && self.max_range > self.min_range) {
            return err("ranges must satisfy 0 < min_range < max_range");
        }
        if !(self.beam_width_deg > T::zero() && self.beam_width_deg <= T::real(180.0)) {
            return err("beam width must be in (0, 180] degrees");
        }
        if !(self.sample_rate_hz > T::zero()) {
            return err("sample rate must be positive");
        }
        if self.mount_angles.is_empty() {
            return err("at least one mount angle is required");
        }
        if !(self.incidence_threshold_deg >= T::zero()
            && self.incidence_threshold_deg <= T::real(90.0))
        {
            return err("incidence threshold must be in [0, 90] degrees");
        }
        if self.noise_sigma < T::zero() {
            return err("noise sigma must be non-negative");
        }
        if self.rays_per_cone == 0 || self.rays_per_cone % 2 == 0 {
            return err("rays_per_cone must be odd so the beam axis is sampled");
        }
        if self.detection_budget_db <= T::zero() {
            return err("detection budget must be positive");
        }
        if self.crosstalk_epsilon < T::zero() {
            return err("crosstalk epsilon must be non-negative");
        }
        Ok(())
    }

    /// Range limit imposed by round-trip attenuation alone.
    pub fn attenuation_limit(&self, medium: &MediumProperties<T>) -> T {
        ultrasonic_attenuation_limit(medium.us_atten_db_per_m, self.detection_budget_db)
    }

    /// Usable range in the given medium: the configured maximum capped by
    /// the attenuation budget.
    pub fn effective_range(&self, medium: &MediumProperties<T>) -> T {
        self.max_range.min(self.attenuation_limit(medium))
    }
}

/// Lidar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct LidarConfig<T: Real> {
    pub beams_per_scan: usize,
    /// Total sweep, degrees (360 = full circle).
    pub fov_deg: T,
    /// Blind zone: hits closer than this report out-of-range.
    pub min_range: T,
    pub max_range: T,
    /// Constant additive range bias, meters.
    pub systematic_error: T,
    /// Gaussian range noise, meters (1 sigma).
    pub noise_sigma: T,
    /// Full sweeps per second.
    pub scan_rate_hz: T,
    /// Power draw, watts (reported in comparisons; no effect on sensing).
    pub power_w: T,
    /// Smallest detectable fraction of emitted light after round-trip
    /// attenuation.
    pub detection_fraction: T,
}

impl<T: Real> Default for LidarConfig<T> {
    fn default() -> Self {
        Self {
            beams_per_scan: 720,
            fov_deg: T::real(360.0),
            min_range: T::real(1.0),
            max_range: T::real(10.0),
            systematic_error: T::real(0.05),
            noise_sigma: T::real(0.01),
            scan_rate_hz: T::one(),
            power_w: T::real(125.0),
            detection_fraction: T::real(1e-4),
        }
    }
}

impl<T: Real> LidarConfig<T> {
    pub fn validate(&self) -> Result<(), SensorConfigError> {
        let err = |m: &str| Err(SensorConfigError::Lidar(m.into()));
        if self.beams_per_scan == 0 {
            return err("at least one beam per scan is required");
        }
        if !(self.fov_deg > T::zero() && self.fov_deg <= T::real(360.0)) {
            return err("field of view must be in (0, 360] degrees");
        }
        if !(self.min_range >= T::zero() && self.max_range > self.min_range) {
            return err("ranges must satisfy 0 <= min_range < max_range");
        }
        if self.noise_sigma < T::zero() {
            return err("noise sigma must be non-negative");
        }
        if !(self.scan_rate_hz > T::zero()) {
            return err("scan rate must be positive");
        }
        if !(self.detection_fraction > T::zero() && self.detection_fraction < T::one()) {
            return err("detection fraction must be in (0, 1)");
        }
        Ok(())
    }

    /// Range limit imposed by round-trip optical attenuation alone.
    pub fn attenuation_limit(&self, medium: &MediumProperties<T>) -> T {
        lidar_attenuation_limit(medium.lidar_atten_per_m, self.detection_fraction)
    }

    /// Usable range in the given medium.
    pub fn effective_range(&self, medium: &MediumProperties<T>) -> T {
        self.max_range.min(self.attenuation_limit(medium))
    }
}

/// Distance of a pulse-echo target from the round-trip time: `d = c * t / 2`.
pub fn echo_time_to_distance<T: Real>(echo_time: T, sound_speed: T) -> T {
    sound_speed * echo_time / T::real(2.0)
}

/// Round-trip pulse time for a target at distance `d`: `t = 2 * d / c`.
pub fn distance_to_echo_time<T: Real>(distance: T, sound_speed: T) -> T {
    T::real(2.0) * distance / sound_speed
}

/// Full apex angle (radians) of a beam that has spread to width `w` at
/// range `r`: `theta = 2 * arctan(w / (2 * r))`.
pub fn beam_spread<T: Real>(width: T, range: T) -> T {
    T::real(2.0) * (width / (T::real(2.0) * range)).atan()
}

/// Distance at which a round trip exhausts an attenuation budget of
/// `budget_db` decibels at `atten_db_per_m` one-way loss.
pub fn ultrasonic_attenuation_limit<T: Real>(atten_db_per_m: T, budget_db: T) -> T {
    if atten_db_per_m <= T::zero() {
        T::infinity()
    } else {
        budget_db / (T::real(2.0) * atten_db_per_m)
    }
}

/// Distance at which round-trip optical attenuation `exp(-2 * alpha * d)`
/// falls below the detectable fraction.
pub fn lidar_attenuation_limit<T: Real>(atten_per_m: T, detection_fraction: T) -> T {
    if atten_per_m <= T::zero() {
        T::infinity()
    } else {
        -detection_fraction.ln() / (T::real(2.0) * atten_per_m)
    }
}

/// Simulates one ultrasonic measurement from `pose`.
///
/// `rays_per_cone` rays fan uniformly across the beam cone. A ray's echo
/// is lost if it lands on absorbing material, arrives below the grazing
/// threshold, or needs more than the attenuation budget. The reading is
/// the nearest surviving echo plus Gaussian noise, clamped to the sensor's
/// range; if no ray survives the reading is out-of-range.
pub fn ultrasonic_measure<T: Real, R: Rng + ?Sized>(
    world: &WorldModel<T>,
    pose: SensorPose<T>,
    cfg: &UltrasonicConfig<T>,
    tick: u64,
    sensor_index: usize,
    rng: &mut R,
) -> RangeReading<T> {
    let effective = cfg.effective_range(&world.medium);
    let width_rad = cfg.beam_width_deg.to_radians();
    let sin_threshold = cfg.incidence_threshold_deg.to_radians().sin();
    let grazing_slack = T::real(1e-12);
    let k = cfg.rays_per_cone;
    let mid = (k - 1) / 2;

    let mut nearest: Option<T> = None;
    for i in 0..k {
        let offset = if k == 1 {
            T::zero()
        } else {
            width_rad * (T::from_usize(i).unwrap() - T::from_usize(mid).unwrap())
                / T::from_usize(k - 1).unwrap()
        };
        let dir = Vec2::from_angle(pose.heading + offset);
        let hit = match world.raycast(pose.position, dir, effective) {
            Some(h) => h,
            None => continue,
        };
        if hit.material == Material::Absorbing {
            continue;
        }
        // sin(grazing angle) = cos(angle between reversed ray and normal).
        let sin_grazing = (-dir).dot(hit.normal).max(T::zero()).min(T::one());
        if sin_grazing < sin_threshold - grazing_slack {
            continue;
        }
        if nearest.map_or(true, |d| hit.distance < d) {
            nearest = Some(hit.distance);
        }
    }

    let (echo, echo_distance) = match nearest {
        Some(d) => {
            let noisy = if cfg.noise_sigma > T::zero() {
                d + cfg.noise_sigma * T::randn(rng)
            } else {
                d
            };
            let clamped = noisy.max(cfg.min_range).min(cfg.max_range);
            (Echo::Range(clamped), clamped)
        }
        None => (Echo::OutOfRange, cfg.max_range),
    };

    RangeReading {
        sensor_index,
        echo,
        echo_time: distance_to_echo_time(echo_distance, world.medium.sound_speed),
        beam_axis_world: Vec2::from_angle(pose.heading),
        beam_width_deg: cfg.beam_width_deg,
        tick,
        crosstalk_suspect: false,
    }
}

/// Measures the whole sonar ring mounted on a robot at `robot`, in mount
/// order, then flags crosstalk suspects among the results.
pub fn sample_sonar_ring<T: Real, R: Rng + ?Sized>(
    world: &WorldModel<T>,
    robot: Pose2<T>,
    cfg: &UltrasonicConfig<T>,
    tick: u64,
    rng: &mut R,
) -> Vec<RangeReading<T>> {
    let mut readings: Vec<RangeReading<T>> = cfg
        .mount_angles
        .iter()
        .enumerate()
        .map(|(i, mount)| {
            let pose = SensorPose {
                position: robot.position(),
                heading: robot.yaw + *mount,
            };
            ultrasonic_measure(world, pose, cfg, tick, i, rng)
        })
        .collect();
    mark_crosstalk(&mut readings, cfg.crosstalk_epsilon);
    readings
}

/// Flags pairs of same-tick readings as crosstalk suspects when their beam
/// cones overlap and their distances agree within `epsilon`. Max-range
/// readings are never flagged.
pub fn mark_crosstalk<T: Real>(readings: &mut [RangeReading<T>], epsilon: T) {
    let n = readings.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (di, dj) = match (readings[i].echo, readings[j].echo) {
                (Echo::Range(a), Echo::Range(b)) => (a, b),
                _ => continue,
            };
            if (di - dj).abs() > epsilon {
                continue;
            }
            let cos_gap = readings[i]
                .beam_axis_world
                .dot(readings[j].beam_axis_world)
                .max(-T::one())
                .min(T::one());
            let gap = cos_gap.acos();
            let overlap =
                (readings[i].beam_width_deg + readings[j].beam_width_deg).to_radians() / T::real(2.0);
            if gap < overlap {
                readings[i].crosstalk_suspect = true;
                readings[j].crosstalk_suspect = true;
            }
        }
    }
}

/// Simulates one full lidar sweep from `robot`.
///
/// Beams cover `[-fov/2, fov/2)` around the robot heading. Every material
/// reflects; hits inside the blind zone or beyond the effective range
/// report out-of-range. Measured distances carry the systematic offset
/// plus Gaussian noise and clamp to the configured range.
pub fn lidar_scan<T: Real, R: Rng + ?Sized>(
    world: &WorldModel<T>,
    robot: Pose2<T>,
    cfg: &LidarConfig<T>,
    tick: u64,
    rng: &mut R,
) -> LidarScan<T> {
    let fov_rad = cfg.fov_deg.to_radians();
    let n = cfg.beams_per_scan;
    let increment = fov_rad / T::from_usize(n).unwrap();
    let start = -fov_rad / T::real(2.0);
    let effective = cfg.effective_range(&world.medium);

    let ranges = (0..n)
        .map(|i| {
            let angle = robot.yaw + start + increment * T::from_usize(i).unwrap();
            let dir = Vec2::from_angle(angle);
            match world.raycast(robot.position(), dir, effective) {
                Some(hit) if hit.distance >= cfg.min_range => {
                    let mut d = hit.distance + cfg.systematic_error;
                    if cfg.noise_sigma > T::zero() {
                        d += cfg.noise_sigma * T::randn(rng);
                    }
                    Echo::Range(d.max(cfg.min_range).min(cfg.max_range))
                }
                _ => Echo::OutOfRange,
            }
        })
        .collect();

    LidarScan {
        ranges,
        start_angle: start,
        angle_increment: increment,
        tick,
    }
}
