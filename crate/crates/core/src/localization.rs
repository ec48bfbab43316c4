//! Monte Carlo localization. Particles carry planar pose hypotheses,
//! predict through the vehicle motion model with motion-scaled noise, and
//! reweight against range observations cast into either the online
//! occupancy map or the ground-truth world.

use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::mapping::ClassifiedGrid;
use crate::real::Real;
use crate::sensors::{Echo, LidarScan, RangeReading};
use crate::vehicle::{step_kinematics, StateVector, VelocityCommand};
use crate::world::WorldModel;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Noise injected into predicted commands, scaled by the commanded
/// magnitudes with an additive floor so stationary uncertainty still grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct MotionNoise<T: Real> {
    /// Fraction of |v| added as speed noise (1 sigma).
    pub sigma_v: T,
    /// Fraction of |omega| added as yaw-rate noise (1 sigma).
    pub sigma_omega: T,
    /// Speed noise floor, m/s.
    pub floor_v: T,
    /// Yaw-rate noise floor, rad/s.
    pub floor_omega: T,
}

impl<T: Real> Default for MotionNoise<T> {
    fn default() -> Self {
        Self {
            sigma_v: T::real(0.1),
            sigma_omega: T::real(0.1),
            floor_v: T::real(0.01),
            floor_omega: T::real(0.02),
        }
    }
}

/// Particle filter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct FilterConfig<T: Real> {
    pub particles: usize,
    pub motion_noise: MotionNoise<T>,
    /// Range likelihood sigma, meters.
    pub sensor_sigma: T,
    /// Mixture weight of the uniform outlier component.
    pub outlier_weight: T,
    /// Resample when the effective sample size falls below this fraction
    /// of the particle count.
    pub resample_threshold: T,
    /// Evaluate every n-th lidar beam when weighting.
    pub lidar_beam_stride: usize,
    /// Initial particle scatter around the starting pose.
    pub initial_sigma_xy: T,
    pub initial_sigma_yaw: T,
}

impl<T: Real> Default for FilterConfig<T> {
    fn default() -> Self {
        Self {
            particles: 500,
            motion_noise: MotionNoise::default(),
            sensor_sigma: T::real(0.05),
            outlier_weight: T::real(0.1),
            resample_threshold: T::real(0.5),
            lidar_beam_stride: 20,
            initial_sigma_xy: T::real(0.05),
            initial_sigma_yaw: T::real(0.05),
        }
    }
}

/// Weighted pose hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ParticleSet<T: Real> {
    poses: Vec<Pose2<T>>,
    weights: Vec<T>,
}

/// Weighted mean pose and 3x3 covariance over `(x, y, yaw)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate<T> {
    pub pose: Pose2<T>,
    pub covariance: [[T; 3]; 3],
}

impl<T: Real> PoseEstimate<T> {
    /// Trace of the covariance: a scalar uncertainty summary.
    pub fn cov_trace(&self) -> T {
        self.covariance[0][0] + self.covariance[1][1] + self.covariance[2][2]
    }
}

/// Result flags from a weight update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightUpdate<T> {
    /// All likelihoods collapsed; weights were reset to uniform.
    pub diverged: bool,
    /// Effective sample size after the update.
    pub n_eff: T,
}

/// Map interface the filter casts expected ranges into.
pub enum RangeMap<'a, T: Real> {
    /// The online occupancy map; unknown cells pass the ray through.
    Grid(&'a ClassifiedGrid<T>),
    /// The ground-truth world (diagnostic mode); every material reflects.
    World(&'a WorldModel<T>),
}

impl<T: Real> RangeMap<'_, T> {
    /// Expected noiseless range from a position along a world heading.
    pub fn expected_range(&self, position: Vec2<T>, heading: T, max_range: T) -> Echo<T> {
        let dir = Vec2::from_angle(heading);
        let hit = match self {
            RangeMap::Grid(grid) => grid.raycast(position, dir, max_range),
            RangeMap::World(world) => world
                .raycast(position, dir, max_range)
                .map(|h| h.distance),
        };
        match hit {
            Some(d) => Echo::Range(d),
            None => Echo::OutOfRange,
        }
    }
}

/// One frame of range observations, in the robot body frame.
pub enum SensorObservation<'a, T: Real> {
    /// A sonar ring sample; `mount_angles[i]` is the body-frame axis of
    /// `readings[i].sensor_index`.
    SonarRing {
        readings: &'a [RangeReading<T>],
        mount_angles: &'a [T],
    },
    /// A lidar sweep, evaluated every `stride`-th beam.
    Lidar { scan: &'a LidarScan<T>, stride: usize },
}

impl<T: Real> ParticleSet<T> {
    /// All particles at one pose, uniform weights.
    pub fn at_pose(pose: Pose2<T>, count: usize) -> Self {
        assert!(count > 0, "particle set cannot be empty");
        Self {
            poses: vec![pose; count],
            weights: vec![T::one() / T::from_usize(count).unwrap(); count],
        }
    }

    /// Gaussian scatter around a pose, uniform weights.
    pub fn around_pose<R: Rng + ?Sized>(
        pose: Pose2<T>,
        sigma_xy: T,
        sigma_yaw: T,
        count: usize,
        rng: &mut R,
    ) -> Self {
        assert!(count > 0, "particle set cannot be empty");
        let poses = (0..count)
            .map(|_| {
                Pose2::new(
                    pose.x + sigma_xy * T::randn(rng),
                    pose.y + sigma_xy * T::randn(rng),
                    pose.yaw + sigma_yaw * T::randn(rng),
                )
            })
            .collect();
        Self {
            poses,
            weights: vec![T::one() / T::from_usize(count).unwrap(); count],
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[Pose2<T>] {
        &self.poses
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Effective sample size `1 / sum(w^2)` of the normalized weights.
    pub fn n_eff(&self) -> T {
        let sum_sq: T = self.weights.iter().map(|w| *w * *w).sum();
        if sum_sq > T::zero() {
            T::one() / sum_sq
        } else {
            T::zero()
        }
    }

    fn reset_uniform(&mut self) {
        let w = T::one() / T::from_usize(self.len()).unwrap();
        for weight in &mut self.weights {
            *weight = w;
        }
    }
}

/// Advances every particle through the motion model with independently
/// drawn command noise.
pub fn predict<T: Real, R: Rng + ?Sized>(
    particles: &mut ParticleSet<T>,
    cmd: VelocityCommand<T>,
    dt: T,
    noise: &MotionNoise<T>,
    rng: &mut R,
) {
    let sv = noise.sigma_v * cmd.v.abs() + noise.floor_v;
    let so = noise.sigma_omega * cmd.omega.abs() + noise.floor_omega;
    for pose in &mut particles.poses {
        let noisy = VelocityCommand {
            v: cmd.v + sv * T::randn(rng),
            omega: cmd.omega + so * T::randn(rng),
        };
        let state = StateVector::new(pose.x, pose.y, pose.yaw);
        let next = step_kinematics(&state, noisy, dt);
        *pose = next.pose();
    }
}

fn gaussian_pdf<T: Real>(x: T, sigma: T) -> T {
    let z = x / sigma;
    (-z * z / T::real(2.0)).exp() / (sigma * (T::real(2.0) * T::PI()).sqrt())
}

/// Standard normal CDF via the Zelen-Severo polynomial approximation
/// (error under 1e-7).
pub fn standard_normal_cdf<T: Real>(x: T) -> T {
    let ax = x.abs();
    let t = T::one() / (T::one() + T::real(0.2316419) * ax);
    let poly = t
        * (T::real(0.319381530)
            + t * (T::real(-0.356563782)
                + t * (T::real(1.781477937)
                    + t * (T::real(-1.821255978) + t * T::real(1.330274429)))));
    let pdf = (-ax * ax / T::real(2.0)).exp() / (T::real(2.0) * T::PI()).sqrt();
    let upper = T::one() - pdf * poly;
    if x >= T::zero() {
        upper
    } else {
        T::one() - upper
    }
}

/// Likelihood of one observed echo given the expected one.
fn beam_likelihood<T: Real>(
    observed: Echo<T>,
    expected: Echo<T>,
    sigma: T,
    outlier_weight: T,
    max_range: T,
) -> T {
    let z_hat = match expected {
        Echo::Range(d) => d,
        Echo::OutOfRange => max_range,
    };
    let inlier = T::one() - outlier_weight;
    match observed {
        Echo::Range(z) => inlier * gaussian_pdf(z - z_hat, sigma) + outlier_weight / max_range,
        Echo::OutOfRange => {
            // Probability that the return lands past the sensor limit.
            let q = T::one() - standard_normal_cdf((max_range - z_hat) / sigma);
            inlier * q + outlier_weight * T::real(0.1)
        }
    }
}

/// Reweights particles against one observation frame. Likelihoods
/// accumulate in log space; if they all collapse the weights reset to
/// uniform and the update reports divergence.
pub fn update_weights<T: Real>(
    particles: &mut ParticleSet<T>,
    observation: &SensorObservation<T>,
    map: &RangeMap<T>,
    sigma: T,
    outlier_weight: T,
    max_range: T,
) -> WeightUpdate<T> {
    let n = particles.len();
    let mut log_likelihoods = vec![T::zero(); n];

    for (k, pose) in particles.poses.iter().enumerate() {
        let mut ll = T::zero();
        let mut eval = |body_angle: T, observed: Echo<T>| {
            let expected =
                map.expected_range(pose.position(), pose.yaw + body_angle, max_range);
            ll += beam_likelihood(observed, expected, sigma, outlier_weight, max_range).ln();
        };
        match observation {
            SensorObservation::SonarRing {
                readings,
                mount_angles,
            } => {
                for reading in *readings {
                    let mount = mount_angles[reading.sensor_index];
                    eval(mount, reading.echo);
                }
            }
            SensorObservation::Lidar { scan, stride } => {
                let stride = (*stride).max(1);
                for i in (0..scan.ranges.len()).step_by(stride) {
                    eval(scan.beam_angle(i), scan.ranges[i]);
                }
            }
        }
        log_likelihoods[k] = ll;
    }

    let max_ll = log_likelihoods
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    if !max_ll.is_finite() {
        particles.reset_uniform();
        return WeightUpdate {
            diverged: true,
            n_eff: particles.n_eff(),
        };
    }

    let mut total = T::zero();
    for (w, ll) in particles.weights.iter_mut().zip(&log_likelihoods) {
        *w *= (*ll - max_ll).exp();
        total += *w;
    }
    if !(total > T::real(1e-300)) || !total.is_finite() {
        particles.reset_uniform();
        return WeightUpdate {
            diverged: true,
            n_eff: particles.n_eff(),
        };
    }
    for w in &mut particles.weights {
        *w /= total;
    }
    WeightUpdate {
        diverged: false,
        n_eff: particles.n_eff(),
    }
}

/// Systematic resampling, applied only when the effective sample size
/// drops under `threshold_fraction` of the particle count. Returns whether
/// a resample happened.
pub fn resample_if_needed<T: Real, R: Rng + ?Sized>(
    particles: &mut ParticleSet<T>,
    threshold_fraction: T,
    rng: &mut R,
) -> bool {
    let n = particles.len();
    let n_t = T::from_usize(n).unwrap();
    if particles.n_eff() >= threshold_fraction * n_t {
        return false;
    }
    let offset = T::rand01(rng) / n_t;
    let mut new_poses = Vec::with_capacity(n);
    let mut cumulative = particles.weights[0];
    let mut idx = 0usize;
    for k in 0..n {
        let target = offset + T::from_usize(k).unwrap() / n_t;
        while cumulative < target && idx + 1 < n {
            idx += 1;
            cumulative += particles.weights[idx];
        }
        new_poses.push(particles.poses[idx]);
    }
    particles.poses = new_poses;
    particles.reset_uniform();
    true
}

/// Weighted mean pose (circular mean for yaw) with 3x3 covariance over
/// `(x, y, yaw)`; yaw residuals are wrapped.
pub fn estimate<T: Real>(particles: &ParticleSet<T>) -> PoseEstimate<T> {
    let mut mx = T::zero();
    let mut my = T::zero();
    let mut sin_sum = T::zero();
    let mut cos_sum = T::zero();
    for (pose, w) in particles.poses.iter().zip(&particles.weights) {
        mx += *w * pose.x;
        my += *w * pose.y;
        sin_sum += *w * pose.yaw.sin();
        cos_sum += *w * pose.yaw.cos();
    }
    let myaw = sin_sum.atan2(cos_sum);

    let mut cov = [[T::zero(); 3]; 3];
    for (pose, w) in particles.poses.iter().zip(&particles.weights) {
        let r = [pose.x - mx, pose.y - my, wrap_angle(pose.yaw - myaw)];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += *w * r[i] * r[j];
            }
        }
    }
    PoseEstimate {
        pose: Pose2::new(mx, my, myaw),
        covariance: cov,
    }
}
