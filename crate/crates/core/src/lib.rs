//! Core library for a seafloor crawler that maps an enclosed environment
//! with ultrasonic or lidar ranging, localizes against its own map with a
//! particle filter, and plans collision-free grid paths.
//!
//! Everything numeric is generic over the [`Real`] scalar (`f32` or `f64`);
//! the type aliases at the crate root fix `f64` for ordinary use.

pub mod geom;
pub mod localization;
pub mod mapping;
pub mod planning;
pub mod real;
pub mod sensors;
pub mod vehicle;
pub mod world;

pub use real::Real;

/// Default `f64` instantiations of the core types.
pub type Vec2 = geom::Vec2<f64>;
pub type Pose2 = geom::Pose2<f64>;
pub type Rect = geom::Rect<f64>;
pub type Segment = geom::Segment<f64>;

pub type WorldModel = world::WorldModel<f64>;
pub type Obstacle = world::Obstacle<f64>;
pub type Shape = world::Shape<f64>;
pub type MediumProperties = world::MediumProperties<f64>;
pub type RayHit = world::RayHit<f64>;
pub use world::Material;

pub type UltrasonicConfig = sensors::UltrasonicConfig<f64>;
pub type LidarConfig = sensors::LidarConfig<f64>;
pub type RangeReading = sensors::RangeReading<f64>;
pub type LidarScan = sensors::LidarScan<f64>;
pub type Echo = sensors::Echo<f64>;
pub type SensorPose = sensors::SensorPose<f64>;

pub type StateVector = vehicle::StateVector<f64>;
pub type VelocityCommand = vehicle::VelocityCommand<f64>;
pub type VehicleConfig = vehicle::VehicleConfig<f64>;

pub type OccupancyGrid = mapping::OccupancyGrid<f64>;
pub type ClassifiedGrid = mapping::ClassifiedGrid<f64>;
pub type LogOddsConfig = mapping::LogOddsConfig<f64>;
pub type SonarMapConfig = mapping::SonarMapConfig<f64>;
pub type LidarMapConfig = mapping::LidarMapConfig<f64>;
pub use mapping::CellState;

pub type ParticleSet = localization::ParticleSet<f64>;
pub type FilterConfig = localization::FilterConfig<f64>;
pub type MotionNoise = localization::MotionNoise<f64>;
pub type PoseEstimate = localization::PoseEstimate<f64>;

pub type PlanningGrid = planning::PlanningGrid<f64>;
pub type GridPath = planning::GridPath<f64>;
pub type LocalPlannerConfig = planning::LocalPlannerConfig<f64>;
pub type GlobalPlannerConfig = planning::GlobalPlannerConfig<f64>;
