//! Crawler state and motion. The vehicle is a unicycle confined to the
//! seafloor plane: the full six-degree state is carried, but depth, roll
//! and pitch stay zero.

use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::real::Real;
use crate::world::{Shape, WorldModel};
use serde::{Deserialize, Serialize};

/// Full vehicle state. Planar operation keeps `z`, `roll` and `pitch`
/// frozen at zero; they exist so logs carry the complete state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Real> StateVector<T> {
    /// Planar state with yaw wrapped to `(-pi, pi]`.
    pub fn new(x: T, y: T, yaw: T) -> Self {
        Self {
            x,
            y,
            z: T::zero(),
            roll: T::zero(),
            pitch: T::zero(),
            yaw: wrap_angle(yaw),
        }
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn pose(&self) -> Pose2<T> {
        Pose2::new(self.x, self.y, self.yaw)
    }
}

/// Forward and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand<T> {
    /// Forward speed, m/s.
    pub v: T,
    /// Yaw rate, rad/s (CCW positive).
    pub omega: T,
}

impl<T: Real> VelocityCommand<T> {
    pub fn new(v: T, omega: T) -> Self {
        Self { v, omega }
    }

    pub fn stop() -> Self {
        Self {
            v: T::zero(),
            omega: T::zero(),
        }
    }
}

/// Physical limits and footprint of the crawler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct VehicleConfig<T: Real> {
    /// Forward speed limit, m/s.
    pub v_max: T,
    /// Yaw rate limit, rad/s.
    pub omega_max: T,
    /// Collision disc radius, meters.
    pub footprint_radius: T,
}

impl<T: Real> Default for VehicleConfig<T> {
    fn default() -> Self {
        Self {
            v_max: T::real(0.5),
            omega_max: T::real(1.0),
            footprint_radius: T::real(0.2),
        }
    }
}

impl<T: Real> VehicleConfig<T> {
    /// Saturates a command to the vehicle limits (both signs).
    pub fn clamp(&self, cmd: VelocityCommand<T>) -> VelocityCommand<T> {
        VelocityCommand {
            v: cmd.v.max(-self.v_max).min(self.v_max),
            omega: cmd.omega.max(-self.omega_max).min(self.omega_max),
        }
    }
}

/// Advances the state by one Euler step: the translation uses the heading
/// at the start of the step, then yaw integrates and re-wraps.
pub fn step_kinematics<T: Real>(
    state: &StateVector<T>,
    cmd: VelocityCommand<T>,
    dt: T,
) -> StateVector<T> {
    StateVector {
        x: state.x + cmd.v * dt * state.yaw.cos(),
        y: state.y + cmd.v * dt * state.yaw.sin(),
        z: state.z,
        roll: state.roll,
        pitch: state.pitch,
        yaw: wrap_angle(state.yaw + cmd.omega * dt),
    }
}

/// Whether a disc of `footprint_radius` centered at the state overlaps any
/// obstacle or crosses the bounds of the world.
pub fn check_collision<T: Real>(
    world: &WorldModel<T>,
    state: &StateVector<T>,
    footprint_radius: T,
) -> bool {
    let p = state.position();
    if !world.bounds.contains(p) {
        return true;
    }
    for edge in world.bounds.edges() {
        if edge.distance_to_point(p) < footprint_radius {
            return true;
        }
    }
    for ob in &world.obstacles {
        if ob.shape.contains(p) {
            return true;
        }
        match &ob.shape {
            Shape::Wall(seg) => {
                if seg.distance_to_point(p) < footprint_radius {
                    return true;
                }
            }
            Shape::Polygon(_) => {
                for edge in ob.shape.edges() {
                    if edge.distance_to_point(p) < footprint_radius {
                        return true;
                    }
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Rect, Segment};
    use crate::world::{MediumProperties, Obstacle};
    use approx::assert_relative_eq;

    #[test]
    fn planar_constructor_freezes_out_of_plane_axes() {
        let s = StateVector::new(1.0, 2.0, 7.0);
        assert_eq!(s.z, 0.0);
        assert_eq!(s.roll, 0.0);
        assert_eq!(s.pitch, 0.0);
        assert!(s.yaw > -std::f64::consts::PI && s.yaw <= std::f64::consts::PI);
    }

    #[test]
    fn straight_drive_advances_along_heading() {
        let s = StateVector::new(1.0, 1.0, 0.0);
        let s2 = step_kinematics(&s, VelocityCommand::new(0.5, 0.0), 0.1);
        assert_relative_eq!(s2.x, 1.05);
        assert_relative_eq!(s2.y, 1.0);
        assert_relative_eq!(s2.yaw, 0.0);
    }

    #[test]
    fn translation_uses_heading_before_the_turn() {
        let s = StateVector::new(0.0, 0.0, 0.0);
        let s2 = step_kinematics(&s, VelocityCommand::new(1.0, 1.0), 0.1);
        // Moves straight along the old heading even though yaw changes.
        assert_relative_eq!(s2.x, 0.1);
        assert_relative_eq!(s2.y, 0.0);
        assert_relative_eq!(s2.yaw, 0.1);
    }

    #[test]
    fn pure_rotation_holds_position_and_wraps_yaw() {
        let mut s = StateVector::new(2.0, 3.0, 3.0);
        for _ in 0..10 {
            s = step_kinematics(&s, VelocityCommand::new(0.0, 1.0), 0.1);
        }
        assert_relative_eq!(s.x, 2.0);
        assert_relative_eq!(s.y, 3.0);
        // 3.0 + 1.0 rad wraps past pi.
        assert_relative_eq!(s.yaw, 4.0 - 2.0 * std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn many_euler_steps_track_a_circle() {
        // v = r * omega: one full turn returns near the start.
        let mut s = StateVector::new(0.0, 0.0, 0.0);
        let dt = 0.001;
        let steps = (2.0 * std::f64::consts::PI / dt).round() as usize;
        for _ in 0..steps {
            s = step_kinematics(&s, VelocityCommand::new(1.0, 1.0), dt);
        }
        assert!(s.position().norm() < 0.01, "drift {}", s.position().norm());
    }

    #[test]
    fn command_clamp_saturates_both_signs() {
        let cfg = VehicleConfig::<f64>::default();
        let c = cfg.clamp(VelocityCommand::new(2.0, -3.0));
        assert_relative_eq!(c.v, 0.5);
        assert_relative_eq!(c.omega, -1.0);
        let c = cfg.clamp(VelocityCommand::new(-2.0, 0.4));
        assert_relative_eq!(c.v, -0.5);
        assert_relative_eq!(c.omega, 0.4);
    }

    #[test]
    fn collision_against_walls_and_bounds() {
        let wall = Obstacle::reflective(Shape::Wall(Segment::new(
            Vec2::new(5.0, 0.0),
            Vec2::new(5.0, 10.0),
        )));
        let world =
            WorldModel::new("w", Rect::new(10.0, 10.0), MediumProperties::default(), vec![wall])
                .unwrap();

        // 0.1 m from the wall with a 0.2 m footprint: collision.
        assert!(check_collision(&world, &StateVector::new(4.9, 5.0, 0.0), 0.2));
        // 0.3 m away: clear.
        assert!(!check_collision(&world, &StateVector::new(4.7, 5.0, 0.0), 0.2));
        // Hugging the boundary: collision with the implicit wall.
        assert!(check_collision(&world, &StateVector::new(0.1, 5.0, 0.0), 0.2));
        // Outside the bounds entirely: collision.
        assert!(check_collision(&world, &StateVector::new(-1.0, 5.0, 0.0), 0.2));
        // Center of the open half: clear.
        assert!(!check_collision(&world, &StateVector::new(2.5, 5.0, 0.0), 0.2));
    }

    #[test]
    fn collision_inside_polygon_is_detected() {
        let block = Obstacle::reflective(Shape::Polygon(vec![
            Vec2::new(2.0, 2.0),
            Vec2::new(4.0, 2.0),
            Vec2::new(4.0, 4.0),
            Vec2::new(2.0, 4.0),
        ]));
        let world =
            WorldModel::new("w", Rect::new(10.0, 10.0), MediumProperties::default(), vec![block])
                .unwrap();
        assert!(check_collision(&world, &StateVector::new(3.0, 3.0, 0.0), 0.2));
        assert!(check_collision(&world, &StateVector::new(4.1, 3.0, 0.0), 0.2));
        assert!(!check_collision(&world, &StateVector::new(4.3, 3.0, 0.0), 0.2));
    }

    #[test]
    fn kinematics_work_with_f32() {
        let s = StateVector::<f32>::new(0.0, 0.0, 0.0);
        let s2 = step_kinematics(&s, VelocityCommand::new(0.5f32, 0.0), 0.1);
        assert_relative_eq!(s2.x, 0.05f32);
    }
}
