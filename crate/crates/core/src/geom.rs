//! Planar geometry primitives shared by the world model, sensor models and
//! planners: vectors, poses, segments, axis-aligned rectangles and the
//! intersection predicates built on them.

use crate::real::Real;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// 2D vector / point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self {
            x: T::zero(),
            y: T::zero(),
        }
    }

    /// Unit vector pointing along `angle` (radians, CCW from +x).
    pub fn from_angle(angle: T) -> Self {
        Self {
            x: angle.cos(),
            y: angle.sin(),
        }
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// 2D cross product (z component of the 3D cross product).
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> T {
        (other - self).norm()
    }

    /// Angle of the vector in radians, in `(-pi, pi]`.
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    /// Returns `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() {
            Some(self / n)
        } else {
            None
        }
    }

    /// CCW perpendicular.
    pub fn perp(self) -> Self {
        Self {
            x: -self.y,
            y: self.x,
        }
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl<T: Real> Div<T> for Vec2<T> {
    type Output = Self;
    fn div(self, rhs: T) -> Self {
        Self::new(self.x / rhs, self.y / rhs)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut w = a % two_pi;
    if w <= -T::PI() {
        w += two_pi;
    } else if w > T::PI() {
        w -= two_pi;
    }
    w
}

/// Planar pose: position plus heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2<T> {
    pub x: T,
    pub y: T,
    pub yaw: T,
}

impl<T: Real> Pose2<T> {
    /// Builds a pose, wrapping the heading to `(-pi, pi]`.
    pub fn new(x: T, y: T, yaw: T) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn position(self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    /// Unit vector along the heading.
    pub fn heading(self) -> Vec2<T> {
        Vec2::from_angle(self.yaw)
    }
}

/// Line segment between two endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    pub a: Vec2<T>,
    pub b: Vec2<T>,
}

impl<T: Real> Segment<T> {
    pub fn new(a: Vec2<T>, b: Vec2<T>) -> Self {
        Self { a, b }
    }

    pub fn length(self) -> T {
        self.a.distance(self.b)
    }

    pub fn delta(self) -> Vec2<T> {
        self.b - self.a
    }

    /// Intersects the ray `origin + t * direction` (`t >= 0`) with this
    /// segment. Returns `(t, s)` where `s` is the parameter along the
    /// segment, both in range. Parallel (including collinear) rays miss.
    pub fn ray_intersection(self, origin: Vec2<T>, direction: Vec2<T>) -> Option<(T, T)> {
        let e = self.delta();
        let denom = direction.cross(e);
        if denom == T::zero() {
            return None;
        }
        let ao = self.a - origin;
        let t = ao.cross(e) / denom;
        let s = ao.cross(direction) / denom;
        if t >= T::zero() && s >= T::zero() && s <= T::one() {
            Some((t, s))
        } else {
            None
        }
    }

    /// Unit normal of the segment's supporting line, oriented away from
    /// `direction` (so `dot(normal, direction) <= 0`). Degenerate segments
    /// return a zero vector.
    pub fn normal_against(self, direction: Vec2<T>) -> Vec2<T> {
        let n = match self.delta().perp().normalized() {
            Some(n) => n,
            None => return Vec2::zero(),
        };
        if n.dot(direction) > T::zero() {
            -n
        } else {
            n
        }
    }

    /// Euclidean distance from a point to this segment.
    pub fn distance_to_point(self, p: Vec2<T>) -> T {
        let e = self.delta();
        let len_sq = e.norm_sq();
        if len_sq == T::zero() {
            return self.a.distance(p);
        }
        let t = ((p - self.a).dot(e) / len_sq)
            .max(T::zero())
            .min(T::one());
        (self.a + e * t).distance(p)
    }
}

/// Axis-aligned rectangle anchored at the origin: `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub width: T,
    pub height: T,
}

impl<T: Real> Rect<T> {
    pub fn new(width: T, height: T) -> Self {
        Self { width, height }
    }

    pub fn min(self) -> Vec2<T> {
        Vec2::zero()
    }

    pub fn max(self) -> Vec2<T> {
        Vec2::new(self.width, self.height)
    }

    /// Boundary-inclusive containment.
    pub fn contains(self, p: Vec2<T>) -> bool {
        p.x >= T::zero() && p.x <= self.width && p.y >= T::zero() && p.y <= self.height
    }

    /// The four boundary walls, CCW starting from the bottom edge.
    pub fn edges(self) -> [Segment<T>; 4] {
        let o = Vec2::zero();
        let w = Vec2::new(self.width, T::zero());
        let m = self.max();
        let h = Vec2::new(T::zero(), self.height);
        [
            Segment::new(o, w),
            Segment::new(w, m),
            Segment::new(m, h),
            Segment::new(h, o),
        ]
    }
}

/// Even-odd point-in-polygon test; boundary points may land on either side.
pub fn point_in_polygon<T: Real>(p: Vec2<T>, vertices: &[Vec2<T>]) -> bool {
    if vertices.len() < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = vertices.len() - 1;
    for i in 0..vertices.len() {
        let vi = vertices[i];
        let vj = vertices[j];
        if (vi.y > p.y) != (vj.y > p.y) {
            let x_cross = vj.x + (vi.x - vj.x) * (p.y - vj.y) / (vi.y - vj.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Whether two segments intersect, endpoints included.
pub fn segments_intersect<T: Real>(p: Segment<T>, q: Segment<T>) -> bool {
    let d1 = p.delta();
    let d2 = q.delta();
    let denom = d1.cross(d2);
    let ao = q.a - p.a;
    if denom == T::zero() {
        // Parallel: overlapping only if collinear and ranges touch.
        if ao.cross(d1) != T::zero() {
            return false;
        }
        let len_sq = d1.norm_sq();
        if len_sq == T::zero() {
            return q.distance_to_point(p.a) == T::zero();
        }
        let t0 = ao.dot(d1) / len_sq;
        let t1 = (q.b - p.a).dot(d1) / len_sq;
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        hi >= T::zero() && lo <= T::one()
    } else {
        let t = ao.cross(d2) / denom;
        let s = ao.cross(d1) / denom;
        t >= T::zero() && t <= T::one() && s >= T::zero() && s <= T::one()
    }
}

/// Whether a segment intersects the axis-aligned box `[min, max]`
/// (Liang-Barsky clip; touching counts).
pub fn segment_intersects_aabb<T: Real>(seg: Segment<T>, min: Vec2<T>, max: Vec2<T>) -> bool {
    let d = seg.delta();
    let mut t0 = T::zero();
    let mut t1 = T::one();
    for (p, q) in [
        (-d.x, seg.a.x - min.x),
        (d.x, max.x - seg.a.x),
        (-d.y, seg.a.y - min.y),
        (d.y, max.y - seg.a.y),
    ] {
        if p == T::zero() {
            if q < T::zero() {
                return false;
            }
        } else {
            let r = q / p;
            if p < T::zero() {
                if r > t1 {
                    return false;
                }
                if r > t0 {
                    t0 = r;
                }
            } else {
                if r < t0 {
                    return false;
                }
                if r < t1 {
                    t1 = r;
                }
            }
        }
    }
    true
}
