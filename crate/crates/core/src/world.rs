//! Enclosed 2D environment: rectangular bounds with implicit boundary walls,
//! polygon and wall-segment obstacles, and the acoustic/optical properties of
//! the surrounding water. Provides ray queries and ground-truth
//! rasterization onto an occupancy grid.

use crate::geom::{
    point_in_polygon, segment_intersects_aabb, segments_intersect, Rect, Segment, Vec2,
};
use crate::mapping::{LogOddsConfig, OccupancyGrid};
use crate::real::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Surface behaviour under ultrasonic insonification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    /// Hard surface: echoes return (subject to the incidence limit).
    Reflective,
    /// Soft surface: absorbs the pulse, no echo. Lidar still sees it.
    Absorbing,
}

/// Propagation properties of the water column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumProperties<T> {
    /// Speed of sound, m/s.
    pub sound_speed: T,
    /// One-way ultrasonic attenuation, dB/m.
    pub us_atten_db_per_m: T,
    /// One-way optical attenuation coefficient, 1/m.
    pub lidar_atten_per_m: T,
}

impl<T: Real> Default for MediumProperties<T> {
    fn default() -> Self {
        Self {
            sound_speed: T::real(1500.0),
            us_atten_db_per_m: T::real(2.5),
            lidar_atten_per_m: T::real(12.0),
        }
    }
}

/// Obstacle geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape<T> {
    /// Closed simple polygon (vertices in order, implicit closing edge).
    Polygon(Vec<Vec2<T>>),
    /// Thin straight wall.
    Wall(Segment<T>),
}

impl<T: Real> Shape<T> {
    /// Boundary edges of the shape.
    pub fn edges(&self) -> Vec<Segment<T>> {
        match self {
            Shape::Polygon(verts) => (0..verts.len())
                .map(|i| Segment::new(verts[i], verts[(i + 1) % verts.len()]))
                .collect(),
            Shape::Wall(seg) => vec![*seg],
        }
    }

    /// Whether a point is strictly inside the shape (walls have no interior).
    pub fn contains(&self, p: Vec2<T>) -> bool {
        match self {
            Shape::Polygon(verts) => point_in_polygon(p, verts),
            Shape::Wall(_) => false,
        }
    }

    /// Whether the shape intersects the axis-aligned box `[min, max]`.
    pub fn intersects_aabb(&self, min: Vec2<T>, max: Vec2<T>) -> bool {
        match self {
            Shape::Polygon(verts) => {
                for edge in self.edges() {
                    if segment_intersects_aabb(edge, min, max) {
                        return true;
                    }
                }
                // No edge crosses the box: either disjoint, or the box is
                // entirely inside the polygon.
                let center = Vec2::new(
                    (min.x + max.x) / T::real(2.0),
                    (min.y + max.y) / T::real(2.0),
                );
                point_in_polygon(center, verts)
            }
            Shape::Wall(seg) => segment_intersects_aabb(*seg, min, max),
        }
    }
}

/// A physical obstacle in the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle<T> {
    pub shape: Shape<T>,
    pub material: Material,
    /// Dynamic obstacles may appear mid-run.
    pub dynamic: bool,
    /// Simulation time (seconds) at which a dynamic obstacle appears.
    /// `None` on a dynamic obstacle means present from the start.
    pub appear_at_s: Option<T>,
}

impl<T: Real> Obstacle<T> {
    pub fn reflective(shape: Shape<T>) -> Self {
        Self {
            shape,
            material: Material::Reflective,
            dynamic: false,
            appear_at_s: None,
        }
    }

    pub fn absorbing(shape: Shape<T>) -> Self {
        Self {
            material: Material::Absorbing,
            ..Self::reflective(shape)
        }
    }

    pub fn appearing_at(shape: Shape<T>, material: Material, at_s: T) -> Self {
        Self {
            shape,
            material,
            dynamic: true,
            appear_at_s: Some(at_s),
        }
    }

    /// Whether the obstacle is physically present at simulation time `t`.
    pub fn active_at(&self, t: T) -> bool {
        match self.appear_at_s {
            Some(at) => t >= at,
            None => true,
        }
    }
}

/// The enclosed environment. Bounds span `[0, w] x [0, h]` and behave as
/// reflective walls in addition to the listed obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel<T> {
    pub name: String,
    pub bounds: Rect<T>,
    pub medium: MediumProperties<T>,
    pub obstacles: Vec<Obstacle<T>>,
}

/// Result of a ray query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit<T> {
    /// Distance from the ray origin to the hit point.
    pub distance: T,
    pub point: Vec2<T>,
    /// Unit surface normal, oriented against the ray (`dot(normal, dir) <= 0`).
    pub normal: Vec2<T>,
    pub material: Material,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world parse error: {0}")]
    Parse(String),
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error(
        "grid resolution {resolution} too coarse for {width} x {height} bounds: \
         each side needs at least 4 cells"
    )]
    ResolutionTooCoarse {
        resolution: f64,
        width: f64,
        height: f64,
    },
}

impl<T: Real> WorldModel<T> {
    pub fn new(
        name: impl Into<String>,
        bounds: Rect<T>,
        medium: MediumProperties<T>,
        obstacles: Vec<Obstacle<T>>,
    ) -> Result<Self, WorldError> {
        let world = Self {
            name: name.into(),
            bounds,
            medium,
            obstacles,
        };
        world.validate()?;
        Ok(world)
    }

    /// Checks the structural invariants of the environment.
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.bounds.width > T::zero()) || !(self.bounds.height > T::zero()) {
            return Err(WorldError::Invalid("bounds must be positive".into()));
        }
        if self.medium.sound_speed <= T::zero() {
            return Err(WorldError::Invalid("sound speed must be positive".into()));
        }
        if self.medium.us_atten_db_per_m < T::zero() || self.medium.lidar_atten_per_m < T::zero() {
            return Err(WorldError::Invalid(
                "attenuation coefficients must be non-negative".into(),
            ));
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            self.validate_obstacle(i, ob)?;
        }
        Ok(())
    }

    fn validate_obstacle(&self, index: usize, ob: &Obstacle<T>) -> Result<(), WorldError> {
        if let Some(at) = ob.appear_at_s {
            if !ob.dynamic {
                return Err(WorldError::Invalid(format!(
                    "obstacle {index}: appear_at_s requires dynamic=true"
                )));
            }
            if at < T::zero() {
                return Err(WorldError::Invalid(format!(
                    "obstacle {index}: appear_at_s must be non-negative"
                )));
            }
        }
        let inside = |v: Vec2<T>| self.bounds.contains(v);
        match &ob.shape {
            Shape::Wall(seg) => {
                if seg.length() <= T::zero() {
                    return Err(WorldError::Invalid(format!(
                        "obstacle {index}: wall has zero length"
                    )));
                }
                if !inside(seg.a) || !inside(seg.b) {
                    return Err(WorldError::Invalid(format!(
                        "obstacle {index}: wall endpoint outside bounds"
                    )));
                }
            }
            Shape::Polygon(verts) => {
                if verts.len() < 3 {
                    return Err(WorldError::Invalid(format!(
                        "obstacle {index}: polygon needs at least 3 vertices"
                    )));
                }
                if verts.iter().any(|v| !inside(*v)) {
                    return Err(WorldError::Invalid(format!(
                        "obstacle {index}: polygon vertex outside bounds"
                    )));
                }
                let n = verts.len();
                for i in 0..n {
                    if verts[i] == verts[(i + 1) % n] {
                        return Err(WorldError::Invalid(format!(
                            "obstacle {index}: repeated consecutive vertex"
                        )));
                    }
                }
                // Simple polygon: no two non-adjacent edges may touch.
                let edges = ob.shape.edges();
                for i in 0..n {
                    for j in (i + 1)..n {
                        let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                        if adjacent {
                            continue;
                        }
                        if segments_intersect(edges[i], edges[j]) {
                            return Err(WorldError::Invalid(format!(
                                "obstacle {index}: polygon self-intersects (edges {i} and {j})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The world as of simulation time `t`: obstacles scheduled for later
    /// are dropped. Validity is preserved, so no re-validation happens.
    pub fn active_at(&self, t: T) -> WorldModel<T> {
        WorldModel {
            name: self.name.clone(),
            bounds: self.bounds,
            medium: self.medium,
            obstacles: self
                .obstacles
                .iter()
                .filter(|ob| ob.active_at(t))
                .cloned()
                .collect(),
        }
    }

    /// Number of obstacles present at time `t`.
    pub fn active_count_at(&self, t: T) -> usize {
        self.obstacles.iter().filter(|ob| ob.active_at(t)).count()
    }

    /// Casts a ray from `origin` along the unit vector `direction`, returning
    /// the nearest surface within `max_range`. The boundary walls count as
    /// reflective surfaces. Ties keep the earliest surface in iteration
    /// order (boundary first, then obstacles in declaration order).
    pub fn raycast(&self, origin: Vec2<T>, direction: Vec2<T>, max_range: T) -> Option<RayHit<T>> {
        let mut best: Option<(T, Segment<T>, Material)> = None;
        let mut consider = |seg: Segment<T>, material: Material| {
            if let Some((t, _)) = seg.ray_intersection(origin, direction) {
                if t <= max_range && best.as_ref().map_or(true, |(bt, _, _)| t < *bt) {
                    best = Some((t, seg, material));
                }
            }
        };
        for edge in self.bounds.edges() {
            consider(edge, Material::Reflective);
        }
        for ob in &self.obstacles {
            for edge in ob.shape.edges() {
                consider(edge, ob.material);
            }
        }
        best.map(|(t, seg, material)| RayHit {
            distance: t,
            point: origin + direction * t,
            normal: seg.normal_against(direction),
            material,
        })
    }

    /// Rasterizes the ground truth onto an occupancy grid at `resolution`:
    /// a cell is occupied iff its square intersects an obstacle shape or
    /// the boundary ring, occupied cells saturate at the log-odds maximum
    /// and free cells at the minimum.
    pub fn rasterize_ground_truth(&self, resolution: T) -> Result<OccupancyGrid<T>, WorldError> {
        let mut grid = OccupancyGrid::for_bounds(self.bounds, resolution, LogOddsConfig::default())
            .map_err(|_| WorldError::ResolutionTooCoarse {
                resolution: resolution.as_f64(),
                width: self.bounds.width.as_f64(),
                height: self.bounds.height.as_f64(),
            })?;
        let (w, h) = (grid.width(), grid.height());
        let cfg = grid.log_odds_config();
        for row in 0..h {
            for col in 0..w {
                let occupied = if row == 0 || row == h - 1 || col == 0 || col == w - 1 {
                    true
                } else {
                    let (min, max) = grid.cell_box(col, row);
                    self.obstacles
                        .iter()
                        .any(|ob| ob.shape.intersects_aabb(min, max))
                };
                grid.set_log_odds(col, row, if occupied { cfg.l_max } else { cfg.l_min });
            }
        }
        Ok(grid)
    }
}

// --- JSON file format -------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct WorldFile<T> {
    #[serde(default)]
    name: Option<String>,
    bounds: BoundsFile<T>,
    #[serde(default = "MediumProperties::default")]
    medium: MediumProperties<T>,
    #[serde(default = "Vec::new")]
    obstacles: Vec<ObstacleFile<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct BoundsFile<T> {
    w: T,
    h: T,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ShapeKind {
    Polygon,
    Segment,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct ObstacleFile<T> {
    #[serde(rename = "type")]
    kind: ShapeKind,
    vertices: Vec<[T; 2]>,
    #[serde(default = "default_material")]
    material: Material,
    #[serde(default)]
    dynamic: bool,
    #[serde(default)]
    appear_at_s: Option<T>,
}

fn default_material() -> Material {
    Material::Reflective
}

impl<T: Real> ObstacleFile<T> {
    fn into_obstacle(self, index: usize) -> Result<Obstacle<T>, WorldError> {
        let points: Vec<Vec2<T>> = self.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect();
        let shape = match self.kind {
            ShapeKind::Polygon => Shape::Polygon(points),
            ShapeKind::Segment => {
                if points.len() != 2 {
                    return Err(WorldError::Invalid(format!(
                        "obstacle {index}: a segment needs exactly 2 vertices, got {}",
                        points.len()
                    )));
                }
                Shape::Wall(Segment::new(points[0], points[1]))
            }
        };
        Ok(Obstacle {
            shape,
            material: self.material,
            dynamic: self.dynamic,
            appear_at_s: self.appear_at_s,
        })
    }

    fn from_obstacle(ob: &Obstacle<T>) -> Self {
        let (kind, vertices) = match &ob.shape {
            Shape::Polygon(verts) => (
                ShapeKind::Polygon,
                verts.iter().map(|v| [v.x, v.y]).collect(),
            ),
            Shape::Wall(seg) => (
                ShapeKind::Segment,
                vec![[seg.a.x, seg.a.y], [seg.b.x, seg.b.y]],
            ),
        };
        Self {
            kind,
            vertices,
            material: ob.material,
            dynamic: ob.dynamic,
            appear_at_s: ob.appear_at_s,
        }
    }
}

/// Parses and validates a world from its JSON representation.
pub fn load_world<T: Real>(json: &str) -> Result<WorldModel<T>, WorldError> {
    let file: WorldFile<T> =
        serde_json::from_str(json).map_err(|e| WorldError::Parse(e.to_string()))?;
    let obstacles = file
        .obstacles
        .into_iter()
        .enumerate()
        .map(|(i, ob)| ob.into_obstacle(i))
        .collect::<Result<Vec<_>, _>>()?;
    WorldModel::new(
        file.name.unwrap_or_else(|| "unnamed".into()),
        Rect::new(file.bounds.w, file.bounds.h),
        file.medium,
        obstacles,
    )
}

/// Serializes a world back to the JSON file format.
pub fn world_to_json<T: Real>(world: &WorldModel<T>) -> String {
    let file = WorldFile {
        name: Some(world.name.clone()),
        bounds: BoundsFile {
            w: world.bounds.width,
            h: world.bounds.height,
        },
        medium: world.medium,
        obstacles: world
            .obstacles
            .iter()
            .map(ObstacleFile::from_obstacle)
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("world serialization cannot fail")
}
