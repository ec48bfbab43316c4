//! Grid path planning and local control. Global routes come from A* on a
//! 4-connected unit-cost grid inflated by the vehicle footprint; an
//! independent Dijkstra implementation serves as a cost oracle. A pure
//! pursuit controller follows the waypoints and asks for a replan when a
//! range reading lands on the remaining path. Exploration targets the
//! nearest reachable frontier between free and unknown space.

use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::mapping::{CellState, ClassifiedGrid};
use crate::real::Real;
use crate::sensors::{Echo, LidarScan, RangeReading};
use crate::vehicle::{VehicleConfig, VelocityCommand};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use thiserror::Error;

/// Grid coordinate as `(col, row)`.
pub type Cell = (usize, usize);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("no path exists between the requested endpoints")]
    NoPath,
    #[error("{which} cell {cell:?} is blocked or outside the grid")]
    InvalidEndpoint { which: &'static str, cell: Cell },
}

/// Binary traversability grid derived from a classified map: occupied
/// cells (and optionally unknown ones) are blocked, then everything
/// dilates by the footprint inflation radius in Chebyshev distance, which
/// covers the Euclidean footprint disc.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningGrid<T> {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
    resolution: T,
    origin: Vec2<T>,
}

/// Footprint inflation radius in whole cells.
pub fn inflation_cells<T: Real>(footprint_radius: T, resolution: T) -> usize {
    let ratio = (footprint_radius / resolution).as_f64();
    (ratio - 1e-9).ceil().max(0.0) as usize
}

fn dilate_chebyshev(src: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return src.to_vec();
    }
    // Separable max filter: horizontal window, then vertical.
    let mut horiz = vec![false; src.len()];
    for row in 0..height {
        for col in 0..width {
            let lo = col.saturating_sub(radius);
            let hi = (col + radius).min(width - 1);
            horiz[row * width + col] = (lo..=hi).any(|c| src[row * width + c]);
        }
    }
    let mut out = vec![false; src.len()];
    for row in 0..height {
        for col in 0..width {
            let lo = row.saturating_sub(radius);
            let hi = (row + radius).min(height - 1);
            out[row * width + col] = (lo..=hi).any(|r| horiz[r * width + col]);
        }
    }
    out
}

impl<T: Real> PlanningGrid<T> {
    /// Builds the traversability grid from a classified map.
    pub fn from_classified(
        map: &ClassifiedGrid<T>,
        inflation: usize,
        unknown_blocked: bool,
    ) -> Self {
        let width = map.width();
        let height = map.height();
        let mut blocked = vec![false; width * height];
        for row in 0..height {
            for col in 0..width {
                blocked[row * width + col] = match map.get(col, row) {
                    CellState::Occupied => true,
                    CellState::Unknown => unknown_blocked,
                    CellState::Free => false,
                };
            }
        }
        Self {
            width,
            height,
            blocked: dilate_chebyshev(&blocked, width, height, inflation),
            resolution: map.resolution(),
            origin: map.origin(),
        }
    }

    /// Fully open grid, mainly for tests and synthetic benchmarks.
    pub fn open(width: usize, height: usize, resolution: T) -> Self {
        Self {
            width,
            height,
            blocked: vec![false; width * height],
            resolution,
            origin: Vec2::zero(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.0 < self.width && cell.1 < self.height
    }

    pub fn block(&mut self, cell: Cell) {
        let i = cell.1 * self.width + cell.0;
        self.blocked[i] = true;
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.blocked[cell.1 * self.width + cell.0]
    }

    pub fn cell_center(&self, cell: Cell) -> Vec2<T> {
        let half = T::real(0.5);
        self.origin
            + Vec2::new(
                (T::from_usize(cell.0).unwrap() + half) * self.resolution,
                (T::from_usize(cell.1).unwrap() + half) * self.resolution,
            )
    }

    pub fn world_to_cell(&self, p: Vec2<T>) -> Option<Cell> {
        let rel = (p - self.origin) / self.resolution;
        if rel.x < T::zero() || rel.y < T::zero() {
            return None;
        }
        let cell = (rel.x.floor().to_usize()?, rel.y.floor().to_usize()?);
        if self.in_bounds(cell) {
            Some(cell)
        } else {
            None
        }
    }

    /// Closest free cell within a Chebyshev radius, scanning rings outward
    /// in a fixed order so recovery is deterministic.
    pub fn nearest_free_cell(&self, cell: Cell, max_radius: usize) -> Option<Cell> {
        if self.is_free(cell) {
            return Some(cell);
        }
        let (c0, r0) = (cell.0 as isize, cell.1 as isize);
        for radius in 1..=max_radius as isize {
            for dr in -radius..=radius {
                for dc in -radius..=radius {
                    if dr.abs().max(dc.abs()) != radius {
                        continue;
                    }
                    let (c, r) = (c0 + dc, r0 + dr);
                    if c < 0 || r < 0 {
                        continue;
                    }
                    let candidate = (c as usize, r as usize);
                    if self.is_free(candidate) {
                        return Some(candidate);
                    }
                }
            }
        }
        None
    }

    fn index(&self, cell: Cell) -> usize {
        cell.1 * self.width + cell.0
    }

    fn cell_of(&self, index: usize) -> Cell {
        (index % self.width, index / self.width)
    }

    fn check_endpoint(&self, cell: Cell, which: &'static str) -> Result<(), PlanError> {
        if self.is_free(cell) {
            Ok(())
        } else {
            Err(PlanError::InvalidEndpoint { which, cell })
        }
    }
}

/// L1 distance between cells: admissible and consistent on a 4-connected
/// unit-cost grid.
pub fn heuristic_manhattan(a: Cell, b: Cell) -> u32 {
    let dc = a.0.abs_diff(b.0);
    let dr = a.1.abs_diff(b.1);
    (dc + dr) as u32
}

/// A planned route: grid cells from start to goal inclusive, the step
/// count as cost, and the cell centers as world waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath<T> {
    pub cells: Vec<Cell>,
    pub cost: u32,
    pub world_waypoints: Vec<Vec2<T>>,
}

/// Search effort counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    /// Nodes settled (popped and expanded).
    pub expanded: usize,
}

#[derive(PartialEq, Eq)]
struct HeapEntry {
    f: u32,
    g: u32,
    index: usize,
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap pops the greatest entry, so "better" must compare
        // greater: smaller f, then larger g, then smaller row-major index.
        other
            .f
            .cmp(&self.f)
            .then(self.g.cmp(&other.g))
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBOR_STEPS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn neighbors<T: Real>(grid: &PlanningGrid<T>, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
    NEIGHBOR_STEPS.iter().filter_map(move |(dc, dr)| {
        let c = cell.0 as isize + dc;
        let r = cell.1 as isize + dr;
        if c < 0 || r < 0 {
            return None;
        }
        let cell = (c as usize, r as usize);
        if grid.is_free(cell) {
            Some(cell)
        } else {
            None
        }
    })
}

/// A* with the Manhattan heuristic. Equal-f ties prefer deeper nodes, then
/// the smaller row-major index, so repeated runs return the same path.
pub fn plan_global<T: Real>(
    grid: &PlanningGrid<T>,
    start: Cell,
    goal: Cell,
) -> Result<GridPath<T>, PlanError> {
    plan_global_detailed(grid, start, goal).map(|(path, _)| path)
}

/// A* variant that also reports search effort.
pub fn plan_global_detailed<T: Real>(
    grid: &PlanningGrid<T>,
    start: Cell,
    goal: Cell,
) -> Result<(GridPath<T>, SearchStats), PlanError> {
    grid.check_endpoint(start, "start")?;
    grid.check_endpoint(goal, "goal")?;

    let n = grid.width * grid.height;
    let mut g_score = vec![u32::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut stats = SearchStats::default();

    let start_idx = grid.index(start);
    let goal_idx = grid.index(goal);
    g_score[start_idx] = 0;
    heap.push(HeapEntry {
        f: heuristic_manhattan(start, goal),
        g: 0,
        index: start_idx,
    });

    while let Some(entry) = heap.pop() {
        if closed[entry.index] || entry.g != g_score[entry.index] {
            continue;
        }
        closed[entry.index] = true;
        stats.expanded += 1;
        if entry.index == goal_idx {
            let path = reconstruct(grid, &parent, start_idx, goal_idx, entry.g);
            debug_assert!(check_admissibility(&path, goal), "heuristic overestimates");
            return Ok((path, stats));
        }
        let cell = grid.cell_of(entry.index);
        for next in neighbors(grid, cell) {
            let next_idx = grid.index(next);
            if closed[next_idx] {
                continue;
            }
            let tentative = entry.g + 1;
            if tentative < g_score[next_idx] {
                g_score[next_idx] = tentative;
                parent[next_idx] = entry.index;
                heap.push(HeapEntry {
                    f: tentative + heuristic_manhattan(next, goal),
                    g: tentative,
                    index: next_idx,
                });
            }
        }
    }
    Err(PlanError::NoPath)
}

fn reconstruct<T: Real>(
    grid: &PlanningGrid<T>,
    parent: &[usize],
    start_idx: usize,
    goal_idx: usize,
    cost: u32,
) -> GridPath<T> {
    let mut cells = Vec::with_capacity(cost as usize + 1);
    let mut idx = goal_idx;
    loop {
        cells.push(grid.cell_of(idx));
        if idx == start_idx {
            break;
        }
        idx = parent[idx];
    }
    cells.reverse();
    let world_waypoints = cells.iter().map(|c| grid.cell_center(*c)).collect();
    GridPath {
        cells,
        cost,
        world_waypoints,
    }
}

fn check_admissibility(path: &GridPath<impl Real>, goal: Cell) -> bool {
    path.cells
        .iter()
        .enumerate()
        .all(|(g, cell)| heuristic_manhattan(*cell, goal) <= path.cost - g as u32)
}

/// Uniform-cost search kept deliberately separate from the A* above: it
/// cross-checks optimal costs in tests and benchmarks.
pub fn dijkstra_cost<T: Real>(
    grid: &PlanningGrid<T>,
    start: Cell,
    goal: Cell,
) -> Result<u32, PlanError> {
    dijkstra_cost_detailed(grid, start, goal).map(|(cost, _)| cost)
}

/// Uniform-cost search variant that also reports search effort.
pub fn dijkstra_cost_detailed<T: Real>(
    grid: &PlanningGrid<T>,
    start: Cell,
    goal: Cell,
) -> Result<(u32, SearchStats), PlanError> {
    grid.check_endpoint(start, "start")?;
    grid.check_endpoint(goal, "goal")?;

    let n = grid.width * grid.height;
    let mut dist = vec![u32::MAX; n];
    let mut settled = vec![false; n];
    let mut heap: BinaryHeap<std::cmp::Reverse<(u32, usize)>> = BinaryHeap::new();
    let mut stats = SearchStats::default();

    let start_idx = grid.index(start);
    let goal_idx = grid.index(goal);
    dist[start_idx] = 0;
    heap.push(std::cmp::Reverse((0, start_idx)));

    while let Some(std::cmp::Reverse((d, idx))) = heap.pop() {
        if settled[idx] {
            continue;
        }
        settled[idx] = true;
        stats.expanded += 1;
        if idx == goal_idx {
            return Ok((d, stats));
        }
        for next in neighbors(grid, grid.cell_of(idx)) {
            let next_idx = grid.index(next);
            let nd = d + 1;
            if nd < dist[next_idx] {
                dist[next_idx] = nd;
                heap.push(std::cmp::Reverse((nd, next_idx)));
            }
        }
    }
    Err(PlanError::NoPath)
}

// --- Local control -----------------------------------------------------------

/// Pure pursuit and safety parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct LocalPlannerConfig<T: Real> {
    /// Waypoints inside this radius are considered reached, m.
    pub lookahead: T,
    /// Proportional gain from heading error to yaw rate.
    pub turn_gain: T,
    /// Forward speed is zero at or under this front clearance, m.
    pub stop_near: T,
    /// Full speed at or above this front clearance, m.
    pub stop_far: T,
    /// Half-angle of the forward sector used for the clearance check, deg.
    pub front_halfwidth_deg: T,
    /// A range hit within this distance of a remaining waypoint requests a
    /// replan, m.
    pub replan_clearance: T,
}

impl<T: Real> Default for LocalPlannerConfig<T> {
    fn default() -> Self {
        Self {
            lookahead: T::real(0.3),
            turn_gain: T::real(1.5),
            stop_near: T::real(0.25),
            stop_far: T::real(0.6),
            front_halfwidth_deg: T::real(45.0),
            replan_clearance: T::real(0.2),
        }
    }
}

/// A range hit projected into the world and the robot body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensedPoint<T> {
    pub point: Vec2<T>,
    pub distance: T,
    /// Bearing relative to the robot heading, wrapped.
    pub bearing_body: T,
    /// True when the hit falls on a cell the map already knows occupied.
    /// Expected hits still gate speed but never request a replan: the
    /// current path was planned around them.
    pub expected: bool,
}

/// Obstacle evidence from the latest sensor frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensedObstacles<T> {
    pub points: Vec<SensedPoint<T>>,
}

impl<T: Real> SensedObstacles<T> {
    pub fn none() -> Self {
        Self { points: Vec::new() }
    }

    /// Projects sonar echoes from the estimated pose; max-range readings
    /// contribute nothing.
    pub fn from_sonar_ring(
        pose: Pose2<T>,
        readings: &[RangeReading<T>],
        mount_angles: &[T],
    ) -> Self {
        let points = readings
            .iter()
            .filter_map(|r| {
                let d = match r.echo {
                    Echo::Range(d) => d,
                    Echo::OutOfRange => return None,
                };
                let bearing = mount_angles[r.sensor_index];
                Some(SensedPoint {
                    point: pose.position() + Vec2::from_angle(pose.yaw + bearing) * d,
                    distance: d,
                    bearing_body: wrap_angle(bearing),
                    expected: false,
                })
            })
            .collect();
        Self { points }
    }

    /// Projects every `stride`-th lidar return from the estimated pose.
    pub fn from_lidar(pose: Pose2<T>, scan: &LidarScan<T>, stride: usize) -> Self {
        let stride = stride.max(1);
        let points = (0..scan.ranges.len())
            .step_by(stride)
            .filter_map(|i| {
                let d = match scan.ranges[i] {
                    Echo::Range(d) => d,
                    Echo::OutOfRange => return None,
                };
                let bearing = scan.beam_angle(i);
                Some(SensedPoint {
                    point: pose.position() + Vec2::from_angle(pose.yaw + bearing) * d,
                    distance: d,
                    bearing_body: wrap_angle(bearing),
                    expected: false,
                })
            })
            .collect();
        Self { points }
    }

    /// Marks hits that land on cells the map already classifies occupied.
    /// Out-of-grid points stay unexpected.
    pub fn mark_expected(&mut self, map: &ClassifiedGrid<T>) {
        for p in &mut self.points {
            p.expected = map
                .world_to_cell(p.point)
                .map(|(col, row)| map.get(col, row) == CellState::Occupied)
                .unwrap_or(false);
        }
    }

    /// Nearest hit within the forward sector, re-projected against the
    /// given pose. The stored body-frame geometry goes stale between
    /// sensor frames (a 1 Hz lidar leaves it half a meter behind at full
    /// speed), so clearance is always measured from where the robot is
    /// now.
    pub fn front_clearance(&self, pose: Pose2<T>, halfwidth_deg: T) -> Option<T> {
        let half = halfwidth_deg.to_radians();
        self.points
            .iter()
            .filter_map(|p| {
                let rel = p.point - pose.position();
                let bearing = wrap_angle(rel.y.atan2(rel.x) - pose.yaw);
                if bearing.abs() <= half {
                    Some(rel.norm())
                } else {
                    None
                }
            })
            .fold(None, |acc, d| match acc {
                Some(m) if m <= d => Some(m),
                _ => Some(d),
            })
    }
}

/// Output of the local planner for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalDecision<T> {
    Command(VelocityCommand<T>),
    /// The remaining path is obstructed; the caller should replan.
    Replan,
}

/// Pure pursuit follower. Steers toward the first waypoint beyond the
/// lookahead radius, scales speed down with heading error and front
/// clearance, and requests a replan when an unexpected obstacle point
/// lands within `replan_clearance` of the remaining waypoints.
pub fn plan_local<T: Real>(
    pose: Pose2<T>,
    path: &GridPath<T>,
    sensed: &SensedObstacles<T>,
    cfg: &LocalPlannerConfig<T>,
    limits: &VehicleConfig<T>,
) -> LocalDecision<T> {
    let waypoints = &path.world_waypoints;
    if waypoints.is_empty() {
        return LocalDecision::Replan;
    }

    // Progress: the nearest waypoint (first on ties).
    let position = pose.position();
    let mut progress = 0;
    let mut best = T::infinity();
    for (i, wp) in waypoints.iter().enumerate() {
        let d = position.distance(*wp);
        if d < best {
            best = d;
            progress = i;
        }
    }

    // Obstruction check over the remaining route. Only unexpected hits
    // count: the path was already planned around mapped obstacles.
    for wp in &waypoints[progress..] {
        for hit in &sensed.points {
            if !hit.expected && hit.point.distance(*wp) < cfg.replan_clearance {
                return LocalDecision::Replan;
            }
        }
    }

    // Target: first remaining waypoint beyond the lookahead radius.
    let target = waypoints[progress..]
        .iter()
        .find(|wp| position.distance(**wp) > cfg.lookahead)
        .copied()
        .unwrap_or_else(|| *waypoints.last().unwrap());

    let to_target = target - position;
    // Path exhausted: within half a lookahead of the final waypoint the
    // steering vector is numerically meaningless, so park instead of
    // hunting around it.
    if to_target.norm() <= cfg.lookahead * T::real(0.5) {
        return LocalDecision::Command(VelocityCommand::stop());
    }
    let heading_error = wrap_angle(to_target.angle() - pose.yaw);
    let omega = (cfg.turn_gain * heading_error)
        .max(-limits.omega_max)
        .min(limits.omega_max);

    // Speed: full when aligned and clear, zero when blocked or turning
    // in place.
    let clearance_scale = match sensed.front_clearance(pose, cfg.front_halfwidth_deg) {
        Some(d) if d <= cfg.stop_near => T::zero(),
        Some(d) if d < cfg.stop_far => (d - cfg.stop_near) / (cfg.stop_far - cfg.stop_near),
        _ => T::one(),
    };
    let alignment_scale = heading_error.cos().max(T::zero());
    let v = limits.v_max * clearance_scale * alignment_scale;

    LocalDecision::Command(VelocityCommand { v, omega })
}

// --- Replanning and exploration ----------------------------------------------

/// Global planning parameters shared by navigation and exploration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct GlobalPlannerConfig<T: Real> {
    /// Vehicle footprint radius used for obstacle inflation, m.
    pub footprint_radius: T,
    /// Whether unknown cells block navigation (exploration always blocks
    /// them).
    pub unknown_blocked: bool,
    /// Chebyshev radius (cells) searched to recover a blocked start cell.
    pub start_recovery_radius: usize,
}

impl<T: Real> Default for GlobalPlannerConfig<T> {
    fn default() -> Self {
        Self {
            footprint_radius: T::real(0.2),
            unknown_blocked: true,
            start_recovery_radius: 3,
        }
    }
}

fn recover_start<T: Real>(
    grid: &PlanningGrid<T>,
    position: Vec2<T>,
    recovery_radius: usize,
) -> Result<Cell, PlanError> {
    let cell = grid
        .world_to_cell(position)
        .ok_or(PlanError::InvalidEndpoint {
            which: "start",
            cell: (usize::MAX, usize::MAX),
        })?;
    grid.nearest_free_cell(cell, recovery_radius)
        .ok_or(PlanError::InvalidEndpoint {
            which: "start",
            cell,
        })
}

/// Plans from the current pose to a world-frame goal on the latest map.
/// A blocked start cell recovers to the nearest free cell nearby; a
/// blocked goal is an error.
pub fn replan<T: Real>(
    map: &ClassifiedGrid<T>,
    pose: Pose2<T>,
    goal: Vec2<T>,
    cfg: &GlobalPlannerConfig<T>,
) -> Result<GridPath<T>, PlanError> {
    let inflation = inflation_cells(cfg.footprint_radius, map.resolution());
    let grid = PlanningGrid::from_classified(map, inflation, cfg.unknown_blocked);
    let start = recover_start(&grid, pose.position(), cfg.start_recovery_radius)?;
    let goal_cell = grid.world_to_cell(goal).ok_or(PlanError::InvalidEndpoint {
        which: "goal",
        cell: (usize::MAX, usize::MAX),
    })?;
    plan_global(&grid, start, goal_cell)
}

/// Free cells 4-adjacent to unknown space, in row-major order.
pub fn frontier_cells<T: Real>(map: &ClassifiedGrid<T>) -> Vec<Cell> {
    let mut frontiers = Vec::new();
    for row in 0..map.height() {
        for col in 0..map.width() {
            if map.get(col, row) != CellState::Free {
                continue;
            }
            let unknown_neighbor = NEIGHBOR_STEPS.iter().any(|(dc, dr)| {
                let c = col as isize + dc;
                let r = row as isize + dr;
                c >= 0
                    && r >= 0
                    && map.in_bounds(c as usize, r as usize)
                    && map.get(c as usize, r as usize) == CellState::Unknown
            });
            if unknown_neighbor {
                frontiers.push((col, row));
            }
        }
    }
    frontiers
}

/// Plans to the closest traversable cell adjacent to a frontier,
/// breadth-first from the current pose. Unknown space is always blocked
/// here. Returns `Ok(None)` when no reachable frontier remains, which
/// signals complete coverage. `banned` cells are skipped as targets (used
/// to avoid re-targeting frontiers that could not be cleared).
pub fn plan_to_nearest_frontier<T: Real>(
    map: &ClassifiedGrid<T>,
    pose: Pose2<T>,
    cfg: &GlobalPlannerConfig<T>,
    banned: &BTreeSet<Cell>,
) -> Result<Option<GridPath<T>>, PlanError> {
    let inflation = inflation_cells(cfg.footprint_radius, map.resolution());
    let grid = PlanningGrid::from_classified(map, inflation, true);
    let (width, height) = (grid.width, grid.height);

    // Target mask: traversable cells within inflation + 1 of a frontier.
    let mut frontier_mask = vec![false; width * height];
    for cell in frontier_cells(map) {
        frontier_mask[cell.1 * width + cell.0] = true;
    }
    let near_frontier = dilate_chebyshev(&frontier_mask, width, height, inflation + 1);
    let mut has_target = false;
    let mut target_mask = vec![false; width * height];
    for idx in 0..target_mask.len() {
        let cell = (idx % width, idx / width);
        if near_frontier[idx] && grid.is_free(cell) && !banned.contains(&cell) {
            target_mask[idx] = true;
            has_target = true;
        }
    }
    if !has_target {
        return Ok(None);
    }

    let start = recover_start(&grid, pose.position(), cfg.start_recovery_radius)?;
    let start_idx = grid.index(start);

    // Breadth-first search over traversable cells, fixed neighbor order.
    let mut parent = vec![usize::MAX; width * height];
    let mut seen = vec![false; width * height];
    let mut queue = VecDeque::new();
    seen[start_idx] = true;
    queue.push_back(start_idx);
    let mut found: Option<usize> = None;
    while let Some(idx) = queue.pop_front() {
        if target_mask[idx] {
            found = Some(idx);
            break;
        }
        for next in neighbors(&grid, grid.cell_of(idx)) {
            let next_idx = grid.index(next);
            if !seen[next_idx] {
                seen[next_idx] = true;
                parent[next_idx] = idx;
                queue.push_back(next_idx);
            }
        }
    }

    let Some(goal_idx) = found else {
        return Ok(None);
    };
    let mut cells = Vec::new();
    let mut idx = goal_idx;
    loop {
        cells.push(grid.cell_of(idx));
        if idx == start_idx {
            break;
        }
        idx = parent[idx];
    }
    cells.reverse();
    let cost = (cells.len() - 1) as u32;
    let world_waypoints = cells.iter().map(|c| grid.cell_center(*c)).collect();
    Ok(Some(GridPath {
        cells,
        cost,
        world_waypoints,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::mapping::{LogOddsConfig, OccupancyGrid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn classified_all(state: CellState, w: usize, h: usize) -> ClassifiedGrid<f64> {
        let grid = OccupancyGrid::for_bounds(
            Rect::new(w as f64 * 0.1, h as f64 * 0.1),
            0.1,
            LogOddsConfig::default(),
        )
        .unwrap();
        let mut classified = grid.classify();
        for row in 0..h {
            for col in 0..w {
                classified.set(col, row, state);
            }
        }
        classified
    }

    #[test]
    fn manhattan_heuristic_basics() {
        assert_eq!(heuristic_manhattan((0, 0), (3, 4)), 7);
        assert_eq!(heuristic_manhattan((3, 4), (0, 0)), 7);
        assert_eq!(heuristic_manhattan((5, 5), (5, 5)), 0);
    }

    #[test]
    fn straight_path_costs_manhattan_distance() {
        let grid = PlanningGrid::open(10, 10, 0.1);
        let path = plan_global(&grid, (1, 1), (7, 4)).unwrap();
        assert_eq!(path.cost, 9);
        assert_eq!(path.cells.len(), 10);
        assert_eq!(path.cells[0], (1, 1));
        assert_eq!(*path.cells.last().unwrap(), (7, 4));
        for w in path.cells.windows(2) {
            assert_eq!(heuristic_manhattan(w[0], w[1]), 1, "4-connected steps");
        }
        assert_eq!(path.cost, dijkstra_cost(&grid, (1, 1), (7, 4)).unwrap());
    }

    #[test]
    fn start_equals_goal_gives_trivial_path() {
        let grid = PlanningGrid::open(5, 5, 0.1);
        let path = plan_global(&grid, (2, 2), (2, 2)).unwrap();
        assert_eq!(path.cost, 0);
        assert_eq!(path.cells, vec![(2, 2)]);
    }

    #[test]
    fn wall_with_gap_routes_through_the_gap() {
        let mut grid = PlanningGrid::open(11, 11, 0.1);
        for row in 0..11 {
            if row != 5 {
                grid.block((5, row));
            }
        }
        let path = plan_global(&grid, (1, 1), (9, 9)).unwrap();
        assert!(path.cells.contains(&(5, 5)), "must pass the gap");
        assert_eq!(path.cost, dijkstra_cost(&grid, (1, 1), (9, 9)).unwrap());
    }

    #[test]
    fn sealed_wall_yields_no_path() {
        let mut grid = PlanningGrid::open(11, 11, 0.1);
        for row in 0..11 {
            grid.block((5, row));
        }
        assert_eq!(plan_global(&grid, (1, 1), (9, 9)).unwrap_err(), PlanError::NoPath);
        assert_eq!(dijkstra_cost(&grid, (1, 1), (9, 9)).unwrap_err(), PlanError::NoPath);
    }

    #[test]
    fn blocked_endpoints_are_rejected() {
        let mut grid = PlanningGrid::open(5, 5, 0.1);
        grid.block((2, 2));
        match plan_global(&grid, (2, 2), (4, 4)) {
            Err(PlanError::InvalidEndpoint { which: "start", .. }) => {}
            other => panic!("expected invalid start, got {other:?}"),
        }
        match plan_global(&grid, (0, 0), (2, 2)) {
            Err(PlanError::InvalidEndpoint { which: "goal", .. }) => {}
            other => panic!("expected invalid goal, got {other:?}"),
        }
        // Outside the grid entirely.
        assert!(plan_global(&grid, (0, 0), (9, 9)).is_err());
    }

    #[test]
    fn repeated_planning_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut grid = PlanningGrid::open(20, 20, 0.1);
        for _ in 0..80 {
            let cell = (rng.random_range(0..20), rng.random_range(0..20));
            if cell != (0, 0) && cell != (19, 19) {
                grid.block(cell);
            }
        }
        if let Ok(first) = plan_global(&grid, (0, 0), (19, 19)) {
            for _ in 0..5 {
                assert_eq!(plan_global(&grid, (0, 0), (19, 19)).unwrap(), first);
            }
        }
    }

    fn random_grid(seed: u64, w: usize, h: usize, block_prob: f64) -> PlanningGrid<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = PlanningGrid::open(w, h, 0.1);
        for row in 0..h {
            for col in 0..w {
                if rng.random::<f64>() < block_prob {
                    grid.block((col, row));
                }
            }
        }
        grid
    }

    #[test]
    fn astar_cost_matches_dijkstra_on_random_grids() {
        for seed in 0..40u64 {
            let mut grid = random_grid(seed, 30, 30, 0.2);
            let start = (0, 0);
            let goal = (29, 29);
            // Endpoints forced open.
            grid.blocked[0] = false;
            let gi = grid.index(goal);
            grid.blocked[gi] = false;
            match (plan_global(&grid, start, goal), dijkstra_cost(&grid, start, goal)) {
                (Ok(path), Ok(cost)) => assert_eq!(path.cost, cost, "seed {seed}"),
                (Err(PlanError::NoPath), Err(PlanError::NoPath)) => {}
                (a, b) => panic!("seed {seed}: solvability disagrees: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn astar_expands_no_more_than_dijkstra() {
        for seed in 100..120u64 {
            let mut grid = random_grid(seed, 30, 30, 0.15);
            grid.blocked[0] = false;
            let gi = grid.index((29, 29));
            grid.blocked[gi] = false;
            let a = plan_global_detailed(&grid, (0, 0), (29, 29));
            let d = dijkstra_cost_detailed(&grid, (0, 0), (29, 29));
            if let (Ok((_, sa)), Ok((_, sd))) = (a, d) {
                assert!(
                    sa.expanded <= sd.expanded,
                    "seed {seed}: A* expanded {} vs Dijkstra {}",
                    sa.expanded,
                    sd.expanded
                );
            }
        }
    }

    proptest! {
        #[test]
        fn astar_equals_dijkstra_property(seed in 0u64..500) {
            let mut grid = random_grid(seed, 15, 15, 0.25);
            grid.blocked[0] = false;
            let gi = grid.index((14, 14));
            grid.blocked[gi] = false;
            let a = plan_global(&grid, (0, 0), (14, 14));
            let d = dijkstra_cost(&grid, (0, 0), (14, 14));
            match (a, d) {
                (Ok(path), Ok(cost)) => prop_assert_eq!(path.cost, cost),
                (Err(PlanError::NoPath), Err(PlanError::NoPath)) => {},
                (a, b) => prop_assert!(false, "disagreement: {:?} vs {:?}", a, b),
            }
        }
    }

    #[test]
    fn inflation_radius_covers_footprint() {
        assert_eq!(inflation_cells(0.2, 0.1), 2);
        assert_eq!(inflation_cells(0.25, 0.1), 3);
        assert_eq!(inflation_cells(0.1, 0.1), 1);
        assert_eq!(inflation_cells(0.0, 0.1), 0);
    }

    #[test]
    fn inflated_grid_blocks_cells_near_obstacles() {
        let mut map = classified_all(CellState::Free, 20, 20);
        map.set(10, 10, CellState::Occupied);
        let grid = PlanningGrid::from_classified(&map, 2, true);
        // Chebyshev disc of radius 2 blocked.
        for dr in -2i32..=2 {
            for dc in -2i32..=2 {
                let cell = ((10 + dc) as usize, (10 + dr) as usize);
                assert!(!grid.is_free(cell), "{cell:?}");
            }
        }
        assert!(grid.is_free((7, 10)));
        assert!(grid.is_free((13, 13)));
        // Planned paths keep the footprint clearance.
        let path = plan_global(&grid, (0, 10), (19, 10)).unwrap();
        for cell in &path.cells {
            let dc = (cell.0 as isize - 10).abs();
            let dr = (cell.1 as isize - 10).abs();
            assert!(dc.max(dr) > 2, "path cell {cell:?} too close");
        }
    }

    #[test]
    fn unknown_policy_gates_traversal() {
        let mut map = classified_all(CellState::Free, 10, 10);
        // Unknown curtain down the middle.
        for row in 0..10 {
            map.set(5, row, CellState::Unknown);
        }
        let conservative = PlanningGrid::from_classified(&map, 0, true);
        assert_eq!(
            plan_global(&conservative, (1, 5), (8, 5)).unwrap_err(),
            PlanError::NoPath
        );
        let optimistic = PlanningGrid::from_classified(&map, 0, false);
        let path = plan_global(&optimistic, (1, 5), (8, 5)).unwrap();
        assert_eq!(path.cost, 7);
    }

    #[test]
    fn nearest_free_cell_recovers_deterministically() {
        let mut grid = PlanningGrid::open(10, 10, 0.1);
        for dr in -1i32..=1 {
            for dc in -1i32..=1 {
                grid.block(((5 + dc) as usize, (5 + dr) as usize));
            }
        }
        let got = grid.nearest_free_cell((5, 5), 3).unwrap();
        // Ring radius 2, scan order starts at the lowest row and column.
        assert_eq!(got, (3, 3));
        assert_eq!(grid.nearest_free_cell((5, 5), 1), None);
        assert_eq!(grid.nearest_free_cell((2, 2), 2), Some((2, 2)));
    }

    fn straight_path(grid: &PlanningGrid<f64>) -> GridPath<f64> {
        plan_global(grid, (2, 10), (17, 10)).unwrap()
    }

    #[test]
    fn pursuit_drives_straight_at_clear_path() {
        let grid = PlanningGrid::open(20, 20, 0.1);
        let path = straight_path(&grid);
        let pose = Pose2::new(0.25, 1.05, 0.0);
        let decision = plan_local(
            pose,
            &path,
            &SensedObstacles::none(),
            &LocalPlannerConfig::default(),
            &VehicleConfig::default(),
        );
        match decision {
            LocalDecision::Command(cmd) => {
                assert_relative_eq!(cmd.v, 0.5);
                assert_relative_eq!(cmd.omega, 0.0, epsilon = 1e-9);
            }
            LocalDecision::Replan => panic!("clear path should not replan"),
        }
    }

    #[test]
    fn pursuit_stops_when_blocked_ahead() {
        let grid = PlanningGrid::open(20, 20, 0.1);
        let path = straight_path(&grid);
        let pose = Pose2::new(0.25, 1.05, 0.0);
        let sensed = SensedObstacles {
            points: vec![SensedPoint {
                point: Vec2::new(0.5, 1.05),
                distance: 0.25,
                bearing_body: 0.0,
                expected: true,
            }],
        };
        match plan_local(
            pose,
            &path,
            &sensed,
            &LocalPlannerConfig::default(),
            &VehicleConfig::default(),
        ) {
            LocalDecision::Command(cmd) => assert_eq!(cmd.v, 0.0),
            LocalDecision::Replan => panic!("an expected hit should not replan"),
        }
    }

    #[test]
    fn stale_hits_still_gate_speed_after_the_robot_advances() {
        // The hit was sensed a frame ago from a pose 0.75 m back; the
        // robot has since closed to 0.25 m. Clearance must come from the
        // current pose, not the stored measurement geometry.
        let grid = PlanningGrid::open(20, 20, 0.1);
        let path = straight_path(&grid);
        let sensed = SensedObstacles {
            points: vec![SensedPoint {
                point: Vec2::new(1.0, 1.05),
                distance: 1.0,
                bearing_body: 0.0,
                expected: true,
            }],
        };
        let pose = Pose2::new(0.75, 1.05, 0.0);
        match plan_local(
            pose,
            &path,
            &sensed,
            &LocalPlannerConfig::default(),
            &VehicleConfig::default(),
        ) {
            LocalDecision::Command(cmd) => assert_eq!(cmd.v, 0.0),
            LocalDecision::Replan => panic!("an expected hit should not replan"),
        }
        // Once the robot passes the hit it drops out of the front sector.
        let past = Pose2::new(1.3, 1.05, 0.0);
        assert_eq!(
            sensed.front_clearance(past, 45.0),
            None,
            "a passed hit must not gate forward speed"
        );
    }

    #[test]
    fn pursuit_saturates_turn_rate_for_side_waypoints() {
        let grid = PlanningGrid::open(20, 20, 0.1);
        let path = straight_path(&grid);
        // Facing north while the path runs east: ~90 degrees of error.
        let pose = Pose2::new(0.25, 1.05, std::f64::consts::FRAC_PI_2);
        match plan_local(
            pose,
            &path,
            &SensedObstacles::none(),
            &LocalPlannerConfig::default(),
            &VehicleConfig::default(),
        ) {
            LocalDecision::Command(cmd) => {
                assert_relative_eq!(cmd.omega, -1.0);
                assert!(cmd.v < 0.05, "mostly rotating in place, v = {}", cmd.v);
            }
            LocalDecision::Replan => panic!("unexpected replan"),
        }
    }

    #[test]
    fn hit_on_remaining_path_requests_replan() {
        let grid = PlanningGrid::open(20, 20, 0.1);
        let path = straight_path(&grid);
        let pose = Pose2::new(0.25, 1.05, 0.0);
        // Obstacle point right on a waypoint ahead.
        let mut sensed = SensedObstacles {
            points: vec![SensedPoint {
                point: Vec2::new(1.15, 1.05),
                distance: 0.9,
                bearing_body: 0.0,
                expected: false,
            }],
        };
        assert_eq!(
            plan_local(
                pose,
                &path,
                &sensed,
                &LocalPlannerConfig::default(),
                &VehicleConfig::default(),
            ),
            LocalDecision::Replan
        );
        // A hit the map already explains gates speed but never replans.
        sensed.points[0].expected = true;
        assert!(matches!(
            plan_local(
                pose,
                &path,
                &sensed,
                &LocalPlannerConfig::default(),
                &VehicleConfig::default(),
            ),
            LocalDecision::Command(_)
        ));
        sensed.points[0].expected = false;
        // The same point is ignored once the robot has passed it.
        let later = Pose2::new(1.45, 1.05, 0.0);
        assert!(matches!(
            plan_local(
                later,
                &path,
                &sensed,
                &LocalPlannerConfig::default(),
                &VehicleConfig::default(),
            ),
            LocalDecision::Command(_)
        ));
    }

    #[test]
    fn pursuit_parks_at_the_end_of_the_path() {
        let grid = PlanningGrid::open(20, 20, 0.1);
        let path = straight_path(&grid);
        let end = *path.world_waypoints.last().unwrap();
        let pose = Pose2::new(end.x - 0.05, end.y, 0.0);
        match plan_local(
            pose,
            &path,
            &SensedObstacles::none(),
            &LocalPlannerConfig::default(),
            &VehicleConfig::default(),
        ) {
            LocalDecision::Command(cmd) => {
                assert_eq!(cmd.v, 0.0);
                assert_eq!(cmd.omega, 0.0);
            }
            LocalDecision::Replan => panic!("unexpected replan"),
        }
    }

    #[test]
    fn mark_expected_flags_hits_on_occupied_cells() {
        let mut map = classified_all(CellState::Free, 20, 20);
        map.set(11, 10, CellState::Occupied);
        let mut sensed = SensedObstacles {
            points: vec![
                SensedPoint {
                    point: Vec2::new(1.15, 1.05),
                    distance: 0.9,
                    bearing_body: 0.0,
                    expected: false,
                },
                SensedPoint {
                    point: Vec2::new(0.55, 1.05),
                    distance: 0.3,
                    bearing_body: 0.0,
                    expected: true,
                },
                SensedPoint {
                    point: Vec2::new(-5.0, -5.0),
                    distance: 7.0,
                    bearing_body: 3.0,
                    expected: true,
                },
            ],
        };
        sensed.mark_expected(&map);
        assert!(sensed.points[0].expected, "hit on the occupied cell");
        assert!(!sensed.points[1].expected, "hit on a free cell");
        assert!(!sensed.points[2].expected, "hit outside the grid");
    }

    #[test]
    fn replan_recovers_from_inflated_start() {
        let mut map = classified_all(CellState::Free, 30, 30);
        map.set(10, 10, CellState::Occupied);
        let cfg = GlobalPlannerConfig::default();
        // Pose inside the inflation ring of the obstacle.
        let pose = Pose2::new(1.15, 1.05, 0.0);
        let path = replan(&map, pose, Vec2::new(2.55, 1.05), &cfg).unwrap();
        assert!(path.cost > 0);
        // Goal inside an obstacle is an error.
        let err = replan(&map, pose, Vec2::new(1.05, 1.05), &cfg).unwrap_err();
        assert!(matches!(err, PlanError::InvalidEndpoint { which: "goal", .. }));
    }

    #[test]
    fn frontiers_sit_between_free_and_unknown() {
        let mut map = classified_all(CellState::Unknown, 10, 10);
        for row in 0..10 {
            for col in 0..5 {
                map.set(col, row, CellState::Free);
            }
        }
        let frontiers = frontier_cells(&map);
        assert!(!frontiers.is_empty());
        for (col, row) in &frontiers {
            assert_eq!(*col, 4, "frontier column borders the unknown half");
            assert_eq!(map.get(*col, *row), CellState::Free);
        }
    }

    #[test]
    fn frontier_planning_targets_reachable_cells_and_finishes() {
        let mut map = classified_all(CellState::Unknown, 30, 30);
        // Known free room in the lower-left, unknown elsewhere.
        for row in 0..15 {
            for col in 0..30 {
                map.set(col, row, CellState::Free);
            }
        }
        let cfg = GlobalPlannerConfig {
            footprint_radius: 0.2,
            ..Default::default()
        };
        let pose = Pose2::new(1.05, 0.55, 0.0);
        let banned = BTreeSet::new();
        let path = plan_to_nearest_frontier(&map, pose, &cfg, &banned)
            .unwrap()
            .expect("a frontier is reachable");
        let end = *path.cells.last().unwrap();
        // Target sits near the frontier row (14 borders unknown row 15)
        // but outside the inflation band around it... the band blocks
        // nothing here because unknown cells block and the frontier itself
        // is free; the end cell must simply be traversable and near the
        // frontier.
        assert!(end.1 + 3 + 1 >= 14, "end {end:?} style near the frontier");
        // Fully explored map: no frontier remains.
        let full = classified_all(CellState::Free, 10, 10);
        assert!(plan_to_nearest_frontier(&full, pose, &cfg, &banned)
            .unwrap()
            .is_none());
    }

    #[test]
    fn banned_targets_are_skipped() {
        let mut map = classified_all(CellState::Unknown, 20, 20);
        for row in 0..10 {
            for col in 0..20 {
                map.set(col, row, CellState::Free);
            }
        }
        let cfg = GlobalPlannerConfig::default();
        let pose = Pose2::new(1.05, 0.55, 0.0);
        let banned = BTreeSet::new();
        let first = plan_to_nearest_frontier(&map, pose, &cfg, &banned)
            .unwrap()
            .expect("frontier reachable");
        let mut banned = BTreeSet::new();
        banned.insert(*first.cells.last().unwrap());
        let second = plan_to_nearest_frontier(&map, pose, &cfg, &banned)
            .unwrap()
            .expect("other targets remain");
        assert_ne!(first.cells.last(), second.cells.last());
    }
}
