//! Log-odds occupancy mapping. Sonar readings update a cone-shaped region
//! (free space up to the echo, an occupied band around it), lidar beams
//! update cells along a discretized ray. Cells clamp to a saturation range
//! and classify into occupied / free / unknown by fixed thresholds.

use crate::geom::{Rect, Vec2};
use crate::real::Real;
use crate::sensors::{Echo, LidarScan, RangeReading, SensorPose};
use crate::geom::Pose2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ternary occupancy decision for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellState {
    Occupied,
    Free,
    Unknown,
}

/// Log-odds update and classification parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct LogOddsConfig<T: Real> {
    /// Evidence added to cells in the occupied band of a reading.
    pub l_occ: T,
    /// Evidence added to cells observed as free (negative).
    pub l_free: T,
    /// Saturation clamp, lower bound.
    pub l_min: T,
    /// Saturation clamp, upper bound.
    pub l_max: T,
    /// Cells at or above this classify as occupied.
    pub occ_threshold: T,
    /// Cells at or below this classify as free.
    pub free_threshold: T,
}

impl<T: Real> Default for LogOddsConfig<T> {
    fn default() -> Self {
        Self {
            l_occ: T::real(0.85),
            l_free: T::real(-0.4),
            l_min: T::real(-4.0),
            l_max: T::real(4.0),
            occ_threshold: T::real(1.0),
            free_threshold: T::real(-1.0),
        }
    }
}

impl<T: Real> LogOddsConfig<T> {
    pub fn validate(&self) -> Result<(), MappingError> {
        let ok = self.l_min < T::zero()
            && self.l_max > T::zero()
            && self.l_occ > T::zero()
            && self.l_free < T::zero()
            && self.occ_threshold > T::zero()
            && self.occ_threshold <= self.l_max
            && self.free_threshold < T::zero()
            && self.free_threshold >= self.l_min;
        if ok {
            Ok(())
        } else {
            Err(MappingError::InvalidConfig)
        }
    }
}

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("log-odds configuration is inconsistent")]
    InvalidConfig,
    #[error("grid resolution must give at least 4 cells per side")]
    ResolutionTooCoarse,
    #[error("reading from tick {reading_tick} is stale at tick {current_tick}")]
    StaleReading { reading_tick: u64, current_tick: u64 },
}

/// Dense log-odds grid. Row 0 sits at the minimum-y edge of the mapped
/// area; cell `(col, row)` covers the square
/// `origin + [col, col+1) x [row, row+1)` scaled by the resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OccupancyGrid<T: Real> {
    resolution: T,
    origin: Vec2<T>,
    width: usize,
    height: usize,
    cells: Vec<T>,
    log_odds: LogOddsConfig<T>,
}

fn cells_for(extent: f64, resolution: f64) -> usize {
    let raw = extent / resolution;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 * raw.max(1.0) {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

impl<T: Real> OccupancyGrid<T> {
    /// Grid covering `[0, bounds.width] x [0, bounds.height]`, all cells
    /// unobserved. Fails if either side would be under 4 cells.
    pub fn for_bounds(
        bounds: Rect<T>,
        resolution: T,
        log_odds: LogOddsConfig<T>,
    ) -> Result<Self, MappingError> {
        log_odds.validate()?;
        if resolution <= T::zero() {
            return Err(MappingError::ResolutionTooCoarse);
        }
        let width = cells_for(bounds.width.as_f64(), resolution.as_f64());
        let height = cells_for(bounds.height.as_f64(), resolution.as_f64());
        if width < 4 || height < 4 {
            return Err(MappingError::ResolutionTooCoarse);
        }
        Ok(Self {
            resolution,
            origin: Vec2::zero(),
            width,
            height,
            cells: vec![T::zero(); width * height],
            log_odds,
        })
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

    pub fn origin(&self) -> Vec2<T> {
        self.origin
    }

    pub fn log_odds_config(&self) -> LogOddsConfig<T> {
        self.log_odds
    }

    pub fn in_bounds(&self, col: usize, row: usize) -> bool {
        col < self.width && row < self.height
    }

    fn index(&self, col: usize, row: usize) -> usize {
        debug_assert!(self.in_bounds(col, row));
        row * self.width + col
    }

    /// Raw log-odds value of a cell; never-observed cells are exactly zero.
    pub fn log_odds_at(&self, col: usize, row: usize) -> T {
        self.cells[self.index(col, row)]
    }

    /// Overwrites a cell (clamped). Used when painting ground truth.
    pub fn set_log_odds(&mut self, col: usize, row: usize, value: T) {
        let v = value.max(self.log_odds.l_min).min(self.log_odds.l_max);
        let i = self.index(col, row);
        self.cells[i] = v;
    }

    /// Accumulates evidence into a cell, clamping to the saturation range.
    pub fn add_evidence(&mut self, col: usize, row: usize, delta: T) {
        let i = self.index(col, row);
        let v = self.cells[i] + delta;
        self.cells[i] = v.max(self.log_odds.l_min).min(self.log_odds.l_max);
    }

    /// Cell containing a world point, if inside the grid.
    pub fn world_to_cell(&self, p: Vec2<T>) -> Option<(usize, usize)> {
        let rel = (p - self.origin) / self.resolution;
        if rel.x < T::zero() || rel.y < T::zero() {
            return None;
        }
        let col = rel.x.floor().to_usize()?;
        let row = rel.y.floor().to_usize()?;
        if self.in_bounds(col, row) {
            Some((col, row))
        } else {
            None
        }
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2<T> {
        let half = T::real(0.5);
        self.origin
            + Vec2::new(
                (T::from_usize(col).unwrap() + half) * self.resolution,
                (T::from_usize(row).unwrap() + half) * self.resolution,
            )
    }

    /// World-space square covered by a cell.
    pub fn cell_box(&self, col: usize, row: usize) -> (Vec2<T>, Vec2<T>) {
        let min = self.origin
            + Vec2::new(
                T::from_usize(col).unwrap() * self.resolution,
                T::from_usize(row).unwrap() * self.resolution,
            );
        (min, min + Vec2::new(self.resolution, self.resolution))
    }

    pub fn classify_value(&self, value: T) -> CellState {
        if value >= self.log_odds.occ_threshold {
            CellState::Occupied
        } else if value <= self.log_odds.free_threshold {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }

    pub fn classify_cell(&self, col: usize, row: usize) -> CellState {
        self.classify_value(self.log_odds_at(col, row))
    }

    /// Thresholds every cell into a ternary grid.
    pub fn classify(&self) -> ClassifiedGrid<T> {
        ClassifiedGrid {
            resolution: self.resolution,
            origin: self.origin,
            width: self.width,
            height: self.height,
            cells: self.cells.iter().map(|v| self.classify_value(*v)).collect(),
        }
    }

    /// Binary PGM (P5) image of the classified grid: occupied 0,
    /// unknown 128, free 255. Row 0 of the image is the maximum-y row,
    /// so the picture matches the world seen from above.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.width * self.height);
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                out.push(match self.classify_cell(col, row) {
                    CellState::Occupied => 0u8,
                    CellState::Unknown => 128u8,
                    CellState::Free => 255u8,
                });
            }
        }
        out
    }
}

/// Thresholded view of an occupancy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClassifiedGrid<T: Real> {
    resolution: T,
    origin: Vec2<T>,
    width: usize,
    height: usize,
    cells: Vec<CellState>,
}

impl<T: Real> ClassifiedGrid<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn origin(&self) -> Vec2<T> {
        self.origin
    }

    pub fn in_bounds(&self, col: usize, row: usize) -> bool {
        col < self.width && row < self.height
    }

    pub fn get(&self, col: usize, row: usize) -> CellState {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, state: CellState) {
        self.cells[row * self.width + col] = state;
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn world_to_cell(&self, p: Vec2<T>) -> Option<(usize, usize)> {
        let rel = (p - self.origin) / self.resolution;
        if rel.x < T::zero() || rel.y < T::zero() {
            return None;
        }
        let col = rel.x.floor().to_usize()?;
        let row = rel.y.floor().to_usize()?;
        if self.in_bounds(col, row) {
            Some((col, row))
        } else {
            None
        }
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2<T> {
        let half = T::real(0.5);
        self.origin
            + Vec2::new(
                (T::from_usize(col).unwrap() + half) * self.resolution,
                (T::from_usize(row).unwrap() + half) * self.resolution,
            )
    }

    /// Count of cells in each state, `(occupied, free, unknown)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut occ = 0;
        let mut free = 0;
        let mut unk = 0;
        for c in &self.cells {
            match c {
                CellState::Occupied => occ += 1,
                CellState::Free => free += 1,
                CellState::Unknown => unk += 1,
            }
        }
        (occ, free, unk)
    }

    /// Text rendering, one row per line, top row first:
    /// `#` occupied, `.` free, space unknown.
    pub fn ascii_render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                out.push(match self.get(col, row) {
                    CellState::Occupied => '#',
                    CellState::Free => '.',
                    CellState::Unknown => ' ',
                });
            }
            out.push('\n');
        }
        out
    }

    /// First occupied cell along a ray; see [`grid_raycast`].
    pub fn raycast(&self, origin: Vec2<T>, direction: Vec2<T>, max_range: T) -> Option<T> {
        let mut hit = None;
        grid_ray_cells(
            self.origin,
            self.resolution,
            self.width,
            self.height,
            origin,
            direction,
            max_range,
            |col, row, t_enter| {
                if self.get(col, row) == CellState::Occupied {
                    hit = Some(t_enter);
                    false
                } else {
                    true
                }
            },
        );
        hit
    }
}

/// Walks the cells a ray passes through (Amanatides-Woo), calling
/// `visit(col, row, distance_at_entry)` for each, in order, starting with
/// the cell containing `start` at distance 0. Stops when `visit` returns
/// false, the ray leaves the grid, or the next cell starts beyond `length`.
#[allow(clippy::too_many_arguments)]
pub fn grid_ray_cells<T: Real>(
    grid_origin: Vec2<T>,
    resolution: T,
    width: usize,
    height: usize,
    start: Vec2<T>,
    direction: Vec2<T>,
    length: T,
    mut visit: impl FnMut(usize, usize, T) -> bool,
) {
    let rel = (start - grid_origin) / resolution;
    let mut col = rel.x.floor().to_isize().unwrap_or(-1);
    let mut row = rel.y.floor().to_isize().unwrap_or(-1);

    let cell_edge = |i: isize| T::from_isize(i).unwrap() * resolution + grid_origin.x;
    let cell_edge_y = |i: isize| T::from_isize(i).unwrap() * resolution + grid_origin.y;

    let (step_x, mut t_max_x, t_delta_x) = if direction.x > T::zero() {
        (
            1isize,
            (cell_edge(col + 1) - start.x) / direction.x,
            resolution / direction.x,
        )
    } else if direction.x < T::zero() {
        (
            -1isize,
            (cell_edge(col) - start.x) / direction.x,
            -resolution / direction.x,
        )
    } else {
        (0isize, T::infinity(), T::infinity())
    };
    let (step_y, mut t_max_y, t_delta_y) = if direction.y > T::zero() {
        (
            1isize,
            (cell_edge_y(row + 1) - start.y) / direction.y,
            resolution / direction.y,
        )
    } else if direction.y < T::zero() {
        (
            -1isize,
            (cell_edge_y(row) - start.y) / direction.y,
            -resolution / direction.y,
        )
    } else {
        (0isize, T::infinity(), T::infinity())
    };

    let mut t_enter = T::zero();
    loop {
        if col < 0 || row < 0 || col >= width as isize || row >= height as isize {
            return;
        }
        if !visit(col as usize, row as usize, t_enter) {
            return;
        }
        if t_max_x < t_max_y {
            t_enter = t_max_x;
            if t_enter > length {
                return;
            }
            col += step_x;
            t_max_x += t_delta_x;
        } else {
            t_enter = t_max_y;
            if t_enter > length {
                return;
            }
            row += step_y;
            t_max_y += t_delta_y;
        }
    }
}

/// Sonar-specific mapping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct SonarMapConfig<T: Real> {
    /// Half-width of the occupied band around an echo distance, meters.
    pub cell_band: T,
    /// Evidence scale applied to crosstalk-flagged readings.
    pub crosstalk_weight: T,
    /// Free-space update length for max-range readings, meters.
    pub free_range: T,
    /// Maximum accepted reading age in ticks (0 = same tick only).
    pub stale_window_ticks: u64,
}

impl<T: Real> Default for SonarMapConfig<T> {
    fn default() -> Self {
        Self {
            cell_band: T::real(0.15),
            crosstalk_weight: T::real(0.5),
            free_range: T::real(2.0),
            stale_window_ticks: 0,
        }
    }
}

fn check_staleness(
    reading_tick: u64,
    current_tick: u64,
    window: u64,
) -> Result<(), MappingError> {
    if reading_tick > current_tick || current_tick - reading_tick > window {
        Err(MappingError::StaleReading {
            reading_tick,
            current_tick,
        })
    } else {
        Ok(())
    }
}

/// Integrates one sonar reading taken from `sensor` into the grid.
///
/// Every cell whose center lies inside the beam cone gets exactly one
/// update: free evidence up to the echo band, occupied evidence inside the
/// band (`echo +- cell_band`), nothing beyond it. Max-range readings add
/// free evidence through the whole cone out to `free_range`. Crosstalk
/// suspects contribute scaled-down evidence.
pub fn integrate_sonar_reading<T: Real>(
    grid: &mut OccupancyGrid<T>,
    sensor: SensorPose<T>,
    reading: &RangeReading<T>,
    cfg: &SonarMapConfig<T>,
    current_tick: u64,
) -> Result<(), MappingError> {
    check_staleness(reading.tick, current_tick, cfg.stale_window_ticks)?;

    let scale = if reading.crosstalk_suspect {
        cfg.crosstalk_weight
    } else {
        T::one()
    };
    let lo = grid.log_odds_config();
    let (limit, band_lo, band_hi) = match reading.echo {
        Echo::Range(d) => (d + cfg.cell_band, d - cfg.cell_band, d + cfg.cell_band),
        Echo::OutOfRange => (cfg.free_range, T::infinity(), T::infinity()),
    };
    if limit <= T::zero() {
        return Ok(());
    }

    let axis = Vec2::from_angle(sensor.heading);
    let cos_half = (reading.beam_width_deg.to_radians() / T::real(2.0)).cos();
    let res = grid.resolution();
    let rel = (sensor.position - grid.origin()) / res;
    let span = limit / res;
    let col_lo = (rel.x - span).floor().to_isize().unwrap_or(0).max(0) as usize;
    let row_lo = (rel.y - span).floor().to_isize().unwrap_or(0).max(0) as usize;
    let col_hi = ((rel.x + span).ceil().to_isize().unwrap_or(0).max(0) as usize)
        .min(grid.width().saturating_sub(1));
    let row_hi = ((rel.y + span).ceil().to_isize().unwrap_or(0).max(0) as usize)
        .min(grid.height().saturating_sub(1));

    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            let v = grid.cell_center(col, row) - sensor.position;
            let r = v.norm();
            if r > limit {
                continue;
            }
            if r > T::zero() && v.dot(axis) < cos_half * r {
                continue;
            }
            let delta = if r < band_lo {
                lo.l_free
            } else if r <= band_hi {
                lo.l_occ
            } else {
                lo.l_free
            };
            grid.add_evidence(col, row, delta * scale);
        }
    }
    Ok(())
}

/// Lidar-specific mapping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(default)]
pub struct LidarMapConfig<T: Real> {
    /// Free-space update length for max-range beams, meters.
    pub free_range: T,
    /// Maximum accepted scan age in ticks (0 = same tick only).
    pub stale_window_ticks: u64,
}

impl<T: Real> Default for LidarMapConfig<T> {
    fn default() -> Self {
        Self {
            free_range: T::real(10.0),
            stale_window_ticks: 0,
        }
    }
}

/// Integrates a full lidar scan taken at `pose` into the grid.
///
/// Each beam is traced through the grid: cells strictly before the hit get
/// free evidence, the hit cell gets occupied evidence, and max-range beams
/// add free evidence along their whole length out to `free_range`.
pub fn integrate_lidar_scan<T: Real>(
    grid: &mut OccupancyGrid<T>,
    pose: Pose2<T>,
    scan: &LidarScan<T>,
    cfg: &LidarMapConfig<T>,
    current_tick: u64,
) -> Result<(), MappingError> {
    check_staleness(scan.tick, current_tick, cfg.stale_window_ticks)?;

    let lo = grid.log_odds_config();
    let mut visited: Vec<(usize, usize)> = Vec::with_capacity(256);
    for (i, echo) in scan.ranges.iter().enumerate() {
        let angle = pose.yaw + scan.start_angle + scan.angle_increment * T::from_usize(i).unwrap();
        let dir = Vec2::from_angle(angle);
        visited.clear();
        let (length, terminal_occupied) = match echo {
            Echo::Range(d) => (*d, true),
            Echo::OutOfRange => (cfg.free_range, false),
        };
        grid_ray_cells(
            grid.origin(),
            grid.resolution(),
            grid.width(),
            grid.height(),
            pose.position(),
            dir,
            length,
            |col, row, _| {
                visited.push((col, row));
                true
            },
        );
        if visited.is_empty() {
            continue;
        }
        let last = visited.len() - 1;
        for (k, (col, row)) in visited.iter().enumerate() {
            let delta = if terminal_occupied && k == last {
                lo.l_occ
            } else {
                lo.l_free
            };
            grid.add_evidence(*col, *row, delta);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::{distance_to_echo_time, Echo};
    use approx::assert_relative_eq;

    fn test_grid(w: f64, h: f64, res: f64) -> OccupancyGrid<f64> {
        OccupancyGrid::for_bounds(Rect::new(w, h), res, LogOddsConfig::default()).unwrap()
    }

    fn reading(echo: Echo<f64>, heading: f64, tick: u64) -> RangeReading<f64> {
        RangeReading {
            sensor_index: 0,
            echo,
            echo_time: match echo {
                Echo::Range(d) => distance_to_echo_time(d, 1500.0),
                Echo::OutOfRange => distance_to_echo_time(2.0, 1500.0),
            },
            beam_axis_world: Vec2::from_angle(heading),
            beam_width_deg: 30.0,
            tick,
            crosstalk_suspect: false,
        }
    }

    #[test]
    fn unobserved_cells_are_exactly_zero_and_unknown() {
        let grid = test_grid(2.0, 2.0, 0.1);
        for row in 0..grid.height() {
            for col in 0..grid.width() {
                assert_eq!(grid.log_odds_at(col, row), 0.0);
                assert_eq!(grid.classify_cell(col, row), CellState::Unknown);
            }
        }
    }

    #[test]
    fn classification_thresholds_are_inclusive() {
        let grid = test_grid(2.0, 2.0, 0.1);
        assert_eq!(grid.classify_value(1.0), CellState::Occupied);
        assert_eq!(grid.classify_value(0.999), CellState::Unknown);
        assert_eq!(grid.classify_value(-1.0), CellState::Free);
        assert_eq!(grid.classify_value(-0.999), CellState::Unknown);
        assert_eq!(grid.classify_value(4.0), CellState::Occupied);
        assert_eq!(grid.classify_value(-4.0), CellState::Free);
    }

    #[test]
    fn evidence_clamps_at_saturation() {
        let mut grid = test_grid(2.0, 2.0, 0.1);
        for _ in 0..100 {
            grid.add_evidence(5, 5, 0.85);
        }
        assert_eq!(grid.log_odds_at(5, 5), 4.0);
        for _ in 0..100 {
            grid.add_evidence(5, 5, -0.4);
        }
        assert_eq!(grid.log_odds_at(5, 5), -4.0);
    }

    #[test]
    fn sonar_reading_builds_free_band_occupied_band_untouched_beyond() {
        let mut grid = test_grid(4.0, 4.0, 0.1);
        let sensor = SensorPose {
            position: Vec2::new(0.55, 2.05),
            heading: 0.0,
        };
        let r = reading(Echo::Range(1.0), 0.0, 0);
        let cfg = SonarMapConfig::default();
        for tick in 0..5 {
            let mut rr = r.clone();
            rr.tick = tick;
            integrate_sonar_reading(&mut grid, sensor, &rr, &cfg, tick).unwrap();
        }
        let classified = grid.classify();
        // On-axis cell just in front of the sensor: free.
        let (c, w) = classified.world_to_cell(Vec2::new(1.05, 2.05)).unwrap();
        assert_eq!(classified.get(c, w), CellState::Free);
        // On-axis cell at the echo distance: occupied.
        let (c, w) = classified.world_to_cell(Vec2::new(1.55, 2.05)).unwrap();
        assert_eq!(classified.get(c, w), CellState::Occupied);
        // Cell beyond the band: untouched.
        let (c, w) = classified.world_to_cell(Vec2::new(1.85, 2.05)).unwrap();
        assert_eq!(grid.log_odds_at(c, w), 0.0);
        // Cell outside the cone: untouched.
        let (c, w) = classified.world_to_cell(Vec2::new(1.05, 2.85)).unwrap();
        assert_eq!(grid.log_odds_at(c, w), 0.0);
    }

    #[test]
    fn max_range_reading_frees_cone_to_free_range() {
        let mut grid = test_grid(4.0, 4.0, 0.1);
        let sensor = SensorPose {
            position: Vec2::new(0.55, 2.05),
            heading: 0.0,
        };
        let r = reading(Echo::OutOfRange, 0.0, 0);
        let cfg = SonarMapConfig {
            free_range: 2.0,
            ..Default::default()
        };
        for tick in 0..5 {
            let mut rr = r.clone();
            rr.tick = tick;
            integrate_sonar_reading(&mut grid, sensor, &rr, &cfg, tick).unwrap();
        }
        let classified = grid.classify();
        let (c, w) = classified.world_to_cell(Vec2::new(2.05, 2.05)).unwrap();
        assert_eq!(classified.get(c, w), CellState::Free);
        // Beyond free_range: untouched.
        let (c, w) = classified.world_to_cell(Vec2::new(2.95, 2.05)).unwrap();
        assert_eq!(grid.log_odds_at(c, w), 0.0);
    }

    /// Independent cone-membership oracle: absolute angular difference via
    /// atan2 instead of the dot-product comparison used by the integrator.
    #[test]
    fn sonar_update_touches_exactly_the_cone_cells() {
        let mut grid = test_grid(4.0, 4.0, 0.1);
        let sensor = SensorPose {
            position: Vec2::new(1.32, 1.77),
            heading: 0.7,
        };
        let echo = 0.9;
        let r = reading(Echo::Range(echo), 0.7, 0);
        let cfg = SonarMapConfig::default();
        integrate_sonar_reading(&mut grid, sensor, &r, &cfg, 0).unwrap();

        let half_rad = (r.beam_width_deg / 2.0).to_radians();
        let limit = echo + cfg.cell_band;
        for row in 0..grid.height() {
            for col in 0..grid.width() {
                let v = grid.cell_center(col, row) - sensor.position;
                let dist = v.norm();
                let ang = crate::geom::wrap_angle(v.y.atan2(v.x) - sensor.heading).abs();
                let in_cone = dist <= limit && (dist == 0.0 || ang <= half_rad);
                let touched = grid.log_odds_at(col, row) != 0.0;
                assert_eq!(
                    touched, in_cone,
                    "cell ({col},{row}) dist {dist:.3} ang {ang:.3}"
                );
            }
        }
    }

    #[test]
    fn crosstalk_scales_evidence() {
        let mut grid_a = test_grid(4.0, 4.0, 0.1);
        let mut grid_b = test_grid(4.0, 4.0, 0.1);
        let sensor = SensorPose {
            position: Vec2::new(0.55, 2.05),
            heading: 0.0,
        };
        let clean = reading(Echo::Range(1.0), 0.0, 0);
        let mut tainted = clean.clone();
        tainted.crosstalk_suspect = true;
        let cfg = SonarMapConfig::default();
        integrate_sonar_reading(&mut grid_a, sensor, &clean, &cfg, 0).unwrap();
        integrate_sonar_reading(&mut grid_b, sensor, &tainted, &cfg, 0).unwrap();
        for row in 0..grid_a.height() {
            for col in 0..grid_a.width() {
                assert_relative_eq!(
                    grid_b.log_odds_at(col, row),
                    grid_a.log_odds_at(col, row) * 0.5,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn stale_readings_are_rejected() {
        let mut grid = test_grid(2.0, 2.0, 0.1);
        let sensor = SensorPose {
            position: Vec2::new(1.0, 1.0),
            heading: 0.0,
        };
        let r = reading(Echo::Range(0.5), 0.0, 3);
        let cfg = SonarMapConfig::default();
        let err = integrate_sonar_reading(&mut grid, sensor, &r, &cfg, 5).unwrap_err();
        assert!(matches!(err, MappingError::StaleReading { .. }));
        // Within the window it is accepted.
        let lenient = SonarMapConfig {
            stale_window_ticks: 2,
            ..Default::default()
        };
        integrate_sonar_reading(&mut grid, sensor, &r, &lenient, 5).unwrap();
    }

    #[test]
    fn ray_traversal_visits_adjacent_cells_in_order() {
        use rand::{Rng, SeedableRng};
        let grid = test_grid(4.0, 4.0, 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let start = Vec2::new(rng.random_range(0.05..3.95), rng.random_range(0.05..3.95));
            let dir = Vec2::from_angle(rng.random_range(-3.14..3.14));
            let length = rng.random_range(0.0..3.0);
            let mut cells: Vec<(usize, usize, f64)> = vec![];
            grid_ray_cells(
                grid.origin(),
                grid.resolution(),
                grid.width(),
                grid.height(),
                start,
                dir,
                length,
                |c, r, t| {
                    cells.push((c, r, t));
                    true
                },
            );
            assert!(!cells.is_empty());
            assert_eq!(
                (cells[0].0, cells[0].1),
                grid.world_to_cell(start).unwrap(),
                "traversal starts at the start cell"
            );
            assert_eq!(cells[0].2, 0.0);
            for w in cells.windows(2) {
                let (c0, r0, t0) = w[0];
                let (c1, r1, t1) = w[1];
                let manhattan =
                    (c0 as isize - c1 as isize).abs() + (r0 as isize - r1 as isize).abs();
                assert_eq!(manhattan, 1, "consecutive cells are 4-adjacent");
                assert!(t1 >= t0, "entry distances increase");
                assert!(t1 <= length + 1e-12);
            }
            // Sampling oracle: every densely sampled point's cell appears in
            // the visited list.
            let visited: std::collections::HashSet<(usize, usize)> =
                cells.iter().map(|&(c, r, _)| (c, r)).collect();
            let steps = 400;
            for k in 0..=steps {
                let t = length * k as f64 / steps as f64;
                let p = start + dir * t;
                if let Some(cell) = grid.world_to_cell(p) {
                    // Skip points within float jitter of a cell edge; the
                    // traversal assigns those to one side deterministically.
                    let fx = (p.x / 0.1).fract().min(1.0 - (p.x / 0.1).fract());
                    let fy = (p.y / 0.1).fract().min(1.0 - (p.y / 0.1).fract());
                    if fx < 1e-9 || fy < 1e-9 {
                        continue;
                    }
                    assert!(visited.contains(&cell), "missing cell {cell:?} at t={t}");
                }
            }
        }
    }

    #[test]
    fn lidar_beam_frees_path_and_occupies_hit_cell() {
        let mut grid = test_grid(4.0, 4.0, 0.1);
        let scan = LidarScan {
            ranges: vec![Echo::Range(1.0)],
            start_angle: 0.0,
            angle_increment: 0.0,
            tick: 0,
        };
        let pose = Pose2::new(0.55, 2.05, 0.0);
        integrate_lidar_scan(&mut grid, pose, &scan, &LidarMapConfig::default(), 0).unwrap();
        // Hit point at x = 1.55 -> cell column 15.
        let (c, r) = grid.world_to_cell(Vec2::new(1.55, 2.05)).unwrap();
        assert_eq!(grid.log_odds_at(c, r), 0.85);
        // Every cell strictly before it on the row: freed.
        for col in 5..15 {
            assert_eq!(grid.log_odds_at(col, 20), -0.4, "col {col}");
        }
        // Beyond: untouched.
        assert_eq!(grid.log_odds_at(16, 20), 0.0);
    }

    #[test]
    fn max_range_lidar_beam_frees_whole_ray() {
        let mut grid = test_grid(4.0, 4.0, 0.1);
        let scan = LidarScan {
            ranges: vec![Echo::OutOfRange],
            start_angle: 0.0,
            angle_increment: 0.0,
            tick: 0,
        };
        let pose = Pose2::new(0.55, 2.05, 0.0);
        let cfg = LidarMapConfig {
            free_range: 2.0,
            ..Default::default()
        };
        integrate_lidar_scan(&mut grid, pose, &scan, &cfg, 0).unwrap();
        let (c, r) = grid.world_to_cell(Vec2::new(2.45, 2.05)).unwrap();
        assert_eq!(grid.log_odds_at(c, r), -0.4);
        let (c, r) = grid.world_to_cell(Vec2::new(2.75, 2.05)).unwrap();
        assert_eq!(grid.log_odds_at(c, r), 0.0);
    }

    #[test]
    fn pgm_export_has_header_and_top_row_first() {
        let mut grid = test_grid(2.0, 1.0, 0.1);
        // Occupy the top-left cell (row with max y), free the bottom-right.
        grid.set_log_odds(0, 9, 4.0);
        grid.set_log_odds(19, 0, -4.0);
        let pgm = grid.to_pgm();
        let header = b"P5\n20 10\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        let pixels = &pgm[header.len()..];
        assert_eq!(pixels.len(), 200);
        assert_eq!(pixels[0], 0, "top-left pixel is the max-y row");
        assert_eq!(pixels[199], 255, "bottom-right pixel is the min-y row");
        assert_eq!(pixels[1], 128, "unobserved stays mid-gray");
    }

    #[test]
    fn classified_raycast_reports_entry_distance() {
        let mut grid = test_grid(4.0, 4.0, 0.1);
        grid.set_log_odds(20, 20, 4.0);
        let classified = grid.classify();
        let d = classified
            .raycast(Vec2::new(0.55, 2.05), Vec2::new(1.0, 0.0), 4.0)
            .expect("beam hits the occupied cell");
        // Cell 20 spans [2.0, 2.1]; entry from the left at x = 2.0.
        assert_relative_eq!(d, 2.0 - 0.55, epsilon = 1e-12);
        assert!(classified
            .raycast(Vec2::new(0.55, 2.05), Vec2::new(-1.0, 0.0), 4.0)
            .is_none());
    }

    #[test]
    fn grid_works_with_f32() {
        let mut grid: OccupancyGrid<f32> =
            OccupancyGrid::for_bounds(Rect::new(2.0f32, 2.0), 0.1, LogOddsConfig::default())
                .unwrap();
        grid.add_evidence(3, 3, 0.85);
        assert_eq!(grid.classify_cell(3, 3), CellState::Unknown);
        grid.add_evidence(3, 3, 0.85);
        assert_eq!(grid.classify_cell(3, 3), CellState::Occupied);
    }
}
