//! Map quality metrics against the ground-truth rasterization. Coverage
//! and accuracy restrict themselves to cells the robot could actually
//! learn about: free space reachable from the start plus the occupied
//! cells bordering it. Unreachable rooms and wall interiors never count
//! for or against a sensor.

use crawler_core::{CellState, ClassifiedGrid, OccupancyGrid, Vec2, WorldModel};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    World(#[from] crawler_core::world::WorldError),
    #[error("start position {0:?} does not fall on a free ground-truth cell")]
    StartBlocked([f64; 2]),
    #[error("grid shapes differ: estimate {est:?}, truth {truth:?}")]
    ShapeMismatch {
        est: (usize, usize),
        truth: (usize, usize),
    },
}

/// Threshold used for `time_to_coverage`.
pub const COVERAGE_TARGET: f64 = 0.95;

/// Near/far recall split boundary, meters from the trajectory.
const RANGE_BUCKET_SPLIT_M: f64 = 2.0;

/// Map quality of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetrics {
    /// Of the cells the estimate marks occupied (within the relevant
    /// region), the fraction that truly are.
    pub occupied_precision: f64,
    /// Of the learnable occupied cells, the fraction the estimate found.
    pub occupied_recall: f64,
    /// Number of estimated-occupied cells behind the precision figure;
    /// zero support reports precision 1 with the flag set.
    pub occupied_support: u64,
    pub zero_support: bool,
    /// Occupied recall restricted to cells within 2 m of the driven
    /// trajectory; absent without a trajectory.
    pub recall_within_2m: Option<f64>,
    /// Occupied recall for cells 2 m or farther from the trajectory.
    pub recall_beyond_2m: Option<f64>,
    /// Of the truly-free reachable cells the estimate classified, the
    /// fraction it classified free.
    pub free_accuracy: f64,
    /// Fraction of the relevant region classified (not unknown).
    pub coverage: f64,
    /// Root-mean-square position error of the pose estimate, meters.
    pub localization_rmse: f64,
    /// First tick at which coverage reached [`COVERAGE_TARGET`].
    pub time_to_coverage_ticks: Option<u64>,
}

/// Ground-truth rasterization plus the reachability masks metrics are
/// measured over.
#[derive(Debug, Clone)]
pub struct TruthContext {
    truth: ClassifiedGrid,
    reachable_free: Vec<bool>,
    observable_occ: Vec<bool>,
    relevant: usize,
}

impl TruthContext {
    /// Rasterizes a world at the mapping resolution.
    pub fn from_world(
        world: &WorldModel,
        resolution: f64,
        start: Vec2,
    ) -> Result<Self, MetricsError> {
        let grid = world.rasterize_ground_truth(resolution)?;
        Self::from_grid(&grid, start)
    }

    /// Uses an already-built grid as ground truth (hand-made fixtures).
    pub fn from_grid(truth: &OccupancyGrid, start: Vec2) -> Result<Self, MetricsError> {
        Self::build(truth.classify(), start)
    }

    fn build(truth: ClassifiedGrid, start: Vec2) -> Result<Self, MetricsError> {
        let (w, h) = (truth.width(), truth.height());
        let start_cell = truth
            .world_to_cell(start)
            .filter(|&(c, r)| truth.get(c, r) == CellState::Free)
            .ok_or(MetricsError::StartBlocked([start.x, start.y]))?;

        // Flood fill the free space reachable from the start (4-connected).
        let mut reachable_free = vec![false; w * h];
        let mut queue = VecDeque::new();
        reachable_free[start_cell.1 * w + start_cell.0] = true;
        queue.push_back(start_cell);
        while let Some((c, r)) = queue.pop_front() {
            for (dc, dr) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let (nc, nr) = (c as isize + dc, r as isize + dr);
                if nc < 0 || nr < 0 || nc as usize >= w || nr as usize >= h {
                    continue;
                }
                let (nc, nr) = (nc as usize, nr as usize);
                let idx = nr * w + nc;
                if !reachable_free[idx] && truth.get(nc, nr) == CellState::Free {
                    reachable_free[idx] = true;
                    queue.push_back((nc, nr));
                }
            }
        }

        // Occupied cells a sensor could ever see: those 8-adjacent to
        // reachable free space (obstacle surfaces, not interiors).
        let mut observable_occ = vec![false; w * h];
        let mut relevant = 0usize;
        for r in 0..h {
            for c in 0..w {
                let idx = r * w + c;
                if reachable_free[idx] {
                    relevant += 1;
                    continue;
                }
                if truth.get(c, r) != CellState::Occupied {
                    continue;
                }
                let exposed = (-1isize..=1).any(|dr| {
                    (-1isize..=1).any(|dc| {
                        if dc == 0 && dr == 0 {
                            return false;
                        }
                        let (nc, nr) = (c as isize + dc, r as isize + dr);
                        nc >= 0
                            && nr >= 0
                            && (nc as usize) < w
                            && (nr as usize) < h
                            && reachable_free[nr as usize * w + nc as usize]
                    })
                });
                if exposed {
                    observable_occ[idx] = true;
                    relevant += 1;
                }
            }
        }

        Ok(Self {
            truth,
            reachable_free,
            observable_occ,
            relevant,
        })
    }

    pub fn truth(&self) -> &ClassifiedGrid {
        &self.truth
    }

    /// Number of cells in the relevant region.
    pub fn relevant_cells(&self) -> usize {
        self.relevant
    }

    fn check_shape(&self, est: &ClassifiedGrid) -> Result<(), MetricsError> {
        if est.width() != self.truth.width() || est.height() != self.truth.height() {
            return Err(MetricsError::ShapeMismatch {
                est: (est.width(), est.height()),
                truth: (self.truth.width(), self.truth.height()),
            });
        }
        Ok(())
    }

    /// Fraction of relevant cells the estimate has classified.
    pub fn coverage(&self, est: &ClassifiedGrid) -> f64 {
        debug_assert!(self.check_shape(est).is_ok());
        if self.relevant == 0 {
            return 1.0;
        }
        let w = self.truth.width();
        let mut classified = 0usize;
        for r in 0..self.truth.height() {
            for c in 0..w {
                let idx = r * w + c;
                if (self.reachable_free[idx] || self.observable_occ[idx])
                    && est.get(c, r) != CellState::Unknown
                {
                    classified += 1;
                }
            }
        }
        classified as f64 / self.relevant as f64
    }

    /// Full metric set for a finished run. `truth_xy`/`est_xy` are the
    /// per-tick true and estimated positions (may be empty), and
    /// `coverage_trace` is per-tick coverage (may be empty).
    pub fn evaluate(
        &self,
        est: &ClassifiedGrid,
        truth_xy: &[Vec2],
        est_xy: &[Vec2],
        coverage_trace: &[f64],
    ) -> Result<MapMetrics, MetricsError> {
        self.check_shape(est)?;
        let w = self.truth.width();
        let h = self.truth.height();

        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut observable = 0u64;
        let mut found = 0u64;
        let mut near_total = 0u64;
        let mut near_found = 0u64;
        let mut far_total = 0u64;
        let mut far_found = 0u64;
        let mut free_classified = 0u64;
        let mut free_correct = 0u64;

        for r in 0..h {
            for c in 0..w {
                let idx = r * w + c;
                let est_state = est.get(c, r);
                if self.observable_occ[idx] {
                    observable += 1;
                    let hit = est_state == CellState::Occupied;
                    if hit {
                        found += 1;
                        tp += 1;
                    }
                    if !truth_xy.is_empty() {
                        let center = self.truth.cell_center(c, r);
                        let d = truth_xy
                            .iter()
                            .map(|p| p.distance(center))
                            .fold(f64::INFINITY, f64::min);
                        if d < RANGE_BUCKET_SPLIT_M {
                            near_total += 1;
                            near_found += u64::from(hit);
                        } else {
                            far_total += 1;
                            far_found += u64::from(hit);
                        }
                    }
                } else if self.reachable_free[idx] {
                    match est_state {
                        CellState::Occupied => fp += 1,
                        CellState::Free => {
                            free_classified += 1;
                            free_correct += 1;
                        }
                        CellState::Unknown => {}
                    }
                }
            }
        }
        // Truth-free cells wrongly marked occupied still count as
        // classified for free accuracy.
        free_classified += fp;

        let support = tp + fp;
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        let bucket = |num: u64, den: u64| {
            if den == 0 {
                None
            } else {
                Some(num as f64 / den as f64)
            }
        };

        let rmse = if truth_xy.is_empty() {
            0.0
        } else {
            let sum: f64 = truth_xy
                .iter()
                .zip(est_xy)
                .map(|(t, e)| t.distance(*e).powi(2))
                .sum();
            (sum / truth_xy.len() as f64).sqrt()
        };

        Ok(MapMetrics {
            occupied_precision: ratio(tp, support),
            occupied_recall: ratio(found, observable),
            occupied_support: support,
            zero_support: support == 0,
            recall_within_2m: bucket(near_found, near_total),
            recall_beyond_2m: bucket(far_found, far_total),
            free_accuracy: ratio(free_correct, free_classified),
            coverage: self.coverage(est),
            localization_rmse: rmse,
            time_to_coverage_ticks: coverage_trace
                .iter()
                .position(|c| *c >= COVERAGE_TARGET)
                .map(|i| i as u64),
        })
    }
}

/// Map-versus-map comparison without a trajectory: precision, recall,
/// free accuracy and coverage, measured from `start`'s reachable region.
pub fn map_accuracy(
    est: &OccupancyGrid,
    truth: &OccupancyGrid,
    start: Vec2,
) -> Result<MapMetrics, MetricsError> {
    let ctx = TruthContext::from_grid(truth, start)?;
    ctx.evaluate(&est.classify(), &[], &[], &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crawler_core::{LogOddsConfig, Rect};

    /// 5x5 open grid builder; callers then stamp occupied cells.
    fn blank_grid() -> OccupancyGrid {
        OccupancyGrid::for_bounds(Rect::new(0.5, 0.5), 0.1, LogOddsConfig::default()).unwrap()
    }

    fn fill(grid: &mut OccupancyGrid, occupied: &[(usize, usize)]) {
        let lo = grid.log_odds_config();
        for r in 0..grid.height() {
            for c in 0..grid.width() {
                grid.set_log_odds(c, r, lo.l_min);
            }
        }
        for &(c, r) in occupied {
            grid.set_log_odds(c, r, lo.l_max);
        }
    }

    #[test]
    fn identical_maps_score_perfectly() {
        let mut truth = blank_grid();
        fill(&mut truth, &[(2, 2), (3, 2)]);
        let est = truth.clone();
        let m = map_accuracy(&est, &truth, Vec2::new(0.05, 0.05)).unwrap();
        assert_eq!(m.occupied_precision, 1.0);
        assert_eq!(m.occupied_recall, 1.0);
        assert_eq!(m.free_accuracy, 1.0);
        assert_eq!(m.coverage, 1.0);
        assert!(!m.zero_support);
    }

    #[test]
    fn all_unknown_estimate_scores_zero_coverage_with_vacuous_precision() {
        let mut truth = blank_grid();
        fill(&mut truth, &[(2, 2)]);
        let est = blank_grid(); // never touched: all unknown
        let m = map_accuracy(&est, &truth, Vec2::new(0.05, 0.05)).unwrap();
        assert_eq!(m.coverage, 0.0);
        assert_eq!(m.occupied_precision, 1.0);
        assert!(m.zero_support);
        assert_eq!(m.occupied_recall, 0.0);
    }

    #[test]
    fn hand_counted_precision_and_recall() {
        // Truth: 4 occupied cells in a clump; estimate finds 3 of them
        // plus 1 false positive on free space.
        let mut truth = blank_grid();
        fill(&mut truth, &[(1, 1), (2, 1), (1, 2), (2, 2)]);
        let mut est = blank_grid();
        fill(&mut est, &[(1, 1), (2, 1), (1, 2), (4, 4)]);
        let m = map_accuracy(&est, &truth, Vec2::new(0.05, 0.45)).unwrap();
        assert_relative_eq!(m.occupied_precision, 0.75);
        assert_relative_eq!(m.occupied_recall, 0.75);
        assert_eq!(m.occupied_support, 4);
        // 25 cells, 4 occupied (all observable), 21 free and reachable.
        // The estimate classifies all 21, one wrongly.
        assert_relative_eq!(m.free_accuracy, 20.0 / 21.0);
        assert_relative_eq!(m.coverage, 1.0);
    }

    #[test]
    fn unreachable_space_is_excluded() {
        // Wall column splits the grid; the right side is unreachable from
        // a left-side start.
        let mut truth = blank_grid();
        fill(&mut truth, &[(2, 0), (2, 1), (2, 2), (2, 3), (2, 4)]);
        let ctx = TruthContext::from_grid(&truth, Vec2::new(0.05, 0.05)).unwrap();
        // Left free columns (2 x 5) + wall surface cells (5): the right
        // free columns are not relevant.
        assert_eq!(ctx.relevant_cells(), 15);

        // An estimate that only learned the left half still reaches full
        // coverage.
        let mut est = blank_grid();
        fill(&mut est, &[(2, 0), (2, 1), (2, 2), (2, 3), (2, 4)]);
        for r in 0..5 {
            for c in 3..5 {
                est.set_log_odds(c, r, 0.0); // reset to unknown
            }
        }
        let m = map_accuracy(&est, &truth, Vec2::new(0.05, 0.05)).unwrap();
        assert_relative_eq!(m.coverage, 1.0);
        assert_relative_eq!(m.occupied_recall, 1.0);
    }

    #[test]
    fn blocked_start_is_an_error() {
        let mut truth = blank_grid();
        fill(&mut truth, &[(0, 0)]);
        let err = TruthContext::from_grid(&truth, Vec2::new(0.05, 0.05)).unwrap_err();
        assert!(matches!(err, MetricsError::StartBlocked(_)));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut truth = blank_grid();
        fill(&mut truth, &[]);
        let est =
            OccupancyGrid::for_bounds(Rect::new(0.6, 0.5), 0.1, LogOddsConfig::default()).unwrap();
        let start = Vec2::new(0.05, 0.05);
        assert!(matches!(
            map_accuracy(&est, &truth, start).unwrap_err(),
            MetricsError::ShapeMismatch { .. }
        ));
    }

    #[test]
    fn range_buckets_split_on_trajectory_distance() {
        // 40-cell-wide strip: walls at both ends, trajectory pinned at the
        // left end. Left wall is near (< 2 m), right wall is far.
        let mut truth =
            OccupancyGrid::for_bounds(Rect::new(4.0, 0.4), 0.1, LogOddsConfig::default()).unwrap();
        let lo = truth.log_odds_config();
        for r in 0..truth.height() {
            for c in 0..truth.width() {
                truth.set_log_odds(c, r, lo.l_min);
            }
        }
        for r in 0..4 {
            truth.set_log_odds(0, r, lo.l_max);
            truth.set_log_odds(39, r, lo.l_max);
        }
        let ctx = TruthContext::from_grid(&truth, Vec2::new(0.55, 0.25)).unwrap();
        // Estimate finds only the near wall.
        let mut est = truth.clone();
        for r in 0..4 {
            est.set_log_odds(39, r, 0.0);
        }
        let trajectory = vec![Vec2::new(0.55, 0.25)];
        let m = ctx
            .evaluate(&est.classify(), &trajectory, &trajectory, &[])
            .unwrap();
        assert_eq!(m.recall_within_2m, Some(1.0));
        assert_eq!(m.recall_beyond_2m, Some(0.0));
        assert!(m.occupied_recall > 0.0 && m.occupied_recall < 1.0);
    }

    #[test]
    fn time_to_coverage_finds_first_crossing() {
        let truth = {
            let mut g = blank_grid();
            fill(&mut g, &[]);
            g
        };
        let ctx = TruthContext::from_grid(&truth, Vec2::new(0.25, 0.25)).unwrap();
        let est = truth.classify();
        let m = ctx
            .evaluate(&est, &[], &[], &[0.1, 0.5, 0.96, 0.99])
            .unwrap();
        assert_eq!(m.time_to_coverage_ticks, Some(2));
        let m2 = ctx.evaluate(&est, &[], &[], &[0.1, 0.2]).unwrap();
        assert_eq!(m2.time_to_coverage_ticks, None);
    }
}
