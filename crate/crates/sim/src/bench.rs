//! The sensor-suite benchmark: runs every (suite, scenario, seed)
//! combination, aggregates map metrics per suite, and emits a comparison
//! report that pairs the measured numbers with the static hardware
//! datasheet rows. Individual run failures become report rows, never
//! aborts, and the fold over results is deterministic regardless of how
//! many worker threads execute the runs.

use crate::engine::{run_scenario, RunStatus, SimResult};
use crate::metrics::MapMetrics;
use crate::scenario::{load_scenario, LoadedScenario, SimError, Suite};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("scenario {path}: {source}")]
    Scenario {
        path: String,
        #[source]
        source: SimError,
    },
    #[error("invalid bench set: {0}")]
    Config(String),
}

/// Unit prices for the cost rows, in rupees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub ultrasonic_unit: u64,
    pub lidar_unit: u64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            ultrasonic_unit: 100,
            lidar_unit: 100_000,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_suites() -> Vec<Suite> {
    vec![Suite::Ultrasonic, Suite::Lidar]
}

/// A benchmark definition: which scenarios to run, under which sensor
/// suites, with which seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSet {
    pub name: String,
    /// Scenario file paths, relative to the set file.
    pub scenarios: Vec<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub costs: CostConfig,
}

impl BenchSet {
    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::Config(m.into()));
        if self.scenarios.is_empty() {
            return fail("at least one scenario is required");
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required");
        }
        if self.suites.is_empty() {
            return fail("at least one suite is required");
        }
        for (i, suite) in self.suites.iter().enumerate() {
            if self.suites[..i].contains(suite) {
                return fail("each suite may appear only once");
            }
        }
        Ok(())
    }
}

/// A bench set with its scenarios loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct LoadedBench {
    pub set: BenchSet,
    pub scenarios: Vec<LoadedScenario>,
}

/// Loads a bench set file and every scenario it references. All
/// scenarios must share one sensor configuration per suite so the
/// report's hardware rows describe every run.
pub fn load_bench_set(path: &Path) -> Result<LoadedBench, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let set: BenchSet = serde_json::from_str(&text).map_err(|e| BenchError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    set.validate()?;
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut scenarios = Vec::with_capacity(set.scenarios.len());
    for rel in &set.scenarios {
        let scn_path = match dir {
            Some(d) => d.join(rel),
            None => rel.clone(),
        };
        let loaded = load_scenario(&scn_path).map_err(|source| BenchError::Scenario {
            path: scn_path.display().to_string(),
            source,
        })?;
        scenarios.push(loaded);
    }
    for s in &scenarios[1..] {
        if s.config.ultrasonic != scenarios[0].config.ultrasonic
            || s.config.lidar != scenarios[0].config.lidar
        {
            return Err(BenchError::Config(
                "scenarios in one bench set must share sensor configurations".into(),
            ));
        }
    }
    Ok(LoadedBench { set, scenarios })
}

/// Groups digits in the Indian style: 1,00,000.
fn inr(n: u64) -> String {
    let digits = n.to_string();
    if digits.len() <= 3 {
        return digits;
    }
    let (head, tail) = digits.split_at(digits.len() - 3);
    let mut groups = Vec::new();
    let bytes = head.as_bytes();
    let mut i = bytes.len();
    while i > 2 {
        groups.push(&head[i - 2..i]);
        i -= 2;
    }
    groups.push(&head[..i]);
    groups.reverse();
    format!("{},{}", groups.join(","), tail)
}

/// Priced sensor bill: `total = unit_cost * count`, in labeled integer
/// rupees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub currency: String,
    pub unit_cost: u64,
    pub count: u64,
    pub total: u64,
}

pub fn cost_model(unit_cost: u64, count: u64) -> CostModel {
    CostModel {
        currency: "₹".into(),
        unit_cost,
        count,
        total: unit_cost * count,
    }
}

fn cost_display(suite: Suite, cost: &CostModel) -> String {
    match suite {
        Suite::Ultrasonic => format!(
            "{} x ₹{} = ₹{}",
            cost.count,
            inr(cost.unit_cost),
            inr(cost.total)
        ),
        Suite::Lidar => format!("Beyond ₹{}", inr(cost.total)),
        Suite::Both => format!("₹{}", inr(cost.total)),
    }
}

/// Mean/min/max summary of one metric field across runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub coverage: f64,
    pub occupied_precision: f64,
    pub occupied_recall: f64,
    pub free_accuracy: f64,
    pub localization_rmse: f64,
}

impl MetricSummary {
    fn from_metrics(m: &MapMetrics) -> Self {
        Self {
            coverage: m.coverage,
            occupied_precision: m.occupied_precision,
            occupied_recall: m.occupied_recall,
            free_accuracy: m.free_accuracy,
            localization_rmse: m.localization_rmse,
        }
    }

    fn combine(items: &[Self], pick: impl Fn(&Self) -> f64, fold: impl Fn(f64, f64) -> f64) -> f64 {
        items.iter().map(&pick).fold(None, |acc: Option<f64>, v| {
            Some(match acc {
                Some(a) => fold(a, v),
                None => v,
            })
        })
        .unwrap_or(0.0)
    }
}

/// Aggregated metrics for one suite over all completed runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SuiteAggregate {
    pub completed: usize,
    pub failed: usize,
    pub mean: MetricSummary,
    pub min: MetricSummary,
    pub max: MetricSummary,
    pub mean_ticks: f64,
    /// Mean ticks to reach the coverage target, over runs that reached
    /// it.
    pub mean_time_to_coverage: Option<f64>,
    /// How many runs reached the coverage target at all.
    pub coverage_target_hits: usize,
}

fn aggregate(summaries: &[MetricSummary], ticks: &[u64], ttc: &[Option<u64>]) -> SuiteAggregate {
    let n = summaries.len();
    if n == 0 {
        return SuiteAggregate::default();
    }
    let nf = n as f64;
    let mean_of = |pick: &dyn Fn(&MetricSummary) -> f64| -> f64 {
        summaries.iter().map(pick).sum::<f64>() / nf
    };
    let build = |fold: fn(f64, f64) -> f64| MetricSummary {
        coverage: MetricSummary::combine(summaries, |m| m.coverage, fold),
        occupied_precision: MetricSummary::combine(summaries, |m| m.occupied_precision, fold),
        occupied_recall: MetricSummary::combine(summaries, |m| m.occupied_recall, fold),
        free_accuracy: MetricSummary::combine(summaries, |m| m.free_accuracy, fold),
        localization_rmse: MetricSummary::combine(summaries, |m| m.localization_rmse, fold),
    };
    let hits: Vec<u64> = ttc.iter().flatten().copied().collect();
    SuiteAggregate {
        completed: n,
        failed: 0,
        mean: MetricSummary {
            coverage: mean_of(&|m| m.coverage),
            occupied_precision: mean_of(&|m| m.occupied_precision),
            occupied_recall: mean_of(&|m| m.occupied_recall),
            free_accuracy: mean_of(&|m| m.free_accuracy),
            localization_rmse: mean_of(&|m| m.localization_rmse),
        },
        min: build(f64::min),
        max: build(f64::max),
        mean_ticks: ticks.iter().sum::<u64>() as f64 / nf,
        mean_time_to_coverage: if hits.is_empty() {
            None
        } else {
            Some(hits.iter().sum::<u64>() as f64 / hits.len() as f64)
        },
        coverage_target_hits: hits.len(),
    }
}

/// One run inside a suite row; failed runs carry the error text instead
/// of metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub status: Option<RunStatus>,
    pub ticks: u64,
    pub replans: u64,
    pub metrics: Option<MapMetrics>,
    pub error: Option<String>,
}

/// Measured and static facts for one sensor suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub suite: Suite,
    /// Number of physical devices mounted.
    pub sensor_count: usize,
    /// Range samples produced per second (ring samples, or beams times
    /// scan rate).
    pub samples_per_s: f64,
    /// Usable range interval, meters.
    pub range_m: [f64; 2],
    pub cost: CostModel,
    pub cost_display: String,
    pub metrics: SuiteAggregate,
    pub runs: Vec<RunSummary>,
}

/// The qualitative orderings the report asserts and records; present
/// only when both pure suites ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingFlags {
    /// Mean lidar coverage strictly exceeds mean ultrasonic coverage.
    pub lidar_coverage_exceeds_ultrasonic: bool,
    /// Lidar maximum range strictly exceeds the ultrasonic maximum.
    pub lidar_range_exceeds_ultrasonic: bool,
    /// The ultrasonic bill is strictly cheaper than the lidar bill.
    pub ultrasonic_cost_below_lidar: bool,
}

/// One row of the static datasheet table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticRow {
    pub property: String,
    pub lidar: String,
    pub ultrasonic: String,
}

/// The full comparison artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub name: String,
    pub scenarios: Vec<String>,
    pub seeds: Vec<u64>,
    pub rows: Vec<SuiteRow>,
    pub orderings: Option<OrderingFlags>,
    pub static_table: Vec<StaticRow>,
    pub all_completed: bool,
}

fn static_rows() -> Vec<StaticRow> {
    let row = |property: &str, lidar: &str, ultrasonic: &str| StaticRow {
        property: property.into(),
        lidar: lidar.into(),
        ultrasonic: ultrasonic.into(),
    };
    vec![
        row("No of sensors", "1", "4"),
        row("Samples per sec", "720", "10"),
        row(
            "Absorption underwater",
            "blue-green 8-16/m, green 4-8/m, yellow 2-4/m, red 1-2/m",
            "1 kHz: 0.2-0.5 dB/m, 10 kHz: 2-3 dB/m, 100 kHz: 50-100 dB/m",
        ),
        row("Range under water", "1-10m", "0.01m - 2m"),
        row(
            "Accuracy (under water)",
            "better accuracy at longer distances",
            "better accuracy at short distances",
        ),
        row("Cost", "Beyond ₹1,00,000", "4 x ₹100 = ₹400"),
    ]
}

/// Column-aligned plain-text rendering of the static datasheet table.
pub fn static_table_text() -> String {
    let mut lines: Vec<[String; 3]> = vec![[
        "Properties".into(),
        "LIDAR".into(),
        "ULTRASONIC SENSOR".into(),
    ]];
    for r in static_rows() {
        lines.push([r.property, r.lidar, r.ultrasonic]);
    }
    render_columns(&lines)
}

fn render_columns(rows: &[[String; 3]]) -> String {
    let width = |i: usize| {
        rows.iter()
            .map(|r| r[i].chars().count())
            .max()
            .unwrap_or(0)
    };
    let (w0, w1) = (width(0), width(1));
    let pad = |s: &str, w: usize| {
        let mut out = s.to_string();
        out.extend(std::iter::repeat(' ').take(w.saturating_sub(s.chars().count())));
        out
    };
    let mut out = String::new();
    for r in rows {
        out.push_str(pad(&r[0], w0).trim_end_matches(|_| false));
        out.push_str("  ");
        out.push_str(&pad(&r[1], w1));
        out.push_str("  ");
        out.push_str(&r[2]);
        // Cells never end in spaces, but padding can: keep lines clean.
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
    out
}

fn suite_hardware(suite: Suite, scn: &LoadedScenario, costs: &CostConfig) -> (usize, f64, [f64; 2], CostModel) {
    let u = &scn.config.ultrasonic;
    let l = &scn.config.lidar;
    let sonar_count = u.mount_angles.len();
    let sonar_rate = u.sample_rate_hz;
    let lidar_rate = l.beams_per_scan as f64 * l.scan_rate_hz;
    match suite {
        Suite::Ultrasonic => (
            sonar_count,
            sonar_rate,
            [u.min_range, u.max_range],
            cost_model(costs.ultrasonic_unit, sonar_count as u64),
        ),
        Suite::Lidar => (
            1,
            lidar_rate,
            [l.min_range, l.max_range],
            cost_model(costs.lidar_unit, 1),
        ),
        Suite::Both => {
            let sonar = cost_model(costs.ultrasonic_unit, sonar_count as u64);
            let lidar = cost_model(costs.lidar_unit, 1);
            (
                sonar_count + 1,
                sonar_rate + lidar_rate,
                [
                    u.min_range.min(l.min_range),
                    u.max_range.max(l.max_range),
                ],
                CostModel {
                    currency: "₹".into(),
                    unit_cost: 0,
                    count: sonar.count + lidar.count,
                    total: sonar.total + lidar.total,
                },
            )
        }
    }
}

/// Runs the full (suite x scenario x seed) grid and folds the results
/// into one report. `threads` caps the worker pool (`None` = rayon's
/// default); the fold order is fixed, so the report does not depend on
/// it.
pub fn compare_sensors(
    set: &BenchSet,
    scenarios: &[LoadedScenario],
    threads: Option<usize>,
) -> Result<ComparisonReport, BenchError> {
    set.validate()?;
    if scenarios.is_empty() {
        return Err(BenchError::Config("no scenarios loaded".into()));
    }
    let jobs: Vec<(usize, usize, u64)> = set
        .suites
        .iter()
        .enumerate()
        .flat_map(|(si, _)| {
            scenarios.iter().enumerate().flat_map(move |(ci, _)| {
                set.seeds.iter().map(move |&seed| (si, ci, seed))
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let results: Vec<Result<SimResult, SimError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(si, ci, seed)| run_scenario(&scenarios[ci], Some(seed), Some(set.suites[si])))
            .collect()
    });

    let mut rows = Vec::with_capacity(set.suites.len());
    let mut all_completed = true;
    for (si, &suite) in set.suites.iter().enumerate() {
        let mut runs = Vec::new();
        let mut summaries = Vec::new();
        let mut ticks = Vec::new();
        let mut ttc = Vec::new();
        let mut failed = 0usize;
        for (job, result) in jobs.iter().zip(&results) {
            if job.0 != si {
                continue;
            }
            let scenario_name = scenarios[job.1].config.name.clone();
            match result {
                Ok(r) => {
                    summaries.push(MetricSummary::from_metrics(&r.metrics));
                    ticks.push(r.ticks);
                    ttc.push(r.metrics.time_to_coverage_ticks);
                    runs.push(RunSummary {
                        scenario: scenario_name,
                        seed: job.2,
                        status: Some(r.status),
                        ticks: r.ticks,
                        replans: r.replans,
                        metrics: Some(r.metrics.clone()),
                        error: None,
                    });
                }
                Err(e) => {
                    failed += 1;
                    all_completed = false;
                    runs.push(RunSummary {
                        scenario: scenario_name,
                        seed: job.2,
                        status: None,
                        ticks: 0,
                        replans: 0,
                        metrics: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        let mut agg = aggregate(&summaries, &ticks, &ttc);
        agg.failed = failed;
        let (sensor_count, samples_per_s, range_m, cost) =
            suite_hardware(suite, &scenarios[0], &set.costs);
        let cost_display = cost_display(suite, &cost);
        rows.push(SuiteRow {
            suite,
            sensor_count,
            samples_per_s,
            range_m,
            cost,
            cost_display,
            metrics: agg,
            runs,
        });
    }

    let find = |s: Suite| rows.iter().find(|r| r.suite == s);
    let orderings = match (find(Suite::Lidar), find(Suite::Ultrasonic)) {
        (Some(lidar), Some(sonar)) => Some(OrderingFlags {
            lidar_coverage_exceeds_ultrasonic: lidar.metrics.mean.coverage
                > sonar.metrics.mean.coverage,
            lidar_range_exceeds_ultrasonic: lidar.range_m[1] > sonar.range_m[1],
            ultrasonic_cost_below_lidar: sonar.cost.total < lidar.cost.total,
        }),
        _ => None,
    };

    Ok(ComparisonReport {
        name: set.name.clone(),
        scenarios: scenarios.iter().map(|s| s.config.name.clone()).collect(),
        seeds: set.seeds.clone(),
        rows,
        orderings,
        static_table: static_rows(),
        all_completed,
    })
}

/// Human-readable rendering: the static datasheet, the measured
/// aggregates, the recorded orderings, and any per-run failures.
pub fn render_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("Sensor suite comparison: {}\n", report.name));
    out.push_str(&format!("Scenarios: {}\n", report.scenarios.join(", ")));
    out.push_str(&format!(
        "Seeds: {}\n\n",
        report
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str(&static_table_text());
    out.push('\n');

    let mut rows: Vec<[String; 3]> = vec![["Measured".into(), String::new(), String::new()]];
    for r in &report.rows {
        rows.push([format!("-- {} --", r.suite), String::new(), String::new()]);
        let m = &r.metrics;
        let fmt_range = |field: fn(&MetricSummary) -> f64| {
            format!(
                "{:.3} (min {:.3}, max {:.3})",
                field(&m.mean),
                field(&m.min),
                field(&m.max)
            )
        };
        rows.push(["coverage".into(), fmt_range(|s| s.coverage), String::new()]);
        rows.push([
            "occupied recall".into(),
            fmt_range(|s| s.occupied_recall),
            String::new(),
        ]);
        rows.push([
            "occupied precision".into(),
            fmt_range(|s| s.occupied_precision),
            String::new(),
        ]);
        rows.push([
            "free accuracy".into(),
            fmt_range(|s| s.free_accuracy),
            String::new(),
        ]);
        rows.push([
            "localization rmse".into(),
            fmt_range(|s| s.localization_rmse),
            String::new(),
        ]);
        rows.push([
            "runs".into(),
            format!("{} completed, {} failed", m.completed, m.failed),
            String::new(),
        ]);
        rows.push([
            "cost".into(),
            format!("{} (total ₹{})", r.cost_display, inr(r.cost.total)),
            String::new(),
        ]);
    }
    out.push_str(&render_columns(&rows));
    out.push('\n');

    match &report.orderings {
        Some(f) => {
            let yn = |b: bool| if b { "yes" } else { "no" };
            out.push_str("Recorded orderings:\n");
            out.push_str(&format!(
                "  lidar coverage > ultrasonic coverage: {}\n",
                yn(f.lidar_coverage_exceeds_ultrasonic)
            ));
            out.push_str(&format!(
                "  lidar max range > ultrasonic max range: {}\n",
                yn(f.lidar_range_exceeds_ultrasonic)
            ));
            out.push_str(&format!(
                "  ultrasonic total cost < lidar total cost: {}\n",
                yn(f.ultrasonic_cost_below_lidar)
            ));
        }
        None => out.push_str("Recorded orderings: (requires both pure suites)\n"),
    }

    let errors: Vec<String> = report
        .rows
        .iter()
        .flat_map(|row| {
            row.runs.iter().filter_map(move |r| {
                r.error
                    .as_ref()
                    .map(|e| format!("  {} / {} / seed {}: {}", row.suite, r.scenario, r.seed, e))
            })
        })
        .collect();
    if !errors.is_empty() {
        out.push_str("\nFailed runs:\n");
        for line in errors {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}
