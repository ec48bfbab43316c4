//! Closed-loop simulation for the crawler SLAM stack: scenario files,
//! the deterministic sense-localize-map-plan-act engine, map quality
//! metrics, and the ultrasonic-versus-lidar benchmark report.

pub mod bench;
pub mod engine;
pub mod metrics;
pub mod scenario;

pub use bench::{
    compare_sensors, cost_model, load_bench_set, render_text, static_table_text, BenchError,
    BenchSet, ComparisonReport, CostConfig, CostModel, LoadedBench, MetricSummary, OrderingFlags,
    RunSummary, StaticRow, SuiteAggregate, SuiteRow,
};
pub use engine::{run_scenario, RunStatus, SensorFrame, SimResult, TickRecord};
pub use metrics::{map_accuracy, MapMetrics, MetricsError, TruthContext};
pub use scenario::{
    load_scenario, LoadedScenario, MappingSection, Mode, ScenarioConfig, SimError, StartPose,
    Suite, TeleopStep,
};
