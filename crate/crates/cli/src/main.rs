//! `crawler-slam`: command-line driver for the crawler simulator. Runs
//! scenarios, benchmarks sensor suites against each other, renders maps
//! as ASCII and validates world files.
//!
//! Exit codes: 0 success, 1 a run finished with a failure status, 2
//! configuration or parse error.

mod render;

use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crawler_core::world::load_world;
use crawler_core::WorldModel;
use crawler_sim::{
    compare_sensors, load_bench_set, load_scenario, render_text, run_scenario, SimResult, Suite,
};

const EXIT_RUN_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "crawler-slam", version, about = "Crawler SLAM simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; write result.json, map.pgm and trace.csv.
    Run {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a comparison set; write comparison.json and comparison.txt.
    Bench {
        /// Bench set JSON file.
        set: PathBuf,
        /// Override the set's suites (comma separated:
        /// ultrasonic,lidar,both).
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
        /// Replace the set's seed list with 0..n.
        #[arg(long)]
        seeds: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print a map (PGM file or result.json) as ASCII.
    Render {
        /// `map.pgm` or `result.json` from a run.
        file: PathBuf,
        /// Maximum output width in characters.
        #[arg(long, default_value_t = 100)]
        width: usize,
    },
    /// Parse and validate a world file.
    Validate {
        /// World JSON file.
        world: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenario, seed, out } => cmd_run(&scenario, seed, &out),
        Command::Bench {
            set,
            suites,
            seeds,
            out,
        } => cmd_bench(&set, suites.as_deref(), seeds, &out),
        Command::Render { file, width } => cmd_render(&file, width),
        Command::Validate { world } => cmd_validate(&world),
    };
    ExitCode::from(code)
}

fn fail_config(err: impl std::fmt::Display) -> u8 {
    eprintln!("error: {err}");
    EXIT_CONFIG
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), String> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_run(scenario: &Path, seed: Option<u64>, out: &Path) -> u8 {
    let loaded = match load_scenario(scenario) {
        Ok(s) => s,
        Err(e) => return fail_config(e),
    };
    let result = match run_scenario(&loaded, seed, None) {
        Ok(r) => r,
        Err(e) => return fail_config(e),
    };
    if let Err(e) = fs::create_dir_all(out) {
        return fail_config(format!("cannot create {}: {e}", out.display()));
    }
    let json = match serde_json::to_string_pretty(&result) {
        Ok(j) => j,
        Err(e) => return fail_config(e),
    };
    let steps = [
        write_file(out, "result.json", format!("{json}\n").as_bytes()),
        write_file(out, "map.pgm", &result.final_map.to_pgm()),
        write_file(out, "trace.csv", trace_csv(&result).as_bytes()),
    ];
    if let Some(Err(e)) = steps.into_iter().find(|s| s.is_err()) {
        return fail_config(e);
    }
    println!(
        "{}: status={} ticks={} coverage={:.4}",
        result.scenario, result.status, result.ticks, result.metrics.coverage
    );
    if result.is_success(&loaded.config.mode) {
        0
    } else {
        EXIT_RUN_FAILED
    }
}

/// One row per tick: pose truth/estimate, covariance trace, command and
/// map coverage. Floats use shortest round-trip formatting so reruns are
/// byte-identical.
fn trace_csv(result: &SimResult) -> String {
    let mut out = String::from(
        "tick,t,truth_x,truth_y,truth_yaw,est_x,est_y,est_yaw,cov_trace,cmd_v,cmd_omega,coverage\n",
    );
    for (row, coverage) in result.pose_trace.iter().zip(&result.coverage_trace) {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            row.tick,
            row.t,
            row.truth[0],
            row.truth[1],
            row.truth[2],
            row.estimate[0],
            row.estimate[1],
            row.estimate[2],
            row.cov_trace,
            row.cmd[0],
            row.cmd[1],
            coverage
        );
    }
    out
}

fn parse_suite(name: &str) -> Result<Suite, String> {
    let quoted = serde_json::Value::String(name.trim().to_string());
    serde_json::from_value(quoted)
        .map_err(|_| format!("unknown suite {name:?} (expected ultrasonic, lidar or both)"))
}

fn thread_cap() -> Result<Option<usize>, String> {
    match env::var("CRAWLER_SLAM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| format!("CRAWLER_SLAM_THREADS must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(None),
    }
}

fn cmd_bench(set: &Path, suites: Option<&[String]>, seeds: Option<u64>, out: &Path) -> u8 {
    let mut loaded = match load_bench_set(set) {
        Ok(l) => l,
        Err(e) => return fail_config(e),
    };
    if let Some(names) = suites {
        match names.iter().map(|n| parse_suite(n)).collect() {
            Ok(parsed) => loaded.set.suites = parsed,
            Err(e) => return fail_config(e),
        }
    }
    if let Some(n) = seeds {
        loaded.set.seeds = (0..n).collect();
    }
    if let Err(e) = loaded.set.validate() {
        return fail_config(e);
    }
    let threads = match thread_cap() {
        Ok(t) => t,
        Err(e) => return fail_config(e),
    };
    let report = match compare_sensors(&loaded.set, &loaded.scenarios, threads) {
        Ok(r) => r,
        Err(e) => return fail_config(e),
    };
    if let Err(e) = fs::create_dir_all(out) {
        return fail_config(format!("cannot create {}: {e}", out.display()));
    }
    let json = match serde_json::to_string_pretty(&report) {
        Ok(j) => j,
        Err(e) => return fail_config(e),
    };
    let steps = [
        write_file(out, "comparison.json", format!("{json}\n").as_bytes()),
        write_file(out, "comparison.txt", render_text(&report).as_bytes()),
    ];
    if let Some(Err(e)) = steps.into_iter().find(|s| s.is_err()) {
        return fail_config(e);
    }
    let runs: usize = report.rows.iter().map(|r| r.runs.len()).sum();
    println!(
        "{}: {} rows, {} runs, all completed: {}",
        report.name,
        report.rows.len(),
        runs,
        if report.all_completed { "yes" } else { "no" }
    );
    if let Some(ord) = &report.orderings {
        // Ordering violations are worth a warning but never an error:
        // the report itself is the artifact.
        if !ord.lidar_coverage_exceeds_ultrasonic {
            println!("warning: lidar coverage did not exceed ultrasonic");
        }
        if !ord.lidar_range_exceeds_ultrasonic {
            println!("warning: lidar range did not exceed ultrasonic");
        }
        if !ord.ultrasonic_cost_below_lidar {
            println!("warning: ultrasonic cost was not below lidar");
        }
    }
    if report.all_completed {
        0
    } else {
        EXIT_RUN_FAILED
    }
}

fn cmd_render(file: &Path, width: usize) -> u8 {
    if width == 0 {
        return fail_config("width must be at least 1");
    }
    let is_pgm = file
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let canvas = if is_pgm {
        let bytes = match fs::read(file) {
            Ok(b) => b,
            Err(e) => return fail_config(format!("cannot read {}: {e}", file.display())),
        };
        match render::canvas_from_pgm(&bytes) {
            Ok(c) => c,
            Err(e) => return fail_config(format!("{}: {e}", file.display())),
        }
    } else {
        let text = match fs::read_to_string(file) {
            Ok(t) => t,
            Err(e) => return fail_config(format!("cannot read {}: {e}", file.display())),
        };
        let result: SimResult = match serde_json::from_str(&text) {
            Ok(r) => r,
            Err(e) => return fail_config(format!("{}: {e}", file.display())),
        };
        render::canvas_from_grid(&result.final_map.classify())
    };
    print!("{}", canvas.capped(width).to_text());
    0
}

fn cmd_validate(world: &Path) -> u8 {
    let text = match fs::read_to_string(world) {
        Ok(t) => t,
        Err(e) => return fail_config(format!("cannot read {}: {e}", world.display())),
    };
    match load_world::<f64>(&text) {
        Ok(model) => {
            print_world_summary(&model);
            0
        }
        Err(e) => fail_config(format!("{}: {e}", world.display())),
    }
}

fn print_world_summary(model: &WorldModel) {
    let dynamic = model.obstacles.iter().filter(|o| o.dynamic).count();
    println!(
        "{}: {} x {} m, {} obstacles ({} dynamic), sound speed {} m/s",
        model.name,
        model.bounds.width,
        model.bounds.height,
        model.obstacles.len(),
        dynamic,
        model.medium.sound_speed
    );
}
