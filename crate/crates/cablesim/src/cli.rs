//! Batch entry point: load a scenario, run seeds (full task or an isolated
//! stage), write per-run traces and metrics, and aggregate reports.

use crate::cablemodel::{build_model, fold_filter, select_grasp, TipEnd};
use crate::cloud::PointCloud;
use crate::controller::{alignment_loop, write_alignment_csv};
use crate::scenario::{Scenario, ScenarioError};
use crate::simworld::{Attachment, WorldState};
use crate::taskfsm::{
    estimate_socket, pre_insert_frame, run_task, write_task_trace_csv, TaskMetrics, VisionPipeline,
};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad seed spec {0:?}: expected `a..b` or a comma-separated list")]
    BadSeeds(String),
    #[error("fit-only needs a cloud: pass --cloud or a scenario")]
    MissingCloud,
    #[error("cloud file error: {0}")]
    Cloud(#[from] crate::cloud::CloudError),
    #[error("{0}")]
    Stage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunMode {
    FullTask,
    FitOnly,
    PerceiveOnly,
    AlignOnly,
}

impl RunMode {
    pub fn parse(s: &str) -> Option<RunMode> {
        match s {
            "full-task" => Some(RunMode::FullTask),
            "fit-only" => Some(RunMode::FitOnly),
            "perceive-only" => Some(RunMode::PerceiveOnly),
            "align-only" => Some(RunMode::AlignOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub scenario: PathBuf,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub mode: RunMode,
    pub overrides: Vec<String>,
    /// Stored cloud consumed by fit-only mode instead of a rendered frame.
    pub input_cloud: Option<PathBuf>,
}

/// Parse `a..b` (half-open) or a comma-separated list of seeds.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::BadSeeds(spec.to_string());
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    let seeds: Result<Vec<u64>, _> = spec.split(',').map(|s| s.trim().parse::<u64>()).collect();
    let seeds = seeds.map_err(|_| bad())?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub success: bool,
    pub detail: String,
    pub metrics: Option<TaskMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    pub scenario: String,
    pub mode: RunMode,
    pub runs: Vec<SeedResult>,
    pub success_count: usize,
    pub failure_count: usize,
    /// Min/max/mean simulated duration over successful full-task runs.
    pub duration_min: Option<f64>,
    pub duration_max: Option<f64>,
    pub duration_mean: Option<f64>,
}

impl CampaignReport {
    pub fn all_succeeded(&self) -> bool {
        self.failure_count == 0
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {:?}: {}/{} seeds succeeded",
            self.scenario,
            self.success_count,
            self.runs.len()
        );
        if let (Some(lo), Some(hi), Some(mean)) =
            (self.duration_min, self.duration_max, self.duration_mean)
        {
            let _ = writeln!(
                s,
                "simulated duration: min {lo:.3} s, max {hi:.3} s, mean {mean:.3} s"
            );
        }
        for r in &self.runs {
            let _ = writeln!(
                s,
                "  seed {:>3}  {}  {}",
                r.seed,
                if r.success { "ok  " } else { "FAIL" },
                r.detail
            );
        }
        s
    }
}

/// Execute the run spec: one run per seed (in parallel, each owning its world),
/// write per-run artifacts into the output directory, then the aggregate
/// report. Per-seed failures are recorded, not fatal.
pub fn run(spec: &RunSpec) -> Result<CampaignReport, CliError> {
    let scenario = Scenario::load_with_overrides(&spec.scenario, &spec.overrides)?;
    fs::create_dir_all(&spec.out_dir).map_err(io_err(&spec.out_dir))?;

    let results: Vec<Result<SeedResult, CliError>> = spec
        .seeds
        .par_iter()
        .map(|&seed| run_seed(spec, &scenario, seed))
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }

    let success_count = runs.iter().filter(|r| r.success).count();
    let durations: Vec<f64> = runs
        .iter()
        .filter(|r| r.success)
        .filter_map(|r| r.metrics.as_ref().map(|m| m.total_duration))
        .collect();
    let report = CampaignReport {
        scenario: scenario.name.clone(),
        mode: spec.mode,
        success_count,
        failure_count: runs.len() - success_count,
        duration_min: durations.iter().cloned().reduce(f64::min),
        duration_max: durations.iter().cloned().reduce(f64::max),
        duration_mean: if durations.is_empty() {
            None
        } else {
            Some(durations.iter().sum::<f64>() / durations.len() as f64)
        },
        runs,
    };

    let report_path = spec.out_dir.join("campaign.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json).map_err(io_err(&report_path))?;
    Ok(report)
}

fn run_seed(spec: &RunSpec, scenario: &Scenario, seed: u64) -> Result<SeedResult, CliError> {
    match spec.mode {
        RunMode::FullTask => run_full_task(spec, scenario, seed),
        RunMode::FitOnly => run_fit_only(spec, scenario, seed),
        RunMode::PerceiveOnly => run_perceive_only(spec, scenario, seed),
        RunMode::AlignOnly => run_align_only(spec, scenario, seed),
    }
}

fn run_full_task(spec: &RunSpec, scenario: &Scenario, seed: u64) -> Result<SeedResult, CliError> {
    let mut world = WorldState::from_scenario(scenario, seed)
        .map_err(|e| CliError::Stage(e.to_string()))?;
    let (metrics, trace) = run_task(&mut world, scenario);

    let trace_path = spec.out_dir.join(format!("trace_seed{seed}.csv"));
    let mut buf = Vec::new();
    write_task_trace_csv(&mut buf, &trace).expect("write to vec");
    fs::write(&trace_path, buf).map_err(io_err(&trace_path))?;

    write_metrics(spec, seed, &metrics)?;
    Ok(SeedResult {
        seed,
        success: metrics.success,
        detail: metrics.outcome.clone(),
        metrics: Some(metrics),
    })
}

fn write_metrics(spec: &RunSpec, seed: u64, metrics: &TaskMetrics) -> Result<(), CliError> {
    let path = spec.out_dir.join(format!("metrics_seed{seed}.json"));
    let json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(())
}

fn run_fit_only(spec: &RunSpec, scenario: &Scenario, seed: u64) -> Result<SeedResult, CliError> {
    let world = WorldState::from_scenario(scenario, seed)
        .map_err(|e| CliError::Stage(e.to_string()))?;
    let cloud = match &spec.input_cloud {
        Some(path) => PointCloud::load(path)?,
        None => world.render_cloud(&scenario.sensor),
    };
    let outcome = (|| -> Result<serde_json::Value, String> {
        let folded = fold_filter(&cloud, &scenario.modeling.fold).map_err(|e| e.to_string())?;
        let model = build_model(&folded, scenario.modeling.samples, scenario.modeling.fold.tip_end)
            .map_err(|e| e.to_string())?;
        Ok(model.to_json())
    })();
    match outcome {
        Ok(json) => {
            let path = spec.out_dir.join(format!("model_seed{seed}.json"));
            fs::write(&path, serde_json::to_string_pretty(&json).expect("model json"))
                .map_err(io_err(&path))?;
            Ok(SeedResult { seed, success: true, detail: "model written".into(), metrics: None })
        }
        Err(e) => Ok(SeedResult { seed, success: false, detail: e, metrics: None }),
    }
}

fn run_perceive_only(
    spec: &RunSpec,
    scenario: &Scenario,
    seed: u64,
) -> Result<SeedResult, CliError> {
    let world = WorldState::from_scenario(scenario, seed)
        .map_err(|e| CliError::Stage(e.to_string()))?;
    match estimate_socket(&world, scenario) {
        Ok(est) => {
            let path = spec.out_dir.join(format!("socket_seed{seed}.json"));
            let json = serde_json::to_string_pretty(&est).expect("socket estimate serializes");
            fs::write(&path, json).map_err(io_err(&path))?;
            Ok(SeedResult { seed, success: true, detail: "socket written".into(), metrics: None })
        }
        Err(e) => Ok(SeedResult { seed, success: false, detail: e.to_string(), metrics: None }),
    }
}

/// Alignment in isolation: the early phases are executed ideally (ground-truth
/// model, instant grasp and unplug), then the vision-in-the-loop alignment
/// runs and its trace is written in the controller trace schema.
fn run_align_only(spec: &RunSpec, scenario: &Scenario, seed: u64) -> Result<SeedResult, CliError> {
    let mut world = WorldState::from_scenario(scenario, seed)
        .map_err(|e| CliError::Stage(e.to_string()))?;
    let mut vision = VisionPipeline::new(scenario, &world);

    // Ideal stand-ins for Initialize/Grasp/Unplug.
    let socket = world.target_socket.pose;
    vision.socket_frame = Some(socket);
    let truth = world.cable_curve(2048);
    let ground_cloud = PointCloud::new(crate::simworld::resample_by_arc(&truth, 400));
    let model = build_model(&ground_cloud, scenario.modeling.samples, TipEnd::MinY)
        .map_err(|e| CliError::Stage(e.to_string()))?;
    let selection =
        select_grasp(&model.chain, &scenario.grasp).map_err(|e| CliError::Stage(e.to_string()))?;
    world.set_end_effector_pose(selection.frame);
    world.cable.attachment = Attachment::Grasped { arc_offset: selection.arc_distance };
    vision.plug_exposed = true;
    let pull = crate::controller::Twist {
        linear: selection.frame.rotation_matrix().transpose()
            * (crate::frames::Vec3::y() * scenario.task.unplug_speed),
        angular: crate::frames::Vec3::zeros(),
    };
    let pull_ticks =
        (scenario.task.unplug_distance / (scenario.task.unplug_speed * scenario.control.gains.period))
            .ceil() as usize;
    for _ in 0..pull_ticks {
        world.step_plant(&pull, scenario.control.gains.period);
    }

    let pre = pre_insert_frame(&socket, scenario.task.standoff);
    world
        .tree
        .insert(crate::controller::FRAME_PRE_INSERT, crate::frames::WORLD, pre)
        .expect("world parent exists");
    let result = alignment_loop(&mut world, &scenario.control, &mut vision);

    let trace_path = spec.out_dir.join(format!("align_seed{seed}.csv"));
    let mut buf = Vec::new();
    write_alignment_csv(&mut buf, &result.rows).expect("write to vec");
    fs::write(&trace_path, buf).map_err(io_err(&trace_path))?;

    let detail = format!("{:?} after {} iterations", result.outcome, result.iterations);
    let path = spec.out_dir.join(format!("align_seed{seed}.json"));
    let json = serde_json::json!({
        "seed": seed,
        "outcome": format!("{:?}", result.outcome),
        "iterations": result.iterations,
        "final_deviation": result.final_deviation,
    });
    fs::write(&path, serde_json::to_string_pretty(&json).expect("json"))
        .map_err(io_err(&path))?;
    Ok(SeedResult { seed, success: result.converged(), detail, metrics: None })
}

/// Join the per-run metrics files in a directory into one CSV table with an
/// aggregate mean row over successful runs. Returns the CSV text; an empty or
/// metrics-free directory yields just the header plus a warning on stderr.
pub fn report(dir: &Path) -> Result<String, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("metrics_seed") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();

    let mut csv = String::new();
    csv.push_str(
        "seed,outcome,total_duration,align_iterations,final_position_error,final_angle_error",
    );
    let phases = ["initialize", "grasp", "unplug", "pre-insert", "insert"];
    for p in phases {
        let _ = write!(csv, ",dur_{p}");
    }
    csv.push('\n');

    if files.is_empty() {
        eprintln!("warning: no metrics files in {}", dir.display());
        return Ok(csv);
    }

    #[derive(serde::Deserialize)]
    struct M {
        seed: u64,
        outcome: String,
        success: bool,
        total_duration: f64,
        align_iterations: usize,
        final_position_error: f64,
        final_angle_error: f64,
        phase_durations: Vec<PD>,
    }
    #[derive(serde::Deserialize)]
    struct PD {
        phase: String,
        seconds: f64,
    }

    let mut sums = vec![0.0f64; 4 + phases.len()];
    let mut successes = 0usize;
    for f in &files {
        let text = fs::read_to_string(f).map_err(io_err(f))?;
        let m: M = serde_json::from_str(&text).map_err(|source| ScenarioError::Json {
            path: f.display().to_string(),
            source,
        })?;
        let _ = write!(
            csv,
            "{},{},{:?},{},{:?},{:?}",
            m.seed,
            m.outcome,
            m.total_duration,
            m.align_iterations,
            m.final_position_error,
            m.final_angle_error
        );
        for p in phases {
            let dur = m
                .phase_durations
                .iter()
                .filter(|d| d.phase == p)
                .map(|d| d.seconds)
                .sum::<f64>();
            let _ = write!(csv, ",{dur:?}");
        }
        csv.push('\n');
        // Failed runs are flagged in their row but excluded from aggregates.
        if m.success {
            successes += 1;
            sums[0] += m.total_duration;
            sums[1] += m.align_iterations as f64;
            sums[2] += m.final_position_error;
            sums[3] += m.final_angle_error;
            for (i, p) in phases.iter().enumerate() {
                sums[4 + i] += m
                    .phase_durations
                    .iter()
                    .filter(|d| &d.phase == p)
                    .map(|d| d.seconds)
                    .sum::<f64>();
            }
        }
    }
    if successes > 0 {
        let n = successes as f64;
        let _ = write!(
            csv,
            "aggregate-mean,done({successes} runs),{:?},{:?},{:?},{:?}",
            sums[0] / n,
            sums[1] / n,
            sums[2] / n,
            sums[3] / n
        );
        for i in 0..phases.len() {
            let _ = write!(csv, ",{:?}", sums[4 + i] / n);
        }
        csv.push('\n');
    }
    Ok(csv)
}
