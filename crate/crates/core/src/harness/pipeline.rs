//! Library → summaries → allocation → schedule → plan → replay → estimate → validate.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{self, Allocation, InfoSummary, Schedule};
use crate::estimator::ThetaEstimate;
use crate::planner::{self, MotionPrimitive, OccupancyMap, Plan, SearchOptions};
use crate::primitives::PrimitiveLibrary;
use crate::sim::{self, BodyVelocity, SimOptions, Trajectory};

use super::config::{HarnessConfig, MapSource};
use super::experiment::{self, CvResult, ExperimentInput};
use super::{at, HarnessError, Stage};

pub fn load_library(cfg: &HarnessConfig) -> Result<PrimitiveLibrary, HarnessError> {
    match &cfg.library {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(at(Stage::Io))?;
            PrimitiveLibrary::from_json(&text, &cfg.params).map_err(at(Stage::Config))
        }
        None => PrimitiveLibrary::reference(&cfg.params, &cfg.synthesis).map_err(at(Stage::Simulate)),
    }
}

pub fn compute_summaries(cfg: &HarnessConfig, lib: &PrimitiveLibrary) -> Result<Vec<InfoSummary>, HarnessError> {
    design::library_summaries(lib, &cfg.nominal, cfg.design.sample_floor).map_err(at(Stage::Summaries))
}

pub fn optimize(cfg: &HarnessConfig, summaries: &[InfoSummary]) -> Result<Allocation, HarnessError> {
    let d = &cfg.design;
    design::optimize_allocation(summaries, d.total_n, d.mode, None, &d.optimizer).map_err(at(Stage::Optimize))
}

pub fn schedule(lib: &PrimitiveLibrary, allocation: &Allocation) -> Result<Schedule, HarnessError> {
    if allocation.fractions.len() != lib.len() {
        return Err(HarnessError::new(Stage::Schedule, "allocation and library sizes differ"));
    }
    let ids: Vec<usize> = lib.primitives.iter().map(|p| p.id).collect();
    let s = design::realize_schedule(allocation, &design::natural_segment_lens(lib), &ids);
    if s.scheduled_samples() == 0 {
        return Err(HarnessError::new(Stage::Schedule, "schedule has no segments"));
    }
    Ok(s)
}

pub fn load_map(cfg: &HarnessConfig) -> Result<OccupancyMap, HarnessError> {
    match &cfg.planner.map {
        MapSource::Reference => Ok(planner::reference_map()),
        MapSource::File { path } => {
            let text = fs::read_to_string(path).map_err(at(Stage::Io))?;
            let map = if path.extension().is_some_and(|e| e == "json") {
                OccupancyMap::from_json(&text)
            } else {
                OccupancyMap::from_text(&text, cfg.planner.lattice.cell_size)
            };
            map.map_err(at(Stage::Plan))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanBundle {
    pub primitives: Vec<MotionPrimitive>,
    pub required: Vec<usize>,
    pub plan: Plan,
}

pub fn plan(cfg: &HarnessConfig, lib: &PrimitiveLibrary, schedule: &Schedule, map: &OccupancyMap) -> Result<PlanBundle, HarnessError> {
    let pc = &cfg.planner;
    let (primitives, required) = planner::build_primitive_set(schedule, lib, &pc.lattice).map_err(at(Stage::Plan))?;
    let outcome = planner::astar_plan(
        pc.start,
        pc.goal,
        &required,
        &primitives,
        map,
        &pc.weights(),
        &pc.lattice,
        &SearchOptions::default(),
    )
    .map_err(at(Stage::Plan))?;
    Ok(PlanBundle { primitives, required, plan: outcome.plan })
}

/// Input of the plan's informative primitives in execution order.
pub fn plan_input(bundle: &PlanBundle) -> ExperimentInput {
    let mut input = ExperimentInput { segment_ids: vec![], segment_lens: vec![], signal: vec![] };
    for &id in &bundle.plan.primitive_ids {
        let p = &bundle.primitives[id];
        if p.signal.is_empty() {
            continue;
        }
        input.segment_ids.push(p.source_id.unwrap_or(p.id));
        input.segment_lens.push(p.signal.len());
        input.signal.extend_from_slice(&p.signal);
    }
    input
}

/// Simulates the true system with disturbances on the stitched input,
/// starting where the first executed primitive expects to start.
pub fn replay(cfg: &HarnessConfig, lib: &PrimitiveLibrary, input: &ExperimentInput) -> Result<Trajectory, HarnessError> {
    let initial = input
        .segment_ids
        .first()
        .and_then(|&id| lib.get(id))
        .map_or(BodyVelocity::ZERO, |p| p.initial);
    let dist = cfg.disturbance.with_seed(cfg.seed);
    sim::simulate(&initial, &input.signal, &cfg.params, &dist, &SimOptions::default()).map_err(at(Stage::Simulate))
}

pub fn estimate(cfg: &HarnessConfig, replay: &Trajectory, input: &ExperimentInput) -> Result<ThetaEstimate, HarnessError> {
    experiment::identify(&replay.outputs, &replay.inputs, &input.segment_lens, &cfg.nominal, cfg.demean).map_err(at(Stage::Estimate))
}

pub fn validate(cfg: &HarnessConfig, theta_hat: &[f64]) -> Result<CvResult, HarnessError> {
    experiment::cv_validate(theta_hat, &cfg.validation.signal(), &cfg.params).map_err(at(Stage::Validate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub objective_value: f64,
    pub fractions: Vec<f64>,
    pub repetitions: Vec<(usize, usize)>,
    pub plan_cost: f64,
    pub basic_primitives: usize,
    pub expanded: usize,
    pub counters_reached: Vec<usize>,
    pub counters_required: Vec<usize>,
    pub replay_samples: usize,
    pub theta_hat: Vec<f64>,
    pub param_error: f64,
    pub condition_number: f64,
    pub cv: CvResult,
}

#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub library: PrimitiveLibrary,
    pub summaries: Vec<InfoSummary>,
    pub allocation: Allocation,
    pub schedule: Schedule,
    pub map: OccupancyMap,
    pub plan: PlanBundle,
    pub input: ExperimentInput,
    pub replay: Trajectory,
    pub estimate: ThetaEstimate,
    pub validation: CvResult,
    pub report: PipelineReport,
}

pub fn run_pipeline(cfg: &HarnessConfig) -> Result<PipelineArtifacts, HarnessError> {
    let library = load_library(cfg)?;
    let summaries = compute_summaries(cfg, &library)?;
    let allocation = optimize(cfg, &summaries)?;
    let schedule = schedule(&library, &allocation)?;
    let map = load_map(cfg)?;
    let plan = plan(cfg, &library, &schedule, &map)?;
    let input = plan_input(&plan);
    let replay = replay(cfg, &library, &input)?;
    let estimate = estimate(cfg, &replay, &input)?;
    let validation = validate(cfg, &estimate.theta_hat)?;
    let report = PipelineReport {
        seed: cfg.seed,
        objective_value: allocation.objective_value,
        fractions: allocation.fractions.clone(),
        repetitions: schedule.segments.iter().map(|s| (s.id, s.repetitions)).collect(),
        plan_cost: plan.plan.total_cost,
        basic_primitives: plan.plan.basic_count(&plan.primitives),
        expanded: plan.plan.expanded,
        counters_reached: plan.plan.states.last().map(|s| s.counters.clone()).unwrap_or_default(),
        counters_required: plan.required.clone(),
        replay_samples: replay.len(),
        theta_hat: estimate.theta_hat.clone(),
        param_error: experiment::param_error_norm(&estimate.theta_hat, &cfg.params.to_theta()),
        condition_number: estimate.condition_number,
        cv: validation,
    };
    Ok(PipelineArtifacts { library, summaries, allocation, schedule, map, plan, input, replay, estimate, validation, report })
}

fn json<T: Serialize>(v: &T) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(v).map_err(at(Stage::Io))
}

pub fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(dir.join(name), contents).map_err(at(Stage::Io))
}

/// Writes every intermediate result into `dir`.
pub fn write_artifacts(a: &PipelineArtifacts, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(at(Stage::Io))?;
    let ids: Vec<usize> = a.library.primitives.iter().map(|p| p.id).collect();
    write_file(dir, "library.json", json(&a.library)?.as_bytes())?;
    write_file(dir, "summaries.json", json(&a.summaries)?.as_bytes())?;
    write_file(dir, "allocation.json", json(&a.allocation)?.as_bytes())?;
    write_file(dir, "allocation.txt", a.allocation.percentage_report(&ids).as_bytes())?;
    write_file(dir, "schedule.json", json(&a.schedule)?.as_bytes())?;
    write_file(dir, "map.txt", a.map.to_text().as_bytes())?;
    write_file(dir, "plan.json", json(&a.plan)?.as_bytes())?;
    let mut csv = Vec::new();
    a.replay.write_csv(&mut csv).map_err(at(Stage::Io))?;
    write_file(dir, "replay.csv", &csv)?;
    write_file(dir, "estimate.json", json(&a.estimate)?.as_bytes())?;
    write_file(dir, "validation.json", json(&a.validation)?.as_bytes())?;
    write_file(dir, "report.json", json(&a.report)?.as_bytes())
}
