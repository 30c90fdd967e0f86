use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use shipexp_core::harness::config::HarnessConfig;
use shipexp_core::harness::experiment;
use shipexp_core::harness::montecarlo;
use shipexp_core::harness::pipeline::{self, write_file};
use shipexp_core::harness::{at, HarnessError, Stage};
use shipexp_core::regression::Dataset;
use shipexp_core::sim::{self, SimOptions};
use shipexp_core::ThetaEstimate;

/// Experiment design, identification and planning for a surface vessel.
#[derive(Debug, Parser)]
#[command(name = "shipexp", version)]
struct Cli {
    /// Scenario file (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate library primitives with disturbances.
    Simulate {
        /// Only this primitive id.
        #[arg(long)]
        primitive: Option<usize>,
    },
    /// Per-primitive information summaries.
    Summaries,
    /// Optimal sample allocation over the library.
    Optimize,
    /// Integer schedule of the optimal allocation.
    Schedule,
    /// Lattice plan executing the schedule.
    Plan,
    /// Monte Carlo comparison of designs.
    Montecarlo {
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Everything from the library to cross-validation.
    Pipeline,
    /// Cross-validate an estimate, or estimate from a dataset first.
    Validate {
        /// `estimate.json` as written by `pipeline`.
        #[arg(long, conflicts_with = "dataset")]
        estimate: Option<PathBuf>,
        /// CSV with y1..y3, tau1..tau3 and an optional sub_id column.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>, HarnessError> {
    serde_json::to_vec_pretty(v).map_err(at(Stage::Io))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.as_path();
    fs::create_dir_all(out).map_err(at(Stage::Io))?;

    match cli.command {
        Command::Simulate { primitive } => {
            let lib = pipeline::load_library(&cfg)?;
            write_file(out, "library.json", &json(&lib)?)?;
            for p in lib.primitives.iter().filter(|p| primitive.is_none_or(|id| id == p.id)) {
                let dist = cfg.disturbance.with_seed(montecarlo::run_seed(cfg.seed, p.id, 0));
                let traj = sim::simulate(&p.initial, &p.input_signal, &cfg.params, &dist, &SimOptions::default())
                    .map_err(at(Stage::Simulate))?;
                let mut buf = Vec::new();
                traj.write_csv(&mut buf).map_err(at(Stage::Io))?;
                write_file(out, &format!("trajectory_{}.csv", p.id), &buf)?;
            }
            if let Some(id) = primitive.filter(|&id| lib.get(id).is_none()) {
                return Err(HarnessError::new(Stage::Simulate, format!("no primitive {id}")));
            }
        }
        Command::Summaries => {
            let lib = pipeline::load_library(&cfg)?;
            write_file(out, "summaries.json", &json(&pipeline::compute_summaries(&cfg, &lib)?)?)?;
        }
        Command::Optimize | Command::Schedule | Command::Plan => {
            let lib = pipeline::load_library(&cfg)?;
            let alloc = pipeline::optimize(&cfg, &pipeline::compute_summaries(&cfg, &lib)?)?;
            let ids: Vec<usize> = lib.primitives.iter().map(|p| p.id).collect();
            let report = alloc.percentage_report(&ids);
            print!("{report}");
            write_file(out, "allocation.json", &json(&alloc)?)?;
            write_file(out, "allocation.txt", report.as_bytes())?;
            if matches!(cli.command, Command::Schedule | Command::Plan) {
                let schedule = pipeline::schedule(&lib, &alloc)?;
                write_file(out, "schedule.json", &json(&schedule)?)?;
                if matches!(cli.command, Command::Plan) {
                    let map = pipeline::load_map(&cfg)?;
                    let plan = pipeline::plan(&cfg, &lib, &schedule, &map)?;
                    println!(
                        "plan: {} primitives, cost {}, {} expansions",
                        plan.plan.primitive_ids.len(),
                        plan.plan.total_cost,
                        plan.plan.expanded
                    );
                    write_file(out, "map.txt", map.to_text().as_bytes())?;
                    write_file(out, "plan.json", &json(&plan)?)?;
                }
            }
        }
        Command::Montecarlo { runs } => {
            if let Some(r) = runs {
                cfg.monte_carlo.runs = r;
            }
            let lib = pipeline::load_library(&cfg)?;
            let alloc = pipeline::optimize(&cfg, &pipeline::compute_summaries(&cfg, &lib)?)?;
            let rep = montecarlo::run_monte_carlo(&cfg, &lib, Some(&alloc.fractions))?;
            for s in &rep.summaries {
                println!(
                    "{}: param error < {} in {:.1} %, CV error < {} in {:.1} %, {} degenerate",
                    s.design.label(),
                    rep.param_threshold,
                    100.0 * s.fraction_param_below,
                    rep.cv_threshold,
                    100.0 * s.fraction_cv_below,
                    s.degenerate
                );
            }
            write_file(out, "montecarlo.json", rep.to_json().as_bytes())?;
            let mut raw = Vec::new();
            rep.write_records_csv(&mut raw).map_err(at(Stage::Io))?;
            write_file(out, "montecarlo.csv", &raw)?;
            let mut plot = Vec::new();
            rep.write_plot_csv(&cfg.monte_carlo.plot_caps, &mut plot).map_err(at(Stage::Io))?;
            write_file(out, "montecarlo_plot.csv", &plot)?;
        }
        Command::Pipeline => {
            let a = pipeline::run_pipeline(&cfg)?;
            pipeline::write_artifacts(&a, out)?;
            println!(
                "plan cost {}, parameter error {:.3}, CV error {:.4}",
                a.report.plan_cost, a.report.param_error, a.report.cv.norm
            );
        }
        Command::Validate { estimate, dataset } => {
            let theta = match (estimate, dataset) {
                (Some(path), _) => {
                    let text = fs::read_to_string(&path).map_err(at(Stage::Io))?;
                    serde_json::from_str::<ThetaEstimate>(&text).map_err(at(Stage::Config))?.theta_hat
                }
                (None, Some(path)) => estimate_from_dataset(&cfg, &path, out)?,
                (None, None) => return Err(HarnessError::new(Stage::Config, "validate needs --estimate or --dataset")),
            };
            let cv = pipeline::validate(&cfg, &theta)?;
            println!("CV RMSE u {:.4e}, v {:.4e}, r {:.4e}, norm {:.4e}", cv.rmse[0], cv.rmse[1], cv.rmse[2], cv.norm);
            write_file(out, "validation.json", &json(&cv)?)?;
        }
    }
    Ok(())
}

fn estimate_from_dataset(cfg: &HarnessConfig, path: &Path, out: &Path) -> Result<Vec<f64>, HarnessError> {
    let file = fs::File::open(path).map_err(at(Stage::Io))?;
    let ds = Dataset::read_csv(file).map_err(at(Stage::Config))?;
    let est = experiment::identify(&ds.y, &ds.tau, &ds.batch_lengths(), &cfg.nominal, cfg.demean).map_err(at(Stage::Estimate))?;
    write_file(out, "estimate.json", &json(&est)?)?;
    Ok(est.theta_hat)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
