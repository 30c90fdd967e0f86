//! Monte Carlo comparison of experiment designs.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::primitives::PrimitiveLibrary;
use crate::sim::BodyVelocity;

use super::config::{DesignKind, HarnessConfig, PlotCaps};
use super::experiment::{self, CvResult, ExperimentInput, IdentifySetup};
use super::{HarnessError, Stage};

pub const NORMALIZATION: &str = "per-parameter |theta_hat_i - theta0_i| / |theta0_i|, Euclidean norm over parameters";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub design: DesignKind,
    pub seed: u64,
    pub segment_ids: Vec<usize>,
    pub param_error: Option<f64>,
    pub cv: Option<CvResult>,
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design: DesignKind,
    pub runs: usize,
    pub degenerate: usize,
    /// Fraction of all runs with a parameter-error norm below the threshold.
    pub fraction_param_below: f64,
    /// Fraction of all runs with a CV-error norm below the threshold.
    pub fraction_cv_below: f64,
    pub median_param_error: Option<f64>,
    pub median_cv_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub normalization: String,
    pub runs: usize,
    pub total_n: usize,
    pub param_threshold: f64,
    pub cv_threshold: f64,
    pub optimized_fractions: Option<Vec<f64>>,
    pub summaries: Vec<DesignSummary>,
    pub records: Vec<RunRecord>,
}

impl MonteCarloReport {
    pub fn summary(&self, design: DesignKind) -> Option<&DesignSummary> {
        self.summaries.iter().find(|s| s.design == design)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Raw per-run metrics.
    pub fn write_records_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "design", "seed", "param_error", "cv_u", "cv_v", "cv_r", "cv_norm", "degenerate"])?;
        for r in &self.records {
            let cv = r.cv.map(|c| [c.rmse[0], c.rmse[1], c.rmse[2], c.norm]);
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.run.to_string(),
                r.design.label().to_string(),
                r.seed.to_string(),
                fmt(r.param_error),
                fmt(cv.map(|c| c[0])),
                fmt(cv.map(|c| c[1])),
                fmt(cv.map(|c| c[2])),
                fmt(cv.map(|c| c[3])),
                r.degenerate.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Metrics capped for display; degenerate values are written at the cap.
    pub fn write_plot_csv<W: Write>(&self, caps: &PlotCaps, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "design", "param_error", "cv_u", "cv_v", "cv_r", "cv_norm"])?;
        for r in &self.records {
            let cap = |v: Option<f64>, c: f64| v.map_or(c, |x| x.min(c)).to_string();
            w.write_record([
                r.run.to_string(),
                r.design.label().to_string(),
                cap(r.param_error, caps.param_error),
                cap(r.cv.map(|c| c.rmse[0]), caps.cv_dof[0]),
                cap(r.cv.map(|c| c.rmse[1]), caps.cv_dof[1]),
                cap(r.cv.map(|c| c.rmse[2]), caps.cv_dof[2]),
                cap(r.cv.map(|c| c.norm), caps.cv_norm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deterministic per-run seed mixing.
pub fn run_seed(base: u64, run: usize, design: usize) -> u64 {
    let mut z = base ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((design as u64) << 56);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// One identification run on a given input.
pub fn evaluate_run(cfg: &HarnessConfig, input: &ExperimentInput, seed: u64, validation: &[crate::sim::Tau]) -> (Option<f64>, Option<CvResult>, Option<String>) {
    let setup = IdentifySetup { params: &cfg.params, nominal: &cfg.nominal, demean: cfg.demean, initial: BodyVelocity::ZERO };
    let dist = cfg.disturbance.with_seed(seed);
    match experiment::simulate_and_identify(input, &setup, &dist) {
        Err(e) => (None, None, Some(e.to_string())),
        Ok((_, est)) => {
            let err = experiment::param_error_norm(&est.theta_hat, &cfg.params.to_theta());
            let err = err.is_finite().then_some(err);
            match experiment::cv_validate(&est.theta_hat, validation, &cfg.params) {
                Ok(cv) => (err, Some(cv), None),
                Err(e) => (err, None, Some(e.to_string())),
            }
        }
    }
}

/// Runs every configured design `cfg.monte_carlo.runs` times.
pub fn run_monte_carlo(
    cfg: &HarnessConfig,
    lib: &PrimitiveLibrary,
    optimized_fractions: Option<&[f64]>,
) -> Result<MonteCarloReport, HarnessError> {
    let mc = &cfg.monte_carlo;
    let total_n = cfg.design.total_n;
    let validation = cfg.validation.signal();
    let optimized = match optimized_fractions {
        Some(f) if f.len() == lib.len() => Some(experiment::fractions_input(lib, f, total_n)),
        Some(f) => {
            return Err(HarnessError::new(
                Stage::MonteCarlo,
                format!("allocation has {} fractions for {} primitives", f.len(), lib.len()),
            ))
        }
        None => None,
    };
    let uniform = experiment::fractions_input(lib, &vec![1.0 / lib.len() as f64; lib.len()], total_n);

    let mut records = Vec::with_capacity(mc.runs * mc.designs.len());
    for run in 0..mc.runs {
        for (di, &design) in mc.designs.iter().enumerate() {
            let seed = run_seed(cfg.seed, run, di);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = match design {
                DesignKind::Optimized => optimized.clone().ok_or_else(|| {
                    HarnessError::new(Stage::MonteCarlo, "optimized design requested without an allocation")
                })?,
                DesignKind::Uniform => uniform.clone(),
                DesignKind::Random => experiment::random_input(lib, mc.random_segments, mc.random_segment_len, &mut rng),
            };
            let dist_seed = rng.next_u64();
            let (param_error, cv, degenerate) = evaluate_run(cfg, &input, dist_seed, &validation);
            records.push(RunRecord { run, design, seed: dist_seed, segment_ids: input.segment_ids, param_error, cv, degenerate });
        }
    }

    let summaries = mc
        .designs
        .iter()
        .map(|&design| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.design == design).collect();
            let n = mine.len().max(1) as f64;
            let below_p = mine.iter().filter(|r| r.param_error.is_some_and(|e| e < mc.param_threshold)).count();
            let below_cv = mine.iter().filter(|r| r.cv.is_some_and(|c| c.norm < mc.cv_threshold)).count();
            DesignSummary {
                design,
                runs: mine.len(),
                degenerate: mine.iter().filter(|r| r.degenerate.is_some()).count(),
                fraction_param_below: below_p as f64 / n,
                fraction_cv_below: below_cv as f64 / n,
                median_param_error: median(mine.iter().filter_map(|r| r.param_error).collect()),
                median_cv_norm: median(mine.iter().filter_map(|r| r.cv.map(|c| c.norm)).collect()),
            }
        })
        .collect();

    Ok(MonteCarloReport {
        normalization: NORMALIZATION.to_string(),
        runs: mc.runs,
        total_n,
        param_threshold: mc.param_threshold,
        cv_threshold: mc.cv_threshold,
        optimized_fractions: optimized_fractions.map(<[f64]>::to_vec),
        summaries,
        records,
    })
}
