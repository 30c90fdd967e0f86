//! Resampling study over a dataset cut into labelled sub-experiments.
//!
//! Optimized realizations pick a fixed number of sub-experiments per class;
//! random realizations pick the same total uniformly without replacement.
//! Every model is cross-validated against the measured output of all sub-experiments.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{self, ThetaEstimate};
use crate::primitives::PrimitiveLibrary;
use crate::regression::{self, Dataset, DemeanMode, NominalModel};
use crate::sim::{self, BodyVelocity, DisturbanceConfig, SimError, SimOptions, Tau, VesselParams};

use super::experiment::{CvResult, IdentifyError};
use super::montecarlo::run_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResamplingError {
    #[error("dataset has no sub-experiment id column")]
    NoSubIds,
    #[error("sub-experiment {0} has no class label")]
    Unlabelled(usize),
    #[error("class {class}: {wanted} picks requested but only {available} sub-experiments")]
    NotEnough { class: usize, wanted: usize, available: usize },
    #[error("sub-experiment {0} appears in more than one contiguous run")]
    Fragmented(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One contiguous sub-experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SubExperiment {
    pub sub_id: usize,
    pub class: usize,
    pub y: Vec<[f64; 3]>,
    pub tau: Vec<Tau>,
}

/// Splits a dataset at sub-id changes and labels each piece with its class.
pub fn split_subexperiments(ds: &Dataset, classes: &BTreeMap<usize, usize>) -> Result<Vec<SubExperiment>, ResamplingError> {
    let ids = ds.sub_id.as_ref().ok_or(ResamplingError::NoSubIds)?;
    let mut out: Vec<SubExperiment> = Vec::new();
    let mut start = 0;
    for len in ds.batch_lengths() {
        let id = ids[start];
        if out.iter().any(|s| s.sub_id == id) {
            return Err(ResamplingError::Fragmented(id));
        }
        let class = *classes.get(&id).ok_or(ResamplingError::Unlabelled(id))?;
        out.push(SubExperiment { sub_id: id, class, y: ds.y[start..start + len].to_vec(), tau: ds.tau[start..start + len].to_vec() });
        start += len;
    }
    Ok(out)
}

/// IV estimate from independent sub-experiments; instruments restart at each one's first measurement.
pub fn identify_subexperiments(
    subs: &[&SubExperiment],
    nominal: &NominalModel,
    demean: DemeanMode,
) -> Result<ThetaEstimate, IdentifyError> {
    let mut records = Vec::new();
    let mut instruments = Vec::new();
    let mut batches = Vec::new();
    for s in subs {
        let r = regression::build_regressors(&s.y, &s.tau)?;
        let z = regression::generate_instruments(&s.tau, nominal, &BodyVelocity::from_array(s.y[0]))?;
        batches.push(r.len());
        records.extend(r);
        instruments.extend(z);
    }
    let instruments = regression::demean_instruments(&instruments, &batches, demean)?;
    Ok(estimator::iv_estimate(&records, &instruments)?)
}

/// Open-loop RMSE per DOF of the estimated model against measured outputs, over all sub-experiments.
pub fn cv_measured(theta_hat: &[f64], subs: &[SubExperiment]) -> Result<CvResult, SimError> {
    let est = VesselParams::from_theta(theta_hat);
    let mut sq = [0.0; 3];
    let mut n = 0usize;
    for s in subs {
        let model = sim::simulate_undisturbed(&BodyVelocity::from_array(s.y[0]), &s.tau, &est)?;
        for (m, y) in model.iter().zip(&s.y) {
            let m = m.as_array();
            for i in 0..3 {
                sq[i] += (m[i] - y[i]).powi(2);
            }
        }
        n += s.y.len();
    }
    let rmse = sq.map(|v| (v / n.max(1) as f64).sqrt());
    let norm = rmse.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(CvResult { rmse, norm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResamplingConfig {
    pub resamples: usize,
    /// `(class, picks)` for the optimized realization.
    pub optimized_picks: Vec<(usize, usize)>,
    /// Sub-experiments per random realization; defaults to the optimized total.
    pub random_picks: Option<usize>,
    pub seed: u64,
    pub demean: DemeanMode,
}

impl Default for ResamplingConfig {
    fn default() -> Self {
        Self {
            resamples: 500,
            optimized_picks: vec![(1, 1), (6, 3), (9, 1), (11, 1)],
            random_picks: None,
            seed: 0,
            demean: DemeanMode::Complete,
        }
    }
}

impl ResamplingConfig {
    pub fn random_total(&self) -> usize {
        self.random_picks.unwrap_or_else(|| self.optimized_picks.iter().map(|p| p.1).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleRecord {
    pub resample: usize,
    pub optimized: bool,
    pub sub_ids: Vec<usize>,
    pub cv: Option<CvResult>,
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingReport {
    pub resamples: usize,
    pub records: Vec<ResampleRecord>,
}

impl ResamplingReport {
    /// Fraction of realizations of one design with CV norm below `threshold`.
    pub fn fraction_below(&self, optimized: bool, threshold: f64) -> f64 {
        let mine: Vec<_> = self.records.iter().filter(|r| r.optimized == optimized).collect();
        let hits = mine.iter().filter(|r| r.cv.is_some_and(|c| c.norm < threshold)).count();
        hits as f64 / mine.len().max(1) as f64
    }

    pub fn degenerate_fraction(&self, optimized: bool) -> f64 {
        let mine: Vec<_> = self.records.iter().filter(|r| r.optimized == optimized).collect();
        mine.iter().filter(|r| r.degenerate.is_some()).count() as f64 / mine.len().max(1) as f64
    }
}

fn evaluate(picked: &[&SubExperiment], all: &[SubExperiment], nominal: &NominalModel, demean: DemeanMode) -> (Option<CvResult>, Option<String>) {
    match identify_subexperiments(picked, nominal, demean) {
        Err(e) => (None, Some(e.to_string())),
        Ok(est) => match cv_measured(&est.theta_hat, all) {
            Ok(cv) if cv.norm.is_finite() => (Some(cv), None),
            Ok(_) => (None, Some("non-finite CV error".into())),
            Err(e) => (None, Some(e.to_string())),
        },
    }
}

/// Runs the optimized and random realizations `cfg.resamples` times each.
pub fn run_resampling(
    subs: &[SubExperiment],
    nominal: &NominalModel,
    cfg: &ResamplingConfig,
) -> Result<ResamplingReport, ResamplingError> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in subs.iter().enumerate() {
        by_class.entry(s.class).or_default().push(i);
    }
    for &(class, wanted) in &cfg.optimized_picks {
        let available = by_class.get(&class).map_or(0, Vec::len);
        if wanted > available {
            return Err(ResamplingError::NotEnough { class, wanted, available });
        }
    }
    let random_total = cfg.random_total();
    if random_total > subs.len() {
        return Err(ResamplingError::NotEnough { class: 0, wanted: random_total, available: subs.len() });
    }

    let mut records = Vec::with_capacity(2 * cfg.resamples);
    for k in 0..cfg.resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(cfg.seed, k, 0));
        let mut picked: Vec<usize> = Vec::new();
        for &(class, wanted) in &cfg.optimized_picks {
            let pool = &by_class[&class];
            picked.extend(index::sample(&mut rng, pool.len(), wanted).into_iter().map(|j| pool[j]));
        }
        let chosen: Vec<&SubExperiment> = picked.iter().map(|&i| &subs[i]).collect();
        let (cv, degenerate) = evaluate(&chosen, subs, nominal, cfg.demean);
        records.push(ResampleRecord { resample: k, optimized: true, sub_ids: chosen.iter().map(|s| s.sub_id).collect(), cv, degenerate });

        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(cfg.seed, k, 1));
        let chosen: Vec<&SubExperiment> = index::sample(&mut rng, subs.len(), random_total).into_iter().map(|i| &subs[i]).collect();
        let (cv, degenerate) = evaluate(&chosen, subs, nominal, cfg.demean);
        records.push(ResampleRecord { resample: k, optimized: false, sub_ids: chosen.iter().map(|s| s.sub_id).collect(), cv, degenerate });
    }
    Ok(ResamplingReport { resamples: cfg.resamples, records })
}

/// Simulated stand-in for a measured campaign: each primitive is run once with
/// disturbances for `per_class * sub_len` samples (its signal repeated as needed)
/// and cut into `per_class` sub-experiments. Returns the dataset and the class of each sub-id.
pub fn synthetic_campaign(
    lib: &PrimitiveLibrary,
    params: &VesselParams,
    dist: &DisturbanceConfig,
    per_class: usize,
    sub_len: usize,
) -> Result<(Dataset, BTreeMap<usize, usize>), SimError> {
    let mut ds = Dataset { y: vec![], tau: vec![], sub_id: Some(vec![]) };
    let mut classes = BTreeMap::new();
    let total = per_class * sub_len;
    for (qi, p) in lib.primitives.iter().enumerate() {
        let signal: Vec<Tau> = p.input_signal.iter().cycle().take(total).copied().collect();
        let d = dist.with_seed(run_seed(dist.seed, qi, 7));
        let traj = sim::simulate(&p.initial, &signal, params, &d, &SimOptions::default())?;
        for j in 0..per_class {
            let sub = qi * per_class + j;
            classes.insert(sub, p.id);
            let r = j * sub_len..(j + 1) * sub_len;
            ds.y.extend_from_slice(&traj.outputs[r.clone()]);
            ds.tau.extend_from_slice(&traj.inputs[r]);
            ds.sub_id.as_mut().unwrap().extend(std::iter::repeat_n(sub, sub_len));
        }
    }
    Ok((ds, classes))
}
