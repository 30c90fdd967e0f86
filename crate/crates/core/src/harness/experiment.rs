//! Building experiment inputs, identifying from them and cross-validating the result.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::largest_remainder;
use crate::estimator::{self, EstimateError, ThetaEstimate};
use crate::primitives::PrimitiveLibrary;
use crate::regression::{self, DemeanMode, NominalModel, RegressionError};
use crate::sim::{self, BodyVelocity, DisturbanceConfig, SimError, SimOptions, Tau, Trajectory, VesselParams};

/// Input signal together with the lengths of its consecutive sub-experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInput {
    /// Library id of each segment.
    pub segment_ids: Vec<usize>,
    pub segment_lens: Vec<usize>,
    pub signal: Vec<Tau>,
}

impl ExperimentInput {
    fn push(&mut self, id: usize, chunk: &[Tau]) {
        self.segment_ids.push(id);
        self.segment_lens.push(chunk.len());
        self.signal.extend_from_slice(chunk);
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }
}

/// Concatenates `counts[q]` samples of every primitive, in library order,
/// restarting a primitive's signal whenever it is exhausted.
pub fn allocation_input(lib: &PrimitiveLibrary, counts: &[usize]) -> ExperimentInput {
    let mut out = ExperimentInput { segment_ids: vec![], segment_lens: vec![], signal: vec![] };
    for (p, &n) in lib.primitives.iter().zip(counts) {
        let len = p.duration().max(1);
        let mut left = n;
        while left > 0 {
            let m = left.min(len);
            out.push(p.id, &p.input_signal[..m]);
            left -= m;
        }
    }
    out
}

/// Integer counts for fractions of `total`, then [`allocation_input`].
pub fn fractions_input(lib: &PrimitiveLibrary, fractions: &[f64], total: usize) -> ExperimentInput {
    let counts: Vec<f64> = fractions.iter().map(|r| r * total as f64).collect();
    allocation_input(lib, &largest_remainder(&counts, total))
}

/// `segments` leading chunks of `segment_len` samples from uniformly drawn primitives.
pub fn random_input<R: Rng>(lib: &PrimitiveLibrary, segments: usize, segment_len: usize, rng: &mut R) -> ExperimentInput {
    let mut out = ExperimentInput { segment_ids: vec![], segment_lens: vec![], signal: vec![] };
    for _ in 0..segments {
        let p = &lib.primitives[rng.random_range(0..lib.len())];
        let m = segment_len.min(p.duration());
        out.push(p.id, &p.input_signal[..m]);
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdentifyError {
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("regression: {0}")]
    Regression(#[from] RegressionError),
    #[error("estimation: {0}")]
    Estimate(#[from] EstimateError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifySetup<'a> {
    pub params: &'a VesselParams,
    pub nominal: &'a NominalModel,
    pub demean: DemeanMode,
    pub initial: BodyVelocity,
}

/// Simulates the true system on the input, then estimates with nominal-model instruments.
pub fn simulate_and_identify(
    input: &ExperimentInput,
    setup: &IdentifySetup<'_>,
    dist: &DisturbanceConfig,
) -> Result<(Trajectory, ThetaEstimate), IdentifyError> {
    let traj = sim::simulate(&setup.initial, &input.signal, setup.params, dist, &SimOptions::default())?;
    let est = identify(&traj.outputs, &traj.inputs, &input.segment_lens, setup.nominal, setup.demean)?;
    Ok((traj, est))
}

/// IV estimate from measured outputs; the nominal simulation starts at the first measurement.
pub fn identify(
    y: &[[f64; 3]],
    tau: &[Tau],
    segment_lens: &[usize],
    nominal: &NominalModel,
    demean: DemeanMode,
) -> Result<ThetaEstimate, IdentifyError> {
    let records = regression::build_regressors(y, tau)?;
    let y0 = y.first().ok_or(RegressionError::Empty)?;
    let instruments = regression::generate_instruments(tau, nominal, &BodyVelocity::from_array(*y0))?;
    let instruments = regression::demean_instruments(&instruments, &record_batches(segment_lens), demean)?;
    Ok(estimator::iv_estimate(&records, &instruments)?)
}

/// Record counts per segment: the last sample of the experiment has no successor.
pub fn record_batches(segment_lens: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = segment_lens.iter().copied().filter(|&n| n > 0).collect();
    match out.last_mut() {
        Some(1) => {
            out.pop();
        }
        Some(last) => *last -= 1,
        None => {}
    }
    out
}

/// `‖(|θ̂_i - θ₀,i| / |θ₀,i|)_i‖₂`.
pub fn param_error_norm(theta_hat: &[f64], theta0: &[f64]) -> f64 {
    theta_hat
        .iter()
        .zip(theta0)
        .map(|(a, b)| ((a - b) / b).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub rmse: [f64; 3],
    pub norm: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CvError {
    #[error("estimated model diverged at step {step}")]
    Diverged { step: usize },
    #[error("true system simulation failed: {0}")]
    Reference(SimError),
    #[error("estimated model is not finite: {0}")]
    NonFinite(SimError),
}

/// Open-loop simulation of the estimated and the true (undisturbed) model
/// from rest on the validation input; RMSE per degree of freedom.
pub fn cv_validate(theta_hat: &[f64], input: &[Tau], truth: &VesselParams) -> Result<CvResult, CvError> {
    let est = VesselParams::from_theta(theta_hat);
    let reference = sim::simulate_undisturbed(&BodyVelocity::ZERO, input, truth).map_err(CvError::Reference)?;
    let model = sim::simulate_undisturbed(&BodyVelocity::ZERO, input, &est).map_err(|e| match e {
        SimError::Diverged { step, .. } => CvError::Diverged { step },
        other => CvError::NonFinite(other),
    })?;
    let mut sq = [0.0; 3];
    for (a, b) in model.iter().zip(&reference) {
        let (a, b) = (a.as_array(), b.as_array());
        for i in 0..3 {
            sq[i] += (a[i] - b[i]).powi(2);
        }
    }
    let n = reference.len() as f64;
    let rmse = sq.map(|s| (s / n).sqrt());
    let norm = rmse.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(CvResult { rmse, norm })
}
