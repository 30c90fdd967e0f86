//! Instrumental-variable estimation of the parameter vector.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regression::{self, InstrumentRecord, RegressionRecord};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("records and instruments not aligned: {records} vs {instruments}")]
    Misaligned { records: usize, instruments: usize },
    #[error(
        "non-informative data: rank {rank} < {n_theta} from {samples} samples; weakest parameter {weakest_parameter} ({weakest_block})"
    )]
    NonInformative {
        rank: usize,
        n_theta: usize,
        samples: usize,
        weakest_parameter: usize,
        weakest_block: &'static str,
    },
    #[error("non-finite value in data or instruments")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta_hat: Vec<f64>,
    /// Condition number of `A` after row and column equilibration.
    pub condition_number: f64,
    /// Condition number of the raw `A`.
    pub raw_condition_number: f64,
    /// `||b - A θ̂||²`.
    pub residual_norm: f64,
    pub n: usize,
}

/// Accumulated `A = (1/N) Σ Z Φᵀ` and `b = (1/N) Σ Z y`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations<const P: usize> {
    sum_a: SMatrix<f64, P, P>,
    sum_b: SVector<f64, P>,
    n: usize,
}

impl<const P: usize> Default for NormalEquations<P> {
    fn default() -> Self {
        Self { sum_a: SMatrix::zeros(), sum_b: SVector::zeros(), n: 0 }
    }
}

impl<const P: usize> NormalEquations<P> {
    pub fn add<const C: usize>(&mut self, z: &SMatrix<f64, P, C>, phi: &SMatrix<f64, P, C>, y: &SVector<f64, C>) {
        self.sum_a += z * phi.transpose();
        self.sum_b += z * y;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum_a += other.sum_a;
        self.sum_b += other.sum_b;
        self.n += other.n;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn a(&self) -> SMatrix<f64, P, P> {
        self.sum_a / self.n.max(1) as f64
    }

    pub fn b(&self) -> SVector<f64, P> {
        self.sum_b / self.n.max(1) as f64
    }

    /// Solves `A θ = b`; `block` maps a parameter index to a label for error reports.
    pub fn solve(&self, block: impl Fn(usize) -> &'static str) -> Result<ThetaEstimate, EstimateError> {
        let a = DMatrix::from_column_slice(P, P, self.a().as_slice());
        let b = DVector::from_column_slice(self.b().as_slice());
        solve_equilibrated(&a, &b, self.n, block)
    }
}

fn norm_or_one(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x
    } else {
        1.0
    }
}

/// Row and column equilibration followed by an SVD solve.
pub fn solve_equilibrated(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    samples: usize,
    block: impl Fn(usize) -> &'static str,
) -> Result<ThetaEstimate, EstimateError> {
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(EstimateError::NonFinite);
    }
    let p = a.ncols();
    let rows: Vec<f64> = (0..p).map(|i| 1.0 / norm_or_one(a.row(i).norm())).collect();
    let cols: Vec<f64> = (0..p).map(|j| 1.0 / norm_or_one(a.column(j).norm())).collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| a[(i, j)] * rows[i] * cols[j]);
    let scaled_b = DVector::from_fn(p, |i, _| b[i] * rows[i]);

    let svd = scaled.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let threshold = RANK_TOLERANCE * smax;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    if rank < p || smax == 0.0 {
        let v_t = svd.v_t.as_ref().expect("svd computed with v");
        let (weak_idx, _) = sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let direction = v_t.row(weak_idx);
        let (weakest, _) = direction
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
        return Err(EstimateError::NonInformative {
            rank,
            n_theta: p,
            samples,
            weakest_parameter: weakest,
            weakest_block: block(weakest),
        });
    }
    let scaled_theta = svd.solve(&scaled_b, threshold).map_err(|_| EstimateError::NonFinite)?;
    let theta = DVector::from_fn(p, |j, _| scaled_theta[j] * cols[j]);
    let residual = (b - a * &theta).norm_squared();
    let smin = sv.min();
    let raw = a.singular_values();
    let raw_cond = if raw.min() > 0.0 { raw.max() / raw.min() } else { f64::INFINITY };
    Ok(ThetaEstimate {
        theta_hat: theta.iter().copied().collect(),
        condition_number: (smax / smin).max(1.0),
        raw_condition_number: raw_cond.max(1.0),
        residual_norm: residual,
        n: samples,
    })
}

/// Generic IV estimate over per-sample instrument, regressor and output triples.
pub fn iv_estimate_generic<const P: usize, const C: usize>(
    z: &[SMatrix<f64, P, C>],
    phi: &[SMatrix<f64, P, C>],
    y: &[SVector<f64, C>],
    block: impl Fn(usize) -> &'static str,
) -> Result<ThetaEstimate, EstimateError> {
    if z.len() != phi.len() || phi.len() != y.len() {
        return Err(EstimateError::Misaligned { records: phi.len(), instruments: z.len() });
    }
    let mut ne = NormalEquations::<P>::default();
    for ((z, phi), y) in z.iter().zip(phi).zip(y) {
        ne.add(z, phi, y);
    }
    ne.solve(block)
}

pub fn normal_equations(
    records: &[RegressionRecord],
    instruments: &[InstrumentRecord],
) -> Result<NormalEquations<{ regression::N_THETA }>, EstimateError> {
    if records.len() != instruments.len() {
        return Err(EstimateError::Misaligned { records: records.len(), instruments: instruments.len() });
    }
    let mut ne = NormalEquations::default();
    for (r, z) in records.iter().zip(instruments) {
        ne.add(&z.z, &r.phi, &r.target);
    }
    Ok(ne)
}

pub fn iv_estimate(records: &[RegressionRecord], instruments: &[InstrumentRecord]) -> Result<ThetaEstimate, EstimateError> {
    normal_equations(records, instruments)?.solve(regression::block_of)
}

/// Least squares: the IV estimate with the regressors as their own instruments.
pub fn ls_estimate(records: &[RegressionRecord]) -> Result<ThetaEstimate, EstimateError> {
    let mut ne = NormalEquations::<{ regression::N_THETA }>::default();
    for r in records {
        ne.add(&r.phi, &r.phi, &r.target);
    }
    ne.solve(regression::block_of)
}
