//! Information summaries, D-optimal allocation and schedule rounding.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::PrimitiveLibrary;
use crate::regression::{self, NominalModel, RegressionError, RegressorMatrix};

/// Default minimum number of samples per primitive for a summary.
pub const DEFAULT_SAMPLE_FLOOR: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("primitive {q}: empty dataset")]
    EmptyPrimitive { q: usize },
    #[error("primitive {q}: {n} samples below the floor of {floor}")]
    TooShort { q: usize, n: usize, floor: usize },
    #[error("primitive {q}: regressor and instrument sequences differ in length or shape")]
    Misaligned { q: usize },
    #[error("primitive {q}: non-finite summary entries")]
    NonFinite { q: usize },
    #[error("no summary for primitive index {0}")]
    MissingSummary(usize),
    #[error("allocation has {got} fractions for {expected} summaries")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("initial allocation is not on the simplex")]
    BadInit,
    #[error("dictionary deficiency: every evaluated allocation gives a singular information matrix")]
    DictionaryDeficiency,
    #[error("empty dictionary")]
    EmptyDictionary,
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

/// Per-primitive time averages of regressor and instrument moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoSummary {
    pub q: usize,
    #[serde(with = "matrix_rows")]
    pub gamma_bar: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub x_bar: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub y_bar: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub z_bar: DMatrix<f64>,
    pub n_samples_used: usize,
}

impl InfoSummary {
    pub fn dim(&self) -> usize {
        self.x_bar.nrows()
    }
}

pub fn to_dmatrix(m: &RegressorMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.nrows(), m.ncols(), m.as_slice())
}

/// `X̄ = mean Φ Zᵀ`, `Ȳ = mean Φ`, `Z̄ = mean Z`, `Γ̄ = X̄ - Ȳ Z̄ᵀ`.
pub fn estimate_summaries(
    q: usize,
    phi: &[DMatrix<f64>],
    z: &[DMatrix<f64>],
    floor: usize,
) -> Result<InfoSummary, DesignError> {
    if phi.is_empty() {
        return Err(DesignError::EmptyPrimitive { q });
    }
    if phi.len() < floor {
        return Err(DesignError::TooShort { q, n: phi.len(), floor });
    }
    let shape = phi[0].shape();
    if z.len() != phi.len() || phi.iter().chain(z).any(|m| m.shape() != shape) {
        return Err(DesignError::Misaligned { q });
    }
    let n = phi.len() as f64;
    let (p, c) = shape;
    let mut x_bar = DMatrix::zeros(p, p);
    let mut y_bar = DMatrix::zeros(p, c);
    let mut z_bar = DMatrix::zeros(p, c);
    for (f, g) in phi.iter().zip(z) {
        x_bar += f * g.transpose();
        y_bar += f;
        z_bar += g;
    }
    x_bar /= n;
    y_bar /= n;
    z_bar /= n;
    let gamma_bar = &x_bar - &y_bar * z_bar.transpose();
    if gamma_bar.iter().chain(y_bar.iter()).chain(z_bar.iter()).any(|v| !v.is_finite()) {
        return Err(DesignError::NonFinite { q });
    }
    Ok(InfoSummary { q, gamma_bar, x_bar, y_bar, z_bar, n_samples_used: phi.len() })
}

/// Summaries of every library primitive: regressors from its expected
/// (noise-free) trajectory, instruments from the nominal model.
pub fn library_summaries(
    lib: &PrimitiveLibrary,
    nominal: &NominalModel,
    floor: usize,
) -> Result<Vec<InfoSummary>, DesignError> {
    lib.primitives
        .iter()
        .map(|p| {
            if p.expected_trajectory.len() < 2 {
                return Err(DesignError::EmptyPrimitive { q: p.id });
            }
            let outputs: Vec<[f64; 3]> = p.expected_trajectory.iter().map(|s| s.as_array()).collect();
            let records = regression::build_regressors(&outputs, &p.input_signal)?;
            let instruments = regression::generate_instruments(&p.input_signal, nominal, &p.initial)?;
            let phi: Vec<DMatrix<f64>> = records.iter().map(|r| to_dmatrix(&r.phi)).collect();
            let z: Vec<DMatrix<f64>> = instruments.iter().map(|r| to_dmatrix(&r.z)).collect();
            estimate_summaries(p.id, &phi, &z, floor)
        })
        .collect()
}

/// Reference-scenario summaries: reference library, true parameters, linear nominal model.
pub fn reference_summaries(lib: &PrimitiveLibrary) -> Result<Vec<InfoSummary>, DesignError> {
    library_summaries(lib, &NominalModel::reference(), DEFAULT_SAMPLE_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoMode {
    /// `T = Σ N_q Γ̄_q`.
    Basic,
    /// `T - S Z̄ᵀ` with `T = Σ N_q X̄_q`, `S = Σ N_q Ȳ_q`, `Z̄ = (1/N) Σ N_q Z̄_q`.
    #[default]
    ZeroMean,
}

fn check_dims(counts: &[f64], summaries: &[InfoSummary]) -> Result<(), DesignError> {
    if summaries.is_empty() {
        return Err(DesignError::EmptyDictionary);
    }
    if counts.len() > summaries.len() {
        return Err(DesignError::MissingSummary(summaries.len()));
    }
    if counts.len() != summaries.len() {
        return Err(DesignError::DimensionMismatch { expected: summaries.len(), got: counts.len() });
    }
    Ok(())
}

/// Predicted information matrix for per-primitive sample counts `N_q`.
pub fn info_matrix(counts: &[f64], summaries: &[InfoSummary], mode: InfoMode) -> Result<DMatrix<f64>, DesignError> {
    check_dims(counts, summaries)?;
    let p = summaries[0].dim();
    Ok(match mode {
        InfoMode::Basic => counts
            .iter()
            .zip(summaries)
            .fold(DMatrix::zeros(p, p), |acc, (&n, s)| acc + &s.gamma_bar * n),
        InfoMode::ZeroMean => {
            let c = summaries[0].y_bar.ncols();
            let total: f64 = counts.iter().sum();
            let mut t = DMatrix::zeros(p, p);
            let mut s_sum = DMatrix::zeros(p, c);
            let mut z_sum = DMatrix::zeros(p, c);
            for (&n, s) in counts.iter().zip(summaries) {
                t += &s.x_bar * n;
                s_sum += &s.y_bar * n;
                z_sum += &s.z_bar * n;
            }
            if total > 0.0 {
                t - s_sum * (z_sum / total).transpose()
            } else {
                t
            }
        }
    })
}

/// `log |det M|`; `-inf` when `M` is singular.
pub fn log_abs_det(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "log_abs_det needs a square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return f64::NEG_INFINITY;
        }
        acc += d.ln();
    }
    acc
}

/// Objective `log |det M(ρ N)|` at fractions `rho`.
pub fn objective(rho: &[f64], total_n: f64, summaries: &[InfoSummary], mode: InfoMode) -> Result<f64, DesignError> {
    let counts: Vec<f64> = rho.iter().map(|r| r * total_n).collect();
    Ok(log_abs_det(&info_matrix(&counts, summaries, mode)?))
}

/// Gradient of the objective with respect to the fractions, `tr(M⁻¹ ∂M/∂ρ_q)`.
///
/// Returns `None` when the information matrix is singular.
pub fn objective_gradient(
    rho: &[f64],
    total_n: f64,
    summaries: &[InfoSummary],
    mode: InfoMode,
) -> Result<Option<Vec<f64>>, DesignError> {
    let counts: Vec<f64> = rho.iter().map(|r| r * total_n).collect();
    let m = info_matrix(&counts, summaries, mode)?;
    let Some(m_inv) = m.clone().lu().try_inverse() else {
        return Ok(None);
    };
    let trace_prod = |d: &DMatrix<f64>| m_inv.component_mul(&d.transpose()).sum();
    let grad = match mode {
        InfoMode::Basic => summaries.iter().map(|s| total_n * trace_prod(&s.gamma_bar)).collect(),
        InfoMode::ZeroMean => {
            let mass: f64 = rho.iter().sum();
            let (p, c) = summaries[0].y_bar.shape();
            let mut y_rho = DMatrix::zeros(p, c);
            let mut z_rho = DMatrix::zeros(p, c);
            for (&r, s) in rho.iter().zip(summaries) {
                y_rho += &s.y_bar * r;
                z_rho += &s.z_bar * r;
            }
            // M(ρ) = N (Σ ρ X̄ - (Σ ρ Ȳ)(Σ ρ Z̄)ᵀ / Σ ρ)
            let z_mean = &z_rho / mass;
            summaries
                .iter()
                .map(|s| {
                    let d = &s.x_bar - &s.y_bar * z_mean.transpose() - &y_rho * (&s.z_bar - &z_mean).transpose() / mass;
                    total_n * trace_prod(&d)
                })
                .collect()
        }
    };
    Ok(Some(grad))
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

pub fn on_simplex(rho: &[f64], tol: f64) -> bool {
    !rho.is_empty() && rho.iter().all(|&r| r >= -tol && r.is_finite()) && (rho.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// Uniform random point on the simplex (flat Dirichlet).
pub fn random_simplex_point(q: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..q).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v: f64| v / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub max_iter: usize,
    pub step_tol: f64,
    /// Random simplex points screened for the second start.
    pub screen_samples: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { starts: 16, max_iter: 500, step_tol: 1e-8, screen_samples: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub fractions: Vec<f64>,
    pub total_n: usize,
    pub objective_value: f64,
    pub mode: InfoMode,
}

impl Allocation {
    /// Relaxed per-primitive sample counts `ρ_q N`.
    pub fn counts(&self) -> Vec<f64> {
        self.fractions.iter().map(|r| r * self.total_n as f64).collect()
    }

    /// Integer counts summing to `total_n` by largest remainder (ties to lower index).
    pub fn integer_counts(&self) -> Vec<usize> {
        largest_remainder(&self.counts(), self.total_n)
    }

    /// Lines like `τ6: 42.0 %` for every primitive with nonzero weight.
    pub fn percentage_report(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for (r, id) in self.fractions.iter().zip(ids) {
            if *r >= 5e-4 {
                out.push_str(&format!("τ{id}: {:.1} %\n", 100.0 * r));
            }
        }
        out
    }
}

pub fn largest_remainder(counts: &[f64], total: usize) -> Vec<usize> {
    let mut n: Vec<usize> = counts.iter().map(|c| c.max(0.0).floor() as usize).collect();
    let assigned: usize = n.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = counts[a] - counts[a].floor();
        let fb = counts[b] - counts[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        n[i] += 1;
    }
    n
}

struct StartResult {
    rho: Vec<f64>,
    value: f64,
}

fn ascend(
    start: Vec<f64>,
    total_n: f64,
    summaries: &[InfoSummary],
    mode: InfoMode,
    cfg: &OptimizerConfig,
) -> Result<Option<StartResult>, DesignError> {
    let mut rho = start;
    let mut value = objective(&rho, total_n, summaries, mode)?;
    if !value.is_finite() {
        return Ok(None);
    }
    let mut alpha: Option<f64> = None;
    for _ in 0..cfg.max_iter {
        let Some(grad) = objective_gradient(&rho, total_n, summaries, mode)? else { break };
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax == 0.0 || !gmax.is_finite() {
            break;
        }
        let mut a = alpha.map_or(1.0 / gmax, |a| a * 2.0);
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = rho.iter().zip(&grad).map(|(r, g)| r + a * g).collect();
            let trial = project_simplex(&trial);
            let ascent: f64 = trial.iter().zip(&rho).zip(&grad).map(|((t, r), g)| (t - r) * g).sum();
            let v = objective(&trial, total_n, summaries, mode)?;
            if v.is_finite() && v >= value + 1e-4 * ascent {
                accepted = Some((trial, v));
                break;
            }
            a *= 0.5;
        }
        let Some((next, v)) = accepted else { break };
        let step: f64 = next.iter().zip(&rho).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        rho = next;
        value = v;
        alpha = Some(a);
        if step < cfg.step_tol {
            break;
        }
    }
    Ok(Some(StartResult { rho, value }))
}

/// Multi-start projected-gradient ascent of `log |det|` over the simplex.
pub fn optimize_allocation(
    summaries: &[InfoSummary],
    total_n: usize,
    mode: InfoMode,
    init: Option<&[f64]>,
    cfg: &OptimizerConfig,
) -> Result<Allocation, DesignError> {
    let q = summaries.len();
    if q == 0 {
        return Err(DesignError::EmptyDictionary);
    }
    let uniform = vec![1.0 / q as f64; q];
    let init = match init {
        Some(r) if r.len() != q => return Err(DesignError::DimensionMismatch { expected: q, got: r.len() }),
        Some(r) if !on_simplex(r, 1e-9) => return Err(DesignError::BadInit),
        Some(r) => r.to_vec(),
        None => uniform,
    };
    let n = total_n as f64;
    if q == 1 {
        let value = objective(&[1.0], n, summaries, mode)?;
        if !value.is_finite() {
            return Err(DesignError::DictionaryDeficiency);
        }
        return Ok(Allocation { fractions: vec![1.0], total_n, objective_value: value, mode });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![init];
    if cfg.starts > 1 {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..cfg.screen_samples {
            let p = random_simplex_point(q, &mut rng);
            let v = objective(&p, n, summaries, mode)?;
            if v.is_finite() && best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, p));
            }
        }
        if let Some((_, p)) = best {
            starts.push(p);
        }
    }
    while starts.len() < cfg.starts {
        starts.push(random_simplex_point(q, &mut rng));
    }

    let mut best: Option<StartResult> = None;
    for start in starts {
        if let Some(r) = ascend(start, n, summaries, mode, cfg)? {
            if best.as_ref().is_none_or(|b| r.value > b.value) {
                best = Some(r);
            }
        }
    }
    let best = best.ok_or(DesignError::DictionaryDeficiency)?;
    Ok(Allocation { fractions: best.rho, total_n, objective_value: best.value, mode })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSegment {
    pub id: usize,
    pub repetitions: usize,
    pub segment_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub segments: Vec<ScheduleSegment>,
    pub total_n: usize,
}

impl Schedule {
    pub fn scheduled_samples(&self) -> usize {
        self.segments.iter().map(|s| s.repetitions * s.segment_len).sum()
    }

    /// Concatenated input: each primitive's first `segment_len` samples, repeated.
    pub fn input_signal(&self, lib: &PrimitiveLibrary) -> Option<Vec<crate::sim::Tau>> {
        let mut out = Vec::with_capacity(self.scheduled_samples());
        for s in &self.segments {
            let p = lib.get(s.id)?;
            let chunk = p.input_signal.get(..s.segment_len)?;
            for _ in 0..s.repetitions {
                out.extend_from_slice(chunk);
            }
        }
        Some(out)
    }
}

fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Rounds an allocation to integer repetitions of segments of the given lengths.
///
/// `ids` label the primitives in allocation order.
pub fn realize_schedule(allocation: &Allocation, segment_lens: &[usize], ids: &[usize]) -> Schedule {
    let total = allocation.total_n as i64;
    let exact: Vec<f64> = allocation
        .counts()
        .iter()
        .zip(segment_lens)
        .map(|(c, &l)| c / l.max(1) as f64)
        .collect();
    let mut n: Vec<i64> = exact.iter().map(|&x| round_half_away(x) as i64).collect();
    let max_len = segment_lens.iter().copied().max().unwrap_or(1) as i64;
    let frac = |i: usize| exact[i] - exact[i].floor();
    loop {
        let sum: i64 = n.iter().zip(segment_lens).map(|(&k, &l)| k * l as i64).sum();
        let dev = sum - total;
        if dev.abs() <= max_len {
            break;
        }
        let pick = if dev < 0 {
            (0..n.len())
                .filter(|&i| (n[i] as f64) <= exact[i])
                .max_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(b.cmp(&a)))
                .or(Some(0))
        } else {
            (0..n.len())
                .filter(|&i| n[i] > 0 && (n[i] as f64) >= exact[i])
                .min_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(a.cmp(&b)))
                .or_else(|| (0..n.len()).find(|&i| n[i] > 0))
        };
        match pick {
            Some(i) => n[i] += if dev < 0 { 1 } else { -1 },
            None => break,
        }
    }
    Schedule {
        segments: n
            .iter()
            .zip(segment_lens)
            .zip(ids)
            .map(|((&k, &l), &id)| ScheduleSegment { id, repetitions: k.max(0) as usize, segment_len: l })
            .collect(),
        total_n: allocation.total_n,
    }
}

/// Default segment lengths for a library: one period for zig-zags, the full signal otherwise.
pub fn natural_segment_lens(lib: &PrimitiveLibrary) -> Vec<usize> {
    lib.primitives.iter().map(|p| p.natural_segment_len()).collect()
}

pub fn dvector(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}
