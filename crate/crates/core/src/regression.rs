//! Predictor regressors, nominal-model instruments and instrument demeaning.
//!
//! The predictor is written in increment form: record `k` pairs the
//! regressor built from `y(k)`, `τ(k)` with the target `y(k+1) - y(k)`.
//! A sequence of `N` samples therefore yields `N - 1` records.

use std::io::{Read, Write};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{self, BodyVelocity, SimError, Tau, VesselParams};

pub const N_THETA: usize = 10;
pub const N_OUT: usize = 3;

pub type RegressorMatrix = SMatrix<f64, N_THETA, N_OUT>;
pub type Output = SVector<f64, N_OUT>;

/// Parameter index ranges of the surge, sway and yaw blocks.
pub const BLOCKS: [(&str, std::ops::Range<usize>); 3] = [("surge", 0..4), ("sway", 4..7), ("yaw", 7..10)];

pub fn block_of(param: usize) -> &'static str {
    BLOCKS.iter().find(|(_, r)| r.contains(&param)).map(|(n, _)| *n).unwrap_or("unknown")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("length mismatch: {outputs} outputs vs {inputs} inputs")]
    LengthMismatch { outputs: usize, inputs: usize },
    #[error("empty sequence")]
    Empty,
    #[error("batch {0} is empty")]
    EmptyBatch(usize),
    #[error("instrument generation failed: nominal model {0}")]
    InstrumentFailure(SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRecord {
    pub k: usize,
    /// Measured output at `k`.
    pub y: [f64; 3],
    /// One-step increment `y(k+1) - y(k)`.
    pub target: Output,
    pub phi: RegressorMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentRecord {
    pub k: usize,
    pub z: RegressorMatrix,
}

/// Block-diagonal regressor for one sample.
pub fn regressor_matrix(y: &[f64; 3], tau: &Tau) -> RegressorMatrix {
    let [y1, y2, y3] = *y;
    let mut m = RegressorMatrix::zeros();
    m[(0, 0)] = y1;
    m[(1, 0)] = y1 * y1.abs();
    m[(2, 0)] = y2 * y3;
    m[(3, 0)] = tau[0];
    m[(4, 1)] = y2;
    m[(5, 1)] = y1 * y3;
    m[(6, 1)] = tau[1];
    m[(7, 2)] = y3;
    m[(8, 2)] = y1 * y2;
    m[(9, 2)] = tau[2];
    m
}

pub fn build_regressors(y: &[[f64; 3]], tau: &[Tau]) -> Result<Vec<RegressionRecord>, RegressionError> {
    if y.len() != tau.len() {
        return Err(RegressionError::LengthMismatch { outputs: y.len(), inputs: tau.len() });
    }
    if y.is_empty() {
        return Err(RegressionError::Empty);
    }
    Ok(y.windows(2)
        .zip(tau)
        .enumerate()
        .map(|(k, (w, t))| RegressionRecord {
            k,
            y: w[0],
            target: Output::from(w[1]) - Output::from(w[0]),
            phi: regressor_matrix(&w[0], t),
        })
        .collect())
}

/// Crude parameter vector used to simulate instruments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalModel {
    pub theta_prime: [f64; N_THETA],
}

impl NominalModel {
    /// Linear nominal model with all coupling and quadratic terms dropped.
    pub fn reference() -> Self {
        Self { theta_prime: [-0.08, 0.0, 0.0, 1e-5, -0.08, 0.0, 1e-5, -0.4, 0.0, 3.5e-4] }
    }

    pub fn exact(params: &VesselParams) -> Self {
        Self { theta_prime: params.to_theta() }
    }

    pub fn params(&self) -> VesselParams {
        VesselParams::from_theta(&self.theta_prime)
    }
}

/// Instruments aligned with [`build_regressors`]: one record per regressor record.
pub fn generate_instruments(
    tau: &[Tau],
    nominal: &NominalModel,
    initial: &BodyVelocity,
) -> Result<Vec<InstrumentRecord>, RegressionError> {
    if tau.is_empty() {
        return Err(RegressionError::Empty);
    }
    let states = sim::simulate_undisturbed(initial, tau, &nominal.params())
        .map_err(RegressionError::InstrumentFailure)?;
    Ok(states
        .iter()
        .zip(tau)
        .take(tau.len() - 1)
        .enumerate()
        .map(|(k, (x, t))| InstrumentRecord { k, z: regressor_matrix(&x.as_array(), t) })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemeanMode {
    None,
    Batchwise,
    #[default]
    Complete,
}

fn mean<const R: usize, const C: usize>(xs: &[SMatrix<f64, R, C>]) -> SMatrix<f64, R, C> {
    xs.iter().fold(SMatrix::zeros(), |acc, x| acc + x) / xs.len() as f64
}

/// Subtracts each batch's own mean.
pub fn demean_batchwise<const R: usize, const C: usize>(
    batches: &[Vec<SMatrix<f64, R, C>>],
) -> Result<Vec<Vec<SMatrix<f64, R, C>>>, RegressionError> {
    batches
        .iter()
        .enumerate()
        .map(|(q, b)| {
            if b.is_empty() {
                return Err(RegressionError::EmptyBatch(q));
            }
            let m = mean(b);
            Ok(b.iter().map(|z| z - m).collect())
        })
        .collect()
}

/// Subtracts the grand mean of all batches, keeping the batch structure.
pub fn demean_complete<const R: usize, const C: usize>(
    batches: &[Vec<SMatrix<f64, R, C>>],
) -> Result<Vec<Vec<SMatrix<f64, R, C>>>, RegressionError> {
    let n: usize = batches.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(RegressionError::Empty);
    }
    let total = batches.iter().flatten().fold(SMatrix::zeros(), |acc: SMatrix<f64, R, C>, z| acc + z);
    let m = total / n as f64;
    Ok(batches.iter().map(|b| b.iter().map(|z| z - m).collect()).collect())
}

/// Demeans instrument records split into consecutive batches of the given lengths.
pub fn demean_instruments(
    instruments: &[InstrumentRecord],
    batch_lengths: &[usize],
    mode: DemeanMode,
) -> Result<Vec<InstrumentRecord>, RegressionError> {
    if mode == DemeanMode::None {
        return Ok(instruments.to_vec());
    }
    let mats: Vec<RegressorMatrix> = instruments.iter().map(|r| r.z).collect();
    let batches = split_by_lengths(&mats, batch_lengths)?;
    let out = match mode {
        DemeanMode::Batchwise => demean_batchwise(&batches)?,
        _ => demean_complete(&batches)?,
    };
    Ok(out
        .into_iter()
        .flatten()
        .zip(instruments)
        .map(|(z, r)| InstrumentRecord { k: r.k, z })
        .collect())
}

/// Splits a sequence into consecutive chunks; lengths must cover it exactly.
pub fn split_by_lengths<T: Clone>(xs: &[T], lengths: &[usize]) -> Result<Vec<Vec<T>>, RegressionError> {
    let total: usize = lengths.iter().sum();
    if total != xs.len() {
        return Err(RegressionError::LengthMismatch { outputs: xs.len(), inputs: total });
    }
    let mut out = Vec::with_capacity(lengths.len());
    let mut start = 0;
    for (q, &n) in lengths.iter().enumerate() {
        if n == 0 {
            return Err(RegressionError::EmptyBatch(q));
        }
        out.push(xs[start..start + n].to_vec());
        start += n;
    }
    Ok(out)
}

/// Per-sample measured data with an optional sub-experiment id column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub y: Vec<[f64; 3]>,
    pub tau: Vec<Tau>,
    pub sub_id: Option<Vec<usize>>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: bad value in `{column}`")]
    BadValue { row: usize, column: &'static str },
}

impl Dataset {
    pub fn from_trajectory(traj: &sim::Trajectory) -> Self {
        Self { y: traj.outputs.clone(), tau: traj.inputs.clone(), sub_id: None }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Lengths of runs of equal consecutive sub-experiment ids.
    pub fn batch_lengths(&self) -> Vec<usize> {
        match &self.sub_id {
            None => vec![self.len()],
            Some(ids) => {
                let mut out: Vec<usize> = Vec::new();
                for (i, id) in ids.iter().enumerate() {
                    if i > 0 && ids[i - 1] == *id {
                        *out.last_mut().unwrap() += 1;
                    } else {
                        out.push(1);
                    }
                }
                out
            }
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["y1", "y2", "y3", "tau1", "tau2", "tau3"];
        if self.sub_id.is_some() {
            header.push("sub_id");
        }
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row: Vec<String> = self.y[k].iter().chain(&self.tau[k]).map(|v| v.to_string()).collect();
            if let Some(ids) = &self.sub_id {
                row.push(ids[k].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, DatasetError> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        const COLS: [&str; 6] = ["y1", "y2", "y3", "tau1", "tau2", "tau3"];
        let mut idx = [0usize; 6];
        for (i, name) in COLS.iter().enumerate() {
            idx[i] = headers.iter().position(|h| h == *name).ok_or(DatasetError::MissingColumn(name))?;
        }
        let sub_idx = headers.iter().position(|h| h == "sub_id");
        let mut ds = Dataset { sub_id: sub_idx.map(|_| Vec::new()), ..Default::default() };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut vals = [0.0; 6];
            for i in 0..6 {
                vals[i] = rec
                    .get(idx[i])
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or(DatasetError::BadValue { row, column: COLS[i] })?;
            }
            ds.y.push([vals[0], vals[1], vals[2]]);
            ds.tau.push([vals[3], vals[4], vals[5]]);
            if let (Some(i), Some(ids)) = (sub_idx, ds.sub_id.as_mut()) {
                ids.push(
                    rec.get(i)
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or(DatasetError::BadValue { row, column: "sub_id" })?,
                );
            }
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{PrimitiveLibrary, SynthesisConfig};
    use proptest::prelude::*;

    #[test]
    fn zero_sample_gives_zero_regressor() {
        assert_eq!(regressor_matrix(&[0.0; 3], &[0.0; 3]), RegressorMatrix::zeros());
    }

    #[test]
    fn surge_block_substitution() {
        let m = regressor_matrix(&[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        assert_eq!(m.column(0).rows(0, 4).iter().copied().collect::<Vec<_>>(), vec![2.0, 4.0, 0.0, 1.0]);
    }

    #[test]
    fn sway_and_yaw_blocks_substitution() {
        let m = regressor_matrix(&[1.0, 1.0, 1.0], &[0.0; 3]);
        assert_eq!(m.column(1).rows(4, 3).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0]);
        assert_eq!(m.column(2).rows(7, 3).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn negative_surge_uses_signed_square() {
        let m = regressor_matrix(&[-3.0, 0.0, 0.0], &[0.0; 3]);
        assert_eq!(m[(1, 0)], -9.0);
    }

    #[test]
    fn build_regressors_rejects_mismatch_and_empty() {
        assert_eq!(
            build_regressors(&[[0.0; 3]; 3], &[[0.0; 3]; 2]),
            Err(RegressionError::LengthMismatch { outputs: 3, inputs: 2 })
        );
        assert_eq!(build_regressors(&[], &[]), Err(RegressionError::Empty));
    }

    #[test]
    fn increments_are_targets() {
        let y = [[1.0, 2.0, 3.0], [1.5, 1.0, 3.25]];
        let recs = build_regressors(&y, &[[0.0; 3]; 2]).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].target, Output::new(0.5, -1.0, 0.25));
    }

    #[test]
    fn zero_input_zero_state_instruments_vanish() {
        let z = generate_instruments(&[[0.0; 3]; 20], &NominalModel::reference(), &BodyVelocity::ZERO).unwrap();
        assert!(z.iter().all(|r| r.z == RegressorMatrix::zeros()));
    }

    #[test]
    fn exact_nominal_instruments_equal_regressors() {
        let p = VesselParams::reference();
        let lib = PrimitiveLibrary::reference(&p, &SynthesisConfig::default()).unwrap();
        let prim = lib.get(7).unwrap();
        let traj = sim::simulate(
            &prim.initial,
            &prim.input_signal,
            &p,
            &sim::DisturbanceConfig::none(),
            &Default::default(),
        )
        .unwrap();
        let recs = build_regressors(&traj.outputs, &traj.inputs).unwrap();
        let z = generate_instruments(&traj.inputs, &NominalModel::exact(&p), &prim.initial).unwrap();
        assert_eq!(recs.len(), z.len());
        for (r, i) in recs.iter().zip(&z) {
            assert_eq!(r.phi, i.z);
        }
    }

    #[test]
    fn nominal_instruments_on_accelerating_primitive_match_replay() {
        let p = VesselParams::reference();
        let lib = PrimitiveLibrary::reference(&p, &SynthesisConfig::default()).unwrap();
        let prim = lib.get(2).unwrap();
        let nominal = NominalModel::reference();
        let z = generate_instruments(&prim.input_signal, &nominal, &prim.initial).unwrap();
        // Replay oracle: hand-rolled linear surge recursion of the nominal model.
        let mut u = prim.initial.u;
        for (k, rec) in z.iter().enumerate() {
            assert!((rec.z[(0, 0)] - u).abs() <= 1e-12 * u.abs().max(1.0));
            assert_eq!(rec.z[(3, 0)], prim.input_signal[k][0]);
            u = u - 0.08 * u + 1e-5 * prim.input_signal[k][0];
        }
        assert!(z.iter().any(|r| r.z != RegressorMatrix::zeros()));
        assert!(z.iter().all(|r| r.z.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn diverging_nominal_reports_failure() {
        let mut nominal = NominalModel::reference();
        nominal.theta_prime[0] = 0.9;
        let err = generate_instruments(&[[0.0; 3]; 200], &nominal, &BodyVelocity::new(1.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, RegressionError::InstrumentFailure(SimError::Diverged { .. })));
    }

    type M1 = SMatrix<f64, 1, 1>;
    fn s(x: f64) -> M1 {
        M1::new(x)
    }

    #[test]
    fn constant_batch_demeans_to_zero() {
        let out = demean_batchwise(&[vec![s(4.0); 5]]).unwrap();
        assert!(out[0].iter().all(|z| z[(0, 0)] == 0.0));
    }

    #[test]
    fn batchwise_zero_per_batch_but_not_overall() {
        let b = vec![vec![s(1.0), s(3.0)], vec![s(10.0), s(20.0), s(60.0)]];
        let out = demean_batchwise(&b).unwrap();
        assert_eq!(out[0], vec![s(-1.0), s(1.0)]);
        assert_eq!(out[1], vec![s(-20.0), s(-10.0), s(30.0)]);
        let before: f64 = b.iter().flatten().map(|z| z[(0, 0)]).sum();
        assert_ne!(before, 0.0);
    }

    #[test]
    fn complete_subtracts_grand_mean() {
        let out = demean_complete(&[vec![s(1.0), s(1.0)], vec![s(3.0), s(3.0)]]).unwrap();
        assert_eq!(out, vec![vec![s(-1.0), s(-1.0)], vec![s(1.0), s(1.0)]]);
    }

    #[test]
    fn zero_mean_input_is_unchanged_by_complete_demeaning() {
        let ut = [0.3, -0.1, -0.2];
        let ubar = 2.0;
        let first: Vec<M1> = ut.iter().map(|x| s(x + ubar)).collect();
        let second: Vec<M1> = ut.iter().map(|x| s(x - ubar)).collect();
        let b = vec![first, second];
        let out = demean_complete(&b).unwrap();
        for (o, i) in out.iter().flatten().zip(b.iter().flatten()) {
            assert!((o[(0, 0)] - i[(0, 0)]).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        assert_eq!(demean_batchwise::<1, 1>(&[vec![s(1.0)], vec![]]), Err(RegressionError::EmptyBatch(1)));
        assert_eq!(demean_complete::<1, 1>(&[vec![]]), Err(RegressionError::Empty));
    }

    #[test]
    fn dataset_csv_roundtrip_and_batches() {
        let ds = Dataset {
            y: vec![[0.1, 0.2, 0.3], [1.0, -2.0, 3.5], [0.0, 0.0, 1e-7]],
            tau: vec![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [-1.0, 4.0, 2.5]],
            sub_id: Some(vec![4, 4, 1]),
        };
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.batch_lengths(), vec![2, 1]);
    }

    #[test]
    fn dataset_missing_column() {
        let err = Dataset::read_csv("y1,y2,y3,tau1,tau2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn("tau3")));
    }

    fn arb_matrix() -> impl Strategy<Value = RegressorMatrix> {
        (prop::array::uniform3(-5.0f64..5.0), prop::array::uniform3(-1e3f64..1e3))
            .prop_map(|(y, t)| regressor_matrix(&y, &t))
    }

    fn arb_batches() -> impl Strategy<Value = Vec<Vec<RegressorMatrix>>> {
        prop::collection::vec(prop::collection::vec(arb_matrix(), 1..8), 1..5)
    }

    proptest! {
        #[test]
        fn demeaning_is_idempotent(b in arb_batches()) {
            let once = demean_batchwise(&b).unwrap();
            let twice = demean_batchwise(&once).unwrap();
            for (x, y) in once.iter().flatten().zip(twice.iter().flatten()) {
                prop_assert!((x - y).abs().max() < 1e-9);
            }
            let once = demean_complete(&b).unwrap();
            let twice = demean_complete(&once).unwrap();
            for (x, y) in once.iter().flatten().zip(twice.iter().flatten()) {
                prop_assert!((x - y).abs().max() < 1e-9);
            }
        }

        #[test]
        fn demeaned_means_vanish_and_structure_kept(b in arb_batches()) {
            let bw = demean_batchwise(&b).unwrap();
            for batch in &bw {
                let scale = 1.0 + batch.iter().map(|z| z.abs().max()).fold(0.0, f64::max);
                prop_assert!(mean(batch).abs().max() <= 1e-12 * scale);
            }
            let c = demean_complete(&b).unwrap();
            let flat: Vec<_> = c.iter().flatten().copied().collect();
            let scale = 1.0 + flat.iter().map(|z| z.abs().max()).fold(0.0, f64::max);
            prop_assert!(mean(&flat).abs().max() <= 1e-12 * scale);
            for z in bw.iter().flatten().chain(c.iter().flatten()) {
                for (i, j) in [(0, 1), (4, 0), (7, 1), (9, 0), (3, 2)] {
                    prop_assert_eq!(z[(i, j)], 0.0);
                }
            }
        }

        #[test]
        fn single_batch_modes_coincide(b in prop::collection::vec(arb_matrix(), 1..10)) {
            let x = demean_batchwise(std::slice::from_ref(&b)).unwrap();
            let y = demean_complete(&[b]).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}
