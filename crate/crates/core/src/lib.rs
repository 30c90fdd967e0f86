//! System identification of a surface vessel from scheduled sub-experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod primitives;
pub mod sim;
pub mod regression;
pub mod estimator;
pub mod design;
pub mod planner;
pub mod harness;

pub use design::{Allocation, InfoMode, InfoSummary, Schedule};
pub use estimator::{iv_estimate, ThetaEstimate};
pub use harness::{HarnessConfig, HarnessError, Stage};
pub use planner::{astar_plan, OccupancyMap, Plan};
pub use primitives::{ExperimentPrimitive, PrimitiveLibrary};
pub use sim::{simulate, BodyVelocity, DisturbanceConfig, Tau, Trajectory, VesselParams};
