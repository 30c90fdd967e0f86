//! Discrete-time 3-DOF second-order modulus vessel model.
//!
//! State is the body-frame velocity `(u, v, r)`. One call to [`step_dynamics`]
//! advances the surge, sway and yaw-rate update equations by one sample,
//! using velocities relative to the ocean current in the damping and
//! coupling terms (except the pure yaw damping, which uses `r` directly).

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Generalized force `(τ1, τ2, τ3)`: surge force, sway force, yaw moment.
pub type Tau = [f64; 3];

/// Reference sample rate of the model-scale scenario, Hz.
pub const REFERENCE_SAMPLE_RATE: f64 = 8.0;

/// Default bound on any state magnitude before a simulation is aborted.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite value in `{field}`")]
    NonFinite { field: &'static str },
    #[error("simulation diverged at step {step}: |state| exceeded {bound}")]
    Diverged { step: usize, bound: f64 },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
}

/// Hydrodynamic and actuation coefficients of the discrete-time model.
///
/// The order of [`VesselParams::to_theta`] is the parameter vector order used
/// by the regression: `[x_u, x_uu, x_vr, x_tau, y_v, y_ur, y_tau, n_r, n_uv, n_tau]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselParams {
    pub x_u: f64,
    pub x_uu: f64,
    pub x_vr: f64,
    pub x_tau: f64,
    pub y_v: f64,
    pub y_ur: f64,
    pub y_tau: f64,
    pub n_r: f64,
    pub n_uv: f64,
    pub n_tau: f64,
}

impl VesselParams {
    pub const NAMES: [&'static str; 10] = [
        "x_u", "x_uu", "x_vr", "x_tau", "y_v", "y_ur", "y_tau", "n_r", "n_uv", "n_tau",
    ];

    /// Coefficients of the small-scale reference ship sampled at 8 Hz.
    pub fn reference() -> Self {
        Self {
            x_u: -0.06,
            x_uu: -0.01,
            x_vr: 0.08,
            x_tau: 1.4e-5,
            y_v: -0.1,
            y_ur: -0.006,
            y_tau: 1.4e-5,
            n_r: -0.35,
            n_uv: -0.03,
            n_tau: 3e-4,
        }
    }

    pub fn to_theta(&self) -> [f64; 10] {
        [
            self.x_u, self.x_uu, self.x_vr, self.x_tau, self.y_v, self.y_ur, self.y_tau, self.n_r,
            self.n_uv, self.n_tau,
        ]
    }

    pub fn from_theta(theta: &[f64]) -> Self {
        assert_eq!(theta.len(), 10, "vessel parameter vector must have 10 entries");
        Self {
            x_u: theta[0],
            x_uu: theta[1],
            x_vr: theta[2],
            x_tau: theta[3],
            y_v: theta[4],
            y_ur: theta[5],
            y_tau: theta[6],
            n_r: theta[7],
            n_uv: theta[8],
            n_tau: theta[9],
        }
    }

    /// Damping strictly negative and input gains strictly positive.
    pub fn is_passively_stable(&self) -> bool {
        self.x_u < 0.0
            && self.x_uu < 0.0
            && self.y_v < 0.0
            && self.n_r < 0.0
            && self.x_tau > 0.0
            && self.y_tau > 0.0
            && self.n_tau > 0.0
    }

    /// Input gains `(x_tau, y_tau, n_tau)`.
    pub fn input_gains(&self) -> [f64; 3] {
        [self.x_tau, self.y_tau, self.n_tau]
    }

    /// Unforced increment of each channel at `vel` with no current.
    pub fn drift(&self, vel: &BodyVelocity) -> [f64; 3] {
        let BodyVelocity { u, v, r } = *vel;
        [
            self.x_u * u + self.x_uu * u * u.abs() + self.x_vr * v * r,
            self.y_v * v + self.y_ur * u * r,
            self.n_r * r + self.n_uv * u * v,
        ]
    }

    fn check_finite(&self) -> Result<(), SimError> {
        for (value, name) in self.to_theta().iter().zip(Self::NAMES) {
            if !value.is_finite() {
                return Err(SimError::NonFinite { field: name });
            }
        }
        Ok(())
    }
}

impl Default for VesselParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Body-frame velocity: surge `u` (m/s), sway `v` (m/s), yaw rate `r` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl BodyVelocity {
    pub const ZERO: Self = Self { u: 0.0, v: 0.0, r: 0.0 };

    pub fn new(u: f64, v: f64, r: f64) -> Self {
        Self { u, v, r }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.u, self.v, self.r]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self { u: a[0], v: a[1], r: a[2] }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.abs().max(self.v.abs()).max(self.r.abs())
    }

    fn check_finite(&self, prefix: &'static [&'static str; 3]) -> Result<(), SimError> {
        for (value, name) in self.as_array().iter().zip(prefix) {
            if !value.is_finite() {
                return Err(SimError::NonFinite { field: name });
            }
        }
        Ok(())
    }
}

/// Planar pose. `psi` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi: wrap_angle(psi) }
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// How the spread values of a [`DisturbanceConfig`] are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadKind {
    #[default]
    Variance,
    StdDev,
}

/// Ocean current, measurement noise and (optional) process noise.
///
/// Spreads are variances unless `spread_kind` says otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceConfig {
    /// Spread of each current component `u_c`, `v_c`.
    pub current: f64,
    /// Spread of the measurement noise on each output channel.
    pub measurement: f64,
    /// Spread of the additive process noise `w(k)` on each state.
    #[serde(default)]
    pub process: f64,
    #[serde(default)]
    pub spread_kind: SpreadKind,
    /// Draw the current once per simulation instead of once per step.
    #[serde(default)]
    pub constant_current: bool,
    pub seed: u64,
}

impl DisturbanceConfig {
    /// No disturbances at all.
    pub fn none() -> Self {
        Self {
            current: 0.0,
            measurement: 0.0,
            process: 0.0,
            spread_kind: SpreadKind::Variance,
            constant_current: false,
            seed: 0,
        }
    }

    /// Current and measurement noise variance 0.025, as in the reference study.
    pub fn reference(seed: u64) -> Self {
        Self { current: 0.025, measurement: 0.025, seed, ..Self::none() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn std_of(&self, spread: f64) -> f64 {
        match self.spread_kind {
            SpreadKind::Variance => spread.sqrt(),
            SpreadKind::StdDev => spread,
        }
    }

    pub fn current_std(&self) -> f64 {
        self.std_of(self.current)
    }

    pub fn measurement_std(&self) -> f64 {
        self.std_of(self.measurement)
    }

    pub fn process_std(&self) -> f64 {
        self.std_of(self.process)
    }

    pub fn is_silent(&self) -> bool {
        self.current == 0.0 && self.measurement == 0.0 && self.process == 0.0
    }

    fn validate(&self) -> Result<(), SimError> {
        for (value, name) in [
            (self.current, "disturbance.current"),
            (self.measurement, "disturbance.measurement"),
            (self.process, "disturbance.process"),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(SimError::NonFinite { field: name });
            }
        }
        Ok(())
    }
}

/// Disturbance acting on one transition `x(k) -> x(k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDisturbance {
    pub u_c: f64,
    pub v_c: f64,
    pub w: [f64; 3],
}

impl StepDisturbance {
    pub const NONE: Self = Self { u_c: 0.0, v_c: 0.0, w: [0.0; 3] };
}

/// Seeded generator of disturbance draws.
///
/// Each step draws, in order: measurement noise `e(k)` (3), current
/// `(u_c, v_c)` (2, skipped after the first step in constant-current mode),
/// process noise `w(k)` (3). Zero spreads still consume draws so that the
/// stream layout does not depend on the configuration.
pub struct DisturbanceSource {
    rng: ChaCha8Rng,
    current_std: f64,
    meas_std: f64,
    process_std: f64,
    constant_current: Option<(f64, f64)>,
    freeze_current: bool,
}

impl DisturbanceSource {
    pub fn new(cfg: &DisturbanceConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            current_std: cfg.current_std(),
            meas_std: cfg.measurement_std(),
            process_std: cfg.process_std(),
            constant_current: None,
            freeze_current: cfg.constant_current,
        }
    }

    fn normal(&mut self, std: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        std * z
    }

    /// Draws measurement noise for `y(k)` and the disturbance of the transition out of `k`.
    pub fn draw(&mut self) -> ([f64; 3], StepDisturbance) {
        let e = [self.normal(self.meas_std), self.normal(self.meas_std), self.normal(self.meas_std)];
        let (u_c, v_c) = match self.constant_current {
            Some(c) => c,
            None => {
                let c = (self.normal(self.current_std), self.normal(self.current_std));
                if self.freeze_current {
                    self.constant_current = Some(c);
                }
                c
            }
        };
        let w = [
            self.normal(self.process_std),
            self.normal(self.process_std),
            self.normal(self.process_std),
        ];
        (e, StepDisturbance { u_c, v_c, w })
    }
}

const STATE_FIELDS: [&str; 3] = ["state.u", "state.v", "state.r"];

/// One step of the surge, sway and yaw-rate update equations.
pub fn step_dynamics(
    state: &BodyVelocity,
    tau: &Tau,
    params: &VesselParams,
    dist: &StepDisturbance,
) -> Result<BodyVelocity, SimError> {
    state.check_finite(&STATE_FIELDS)?;
    for (value, name) in tau.iter().zip(["tau1", "tau2", "tau3"]) {
        if !value.is_finite() {
            return Err(SimError::NonFinite { field: name });
        }
    }
    params.check_finite()?;
    for (value, name) in [
        (dist.u_c, "disturbance.u_c"),
        (dist.v_c, "disturbance.v_c"),
        (dist.w[0], "disturbance.w1"),
        (dist.w[1], "disturbance.w2"),
        (dist.w[2], "disturbance.w3"),
    ] {
        if !value.is_finite() {
            return Err(SimError::NonFinite { field: name });
        }
    }
    Ok(step_unchecked(state, tau, params, dist))
}

#[inline]
fn step_unchecked(
    s: &BodyVelocity,
    tau: &Tau,
    p: &VesselParams,
    d: &StepDisturbance,
) -> BodyVelocity {
    let ur = s.u - d.u_c;
    let vr = s.v - d.v_c;
    let r = s.r;
    BodyVelocity {
        u: s.u + p.x_u * ur + p.x_uu * ur * ur.abs() + p.x_vr * vr * r + p.x_tau * tau[0] + d.w[0],
        v: s.v + p.y_v * vr + p.y_ur * ur * r + p.y_tau * tau[1] + d.w[1],
        r: s.r + p.n_r * r + p.n_uv * ur * vr + p.n_tau * tau[2] + d.w[2],
    }
}

/// Simulated trajectory: true states and measured outputs, one per input sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<BodyVelocity>,
    pub outputs: Vec<[f64; 3]>,
    pub inputs: Vec<Tau>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Writes `k,u,v,r,y1,y2,y3,tau1,tau2,tau3` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "u", "v", "r", "y1", "y2", "y3", "tau1", "tau2", "tau3"])?;
        for (k, ((s, y), t)) in self.states.iter().zip(&self.outputs).zip(&self.inputs).enumerate() {
            w.write_record(&[
                k.to_string(),
                s.u.to_string(),
                s.v.to_string(),
                s.r.to_string(),
                y[0].to_string(),
                y[1].to_string(),
                y[2].to_string(),
                t[0].to_string(),
                t[1].to_string(),
                t[2].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulation options that are not part of the vessel or disturbance description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub divergence_bound: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { divergence_bound: DEFAULT_DIVERGENCE_BOUND }
    }
}

/// Simulates `x(k+1) = f(x(k), τ(k)) + w(k)`, `y(k) = x(k) + e(k)` over the inputs.
///
/// The returned trajectory has one state and one output per input sample,
/// starting with `initial` at `k = 0`.
pub fn simulate(
    initial: &BodyVelocity,
    inputs: &[Tau],
    params: &VesselParams,
    dist: &DisturbanceConfig,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    if inputs.is_empty() {
        return Err(SimError::EmptyInput);
    }
    initial.check_finite(&["initial.u", "initial.v", "initial.r"])?;
    params.check_finite()?;
    dist.validate()?;
    for t in inputs {
        for (value, name) in t.iter().zip(["tau1", "tau2", "tau3"]) {
            if !value.is_finite() {
                return Err(SimError::NonFinite { field: name });
            }
        }
    }

    let silent = dist.is_silent();
    let mut source = DisturbanceSource::new(dist);
    let mut states = Vec::with_capacity(inputs.len());
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut x = *initial;
    for (k, tau) in inputs.iter().enumerate() {
        if !(x.max_abs() <= opts.divergence_bound) {
            return Err(SimError::Diverged { step: k, bound: opts.divergence_bound });
        }
        let (e, d) = if silent { ([0.0; 3], StepDisturbance::NONE) } else { source.draw() };
        states.push(x);
        outputs.push([x.u + e[0], x.v + e[1], x.r + e[2]]);
        x = step_unchecked(&x, tau, params, &d);
    }
    Ok(Trajectory { states, outputs, inputs: inputs.to_vec() })
}

/// Noise-free simulation shorthand.
pub fn simulate_undisturbed(
    initial: &BodyVelocity,
    inputs: &[Tau],
    params: &VesselParams,
) -> Result<Vec<BodyVelocity>, SimError> {
    simulate(initial, inputs, params, &DisturbanceConfig::none(), &SimOptions::default())
        .map(|t| t.states)
}

/// Azimuth thruster command: magnitudes `n_i` and angles `alpha_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrusterCommand {
    pub n1: f64,
    pub n2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ThrusterCommand {
    pub fn new(n1: f64, alpha1: f64, n2: f64, alpha2: f64) -> Self {
        Self { n1, n2, alpha1: wrap_angle(alpha1), alpha2: wrap_angle(alpha2) }
    }
}

/// Mounting offsets of the two azimuth thrusters, m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorGeometry {
    pub lx1: f64,
    pub ly1: f64,
    pub lx2: f64,
    pub ly2: f64,
}

/// Static force model of two azimuth thrusters.
pub fn thruster_forces(cmd: &ThrusterCommand, geom: &ActuatorGeometry) -> Result<Tau, SimError> {
    for (value, name) in [
        (cmd.n1, "n1"),
        (cmd.n2, "n2"),
        (cmd.alpha1, "alpha1"),
        (cmd.alpha2, "alpha2"),
        (geom.lx1, "lx1"),
        (geom.ly1, "ly1"),
        (geom.lx2, "lx2"),
        (geom.ly2, "ly2"),
    ] {
        if !value.is_finite() {
            return Err(SimError::NonFinite { field: name });
        }
    }
    let mut tau = [0.0; 3];
    for (n, alpha, lx, ly) in [
        (cmd.n1, cmd.alpha1, geom.lx1, geom.ly1),
        (cmd.n2, cmd.alpha2, geom.lx2, geom.ly2),
    ] {
        let (s, c) = alpha.sin_cos();
        tau[0] += n * c;
        tau[1] += n * s;
        tau[2] += ly * n * c + lx * n * s;
    }
    Ok(tau)
}

/// Planar rigid-body kinematics, forward Euler over `dt`.
pub fn kinematics_step(pose: &Pose, vel: &BodyVelocity, dt: f64) -> Result<Pose, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::BadTimeStep(dt));
    }
    let (s, c) = pose.psi.sin_cos();
    Ok(Pose {
        x: pose.x + dt * (vel.u * c - vel.v * s),
        y: pose.y + dt * (vel.u * s + vel.v * c),
        psi: wrap_angle(pose.psi + dt * vel.r),
    })
}

/// Scenario file: everything needed for a single simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub params: VesselParams,
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub initial: BodyVelocity,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    pub inputs: Vec<Tau>,
    #[serde(default)]
    pub options: SimOptions,
}

fn default_sample_rate() -> f64 {
    REFERENCE_SAMPLE_RATE
}

impl Scenario {
    pub fn run(&self) -> Result<Trajectory, SimError> {
        simulate(&self.initial, &self.inputs, &self.params, &self.disturbance, &self.options)
    }
}
