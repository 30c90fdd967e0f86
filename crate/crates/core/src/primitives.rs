//! Dictionary of candidate excitation signals.
//!
//! Each primitive is described by a target envelope on `(u, v, r)`. A simple
//! reference controller (model feedforward plus proportional correction,
//! saturated per channel) tracks a reference built from the envelope; the
//! resulting force sequence is frozen and replayed open-loop afterwards.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{self, kinematics_step, BodyVelocity, Pose, SimError, Tau, VesselParams};

/// Fraction of a bound that a trajectory may deviate from it.
pub const ENVELOPE_TOLERANCE: f64 = 0.15;
/// Leading fraction of a primitive excluded from the envelope check.
pub const TRANSIENT_FRACTION: f64 = 0.2;
/// Samples per primitive in the reference dictionary.
pub const DEFAULT_DURATION: usize = 300;
/// Zig-zag period in samples; three full periods fit in the default duration.
pub const DEFAULT_ZIGZAG_PERIOD: usize = 100;
/// Initial surge of zig-zags and spirals relative to their surge level.
pub const CRUISE_START_FRACTION: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("envelope unreachable: channel `{channel}` {detail}")]
    Unreachable { channel: &'static str, detail: String },
    #[error("duration must be at least 1 sample")]
    ZeroDuration,
    #[error("primitive {id} has no expected trajectory")]
    MissingTrajectory { id: usize },
    #[error("library ids must be 1..=Q in order; found {found} at position {position}")]
    BadIds { position: usize, found: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Target for one velocity channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChannelTarget {
    /// Held near a constant value.
    Approx { value: f64 },
    /// Swept between two bounds.
    Range { lo: f64, hi: f64 },
    /// Magnitude kept between two bounds, either sign.
    AbsRange { lo: f64, hi: f64 },
    /// Ramped from one value to another.
    Ramp { from: f64, to: f64 },
}

impl ChannelTarget {
    pub fn zero() -> Self {
        ChannelTarget::Approx { value: 0.0 }
    }

    fn is_zero(&self) -> bool {
        matches!(self, ChannelTarget::Approx { value } if *value == 0.0)
    }

    /// Value the controller starts from.
    fn initial(&self) -> f64 {
        match *self {
            ChannelTarget::Approx { value } => value,
            ChannelTarget::Ramp { from, .. } => from,
            ChannelTarget::Range { .. } | ChannelTarget::AbsRange { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum MotionClass {
    Decelerate,
    Accelerate,
    /// Square-wave sway and yaw-rate references, heading centred on zero.
    ZigZag { period: usize },
    /// Yaw-rate ramp with constant surge and sway references.
    Spiral,
    /// Sway-dominated motion (full-scale dictionary).
    Sway,
}

/// Target envelope of a primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub class: MotionClass,
    pub u: ChannelTarget,
    pub v: ChannelTarget,
    pub r: ChannelTarget,
}

impl Envelope {
    fn channels(&self) -> [(&'static str, ChannelTarget); 3] {
        [("u", self.u), ("v", self.v), ("r", self.r)]
    }

    fn all_zero(&self) -> bool {
        self.u.is_zero() && self.v.is_zero() && self.r.is_zero()
    }

    /// Initial state the reference maneuver starts from.
    ///
    /// Cruise maneuvers start at [`CRUISE_START_FRACTION`] of their surge level.
    pub fn initial_state(&self) -> BodyVelocity {
        let u = match (self.class, self.u) {
            (MotionClass::ZigZag { .. } | MotionClass::Spiral, ChannelTarget::Approx { value }) => {
                CRUISE_START_FRACTION * value
            }
            _ => self.u.initial(),
        };
        BodyVelocity::new(u, self.v.initial(), self.r.initial())
    }
}

/// Gains and saturation of the reference controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Fraction of the tracking error removed per sample, per channel.
    pub gains: [f64; 3],
    /// Symmetric force saturation per channel.
    pub saturation: [f64; 3],
    /// Fraction of the duration over which surge ramps are completed.
    pub ramp_fraction: f64,
    /// Relative square-wave modulation of constant setpoints in cruise maneuvers.
    pub dither: f64,
    /// Dither period in samples; the sway dither lags the surge dither by a quarter period.
    pub dither_period: usize,
    pub sample_rate: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            gains: [0.15, 0.2, 0.3],
            saturation: [12_000.0, 3_000.0, 3_000.0],
            ramp_fraction: 0.6,
            dither: 0.02,
            dither_period: 40,
            sample_rate: sim::REFERENCE_SAMPLE_RATE,
        }
    }
}

/// Candidate sub-experiment: its input signal and expected undisturbed motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPrimitive {
    pub id: usize,
    pub label: String,
    pub envelope: Envelope,
    pub initial: BodyVelocity,
    pub input_signal: Vec<Tau>,
    #[serde(skip)]
    pub expected_trajectory: Vec<BodyVelocity>,
}

impl ExperimentPrimitive {
    pub fn duration(&self) -> usize {
        self.input_signal.len()
    }

    /// Recomputes the expected trajectory from the stored signal.
    pub fn regenerate(&mut self, params: &VesselParams) -> Result<(), SimError> {
        self.expected_trajectory = sim::simulate_undisturbed(&self.initial, &self.input_signal, params)?;
        Ok(())
    }

    /// Sample indices where the maneuver can be cut without breaking a period.
    pub fn breakpoints(&self) -> Vec<usize> {
        match self.envelope.class {
            MotionClass::ZigZag { period } if period > 0 => {
                (1..=self.duration() / period).map(|i| i * period).collect()
            }
            _ => vec![self.duration()],
        }
    }

    /// Natural segment length for scheduling: one period for zig-zags, the whole signal otherwise.
    pub fn natural_segment_len(&self) -> usize {
        self.breakpoints().first().copied().unwrap_or(self.duration()).max(1)
    }
}

/// Ordered dictionary with ids `1..=Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveLibrary {
    pub sample_rate: f64,
    pub primitives: Vec<ExperimentPrimitive>,
}

impl PrimitiveLibrary {
    pub fn new(sample_rate: f64, primitives: Vec<ExperimentPrimitive>) -> Result<Self, SynthesisError> {
        for (position, p) in primitives.iter().enumerate() {
            if p.id != position + 1 {
                return Err(SynthesisError::BadIds { position, found: p.id });
            }
        }
        Ok(Self { sample_rate, primitives })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn get(&self, id: usize) -> Option<&ExperimentPrimitive> {
        id.checked_sub(1).and_then(|i| self.primitives.get(i))
    }

    /// Synthesizes the eleven reference primitives of the model-scale study.
    pub fn reference(params: &VesselParams, cfg: &SynthesisConfig) -> Result<Self, SynthesisError> {
        let primitives = reference_envelopes()
            .into_iter()
            .enumerate()
            .map(|(i, (label, env))| synthesize_primitive(i + 1, label, &env, params, DEFAULT_DURATION, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(cfg.sample_rate, primitives)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Parses a library and regenerates every expected trajectory.
    pub fn from_json(text: &str, params: &VesselParams) -> Result<Self, LibraryLoadError> {
        let mut lib: PrimitiveLibrary = serde_json::from_str(text)?;
        lib = Self::new(lib.sample_rate, lib.primitives)?;
        for p in &mut lib.primitives {
            p.regenerate(params).map_err(SynthesisError::from)?;
        }
        Ok(lib)
    }
}

#[derive(Debug, Error)]
pub enum LibraryLoadError {
    #[error("library parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

fn approx(value: f64) -> ChannelTarget {
    ChannelTarget::Approx { value }
}

fn range(lo: f64, hi: f64) -> ChannelTarget {
    ChannelTarget::Range { lo, hi }
}

fn ramp(from: f64, to: f64) -> ChannelTarget {
    ChannelTarget::Ramp { from, to }
}

/// Envelopes of the eleven model-scale primitives (m/s, rad/s).
pub fn reference_envelopes() -> Vec<(&'static str, Envelope)> {
    let zz = MotionClass::ZigZag { period: DEFAULT_ZIGZAG_PERIOD };
    let zero = ChannelTarget::zero();
    vec![
        ("decelerating", Envelope { class: MotionClass::Decelerate, u: ramp(1.0, 0.0), v: zero, r: zero }),
        ("accelerating", Envelope { class: MotionClass::Accelerate, u: ramp(0.0, 1.0), v: zero, r: zero }),
        ("slow flat zig-zag", Envelope { class: zz, u: approx(0.35), v: range(-0.1, 0.1), r: range(-0.2, 0.2) }),
        ("moderate flat zig-zag", Envelope { class: zz, u: approx(0.8), v: range(-0.1, 0.1), r: range(-0.2, 0.2) }),
        ("fast flat zig-zag", Envelope { class: zz, u: approx(1.15), v: range(-0.1, 0.1), r: range(-0.2, 0.2) }),
        ("slow steep zig-zag", Envelope { class: zz, u: approx(0.35), v: range(-0.15, 0.15), r: range(-0.35, 0.35) }),
        ("moderate steep zig-zag", Envelope { class: zz, u: approx(0.7), v: range(-0.15, 0.15), r: range(-0.35, 0.35) }),
        ("fast steep zig-zag", Envelope { class: zz, u: approx(1.0), v: range(-0.15, 0.15), r: range(-0.35, 0.35) }),
        ("slow spiral", Envelope { class: MotionClass::Spiral, u: approx(0.4), v: approx(0.05), r: ramp(0.0, -0.6) }),
        ("moderate spiral", Envelope { class: MotionClass::Spiral, u: approx(0.75), v: approx(0.125), r: ramp(0.0, -0.6) }),
        ("fast spiral", Envelope { class: MotionClass::Spiral, u: approx(1.0), v: approx(0.2), r: ramp(0.0, -0.6) }),
    ]
}

/// Envelope definitions of the full-scale dictionary (ids 12..=20, 1 Hz).
///
/// Shipped without reference signals; zig-zag periods are in samples at 1 Hz.
pub fn full_scale_envelopes() -> Vec<(usize, &'static str, Envelope)> {
    let zero = ChannelTarget::zero();
    let abs = |lo, hi| ChannelTarget::AbsRange { lo, hi };
    let zz = |period, u| Envelope {
        class: MotionClass::ZigZag { period },
        u: approx(u),
        v: range(-0.5, 0.5),
        r: range(-0.03, 0.03),
    };
    vec![
        (12, "surge accelerations/decelerations", Envelope { class: MotionClass::Accelerate, u: range(0.0, 3.5), v: zero, r: zero }),
        (13, "sway accelerations/decelerations", Envelope { class: MotionClass::Sway, u: zero, v: range(-1.0, 1.0), r: zero }),
        (14, "slow sway", Envelope { class: MotionClass::Sway, u: zero, v: abs(0.5, 0.8), r: zero }),
        (15, "moderate sway", Envelope { class: MotionClass::Sway, u: zero, v: abs(0.9, 0.9), r: zero }),
        (16, "fast sway", Envelope { class: MotionClass::Sway, u: zero, v: abs(1.1, 1.2), r: zero }),
        (17, "slow high-frequency zig-zag", zz(30, 3.0)),
        (18, "fast high-frequency zig-zag", zz(30, 4.0)),
        (19, "slow low-frequency zig-zag", zz(100, 3.0)),
        (20, "fast low-frequency zig-zag", zz(100, 4.0)),
    ]
}

/// Envelope-only library file contents for the full-scale dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeLibrary {
    pub sample_rate: f64,
    pub entries: Vec<EnvelopeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeEntry {
    pub id: usize,
    pub label: String,
    pub envelope: Envelope,
}

impl EnvelopeLibrary {
    pub fn full_scale() -> Self {
        Self {
            sample_rate: 1.0,
            entries: full_scale_envelopes()
                .into_iter()
                .map(|(id, label, envelope)| EnvelopeEntry { id, label: label.to_string(), envelope })
                .collect(),
        }
    }
}

/// Square wave with the yaw excursion centred on zero heading: positive for
/// the first quarter period, negative for the middle half, positive again.
fn centred_square(k: usize, period: usize) -> f64 {
    if ((k + period / 4) % period) < period / 2 {
        1.0
    } else {
        -1.0
    }
}

fn square(k: usize, period: usize) -> f64 {
    if period == 0 || k % period < period / 2 {
        1.0
    } else {
        -1.0
    }
}

fn channel_reference(
    target: &ChannelTarget,
    class: MotionClass,
    k: usize,
    duration: usize,
    lag: usize,
    cfg: &SynthesisConfig,
) -> f64 {
    match *target {
        ChannelTarget::Approx { value } => match class {
            MotionClass::ZigZag { .. } | MotionClass::Spiral => {
                value * (1.0 + cfg.dither * square(k + lag, cfg.dither_period))
            }
            _ => value,
        },
        ChannelTarget::Ramp { from, to } => {
            let ramp_len = match class {
                MotionClass::Decelerate | MotionClass::Accelerate => {
                    ((duration as f64) * cfg.ramp_fraction).max(1.0)
                }
                _ => (duration.saturating_sub(1)).max(1) as f64,
            };
            let s = (k as f64 / ramp_len).min(1.0);
            from + (to - from) * s
        }
        ChannelTarget::Range { lo, hi } => match class {
            MotionClass::ZigZag { period } if period > 1 => {
                if centred_square(k, period) > 0.0 {
                    hi
                } else {
                    lo
                }
            }
            _ => {
                // Slow triangle sweep across the range.
                let phase = (k as f64 / duration.max(1) as f64) * 2.0 * PI;
                let mid = 0.5 * (lo + hi);
                mid + 0.5 * (hi - lo) * phase.sin()
            }
        },
        ChannelTarget::AbsRange { lo, hi } => {
            let mag = 0.5 * (lo + hi);
            if k < duration / 2 {
                mag
            } else {
                -mag
            }
        }
    }
}

/// Synthesizes one primitive from its envelope and checks the replay against it.
pub fn synthesize_primitive(
    id: usize,
    label: &str,
    envelope: &Envelope,
    params: &VesselParams,
    duration: usize,
    cfg: &SynthesisConfig,
) -> Result<ExperimentPrimitive, SynthesisError> {
    if duration == 0 {
        return Err(SynthesisError::ZeroDuration);
    }
    let initial = envelope.initial_state();
    let mut signal = Vec::with_capacity(duration);
    if envelope.all_zero() {
        signal.resize(duration, [0.0; 3]);
    } else {
        let gains = params.input_gains();
        let mut x = initial;
        for k in 0..duration {
            let quarter = cfg.dither_period / 4;
            let reference = [
                channel_reference(&envelope.u, envelope.class, k + 1, duration, 0, cfg),
                channel_reference(&envelope.v, envelope.class, k + 1, duration, quarter, cfg),
                channel_reference(&envelope.r, envelope.class, k + 1, duration, 2 * quarter, cfg),
            ];
            let drift = params.drift(&x);
            let state = x.as_array();
            let mut tau = [0.0; 3];
            for i in 0..3 {
                let raw = (cfg.gains[i] * (reference[i] - state[i]) - drift[i]) / gains[i];
                tau[i] = raw.clamp(-cfg.saturation[i], cfg.saturation[i]);
            }
            signal.push(tau);
            x = sim::step_dynamics(&x, &tau, params, &sim::StepDisturbance::NONE)?;
        }
    }
    let expected_trajectory = sim::simulate_undisturbed(&initial, &signal, params)?;
    verify_envelope(&expected_trajectory, envelope)?;
    Ok(ExperimentPrimitive {
        id,
        label: label.to_string(),
        envelope: *envelope,
        initial,
        input_signal: signal,
        expected_trajectory,
    })
}

/// Checks that a trajectory satisfies an envelope after the initial transient.
pub fn verify_envelope(traj: &[BodyVelocity], envelope: &Envelope) -> Result<(), SynthesisError> {
    if traj.is_empty() {
        return Err(SynthesisError::ZeroDuration);
    }
    let start = ((traj.len() as f64) * TRANSIENT_FRACTION).floor() as usize;
    let settled = &traj[start.min(traj.len() - 1)..];
    for (i, (name, target)) in envelope.channels().into_iter().enumerate() {
        let full: Vec<f64> = traj.iter().map(|s| s.as_array()[i]).collect();
        let tail: Vec<f64> = settled.iter().map(|s| s.as_array()[i]).collect();
        check_channel(name, &target, &full, &tail)?;
    }
    Ok(())
}

fn tol(bound: f64) -> f64 {
    (ENVELOPE_TOLERANCE * bound.abs()).max(1e-9)
}

fn check_channel(name: &'static str, target: &ChannelTarget, full: &[f64], tail: &[f64]) -> Result<(), SynthesisError> {
    let fail = |detail: String| Err(SynthesisError::Unreachable { channel: name, detail });
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    match *target {
        ChannelTarget::Approx { value } => {
            let t = tol(value);
            if min < value - t || max > value + t {
                return fail(format!("left {value}±{t}: observed [{min}, {max}]"));
            }
        }
        ChannelTarget::Range { lo, hi } => {
            if min < lo - tol(lo) || max > hi + tol(hi) {
                return fail(format!("outside [{lo}, {hi}]: observed [{min}, {max}]"));
            }
            if max < hi - tol(hi) || min > lo + tol(lo) {
                return fail(format!("does not span [{lo}, {hi}]: observed [{min}, {max}]"));
            }
        }
        ChannelTarget::AbsRange { lo, hi } => {
            let amin = tail.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
            let amax = tail.iter().map(|x| x.abs()).fold(f64::NEG_INFINITY, f64::max);
            if amin < lo - tol(lo) || amax > hi + tol(hi) {
                return fail(format!("|x| outside [{lo}, {hi}]: observed [{amin}, {amax}]"));
            }
        }
        ChannelTarget::Ramp { from, to } => {
            let t = tol(from.abs().max(to.abs()));
            let (lo, hi) = (from.min(to), from.max(to));
            let fmin = full.iter().copied().fold(f64::INFINITY, f64::min);
            let fmax = full.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if fmin < lo - t || fmax > hi + t {
                return fail(format!("ramp leaves [{lo}, {hi}]: observed [{fmin}, {fmax}]"));
            }
            if (full[0] - from).abs() > t {
                return fail(format!("ramp starts at {} instead of {from}", full[0]));
            }
            let last = *full.last().unwrap();
            if (last - to).abs() > t {
                return fail(format!("ramp ends at {last} instead of {to}"));
            }
        }
    }
    Ok(())
}

/// Net pose change of a primitive started at the origin.
pub fn displacement_summary(p: &ExperimentPrimitive, dt: f64) -> Result<Pose, SynthesisError> {
    if p.expected_trajectory.is_empty() {
        return Err(SynthesisError::MissingTrajectory { id: p.id });
    }
    Ok(integrate_pose(&Pose::default(), &p.expected_trajectory, dt)?)
}

/// Composes kinematic steps over a velocity sequence.
pub fn integrate_pose(start: &Pose, velocities: &[BodyVelocity], dt: f64) -> Result<Pose, SimError> {
    velocities.iter().try_fold(*start, |pose, vel| kinematics_step(&pose, vel, dt))
}

/// Pose after every sample, starting pose included.
pub fn pose_trace(start: &Pose, velocities: &[BodyVelocity], dt: f64) -> Result<Vec<Pose>, SimError> {
    let mut out = Vec::with_capacity(velocities.len() + 1);
    out.push(*start);
    let mut pose = *start;
    for vel in velocities {
        pose = kinematics_step(&pose, vel, dt)?;
        out.push(pose);
    }
    Ok(out)
}
