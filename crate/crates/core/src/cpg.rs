//! Central pattern generator: four coupled amplitude/phase oscillators.
//!
//! Each leg owns one oscillator with amplitude `r` and phase `theta`. The
//! amplitude converges to the intrinsic amplitude `mu`; the phase advances at
//! the swing or stance frequency depending on the sign of `sin(theta)`, is
//! pulled toward the trot phase lags by the inter-oscillator coupling, and is
//! optionally slowed down by the ground reaction force of a loaded leg.
//!
//! Phases in `(0, pi)` are swing, phases in `[pi, 2 pi)` are stance.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::LEG_COUNT;

/// Number of parameters proposed by the optimizer.
pub const OPTIMIZED_DIM: usize = 8;

/// Names of the optimized parameters, in vector order.
pub const OPTIMIZED_NAMES: [&str; OPTIMIZED_DIM] = [
    "ground_clearance",
    "ground_penetration",
    "swing_frequency",
    "stance_frequency",
    "intrinsic_amplitude",
    "x_offset_front",
    "x_offset_hind",
    "feedback_gain",
];

/// Index of the force-feedback gain in the optimized vector.
pub const FEEDBACK_GAIN_INDEX: usize = 7;

/// Oscillator and foot-trajectory parameters.
///
/// The first eight fields are the optimized vector (see [`CpgParams::to_vector`]);
/// the rest are fixed control constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpgParams {
    /// Swing apex height above the nominal foot height (m).
    pub ground_clearance: f64,
    /// Stance depth below the nominal foot height (m).
    pub ground_penetration: f64,
    /// Intrinsic phase velocity while `sin(theta) > 0` (rad/s).
    pub swing_frequency: f64,
    /// Intrinsic phase velocity while `sin(theta) <= 0` (rad/s).
    pub stance_frequency: f64,
    /// Intrinsic amplitude the oscillators converge to.
    pub intrinsic_amplitude: f64,
    /// Foot x offset of the front legs in the hip frame (m).
    pub x_offset_front: f64,
    /// Foot x offset of the hind legs in the hip frame (m).
    pub x_offset_hind: f64,
    /// Ground-force feedback coefficient on the phase dynamics.
    pub feedback_gain: f64,
    /// Amplitude convergence rate (1/s).
    pub convergence_rate: f64,
    pub coupling_weights: [[f64; LEG_COUNT]; LEG_COUNT],
    pub phase_lags: [[f64; LEG_COUNT]; LEG_COUNT],
    /// Step length scale (m).
    pub step_length: f64,
    /// Nominal hip height above the feet (m).
    pub body_height: f64,
}

impl Default for CpgParams {
    fn default() -> Self {
        Self {
            ground_clearance: 0.08,
            ground_penetration: 0.01,
            swing_frequency: 19.5,
            stance_frequency: 12.5,
            intrinsic_amplitude: 1.3,
            x_offset_front: -0.035,
            x_offset_hind: -0.035,
            feedback_gain: 0.175,
            convergence_rate: 50.0,
            coupling_weights: [[1.0; LEG_COUNT]; LEG_COUNT],
            phase_lags: trot_coupling(),
            step_length: 0.05,
            body_height: 0.3,
        }
    }
}

impl CpgParams {
    pub fn to_vector(&self) -> [f64; OPTIMIZED_DIM] {
        [
            self.ground_clearance,
            self.ground_penetration,
            self.swing_frequency,
            self.stance_frequency,
            self.intrinsic_amplitude,
            self.x_offset_front,
            self.x_offset_hind,
            self.feedback_gain,
        ]
    }

    /// Copy of `self` with the optimized fields replaced by `v`.
    pub fn with_vector(&self, v: &[f64; OPTIMIZED_DIM]) -> Self {
        Self {
            ground_clearance: v[0],
            ground_penetration: v[1],
            swing_frequency: v[2],
            stance_frequency: v[3],
            intrinsic_amplitude: v[4],
            x_offset_front: v[5],
            x_offset_hind: v[6],
            feedback_gain: v[7],
            ..*self
        }
    }

    pub fn x_offset(&self, leg: usize) -> f64 {
        if leg < 2 {
            self.x_offset_front
        } else {
            self.x_offset_hind
        }
    }

    /// Intrinsic phase velocity for the given phase.
    pub fn intrinsic_frequency(&self, theta: f64) -> f64 {
        if theta.sin() > 0.0 {
            self.swing_frequency
        } else {
            self.stance_frequency
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fixed_ok = self.convergence_rate > 0.0
            && self.intrinsic_amplitude > 0.0
            && self.step_length > 0.0
            && self.body_height > 0.0;
        if !fixed_ok {
            return Err(Error::InvalidArgument(
                "convergence rate, amplitude, step length and body height must be positive".into(),
            ));
        }
        let all_finite = self.to_vector().iter().all(|v| v.is_finite())
            && self
                .coupling_weights
                .iter()
                .chain(self.phase_lags.iter())
                .flatten()
                .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFinite("cpg parameters"));
        }
        Ok(())
    }
}

/// Trot phase-lag matrix: diagonal pairs in phase, lateral pairs in anti-phase.
pub fn trot_coupling() -> [[f64; LEG_COUNT]; LEG_COUNT] {
    [
        [0.0, PI, PI, 0.0],
        [-PI, 0.0, 0.0, -PI],
        [-PI, 0.0, 0.0, -PI],
        [0.0, PI, PI, 0.0],
    ]
}

/// Amplitudes and phases of the four oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorNetworkState {
    pub amplitude: [f64; LEG_COUNT],
    /// Phases wrapped to `[0, 2 pi)`.
    pub phase: [f64; LEG_COUNT],
}

impl OscillatorNetworkState {
    pub fn new(amplitude: [f64; LEG_COUNT], phase: [f64; LEG_COUNT]) -> Self {
        Self {
            amplitude: amplitude.map(|r| r.max(0.0)),
            phase: phase.map(wrap_phase),
        }
    }

    /// Small amplitudes with phases already on the trot pattern: the front-right
    /// and rear-left legs start at mid stance.
    pub fn trot_start() -> Self {
        let a = 1.5 * PI;
        Self::new([0.1; LEG_COUNT], [a, a - PI, a - PI, a])
    }

    fn check_finite(&self) -> Result<()> {
        if self
            .amplitude
            .iter()
            .chain(self.phase.iter())
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::NonFinite("oscillator state"))
        }
    }
}

impl Default for OscillatorNetworkState {
    fn default() -> Self {
        Self::trot_start()
    }
}

/// Wraps an angle to `[0, 2 pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid rounds tiny negative inputs up to exactly 2 pi
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Time derivatives `(r_dot, theta_dot)` of the network.
pub fn network_derivatives(
    state: &OscillatorNetworkState,
    params: &CpgParams,
    normal_forces: &[f64; LEG_COUNT],
) -> ([f64; LEG_COUNT], [f64; LEG_COUNT]) {
    let mu2 = params.intrinsic_amplitude * params.intrinsic_amplitude;
    let mut r_dot = [0.0; LEG_COUNT];
    let mut theta_dot = [0.0; LEG_COUNT];
    for i in 0..LEG_COUNT {
        let r = state.amplitude[i];
        let theta = state.phase[i];
        r_dot[i] = params.convergence_rate * (mu2 - r * r) * r;

        let mut dtheta = params.intrinsic_frequency(theta);
        for j in 0..LEG_COUNT {
            dtheta += state.amplitude[j]
                * params.coupling_weights[i][j]
                * (state.phase[j] - theta - params.phase_lags[i][j]).sin();
        }
        if params.feedback_gain != 0.0 {
            dtheta -= params.feedback_gain * normal_forces[i] * theta.cos();
        }
        theta_dot[i] = dtheta;
    }
    (r_dot, theta_dot)
}

/// Advances the network by one explicit Euler step of length `dt`.
///
/// With `feedback_gain == 0` the forces are ignored and the open-loop network
/// is integrated.
pub fn step_network(
    state: &OscillatorNetworkState,
    params: &CpgParams,
    normal_forces: &[f64; LEG_COUNT],
    dt: f64,
) -> Result<OscillatorNetworkState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    state.check_finite()?;
    if !normal_forces.iter().all(|f| f.is_finite()) {
        return Err(Error::NonFinite("normal forces"));
    }
    if normal_forces.iter().any(|&f| f < 0.0) {
        return Err(Error::InvalidArgument(
            "normal forces must be non-negative".into(),
        ));
    }

    let (r_dot, theta_dot) = network_derivatives(state, params, normal_forces);
    let mut next = *state;
    for i in 0..LEG_COUNT {
        next.amplitude[i] = (state.amplitude[i] + dt * r_dot[i]).max(0.0);
        next.phase[i] = wrap_phase(state.phase[i] + dt * theta_dot[i]);
    }
    Ok(next)
}

/// Cartesian foot target in the sagittal plane of the hip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootTarget {
    /// Forward position relative to the hip (m).
    pub x: f64,
    /// Vertical position relative to the hip (m), negative below the hip.
    pub z: f64,
    pub leg_index: usize,
}

/// Maps oscillator states to foot targets.
pub fn foot_targets(state: &OscillatorNetworkState, params: &CpgParams) -> [FootTarget; LEG_COUNT] {
    std::array::from_fn(|leg| {
        let r = state.amplitude[leg];
        let theta = state.phase[leg];
        let s = theta.sin();
        let lift = if s > 0.0 {
            params.ground_clearance
        } else {
            params.ground_penetration
        };
        FootTarget {
            x: params.x_offset(leg) - params.step_length * r * theta.cos(),
            z: -params.body_height + lift * s,
            leg_index: leg,
        }
    })
}
