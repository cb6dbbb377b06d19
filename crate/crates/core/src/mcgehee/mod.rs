//! McGehee blow-up of the collision singularity.
//!
//! `q = r(cos θ, sin θ)`, `p = r^{β/2}(v e_r + w e_θ)` and `dt = r^{1-β/2} dτ`
//! turn the Hamiltonian flow into
//!
//! ```text
//! r' = r v
//! θ' = w
//! v' = -(β/2) v² + w² - β V(θ)
//! w' = -(β/2 + 1) v w - V'(θ)
//! ```
//!
//! whose `(θ, v, w)` part does not involve `r`. The energy is
//! `h = r^β z` with `z = (v² + w²)/2 + V(θ)`, and `r = 0` is the invariant
//! collision manifold `ℳ = {z = 0}`.

mod cartesian;
mod flow;
mod manifold;

use serde::Serialize;
use thiserror::Error;

use crate::critical::CriticalError;
use crate::dsl::{Potential, PotentialError};

pub use cartesian::{
    cartesian_vector_field, check_beta_minus2_integral, hamiltonian, integrate_cartesian,
    CartesianSample, CartesianTrajectory,
};
pub use flow::{
    integrate, integrate_shell, integrate_to_times, FlowOptions, Sample, ShellState, Termination,
    Trajectory,
};
pub use manifold::{
    find_equilibria, integrate_manifold, linearize, trace_invariant_manifold, Branch,
    EqSign, Equilibria, Equilibrium, EquilibriumType, Linearization, ManifoldMode,
    ManifoldOptions, ManifoldSample, ManifoldTrajectory, SpiralDiagnostics, TraceOptions,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McGeheeError {
    #[error("q = 0: McGehee coordinates are singular at the origin")]
    OriginSingularity,
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Critical(#[from] CriticalError),
    #[error("equilibrium at theta = {theta} is not a saddle on the collision manifold")]
    NotSaddle { theta: f64 },
    #[error("initial state is off the collision manifold (|z| = {z:e} > {tol:e})")]
    NotOnManifold { z: f64, tol: f64 },
    #[error("V({theta}) = {value} is not negative; no rest point on the collision manifold")]
    NoRestPoint { theta: f64, value: f64 },
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("integration failed: {0}")]
    Integration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McGeheeState {
    pub r: f64,
    pub theta: f64,
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManifoldState {
    pub theta: f64,
    pub v: f64,
    pub w: f64,
}

impl McGeheeState {
    pub fn new(r: f64, theta: f64, v: f64, w: f64) -> Self {
        McGeheeState { r, theta, v, w }
    }

    pub fn manifold_part(&self) -> ManifoldState {
        ManifoldState {
            theta: self.theta,
            v: self.v,
            w: self.w,
        }
    }
}

impl ManifoldState {
    pub fn new(theta: f64, v: f64, w: f64) -> Self {
        ManifoldState { theta, v, w }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta, self.v, self.w]
    }
}

pub fn to_mcgehee(p: [f64; 2], q: [f64; 2], beta: f64) -> Result<McGeheeState, McGeheeError> {
    let r = q[0].hypot(q[1]);
    if r == 0.0 {
        return Err(McGeheeError::OriginSingularity);
    }
    let theta = q[1].atan2(q[0]);
    let (s, c) = theta.sin_cos();
    let scale = r.powf(-0.5 * beta);
    Ok(McGeheeState {
        r,
        theta,
        v: scale * (p[0] * c + p[1] * s),
        w: scale * (-p[0] * s + p[1] * c),
    })
}

/// Inverse of [`to_mcgehee`]; returns `(p, q)`.
pub fn from_mcgehee(state: &McGeheeState, beta: f64) -> ([f64; 2], [f64; 2]) {
    let (s, c) = state.theta.sin_cos();
    let scale = state.r.powf(0.5 * beta);
    let p = [
        scale * (state.v * c - state.w * s),
        scale * (state.v * s + state.w * c),
    ];
    (p, [state.r * c, state.r * s])
}

/// `(v', w')` of the blown-up system, given `V` and `V'` at `θ`.
#[inline]
pub(crate) fn accel(beta: f64, v: f64, w: f64, pot_v: f64, pot_d1: f64) -> (f64, f64) {
    (
        -0.5 * beta * v * v + w * w - beta * pot_v,
        -(0.5 * beta + 1.0) * v * w - pot_d1,
    )
}

/// `(dr, dθ, dv, dw)/dτ`.
pub fn vector_field(state: &McGeheeState, pot: &Potential) -> Result<[f64; 4], McGeheeError> {
    let j = pot.eval(state.theta)?;
    let (dv, dw) = accel(pot.beta(), state.v, state.w, j.value, j.d1);
    Ok([state.r * state.v, state.w, dv, dw])
}

/// `z = (v² + w²)/2 + V(θ)`.
pub fn z_value(theta: f64, v: f64, w: f64, pot: &Potential) -> Result<f64, McGeheeError> {
    Ok(0.5 * (v * v + w * w) + pot.value(theta)?)
}

/// `h = r^β z`.
pub fn energy(state: &McGeheeState, pot: &Potential) -> Result<f64, McGeheeError> {
    let z = z_value(state.theta, state.v, state.w, pot)?;
    Ok(energy_from(state.r.ln(), z, pot.beta()))
}

pub(crate) fn energy_from(ln_r: f64, z: f64, beta: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        z.signum() * (beta * ln_r + z.abs().ln()).exp()
    }
}
