//! The original Hamiltonian flow `q' = p`, `p' = -∇U(q)` in Cartesian
//! coordinates, used as an independent reference for the blown-up flow.

use serde::Serialize;

use super::{McGeheeError, Termination};
use crate::dsl::Potential;
use crate::ode::{Dopri5, StepControl, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CartesianSample {
    pub t: f64,
    pub q: [f64; 2],
    pub p: [f64; 2],
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartesianTrajectory {
    pub beta: f64,
    pub samples: Vec<CartesianSample>,
    pub termination: Termination,
}

impl CartesianTrajectory {
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.samples[0].energy;
        let scale = if h0 == 0.0 { 1.0 } else { h0.abs() };
        self.samples
            .iter()
            .map(|s| (s.energy - h0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// The sample at exactly time `t`, if one was recorded.
    pub fn at(&self, t: f64) -> Option<&CartesianSample> {
        self.samples.iter().find(|s| s.t == t)
    }
}

pub fn hamiltonian(p: [f64; 2], q: [f64; 2], pot: &Potential) -> Result<f64, McGeheeError> {
    Ok(0.5 * (p[0] * p[0] + p[1] * p[1]) + pot.eval_u(q)?)
}

/// `(dq1, dq2, dp1, dp2)/dt`.
pub fn cartesian_vector_field(
    p: [f64; 2],
    q: [f64; 2],
    pot: &Potential,
) -> Result<[f64; 4], McGeheeError> {
    if q == [0.0, 0.0] {
        return Err(McGeheeError::OriginSingularity);
    }
    let g = pot.grad_u(q)?;
    Ok([p[0], p[1], -g[0], -g[1]])
}

/// Integrate over `[0, t_end]`; every time in `output_times` is hit exactly
/// by shortening the step that would cross it.
pub fn integrate_cartesian(
    p: [f64; 2],
    q: [f64; 2],
    pot: &Potential,
    t_end: f64,
    output_times: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<CartesianTrajectory, McGeheeError> {
    if !(t_end > 0.0) {
        return Err(McGeheeError::InvalidSpan(format!("t_end = {t_end}")));
    }
    cartesian_vector_field(p, q, pot)?;
    let mut f = |_: f64, y: &[f64; 4]| {
        cartesian_vector_field([y[2], y[3]], [y[0], y[1]], pot)
            .ok()
            .filter(|d| d.iter().all(|x| x.is_finite()))
    };
    let mut stepper = Dopri5::new(
        &mut f,
        0.0,
        [q[0], q[1], p[0], p[1]],
        Tolerances::uniform(rtol, atol),
        StepControl::default(),
    )
    .map_err(|e| McGeheeError::Integration(format!("{e:?} at the initial state")))?;
    let mut stops: Vec<f64> = output_times
        .iter()
        .copied()
        .filter(|t| *t > 0.0 && *t < t_end)
        .collect();
    stops.push(t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let sample = |t: f64, y: &[f64; 4]| {
        let (q, p) = ([y[0], y[1]], [y[2], y[3]]);
        CartesianSample {
            t,
            q,
            p,
            energy: hamiltonian(p, q, pot).unwrap_or(f64::NAN),
        }
    };
    let mut samples = vec![sample(0.0, &stepper.y)];
    let mut termination = Termination::SpanEnd;
    'outer: for stop in stops {
        while stepper.t < stop {
            match stepper.step(&mut f, stop) {
                Ok(st) => samples.push(sample(st.t1, &st.y1)),
                Err(e) => {
                    termination = Termination::from_failure(e);
                    break 'outer;
                }
            }
        }
    }
    Ok(CartesianTrajectory {
        beta: pot.beta(),
        samples,
        termination,
    })
}

/// `max_t |G(t) - G(0)|` for `G = (q·p)² - 2|q|² H`, which is a first
/// integral exactly when `β = -2`.
pub fn check_beta_minus2_integral(traj: &CartesianTrajectory) -> f64 {
    let g = |s: &CartesianSample| {
        let qp = s.q[0] * s.p[0] + s.q[1] * s.p[1];
        let q2 = s.q[0] * s.q[0] + s.q[1] * s.q[1];
        qp * qp - 2.0 * q2 * s.energy
    };
    let g0 = g(&traj.samples[0]);
    traj.samples
        .iter()
        .map(|s| (g(s) - g0).abs())
        .fold(0.0, f64::max)
}
