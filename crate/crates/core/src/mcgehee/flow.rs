//! Full-state integration of the blown-up flow.
//!
//! Two charts are used internally, both carrying `ln r` and the physical
//! time `t`:
//!
//! * chart A: `(ln r, θ, v, w, t)`
//! * chart B: `(ln r, θ, φ, z, t)` with `(v, w) = ρ(cos φ, sin φ)` and
//!   `ρ² = 2(z - V(θ))`, where `z' = -β v z`.
//!
//! Chart B keeps `z` to full relative precision when `|z|` is far below
//! `v² + w²` (near the collision manifold, or for `β > 0` at large `r`),
//! which is what makes `h = r^β z` trackable over many decades of `r`.
//! Chart A takes over when `ρ` becomes small relative to `|z|`.

use serde::Serialize;

use super::{accel, energy_from, McGeheeError, McGeheeState};
use crate::dsl::Potential;
use crate::ode::{rk_step, Dopri5, Step, StepControl, StepFailure, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    SpanEnd,
    StepUnderflow,
    LeftDomain,
    MaxSteps,
    ReachedEquilibrium { distance: f64 },
}

impl Termination {
    pub(crate) fn from_failure(f: StepFailure) -> Self {
        match f {
            StepFailure::Underflow => Termination::StepUnderflow,
            StepFailure::LeftDomain => Termination::LeftDomain,
            StepFailure::MaxSteps => Termination::MaxSteps,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Termination::SpanEnd => "span_end",
            Termination::StepUnderflow => "step_underflow",
            Termination::LeftDomain => "left_domain",
            Termination::MaxSteps => "max_steps",
            Termination::ReachedEquilibrium { .. } => "reached_equilibrium",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Extra output times in τ, served by Hermite interpolation.
    pub dense_taus: Vec<f64>,
    pub control: StepControl,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            rtol: 1e-10,
            atol: 1e-12,
            dense_taus: Vec::new(),
            control: StepControl {
                h_max: std::f64::consts::PI / 8.0,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub tau: f64,
    pub t: f64,
    pub state: McGeheeState,
    pub z: f64,
    pub h: f64,
    pub dense: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub beta: f64,
    pub samples: Vec<Sample>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    /// `max |h(τ) - h(0)| / |h(0)|`, or the absolute drift when `h(0) = 0`.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.samples[0].h;
        let scale = if h0 == 0.0 { 1.0 } else { h0.abs() };
        self.samples
            .iter()
            .map(|s| (s.h - h0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chart {
    A,
    B,
}

const TO_B: f64 = 0.2;
const TO_A: f64 = 0.05;

fn rhs(pot: &Potential, beta: f64, chart: Chart, y: &[f64; 5]) -> Option<[f64; 5]> {
    let j = pot.eval(y[1]).ok()?;
    let dt = ((1.0 - 0.5 * beta) * y[0]).exp();
    match chart {
        Chart::A => {
            let (v, w) = (y[2], y[3]);
            let (dv, dw) = accel(beta, v, w, j.value, j.d1);
            Some([v, w, dv, dw, dt])
        }
        Chart::B => {
            let rho2 = 2.0 * (y[3] - j.value);
            if !(rho2 > 0.0) {
                return None;
            }
            let rho = rho2.sqrt();
            let (s, c) = y[2].sin_cos();
            let (v, w) = (rho * c, rho * s);
            let (dv, dw) = accel(beta, v, w, j.value, j.d1);
            Some([v, w, (v * dw - w * dv) / rho2, -beta * v * y[3], dt])
        }
    }
}

fn tolerances(chart: Chart, rtol: f64, atol: f64) -> Tolerances<5> {
    // ln r is held to an absolute error of rtol, i.e. r to relative rtol
    match chart {
        Chart::A => Tolerances {
            rtol: [0.0, rtol, rtol, rtol, rtol],
            atol: [rtol, atol, atol, atol, atol],
        },
        Chart::B => Tolerances {
            rtol: [0.0, rtol, rtol, rtol, rtol],
            atol: [rtol, atol, atol, 0.0, atol],
        },
    }
}

fn decode(pot: &Potential, chart: Chart, y: &[f64; 5]) -> Option<(McGeheeState, f64)> {
    let vj = pot.value(y[1]).ok()?;
    let r = y[0].exp();
    match chart {
        Chart::A => {
            let z = 0.5 * (y[2] * y[2] + y[3] * y[3]) + vj;
            Some((McGeheeState::new(r, y[1], y[2], y[3]), z))
        }
        Chart::B => {
            let rho = (2.0 * (y[3] - vj)).max(0.0).sqrt();
            let (s, c) = y[2].sin_cos();
            Some((McGeheeState::new(r, y[1], rho * c, rho * s), y[3]))
        }
    }
}

fn check_radius(r: f64) -> Result<(), McGeheeError> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(McGeheeError::InvalidSpan(format!("r must be positive, got {r}")))
    }
}

/// A phase point given by its energy: `(v, w) = ρ(cos φ, sin φ)` with
/// `ρ² = 2(h r^{-β} - V(θ))`.
///
/// Unlike `(r, θ, v, w)`, this fixes `h` exactly even when `z = h r^{-β}`
/// is far below the rounding level of `(v² + w²)/2 + V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellState {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub h: f64,
}

struct ChartedFlow<'a> {
    pot: &'a Potential,
    beta: f64,
    chart: Chart,
    rtol: f64,
    atol: f64,
    stepper: Dopri5<5>,
}

impl<'a> ChartedFlow<'a> {
    fn start(
        pot: &'a Potential,
        s0: &McGeheeState,
        tau0: f64,
        opts: &FlowOptions,
    ) -> Result<Self, McGeheeError> {
        check_radius(s0.r)?;
        let vj = pot.value(s0.theta)?;
        let rho2 = s0.v * s0.v + s0.w * s0.w;
        let z = 0.5 * rho2 + vj;
        let (chart, y) = if rho2 >= 0.1 * z.abs() {
            (Chart::B, [s0.r.ln(), s0.theta, s0.w.atan2(s0.v), z, 0.0])
        } else {
            (Chart::A, [s0.r.ln(), s0.theta, s0.v, s0.w, 0.0])
        };
        Self::start_in(pot, chart, y, tau0, opts)
    }

    fn start_in(
        pot: &'a Potential,
        chart: Chart,
        y: [f64; 5],
        tau0: f64,
        opts: &FlowOptions,
    ) -> Result<Self, McGeheeError> {
        let beta = pot.beta();
        let mut f = |_: f64, y: &[f64; 5]| rhs(pot, beta, chart, y);
        let stepper = Dopri5::new(
            &mut f,
            tau0,
            y,
            tolerances(chart, opts.rtol, opts.atol),
            opts.control,
        )
        .map_err(|e| McGeheeError::Integration(format!("{e:?} at the initial state")))?;
        Ok(ChartedFlow {
            pot,
            beta,
            chart,
            rtol: opts.rtol,
            atol: opts.atol,
            stepper,
        })
    }

    fn step(&mut self, tau_end: f64) -> Result<(Chart, Step<5>), StepFailure> {
        let (pot, beta, chart) = (self.pot, self.beta, self.chart);
        let mut f = |_: f64, y: &[f64; 5]| rhs(pot, beta, chart, y);
        let st = self.stepper.step(&mut f, tau_end)?;
        Ok((chart, st))
    }

    fn maybe_switch(&mut self) -> Result<(), StepFailure> {
        let y = self.stepper.y;
        let Ok(vj) = self.pot.value(y[1]) else {
            return Ok(());
        };
        let next = match self.chart {
            Chart::A => {
                let rho2 = y[2] * y[2] + y[3] * y[3];
                let z = 0.5 * rho2 + vj;
                (rho2 > TO_B * z.abs()).then(|| (Chart::B, [y[0], y[1], y[3].atan2(y[2]), z, y[4]]))
            }
            Chart::B => {
                let rho2 = 2.0 * (y[3] - vj);
                (rho2 < TO_A * y[3].abs()).then(|| {
                    let rho = rho2.max(0.0).sqrt();
                    let (s, c) = y[2].sin_cos();
                    (Chart::A, [y[0], y[1], rho * c, rho * s, y[4]])
                })
            }
        };
        if let Some((chart, ynew)) = next {
            self.chart = chart;
            self.stepper.tol = tolerances(chart, self.rtol, self.atol);
            let (pot, beta) = (self.pot, self.beta);
            let mut f = |_: f64, y: &[f64; 5]| rhs(pot, beta, chart, y);
            let t = self.stepper.t;
            self.stepper.reset(&mut f, t, ynew)?;
        }
        Ok(())
    }

    fn sample(&self, chart: Chart, tau: f64, y: &[f64; 5], dense: bool) -> Option<Sample> {
        let (state, z) = decode(self.pot, chart, y)?;
        Some(Sample {
            tau,
            t: y[4],
            state,
            z,
            h: energy_from(y[0], z, self.beta),
            dense,
        })
    }

    /// Re-step from the start of `st` so that `t` lands on `target`.
    fn land_on_t(&self, chart: Chart, st: &Step<5>, target: f64) -> Option<McGeheeState> {
        let (pot, beta) = (self.pot, self.beta);
        let full = st.t1 - st.t0;
        let restep = |s: f64| {
            let mut f = |_: f64, y: &[f64; 5]| rhs(pot, beta, chart, y);
            rk_step(&mut f, st.t0, &st.y0, &st.f0, s * full).map(|(y, _, _)| y)
        };
        // bracket on the Hermite interpolant, then secant on true steps
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let m = 0.5 * (lo + hi);
            if st.interpolate(st.t0 + m * full)[4] < target {
                lo = m;
            } else {
                hi = m;
            }
        }
        let (mut s0, mut g0) = (1.0, st.y1[4] - target);
        let mut s1 = 0.5 * (lo + hi);
        let mut y1 = restep(s1)?;
        let tol = 4.0 * f64::EPSILON * target.abs().max(1.0);
        for _ in 0..40 {
            let g1 = y1[4] - target;
            if g1.abs() <= tol || g1 == g0 {
                break;
            }
            let s2 = s1 - g1 * (s1 - s0) / (g1 - g0);
            (s0, g0, s1) = (s1, g1, s2);
            y1 = restep(s1)?;
        }
        decode(pot, chart, &y1).map(|(s, _)| s)
    }
}

/// Integrate the full blown-up flow over `tau_span`. A span with
/// `τ₁ < τ₀` integrates backward (stored `tau` then decreases).
pub fn integrate(
    state0: &McGeheeState,
    pot: &Potential,
    tau_span: (f64, f64),
    opts: &FlowOptions,
) -> Result<Trajectory, McGeheeError> {
    check_span(tau_span)?;
    let flow = ChartedFlow::start(pot, state0, tau_span.0, opts)?;
    run(flow, tau_span, opts)
}

/// As [`integrate`], starting from an energy-shell point.
pub fn integrate_shell(
    s0: &ShellState,
    pot: &Potential,
    tau_span: (f64, f64),
    opts: &FlowOptions,
) -> Result<Trajectory, McGeheeError> {
    check_span(tau_span)?;
    check_radius(s0.r)?;
    let z = s0.h * (-pot.beta() * s0.r.ln()).exp();
    let rho2 = 2.0 * (z - pot.value(s0.theta)?);
    if !(rho2 > 0.0) {
        return Err(McGeheeError::InvalidSpan(format!(
            "energy {} is below the potential at theta = {}",
            s0.h, s0.theta
        )));
    }
    let y = [s0.r.ln(), s0.theta, s0.phi, z, 0.0];
    let flow = ChartedFlow::start_in(pot, Chart::B, y, tau_span.0, opts)?;
    run(flow, tau_span, opts)
}

fn check_span((tau0, tau1): (f64, f64)) -> Result<(), McGeheeError> {
    if tau0.is_finite() && tau1.is_finite() {
        Ok(())
    } else {
        Err(McGeheeError::InvalidSpan(format!("{tau0}:{tau1}")))
    }
}

fn run(
    mut flow: ChartedFlow<'_>,
    (tau0, tau1): (f64, f64),
    opts: &FlowOptions,
) -> Result<Trajectory, McGeheeError> {
    let pot = flow.pot;
    let dir = if tau1 >= tau0 { 1.0 } else { -1.0 };
    let mut dense: Vec<f64> = opts
        .dense_taus
        .iter()
        .copied()
        .filter(|t| (t - tau0) * dir > 0.0 && (tau1 - t) * dir >= 0.0)
        .collect();
    dense.sort_by(|a, b| (dir * a).total_cmp(&(dir * b)));
    let mut next_dense = 0;

    let first = flow
        .sample(flow.chart, tau0, &flow.stepper.y, false)
        .ok_or_else(|| McGeheeError::Integration("cannot decode initial state".into()))?;
    let mut samples = vec![first];
    let termination = loop {
        if flow.stepper.t == tau1 {
            break Termination::SpanEnd;
        }
        let (chart, st) = match flow.step(tau1) {
            Ok(x) => x,
            Err(e) => break Termination::from_failure(e),
        };
        while next_dense < dense.len() && (st.t1 - dense[next_dense]) * dir >= 0.0 {
            let tau = dense[next_dense];
            if let Some(s) = flow.sample(chart, tau, &st.interpolate(tau), true) {
                samples.push(s);
            }
            next_dense += 1;
        }
        match flow.sample(chart, st.t1, &st.y1, false) {
            Some(s) => samples.push(s),
            None => break Termination::LeftDomain,
        }
        if let Err(e) = flow.maybe_switch() {
            break Termination::from_failure(e);
        }
    };
    Ok(Trajectory {
        beta: pot.beta(),
        samples,
        termination,
    })
}

/// States at the given physical times `t` (ascending, positive), found by
/// re-stepping the integrator so that the accumulated `t` hits each target.
pub fn integrate_to_times(
    state0: &McGeheeState,
    pot: &Potential,
    t_targets: &[f64],
    max_tau: f64,
    opts: &FlowOptions,
) -> Result<Vec<McGeheeState>, McGeheeError> {
    if t_targets.windows(2).any(|w| w[1] <= w[0]) || t_targets.first().is_some_and(|t| *t <= 0.0)
    {
        return Err(McGeheeError::InvalidSpan("t targets must be positive and ascending".into()));
    }
    let mut flow = ChartedFlow::start(pot, state0, 0.0, opts)?;
    let mut out = Vec::with_capacity(t_targets.len());
    while out.len() < t_targets.len() {
        let (chart, st) = flow.step(max_tau).map_err(|e| {
            McGeheeError::Integration(format!("{e:?} before reaching t = {}", t_targets[out.len()]))
        })?;
        while out.len() < t_targets.len() && st.y1[4] >= t_targets[out.len()] {
            let s = flow.land_on_t(chart, &st, t_targets[out.len()]).ok_or_else(|| {
                McGeheeError::Integration("re-stepping onto a t target failed".into())
            })?;
            out.push(s);
        }
        if flow.stepper.t >= max_tau {
            return Err(McGeheeError::Integration(format!(
                "tau reached {max_tau} before t = {}",
                t_targets[out.len().min(t_targets.len() - 1)]
            )));
        }
        flow.maybe_switch()
            .map_err(|e| McGeheeError::Integration(format!("{e:?} on chart switch")))?;
    }
    Ok(out)
}
