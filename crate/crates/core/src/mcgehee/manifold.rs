//! The `(θ, v, w)` subsystem, its rest points `D^± = (θ_c, ±√(-2V(θ_c)), 0)`
//! on the collision manifold, and separatrix tracing.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::Serialize;

use super::{accel, McGeheeError, ManifoldState, Termination};
use crate::critical::{find_critical_points, CriticalOptions, CriticalPoint};
use crate::dsl::Potential;
use crate::ode::{Dopri5, StepControl, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EqSign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl EqSign {
    pub fn factor(self) -> f64 {
        match self {
            EqSign::Plus => 1.0,
            EqSign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            EqSign::Plus => "+",
            EqSign::Minus => "-",
        }
    }

    pub fn parse(s: &str) -> Option<EqSign> {
        match s {
            "+" | "plus" => Some(EqSign::Plus),
            "-" | "minus" => Some(EqSign::Minus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumType {
    Saddle,
    StableFocus,
    UnstableFocus,
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    /// Jacobian of `(θ, v, w)' ` at the rest point.
    pub matrix: [[f64; 3]; 3],
    /// Transverse eigenvalue `-β v*`.
    pub lambda1: f64,
    pub eigvec1: [f64; 3],
    /// Eigenvalues within `ℳ`, larger real part (or positive imaginary
    /// part) first.
    pub lambda23: [Complex64; 2],
    pub kind: EquilibriumType,
}

/// Linear data at `(θ_c, v*, 0)` from `β`, `v*` and `V''(θ_c)`.
pub fn linearize(beta: f64, v_star: f64, v2: f64) -> Linearization {
    let trace = -(0.5 * beta + 1.0) * v_star;
    let lambda1 = -beta * v_star;
    let matrix = [[0.0, 0.0, 1.0], [0.0, lambda1, 0.0], [-v2, 0.0, trace]];
    // λ² - Tλ + V'' = 0
    let disc = trace * trace - 4.0 * v2;
    let lambda23 = if disc >= 0.0 {
        let sq = disc.sqrt();
        let (a, b) = if trace == 0.0 {
            (0.5 * sq, -0.5 * sq)
        } else {
            let q = 0.5 * (trace + trace.signum() * sq);
            let other = if q == 0.0 { 0.0 } else { v2 / q };
            (q.max(other), q.min(other))
        };
        [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [
            Complex64::new(0.5 * trace, im),
            Complex64::new(0.5 * trace, -im),
        ]
    };
    let kind = if lambda23[0].im != 0.0 {
        if trace < 0.0 {
            EquilibriumType::StableFocus
        } else {
            EquilibriumType::UnstableFocus
        }
    } else if lambda23[0].re * lambda23[1].re < 0.0 {
        EquilibriumType::Saddle
    } else {
        EquilibriumType::Node
    };
    Linearization {
        matrix,
        lambda1,
        eigvec1: [0.0, 1.0, 0.0],
        lambda23,
        kind,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub theta_c: f64,
    pub sign: EqSign,
    pub v_star: f64,
    /// `V(θ_c)` and `V''(θ_c)`.
    pub value: f64,
    pub second: f64,
    pub lin: Linearization,
}

impl Equilibrium {
    pub fn at(theta_c: f64, sign: EqSign, pot: &Potential) -> Result<Equilibrium, McGeheeError> {
        let j = pot.eval(theta_c)?;
        if !(j.value < 0.0) {
            return Err(McGeheeError::NoRestPoint {
                theta: theta_c,
                value: j.value,
            });
        }
        let v_star = sign.factor() * (-2.0 * j.value).sqrt();
        Ok(Equilibrium {
            theta_c,
            sign,
            v_star,
            value: j.value,
            second: j.d2,
            lin: linearize(pot.beta(), v_star, j.d2),
        })
    }

    pub fn point(&self) -> [f64; 3] {
        [self.theta_c, self.v_star, 0.0]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "theta_c": self.theta_c,
            "sign": self.sign,
            "v_star": self.v_star,
            "lambda1": self.lin.lambda1,
            "lambda23": self.lin.lambda23.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>(),
            "type": self.lin.kind,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibria {
    pub points: Vec<Equilibrium>,
    /// Critical points with `V(θ_c) >= 0`, which carry no rest point.
    pub skipped: Vec<CriticalPoint>,
}

impl Equilibria {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "equilibria": self.points.iter().map(Equilibrium::to_json).collect::<Vec<_>>(),
            "skipped": self.skipped.iter().map(|c| serde_json::json!({
                "theta": c.theta,
                "V": c.value,
                "note": "V >= 0: no rest point on the collision manifold",
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn find_equilibria(pot: &Potential) -> Result<Equilibria, McGeheeError> {
    let cps = find_critical_points(pot, &CriticalOptions::default())?;
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for cp in cps {
        if cp.value < 0.0 {
            for sign in [EqSign::Plus, EqSign::Minus] {
                points.push(Equilibrium::at(cp.theta, sign, pot)?);
            }
        } else {
            skipped.push(cp);
        }
    }
    Ok(Equilibria { points, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldMode {
    /// No precondition and no correction.
    Unconstrained,
    /// Requires `|z| <= manifold_tol` initially; integrates freely.
    OnManifold,
    /// As `OnManifold`, and projects back onto `z = 0` after every step.
    Projected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldOptions {
    pub rtol: f64,
    pub atol: f64,
    pub mode: ManifoldMode,
    pub manifold_tol: f64,
    /// Stop once within `capture_radius` of any of these points.
    pub targets: Vec<[f64; 3]>,
    pub capture_radius: f64,
    pub control: StepControl,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        ManifoldOptions {
            rtol: 1e-12,
            atol: 1e-14,
            mode: ManifoldMode::OnManifold,
            manifold_tol: 1e-12,
            targets: Vec::new(),
            capture_radius: 0.0,
            control: StepControl {
                h_max: PI / 8.0,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManifoldSample {
    pub tau: f64,
    pub theta: f64,
    pub v: f64,
    pub w: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldTrajectory {
    pub samples: Vec<ManifoldSample>,
    pub termination: Termination,
    /// Largest `|z|` met along the orbit; in projected mode, the largest
    /// defect before each projection.
    pub max_abs_z: f64,
}

impl ManifoldTrajectory {
    pub fn last(&self) -> &ManifoldSample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }
}

fn rhs3(pot: &Potential, beta: f64, y: &[f64; 3]) -> Option<[f64; 3]> {
    let j = pot.eval(y[0]).ok()?;
    let (dv, dw) = accel(beta, y[1], y[2], j.value, j.d1);
    Some([y[2], dv, dw])
}

fn z_of(pot: &Potential, y: &[f64; 3]) -> Option<f64> {
    Some(0.5 * (y[1] * y[1] + y[2] * y[2]) + pot.value(y[0]).ok()?)
}

/// Newton steps along `∇z = (V', v, w)` toward `z = 0`.
fn project(pot: &Potential, y: [f64; 3], steps: usize) -> Option<[f64; 3]> {
    let mut y = y;
    for _ in 0..steps {
        let j = pot.eval(y[0]).ok()?;
        let z = 0.5 * (y[1] * y[1] + y[2] * y[2]) + j.value;
        let g = [j.d1, y[1], y[2]];
        let g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        if g2 == 0.0 || z == 0.0 {
            break;
        }
        let k = z / g2;
        y = [y[0] - k * g[0], y[1] - k * g[1], y[2] - k * g[2]];
    }
    Some(y)
}

fn distance(a: &[f64; 3], b: &[f64; 3], periodic: bool) -> f64 {
    let mut dth = a[0] - b[0];
    if periodic {
        dth -= TAU * (dth / TAU).round();
    }
    (dth * dth + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Integrate the `(θ, v, w)` subsystem over `tau_span` (backward when
/// `τ₁ < τ₀`).
pub fn integrate_manifold(
    m0: &ManifoldState,
    pot: &Potential,
    tau_span: (f64, f64),
    opts: &ManifoldOptions,
) -> Result<ManifoldTrajectory, McGeheeError> {
    let (tau0, tau1) = tau_span;
    if !tau0.is_finite() || !tau1.is_finite() {
        return Err(McGeheeError::InvalidSpan(format!("{tau0}:{tau1}")));
    }
    let beta = pot.beta();
    let periodic = pot.domain().is_periodic();
    let mut y = m0.as_array();
    let z0 = super::z_value(y[0], y[1], y[2], pot)?;
    if opts.mode != ManifoldMode::Unconstrained && z0.abs() > opts.manifold_tol {
        return Err(McGeheeError::NotOnManifold {
            z: z0,
            tol: opts.manifold_tol,
        });
    }
    let mut max_abs_z = z0.abs();
    if opts.mode == ManifoldMode::Projected {
        y = project(pot, y, 2).ok_or_else(|| McGeheeError::Integration("projection failed".into()))?;
    }
    let mut f = |_: f64, y: &[f64; 3]| rhs3(pot, beta, y);
    let mut stepper = Dopri5::new(
        &mut f,
        tau0,
        y,
        Tolerances::uniform(opts.rtol, opts.atol),
        opts.control,
    )
    .map_err(|e| McGeheeError::Integration(format!("{e:?} at the initial state")))?;
    let sample = |tau: f64, y: &[f64; 3], z: f64| ManifoldSample {
        tau,
        theta: y[0],
        v: y[1],
        w: y[2],
        z,
    };
    let mut samples = vec![sample(tau0, &y, z_of(pot, &y).unwrap_or(z0))];
    let nearest = |y: &[f64; 3]| {
        opts.targets
            .iter()
            .map(|t| distance(y, t, periodic))
            .fold(f64::INFINITY, f64::min)
    };
    let termination = loop {
        let d = nearest(&stepper.y);
        if d <= opts.capture_radius {
            break Termination::ReachedEquilibrium { distance: d };
        }
        if stepper.t == tau1 {
            break Termination::SpanEnd;
        }
        let st = match stepper.step(&mut f, tau1) {
            Ok(st) => st,
            Err(e) => break Termination::from_failure(e),
        };
        let Some(z) = z_of(pot, &st.y1) else {
            break Termination::LeftDomain;
        };
        max_abs_z = max_abs_z.max(z.abs());
        if opts.mode == ManifoldMode::Projected {
            let Some(yp) = project(pot, st.y1, 2) else {
                break Termination::LeftDomain;
            };
            if let Err(e) = stepper.reset(&mut f, st.t1, yp) {
                break Termination::from_failure(e);
            }
            samples.push(sample(st.t1, &yp, z_of(pot, &yp).unwrap_or(0.0)));
        } else {
            samples.push(sample(st.t1, &st.y1, z));
        }
    };
    Ok(ManifoldTrajectory {
        samples,
        termination,
        max_abs_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Unstable,
    Stable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub offset: f64,
    /// `+1` or `-1`: which half of the eigenline `(1, 0, μ)` to seed on.
    pub direction: f64,
    pub max_tau: f64,
    pub rtol: f64,
    pub atol: f64,
    pub capture_radius: f64,
    /// Continue inside the capture radius with the exact linear flow of
    /// the target focus down to this distance.
    pub linear_tail_floor: Option<f64>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            offset: 1e-7,
            direction: 1.0,
            max_tau: 500.0,
            rtol: 1e-12,
            atol: 1e-14,
            capture_radius: 1e-9,
            linear_tail_floor: Some(1e-40),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpiralDiagnostics {
    pub target_theta: f64,
    pub target_sign: EqSign,
    pub target_type: EquilibriumType,
    /// Distance to the target at the end of the nonlinear integration.
    pub terminal_distance: f64,
    /// `|Σ Δ atan2(w, θ - θ_target)|` along the nonlinear orbit.
    pub nonlinear_swept_angle: f64,
    pub tail_swept_angle: f64,
    pub tail_final_distance: f64,
    pub swept_angle: f64,
    pub spiral: bool,
}

fn wrap(a: f64) -> f64 {
    let mut a = a % TAU;
    if a > PI {
        a -= TAU;
    } else if a <= -PI {
        a += TAU;
    }
    a
}

/// Angle swept and final distance for `x' = d·A x`, `A = [[0, 1], [-V'', T]]`,
/// run from `x0` until `|x| <= floor`. Requires a contracting focus.
fn linear_tail(eq: &Equilibrium, d: f64, x0: [f64; 2], floor: f64) -> Option<(f64, f64)> {
    let l = eq.lin.lambda23[0];
    let (a, b) = (d * l.re, l.im.abs());
    if !(a < 0.0) || b == 0.0 {
        return None;
    }
    let trace = eq.lin.matrix[2][2];
    // d·A - a I
    let m = [[-a, d], [-d * eq.second, d * trace - a]];
    let n0 = x0[0].hypot(x0[1]);
    if n0 <= floor {
        return Some((0.0, n0));
    }
    let ds = PI / (32.0 * b);
    let mut prev = x0[1].atan2(x0[0]);
    let mut swept = 0.0;
    let mut s = 0.0;
    let mut dist = n0;
    for _ in 0..10_000_000 {
        s += ds;
        let (e, c, sn) = ((a * s).exp(), (b * s).cos(), (b * s).sin() / b);
        let x = [
            e * (c * x0[0] + sn * (m[0][0] * x0[0] + m[0][1] * x0[1])),
            e * (c * x0[1] + sn * (m[1][0] * x0[0] + m[1][1] * x0[1])),
        ];
        let ang = x[1].atan2(x[0]);
        swept += wrap(ang - prev);
        prev = ang;
        dist = x[0].hypot(x[1]);
        if dist <= floor {
            break;
        }
    }
    Some((swept.abs(), dist))
}

/// Seed on the in-`ℳ` eigenline of a saddle rest point and follow the
/// chosen branch (forward for unstable, backward for stable) until it is
/// captured by a focus or node, or `max_tau` runs out.
pub fn trace_invariant_manifold(
    eq: &Equilibrium,
    branch: Branch,
    pot: &Potential,
    opts: &TraceOptions,
) -> Result<(ManifoldTrajectory, SpiralDiagnostics), McGeheeError> {
    if eq.lin.kind != EquilibriumType::Saddle {
        return Err(McGeheeError::NotSaddle { theta: eq.theta_c });
    }
    let [l2, l3] = eq.lin.lambda23;
    let mu = match branch {
        Branch::Unstable => l2.re.max(l3.re),
        Branch::Stable => l2.re.min(l3.re),
    };
    let norm = (1.0 + mu * mu).sqrt();
    let k = opts.direction.signum() * opts.offset / norm;
    let p = eq.point();
    let mut seed = [p[0] + k, p[1], p[2] + k * mu];
    if opts.offset != 0.0 {
        seed = project(pot, seed, 1)
            .ok_or_else(|| McGeheeError::Integration("seed left the domain".into()))?;
    }

    let all = find_equilibria(pot)?;
    let periodic = pot.domain().is_periodic();
    let targets: Vec<[f64; 3]> = all
        .points
        .iter()
        .filter(|e| e.lin.kind != EquilibriumType::Saddle)
        .map(Equilibrium::point)
        .collect();
    let d = match branch {
        Branch::Unstable => 1.0,
        Branch::Stable => -1.0,
    };
    let mopts = ManifoldOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        mode: ManifoldMode::Projected,
        manifold_tol: 1e-9,
        targets,
        capture_radius: opts.capture_radius,
        ..Default::default()
    };
    let traj = integrate_manifold(
        &ManifoldState::new(seed[0], seed[1], seed[2]),
        pot,
        (0.0, d * opts.max_tau),
        &mopts,
    )?;

    let last = traj.last();
    let end = [last.theta, last.v, last.w];
    let target = all
        .points
        .iter()
        .min_by(|a, b| {
            distance(&end, &a.point(), periodic).total_cmp(&distance(&end, &b.point(), periodic))
        })
        .copied()
        .unwrap_or(*eq);
    let theta_t = if periodic {
        target.theta_c + TAU * ((end[0] - target.theta_c) / TAU).round()
    } else {
        target.theta_c
    };
    let mut swept = 0.0;
    let mut prev: Option<f64> = None;
    for s in &traj.samples {
        let ang = s.w.atan2(s.theta - theta_t);
        if let Some(p) = prev {
            swept += wrap(ang - p);
        }
        prev = Some(ang);
    }
    let swept = swept.abs();
    let terminal_distance = distance(&end, &target.point(), periodic);

    let captured = matches!(traj.termination, Termination::ReachedEquilibrium { .. });
    let (tail_swept, tail_dist) = match opts.linear_tail_floor {
        Some(floor) if captured => {
            linear_tail(&target, d, [end[0] - theta_t, end[2]], floor).unwrap_or((0.0, terminal_distance))
        }
        _ => (0.0, terminal_distance),
    };
    let total = swept + tail_swept;
    let diag = SpiralDiagnostics {
        target_theta: target.theta_c,
        target_sign: target.sign,
        target_type: target.lin.kind,
        terminal_distance,
        nonlinear_swept_angle: swept,
        tail_swept_angle: tail_swept,
        tail_final_distance: tail_dist,
        swept_angle: total,
        spiral: total >= 4.0 * PI,
    };
    Ok((traj, diag))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dsl::{compile, Builtin, PotentialSpec};

    fn pot(b: Builtin, x: f64) -> Potential {
        compile(&PotentialSpec::builtin(b, x)).unwrap()
    }

    fn matvec(m: &[[f64; 3]; 3], x: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (0..3).map(|j| m[i][j] * x[j]).sum())
    }

    #[test]
    fn yoshida_d_minus_at_quarter_pi() {
        let e = Equilibrium::at(FRAC_PI_4, EqSign::Minus, &pot(Builtin::YoshidaG, 4.0)).unwrap();
        assert!((e.v_star + 1.25f64.sqrt()).abs() < 1e-12);
        assert!((e.lin.lambda1 - 4.0 * 1.25f64.sqrt()).abs() < 1e-10);
        // roots of λ² - 3√1.25 λ + 3
        let t = 3.0 * 1.25f64.sqrt();
        let im = (12.0 - t * t).sqrt() / 2.0;
        assert!((e.lin.lambda23[0].re - t / 2.0).abs() < 1e-10);
        assert!((e.lin.lambda23[0].im - im).abs() < 1e-10);
        assert!((e.lin.lambda23[0].re - 1.67705).abs() < 1e-5);
        assert!((e.lin.lambda23[0].im - 0.43301).abs() < 1e-5);
        assert_eq!(e.lin.kind, EquilibriumType::UnstableFocus);
    }

    #[test]
    fn isosceles_d_minus_at_zero() {
        let p = pot(Builtin::Isosceles, 1.0);
        let e = Equilibrium::at(0.0, EqSign::Minus, &p).unwrap();
        assert!((e.v_star + 10f64.sqrt()).abs() < 1e-12);
        assert!((e.lin.lambda1 + 10f64.sqrt()).abs() < 1e-10);
        let t = 10f64.sqrt() / 2.0;
        assert!((e.lin.lambda23[0].re - t / 2.0).abs() < 1e-10);
        assert!((e.lin.lambda23[0].im - (28.0 - t * t).sqrt() / 2.0).abs() < 1e-10);
        assert!((e.lin.lambda23[0].im - 2.52488).abs() < 1e-5);
        let plus = Equilibrium::at(0.0, EqSign::Plus, &p).unwrap();
        assert!((plus.lin.lambda1 + e.lin.lambda1).abs() < 1e-12);
        assert!((plus.lin.lambda23[0].re + e.lin.lambda23[0].re).abs() < 1e-12);
        assert!((plus.lin.lambda23[0].im.abs() - e.lin.lambda23[0].im.abs()).abs() < 1e-12);
        assert_eq!(plus.lin.kind, EquilibriumType::StableFocus);
    }

    #[test]
    fn equilibria_skip_positive_values() {
        let eqs = find_equilibria(&pot(Builtin::YoshidaH, 4.0)).unwrap();
        assert!(eqs.points.is_empty());
        assert_eq!(eqs.skipped.len(), 8);
        let eqs = find_equilibria(&pot(Builtin::YoshidaG, 4.0)).unwrap();
        assert_eq!(eqs.points.len(), 16);
        let json = eqs.to_json();
        assert_eq!(json["equilibria"][0]["sign"], "+");
        assert_eq!(json["equilibria"][0]["lambda23"][0].as_array().unwrap().len(), 2);
    }

    #[test]
    fn eigen_consistency_and_transversality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let beta = rng.gen_range(-4.0..4.0);
            let v = -rng.gen_range(0.01..5.0);
            let v2 = rng.gen_range(-10.0..10.0);
            for sign in [1.0, -1.0] {
                let vs = sign * (-2.0f64 * v).sqrt();
                let l = linearize(beta, vs, v2);
                let mv = matvec(&l.matrix, &l.eigvec1);
                for i in 0..3 {
                    assert!((mv[i] - l.lambda1 * l.eigvec1[i]).abs() < 1e-10);
                }
                let trace = -(0.5 * beta + 1.0) * vs;
                for lam in l.lambda23 {
                    let res = lam * lam - lam * trace + v2;
                    assert!(res.norm() <= 1e-10 * (1.0 + v2.abs() + trace * trace));
                }
                let sum = l.lambda23[0] + l.lambda23[1];
                let prod = l.lambda23[0] * l.lambda23[1];
                assert!((sum.re - trace).abs() < 1e-10 && sum.im.abs() < 1e-10);
                assert!((prod.re - v2).abs() < 1e-10 * (1.0 + v2.abs()));
                // ∇z at the rest point is (V', v*, 0) = (0, v*, 0)
                let grad = [0.0, vs, 0.0];
                let dot: f64 = (0..3).map(|i| grad[i] * l.eigvec1[i]).sum();
                assert_eq!(dot, vs);
            }
        }
    }

    #[test]
    fn focus_iff_assumption_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let beta = rng.gen_range(-4.0..4.0);
            let v = -rng.gen_range(0.01..5.0);
            let v2 = rng.gen_range(-10.0..10.0);
            let margin = v2 + (beta + 2.0f64).powi(2) * v / 8.0;
            if margin.abs() < 1e-9 {
                continue;
            }
            let l = linearize(beta, -(-2.0f64 * v).sqrt(), v2);
            assert_eq!(l.lambda23[0].im != 0.0, margin > 0.0);
        }
    }

    #[test]
    fn on_manifold_invariance_yoshida() {
        let p = pot(Builtin::YoshidaG, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let th: f64 = rng.gen_range(0.0..TAU);
            let phi: f64 = rng.gen_range(0.0..TAU);
            let rho = (-2.0 * p.value(th).unwrap()).sqrt();
            let m0 = ManifoldState::new(th, rho * phi.cos(), rho * phi.sin());
            let tr = integrate_manifold(&m0, &p, (0.0, 30.0), &ManifoldOptions::default()).unwrap();
            assert_eq!(tr.termination, Termination::SpanEnd);
            assert!(tr.max_abs_z <= 1e-9, "{}", tr.max_abs_z);
        }
    }

    #[test]
    fn gradient_like_on_projected_orbits() {
        for p in [pot(Builtin::YoshidaG, 4.0), pot(Builtin::Isosceles, 1.0)] {
            let opts = ManifoldOptions {
                mode: ManifoldMode::Projected,
                ..Default::default()
            };
            let m0 = {
                let th = 0.3;
                let rho = (-2.0 * p.value(th).unwrap()).sqrt();
                ManifoldState::new(th, 0.3f64.cos() * rho, -0.3f64.sin() * rho)
            };
            let tr = integrate_manifold(&m0, &p, (0.0, 30.0), &opts).unwrap();
            assert_eq!(tr.termination, Termination::SpanEnd);
            assert!(tr.max_abs_z < 1e-9);
            for w in tr.samples.windows(2) {
                assert!(w[1].v >= w[0].v - 1e-10);
            }
        }
    }

    #[test]
    fn rest_point_is_stationary() {
        let p = pot(Builtin::Isosceles, 1.0);
        let e = Equilibrium::at(0.0, EqSign::Minus, &p).unwrap();
        let m0 = ManifoldState::new(0.0, e.v_star, 0.0);
        let tr = integrate_manifold(&m0, &p, (0.0, 5.0), &ManifoldOptions::default()).unwrap();
        let l = tr.last();
        assert!(l.theta.abs() < 1e-12 && (l.v - e.v_star).abs() < 1e-11 && l.w.abs() < 1e-12);
    }

    #[test]
    fn not_saddle_rejected() {
        let p = pot(Builtin::Isosceles, 1.0);
        let e = Equilibrium::at(0.0, EqSign::Minus, &p).unwrap();
        assert!(matches!(
            trace_invariant_manifold(&e, Branch::Unstable, &p, &TraceOptions::default()),
            Err(McGeheeError::NotSaddle { .. })
        ));
    }

    #[test]
    fn zero_offset_stays_put() {
        let p = pot(Builtin::YoshidaG, 4.0);
        let e = Equilibrium::at(0.0, EqSign::Plus, &p).unwrap();
        let opts = TraceOptions {
            offset: 0.0,
            max_tau: 1.0,
            ..Default::default()
        };
        let (tr, _) = trace_invariant_manifold(&e, Branch::Unstable, &p, &opts).unwrap();
        for s in &tr.samples {
            assert!(distance(&[s.theta, s.v, s.w], &e.point(), true) < 1e-12);
        }
    }

    #[test]
    fn linear_tail_of_a_pure_rotation_rate() {
        let p = pot(Builtin::Isosceles, 1.0);
        let e = Equilibrium::at(0.0, EqSign::Plus, &p).unwrap();
        let (swept, dist) = linear_tail(&e, 1.0, [1e-3, 0.0], 1e-13).unwrap();
        let l = e.lin.lambda23[0];
        // ln(1e10) / |Re λ| of time at Im λ radians per unit time, roughly
        let expect = (1e10f64).ln() / l.re.abs() * l.im.abs();
        assert!((swept - expect).abs() < 0.1 * expect, "{swept} vs {expect}");
        assert!(dist <= 1e-13);
        assert!(linear_tail(&e, -1.0, [1e-3, 0.0], 1e-13).is_none());
    }
}
