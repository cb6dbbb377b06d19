//! Dormand–Prince 5(4) with a PI step-size controller and cubic Hermite
//! dense output.
//!
//! The right-hand side returns `None` when it cannot be evaluated (pole,
//! domain exit); the integrator then shrinks the step and retries.

/// Per-component tolerances. A component with `atol = 0` is controlled
/// purely relatively.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<const N: usize> {
    pub rtol: [f64; N],
    pub atol: [f64; N],
}

impl<const N: usize> Tolerances<N> {
    pub fn uniform(rtol: f64, atol: f64) -> Self {
        Tolerances {
            rtol: [rtol; N],
            atol: [atol; N],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub safety: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            h_init: None,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
            safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFailure {
    /// Error control demanded a step below `h_min`.
    Underflow,
    /// The right-hand side stayed unevaluable down to `h_min`.
    LeftDomain,
    MaxSteps,
}

/// One accepted step, enough for Hermite interpolation on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub f0: [f64; N],
    pub f1: [f64; N],
}

impl<const N: usize> Step<N> {
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        if h == 0.0 {
            return self.y0;
        }
        let s = (t - self.t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        std::array::from_fn(|i| {
            h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i]
        })
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

/// A single uncontrolled step. Returns `(y1, f1, err)` where `err` is the
/// embedded error estimate, or `None` if a stage could not be evaluated.
pub fn rk_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> Option<([f64; N], [f64; N], [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
{
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = f(
        t + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y1 = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    if y1.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let k7 = f(t + h, &y1)?;
    let err = std::array::from_fn(|i| {
        h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
    });
    Some((y1, k7, err))
}

fn error_norm<const N: usize>(
    tol: &Tolerances<N>,
    y0: &[f64; N],
    y1: &[f64; N],
    err: &[f64; N],
) -> f64 {
    let mut sum = 0.0;
    for i in 0..N {
        let sc = tol.atol[i] + tol.rtol[i] * y0[i].abs().max(y1[i].abs());
        let e = if sc == 0.0 {
            if err[i] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            err[i] / sc
        };
        sum += e * e;
    }
    (sum / N as f64).sqrt()
}

/// Adaptive stepper. The caller drives the loop with [`Dopri5::step`] and
/// may overwrite the state between steps with [`Dopri5::reset`].
#[derive(Debug, Clone)]
pub struct Dopri5<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    f: [f64; N],
    h: f64,
    err_old: f64,
    steps: usize,
    pub tol: Tolerances<N>,
    pub control: StepControl,
}

const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

impl<const N: usize> Dopri5<N> {
    pub fn new<F>(
        f: &mut F,
        t: f64,
        y: [f64; N],
        tol: Tolerances<N>,
        control: StepControl,
    ) -> Result<Self, StepFailure>
    where
        F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    {
        let f0 = f(t, &y).ok_or(StepFailure::LeftDomain)?;
        let mut s = Dopri5 {
            t,
            y,
            f: f0,
            h: 0.0,
            err_old: 1e-4,
            steps: 0,
            tol,
            control,
        };
        s.h = control.h_init.unwrap_or_else(|| s.initial_step());
        Ok(s)
    }

    fn initial_step(&self) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.tol.atol[i] + self.tol.rtol[i] * self.y[i].abs();
            if sc > 0.0 {
                d0 += (self.y[i] / sc).powi(2);
                d1 += (self.f[i] / sc).powi(2);
            }
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h.min(self.control.h_max).max(self.control.h_min)
    }

    pub fn derivative(&self) -> &[f64; N] {
        &self.f
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Replace the current state (after a projection or chart change).
    pub fn reset<F>(&mut self, f: &mut F, t: f64, y: [f64; N]) -> Result<(), StepFailure>
    where
        F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    {
        self.f = f(t, &y).ok_or(StepFailure::LeftDomain)?;
        self.t = t;
        self.y = y;
        Ok(())
    }

    /// Advance one accepted step toward `t_end` (either direction), never
    /// overshooting it.
    pub fn step<F>(&mut self, f: &mut F, t_end: f64) -> Result<Step<N>, StepFailure>
    where
        F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    {
        let dir = if t_end >= self.t { 1.0 } else { -1.0 };
        let mut h = self.h.abs().min(self.control.h_max);
        loop {
            if self.steps >= self.control.max_steps {
                return Err(StepFailure::MaxSteps);
            }
            let remaining = (t_end - self.t).abs();
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h < self.control.h_min && !last {
                return Err(StepFailure::Underflow);
            }
            self.steps += 1;
            let Some((y1, f1, err)) = rk_step(f, self.t, &self.y, &self.f, dir * h) else {
                h *= 0.25;
                if h < self.control.h_min {
                    return Err(StepFailure::LeftDomain);
                }
                continue;
            };
            let e = error_norm(&self.tol, &self.y, &y1, &err);
            if !e.is_finite() {
                h *= 0.25;
                if h < self.control.h_min {
                    return Err(StepFailure::Underflow);
                }
                continue;
            }
            let fac11 = e.powf(EXPO1);
            if e <= 1.0 {
                let fac = (fac11 / self.err_old.powf(BETA) / self.control.safety)
                    .clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.err_old = e.max(1e-4);
                let t1 = if last { t_end } else { self.t + dir * h };
                let step = Step {
                    t0: self.t,
                    t1,
                    y0: self.y,
                    y1,
                    f0: self.f,
                    f1,
                };
                self.t = t1;
                self.y = y1;
                self.f = f1;
                if !last {
                    self.h = (h / fac).min(self.control.h_max);
                }
                return Ok(step);
            }
            h /= (fac11 / self.control.safety).min(1.0 / FAC_MIN);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_t: f64, y: &[f64; 2]) -> Option<[f64; 2]> {
        Some([y[1], -y[0]])
    }

    #[test]
    fn harmonic_oscillator_period() {
        let mut f = harmonic;
        let tau = std::f64::consts::TAU;
        let mut s = Dopri5::new(
            &mut f,
            0.0,
            [1.0, 0.0],
            Tolerances::uniform(1e-11, 1e-13),
            StepControl::default(),
        )
        .unwrap();
        while s.t < tau {
            s.step(&mut f, tau).unwrap();
        }
        assert_eq!(s.t, tau);
        assert!((s.y[0] - 1.0).abs() < 1e-9 && s.y[1].abs() < 1e-9, "{:?}", s.y);
    }

    #[test]
    fn backward_direction() {
        let mut f = |_t: f64, y: &[f64; 1]| Some([y[0]]);
        let mut s = Dopri5::new(
            &mut f,
            1.0,
            [1.0f64.exp()],
            Tolerances::uniform(1e-12, 0.0),
            StepControl::default(),
        )
        .unwrap();
        while s.t > 0.0 {
            s.step(&mut f, 0.0).unwrap();
        }
        assert!((s.y[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hermite_matches_solution_inside_step() {
        let mut f = harmonic;
        let mut s = Dopri5::new(
            &mut f,
            0.0,
            [1.0, 0.0],
            Tolerances::uniform(1e-10, 1e-12),
            StepControl::default(),
        )
        .unwrap();
        for _ in 0..5 {
            let st = s.step(&mut f, 10.0).unwrap();
            let tm = 0.5 * (st.t0 + st.t1);
            let y = st.interpolate(tm);
            assert!((y[0] - tm.cos()).abs() < 1e-6);
            assert_eq!(st.interpolate(st.t1), st.y1);
        }
    }

    #[test]
    fn singular_rhs_reports_left_domain() {
        // y' = 1/(1 - t) is undefined from t = 1 on
        let mut f = |t: f64, _y: &[f64; 1]| if t < 1.0 { Some([1.0 / (1.0 - t)]) } else { None };
        let mut s = Dopri5::new(
            &mut f,
            0.0,
            [0.0],
            Tolerances::uniform(1e-10, 1e-12),
            StepControl::default(),
        )
        .unwrap();
        let out = loop {
            match s.step(&mut f, 2.0) {
                Ok(_) => continue,
                Err(e) => break e,
            }
        };
        assert!(matches!(out, StepFailure::LeftDomain | StepFailure::Underflow));
        assert!(s.t < 1.0 && s.t > 0.99);
    }

    #[test]
    fn fifth_order_convergence() {
        // halving a fixed step should cut the global error by about 2^5
        let run = |n: usize| {
            let mut f = harmonic;
            let h = 1.0 / n as f64;
            let (mut t, mut y) = (0.0, [1.0, 0.0]);
            for _ in 0..n {
                let k1 = f(t, &y).unwrap();
                y = rk_step(&mut f, t, &y, &k1, h).unwrap().0;
                t += h;
            }
            (y[0] - 1.0f64.cos()).abs()
        };
        let ratio = run(10) / run(20);
        assert!(ratio > 25.0 && ratio < 40.0, "{ratio}");
    }
}
