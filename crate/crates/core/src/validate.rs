//! Built-in self-check suite: a fast version of the invariants the test
//! suite checks at full size, runnable from the command line.

use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::{compile, Builtin, Potential, PotentialSpec};
use crate::mcgehee::{
    from_mcgehee, integrate, integrate_cartesian, integrate_manifold, integrate_to_times,
    to_mcgehee, FlowOptions, ManifoldMode, ManifoldOptions, ManifoldState, McGeheeState,
    Termination,
};
use crate::sweep::{sweep_threshold, SweepOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error (or the observed value for threshold checks).
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

fn check(name: &'static str, value: f64, tolerance: f64, detail: String) -> ValidationCheck {
    ValidationCheck {
        name,
        passed: value <= tolerance,
        value,
        tolerance,
        detail,
    }
}

fn failed(name: &'static str, tolerance: f64, detail: String) -> ValidationCheck {
    ValidationCheck {
        name,
        passed: false,
        value: f64::NAN,
        tolerance,
        detail,
    }
}

fn builtin(b: Builtin, x: f64) -> Potential {
    compile(&PotentialSpec::builtin(b, x)).expect("builtins compile")
}

/// `V'` against a central difference of `V`, `V''` against one of `V'`.
fn jet_vs_fd() -> ValidationCheck {
    let pots = [
        builtin(Builtin::Isosceles, 1.0),
        builtin(Builtin::YoshidaG, 4.0),
        builtin(Builtin::YoshidaH, 4.0),
        compile(&PotentialSpec::expr("-2 + sin(theta)^3*exp(cos(theta)/3)", 1.5)).unwrap(),
    ];
    let h = 1e-5;
    let mut worst = 0.0f64;
    for p in &pots {
        let (a, b) = p.domain().bounds();
        let (a, b) = if p.domain().is_periodic() { (a, b) } else { (a + 0.05, b - 0.05) };
        for k in 0..1000 {
            let th = a + (b - a) * k as f64 / 999.0;
            let j = p.eval(th).unwrap();
            let (lo, hi) = (p.eval(th - h).unwrap(), p.eval(th + h).unwrap());
            let d1 = (hi.value - lo.value) / (2.0 * h);
            let d2 = (hi.d1 - lo.d1) / (2.0 * h);
            worst = worst
                .max((d1 - j.d1).abs() / j.d1.abs().max(1.0))
                .max((d2 - j.d2).abs() / j.d2.abs().max(1.0));
        }
    }
    check("jet_vs_finite_difference", worst, 1e-6, format!("{} potentials x 1000 angles", pots.len()))
}

fn energy_conservation() -> ValidationCheck {
    let pot = builtin(Builtin::YoshidaG, 4.0);
    let states = [
        McGeheeState::new(1.0, 0.3, 0.2, -0.5),
        McGeheeState::new(0.7, 2.1, -0.8, 0.4),
        McGeheeState::new(1.6, 4.4, 0.6, 0.9),
    ];
    let mut worst = 0.0f64;
    for s in &states {
        match integrate(s, &pot, (0.0, 50.0), &FlowOptions::default()) {
            Ok(t) if t.termination == Termination::SpanEnd => worst = worst.max(t.energy_drift()),
            Ok(t) => return failed("energy_conservation", 1e-8, format!("stopped: {}", t.termination.name())),
            Err(e) => return failed("energy_conservation", 1e-8, e.to_string()),
        }
    }
    check("energy_conservation", worst, 1e-8, "yoshida_g(4), tau in [0, 50], rtol 1e-10".into())
}

fn on_manifold(pot: &Potential, theta: f64, phi: f64) -> ManifoldState {
    let rho = (-2.0 * pot.value(theta).unwrap()).sqrt();
    ManifoldState::new(theta, rho * phi.cos(), rho * phi.sin())
}

fn manifold_invariance() -> ValidationCheck {
    let pot = builtin(Builtin::YoshidaG, 4.0);
    let m0 = on_manifold(&pot, 0.4, 2.0);
    match integrate_manifold(&m0, &pot, (0.0, 30.0), &ManifoldOptions::default()) {
        Ok(t) => check("manifold_invariance", t.max_abs_z, 1e-9, "yoshida_g(4), tau in [0, 30]".into()),
        Err(e) => failed("manifold_invariance", 1e-9, e.to_string()),
    }
}

/// Largest decrease of `v` between consecutive samples.
fn gradient_like() -> ValidationCheck {
    let pot = builtin(Builtin::YoshidaG, 4.0);
    let opts = ManifoldOptions {
        mode: ManifoldMode::Projected,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for (th, phi) in [(0.2, 1.0), (1.3, 3.5), (2.9, 5.0)] {
        let m0 = on_manifold(&pot, th, phi);
        match integrate_manifold(&m0, &pot, (0.0, 20.0), &opts) {
            Ok(t) => {
                for w in t.samples.windows(2) {
                    worst = worst.max(w[0].v - w[1].v);
                }
            }
            Err(e) => return failed("gradient_like", 1e-10, e.to_string()),
        }
    }
    check("gradient_like", worst, 1e-10, "max decrease of v along 3 orbits".into())
}

fn flow_equivalence() -> ValidationCheck {
    let pot = builtin(Builtin::Isosceles, 1.0);
    let times: Vec<f64> = (1..=10).map(|k| 0.5 * k as f64).collect();
    let opts = FlowOptions {
        rtol: 1e-12,
        atol: 1e-14,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for (q, p) in [([1.5, 0.0], [4.0, 0.5]), ([1.2, 0.3], [3.8, -0.2])] {
        let run = || -> Result<f64, String> {
            let cart = integrate_cartesian(p, q, &pot, 5.0, &times, 1e-12, 1e-14)
                .map_err(|e| e.to_string())?;
            let s0 = to_mcgehee(p, q, pot.beta()).map_err(|e| e.to_string())?;
            let mc = integrate_to_times(&s0, &pot, &times, 1e3, &opts).map_err(|e| e.to_string())?;
            let mut w = 0.0f64;
            for (t, m) in times.iter().zip(&mc) {
                let c = cart.at(*t).ok_or("missing cartesian sample")?;
                let (_, qm) = from_mcgehee(m, pot.beta());
                w = w.max((qm[0] - c.q[0]).hypot(qm[1] - c.q[1]));
            }
            Ok(w)
        };
        match run() {
            Ok(w) => worst = worst.max(w),
            Err(e) => return failed("flow_equivalence", 1e-6, e),
        }
    }
    check("flow_equivalence", worst, 1e-6, "isosceles(1), t in [0, 5]".into())
}

fn threshold(
    name: &'static str,
    b: Builtin,
    range: (f64, f64),
    expected: f64,
    allow_sign_flip: bool,
) -> ValidationCheck {
    let opts = SweepOptions {
        samples: 60,
        allow_sign_flip,
        ..Default::default()
    };
    let spec = PotentialSpec::builtin(b, range.0);
    match sweep_threshold(&spec, b.parameter(), range.0, range.1, &opts) {
        Ok(r) if r.thresholds.len() == 1 => check(
            name,
            (r.thresholds[0].value - expected).abs(),
            1e-6,
            format!("threshold {} (expected {expected})", r.thresholds[0].value),
        ),
        Ok(r) => failed(name, 1e-6, format!("{} thresholds: {:?}", r.thresholds.len(), r.threshold_values())),
        Err(e) => failed(name, 1e-6, e.to_string()),
    }
}

pub fn run_validation() -> Vec<ValidationCheck> {
    let tasks: Vec<fn() -> ValidationCheck> = vec![
        jet_vs_fd,
        energy_conservation,
        manifold_invariance,
        gradient_like,
        flow_equivalence,
        || threshold("isosceles_threshold", Builtin::Isosceles, (1.0, 20.0), 13.75, false),
        || threshold("yoshida_lower_threshold", Builtin::YoshidaG, (-0.9, 0.9), -0.125, false),
        || threshold("yoshida_upper_threshold", Builtin::YoshidaG, (1.1, 10.0), 25.0 / 7.0, false),
    ];
    tasks.into_par_iter().map(|f| f()).collect()
}
