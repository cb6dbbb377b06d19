//! One-parameter sweeps of the certifier with bisection-refined thresholds.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::certifier::{certify, CertificateKind, Conclusion, CertifyOptions};
use crate::dsl::{compile, parse_expression, PotentialError, PotentialSpec, Source};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("`{0}` is not a parameter of this potential")]
    UnknownParameter(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub samples: usize,
    /// Bisection stops once the bracket is narrower than this.
    pub tol: f64,
    pub allow_sign_flip: bool,
    pub certify: CertifyOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            samples: 200,
            tol: 1e-9,
            allow_sign_flip: false,
            certify: CertifyOptions::default(),
        }
    }
}

/// Outcome of certifying at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Certified { conclusion: Conclusion, kind: CertificateKind, margin6: f64 },
    Failed(String),
}

impl Verdict {
    pub fn conclusion(&self) -> Option<Conclusion> {
        match self {
            Verdict::Certified { conclusion, .. } => Some(*conclusion),
            Verdict::Failed(_) => None,
        }
    }

    fn label(&self) -> String {
        match self {
            Verdict::Certified { conclusion, .. } => conclusion.to_string(),
            Verdict::Failed(_) => "error".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub value: f64,
    /// Final bracket `[lo, hi]`; the conclusion differs at its ends.
    pub bracket: [f64; 2],
    pub width: f64,
    pub below: Conclusion,
    pub above: Conclusion,
    /// False when a failed evaluation stopped the bisection early.
    pub refined: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub param: String,
    pub grid: Vec<(f64, Verdict)>,
    pub thresholds: Vec<Threshold>,
}

impl SweepResult {
    pub fn threshold_values(&self) -> Vec<f64> {
        self.thresholds.iter().map(|t| t.value).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let grid: Vec<_> = self
            .grid
            .iter()
            .map(|(x, v)| serde_json::json!([x, v.label()]))
            .collect();
        let kinds: Vec<_> = self
            .grid
            .iter()
            .map(|(_, v)| match v {
                Verdict::Certified { kind, .. } => serde_json::json!(kind),
                Verdict::Failed(_) => serde_json::Value::Null,
            })
            .collect();
        let errors: Vec<_> = self
            .grid
            .iter()
            .filter_map(|(x, v)| match v {
                Verdict::Failed(e) => Some(serde_json::json!({"value": x, "error": e})),
                _ => None,
            })
            .collect();
        serde_json::json!({
            "param": self.param,
            "grid": grid,
            "kinds": kinds,
            "thresholds": self.threshold_values(),
            "threshold_details": self.thresholds,
            "errors": errors,
        })
    }
}

fn check_parameter(spec: &PotentialSpec, param: &str) -> Result<(), SweepError> {
    let known = match &spec.source {
        Source::Builtin(b) => b.parameter() == param,
        Source::Expr(text) => parse_expression(text)
            .map_err(PotentialError::from)?
            .parameters()
            .contains(param),
    };
    if known {
        Ok(())
    } else {
        Err(SweepError::UnknownParameter(param.to_string()))
    }
}

pub fn evaluate(spec: &PotentialSpec, param: &str, x: f64, opts: &SweepOptions) -> Verdict {
    let spec = spec.clone().with_param(param, x);
    let pot = match compile(&spec) {
        Ok(p) => p,
        Err(e) => return Verdict::Failed(e.to_string()),
    };
    match certify(&pot, opts.allow_sign_flip, &opts.certify) {
        Ok(c) => Verdict::Certified {
            conclusion: c.conclusion,
            kind: c.kind,
            margin6: c.margin6(),
        },
        Err(e) => Verdict::Failed(e.to_string()),
    }
}

fn bisect(
    spec: &PotentialSpec,
    param: &str,
    (mut lo, below): (f64, Conclusion),
    (mut hi, above): (f64, Conclusion),
    opts: &SweepOptions,
) -> Threshold {
    let mut refined = true;
    while hi - lo >= opts.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match evaluate(spec, param, mid, opts).conclusion() {
            Some(c) if c == below => lo = mid,
            Some(_) => hi = mid,
            None => {
                refined = false;
                break;
            }
        }
    }
    Threshold {
        value: 0.5 * (lo + hi),
        bracket: [lo, hi],
        width: hi - lo,
        below,
        above,
        refined,
    }
}

/// Certify on a uniform grid of `opts.samples` points over `[lo, hi]` and
/// bisect every adjacent pair whose conclusions differ. Samples that fail
/// to compile or certify are recorded and never used as bracket ends.
pub fn sweep_threshold(
    spec: &PotentialSpec,
    param: &str,
    lo: f64,
    hi: f64,
    opts: &SweepOptions,
) -> Result<SweepResult, SweepError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(SweepError::InvalidRange(format!("{lo}:{hi}")));
    }
    if opts.samples < 2 {
        return Err(SweepError::InvalidRange(format!("{} samples", opts.samples)));
    }
    check_parameter(spec, param)?;
    compile(&spec.clone().with_param(param, lo))?;
    compile(&spec.clone().with_param(param, hi))?;

    let m = opts.samples;
    let grid: Vec<(f64, Verdict)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let x = if i == m - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (m - 1) as f64
            };
            (x, evaluate(spec, param, x, opts))
        })
        .collect();

    let ok: Vec<(f64, Conclusion)> = grid
        .iter()
        .filter_map(|(x, v)| v.conclusion().map(|c| (*x, c)))
        .collect();
    let thresholds = ok
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| (w[0], w[1]))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(a, b)| bisect(spec, param, a, b, opts))
        .collect();
    Ok(SweepResult {
        param: param.to_string(),
        grid,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Builtin;

    fn coarse() -> SweepOptions {
        SweepOptions {
            samples: 40,
            ..SweepOptions::default()
        }
    }

    #[test]
    fn isosceles_threshold() {
        let spec = PotentialSpec::builtin(Builtin::Isosceles, 1.0);
        let r = sweep_threshold(&spec, "alpha", 1.0, 20.0, &coarse()).unwrap();
        assert_eq!(r.thresholds.len(), 1);
        let t = r.thresholds[0];
        assert!((t.value - 13.75).abs() < 1e-8, "{t:?}");
        assert!(t.width < 1e-9 && t.refined);
        assert_eq!(t.below, Conclusion::NonIntegrable);
    }

    #[test]
    fn expression_parameter_sweep() {
        // Only θ₀ = 0 has maxima as neighbours; there V = -1 - c, V'' = 4c
        // and the A6 margin 4c - (1 + c)/8 vanishes at c = 1/31.
        let spec = PotentialSpec::expr("-1 - c*cos(2*theta)", -1.0).with_param("c", 0.5);
        let r = sweep_threshold(&spec, "c", 0.001, 0.5, &coarse()).unwrap();
        assert_eq!(r.threshold_values().len(), 1, "{:?}", r.to_json());
        assert!((r.thresholds[0].value - 1.0 / 31.0).abs() < 1e-8);
        assert_eq!(r.thresholds[0].above, Conclusion::NonIntegrable);
    }

    #[test]
    fn errors() {
        let spec = PotentialSpec::builtin(Builtin::Isosceles, 1.0);
        assert_eq!(
            sweep_threshold(&spec, "beta", 1.0, 2.0, &coarse()).unwrap_err(),
            SweepError::UnknownParameter("beta".into())
        );
        assert!(matches!(
            sweep_threshold(&spec, "alpha", 2.0, 1.0, &coarse()),
            Err(SweepError::InvalidRange(_))
        ));
    }

    #[test]
    fn degenerate_samples_are_recorded() {
        let spec = PotentialSpec::builtin(Builtin::YoshidaG, 0.0);
        let r = sweep_threshold(&spec, "epsilon", 0.0, 2.0, &SweepOptions {
            samples: 3,
            ..SweepOptions::default()
        })
        .unwrap();
        assert!(matches!(r.grid[1].1, Verdict::Failed(_)));
        let json = r.to_json();
        assert_eq!(json["grid"][1][1], "error");
        assert_eq!(json["errors"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn deterministic() {
        let spec = PotentialSpec::builtin(Builtin::YoshidaG, 0.0);
        let a = sweep_threshold(&spec, "epsilon", -0.9, 0.9, &coarse()).unwrap();
        let b = sweep_threshold(&spec, "epsilon", -0.9, 0.9, &coarse()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.thresholds.len(), 1);
        assert!((a.thresholds[0].value + 0.125).abs() < 1e-8);
    }
}
