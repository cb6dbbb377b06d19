//! Yoshida coefficients at Darboux points and the comparison with the
//! Morales–Ramis necessary conditions.

use serde::Serialize;
use thiserror::Error;

use crate::critical::{find_critical_points, CriticalError, CriticalOptions};
use crate::dsl::{Potential, PotentialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoralesError {
    #[error("V(theta_c) = 0 at theta_c = {theta}")]
    ZeroPotentialValue { theta: f64 },
    #[error("beta = 0")]
    ZeroBeta,
    #[error("beta = 2: the Darboux scale equation does not involve s")]
    BetaTwoScaleDegenerate,
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Critical(#[from] CriticalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YoshidaCoefficient {
    pub theta_c: f64,
    pub lambda: f64,
    pub beta: f64,
    /// The trivial coefficient `β - 1`.
    #[serde(rename = "trivial_coefficient")]
    pub trivial: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub darboux_scale: Option<f64>,
}

/// `λ = V''(θ_c) / (β V(θ_c)) + 1`.
pub fn yoshida_lambda(pot: &Potential, theta_c: f64) -> Result<YoshidaCoefficient, MoralesError> {
    let beta = pot.beta();
    if beta == 0.0 {
        return Err(MoralesError::ZeroBeta);
    }
    let j = pot.eval(theta_c)?;
    if j.value == 0.0 {
        return Err(MoralesError::ZeroPotentialValue { theta: theta_c });
    }
    let darboux_scale = match darboux_from_critical(pot, theta_c) {
        Ok(s) => s,
        Err(MoralesError::BetaTwoScaleDegenerate) => None,
        Err(e) => return Err(e),
    };
    Ok(YoshidaCoefficient {
        theta_c,
        lambda: j.d2 / (beta * j.value) + 1.0,
        beta,
        trivial: beta - 1.0,
        darboux_scale,
    })
}

/// The `s > 0` with `∇U(s e(θ_c)) = s e(θ_c)`, i.e. `s^{β-2} = 1/(β V(θ_c))`;
/// `None` when `β V(θ_c) <= 0`.
pub fn darboux_from_critical(pot: &Potential, theta_c: f64) -> Result<Option<f64>, MoralesError> {
    let beta = pot.beta();
    if beta == 2.0 {
        return Err(MoralesError::BetaTwoScaleDegenerate);
    }
    let bv = beta * pot.value(theta_c)?;
    if !(bv > 0.0) {
        return Ok(None);
    }
    Ok(Some(bv.powf(1.0 / (2.0 - beta))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NecessaryCheck {
    pub satisfied: bool,
    pub margin: f64,
}

/// `-(β+2)²/8 <= (λ-1)β`, boundary counted as satisfied.
pub fn check_integrability_necessary(lambda: f64, beta: f64) -> NecessaryCheck {
    let margin = (lambda - 1.0) * beta + (beta + 2.0).powi(2) / 8.0;
    NecessaryCheck {
        satisfied: margin >= 0.0,
        margin,
    }
}

/// Membership in `{-p(p-3)/2 : p ∈ ℤ}`.
pub fn mr_beta_minus1_member(lambda: f64, tol: f64) -> bool {
    // p² - 3p + 2λ = 0
    let member = |p: f64| -p * (p - 3.0) / 2.0;
    let disc = 9.0 - 8.0 * lambda;
    let centre = [(3.0 + disc.max(0.0).sqrt()) / 2.0, (3.0 - disc.max(0.0).sqrt()) / 2.0];
    centre
        .iter()
        .flat_map(|c| [c.floor(), c.ceil()])
        .any(|p| (lambda - member(p)).abs() <= tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonEntry {
    #[serde(flatten)]
    pub coefficient: YoshidaCoefficient,
    pub necessary_inequality: NecessaryCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mr_beta_minus1_member: Option<bool>,
}

/// Yoshida coefficient and both necessary conditions at every critical
/// point with `V ≠ 0`.
pub fn compare(pot: &Potential) -> Result<Vec<ComparisonEntry>, MoralesError> {
    let cps = find_critical_points(pot, &CriticalOptions::default())?;
    let beta = pot.beta();
    cps.iter()
        .filter(|c| c.value != 0.0)
        .map(|c| {
            let coefficient = yoshida_lambda(pot, c.theta)?;
            Ok(ComparisonEntry {
                necessary_inequality: check_integrability_necessary(coefficient.lambda, beta),
                mr_beta_minus1_member: (beta == -1.0)
                    .then(|| mr_beta_minus1_member(coefficient.lambda, 1e-9)),
                coefficient,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{compile, Builtin, PotentialSpec};

    fn pot(b: Builtin, x: f64) -> Potential {
        compile(&PotentialSpec::builtin(b, x)).unwrap()
    }

    #[test]
    fn lambda_examples() {
        let c = yoshida_lambda(&pot(Builtin::Isosceles, 1.0), 0.0).unwrap();
        assert!((c.lambda - 2.4).abs() < 1e-12);
        assert_eq!(c.trivial, -2.0);
        for eps in [-3.0, 0.5, 4.0] {
            let c = yoshida_lambda(&pot(Builtin::YoshidaG, eps), 0.0).unwrap();
            assert!((c.lambda - eps).abs() < 1e-12);
            assert!(c.darboux_scale.is_none());
        }
        let flat = compile(&PotentialSpec::expr("-1 + sin(theta)^3", -1.0)).unwrap();
        assert!((yoshida_lambda(&flat, 0.0).unwrap().lambda - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_errors() {
        let zero = compile(&PotentialSpec::expr("sin(theta)", 3.0)).unwrap();
        assert_eq!(
            yoshida_lambda(&zero, 0.0),
            Err(MoralesError::ZeroPotentialValue { theta: 0.0 })
        );
        let b0 = compile(&PotentialSpec::expr("cos(theta) - 2", 0.0)).unwrap();
        assert_eq!(yoshida_lambda(&b0, 0.0), Err(MoralesError::ZeroBeta));
        let b2 = compile(&PotentialSpec::expr("cos(theta) + 2", 2.0)).unwrap();
        assert_eq!(darboux_from_critical(&b2, 0.0), Err(MoralesError::BetaTwoScaleDegenerate));
    }

    #[test]
    fn darboux_examples() {
        let s = darboux_from_critical(&pot(Builtin::Isosceles, 1.0), 0.0).unwrap().unwrap();
        assert!((s - 5f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!((s - 1.70998).abs() < 1e-5);
        assert_eq!(darboux_from_critical(&pot(Builtin::YoshidaG, 4.0), 0.0).unwrap(), None);
        // βV = 1
        let unit = compile(&PotentialSpec::expr("cos(theta)", -1.0)).unwrap();
        assert!((darboux_from_critical(&unit, std::f64::consts::PI).unwrap().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn necessary_inequality_examples() {
        let c = check_integrability_necessary(9.0 / 8.0, -1.0);
        assert!(c.satisfied && c.margin.abs() < 1e-15);
        let c = check_integrability_necessary(2.4, -1.0);
        assert!(!c.satisfied && (c.margin + 1.275).abs() < 1e-12);
        for beta in [-5.0, -1.0, 0.5, 3.0] {
            assert!(check_integrability_necessary(1.0, beta).satisfied);
        }
    }

    #[test]
    fn mr_membership() {
        for l in [1.0, 0.0, -2.0, -5.0, -9.0] {
            assert!(mr_beta_minus1_member(l, 1e-9), "{l}");
        }
        assert!(!mr_beta_minus1_member(0.5, 1e-9));
        assert!(!mr_beta_minus1_member(1.1, 1e-9));
        assert!(!mr_beta_minus1_member(-3.0, 1e-9));
        for p in -20..=20 {
            let l = -(p as f64) * (p as f64 - 3.0) / 2.0;
            assert!(mr_beta_minus1_member(l, 1e-9));
            assert!(l <= 9.0 / 8.0);
            assert!(check_integrability_necessary(l, -1.0).satisfied);
        }
    }

    #[test]
    fn yoshida_lower_threshold_matches_certifier() {
        for k in 0..200 {
            let eps = -2.0 + 4.0 * k as f64 / 199.0;
            if (eps + 0.125).abs() < 1e-9 {
                continue;
            }
            let c = check_integrability_necessary(eps, 4.0);
            assert_eq!(c.satisfied, eps > -0.125, "{eps}");
        }
    }

    /// Central-difference Hessian of `U` at the Darboux point: its
    /// tangential eigenvalue reproduces `λ`.
    #[test]
    fn hessian_route_reproduces_lambda() {
        for (b, x) in [(Builtin::Isosceles, 1.0), (Builtin::Isosceles, 6.0)] {
            let p = pot(b, x);
            let c = yoshida_lambda(&p, 0.0).unwrap();
            let s = c.darboux_scale.unwrap();
            let q = [s, 0.0];
            let g = p.grad_u(q).unwrap();
            assert!((g[0] - s).abs() < 1e-10 && g[1].abs() < 1e-10);
            let h = 1e-4;
            let u = |dx: f64, dy: f64| p.eval_u([q[0] + dx, q[1] + dy]).unwrap();
            let uyy = (u(0.0, h) - 2.0 * u(0.0, 0.0) + u(0.0, -h)) / (h * h);
            let uxx = (u(h, 0.0) - 2.0 * u(0.0, 0.0) + u(-h, 0.0)) / (h * h);
            assert!((uyy - c.lambda).abs() < 1e-6 * c.lambda.abs().max(1.0), "{uyy} vs {}", c.lambda);
            assert!((uxx - c.trivial).abs() < 1e-6);
        }
    }

    #[test]
    fn compare_report() {
        let entries = compare(&pot(Builtin::Isosceles, 1.0)).unwrap();
        assert_eq!(entries.len(), 3);
        let mid = &entries[1];
        assert!((mid.coefficient.lambda - 2.4).abs() < 1e-12);
        assert_eq!(mid.mr_beta_minus1_member, Some(false));
        let v = serde_json::to_value(mid).unwrap();
        assert!(v.get("necessary_inequality").is_some());
        assert!(v.get("darboux_scale").is_some());
        assert!(v.get("theta_c").is_some());
    }
}
