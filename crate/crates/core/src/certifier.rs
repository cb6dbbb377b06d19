//! Six-assumption non-integrability check on triples of critical points.
//!
//! For consecutive critical points `θ₋₁ < θ₀ < θ₁` of `V` the checks are
//!
//! 1. `β ∉ {-2, 0}`
//! 2. the three angles are distinct critical points (`θ₁ = θ₋₁ + 2π` allowed)
//! 3. `V < 0` on `[θ₋₁, θ₁]`
//! 4. `V' ≠ 0` on `(θ₋₁, θ₀) ∪ (θ₀, θ₁)`
//! 5. `V''(θ±₁) < 0`
//! 6. `-(β+2)² V(θ₀) / 8 < V''(θ₀)`
//!
//! Every check reports a signed margin (positive means satisfied with that
//! much slack). Strict inequalities require `margin > strictness_tol`;
//! margins inside `[-tol, tol]` are flagged as boundary cases and never
//! counted as satisfied.

use std::f64::consts::TAU;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::critical::{find_critical_points, CriticalError, CriticalOptions};
use crate::dsl::{Potential, PotentialError, PotentialSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertError {
    #[error(transparent)]
    Critical(#[from] CriticalError),
    #[error("theta = {theta} is not a critical point (|V'| = {slope:e})")]
    NotCriticalPoint { theta: f64, slope: f64 },
    #[error("triple leaves the potential's domain: {0}")]
    DomainViolation(PotentialError),
    #[error("{count} critical point(s) found; no triple can be formed")]
    NoCandidateTriple { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Conclusion {
    NonIntegrable,
    Inconclusive,
}

impl fmt::Display for Conclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conclusion::NonIntegrable => "NonIntegrable",
            Conclusion::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Direct,
    /// Obtained for `-V` after the complex rescaling `(P, Q) = (i p, i q)`.
    Complexified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub index: u8,
    pub satisfied: bool,
    pub margin: f64,
    pub detail: String,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub triple: [f64; 3],
    pub reports: Vec<AssumptionReport>,
    pub conclusion: Conclusion,
    pub kind: CertificateKind,
    pub beta: f64,
    /// Complexified certificates rest on complex analyticity of `V`,
    /// which is taken on the user's word.
    pub analyticity_asserted: bool,
    pub potential: PotentialSpec,
}

impl Certificate {
    pub fn report(&self, index: u8) -> &AssumptionReport {
        &self.reports[index as usize - 1]
    }

    pub fn margin6(&self) -> f64 {
        self.report(6).margin
    }

    fn satisfied_through_5(&self) -> usize {
        self.reports[..5].iter().filter(|r| r.satisfied).count()
    }

    pub fn statement(&self) -> &'static str {
        match (self.conclusion, self.kind) {
            (Conclusion::Inconclusive, _) => {
                "inconclusive: the assumptions are not all verified; nothing is asserted"
            }
            (Conclusion::NonIntegrable, CertificateKind::Direct) => {
                "no real-meromorphic first integral independent of H"
            }
            (Conclusion::NonIntegrable, CertificateKind::Complexified) => {
                "no meromorphic first integral independent of H"
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "conclusion": self.conclusion,
            "kind": self.kind,
            "beta": self.beta,
            "triple": self.triple,
            "assumptions": self.reports,
            "statement": self.statement(),
            "potential": self.potential.to_json(),
        });
        if self.kind == CertificateKind::Complexified {
            v["analyticity_asserted"] = serde_json::Value::Bool(self.analyticity_asserted);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub strictness_tol: f64,
    /// `|V'|` above this at a supplied angle is a `NotCriticalPoint` error.
    pub critical_tol: f64,
    pub value_grid: usize,
    pub slope_grid: usize,
    pub critical: CriticalOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            strictness_tol: 1e-9,
            critical_tol: 1e-9,
            value_grid: 1024,
            slope_grid: 256,
            critical: CriticalOptions::default(),
        }
    }
}

fn report(index: u8, margin: f64, tol: f64, detail: String) -> AssumptionReport {
    let boundary = margin.abs() <= tol;
    AssumptionReport {
        index,
        satisfied: margin > tol,
        margin,
        detail: if boundary {
            format!("{detail} [boundary: |margin| <= {tol:e}]")
        } else {
            detail
        },
        boundary,
    }
}

pub fn check_triple(
    pot: &Potential,
    triple: [f64; 3],
    opts: &CertifyOptions,
) -> Result<Certificate, CertError> {
    let tol = opts.strictness_tol;
    let beta = pot.beta();
    let [tm, t0, tp] = triple;
    let eval = |th: f64| pot.eval(th).map_err(CertError::DomainViolation);

    let jm = eval(tm)?;
    let j0 = eval(t0)?;
    let jp = eval(tp)?;
    for (th, j) in [(tm, jm), (t0, j0), (tp, jp)] {
        if j.d1.abs() > opts.critical_tol {
            return Err(CertError::NotCriticalPoint {
                theta: th,
                slope: j.d1,
            });
        }
    }

    let mut reports = Vec::with_capacity(6);

    let m1 = beta.abs().min((beta + 2.0).abs());
    reports.push(report(
        1,
        m1,
        tol,
        format!("beta = {beta}; distance to {{-2, 0}} = {m1}"),
    ));

    let span_ok = tp <= tm + TAU + 1e-12;
    let gap = (t0 - tm).min(tp - t0);
    let m2 = if span_ok { gap } else { -(tp - tm - TAU) };
    reports.push(report(
        2,
        m2,
        tol,
        if span_ok {
            format!("ordered critical points with minimum gap {gap}")
        } else {
            "theta_1 exceeds theta_-1 + 2pi".to_string()
        },
    ));

    let n = opts.value_grid;
    let mut vmax = jm.value.max(j0.value).max(jp.value);
    let mut argmax = if vmax == j0.value { t0 } else if vmax == jm.value { tm } else { tp };
    for k in 0..=n {
        let th = tm + (tp - tm) * k as f64 / n as f64;
        let v = eval(th)?.value;
        if v > vmax {
            vmax = v;
            argmax = th;
        }
    }
    reports.push(report(
        3,
        -vmax,
        tol,
        format!("max V on [theta_-1, theta_1] = {vmax} at theta = {argmax}"),
    ));

    let mut m4 = f64::INFINITY;
    let mut sides = Vec::with_capacity(2);
    for (a, b) in [(tm, t0), (t0, tp)] {
        let s = opts.slope_grid;
        let sign = eval(0.5 * (a + b))?.d1.signum();
        let mut worst = f64::INFINITY;
        for k in 1..s {
            let th = a + (b - a) * k as f64 / s as f64;
            worst = worst.min(sign * eval(th)?.d1);
        }
        sides.push(worst);
        m4 = m4.min(worst);
    }
    reports.push(report(
        4,
        m4,
        tol,
        format!(
            "signed min |V'| on open sub-intervals = ({}, {})",
            sides[0], sides[1]
        ),
    ));

    let m5 = -jm.d2.max(jp.d2);
    reports.push(report(
        5,
        m5,
        tol,
        format!("V''(theta_-1) = {}, V''(theta_1) = {}", jm.d2, jp.d2),
    ));

    let rhs = -(beta + 2.0).powi(2) * j0.value / 8.0;
    let m6 = j0.d2 - rhs;
    reports.push(report(
        6,
        m6,
        tol,
        format!("V''(theta_0) = {} vs -(beta+2)^2 V(theta_0)/8 = {}", j0.d2, rhs),
    ));

    let conclusion = if reports.iter().all(|r| r.satisfied) {
        Conclusion::NonIntegrable
    } else {
        Conclusion::Inconclusive
    };
    Ok(Certificate {
        triple,
        reports,
        conclusion,
        kind: CertificateKind::Direct,
        beta,
        analyticity_asserted: false,
        potential: pot.spec().clone(),
    })
}

/// Consecutive critical-point triples; circular domains include the wrap
/// triples and, with only two critical points, the `θ₁ = θ₋₁ + 2π` form.
pub fn candidate_triples(thetas: &[f64], periodic: bool) -> Vec<[f64; 3]> {
    let n = thetas.len();
    match (periodic, n) {
        (_, 0) | (_, 1) => Vec::new(),
        (true, 2) => vec![
            [thetas[0], thetas[1], thetas[0] + TAU],
            [thetas[1], thetas[0] + TAU, thetas[1] + TAU],
        ],
        (true, _) => (0..n)
            .map(|i| {
                let left = if i == 0 { thetas[n - 1] - TAU } else { thetas[i - 1] };
                let right = if i + 1 == n { thetas[0] + TAU } else { thetas[i + 1] };
                [left, thetas[i], right]
            })
            .collect(),
        (false, _) => thetas.windows(3).map(|w| [w[0], w[1], w[2]]).collect(),
    }
}

fn best_of(certs: Vec<Certificate>) -> Option<Certificate> {
    let key = |c: &Certificate| {
        (
            c.conclusion == Conclusion::NonIntegrable,
            c.satisfied_through_5(),
            c.margin6(),
        )
    };
    certs.into_iter().reduce(|best, c| {
        let (kb, kc) = (key(&best), key(&c));
        let better = (kc.0, kc.1) > (kb.0, kb.1) || ((kc.0, kc.1) == (kb.0, kb.1) && kc.2 > kb.2);
        if better {
            c
        } else {
            best
        }
    })
}

fn certify_direct(pot: &Potential, opts: &CertifyOptions) -> Result<Certificate, CertError> {
    let cps = find_critical_points(pot, &opts.critical)?;
    let thetas: Vec<f64> = cps.iter().map(|c| c.theta).collect();
    let triples = candidate_triples(&thetas, pot.domain().is_periodic());
    let certs = triples
        .into_iter()
        .map(|t| check_triple(pot, t, opts))
        .collect::<Result<Vec<_>, _>>()?;
    best_of(certs).ok_or(CertError::NoCandidateTriple { count: cps.len() })
}

/// Best certificate over all candidate triples.
///
/// With `allow_sign_flip`, an inconclusive direct result is retried on
/// `-V`; a success there is returned as a complexified certificate.
pub fn certify(
    pot: &Potential,
    allow_sign_flip: bool,
    opts: &CertifyOptions,
) -> Result<Certificate, CertError> {
    let direct = certify_direct(pot, opts)?;
    if direct.conclusion == Conclusion::NonIntegrable || !allow_sign_flip {
        return Ok(direct);
    }
    let flipped = certify_direct(&pot.negated(), opts)?;
    if flipped.conclusion == Conclusion::NonIntegrable {
        return Ok(Certificate {
            kind: CertificateKind::Complexified,
            analyticity_asserted: true,
            ..flipped
        });
    }
    Ok(direct)
}
