//! Zeros of `V'` on the analysis domain.
//!
//! `V'` is sampled on a uniform grid, sign changes are bracketed and each
//! bracket is bisected down to `root_tol`. Zeros of even order (touching
//! zeros without a sign change) are not detected.

use std::f64::consts::TAU;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{Domain, Potential, PotentialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriticalError {
    #[error("V' vanishes identically (max |V'| = {max_slope:e}); V is constant")]
    DegeneratePotential { max_slope: f64 },
    #[error("potential evaluation failed inside the guard band: {0}")]
    PoleEncountered(PotentialError),
    #[error("grid_n must be at least 16, got {0}")]
    GridTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Max,
    Min,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub theta: f64,
    #[serde(rename = "V")]
    pub value: f64,
    #[serde(rename = "V2")]
    pub second: f64,
    pub classification: Classification,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalOptions {
    pub grid_n: usize,
    pub root_tol: f64,
    /// Inward shrink of open-interval endpoints.
    pub guard: f64,
    pub class_tol: f64,
    /// Relative to `max(1, max |V|)` on the grid.
    pub degeneracy_tol: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions {
            grid_n: 4096,
            root_tol: 1e-12,
            guard: 1e-6,
            class_tol: 1e-9,
            degeneracy_tol: 1e-12,
        }
    }
}

pub fn classify_second(v2: f64, class_tol: f64) -> Classification {
    if v2 < -class_tol {
        Classification::Max
    } else if v2 > class_tol {
        Classification::Min
    } else {
        Classification::Degenerate
    }
}

pub fn classify(
    cp_theta: f64,
    pot: &Potential,
    class_tol: f64,
) -> Result<Classification, PotentialError> {
    Ok(classify_second(pot.eval(cp_theta)?.d2, class_tol))
}

pub fn find_critical_points(
    pot: &Potential,
    opts: &CriticalOptions,
) -> Result<Vec<CriticalPoint>, CriticalError> {
    let n = opts.grid_n;
    if n < 16 {
        return Err(CriticalError::GridTooSmall(n));
    }
    let domain = pot.domain();
    let (lo, hi, periodic) = match domain {
        Domain::Circle => (0.0, TAU, true),
        Domain::Interval { lo, hi } => (lo + opts.guard, hi - opts.guard, false),
    };
    // Periodic grids omit the right endpoint; the wrap bracket closes them.
    let samples = if periodic { n } else { n + 1 };
    let step = (hi - lo) / n as f64;
    let mut thetas = Vec::with_capacity(samples);
    let mut slopes = Vec::with_capacity(samples);
    let mut vmax = 1.0f64;
    for k in 0..samples {
        let th = lo + k as f64 * step;
        let j = pot.eval(th).map_err(CriticalError::PoleEncountered)?;
        vmax = vmax.max(j.value.abs());
        thetas.push(th);
        slopes.push(j.d1);
    }
    let max_slope = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if max_slope < opts.degeneracy_tol * vmax {
        return Err(CriticalError::DegeneratePotential { max_slope });
    }

    let slope = |th: f64| pot.eval(th).map(|j| j.d1).map_err(CriticalError::PoleEncountered);
    let mut roots = Vec::new();
    let brackets = if periodic { samples } else { samples - 1 };
    for k in 0..brackets {
        let (a, fa) = (thetas[k], slopes[k]);
        let (b, fb) = if k + 1 < samples {
            (thetas[k + 1], slopes[k + 1])
        } else {
            (TAU, slopes[0])
        };
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            roots.push(bisect(&slope, a, b, fa, opts.root_tol)?);
        }
    }
    if periodic {
        for r in roots.iter_mut() {
            *r = r.rem_euclid(TAU);
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|b, a| (*b - *a).abs() < 10.0 * opts.root_tol);
    if periodic && roots.len() > 1 {
        let first = roots[0];
        let last = *roots.last().unwrap();
        if first + TAU - last < 10.0 * opts.root_tol {
            roots.pop();
        }
    }

    roots
        .into_iter()
        .map(|theta| {
            let j = pot.eval(theta).map_err(CriticalError::PoleEncountered)?;
            Ok(CriticalPoint {
                theta,
                value: j.value,
                second: j.d2,
                classification: classify_second(j.d2, opts.class_tol),
            })
        })
        .collect()
}

fn bisect(
    f: &impl Fn(f64) -> Result<f64, CriticalError>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    tol: f64,
) -> Result<f64, CriticalError> {
    for _ in 0..200 {
        if b - a < tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}
