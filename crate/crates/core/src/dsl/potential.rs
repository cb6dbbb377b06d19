use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{parse_expression, EvalError, ExpressionNode, ParseError};
use crate::jet::{Jet2, JetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("unknown builtin `{0}` (expected isosceles, yoshida_g or yoshida_h)")]
    UnknownBuiltin(String),
    #[error("invalid potential spec: {0}")]
    InvalidSpec(String),
    #[error("exponent must not depend on theta")]
    NonConstantExponent,
    #[error("domain error at theta = {theta}: {detail}")]
    DomainError { theta: f64, detail: String },
    #[error("spec file error: {0}")]
    Io(String),
    #[error("schema violation at `{path}`: {detail}")]
    Schema { path: String, detail: String },
}

/// Angular domain on which `V` is analysed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// `[0, 2π)` with periodic topology.
    Circle,
    /// Open interval `(lo, hi)` with `lo < hi <= lo + 2π`.
    Interval { lo: f64, hi: f64 },
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Domain, PotentialError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi && hi <= lo + TAU) {
            return Err(PotentialError::InvalidSpec(format!(
                "domain ({lo}, {hi}) must satisfy lo < hi <= lo + 2pi"
            )));
        }
        Ok(Domain::Interval { lo, hi })
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Circle)
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Domain::Circle => (0.0, TAU),
            Domain::Interval { lo, hi } => (lo, hi),
        }
    }

    /// Map an arbitrary angle into the domain by shifts of `2π`.
    pub fn reduce(&self, theta: f64) -> Option<f64> {
        match *self {
            Domain::Circle => Some(theta.rem_euclid(TAU)),
            Domain::Interval { lo, hi } => {
                if theta > lo && theta < hi {
                    return Some(theta);
                }
                let k = ((theta - lo) / TAU).floor();
                let t = theta - k * TAU;
                (t > lo && t < hi).then_some(t)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Isosceles,
    YoshidaG,
    YoshidaH,
}

impl Builtin {
    pub fn from_name(name: &str) -> Result<Builtin, PotentialError> {
        match name {
            "isosceles" => Ok(Builtin::Isosceles),
            "yoshida_g" => Ok(Builtin::YoshidaG),
            "yoshida_h" => Ok(Builtin::YoshidaH),
            other => Err(PotentialError::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Isosceles => "isosceles",
            Builtin::YoshidaG => "yoshida_g",
            Builtin::YoshidaH => "yoshida_h",
        }
    }

    pub fn beta(self) -> f64 {
        match self {
            Builtin::Isosceles => -1.0,
            Builtin::YoshidaG | Builtin::YoshidaH => 4.0,
        }
    }

    pub fn parameter(self) -> &'static str {
        match self {
            Builtin::Isosceles => "alpha",
            Builtin::YoshidaG | Builtin::YoshidaH => "epsilon",
        }
    }

    pub fn expression(self) -> &'static str {
        match self {
            // planar isosceles three-body problem, alpha = m3/m
            Builtin::Isosceles => {
                "-1/cos(theta) - 4*alpha^(3/2)/sqrt(alpha + 2*sin(theta)^2)"
            }
            Builtin::YoshidaG => {
                "-(cos(theta)^4 + sin(theta)^4)/4 - (epsilon/2)*cos(theta)^2*sin(theta)^2"
            }
            Builtin::YoshidaH => {
                "(cos(theta)^4 + sin(theta)^4)/4 + (epsilon/2)*cos(theta)^2*sin(theta)^2"
            }
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Builtin::Isosceles => Domain::Interval {
                lo: -FRAC_PI_2,
                hi: FRAC_PI_2,
            },
            Builtin::YoshidaG | Builtin::YoshidaH => Domain::Circle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Expr(String),
    Builtin(Builtin),
}

/// Parameter-bound description of `V(θ)` together with its degree.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub beta: f64,
    pub source: Source,
    pub params: BTreeMap<String, f64>,
    /// `None` selects the builtin's own domain, or the full circle for
    /// expressions.
    pub domain: Option<Domain>,
}

impl PotentialSpec {
    pub fn builtin(b: Builtin, value: f64) -> PotentialSpec {
        PotentialSpec {
            beta: b.beta(),
            source: Source::Builtin(b),
            params: BTreeMap::from([(b.parameter().to_string(), value)]),
            domain: None,
        }
    }

    pub fn expr(text: impl Into<String>, beta: f64) -> PotentialSpec {
        PotentialSpec {
            beta,
            source: Source::Expr(text.into()),
            params: BTreeMap::new(),
            domain: None,
        }
    }

    pub fn with_param(mut self, name: impl Into<String>, value: f64) -> PotentialSpec {
        self.params.insert(name.into(), value);
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> PotentialSpec {
        self.domain = Some(domain);
        self
    }

    pub fn effective_domain(&self) -> Domain {
        match (&self.domain, &self.source) {
            (Some(d), _) => *d,
            (None, Source::Builtin(b)) => b.domain(),
            (None, Source::Expr(_)) => Domain::Circle,
        }
    }

    pub fn expression_text(&self) -> &str {
        match &self.source {
            Source::Expr(t) => t,
            Source::Builtin(b) => b.expression(),
        }
    }

    /// JSON echo in the spec-file schema.
    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        m.insert("beta".into(), self.beta.into());
        match &self.source {
            Source::Expr(t) => m.insert("expr".into(), t.clone().into()),
            Source::Builtin(b) => m.insert("builtin".into(), b.name().into()),
        };
        m.insert(
            "params".into(),
            serde_json::Value::Object(
                self.params
                    .iter()
                    .map(|(k, v)| (k.clone(), (*v).into()))
                    .collect(),
            ),
        );
        if let Some(Domain::Interval { lo, hi }) = self.domain {
            m.insert("domain".into(), serde_json::json!([lo, hi]));
        }
        serde_json::Value::Object(m)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<PotentialSpec, PotentialError> {
        let schema = |path: &str, detail: &str| PotentialError::Schema {
            path: path.to_string(),
            detail: detail.to_string(),
        };
        let obj = value
            .as_object()
            .ok_or_else(|| schema("$", "expected a JSON object"))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "beta" | "expr" | "builtin" | "params" | "domain") {
                return Err(schema(&format!("$.{key}"), "unknown field"));
            }
        }
        let beta = obj
            .get("beta")
            .ok_or_else(|| schema("$.beta", "missing required field"))?
            .as_f64()
            .ok_or_else(|| schema("$.beta", "expected a number"))?;
        let source = match (obj.get("expr"), obj.get("builtin")) {
            (Some(e), None) => Source::Expr(
                e.as_str()
                    .ok_or_else(|| schema("$.expr", "expected a string"))?
                    .to_string(),
            ),
            (None, Some(b)) => Source::Builtin(Builtin::from_name(
                b.as_str()
                    .ok_or_else(|| schema("$.builtin", "expected a string"))?,
            )?),
            (Some(_), Some(_)) => {
                return Err(schema("$", "exactly one of `expr` or `builtin` is allowed"))
            }
            (None, None) => return Err(schema("$", "one of `expr` or `builtin` is required")),
        };
        let mut params = BTreeMap::new();
        if let Some(p) = obj.get("params") {
            let p = p
                .as_object()
                .ok_or_else(|| schema("$.params", "expected an object"))?;
            for (k, v) in p {
                let x = v
                    .as_f64()
                    .ok_or_else(|| schema(&format!("$.params.{k}"), "expected a number"))?;
                params.insert(k.clone(), x);
            }
        }
        let domain = match obj.get("domain") {
            None => None,
            Some(d) => {
                let arr = d
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| schema("$.domain", "expected [lo, hi]"))?;
                let lo = arr[0]
                    .as_f64()
                    .ok_or_else(|| schema("$.domain[0]", "expected a number"))?;
                let hi = arr[1]
                    .as_f64()
                    .ok_or_else(|| schema("$.domain[1]", "expected a number"))?;
                Some(Domain::interval(lo, hi)?)
            }
        };
        Ok(PotentialSpec {
            beta,
            source,
            params,
            domain,
        })
    }
}

/// Read a spec file; `overrides` (from `--set name=value`) replace params.
pub fn load_spec(
    path: &Path,
    overrides: &[(String, f64)],
) -> Result<PotentialSpec, PotentialError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PotentialError::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| PotentialError::Schema {
        path: "$".into(),
        detail: e.to_string(),
    })?;
    let mut spec = PotentialSpec::from_json(&value)?;
    for (k, v) in overrides {
        spec.params.insert(k.clone(), *v);
    }
    Ok(spec)
}

/// Compiled, parameter-bound potential evaluable over jets.
#[derive(Debug, Clone)]
pub struct Potential {
    tree: Arc<ExpressionNode>,
    beta: f64,
    domain: Domain,
    /// `-1` after a sign flip.
    sign: f64,
    spec: PotentialSpec,
}

pub fn compile(spec: &PotentialSpec) -> Result<Potential, PotentialError> {
    if !spec.beta.is_finite() {
        return Err(PotentialError::InvalidSpec("beta must be finite".into()));
    }
    if let Source::Builtin(b) = &spec.source {
        if spec.beta != b.beta() {
            return Err(PotentialError::InvalidSpec(format!(
                "builtin {} has beta = {}, got {}",
                b.name(),
                b.beta(),
                spec.beta
            )));
        }
    }
    if let Some(Domain::Interval { lo, hi }) = spec.domain {
        Domain::interval(lo, hi)?;
    }
    let tree = parse_expression(spec.expression_text())?;
    for name in tree.parameters() {
        if !spec.params.contains_key(&name) {
            return Err(PotentialError::UnboundParameter(name));
        }
    }
    let bound = tree.bind(&spec.params).map_err(|e| match e {
        EvalError::UnboundParameter(p) => PotentialError::UnboundParameter(p),
        EvalError::Jet(j) => PotentialError::InvalidSpec(j.to_string()),
    })?;
    check_constant_exponents(&bound)?;
    let domain = spec.effective_domain();
    if domain.is_periodic() {
        check_periodic(&bound)?;
    }
    Ok(Potential {
        tree: Arc::new(bound),
        beta: spec.beta,
        domain,
        sign: 1.0,
        spec: spec.clone(),
    })
}

fn check_constant_exponents(node: &ExpressionNode) -> Result<(), PotentialError> {
    use crate::jet::BinaryOp;
    match node {
        ExpressionNode::Binary(BinaryOp::Pow, base, exp) => {
            if exp.depends_on_theta() {
                return Err(PotentialError::NonConstantExponent);
            }
            check_constant_exponents(base)?;
            check_constant_exponents(exp)
        }
        ExpressionNode::Binary(_, l, r) => {
            check_constant_exponents(l)?;
            check_constant_exponents(r)
        }
        ExpressionNode::Unary(_, c) => check_constant_exponents(c),
        _ => Ok(()),
    }
}

/// A full-circle potential must agree with itself one turn later;
/// otherwise reduction into `[0, 2π)` would create a jump at `θ = 0`.
fn check_periodic(tree: &ExpressionNode) -> Result<(), PotentialError> {
    for t in [0.0, 0.7, 1.9, 3.1, 4.4, 5.6] {
        let (Ok(a), Ok(b)) = (tree.eval_jet(t, &NO_PARAMS), tree.eval_jet(t + TAU, &NO_PARAMS))
        else {
            continue;
        };
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
        if !(close(a.value, b.value) && close(a.d1, b.d1) && close(a.d2, b.d2)) {
            return Err(PotentialError::InvalidSpec(format!(
                "V is not 2*pi-periodic (V({t}) = {}, V({t} + 2*pi) = {}); give an interval domain",
                a.value, b.value
            )));
        }
    }
    Ok(())
}

static NO_PARAMS: BTreeMap<String, f64> = BTreeMap::new();

impl Potential {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn is_negated(&self) -> bool {
        self.sign < 0.0
    }

    /// `-V` with the same degree and domain.
    pub fn negated(&self) -> Potential {
        Potential {
            sign: -self.sign,
            ..self.clone()
        }
    }

    /// `(V, V', V'')` at `theta`.
    pub fn eval(&self, theta: f64) -> Result<Jet2, PotentialError> {
        let t = self
            .domain
            .reduce(theta)
            .ok_or_else(|| PotentialError::DomainError {
                theta,
                detail: format!("outside domain {:?}", self.domain),
            })?;
        let j = self
            .tree
            .eval_jet(t, &NO_PARAMS)
            .map_err(|e| PotentialError::DomainError {
                theta,
                detail: match e {
                    EvalError::Jet(JetError::DivisionByZero) => "division by zero".into(),
                    other => other.to_string(),
                },
            })?;
        if self.sign < 0.0 {
            Ok(j.neg())
        } else {
            Ok(j)
        }
    }

    pub fn value(&self, theta: f64) -> Result<f64, PotentialError> {
        self.eval(theta).map(|j| j.value)
    }

    fn polar(&self, q: [f64; 2]) -> Result<(f64, f64), PotentialError> {
        let r = q[0].hypot(q[1]);
        if r == 0.0 {
            return Err(PotentialError::DomainError {
                theta: f64::NAN,
                detail: "U is singular at the origin".into(),
            });
        }
        Ok((r, q[1].atan2(q[0])))
    }

    /// `U(q) = |q|^β V(atan2(q2, q1))`.
    pub fn eval_u(&self, q: [f64; 2]) -> Result<f64, PotentialError> {
        let (r, th) = self.polar(q)?;
        Ok(r.powf(self.beta) * self.value(th)?)
    }

    /// Cartesian gradient of `U`, recombined from the radial part
    /// `β r^{β-1} V` and the tangential part `r^{β-1} V'`.
    pub fn grad_u(&self, q: [f64; 2]) -> Result<[f64; 2], PotentialError> {
        let (r, th) = self.polar(q)?;
        let j = self.eval(th)?;
        let scale = r.powf(self.beta - 1.0);
        let radial = self.beta * j.value * scale;
        let tangential = j.d1 * scale;
        let (s, c) = th.sin_cos();
        Ok([radial * c - tangential * s, radial * s + tangential * c])
    }
}

pub fn eval_v(pot: &Potential, theta: f64) -> Result<Jet2, PotentialError> {
    pot.eval(theta)
}

pub fn eval_u_cartesian(pot: &Potential, q: [f64; 2]) -> Result<f64, PotentialError> {
    pot.eval_u(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn yoshida_g(eps: f64) -> Potential {
        compile(&PotentialSpec::builtin(Builtin::YoshidaG, eps)).unwrap()
    }

    fn iso(alpha: f64) -> Potential {
        compile(&PotentialSpec::builtin(Builtin::Isosceles, alpha)).unwrap()
    }

    #[test]
    fn yoshida_g_at_zero() {
        let j = yoshida_g(4.0).eval(0.0).unwrap();
        assert!((j.value + 0.25).abs() < 1e-15);
        assert!(j.d1.abs() < 1e-15);
        assert!((j.d2 + 3.0).abs() < 1e-14);
    }

    #[test]
    fn isosceles_at_zero() {
        let j = iso(1.0).eval(0.0).unwrap();
        assert!((j.value + 5.0).abs() < 1e-14);
        assert!(j.d1.abs() < 1e-14);
        assert!((j.d2 - 7.0).abs() < 1e-13);
    }

    #[test]
    fn isosceles_pole_is_reported() {
        let p = iso(1.0);
        assert!(matches!(p.eval(FRAC_PI_2), Err(PotentialError::DomainError { .. })));
        assert!(matches!(p.eval(2.0), Err(PotentialError::DomainError { .. })));
    }

    #[test]
    fn cos_expression() {
        let p = compile(&PotentialSpec::expr("cos(theta)", 1.0)).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), Jet2::new(1.0, 0.0, -1.0));
    }

    #[test]
    fn unbound_and_unknown() {
        let mut spec = PotentialSpec::builtin(Builtin::Isosceles, 1.0);
        spec.params.clear();
        assert_eq!(
            compile(&spec).unwrap_err(),
            PotentialError::UnboundParameter("alpha".into())
        );
        assert!(matches!(
            Builtin::from_name("kepler"),
            Err(PotentialError::UnknownBuiltin(_))
        ));
        assert_eq!(
            compile(&PotentialSpec::expr("cos(theta)^theta", 1.0)).unwrap_err(),
            PotentialError::NonConstantExponent
        );
    }

    #[test]
    fn cartesian_examples() {
        assert!((yoshida_g(4.0).eval_u([0.0, 1.0]).unwrap() + 0.25).abs() < 1e-15);
        assert!((iso(1.0).eval_u([1.0, 0.0]).unwrap() + 5.0).abs() < 1e-14);
        let p = yoshida_g(4.0);
        let q = [0.3, -0.7];
        let a = p.eval_u([2.0 * q[0], 2.0 * q[1]]).unwrap();
        assert!((a - 16.0 * p.eval_u(q).unwrap()).abs() < 1e-13);
        assert!(p.eval_u([0.0, 0.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for p in [yoshida_g(4.0), iso(2.0)] {
            let q = [0.8, 0.35];
            let g = p.grad_u(q).unwrap();
            let h = 1e-6;
            for i in 0..2 {
                let mut qp = q;
                let mut qm = q;
                qp[i] += h;
                qm[i] -= h;
                let fd = (p.eval_u(qp).unwrap() - p.eval_u(qm).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7, "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn negation_flips_every_component() {
        let p = yoshida_g(4.0);
        let n = p.negated();
        let (a, b) = (p.eval(0.3).unwrap(), n.eval(0.3).unwrap());
        assert_eq!(a.neg(), b);
        assert!(n.is_negated());
    }

    #[test]
    fn domain_reduction() {
        let d = Domain::interval(-FRAC_PI_2, FRAC_PI_2).unwrap();
        assert_eq!(d.reduce(0.1 + TAU), Some(0.1 + TAU - TAU));
        assert_eq!(d.reduce(2.0), None);
        assert!(Domain::interval(1.0, 0.0).is_err());
        assert!(Domain::interval(0.0, 7.0).is_err());
    }

    #[test]
    fn spec_json_schema() {
        let v: serde_json::Value =
            serde_json::from_str(r#"{"beta": -1, "builtin": "isosceles", "params": {"alpha": 1}}"#)
                .unwrap();
        let s = PotentialSpec::from_json(&v).unwrap();
        assert_eq!(s, PotentialSpec::builtin(Builtin::Isosceles, 1.0));
        let missing: serde_json::Value =
            serde_json::from_str(r#"{"expr": "cos(theta)"}"#).unwrap();
        assert!(matches!(
            PotentialSpec::from_json(&missing),
            Err(PotentialError::Schema { path, .. }) if path == "$.beta"
        ));
        let both: serde_json::Value =
            serde_json::from_str(r#"{"beta": 1, "expr": "1", "builtin": "isosceles"}"#).unwrap();
        assert!(PotentialSpec::from_json(&both).is_err());
        let dom: serde_json::Value =
            serde_json::from_str(r#"{"beta": 1, "expr": "1", "domain": [0, 1]}"#).unwrap();
        assert_eq!(
            PotentialSpec::from_json(&dom).unwrap().domain,
            Some(Domain::Interval { lo: 0.0, hi: 1.0 })
        );
        assert_eq!(PotentialSpec::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn non_periodic_expression_needs_interval() {
        let spec = PotentialSpec::expr("tan(theta/5) - 2", 1.0);
        assert!(matches!(compile(&spec), Err(PotentialError::InvalidSpec(_))));
        let spec = spec.with_domain(Domain::interval(-1.0, 1.0).unwrap());
        assert!(compile(&spec).is_ok());
        assert!(compile(&PotentialSpec::expr("sqrt(2 + sin(3*theta)) - 2", 1.0)).is_ok());
    }
}
