//! Expression trees over the polar angle and their recursive-descent parser.
//!
//! Grammar:
//!
//! ```text
//! expr    := term (("+"|"-") term)*
//! term    := factor (("*"|"/") factor)*
//! factor  := "-" factor | primary ("^" factor)?
//! primary := number | "pi" | "theta" | ident | ident "(" expr ")" | "(" expr ")"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::jet::{apply_binary, apply_unary, BinaryOp, Jet2, JetError, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    SyntaxError { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpressionNode {
    Constant(f64),
    Parameter(String),
    Theta,
    Unary(UnaryOp, Box<ExpressionNode>),
    Binary(BinaryOp, Box<ExpressionNode>, Box<ExpressionNode>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

impl ExpressionNode {
    pub fn parameters(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_parameters(&mut out);
        out
    }

    fn collect_parameters(&self, out: &mut BTreeSet<String>) {
        match self {
            ExpressionNode::Parameter(name) => {
                out.insert(name.clone());
            }
            ExpressionNode::Unary(_, c) => c.collect_parameters(out),
            ExpressionNode::Binary(_, l, r) => {
                l.collect_parameters(out);
                r.collect_parameters(out);
            }
            ExpressionNode::Constant(_) | ExpressionNode::Theta => {}
        }
    }

    pub fn depends_on_theta(&self) -> bool {
        match self {
            ExpressionNode::Theta => true,
            ExpressionNode::Unary(_, c) => c.depends_on_theta(),
            ExpressionNode::Binary(_, l, r) => l.depends_on_theta() || r.depends_on_theta(),
            ExpressionNode::Constant(_) | ExpressionNode::Parameter(_) => false,
        }
    }

    /// Evaluate over jets with the angle seeded as the independent variable.
    pub fn eval_jet(
        &self,
        theta: f64,
        params: &BTreeMap<String, f64>,
    ) -> Result<Jet2, EvalError> {
        self.eval_at(Jet2::variable(theta), params)
    }

    fn eval_at(&self, theta: Jet2, params: &BTreeMap<String, f64>) -> Result<Jet2, EvalError> {
        Ok(match self {
            ExpressionNode::Constant(c) => Jet2::constant(*c),
            ExpressionNode::Parameter(name) => Jet2::constant(
                *params
                    .get(name)
                    .ok_or_else(|| EvalError::UnboundParameter(name.clone()))?,
            ),
            ExpressionNode::Theta => theta,
            ExpressionNode::Unary(op, c) => apply_unary(*op, c.eval_at(theta, params)?)?,
            ExpressionNode::Binary(op, l, r) => {
                apply_binary(*op, l.eval_at(theta, params)?, r.eval_at(theta, params)?)?
            }
        })
    }

    /// Replace bound parameters with constants.
    pub fn bind(&self, params: &BTreeMap<String, f64>) -> Result<ExpressionNode, EvalError> {
        Ok(match self {
            ExpressionNode::Parameter(name) => ExpressionNode::Constant(
                *params
                    .get(name)
                    .ok_or_else(|| EvalError::UnboundParameter(name.clone()))?,
            ),
            ExpressionNode::Unary(op, c) => ExpressionNode::Unary(*op, Box::new(c.bind(params)?)),
            ExpressionNode::Binary(op, l, r) => {
                ExpressionNode::Binary(*op, Box::new(l.bind(params)?), Box::new(r.bind(params)?))
            }
            other => other.clone(),
        })
    }
}

/// Fully parenthesised rendering that re-parses to the same tree.
impl fmt::Display for ExpressionNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpressionNode::Constant(c) if *c < 0.0 => write!(f, "(-{:?})", -c),
            ExpressionNode::Constant(c) => write!(f, "{c:?}"),
            ExpressionNode::Parameter(name) => f.write_str(name),
            ExpressionNode::Theta => f.write_str("theta"),
            ExpressionNode::Unary(UnaryOp::Neg, c) => write!(f, "(-{c})"),
            ExpressionNode::Unary(op, c) => write!(f, "{}({c})", op.name()),
            ExpressionNode::Binary(op, l, r) => write!(f, "({l}{}{r})", op.symbol()),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<ExpressionNode, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error(format!("unexpected `{}`", p.peek().unwrap())));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::SyntaxError {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<ExpressionNode, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinaryOp::Add
            } else if self.eat('-') {
                BinaryOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = ExpressionNode::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<ExpressionNode, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat('*') {
                BinaryOp::Mul
            } else if self.eat('/') {
                BinaryOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = ExpressionNode::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<ExpressionNode, ParseError> {
        if self.eat('-') {
            let inner = self.factor()?;
            return Ok(ExpressionNode::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        let base = self.primary()?;
        if self.eat('^') {
            let exponent = self.factor()?;
            return Ok(ExpressionNode::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<ExpressionNode, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let ident = &self.src[start..self.pos];
                if self.eat('(') {
                    let op = UnaryOp::from_name(ident).ok_or_else(|| {
                        ParseError::UnknownFunction {
                            name: ident.to_string(),
                            offset: start,
                        }
                    })?;
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.error("expected `)` after function argument"));
                    }
                    return Ok(ExpressionNode::Unary(op, Box::new(arg)));
                }
                Ok(match ident {
                    "pi" => ExpressionNode::Constant(std::f64::consts::PI),
                    "theta" => ExpressionNode::Theta,
                    _ => ExpressionNode::Parameter(ident.to_string()),
                })
            }
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
        }
    }

    fn number(&mut self) -> Result<ExpressionNode, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - s
        };
        let mut p = self.pos;
        let mut n = digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            n += digits(&mut p);
        }
        if n == 0 {
            return Err(self.error("malformed number"));
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) == 0 {
                self.pos = q;
                return Err(self.error("malformed exponent"));
            }
            p = q;
        }
        self.pos = p;
        self.src[start..p]
            .parse::<f64>()
            .map(ExpressionNode::Constant)
            .map_err(|e| ParseError::SyntaxError {
                offset: start,
                message: e.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, theta: f64) -> Jet2 {
        parse_expression(text)
            .unwrap()
            .eval_jet(theta, &BTreeMap::new())
            .unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("2+3*4^2", 0.3).value, 50.0);
        assert_eq!(eval("2^3^2", 0.0).value, 512.0);
        assert_eq!(eval("-2^2", 0.0).value, -4.0);
        assert_eq!(eval("8/4/2", 0.0).value, 1.0);
        assert_eq!(eval("1-2-3", 0.0).value, -4.0);
        assert_eq!(eval("2^-1", 0.0).value, 0.5);
        assert_eq!(eval("1.5e1 + .5 + 2E-1", 0.0).value, 15.7);
    }

    #[test]
    fn power_of_function() {
        let e = parse_expression("cos(theta)^2").unwrap();
        assert_eq!(
            e,
            ExpressionNode::Binary(
                BinaryOp::Pow,
                Box::new(ExpressionNode::Unary(UnaryOp::Cos, Box::new(ExpressionNode::Theta))),
                Box::new(ExpressionNode::Constant(2.0)),
            )
        );
    }

    #[test]
    fn isosceles_text_has_one_parameter() {
        let e = parse_expression("-1/cos(theta) - 4*a^(3/2)/sqrt(a + 2*sin(theta)^2)").unwrap();
        assert_eq!(e.parameters().into_iter().collect::<Vec<_>>(), vec!["a"]);
        assert!(e.depends_on_theta());
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(
            parse_expression("1 + * 2"),
            Err(ParseError::SyntaxError {
                offset: 4,
                message: "unexpected `*`".into()
            })
        );
        assert_eq!(
            parse_expression("cosh(theta)"),
            Err(ParseError::UnknownFunction {
                name: "cosh".into(),
                offset: 0
            })
        );
        assert!(matches!(parse_expression("(1+2"), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse_expression("   "), Err(ParseError::SyntaxError { offset: 3, .. })));
        assert!(matches!(parse_expression("1e+"), Err(ParseError::SyntaxError { .. })));
        assert!(matches!(parse_expression("2 3"), Err(ParseError::SyntaxError { offset: 2, .. })));
    }

    #[test]
    fn unbound_parameter_reported() {
        let e = parse_expression("k*theta").unwrap();
        assert_eq!(
            e.eval_jet(0.0, &BTreeMap::new()),
            Err(EvalError::UnboundParameter("k".into()))
        );
    }

    #[test]
    fn display_reparses() {
        let src = "-(cos(theta)^4+sin(theta)^4)/4 - (e/2)*cos(theta)^2*sin(theta)^2 + abs(1e-3 - 2)";
        let e = parse_expression(src).unwrap();
        let again = parse_expression(&e.to_string()).unwrap();
        assert_eq!(e, again);
    }
}
