//! Potentials `V(θ)` given as closed-form expressions or builtins.

mod expr;
mod potential;

pub use expr::{parse_expression, EvalError, ExpressionNode, ParseError};
pub use potential::{
    compile, eval_u_cartesian, eval_v, load_spec, Builtin, Domain, Potential, PotentialError,
    PotentialSpec, Source,
};
