use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use homcert_core::certifier::{certify, CertError, Conclusion, CertifyOptions};
use homcert_core::critical::{find_critical_points, CriticalOptions};
use homcert_core::dsl::{
    compile, load_spec, parse_expression, Builtin, Domain, Potential, PotentialError,
    PotentialSpec, Source,
};
use homcert_core::mcgehee::{
    find_equilibria, integrate, to_mcgehee, trace_invariant_manifold, Branch, EqSign,
    Equilibrium, FlowOptions, McGeheeError, McGeheeState, TraceOptions,
};
use homcert_core::morales::{compare, MoralesError};
use homcert_core::report::{to_json_string, write_manifold_csv, write_trajectory_csv};
use homcert_core::sweep::{sweep_threshold, SweepError, SweepOptions};
use homcert_core::validate::run_validation;

/// Non-integrability certificates and collision-manifold dynamics for
/// planar homogeneous potentials.
#[derive(Debug, Parser)]
#[command(name = "homcert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct PotentialArgs {
    /// JSON potential spec file.
    #[arg(long, group = "source")]
    file: Option<PathBuf>,
    /// isosceles, yoshida_g or yoshida_h.
    #[arg(long, group = "source")]
    builtin: Option<String>,
    /// Expression in `theta` and free parameters.
    #[arg(long, group = "source", allow_hyphen_values = true)]
    expr: Option<String>,
    /// Degree of homogeneity (required with --expr).
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Parameter binding NAME=VALUE; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
    /// Restrict to the open interval LO:HI instead of the full circle.
    #[arg(long, value_name = "LO:HI", allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the six assumptions on every candidate triple; exit 3 if inconclusive.
    Certify {
        #[command(flatten)]
        pot: PotentialArgs,
        /// Also try -V (complexified conclusion).
        #[arg(long)]
        allow_sign_flip: bool,
        #[arg(long, default_value_t = 1e-9)]
        strictness_tol: f64,
    },
    /// Certify along a parameter range and locate where the verdict changes.
    Sweep {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long)]
        param: String,
        #[arg(long, value_name = "LO:HI", allow_hyphen_values = true)]
        range: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        allow_sign_flip: bool,
    },
    /// Rest points on the collision manifold and their linearizations.
    Equilibria {
        #[command(flatten)]
        pot: PotentialArgs,
    },
    /// Integrate the blown-up flow; writes a trajectory CSV.
    Simulate {
        #[command(flatten)]
        pot: PotentialArgs,
        /// Initial McGehee state r,theta,v,w.
        #[arg(long, value_name = "R,THETA,V,W", allow_hyphen_values = true, group = "initial")]
        init: Option<String>,
        /// Initial Cartesian state q1,q2,p1,p2.
        #[arg(long, value_name = "Q1,Q2,P1,P2", allow_hyphen_values = true, group = "initial")]
        cartesian: Option<String>,
        #[arg(long, value_name = "A:B", allow_hyphen_values = true)]
        tau_span: String,
        #[arg(long, default_value_t = 1e-10)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-12)]
        atol: f64,
        /// CSV destination (default: stdout).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Trace a branch of the in-manifold invariant curve of a saddle rest point.
    Manifold {
        #[command(flatten)]
        pot: PotentialArgs,
        /// Critical angle of the saddle (snapped to the nearest critical point).
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        /// `+` or `-`.
        #[arg(long, allow_hyphen_values = true)]
        sign: String,
        #[arg(long, value_enum)]
        branch: BranchArg,
        /// Which half of the eigenline to seed on: 1 or -1.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        direction: f64,
        #[arg(long, default_value_t = 1e-7)]
        offset: f64,
        #[arg(long, default_value_t = 500.0)]
        max_tau: f64,
        /// Stop at the capture radius instead of following the linear flow inside it.
        #[arg(long)]
        no_linear_tail: bool,
        /// CSV destination; diagnostics then go to stdout. Without it the
        /// CSV goes to stdout and the diagnostics to stderr.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Yoshida coefficients and the Morales–Ramis necessary conditions.
    CompareMr {
        #[command(flatten)]
        pot: PotentialArgs,
    },
    /// Run the built-in self-check suite.
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BranchArg {
    Unstable,
    Stable,
}

/// Failure carrying its exit code: 1 for usage and IO, 2 for numeric.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numeric(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<PotentialError> for Failure {
    fn from(e: PotentialError) -> Self {
        match e {
            PotentialError::DomainError { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<CertError> for Failure {
    fn from(e: CertError) -> Self {
        Failure::Numeric(e.to_string())
    }
}

impl From<McGeheeError> for Failure {
    fn from(e: McGeheeError) -> Self {
        Failure::Numeric(e.to_string())
    }
}

impl From<MoralesError> for Failure {
    fn from(e: MoralesError) -> Self {
        Failure::Numeric(e.to_string())
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Potential(p) => p.into(),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// A number, or a constant expression such as `pi/4`.
fn number(text: &str) -> Result<f64, Failure> {
    if let Ok(x) = text.trim().parse::<f64>() {
        return Ok(x);
    }
    let bad = || Failure::Usage(format!("`{text}` is not a number"));
    let e = parse_expression(text).map_err(|_| bad())?;
    if e.depends_on_theta() || !e.parameters().is_empty() {
        return Err(bad());
    }
    e.eval_jet(0.0, &BTreeMap::new())
        .map(|j| j.value)
        .map_err(|_| bad())
}

fn numbers<const N: usize>(text: &str, sep: char) -> Result<[f64; N], Failure> {
    let parts: Vec<&str> = text.split(sep).collect();
    if parts.len() != N {
        return Err(Failure::Usage(format!("`{text}`: expected {N} values separated by `{sep}`")));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = number(p)?;
    }
    Ok(out)
}

impl PotentialArgs {
    fn spec(&self) -> Result<PotentialSpec, Failure> {
        let mut overrides = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set `{s}`: expected NAME=VALUE")))?;
            overrides.push((k.trim().to_string(), number(v)?));
        }
        let mut spec = match (&self.file, &self.builtin, &self.expr) {
            (Some(path), None, None) => load_spec(path, &overrides)?,
            (None, Some(name), None) => {
                let b = Builtin::from_name(name)?;
                PotentialSpec {
                    beta: self.beta.unwrap_or(b.beta()),
                    source: Source::Builtin(b),
                    params: overrides.into_iter().collect(),
                    domain: None,
                }
            }
            (None, None, Some(text)) => PotentialSpec {
                beta: self
                    .beta
                    .ok_or_else(|| Failure::Usage("--expr needs --beta".into()))?,
                source: Source::Expr(text.clone()),
                params: overrides.into_iter().collect(),
                domain: None,
            },
            _ => {
                return Err(Failure::Usage(
                    "give exactly one of --file, --builtin or --expr".into(),
                ))
            }
        };
        if let (Some(_), Some(beta)) = (&self.file, self.beta) {
            spec.beta = beta;
        }
        if let Some(d) = &self.domain {
            let [lo, hi] = numbers::<2>(d, ':')?;
            spec.domain = Some(Domain::interval(lo, hi)?);
        }
        Ok(spec)
    }

    fn compile(&self) -> Result<Potential, Failure> {
        Ok(compile(&self.spec()?)?)
    }
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<(), Failure> {
    writeln!(out, "{}", to_json_string(value))?;
    Ok(())
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Nearest critical point to `theta`, within `1e-3`.
fn snap_critical(pot: &Potential, theta: f64) -> Result<f64, Failure> {
    let cps = find_critical_points(pot, &CriticalOptions::default())
        .map_err(|e| Failure::Numeric(e.to_string()))?;
    let tau = std::f64::consts::TAU;
    let dist = |c: f64| {
        let d = c - theta;
        if pot.domain().is_periodic() {
            (d - tau * (d / tau).round()).abs()
        } else {
            d.abs()
        }
    };
    cps.iter()
        .map(|c| c.theta)
        .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
        .filter(|c| dist(*c) <= 1e-3)
        .ok_or_else(|| Failure::Numeric(format!("no critical point within 1e-3 of theta = {theta}")))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let stdout = io::stdout();
    match cli.command {
        Command::Certify {
            pot,
            allow_sign_flip,
            strictness_tol,
        } => {
            if !(strictness_tol > 0.0) {
                return Err(Failure::Usage("--strictness-tol must be positive".into()));
            }
            let p = pot.compile()?;
            let opts = CertifyOptions {
                strictness_tol,
                ..Default::default()
            };
            let c = certify(&p, allow_sign_flip, &opts)?;
            emit(&mut stdout.lock(), &c.to_json())?;
            Ok(if c.conclusion == Conclusion::NonIntegrable { 0 } else { 3 })
        }
        Command::Sweep {
            pot,
            param,
            range,
            samples,
            tol,
            allow_sign_flip,
        } => {
            if !(tol > 0.0) {
                return Err(Failure::Usage("--tol must be positive".into()));
            }
            let [lo, hi] = numbers::<2>(&range, ':')?;
            let mut spec = pot.spec()?;
            spec.params.entry(param.clone()).or_insert(lo);
            let opts = SweepOptions {
                samples,
                tol,
                allow_sign_flip,
                ..Default::default()
            };
            let r = sweep_threshold(&spec, &param, lo, hi, &opts)?;
            emit(&mut stdout.lock(), &r.to_json())?;
            Ok(0)
        }
        Command::Equilibria { pot } => {
            let p = pot.compile()?;
            let eq = find_equilibria(&p)?;
            let mut v = eq.to_json();
            v["beta"] = p.beta().into();
            v["potential"] = p.spec().to_json();
            emit(&mut stdout.lock(), &v)?;
            Ok(0)
        }
        Command::Simulate {
            pot,
            init,
            cartesian,
            tau_span,
            rtol,
            atol,
            output,
        } => {
            if !(rtol > 0.0 && atol >= 0.0) {
                return Err(Failure::Usage("tolerances must be positive".into()));
            }
            let p = pot.compile()?;
            let state = match (init, cartesian) {
                (Some(s), None) => {
                    let [r, theta, v, w] = numbers::<4>(&s, ',')?;
                    McGeheeState::new(r, theta, v, w)
                }
                (None, Some(s)) => {
                    let [q1, q2, p1, p2] = numbers::<4>(&s, ',')?;
                    to_mcgehee([p1, p2], [q1, q2], p.beta())?
                }
                _ => return Err(Failure::Usage("give one of --init or --cartesian".into())),
            };
            let [a, b] = numbers::<2>(&tau_span, ':')?;
            let opts = FlowOptions {
                rtol,
                atol,
                ..Default::default()
            };
            let traj = integrate(&state, &p, (a, b), &opts)?;
            let mut out = sink(&output)?;
            write_trajectory_csv(&mut out, &traj)?;
            out.flush()?;
            eprintln!(
                "termination: {}; relative energy drift {:.3e}",
                traj.termination.name(),
                traj.energy_drift()
            );
            Ok(0)
        }
        Command::Manifold {
            pot,
            from,
            sign,
            branch,
            direction,
            offset,
            max_tau,
            no_linear_tail,
            output,
        } => {
            let p = pot.compile()?;
            let sign = EqSign::parse(&sign)
                .ok_or_else(|| Failure::Usage(format!("--sign `{sign}`: expected + or -")))?;
            if direction.abs() != 1.0 {
                return Err(Failure::Usage("--direction must be 1 or -1".into()));
            }
            let theta = snap_critical(&p, number(&from)?)?;
            let eq = Equilibrium::at(theta, sign, &p)?;
            let opts = TraceOptions {
                direction,
                offset,
                max_tau,
                linear_tail_floor: if no_linear_tail {
                    None
                } else {
                    TraceOptions::default().linear_tail_floor
                },
                ..Default::default()
            };
            let branch = match branch {
                BranchArg::Unstable => Branch::Unstable,
                BranchArg::Stable => Branch::Stable,
            };
            let (traj, diag) = trace_invariant_manifold(&eq, branch, &p, &opts)?;
            let mut diag_json = serde_json::to_value(diag).expect("diagnostics serialize");
            diag_json["source"] = eq.to_json();
            diag_json["termination"] = traj.termination.name().into();
            let mut out = sink(&output)?;
            write_manifold_csv(&mut out, &traj)?;
            out.flush()?;
            if output.is_some() {
                emit(&mut stdout.lock(), &diag_json)?;
            } else {
                emit(&mut io::stderr().lock(), &diag_json)?;
            }
            Ok(0)
        }
        Command::CompareMr { pot } => {
            let p = pot.compile()?;
            let entries = compare(&p)?;
            let v = serde_json::json!({
                "beta": p.beta(),
                "potential": p.spec().to_json(),
                "critical_points": entries,
            });
            emit(&mut stdout.lock(), &v)?;
            Ok(0)
        }
        Command::Validate => {
            let checks = run_validation();
            let all = checks.iter().all(|c| c.passed);
            for c in &checks {
                eprintln!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
            }
            emit(
                &mut stdout.lock(),
                &serde_json::json!({"passed": all, "checks": checks}),
            )?;
            Ok(if all { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
