use std::f64::consts::{FRAC_PI_4, PI, TAU};

use proptest::prelude::*;

use homcert_core::certifier::{certify, CertifyOptions};
use homcert_core::critical::{find_critical_points, CriticalOptions};
use homcert_core::dsl::{compile, parse_expression, Builtin, Potential, PotentialSpec};
use homcert_core::jet::{apply_unary, lift_constant, lift_variable, UnaryOp};
use homcert_core::mcgehee::{integrate_manifold, ManifoldMode, ManifoldOptions, ManifoldState};

fn builtin(b: Builtin, x: f64) -> Potential {
    compile(&PotentialSpec::builtin(b, x)).unwrap()
}

fn yoshida_eps() -> impl Strategy<Value = f64> {
    (-5.0f64..8.0).prop_filter("degenerate at 1", |e| (e - 1.0).abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sin2_plus_cos2_is_one(t in -10.0f64..10.0) {
        let x = lift_variable(t);
        let (s, c) = (x.sin(), x.cos());
        let one = s.mul(s).add(c.mul(c));
        prop_assert!((one.value - 1.0).abs() <= 1e-12);
        prop_assert!(one.d1.abs() <= 1e-12 && one.d2.abs() <= 1e-12);
    }

    #[test]
    fn product_with_reciprocal_is_one(t in 0.1f64..3.0, k in 0.5f64..4.0) {
        let a = apply_unary(UnaryOp::Exp, lift_variable(t).mul(lift_constant(k))).unwrap().add(lift_constant(-0.5));
        let one = a.mul(lift_constant(1.0).div(a).unwrap());
        prop_assert!((one.value - 1.0).abs() <= 1e-12);
        prop_assert!(one.d1.abs() <= 1e-12 * (1.0 + a.d1.abs()));
        prop_assert!(one.d2.abs() <= 1e-10 * (1.0 + a.d2.abs()));
    }

    #[test]
    fn jet_operations_are_pure(t in -3.0f64..3.0) {
        let x = lift_variable(t);
        for op in UnaryOp::FUNCTIONS {
            let (a, b) = (apply_unary(op, x), apply_unary(op, x));
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
                    prop_assert_eq!(a.d1.to_bits(), b.d1.to_bits());
                    prop_assert_eq!(a.d2.to_bits(), b.d2.to_bits());
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false),
            }
        }
    }

    #[test]
    fn homogeneity(
        rq in 0.3f64..3.0,
        th in -1.4f64..1.4,
        lambda in prop::sample::select(vec![0.5, 2.0, 3.0]),
        which in 0usize..3,
    ) {
        let pot = match which {
            0 => builtin(Builtin::Isosceles, 2.0),
            1 => builtin(Builtin::YoshidaG, 4.0),
            _ => compile(&PotentialSpec::expr("-2 + cos(theta)*sin(2*theta)", 1.7)).unwrap(),
        };
        let q = [rq * th.cos(), rq * th.sin()];
        let u = pot.eval_u(q).unwrap();
        let scaled = pot.eval_u([lambda * q[0], lambda * q[1]]).unwrap();
        prop_assert!((scaled - lambda.powf(pot.beta()) * u).abs() <= 1e-10 * u.abs());
    }

    #[test]
    fn full_circle_periodicity(t in -20.0f64..20.0, eps in -3.0f64..6.0) {
        for b in [Builtin::YoshidaG, Builtin::YoshidaH] {
            let p = builtin(b, eps);
            let (a, c) = (p.eval(t).unwrap(), p.eval(t + TAU).unwrap());
            prop_assert!((a.value - c.value).abs() <= 1e-12);
            prop_assert!((a.d1 - c.d1).abs() <= 1e-12);
            prop_assert!((a.d2 - c.d2).abs() <= 1e-12);
        }
    }

    #[test]
    fn yoshida_closed_form(eps in -5.0f64..8.0) {
        let p = builtin(Builtin::YoshidaG, eps);
        for i in 0..1000 {
            let t = TAU * i as f64 / 1000.0;
            let closed = -0.25 + (1.0 - eps) / 8.0 * (2.0 * t).sin().powi(2);
            prop_assert!((p.value(t).unwrap() - closed).abs() <= 1e-12);
        }
    }

    #[test]
    fn yoshida_critical_points(eps in yoshida_eps()) {
        let p = builtin(Builtin::YoshidaG, eps);
        let cps = find_critical_points(&p, &CriticalOptions::default()).unwrap();
        prop_assert_eq!(cps.len(), 8);
        for (k, c) in cps.iter().enumerate() {
            prop_assert!((c.theta - k as f64 * FRAC_PI_4).abs() <= 1e-10, "{} {}", k, c.theta);
            prop_assert!(p.eval(c.theta).unwrap().d1.abs() <= 1e-9);
        }
    }

    /// `V'` keeps one sign on a 64-point subgrid between consecutive points.
    #[test]
    fn derivative_sign_between_critical_points(
        a in -1.0f64..1.0, b in -1.0f64..1.0, c in -0.5f64..0.5,
    ) {
        let text = format!("-3 + ({a})*cos(theta) + ({b})*sin(2*theta) + ({c})*cos(3*theta)");
        let p = compile(&PotentialSpec::expr(text, -1.0)).unwrap();
        let Ok(cps) = find_critical_points(&p, &CriticalOptions::default()) else {
            return Ok(());
        };
        let n = cps.len();
        for i in 0..n {
            let lo = cps[i].theta;
            let hi = if i + 1 < n { cps[i + 1].theta } else { cps[0].theta + TAU };
            let signs: Vec<f64> = (1..64)
                .map(|k| p.eval(lo + (hi - lo) * k as f64 / 64.0).unwrap().d1)
                .filter(|d| d.abs() > 1e-9)
                .map(f64::signum)
                .collect();
            prop_assert!(signs.windows(2).all(|w| w[0] == w[1]), "between {} and {}", lo, hi);
        }
    }

    #[test]
    fn parser_round_trip(
        a in -3.0f64..3.0, k in 1u32..5, e in -2.0f64..2.0, pick in 0usize..4,
    ) {
        let text = match pick {
            0 => format!("({a})*sin({k}*theta)^2 - cos(theta)/({a}*{a} + 1)"),
            1 => format!("(2 + cos({k}*theta))^({e}) - {a}"),
            2 => format!("-exp(sin(theta))*log(3 + cos({k}*theta)) + abs({a} - 5)"),
            _ => format!("sqrt(4 + {a}*sin(theta)) * tan(sin(theta)/2) - -{e}"),
        };
        let tree = parse_expression(&text).unwrap();
        let again = parse_expression(&tree.to_string()).unwrap();
        for i in 0..100 {
            let t = -PI + TAU * i as f64 / 100.0;
            let (x, y) = (
                tree.eval_jet(t, &Default::default()).unwrap(),
                again.eval_jet(t, &Default::default()).unwrap(),
            );
            prop_assert_eq!(x, y);
        }
    }

    /// Shifting `V` by a constant smaller than the assumption-3 margin keeps
    /// that verdict, and moves the assumption-6 margin by `(β+2)² δ / 8`.
    #[test]
    fn verdicts_survive_small_shifts(eps in -4.0f64..-0.2, frac in -0.9f64..0.9) {
        let base = "-(cos(theta)^4+sin(theta)^4)/4 - (e/2)*cos(theta)^2*sin(theta)^2";
        let p = compile(&PotentialSpec::expr(base, 4.0).with_param("e", eps)).unwrap();
        let opts = CertifyOptions::default();
        let c = certify(&p, false, &opts).unwrap();
        let m3 = c.report(3).margin;
        prop_assume!(m3 > 1e-6);
        let delta = frac * m3;
        let shifted = compile(
            &PotentialSpec::expr(format!("{base} + ({delta})"), 4.0).with_param("e", eps),
        )
        .unwrap();
        let cs = homcert_core::certifier::check_triple(&shifted, c.triple, &opts).unwrap();
        prop_assert_eq!(cs.report(3).satisfied, c.report(3).satisfied);
        prop_assert!((cs.margin6() - c.margin6() - 4.5 * delta).abs() <= 1e-9);
    }

    #[test]
    fn certificates_are_bitwise_deterministic(alpha in 1.0f64..20.0) {
        let p = builtin(Builtin::Isosceles, alpha);
        let a = certify(&p, false, &CertifyOptions::default()).unwrap();
        let b = certify(&p, false, &CertifyOptions::default()).unwrap();
        prop_assert_eq!(a.to_json().to_string(), b.to_json().to_string());
    }
}

/// For `β < -2`, `v' = (β/2 + 1) w² <= 0` on the collision manifold.
#[test]
fn v_nonincreasing_below_minus_two() {
    let p = compile(&PotentialSpec::expr("-2 + 0.5*cos(2*theta)", -3.0)).unwrap();
    let opts = ManifoldOptions {
        mode: ManifoldMode::Projected,
        ..Default::default()
    };
    for (th, phi) in [(0.3, 1.0), (1.2, 2.5), (2.5, 4.0), (4.0, 5.5)] {
        let rho = (-2.0 * p.value(th).unwrap()).sqrt();
        let m0 = ManifoldState::new(th, rho * f64::cos(phi), rho * f64::sin(phi));
        let t = integrate_manifold(&m0, &p, (0.0, 20.0), &opts).unwrap();
        for w in t.samples.windows(2) {
            assert!(w[1].v <= w[0].v + 1e-10, "{:?} -> {:?}", w[0], w[1]);
        }
    }
}
