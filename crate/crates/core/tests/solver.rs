use ascontrol::grid::{preset_problem, Preset, Velocity};
use ascontrol::kkt::kkt_residual_norm;
use ascontrol::newton::{newton_solve, Forcing, Method, NewtonOptions, Outcome};

#[test]
fn every_preset_converges_and_is_feasible() {
    for preset in [Preset::CcPb1, Preset::CcPb2, Preset::McPb1, Preset::ScPb1] {
        for beta1 in [0.0, 100.0] {
            let pr = preset_problem(preset.name(), 2, 1e-2, Velocity::Constant([beta1, 0.0, 0.0]), 1e-2).unwrap();
            let (x, trace) = newton_solve(&pr, &NewtonOptions::default()).unwrap();
            assert_eq!(trace.outcome, Outcome::Converged, "{preset} beta1={beta1}");
            assert!(kkt_residual_norm(&x, &pr, pr.spec.c).unwrap() <= 1e-8);
            let (au, ay) = (pr.alpha_u(), pr.alpha_y());
            for i in 0..pr.n() {
                let v = au * x.u[i] + ay * x.y[i];
                if let Some(a) = pr.a[i] {
                    assert!(v >= a - 1e-6, "{preset}: lower bound violated at {i}");
                }
                if let Some(b) = pr.b[i] {
                    assert!(v <= b + 1e-6, "{preset}: upper bound violated at {i}");
                }
            }
        }
    }
}

#[test]
fn methods_agree_on_the_solution() {
    let pr = preset_problem("CC-Pb1", 2, 1e-2, Velocity::Constant([10.0, 0.0, 0.0]), 0.0).unwrap();
    let mut sols = Vec::new();
    for method in Method::ALL {
        let (x, trace) = newton_solve(&pr, &NewtonOptions::new(method, Forcing::Exact)).unwrap();
        assert!(trace.converged(), "{method}");
        sols.push(x.u);
    }
    let scale = sols[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for s in &sols[1..] {
        let d = s.iter().zip(&sols[0]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d <= 1e-6 * scale.max(1.0), "control differs by {d}");
    }
}

#[test]
fn inexact_forcing_converges_with_fewer_inner_iterations() {
    let pr = preset_problem("CC-Pb1", 2, 1e-6, Velocity::zero(), 0.0).unwrap();
    let (_, exact) = newton_solve(&pr, &NewtonOptions::new(Method::GmresIpf, Forcing::Exact)).unwrap();
    let (_, inexact) = newton_solve(&pr, &NewtonOptions::new(Method::GmresIpf, Forcing::Inexact)).unwrap();
    assert!(exact.converged() && inexact.converged());
    assert!(inexact.mean_li() <= exact.mean_li());
}

#[test]
fn rotational_convection_is_solved() {
    let pr = preset_problem("CC-Pb1", 2, 1e-2, Velocity::Rotational, 0.0).unwrap();
    let (_, trace) = newton_solve(&pr, &NewtonOptions::new(Method::MinresBdf, Forcing::Exact)).unwrap();
    assert!(trace.converged());
    assert!(trace.records.iter().all(|r| r.linear_converged));
}
