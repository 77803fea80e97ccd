use std::f64::consts::PI;
use std::sync::Arc;

use elim_core::analysis::{cost_ratio, estimate_orders, reference_solution, solution_error};
use elim_core::problems::{kepler_invariants, kepler_problem, KeplerInvariants};
use elim_core::{integrate, MethodConfig, MethodRegistry, MethodSpec};

fn terminal_error(
    name: &str,
    config: MethodConfig,
    invariants: Option<KeplerInvariants>,
    div: usize,
) -> (f64, f64) {
    let problem = Arc::new(kepler_problem(0.6).unwrap());
    let inv = invariants.map(|w| Arc::new(kepler_invariants(w)));
    let method = MethodRegistry::default()
        .build(&MethodSpec::new(name, config), problem.clone(), inv)
        .unwrap();
    let traj = integrate(method.as_ref(), None, PI / div as f64, 20 * div).unwrap();
    let reference = reference_solution(&problem, PI / div as f64, 20.0 * PI).unwrap();
    (
        solution_error(traj.final_state(), &reference),
        traj.alpha_max(),
    )
}

#[test]
fn ten_period_errors_match_published_values() {
    let cases = [
        ("gauss", MethodConfig::gauss(3), None, 2.817e-5),
        ("hbvm", MethodConfig::hbvm(12, 3), None, 7.375e-7),
        (
            "ehbvm",
            MethodConfig::hbvm(12, 3),
            Some(KeplerInvariants::AngularMomentum),
            1.644e-7,
        ),
        (
            "ehbvm",
            MethodConfig::hbvm(12, 3),
            Some(KeplerInvariants::AngularMomentumAndLrl),
            3.052e-7,
        ),
    ];
    for (name, config, inv, expected) in cases {
        let (err, _) = terminal_error(name, config, inv, 60);
        assert!(
            (err / expected - 1.0).abs() < 0.01,
            "{name} {inv:?}: {err:e} vs {expected:e}"
        );
    }
}

#[test]
fn correction_coefficients_shrink_quadratically() {
    let alphas: Vec<f64> = [30, 60, 120]
        .iter()
        .map(|&div| {
            terminal_error(
                "ehbvm",
                MethodConfig::hbvm(12, 3),
                Some(KeplerInvariants::AngularMomentum),
                div,
            )
            .1
        })
        .collect();
    assert!((alphas[0] / 4.530e-3 - 1.0).abs() < 0.01, "{alphas:?}");
    for order in estimate_orders(&alphas).unwrap() {
        assert!((order - 2.0).abs() < 0.05, "{order}");
    }
}

#[test]
fn cost_model_examples() {
    assert_eq!(cost_ratio(12, 12, 12, 12, 1), 1.5);
    assert!((cost_ratio(12, 12, 12, 12, 2) - 4.0 / 3.0).abs() < 1e-15);
    assert_eq!(cost_ratio(12, 12, 6, 12, 1), 2.0);
}
