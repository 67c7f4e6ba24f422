//! Sturm–Liouville solver against closed-form solutions.

use std::f64::consts::PI;

use effpot::grid::{FluxOperator, Grid};
use effpot::sturm::{check_lax_milgram, estimate_poincare, solve_sl, SlProblem};
use effpot::verify::{profile, sturm_liouville_diagnostics, SlCheckSetup};

const TOL: f64 = 1e-13;

fn max_error(m: usize) -> f64 {
    // (v')' = -π² sin(πx) with v(0) = v(1) = 0 has v = sin(πx)
    let grid = Grid::new(0.0, 1.0, m).unwrap();
    let rhs = grid.sample(|x| -PI * PI * (PI * x).sin());
    let problem = SlProblem::from_density(&grid, &vec![1.0; m], rhs, 1e-8).unwrap();
    let (v, _) = solve_sl(&problem, TOL).unwrap();
    grid.sample(|x| (PI * x).sin())
        .iter()
        .zip(&v)
        .fold(0.0, |a, (e, s)| a.max((e - s).abs()))
}

#[test]
fn constant_coefficient_converges_at_second_order() {
    let errors: Vec<f64> = [15, 31, 63].iter().map(|&m| max_error(m)).collect();
    // leading error of the three-point Laplacian: h² π² / 12 · max|sin|
    let h = 1.0 / 16.0;
    assert!((errors[0] - h * h * PI * PI / 12.0).abs() < 0.1 * errors[0]);
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.9..4.1).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn discrete_manufactured_solution_is_exact() {
    let grid = Grid::new(0.0, 1.0, 31).unwrap();
    let n = grid.sample(|x| 2.0 + (PI * x).cos());
    let op = FluxOperator::weighted_divgrad(&grid, &n, 1e-8).unwrap();
    let exact = grid.sample(|x| x * (1.0 - x) * x.exp());
    let problem = SlProblem::new(op.clone(), op.apply(&exact), 1e-8).unwrap();
    let (v, diag) = solve_sl(&problem, TOL).unwrap();
    let err = v.iter().zip(&exact).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(err <= 1e-9, "error {err:.3e}");
    assert!(diag.residual <= 1e-12);
}

#[test]
fn poincare_constant_of_the_unit_interval() {
    let lambda = estimate_poincare(&Grid::new(0.0, 1.0, 63).unwrap()).unwrap();
    assert!((lambda - 1.0 / PI).abs() <= 1e-3, "lambda {lambda}");
    // scales with the interval length
    let wide = estimate_poincare(&Grid::new(0.0, 2.0, 127).unwrap()).unwrap();
    assert!((wide - 2.0 / PI).abs() <= 2e-3, "lambda {wide}");
}

#[test]
fn coercivity_holds_on_random_fields() {
    let grid = Grid::new(0.0, 1.0, 31).unwrap();
    let n = grid.sample(|x| 0.2 + x * x);
    let op = FluxOperator::weighted_divgrad(&grid, &n, 1e-8).unwrap();
    let diag = check_lax_milgram(&grid, &op, &grid.sample(|x| x), 150, 3);
    assert_eq!(diag.trials, Some(150));
    assert_eq!(diag.coercivity_violations, Some(0));
    assert_eq!(diag.continuity_violations, Some(0));
    assert!(diag.coercivity_c > 0.0 && diag.m <= diag.big_m);
}

#[test]
fn diagnostics_report_passes_on_a_smooth_problem() {
    let setup = SlCheckSetup {
        omega: Grid::new(0.0, 1.0, 15).unwrap(),
        density: profile(|x| 2.0 + (PI * x).cos()),
        solution: profile(|x| (PI * x).sin()),
        trials: 100,
        seed: 11,
        floor: 1e-8,
    };
    let report = sturm_liouville_diagnostics(&setup).unwrap();
    assert!(report.passed(), "{}", report.summary());
    assert!(report.notes.iter().any(|n| n.contains("not checked")));
}
