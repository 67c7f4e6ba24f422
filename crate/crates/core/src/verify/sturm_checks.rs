//! Sturm–Liouville solver diagnostics: manufactured solutions, grid
//! convergence, uniqueness, Lax–Milgram coercivity and the Poincaré constant.

use std::f64::consts::PI;

use crate::error::Result;
use crate::grid::{FluxOperator, Grid};
use crate::sturm::{estimate_poincare, solve_sl, solve_with_diagnostics, SlProblem};

use super::report::{ExperimentReport, Verdict};
use super::setup::Profile;

pub const MANUFACTURED_TOL: f64 = 1e-9;
pub const CONVERGENCE_RATIO: (f64, f64) = (3.5, 4.5);
pub const UNIQUENESS_TOL: f64 = 1e-12;
pub const POINCARE_TOL: f64 = 1e-3;
pub const MIN_TRIALS: usize = 100;
/// Grid for the Poincaré estimate on `(0, 1)`.
pub const POINCARE_NODES: usize = 63;
/// Solver tolerance of the diagnostics (tighter than the inversion default).
pub const SOLVE_TOL: f64 = 1e-13;

/// Inputs of the diagnostic run.
#[derive(Clone)]
pub struct SlCheckSetup {
    pub omega: Grid,
    /// Coefficient `n(x) > 0`.
    pub density: Profile,
    /// Exact solution, vanishing at both ends.
    pub solution: Profile,
    pub trials: usize,
    pub seed: u64,
    pub floor: f64,
}

/// `d/dx f` by the eighth-order central stencil.
fn derivative(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    const STEP: f64 = 1e-2;
    const W: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    W.iter()
        .enumerate()
        .map(|(i, w)| {
            let d = (i + 1) as f64 * STEP;
            w * (f(x + d) - f(x - d))
        })
        .sum::<f64>()
        / STEP
}

/// Continuum right-hand side `(n v′)′` of the exact solution.
fn continuum_rhs(setup: &SlCheckSetup, x: f64) -> f64 {
    let flux = |y: f64| (setup.density)(y) * derivative(&|z| (setup.solution)(z), y);
    derivative(&flux, x)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn sturm_liouville_diagnostics(setup: &SlCheckSetup) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("diagnose-sl");
    let grid = &setup.omega;
    let n = grid.sample(|x| (setup.density)(x));
    let op = FluxOperator::weighted_divgrad(grid, &n, setup.floor)?;

    // manufactured: the right-hand side is the discrete operator applied to the exact field
    let exact = grid.sample(|x| (setup.solution)(x));
    let rhs = op.apply(&exact);
    let problem = SlProblem::new(op.clone(), rhs, setup.floor)?;
    let (v, diag) = solve_with_diagnostics(grid, &problem, SOLVE_TOL, setup.trials, setup.seed)?;
    report.push(Verdict::at_most(
        "manufactured solution max error",
        max_abs_diff(&v, &exact),
        MANUFACTURED_TOL,
    ));
    report.push(Verdict::at_least(
        "Lax-Milgram trials",
        diag.trials.unwrap_or(0) as f64,
        MIN_TRIALS as f64,
    ));
    report.push(Verdict::at_most(
        "Lax-Milgram coercivity violations",
        diag.coercivity_violations.unwrap_or(usize::MAX) as f64,
        0.0,
    ));
    report.notes.push("C3 regularity of the coefficient: not checked".into());
    report.inversions.insert("manufactured".into(), vec![diag]);

    // uniqueness: zero data gives the zero solution
    let zero = SlProblem::new(op, vec![0.0; grid.len()], setup.floor)?;
    let (z, _) = solve_sl(&zero, SOLVE_TOL)?;
    report.push(Verdict::at_most(
        "zero right-hand side max |v|",
        z.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        UNIQUENESS_TOL,
    ));

    // convergence against the continuum solution on three nested grids
    let mut grids = vec![grid.clone()];
    for _ in 0..2 {
        let next = grids[grids.len() - 1].refined()?;
        grids.push(next);
    }
    let mut errors = Vec::new();
    for g in &grids {
        let n = g.sample(|x| (setup.density)(x));
        let rhs = g.sample(|x| continuum_rhs(setup, x));
        let problem = SlProblem::from_density(g, &n, rhs, setup.floor)?;
        let (v, _) = solve_sl(&problem, SOLVE_TOL)?;
        let exact = g.sample(|x| (setup.solution)(x));
        let err = max_abs_diff(&v, &exact);
        report.metric(format!("continuum max error M={}", g.len()), err);
        errors.push(err);
    }
    for (i, w) in errors.windows(2).enumerate() {
        report.push(Verdict::between(
            format!("error ratio M={} -> M={}", grids[i].len(), grids[i + 1].len()),
            w[0] / w[1],
            CONVERGENCE_RATIO.0,
            CONVERGENCE_RATIO.1,
        ));
    }

    let lambda = estimate_poincare(&Grid::new(0.0, 1.0, POINCARE_NODES)?)?;
    report.metric("poincare lambda on (0,1)", lambda);
    report.push(Verdict::within(
        "Poincare constant on (0,1)",
        lambda,
        1.0 / PI,
        POINCARE_TOL,
    ));
    Ok(report)
}
