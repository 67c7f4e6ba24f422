//! Time-stepping inversion: find, step by step, the piecewise-constant
//! potential under which the primed system follows a sampled target density.
//!
//! The potential `u_j` acting on `[t_j, t_{j+1})` solves the second-derivative
//! identity at the step midpoint,
//!
//! `∇·(b̄∇u_j) = n̈_target(t_{j+1/2}) − q̄`,
//!
//! on `Ω`, where `n̈_target` comes from centred differences of the target and
//! `b̄`, `q̄` average the primed state's values at both ends of the step. The
//! predictor uses the values at `t_j` only; each corrector sweep propagates a
//! trial step and re-averages. The scheme is second order in `dt`; it does
//! not force the density back onto the target, so the closed-loop mismatch
//! is a genuine measure of the oracle's accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FluxOperator;
use crate::quantum::{
    bond_density, current_divergence, density, q_field, CrankNicolson, ManyBodySystem,
    QuantumState, C64,
};
use crate::sturm::{solve_sl, SlProblem};
use crate::taylor::{gauge_aligned, invert_potential_taylor, COMPATIBILITY_TOL};

use super::fit::{constant_floor, fit_slope};
use super::report::{ExperimentReport, SeriesRow, TimeSeries, Verdict};
use super::roundtrip::{build_target, mismatch, primed_initial_state, SLOPE_TOL};
use super::setup::{ExperimentSetup, OracleOptions};

/// Potential table produced by the oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleTrack {
    pub dt: f64,
    /// `u_j` on `Ω`, acting on `[t_j, t_{j+1})`.
    pub potentials: Vec<Vec<f64>>,
    /// `(L2, max)` density mismatch on `Ω` at `t_{j+1}`.
    pub tracking: Vec<(f64, f64)>,
    /// Corrector sweeps used per step.
    pub sweeps: Vec<usize>,
}

impl OracleTrack {
    pub fn max_tracking_error(&self) -> f64 {
        self.tracking.iter().fold(0.0, |a, e| a.max(e.0))
    }
}

/// `n̈` at sample `j`: centred inside, third-order one-sided at both ends.
fn acceleration(target: &[Vec<f64>], j: usize, dt: f64) -> Vec<f64> {
    let inv = 1.0 / (dt * dt);
    let last = target.len() - 1;
    let one_sided = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..a.len())
            .map(|i| (2.0 * a[i] - 5.0 * b[i] + 4.0 * c[i] - d[i]) * inv)
            .collect()
    };
    if j == 0 {
        one_sided(&target[0], &target[1], &target[2], &target[3])
    } else if j == last {
        one_sided(&target[last], &target[last - 1], &target[last - 2], &target[last - 3])
    } else {
        (0..target[j].len())
            .map(|i| (target[j + 1][i] - 2.0 * target[j][i] + target[j - 1][i]) * inv)
            .collect()
    }
}

fn average(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Follow `target` (densities on `Ω` at `j dt`, `j = 0..`) with the primed
/// system started in `state`.
///
/// Fails with [`Error::NonConvergence`] (its `iterations` field is the step
/// index) when the tracking mismatch exceeds `tol_track` or the corrector
/// sweeps stop contracting above `step_tol`.
pub fn timestep_inversion_oracle(
    target: &[Vec<f64>],
    primed: &ManyBodySystem,
    state: &QuantumState,
    dt: f64,
    opts: &OracleOptions,
    sl_tol: f64,
    floor: f64,
) -> Result<OracleTrack> {
    let window = primed.window();
    let h = window.grid().h();
    if target.len() < 4 {
        return Err(Error::Precondition(
            "oracle needs at least four target samples".into(),
        ));
    }
    for n in target {
        window.omega().check_field(n, "target density")?;
    }
    let n0 = window.restrict(&density(primed, state)?);
    let scale = target[0].iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    let (_, dev) = mismatch(window, &n0, &target[0]);
    if dev > COMPATIBILITY_TOL * scale {
        return Err(Error::Compatibility {
            condition: "initial density equals the first target sample",
            deviation: dev,
            tolerance: COMPATIBILITY_TOL * scale,
        });
    }
    let cn = CrankNicolson::new(primed, dt)?;
    let solve = |b: &[f64], rhs: Vec<f64>| -> Result<Vec<f64>> {
        let op = FluxOperator::from_faces(h, window.restrict_faces(b))?;
        Ok(solve_sl(&SlProblem::new(op, rhs, floor)?, sl_tol)?.0)
    };
    let local = |amps: &[C64]| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let s = QuantumState::new(amps.to_vec())?;
        Ok((
            bond_density(primed, &s)?,
            window.restrict(&q_field(primed, &s)?),
            window.restrict(&density(primed, &s)?),
        ))
    };

    let steps = target.len() - 1;
    let mut track = OracleTrack {
        dt,
        potentials: Vec::with_capacity(steps),
        tracking: Vec::with_capacity(steps),
        sweeps: Vec::with_capacity(steps),
    };
    let mut psi = state.amplitudes().to_vec();
    let mut start = local(&psi)?;
    let mut acc_here = acceleration(target, 0, dt);
    for j in 0..steps {
        let acc_next = acceleration(target, j + 1, dt);
        let acc_mid = average(&acc_here, &acc_next);
        let (b0, q0, _) = &start;
        let rhs = |q: &[f64]| -> Vec<f64> { acc_mid.iter().zip(q).map(|(a, c)| a - c).collect() };
        let mut u = solve(b0, rhs(q0))?;
        let mut history = Vec::new();
        let mut sweeps = 0;
        let (mut next, _) = cn.step(&psi, &window.extend(&u))?;
        let mut end = local(&next)?;
        for _ in 0..opts.sweeps {
            let b_mid = average(b0, &end.0);
            let q_mid = average(q0, &end.1);
            let updated = solve(&b_mid, rhs(&q_mid))?;
            let change = updated
                .iter()
                .zip(&u)
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            history.push(change);
            u = updated;
            sweeps += 1;
            let (n, _) = cn.step(&psi, &window.extend(&u))?;
            next = n;
            end = local(&next)?;
            if change <= opts.step_tol {
                break;
            }
            if history.len() >= 2 && change >= history[history.len() - 2] {
                return Err(Error::NonConvergence {
                    solver: "time-stepping inversion oracle (iterations = step index)",
                    iterations: j,
                    residual: change,
                    history,
                });
            }
        }
        let (l2, linf) = mismatch(window, &target[j + 1], &end.2);
        if !(l2 <= opts.tol_track) {
            return Err(Error::NonConvergence {
                solver: "time-stepping inversion oracle (iterations = step index)",
                iterations: j,
                residual: l2,
                history,
            });
        }
        track.sweeps.push(sweeps);
        track.tracking.push((l2, linf));
        track.potentials.push(u);
        psi = next;
        start = end;
        acc_here = acc_next;
    }
    Ok(track)
}

/// Oracle tracking in closed loop plus the small-time comparison with the
/// Taylor-route potential.
pub fn oracle_compare_experiment(setup: &ExperimentSetup) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("oracle-compare");
    let window = setup.window()?;
    let target = build_target(setup, &window)?;
    let g = setup.primed_strengths.first().copied().unwrap_or(0.0);
    let primed = setup.primed_system(&window, g)?;
    let state = primed_initial_state(setup, &target, &primed)?;
    let rate = current_divergence(&primed, &state)?;
    report.metric(
        "initial density-rate mismatch",
        window
            .restrict(&rate)
            .iter()
            .zip(target.orders.order(1))
            .fold(0.0_f64, |a, (x, y)| a.max((x + y).abs())),
    );

    let k = setup.order;
    let inversion = invert_potential_taylor(&target.orders, &primed, &state, k, &setup.inversion)
        .map_err(|e| e.at_stage("inversion"))?;
    report
        .inversions
        .insert(format!("K={k}"), inversion.diagnostics.clone());
    let track = timestep_inversion_oracle(
        &target.densities,
        &primed,
        &state,
        setup.dt,
        &setup.oracle,
        setup.inversion.tol.min(1e-12),
        setup.inversion.floor,
    )
    .map_err(|e| e.at_stage("time-stepping oracle"))?;

    report.push(Verdict::at_most(
        "oracle closed-loop tracking error",
        track.max_tracking_error(),
        setup.oracle.tol_track,
    ));
    report.metric(
        "oracle mean corrector sweeps",
        track.sweeps.iter().sum::<usize>() as f64 / track.sweeps.len().max(1) as f64,
    );

    // Taylor potential at the step midpoints against the oracle table
    let taylor = inversion.v_prime_field();
    let dt = setup.dt;
    let mut tracking = TimeSeries {
        name: "series".into(),
        rows: vec![SeriesRow::at(0.0)],
    };
    let mut gap = TimeSeries {
        name: "taylor_vs_oracle".into(),
        rows: Vec::new(),
    };
    let mut series = Vec::new();
    for (j, u) in track.potentials.iter().enumerate() {
        let t = (j as f64 + 0.5) * dt;
        let vt = gauge_aligned(&taylor.evaluate(t));
        let uo = gauge_aligned(u);
        let (l2, linf) = mismatch(&window, &vt, &uo);
        series.push((t, linf));
        let mut row = SeriesRow::at(t);
        row.e_l2 = l2;
        row.e_linf = linf;
        gap.rows.push(row);
        let mut row = SeriesRow::at((j + 1) as f64 * dt);
        row.e_l2 = track.tracking[j].0;
        row.e_linf = track.tracking[j].1;
        tracking.rows.push(row);
    }
    tracking.rows[0].e_l2 = 0.0;
    tracking.rows[0].e_linf = 0.0;
    let fit = fit_slope(&series, dt, setup.t_end, constant_floor(&series));
    match &fit {
        Ok(f) => {
            report.fits.insert("taylor vs oracle potential".into(), f.clone());
        }
        Err(e) => report.notes.push(format!("taylor vs oracle potential: no slope ({e})")),
    }
    let slope = fit.as_ref().map_or(f64::NAN, |f| f.slope);
    report.slope = fit.ok().map(|f| f.slope);
    report.push(Verdict::within(
        "taylor vs oracle potential order",
        slope,
        (k + 1) as f64,
        SLOPE_TOL,
    ));
    report.series.push(tracking);
    report.series.push(gap);
    Ok(report)
}
