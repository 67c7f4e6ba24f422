//! Experiments on the physical system alone: forward propagation with its
//! conservation monitors, and inversion of a system's own density.

use crate::error::Result;
use crate::grid::TaylorField;
use crate::quantum::{density, propagate_observed, TaylorSchedule};
use crate::taylor::{delta_potential_taylor, gauge_aligned, invert_potential_taylor};

use super::conservation::{conservation_checks, ConservationMonitor};
use super::fit::{fit_slope, linear_floor};
use super::report::{ExperimentReport, SeriesRow, TimeSeries, Verdict};
use super::roundtrip::{dual_route_density_orders, mismatch, DUAL_ROUTE_TOL};
use super::setup::ExperimentSetup;

/// Reduction window of the residuals under `(h, dt)` halving.
pub const REFINEMENT_RATIO: (f64, f64) = (3.5, 4.5);
/// Stationary residual bound.
pub const EIGENSTATE_TOL: f64 = 1e-8;
/// Norm drift bound per 1000 steps.
pub const NORM_DRIFT_TOL: f64 = 1e-10;
/// Relative accuracy of self-inversion.
pub const SELF_INVERSION_TOL: f64 = 1e-6;

/// Propagate the physical system, compare with its own density Taylor
/// series, and run the conservation study.
pub fn forward_experiment(setup: &ExperimentSetup) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("forward");
    let window = setup.window()?;
    let system = setup.physical_system(&window)?;
    let (state, gs) = setup.initial_state(&system).map_err(|e| e.at_stage("initial state"))?;
    report.metric("initial ground-state energy", gs.energy);
    report.metric("initial ground-state residual", gs.residual);

    let k = setup.order;
    let truncated = setup.truncated_potential(&window, k);
    let (orders, deviation) =
        dual_route_density_orders(&system, &state, &truncated, k, setup.inversion.engine)
            .map_err(|e| e.at_stage("density orders"))?;
    report.push(Verdict::at_most(
        format!("dual-route density orders k<={}", k + 2),
        deviation,
        DUAL_ROUTE_TOL,
    ));

    // propagation against the truncated density series
    let schedule = TaylorSchedule {
        t0: 0.0,
        field: setup.potential_field(&window),
    };
    let omega_orders = orders.map(|o| window.restrict(o));
    let dt = setup.dt;
    let steps = setup.steps()?;
    let mut monitor = ConservationMonitor::new(&system, &schedule, 0.0, dt);
    let mut rows = Vec::with_capacity(steps + 1);
    propagate_observed(&system, &state, &schedule, 0.0, dt, steps, |j, s| {
        let t = j as f64 * dt;
        let n = window.restrict(&density(&system, s)?);
        let (l2, linf) = mismatch(&window, &n, &omega_orders.evaluate(t));
        let mut row = SeriesRow::at(t);
        row.e_l2 = l2;
        row.e_linf = linf;
        row.norm_drift = (s.norm() - 1.0).abs();
        rows.push(row);
        if let Some(r) = monitor.observe(j, s)? {
            rows[r.step].continuity_res = r.continuity;
            rows[r.step].forcebalance_res = r.force_balance;
        }
        Ok(())
    })
    .map_err(|e| e.at_stage("propagation"))?;
    let main = monitor.finish();
    report.push(Verdict::at_most(
        "norm drift per 1000 steps (experiment run)",
        main.norm_drift_per_1000_steps,
        NORM_DRIFT_TOL,
    ));
    let series: Vec<(f64, f64)> = rows.iter().skip(1).map(|r| (r.t, r.e_l2)).collect();
    match fit_slope(&series, dt, setup.t_end, linear_floor(&series)) {
        Ok(fit) => {
            report.slope = Some(fit.slope);
            report.fits.insert("density Taylor series".into(), fit);
        }
        Err(e) => report.notes.push(format!("density Taylor series: no slope ({e})")),
    }
    report.series.push(TimeSeries {
        name: "series".into(),
        rows,
    });

    let cons = conservation_checks(setup).map_err(|e| e.at_stage("conservation study"))?;
    if let Some(r) = cons.ratios {
        for (name, ratio) in ["continuity", "force balance", "second-derivative identity"]
            .iter()
            .zip(r)
        {
            report.push(Verdict::between(
                format!("{name} residual reduction under (h, dt) halving"),
                ratio,
                REFINEMENT_RATIO.0,
                REFINEMENT_RATIO.1,
            ));
        }
    }
    let e = &cons.eigenstate;
    for (name, value) in [
        ("continuity", e.continuity),
        ("force balance", e.force_balance),
        ("second-derivative identity", e.second_derivative),
    ] {
        report.push(Verdict::at_most(format!("eigenstate {name} residual"), value, EIGENSTATE_TOL));
    }
    for (name, m) in [("driven", Some(&cons.coarse)), ("refined", cons.refined.as_ref()), ("eigenstate", Some(e))] {
        if let Some(m) = m {
            report.push(Verdict::at_most(
                format!("norm drift per 1000 steps ({name} run)"),
                m.norm_drift_per_1000_steps,
                NORM_DRIFT_TOL,
            ));
        }
    }
    report.conservation = Some(cons);
    Ok(report)
}

/// Invert a system's own density into itself; the potential orders must come
/// back, and the correction route must give `v_Δ = 0`.
pub fn self_inversion_experiment(setup: &ExperimentSetup) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("invert");
    let window = setup.window()?;
    let system = setup.physical_system(&window)?;
    let (state, _) = setup.initial_state(&system).map_err(|e| e.at_stage("initial state"))?;
    let k = setup.order;
    let v = setup.truncated_potential(&window, k);
    let (orders, deviation) =
        dual_route_density_orders(&system, &state, &v, k, setup.inversion.engine)
            .map_err(|e| e.at_stage("density orders"))?;
    report.push(Verdict::at_most(
        format!("dual-route density orders k<={}", k + 2),
        deviation,
        DUAL_ROUTE_TOL,
    ));
    let target = orders.map(|o| window.restrict(o));
    let inv = invert_potential_taylor(&target, &system, &state, k, &setup.inversion)
        .map_err(|e| e.at_stage("inversion"))?;
    report.inversions.insert(format!("K={k}"), inv.diagnostics.clone());
    let v_omega: TaylorField = v.map(|o| window.restrict(o));
    let scale = v_omega
        .orders
        .iter()
        .flatten()
        .fold(0.0_f64, |a, x| a.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for (order, (got, want)) in inv.v_prime.iter().zip(&v_omega.orders).enumerate() {
        let (g, w) = (gauge_aligned(got), gauge_aligned(want));
        let own = w.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let s = if own > 0.0 { own } else { scale };
        let err = g.iter().zip(&w).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs())) / s;
        report.push(Verdict::at_most(
            format!("self-inversion order {order} relative error"),
            err,
            SELF_INVERSION_TOL,
        ));
    }
    let delta = delta_potential_taylor(&system, &state, &v, &system, &state, k, &setup.inversion)
        .map_err(|e| e.at_stage("correction route"))?;
    let largest = delta
        .v_delta
        .iter()
        .flatten()
        .flatten()
        .fold(0.0_f64, |a, x| a.max(x.abs()));
    report.push(Verdict::at_most(
        "correction route v_delta for identical systems (relative)",
        largest / scale,
        SELF_INVERSION_TOL,
    ));
    Ok(report)
}
