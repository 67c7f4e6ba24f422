//! Round trips through primed systems: invert the physical density order by
//! order, propagate the primed system under the truncated series and compare.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{TaylorField, Window};
use crate::quantum::{
    construct_ks_initial_state, current_divergence, density, observable_taylor, propagate,
    propagate_observed, ManyBodySystem, OperatorField, QuantumState, TaylorSchedule,
};
use crate::taylor::{delta_potential_taylor, invert_potential_taylor, predict_density_taylor, InversionResult};

use super::conservation::ConservationMonitor;
use super::fit::{fit_slope, linear_floor};
use super::report::{ExperimentReport, SeriesRow, SlopeFit, TimeSeries, Verdict};
use super::setup::ExperimentSetup;

/// Relative agreement required between the two routes to `n⁽ᵏ⁾`.
pub const DUAL_ROUTE_TOL: f64 = 1e-8;
/// Tolerance on fitted orders.
pub const SLOPE_TOL: f64 = 0.5;
/// Bound on `e(t0 + dt)` for the highest order.
pub const FIRST_STEP_TOL: f64 = 1e-6;
/// Relative agreement required between the direct and correction routes.
pub const CORRECTION_ROUTE_TOL: f64 = 1e-6;

/// The physical run every primed system is compared against.
pub struct Target {
    pub window: Window,
    pub system: ManyBodySystem,
    pub state: QuantumState,
    /// Box potential orders driving the physical system.
    pub potential: TaylorField,
    /// Density orders `n⁽⁰⁾..n⁽ᴷ⁺²⁾` on `Ω`.
    pub orders: TaylorField,
    /// Largest relative deviation between the second-derivative recursion and
    /// the direct Heisenberg recursion for `n⁽ᵏ⁾`.
    pub dual_route_deviation: f64,
    /// Propagated densities on `Ω` at `j dt`.
    pub densities: Vec<Vec<f64>>,
    pub dt: f64,
    /// Box density and density rate at `t0`.
    pub n0: Vec<f64>,
    pub n1: Vec<f64>,
}

/// Largest per-order relative deviation of two Taylor fields.
pub fn relative_deviation(a: &TaylorField, b: &TaylorField) -> f64 {
    a.orders
        .iter()
        .zip(&b.orders)
        .map(|(x, y)| {
            let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let diff = x.iter().zip(y).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        })
        .fold(0.0, f64::max)
}

/// Density orders on the box by both routes; returns the recursion route and
/// the deviation.
pub fn dual_route_density_orders(
    system: &ManyBodySystem,
    state: &QuantumState,
    v: &TaylorField,
    k: usize,
    engine: crate::quantum::TaylorEngine,
) -> Result<(TaylorField, f64)> {
    let recursion = predict_density_taylor(system, state, v, k, engine)?;
    let direct = observable_taylor(system, state, &OperatorField::density(system), v, k + 2)?;
    let deviation = relative_deviation(&recursion, &direct);
    Ok((recursion, deviation))
}

pub fn build_target(setup: &ExperimentSetup, window: &Window) -> Result<Target> {
    let system = setup.physical_system(window).map_err(|e| e.at_stage("physical system"))?;
    let (state, _) = setup
        .initial_state(&system)
        .map_err(|e| e.at_stage("initial state"))?;
    let potential = setup.potential_field(window);
    let truncated = setup.truncated_potential(window, setup.order);
    let (orders, dual_route_deviation) =
        dual_route_density_orders(&system, &state, &truncated, setup.order, setup.inversion.engine)
            .map_err(|e| e.at_stage("target density orders"))?;
    let steps = setup.steps()?;
    let traj = propagate(
        &system,
        &state,
        &TaylorSchedule {
            t0: 0.0,
            field: potential.clone(),
        },
        0.0,
        setup.dt,
        steps,
        false,
    )
    .map_err(|e| e.at_stage("target propagation"))?;
    let n0 = density(&system, &state)?;
    let n1: Vec<f64> = current_divergence(&system, &state)?.iter().map(|d| -d).collect();
    Ok(Target {
        orders: orders.map(|o| window.restrict(o)),
        densities: traj.densities.iter().map(|n| window.restrict(n)).collect(),
        window: window.clone(),
        system,
        state,
        potential,
        dual_route_deviation,
        dt: setup.dt,
        n0,
        n1,
    })
}

/// The Kohn–Sham-type product state reproducing the target's `n` and `∂ₜn`.
pub fn primed_initial_state(setup: &ExperimentSetup, target: &Target, primed: &ManyBodySystem) -> Result<QuantumState> {
    construct_ks_initial_state(primed, &target.n0, &target.n1, setup.inversion.floor)
        .map_err(|e| e.at_stage("primed initial state"))
}

/// Mismatch norms on `Ω` (`L2` and max).
pub fn mismatch(window: &Window, a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let linf = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    (window.omega().l2_norm(&d), linf)
}

/// Outcome of one primed propagation at one order.
pub struct PrimedRun {
    pub strength: f64,
    pub order: usize,
    pub inversion: InversionResult,
    pub rows: Vec<SeriesRow>,
    pub fit: std::result::Result<SlopeFit, String>,
}

impl PrimedRun {
    pub fn error_series(&self) -> Vec<(f64, f64)> {
        self.rows.iter().skip(1).map(|r| (r.t, r.e_l2)).collect()
    }

    /// `e_L2` at the sample closest to `t`.
    pub fn error_at(&self, t: f64, dt: f64) -> f64 {
        let j = ((t / dt).round() as usize).min(self.rows.len() - 1);
        self.rows[j].e_l2
    }
}

/// Invert at order `k`, propagate, record the mismatch series; with
/// `monitor` the conservation residuals are recorded as well.
pub fn primed_run(
    setup: &ExperimentSetup,
    target: &Target,
    primed: &ManyBodySystem,
    state: &QuantumState,
    k: usize,
    monitor: bool,
) -> Result<PrimedRun> {
    let window = &target.window;
    let inversion = invert_potential_taylor(
        &target.orders.truncated(k + 3),
        primed,
        state,
        k,
        &setup.inversion,
    )
    .map_err(|e| e.at_stage("inversion"))?;
    let schedule = TaylorSchedule {
        t0: 0.0,
        field: inversion.v_prime_box(window),
    };
    let steps = target.densities.len() - 1;
    let dt = target.dt;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut cons = monitor.then(|| ConservationMonitor::new(primed, &schedule, 0.0, dt));
    propagate_observed(primed, state, &schedule, 0.0, dt, steps, |j, s| {
        let n = window.restrict(&density(primed, s)?);
        let (l2, linf) = mismatch(window, &n, &target.densities[j]);
        let mut row = SeriesRow::at(j as f64 * dt);
        row.e_l2 = l2;
        row.e_linf = linf;
        row.norm_drift = (s.norm() - 1.0).abs();
        rows.push(row);
        if let Some(c) = cons.as_mut() {
            if let Some(r) = c.observe(j, s)? {
                rows[r.step].continuity_res = r.continuity;
                rows[r.step].forcebalance_res = r.force_balance;
            }
        }
        Ok(())
    })
    .map_err(|e| e.at_stage("primed propagation"))?;
    let series: Vec<(f64, f64)> = rows.iter().skip(1).map(|r| (r.t, r.e_l2)).collect();
    let fit = fit_slope(&series, dt, setup.t_end, linear_floor(&series)).map_err(|e| e.to_string());
    Ok(PrimedRun {
        strength: primed.spec().interaction.strength,
        order: k,
        inversion,
        rows,
        fit,
    })
}

/// Orders `0..=K` for one primed interaction strength, in parallel.
pub fn order_sweep(setup: &ExperimentSetup, target: &Target, g: f64) -> Result<Vec<PrimedRun>> {
    let primed = setup
        .primed_system(&target.window, g)
        .map_err(|e| e.at_stage("primed system"))?;
    let state = primed_initial_state(setup, target, &primed)?;
    (0..=setup.order)
        .into_par_iter()
        .map(|k| primed_run(setup, target, &primed, &state, k, k == setup.order))
        .collect()
}

fn label(g: f64) -> String {
    format!("g'={g}")
}

/// Fits, metrics and verdicts of one order sweep.
pub fn assess_sweep(report: &mut ExperimentReport, setup: &ExperimentSetup, runs: &[PrimedRun]) {
    let top = &runs[runs.len() - 1];
    let k = top.order;
    let tag = label(top.strength);
    for run in runs {
        let name = format!("{tag} K={}", run.order);
        match &run.fit {
            Ok(fit) => {
                report.fits.insert(name.clone(), fit.clone());
            }
            Err(msg) => report.notes.push(format!("{name}: no slope ({msg})")),
        }
        report
            .inversions
            .insert(name.clone(), run.inversion.diagnostics.clone());
        report.metric(
            format!("{name} e(probe)"),
            run.error_at(setup.probe_time, setup.dt),
        );
    }
    report.push(Verdict::at_most(
        format!("{tag} max Sturm-Liouville residual"),
        runs.iter()
            .map(|r| r.inversion.max_residual())
            .fold(0.0, f64::max),
        setup.inversion.tol,
    ));
    let slope = top.fit.as_ref().map_or(f64::NAN, |f| f.slope);
    report.push(Verdict::at_least(
        format!("{tag} slope at K={k}"),
        slope,
        (k + 1) as f64 - SLOPE_TOL,
    ));
    if runs.len() > 1 {
        let worst = runs
            .windows(2)
            .map(|w| w[1].error_at(setup.probe_time, setup.dt) / w[0].error_at(setup.probe_time, setup.dt))
            .fold(0.0, f64::max);
        report.push(
            Verdict::at_most(format!("{tag} error ratio e(K+1)/e(K) at probe time"), worst, 1.0)
                .with_detail(format!("probe time {}", setup.probe_time)),
        );
        let base = runs[0].fit.as_ref().map_or(f64::NAN, |f| f.slope);
        report.push(Verdict::at_least(
            format!("{tag} slope gain K={k} over K=0"),
            slope - base,
            f64::MIN_POSITIVE,
        ));
    }
    report.push(Verdict::at_most(
        format!("{tag} e(t0+dt) at K={k}"),
        top.rows.get(1).map_or(f64::NAN, |r| r.e_l2),
        FIRST_STEP_TOL,
    ));
}

/// Compare the direct inversion with the correction route `v′ = v + v_Δ`.
pub fn correction_route_deviation(
    setup: &ExperimentSetup,
    target: &Target,
    g: f64,
    direct: &InversionResult,
) -> Result<f64> {
    let primed = setup.primed_system(&target.window, g)?;
    let state = primed_initial_state(setup, target, &primed)?;
    let v = setup.truncated_potential(&target.window, setup.order);
    let corr = delta_potential_taylor(
        &target.system,
        &target.state,
        &v,
        &primed,
        &state,
        setup.order,
        &setup.inversion,
    )
    .map_err(|e| e.at_stage("correction route"))?;
    Ok(relative_deviation(
        &TaylorField::new(corr.v_prime.clone()),
        &TaylorField::new(direct.v_prime.clone()),
    ))
}

fn series_of(run: &PrimedRun, name: &str) -> TimeSeries {
    TimeSeries {
        name: name.into(),
        rows: run.rows.clone(),
    }
}

fn run_family(setup: &ExperimentSetup, kind: &str, strengths: &[f64]) -> Result<ExperimentReport> {
    if strengths.is_empty() {
        return Err(Error::config(
            "experiment.primed_strengths",
            "at least one primed interaction strength is required",
        ));
    }
    let mut report = ExperimentReport::new(kind);
    let window = setup.window()?;
    let target = build_target(setup, &window)?;
    report.push(Verdict::at_most(
        format!("dual-route density orders k<={}", setup.order + 2),
        target.dual_route_deviation,
        DUAL_ROUTE_TOL,
    ));
    let sweeps: Vec<Vec<PrimedRun>> = strengths
        .iter()
        .map(|&g| order_sweep(setup, &target, g))
        .collect::<Result<_>>()?;
    for (g, runs) in strengths.iter().zip(&sweeps) {
        assess_sweep(&mut report, setup, runs);
        let top = &runs[runs.len() - 1];
        let dev = correction_route_deviation(setup, &target, *g, &top.inversion)?;
        report.push(Verdict::at_most(
            format!("{} correction-route agreement", label(*g)),
            dev,
            CORRECTION_ROUTE_TOL,
        ));
        let name = if strengths.len() == 1 {
            "series".to_string()
        } else {
            format!("series_g{g}")
        };
        report.series.push(series_of(top, &name));
    }
    report.slope = sweeps[0].last().and_then(|r| r.fit.as_ref().ok()).map(|f| f.slope);
    Ok(report)
}

/// Kohn–Sham round trip (all `primed_strengths`, default `[0]`).
pub fn roundtrip_experiment(setup: &ExperimentSetup) -> Result<ExperimentReport> {
    run_family(setup, "roundtrip", &setup.primed_strengths)
}

/// The same target inverted into several primed interactions; every one must
/// satisfy the round-trip contract.
pub fn interaction_independence_experiment(setup: &ExperimentSetup) -> Result<ExperimentReport> {
    let mut strengths = setup.primed_strengths.clone();
    if strengths.len() < 2 {
        let g = setup.system.interaction.strength;
        strengths = vec![0.0, 0.5 * g];
    }
    run_family(setup, "independence", &strengths)
}
