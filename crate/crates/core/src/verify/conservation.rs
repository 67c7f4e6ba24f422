//! Continuity, force-balance and second-derivative residuals along trajectories.
//!
//! On the lattice the three identities
//!
//! * `∂ₜn + ∇·J = 0`,
//! * `∂ₜJ + b∇v + F = 0` (bond density `b`, stress force `F = Π + W`),
//! * `∂ₜ²n − ∇·(b∇v) − q = 0`,
//!
//! hold exactly for the exact evolution, so the residuals measured with
//! centred differences of a Crank–Nicolson trajectory are pure time
//! discretization errors and shrink like `dt²`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{face_differences, flux_divergence};
use crate::quantum::{
    propagate_observed, ManyBodySystem, Observables, PotentialSchedule, QuantumState,
    StaticPotential, TaylorSchedule,
};

use super::setup::{steps_for, ExperimentSetup};

/// Max-norm residuals over a whole trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationMaxima {
    pub continuity: f64,
    pub force_balance: f64,
    pub second_derivative: f64,
    /// `max |‖ψ‖ − 1|` scaled to 1000 steps.
    pub norm_drift_per_1000_steps: f64,
    pub steps: usize,
    pub dt: f64,
    pub h: f64,
}

/// Residuals at one interior time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResiduals {
    pub step: usize,
    pub continuity: f64,
    pub force_balance: f64,
    pub second_derivative: f64,
}

/// Streaming monitor: feed consecutive states, get residuals at the middle
/// one of every three.
pub struct ConservationMonitor<'a> {
    system: &'a ManyBodySystem,
    schedule: &'a dyn PotentialSchedule,
    t0: f64,
    dt: f64,
    recent: VecDeque<Observables>,
    pub maxima: ConservationMaxima,
}

impl<'a> ConservationMonitor<'a> {
    pub fn new(system: &'a ManyBodySystem, schedule: &'a dyn PotentialSchedule, t0: f64, dt: f64) -> Self {
        Self {
            system,
            schedule,
            t0,
            dt,
            recent: VecDeque::with_capacity(3),
            maxima: ConservationMaxima {
                dt,
                h: system.grid().h(),
                ..Default::default()
            },
        }
    }

    /// Record state number `step`; returns residuals at `step − 1` once three
    /// consecutive states are available.
    pub fn observe(&mut self, step: usize, state: &QuantumState) -> Result<Option<StepResiduals>> {
        let drift = (state.norm() - 1.0).abs();
        self.maxima.norm_drift_per_1000_steps = self.maxima.norm_drift_per_1000_steps.max(drift);
        self.maxima.steps = step;
        if self.recent.len() == 3 {
            self.recent.pop_front();
        }
        self.recent.push_back(Observables::of(self.system, state)?);
        if self.recent.len() < 3 {
            return Ok(None);
        }
        let centre = step - 1;
        let v = self.schedule.potential(self.t0 + centre as f64 * self.dt)?;
        let r = residuals(&self.recent[0], &self.recent[1], &self.recent[2], &v, self.dt, self.system.grid().h());
        let m = &mut self.maxima;
        m.continuity = m.continuity.max(r.0);
        m.force_balance = m.force_balance.max(r.1);
        m.second_derivative = m.second_derivative.max(r.2);
        Ok(Some(StepResiduals {
            step: centre,
            continuity: r.0,
            force_balance: r.1,
            second_derivative: r.2,
        }))
    }

    pub fn finish(mut self) -> ConservationMaxima {
        if self.maxima.steps > 0 {
            self.maxima.norm_drift_per_1000_steps *= 1000.0 / self.maxima.steps as f64;
        }
        self.maxima
    }
}

fn residuals(
    prev: &Observables,
    mid: &Observables,
    next: &Observables,
    v: &[f64],
    dt: f64,
    h: f64,
) -> (f64, f64, f64) {
    let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0_f64, |a, x| a.max(x.abs()));
    let div = mid.current_divergence(h);
    let continuity = max_abs(
        &mut (0..div.len()).map(|k| (next.density[k] - prev.density[k]) / (2.0 * dt) + div[k]),
    );
    let grad = face_differences(v, h);
    let force_balance = max_abs(&mut (0..grad.len()).map(|f| {
        (next.current[f] - prev.current[f]) / (2.0 * dt)
            + mid.bond_density[f] * grad[f]
            + mid.kinetic_force[f]
            + mid.interaction_force[f]
    }));
    let drive = flux_divergence(h, &mid.bond_density, v);
    let second_derivative = max_abs(&mut (0..drive.len()).map(|k| {
        (next.density[k] - 2.0 * mid.density[k] + prev.density[k]) / (dt * dt) - drive[k] - mid.q[k]
    }));
    (continuity, force_balance, second_derivative)
}

/// Propagate and monitor a whole trajectory.
pub fn monitor_trajectory(
    system: &ManyBodySystem,
    state: &QuantumState,
    schedule: &dyn PotentialSchedule,
    dt: f64,
    steps: usize,
) -> Result<ConservationMaxima> {
    let mut monitor = ConservationMonitor::new(system, schedule, 0.0, dt);
    propagate_observed(system, state, schedule, 0.0, dt, steps, |j, s| {
        monitor.observe(j, s).map(|_| ())
    })?;
    Ok(monitor.finish())
}

/// Driven, refined and stationary runs of the physical system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub coarse: ConservationMaxima,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub refined: Option<ConservationMaxima>,
    /// Coarse / refined residual ratios (continuity, force balance, second derivative).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ratios: Option<[f64; 3]>,
    /// Ground state of the initial potential propagated without drive.
    pub eigenstate: ConservationMaxima,
}

fn driven_run(setup: &ExperimentSetup) -> Result<ConservationMaxima> {
    let window = setup.window()?;
    let system = setup.physical_system(&window)?;
    let (state, _) = setup.initial_state(&system)?;
    let schedule = TaylorSchedule {
        t0: 0.0,
        field: setup.potential_field(&window),
    };
    let steps = steps_for(setup.conservation.t_end, setup.conservation.dt, "conservation.T")?;
    monitor_trajectory(&system, &state, &schedule, setup.conservation.dt, steps)
}

/// Residual maxima of the driven run (optionally at `(h/2, dt/2)` too) and
/// of the stationary run.
pub fn conservation_checks(setup: &ExperimentSetup) -> Result<ConservationReport> {
    let coarse = driven_run(setup)?;
    let (refined, ratios) = if setup.conservation.refine {
        let fine = driven_run(&setup.refined()?)?;
        let ratios = [
            coarse.continuity / fine.continuity,
            coarse.force_balance / fine.force_balance,
            coarse.second_derivative / fine.second_derivative,
        ];
        (Some(fine), Some(ratios))
    } else {
        (None, None)
    };

    let window = setup.window()?;
    let system = setup.physical_system(&window)?;
    let v = setup.initial_box_potential(&window);
    let gs = crate::quantum::ground_state(&system.hamiltonian(&v)?, super::setup::GROUND_STATE_TOL)?;
    let eigenstate = monitor_trajectory(
        &system,
        &gs.state,
        &StaticPotential(v),
        setup.conservation.dt,
        setup.conservation.eigenstate_steps,
    )?;
    Ok(ConservationReport {
        coarse,
        refined,
        ratios,
        eigenstate,
    })
}
