//! Fully resolved experiment inputs, independent of the configuration format.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, TaylorField, Window};
use crate::quantum::{
    ground_state, GroundState, ManyBodySystem, QuantumState, SoftCore, SystemSpec,
};
use crate::taylor::InversionOptions;

/// A smooth function of position.
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn profile(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Profile {
    Arc::new(f)
}

/// Residual target of the initial-state eigensolver.
pub const GROUND_STATE_TOL: f64 = 1e-11;

/// Settings of the time-stepping inversion oracle.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleOptions {
    /// Corrector sweeps per step (after the predictor).
    pub sweeps: usize,
    /// Required closed-loop tracking accuracy `e(t_j)`.
    pub tol_track: f64,
    /// Sweeps stop early once the step mismatch is below this.
    pub step_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            sweeps: 1,
            tol_track: 1e-5,
            step_tol: 1e-10,
        }
    }
}

/// Time window and resolution of the conservation study.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConservationOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Also run at `(h/2, dt/2)` and report the reduction ratios.
    pub refine: bool,
    /// Steps of the stationary (eigenstate) run.
    pub eigenstate_steps: usize,
}

impl Default for ConservationOptions {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            t_end: 0.5,
            refine: true,
            eigenstate_steps: 200,
        }
    }
}

/// Everything an experiment needs: geometry, the physical (unprimed) system,
/// its initial state recipe, the driving potential and numerical settings.
///
/// Potentials are sampled on `Ω` and extended by zero to the rest of the box.
#[derive(Clone)]
pub struct ExperimentSetup {
    pub omega: Grid,
    pub margin: usize,
    pub system: SystemSpec,
    /// The initial state is the ground state of this potential (sampled on
    /// `Ω` and extended by zero) plus `initial_background` (sampled on the
    /// whole box) ...
    pub initial_potential: Profile,
    pub initial_background: Profile,
    /// ... multiplied by `exp(iκ Σ xᵢ)`.
    pub kick: f64,
    /// Taylor coefficients `v⁽ᵏ⁾` of the driving potential about `t0 = 0`.
    pub potential: Vec<Profile>,
    /// Highest inverted potential order `K`.
    pub order: usize,
    pub inversion: InversionOptions,
    pub t_end: f64,
    pub dt: f64,
    /// Interaction strengths of the primed systems (0 = Kohn–Sham).
    pub primed_strengths: Vec<f64>,
    /// Time at which round-trip errors are compared across orders.
    pub probe_time: f64,
    pub oracle: OracleOptions,
    pub conservation: ConservationOptions,
}

impl fmt::Debug for ExperimentSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExperimentSetup")
            .field("omega", &self.omega)
            .field("margin", &self.margin)
            .field("system", &self.system)
            .field("kick", &self.kick)
            .field("potential_orders", &self.potential.len())
            .field("order", &self.order)
            .field("t_end", &self.t_end)
            .field("dt", &self.dt)
            .finish_non_exhaustive()
    }
}

impl ExperimentSetup {
    pub fn window(&self) -> Result<Window> {
        Window::new(self.omega.clone(), self.margin)
    }

    /// Same physical box at half the spacing (and twice the margin nodes).
    pub fn refined(&self) -> Result<Self> {
        let mut s = self.clone();
        s.omega = self.omega.refined()?;
        s.margin = 2 * self.margin;
        s.dt = 0.5 * self.dt;
        s.conservation.dt = 0.5 * self.conservation.dt;
        Ok(s)
    }

    pub fn steps(&self) -> Result<usize> {
        steps_for(self.t_end, self.dt, "experiment.T")
    }

    /// Zero extension of `profile` sampled on `Ω`.
    pub fn sample(&self, window: &Window, profile: &Profile) -> Vec<f64> {
        window.extend(&window.omega().sample(|x| profile(x)))
    }

    /// The initial potential on every box node.
    pub fn initial_box_potential(&self, window: &Window) -> Vec<f64> {
        let well = self.sample(window, &self.initial_potential);
        let background = window.grid().sample(|x| (self.initial_background)(x));
        well.iter().zip(&background).map(|(a, b)| a + b).collect()
    }

    /// Box potential orders `v⁽⁰⁾..`.
    pub fn potential_field(&self, window: &Window) -> TaylorField {
        TaylorField::new(self.potential.iter().map(|p| self.sample(window, p)).collect())
    }

    /// Orders `0..=k` (missing ones are zero).
    pub fn truncated_potential(&self, window: &Window, k: usize) -> TaylorField {
        let full = self.potential_field(window);
        let len = window.grid().len();
        TaylorField::new((0..=k).map(|i| full.order_or_zero(i, len)).collect())
    }

    pub fn physical_system(&self, window: &Window) -> Result<ManyBodySystem> {
        ManyBodySystem::new(window.clone(), self.system.clone())
    }

    /// Same particles and softening, interaction strength `g`.
    pub fn primed_system(&self, window: &Window, g: f64) -> Result<ManyBodySystem> {
        let mut spec = self.system.clone();
        spec.interaction = SoftCore::new(g, self.system.interaction.epsilon);
        ManyBodySystem::new(window.clone(), spec)
    }

    /// Ground state of the initial potential, kicked.
    pub fn initial_state(&self, system: &ManyBodySystem) -> Result<(QuantumState, GroundState)> {
        let v = self.initial_box_potential(system.window());
        let gs = ground_state(&system.hamiltonian(&v)?, GROUND_STATE_TOL)?;
        let mut amps = gs.state.amplitudes().to_vec();
        system.apply_kick(&mut amps, self.kick);
        Ok((QuantumState::new(amps)?, gs))
    }
}

pub(crate) fn steps_for(t_end: f64, dt: f64, field: &str) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::config("experiment.dt", "time step must be positive"));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::config(field, "window length must be positive"));
    }
    let steps = (t_end / dt).round();
    if (steps * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::config(
            field,
            format!("window {t_end} is not a whole number of steps of {dt}"),
        ));
    }
    Ok(steps as usize)
}
