//! The time-stepping oracle against targets whose driving potential is known.

use std::f64::consts::PI;

use effpot::grid::{Grid, TaylorField, Window};
use effpot::quantum::{
    density, ground_state, propagate, ManyBodySystem, QuantumState, SoftCore, Statistics,
    SystemSpec, TaylorSchedule,
};
use effpot::taylor::gauge_aligned;
use effpot::verify::{timestep_inversion_oracle, OracleOptions};
use effpot::Error;

const FLOOR: f64 = 1e-10;
const SL_TOL: f64 = 1e-12;

fn single_particle() -> ManyBodySystem {
    let window = Window::new(Grid::new(-3.0, 3.0, 23).unwrap(), 6).unwrap();
    ManyBodySystem::new(
        window,
        SystemSpec {
            particles: 1,
            statistics: Statistics::Single,
            interaction: SoftCore::NONE,
        },
    )
    .unwrap()
}

/// Smooth well vanishing with its derivatives at the edges of `(-3, 3)`.
fn well(x: f64) -> f64 {
    -(PI * x / 6.0).cos().powi(4)
}

fn on_box(system: &ManyBodySystem, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let window = system.window();
    window.extend(&window.omega().sample(f))
}

fn ground(system: &ManyBodySystem, v: &[f64]) -> QuantumState {
    ground_state(&system.hamiltonian(v).unwrap(), 1e-12).unwrap().state
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    gauge_aligned(a)
        .iter()
        .zip(&gauge_aligned(b))
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn recovers_a_known_driving_potential() {
    let system = single_particle();
    let window = system.window().clone();
    let v0 = on_box(&system, well);
    let v1 = on_box(&system, |x| 0.5 * (PI * x / 3.0).sin() * (PI * x / 6.0).cos().powi(4));
    let mut amps = ground(&system, &v0).into_amplitudes();
    system.apply_kick(&mut amps, 0.3);
    let state = QuantumState::new(amps).unwrap();

    let dt = 1e-3;
    let steps = 40;
    let schedule = TaylorSchedule {
        t0: 0.0,
        field: TaylorField::new(vec![v0.clone(), v1.clone()]),
    };
    let traj = propagate(&system, &state, &schedule, 0.0, dt, steps, false).unwrap();
    let target: Vec<Vec<f64>> = traj.densities.iter().map(|n| window.restrict(n)).collect();

    let track = timestep_inversion_oracle(
        &target,
        &system,
        &state,
        dt,
        &OracleOptions::default(),
        SL_TOL,
        FLOOR,
    )
    .unwrap();
    assert_eq!(track.potentials.len(), steps);
    for (j, u) in track.potentials.iter().enumerate() {
        let t = (j as f64 + 0.5) * dt;
        let exact: Vec<f64> = window
            .restrict(&v0)
            .iter()
            .zip(window.restrict(&v1))
            .map(|(a, b)| a + t * b)
            .collect();
        let gap = max_gap(u, &exact);
        assert!(gap <= 1e-5, "step {j}: potential off by {gap:.3e}");
    }
    assert!(track.max_tracking_error() <= 1e-7, "tracking {:.3e}", track.max_tracking_error());
}

#[test]
fn stationary_target_returns_the_static_potential() {
    let system = single_particle();
    let window = system.window().clone();
    let v0 = on_box(&system, well);
    let state = ground(&system, &v0);
    let n0 = window.restrict(&density(&system, &state).unwrap());
    let target = vec![n0; 21];

    let track = timestep_inversion_oracle(
        &target,
        &system,
        &state,
        1e-2,
        &OracleOptions::default(),
        SL_TOL,
        FLOOR,
    )
    .unwrap();
    let exact = window.restrict(&v0);
    for u in &track.potentials {
        assert!(max_gap(u, &exact) <= 1e-6, "gap {:.3e}", max_gap(u, &exact));
    }
    assert!(track.max_tracking_error() <= 1e-9);
}

#[test]
fn incompatible_first_sample_is_rejected() {
    let system = single_particle();
    let window = system.window().clone();
    let state = ground(&system, &on_box(&system, well));
    let mut n0 = window.restrict(&density(&system, &state).unwrap());
    n0[5] *= 1.01;
    let target = vec![n0; 5];
    let err = timestep_inversion_oracle(
        &target,
        &system,
        &state,
        1e-2,
        &OracleOptions::default(),
        SL_TOL,
        FLOOR,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Compatibility { .. }), "{err}");
}

#[test]
fn too_few_samples_is_a_precondition_error() {
    let system = single_particle();
    let window = system.window().clone();
    let state = ground(&system, &on_box(&system, well));
    let n0 = window.restrict(&density(&system, &state).unwrap());
    let err = timestep_inversion_oracle(
        &[n0.clone(), n0.clone(), n0],
        &system,
        &state,
        1e-2,
        &OracleOptions::default(),
        SL_TOL,
        FLOOR,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}
