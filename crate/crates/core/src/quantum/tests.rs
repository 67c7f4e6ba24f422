use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::*;
use crate::grid::{flux_divergence, Grid, TaylorField, Window};

fn window(a: f64, b: f64, m: usize, margin: usize) -> Window {
    Window::new(Grid::new(a, b, m).unwrap(), margin).unwrap()
}

fn pair(g: f64) -> SystemSpec {
    SystemSpec {
        particles: 2,
        statistics: Statistics::BosonPair,
        interaction: SoftCore::new(g, 1.0),
    }
}

fn single() -> SystemSpec {
    SystemSpec {
        particles: 1,
        statistics: Statistics::Single,
        interaction: SoftCore::NONE,
    }
}

fn small_pair(g: f64) -> ManyBodySystem {
    ManyBodySystem::new(window(-2.0, 2.0, 7, 3), pair(g)).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A smooth complex test state: ground state of a tilted well, kicked.
fn kicked_ground_state(sys: &ManyBodySystem, kappa: f64) -> QuantumState {
    let v: Vec<f64> = sys.grid().sample(|x| 0.3 * x * x + 0.2 * x);
    let gs = ground_state(&sys.hamiltonian(&v).unwrap(), 1e-11).unwrap();
    let mut amps = gs.state.into_amplitudes();
    sys.apply_kick(&mut amps, kappa);
    QuantumState::new(amps).unwrap()
}

fn time_dependent_potential(sys: &ManyBodySystem) -> TaylorField {
    let g = sys.grid();
    TaylorField::new(vec![
        g.sample(|x| 0.3 * x * x),
        g.sample(|x| 0.5 * (0.7 * x).sin()),
        g.sample(|x| -0.4 * (0.5 * x).cos()),
        g.sample(|x| 0.2 * x),
    ])
}

#[test]
fn basis_dimensions() {
    // the smallest admissible box has 5 nodes; a 4-node box would give 4 and 10
    let w = window(0.0, 1.0, 3, 1);
    assert_eq!(w.grid().len(), 5);
    assert_eq!(ManyBodySystem::new(w.clone(), single()).unwrap().dim(), 5);
    assert_eq!(ManyBodySystem::new(w, pair(1.0)).unwrap().dim(), 15);
    let w = window(0.0, 1.0, 4, 1);
    assert_eq!(ManyBodySystem::new(w, pair(1.0)).unwrap().dim(), 21);
}

#[test]
fn bare_coulomb_is_rejected() {
    let mut spec = pair(1.0);
    spec.interaction.epsilon = 0.0;
    let err = ManyBodySystem::new(window(0.0, 1.0, 3, 1), spec).unwrap_err();
    assert!(err.is_config());
}

#[test]
fn unsupported_particle_numbers_are_rejected() {
    let spec = SystemSpec {
        particles: 3,
        statistics: Statistics::BosonPair,
        interaction: SoftCore::NONE,
    };
    assert!(ManyBodySystem::new(window(0.0, 1.0, 3, 1), spec).unwrap_err().is_config());
}

#[test]
fn hamiltonian_without_potential_is_kinetic() {
    let sys = ManyBodySystem::new(window(0.0, 1.0, 5, 2), pair(0.0)).unwrap();
    let h = sys.hamiltonian(&vec![0.0; sys.grid().len()]).unwrap();
    assert_eq!(h.to_dense(), sys.kinetic().to_dense());
    assert!(sys.hamiltonian(&[0.0; 3]).is_err());
}

#[test]
fn two_site_kinetic_spectrum() {
    let h = 0.25;
    let dense = single_particle_kinetic(2, h).to_dense().map(|c| c.re);
    let mut ev: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    assert_relative_eq!(ev[0], 0.5 / (h * h), max_relative = 1e-14);
    assert_relative_eq!(ev[1], 1.5 / (h * h), max_relative = 1e-14);
}

#[test]
fn constant_potential_shifts_spectrum_by_particle_number() {
    let sys = small_pair(1.0);
    let v = sys.grid().sample(|x| 0.2 * x * x);
    let spectrum = |v: &[f64]| -> Vec<f64> {
        let m = sys.hamiltonian(v).unwrap().to_dense().map(|c| c.re);
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    };
    let base = spectrum(&v);
    let shifted = spectrum(&v.iter().map(|x| x + 0.7).collect::<Vec<_>>());
    for (a, b) in base.iter().zip(&shifted) {
        assert!((b - a - 1.4).abs() < 1e-10);
    }
}

#[test]
fn operators_are_hermitian() {
    let sys = small_pair(1.0);
    let v = sys.grid().sample(|x| x.sin());
    let h = sys.hamiltonian(&v).unwrap();
    let dense = h.to_dense();
    assert!((dense.adjoint() - &dense).norm() <= 1e-12 * dense.norm());
    let local = sys.local_operators();
    for op in local
        .bond_density
        .iter()
        .chain(&local.current)
        .chain(&local.kinetic_force)
        .chain(&local.interaction_force)
        .chain(&local.q)
    {
        assert!(op.hermiticity_defect() <= HERMITICITY_TOL);
    }
}

/// Isometry from the symmetric pair basis into the full product space.
fn symmetric_isometry(sys: &ManyBodySystem) -> DMatrix<C64> {
    let m = sys.grid().len();
    let mut s = DMatrix::from_element(m * m, sys.dim(), C64::new(0.0, 0.0));
    for (col, &[i, j]) in sys.basis().iter().enumerate() {
        let (i, j) = (i as usize, j as usize);
        if i == j {
            s[(i * m + i, col)] = C64::new(1.0, 0.0);
        } else {
            let w = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            s[(i * m + j, col)] = w;
            s[(j * m + i, col)] = w;
        }
    }
    s
}

#[test]
fn lift_matches_dense_tensor_product() {
    let sys = ManyBodySystem::new(window(0.0, 1.0, 3, 1), pair(0.0)).unwrap();
    let m = sys.grid().len();
    let mut trip = Vec::new();
    for r in 0..m {
        for c in 0..m {
            if (r + c) % 2 == 0 || r + 1 == c {
                trip.push((r, c, C64::new((r + 2 * c) as f64 * 0.1, (r as f64 - c as f64) * 0.3)));
            }
        }
    }
    let o = SparseOp::from_triplets(m, trip);
    let od = o.to_dense();
    let eye = DMatrix::<C64>::identity(m, m);
    let full = od.kronecker(&eye) + eye.kronecker(&od);
    let s = symmetric_isometry(&sys);
    let projected = s.adjoint() * full * &s;
    let lifted = sys.lift(&o).to_dense();
    assert!((projected - lifted).norm() < 1e-13);
}

#[test]
fn density_of_basis_and_product_states() {
    let w = window(0.0, 1.0, 3, 1);
    let h = w.grid().h();
    let one = ManyBodySystem::new(w.clone(), single()).unwrap();
    let mut amps = vec![C64::new(0.0, 0.0); one.dim()];
    amps[2] = C64::new(1.0, 0.0);
    let n = density(&one, &QuantumState::new(amps).unwrap()).unwrap();
    for (i, v) in n.iter().enumerate() {
        assert_eq!(*v, if i == 2 { 1.0 / h } else { 0.0 });
    }

    let two = ManyBodySystem::new(w, pair(1.0)).unwrap();
    let phi: Vec<C64> = (0..two.grid().len())
        .map(|i| Complex64::from_polar(1.0 + i as f64, 0.3 * i as f64))
        .collect();
    let norm: f64 = phi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let phi: Vec<C64> = phi.iter().map(|c| c / norm).collect();
    let state = QuantumState::new(two.product_state(&phi)).unwrap();
    let n = density(&two, &state).unwrap();
    for (ni, p) in n.iter().zip(&phi) {
        assert_relative_eq!(*ni, 2.0 * p.norm_sqr() / h, max_relative = 1e-13);
    }
    assert!((two.grid().integrate(&n) - 2.0).abs() < 1e-10);
}

#[test]
fn real_states_carry_no_current() {
    let sys = small_pair(1.0);
    let v = sys.grid().sample(|x| 0.3 * x * x);
    let gs = ground_state(&sys.hamiltonian(&v).unwrap(), 1e-11).unwrap();
    let div = current_divergence(&sys, &gs.state).unwrap();
    assert!(max_abs(&div) <= 1e-10);
}

#[test]
fn plane_wave_phase_gives_convective_current() {
    let w = window(-8.0, 8.0, 319, 10);
    let sys = ManyBodySystem::new(w, single()).unwrap();
    let g = sys.grid();
    let kappa = 0.4;
    let amps: Vec<C64> = g
        .nodes()
        .iter()
        .map(|x| Complex64::from_polar((-x * x / 4.0).exp(), kappa * x))
        .collect();
    let state = QuantumState::normalized(amps).unwrap();
    let n = density(&sys, &state).unwrap();
    let div = current_divergence(&sys, &state).unwrap();
    let expected: Vec<f64> = crate::grid::gradient(g, &n).iter().map(|d| kappa * d).collect();
    assert!(max_diff(&div, &expected) <= 5e-3 * max_abs(&expected));
}

#[test]
fn heisenberg_first_order_is_minus_current_divergence() {
    let sys = small_pair(1.0);
    let state = kicked_ground_state(&sys, 0.3);
    let v = time_dependent_potential(&sys);
    let n = observable_taylor(&sys, &state, &OperatorField::density(&sys), &v, 1).unwrap();
    let div = current_divergence(&sys, &state).unwrap();
    assert!(max_diff(n.order(0), &density(&sys, &state).unwrap()) <= 1e-15);
    for (a, b) in n.order(1).iter().zip(&div) {
        assert!((a + b).abs() <= 1e-12 * max_abs(&div).max(1.0));
    }
}

#[test]
fn second_order_density_satisfies_lattice_identity() {
    let sys = small_pair(1.0);
    let state = kicked_ground_state(&sys, 0.3);
    let v = time_dependent_potential(&sys);
    let n = observable_taylor(&sys, &state, &OperatorField::density(&sys), &v, 2).unwrap();
    let b = bond_density(&sys, &state).unwrap();
    let q = q_field(&sys, &state).unwrap();
    let h = sys.grid().h();
    let rhs: Vec<f64> = flux_divergence(h, &b, v.order(0))
        .iter()
        .zip(&q)
        .map(|(a, c)| a + c)
        .collect();
    assert!(max_diff(n.order(2), &rhs) <= 1e-10 * max_abs(&rhs));
}

#[test]
fn heisenberg_and_state_routes_agree() {
    let sys = small_pair(1.0);
    let state = kicked_ground_state(&sys, 0.3);
    let v = time_dependent_potential(&sys);
    for field in [
        OperatorField::density(&sys),
        OperatorField::bond_density(&sys),
        OperatorField::q(&sys),
    ] {
        let k = 4;
        let a = observable_taylor(&sys, &state, &field, &v, k).unwrap();
        let b = expectation_taylor(&sys, &state, &field, &v, k).unwrap();
        for order in 0..=k {
            let scale = max_abs(b.order(order)).max(1e-300);
            assert!(
                max_diff(a.order(order), b.order(order)) <= 1e-10 * scale,
                "order {order}"
            );
        }
    }
}

#[test]
fn identity_has_no_time_derivatives() {
    let sys = small_pair(1.0);
    let state = kicked_ground_state(&sys, 0.3);
    let v = time_dependent_potential(&sys);
    let id = OperatorField::identity(sys.dim(), 2.5);
    let t = observable_taylor(&sys, &state, &id, &v, 3).unwrap();
    assert_relative_eq!(t.order(0)[0], 2.5, max_relative = 1e-14);
    for k in 1..=3 {
        assert!(t.order(k)[0].abs() <= 1e-10);
    }
}

#[test]
fn missing_potential_orders_are_reported() {
    let sys = small_pair(1.0);
    let state = kicked_ground_state(&sys, 0.3);
    let v = time_dependent_potential(&sys).truncated(1);
    let err = observable_taylor(&sys, &state, &OperatorField::q(&sys), &v, 3).unwrap_err();
    assert!(matches!(err, Error::MissingOrders { needed: 3, available: 1 }));
    // the density needs one order fewer
    assert!(observable_taylor(&sys, &state, &OperatorField::density(&sys), &v, 2).is_ok());
}

#[test]
fn noninteracting_systems_have_no_interaction_force() {
    let sys = small_pair(0.0);
    let state = kicked_ground_state(&sys, 0.3);
    assert_eq!(max_abs(&interaction_force(&sys, &state).unwrap()), 0.0);
}

#[test]
fn free_packet_has_no_net_q() {
    let w = window(-10.0, 10.0, 199, 10);
    let sys = ManyBodySystem::new(w, single()).unwrap();
    let amps: Vec<C64> = sys
        .grid()
        .nodes()
        .iter()
        .map(|x| C64::new((-x * x / 2.0).exp(), 0.0))
        .collect();
    let state = QuantumState::normalized(amps).unwrap();
    let q = q_field(&sys, &state).unwrap();
    assert!(sys.grid().integrate(&q).abs() <= 1e-10 * max_abs(&q));
}

#[test]
fn ground_state_matches_dense_diagonalization() {
    let sys = small_pair(1.0);
    let v = sys.grid().sample(|x| 0.3 * x * x);
    let h = sys.hamiltonian(&v).unwrap();
    let gs = ground_state(&h, 1e-11).unwrap();
    let dense = h.to_dense().map(|c| c.re);
    let e0 = SymmetricEigen::new(dense)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    assert_relative_eq!(gs.energy, e0, max_relative = 1e-12);
    assert!(gs.residual <= 1e-11);
}

#[test]
fn eigenstate_density_is_stationary() {
    let sys = small_pair(1.0);
    let v = sys.grid().sample(|x| 0.3 * x * x);
    let gs = ground_state(&sys.hamiltonian(&v).unwrap(), 1e-12).unwrap();
    let traj = propagate(&sys, &gs.state, &StaticPotential(v.clone()), 0.0, 0.01, 1000, true).unwrap();
    let n0 = &traj.densities[0];
    for n in &traj.densities {
        assert!(max_diff(n, n0) <= 1e-8);
    }
    assert!(traj.norm_drift() <= 1e-10);
    let e0 = energy(&sys, &traj.states[0], &v).unwrap();
    let e1 = energy(&sys, traj.states.last().unwrap(), &v).unwrap();
    assert!((e1 - e0).abs() <= 1e-8);
}

#[test]
fn energy_is_conserved_for_nonstationary_states() {
    let sys = small_pair(1.0);
    let state = kicked_ground_state(&sys, 0.5);
    let v = sys.grid().sample(|x| 0.1 * x * x);
    let traj = propagate(&sys, &state, &StaticPotential(v.clone()), 0.0, 0.01, 1000, true).unwrap();
    let e0 = energy(&sys, &state, &v).unwrap();
    let e1 = energy(&sys, traj.states.last().unwrap(), &v).unwrap();
    assert!((e1 - e0).abs() <= 1e-8);
    assert!(traj.norm_drift() <= 1e-10);
}

#[test]
fn free_packet_spreads_like_the_continuum() {
    let w = window(-20.0, 20.0, 399, 5);
    let sys = ManyBodySystem::new(w, single()).unwrap();
    let g = sys.grid();
    let sigma = 1.0_f64;
    let amps: Vec<C64> = g
        .nodes()
        .iter()
        .map(|x| C64::new((-x * x / (4.0 * sigma * sigma)).exp(), 0.0))
        .collect();
    let state = QuantumState::normalized(amps).unwrap();
    let zero = StaticPotential(vec![0.0; g.len()]);
    let t_end = 2.0;
    let traj = propagate(&sys, &state, &zero, 0.0, 0.005, 400, false).unwrap();
    let width = |n: &[f64]| -> f64 {
        let x2: Vec<f64> = g.nodes().iter().zip(n).map(|(x, v)| x * x * v).collect();
        g.integrate(&x2).sqrt()
    };
    let expected = sigma * (1.0 + (t_end / (2.0 * sigma * sigma)).powi(2)).sqrt();
    let measured = width(traj.densities.last().unwrap());
    assert!((measured / expected - 1.0).abs() < 0.01, "{measured} vs {expected}");
}

/// Fourth-order Runge–Kutta reference propagator for small systems.
fn rk4_densities(
    sys: &ManyBodySystem,
    state: &QuantumState,
    v: &TaylorField,
    times: &[f64],
    dt: f64,
) -> Vec<Vec<f64>> {
    let rhs = |t: f64, psi: &[C64]| -> Vec<C64> {
        let h = sys.hamiltonian(&v.evaluate(t)).unwrap();
        let mut y = vec![C64::new(0.0, 0.0); psi.len()];
        h.apply(psi, &mut y);
        y.iter().map(|c| c * C64::new(0.0, -1.0)).collect()
    };
    times
        .iter()
        .map(|&target| {
            let steps = (target.abs() / dt).round() as usize;
            let step = if steps == 0 { 0.0 } else { target / steps as f64 };
            let mut psi = state.amplitudes().to_vec();
            let mut t = 0.0;
            for _ in 0..steps {
                let axpy = |a: &[C64], b: &[C64], s: f64| -> Vec<C64> {
                    a.iter().zip(b).map(|(x, y)| x + y * s).collect()
                };
                let k1 = rhs(t, &psi);
                let k2 = rhs(t + step / 2.0, &axpy(&psi, &k1, step / 2.0));
                let k3 = rhs(t + step / 2.0, &axpy(&psi, &k2, step / 2.0));
                let k4 = rhs(t + step, &axpy(&psi, &k3, step));
                for i in 0..psi.len() {
                    psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (step / 6.0);
                }
                t += step;
            }
            density(sys, &QuantumState::normalized(psi).unwrap()).unwrap()
        })
        .collect()
}

#[test]
fn density_coefficients_match_finite_differences_of_the_dynamics() {
    let sys = ManyBodySystem::new(window(-2.0, 2.0, 5, 2), pair(1.0)).unwrap();
    let state = kicked_ground_state(&sys, 0.3);
    let v = time_dependent_potential(&sys);
    let k_max = 4;
    let taylor = observable_taylor(&sys, &state, &OperatorField::density(&sys), &v, k_max).unwrap();

    // least-squares-free polynomial interpolation on a symmetric stencil
    let delta = 0.04;
    let offsets: Vec<i32> = (-5..=5).collect();
    let times: Vec<f64> = offsets.iter().map(|&j| j as f64 * delta).collect();
    let samples = rk4_densities(&sys, &state, &v, &times, 2e-4);
    let p = offsets.len();
    let vander = DMatrix::from_fn(p, p, |r, c| times[r].powi(c as i32));
    let lu = vander.lu();
    for node in 0..sys.grid().len() {
        let rhs = nalgebra::DVector::from_fn(p, |r, _| samples[r][node]);
        let coef = lu.solve(&rhs).unwrap();
        let mut factorial = 1.0;
        for k in 0..=k_max {
            if k > 0 {
                factorial *= k as f64;
            }
            let scale = max_abs(taylor.order(k));
            let fd = coef[k] * factorial;
            assert!(
                (fd - taylor.order(k)[node]).abs() <= 1e-6 * scale,
                "order {k} node {node}: {fd} vs {}",
                taylor.order(k)[node]
            );
        }
    }
}

#[test]
fn ks_state_with_static_density_is_real() {
    let sys = small_pair(0.0);
    let v = sys.grid().sample(|x| 0.3 * x * x);
    let gs = ground_state(&sys.hamiltonian(&v).unwrap(), 1e-11).unwrap();
    let n0 = density(&sys, &gs.state).unwrap();
    let ks = construct_ks_initial_state(&sys, &n0, &vec![0.0; n0.len()], 1e-8).unwrap();
    assert!(ks.amplitudes().iter().all(|c| c.im.abs() < 1e-15 && c.re >= 0.0));
    assert!(max_abs(&current_divergence(&sys, &ks).unwrap()) < 1e-12);
}

#[test]
fn ks_state_round_trips_density_and_rate() {
    let interacting = small_pair(1.0);
    let state = kicked_ground_state(&interacting, 0.4);
    let v = interacting.grid().sample(|x| 0.3 * x * x);
    let traj = propagate(&interacting, &state, &StaticPotential(v), 0.0, 0.01, 20, true).unwrap();
    let evolved = traj.states.last().unwrap();
    let n0 = density(&interacting, evolved).unwrap();
    let n1: Vec<f64> = current_divergence(&interacting, evolved)
        .unwrap()
        .iter()
        .map(|d| -d)
        .collect();

    let ks_system = ManyBodySystem::new(interacting.window().clone(), pair(0.0)).unwrap();
    let ks = construct_ks_initial_state(&ks_system, &n0, &n1, 1e-8).unwrap();
    let n0_ks = density(&ks_system, &ks).unwrap();
    let n1_ks: Vec<f64> = current_divergence(&ks_system, &ks)
        .unwrap()
        .iter()
        .map(|d| -d)
        .collect();
    assert!(max_diff(&n0, &n0_ks) <= 1e-12 * max_abs(&n0));
    assert!(max_diff(&n1, &n1_ks) <= 1e-8);
}

#[test]
fn ks_state_rejects_net_density_change() {
    let sys = small_pair(0.0);
    let v = sys.grid().sample(|x| 0.3 * x * x);
    let gs = ground_state(&sys.hamiltonian(&v).unwrap(), 1e-11).unwrap();
    let n0 = density(&sys, &gs.state).unwrap();
    let n1 = vec![0.01; n0.len()];
    assert!(matches!(
        construct_ks_initial_state(&sys, &n0, &n1, 1e-8),
        Err(Error::Compatibility { .. })
    ));
}
