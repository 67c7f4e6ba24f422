//! Noninteracting initial states with prescribed density and density rate.

use num_complex::Complex64;

use super::system::ManyBodySystem;
use super::QuantumState;
use crate::error::{Error, Result};
use crate::grid::check_floor;
use crate::sturm::solve_tridiagonal;

/// Tolerance on `∫n0 = N` and `∫n1 = 0`.
pub const COMPATIBILITY_TOL: f64 = 1e-8;
const PHASE_ITERATIONS: usize = 200;
const PHASE_TOL: f64 = 1e-13;
const CURRENT_TOL: f64 = 1e-11;

/// Build the (doubly occupied, for pairs) orbital state `φ = sqrt(n0 h/N) e^{iθ}`
/// whose density is `n0` and whose density rate is `n1`.
///
/// The phase solves the lattice Sturm–Liouville problem `∇·(c∇θ) = −n1` with
/// face coefficients `c = sqrt(n_j n_{j+1}) sinc(Δθ)`, pinned `θ = 0` at the
/// first box node and a closed right wall. The sinc factor makes the lattice
/// current `sqrt(n_j n_{j+1}) sin(Δθ)/h` exact; it is resolved by fixed-point
/// iteration. `n0` and `n1` are box fields; the floor is enforced on `Ω`.
pub fn construct_ks_initial_state(
    system: &ManyBodySystem,
    n0: &[f64],
    n1: &[f64],
    floor: f64,
) -> Result<QuantumState> {
    let grid = system.grid();
    grid.check_field(n0, "initial density")?;
    grid.check_field(n1, "initial density rate")?;
    check_floor(&system.window().restrict(n0), floor)?;
    if let Some(k) = n0.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::DensityFloor {
            min: n0[k],
            index: k,
            floor: 0.0,
        });
    }
    let particles = system.particles() as f64;
    let total = grid.integrate(n0);
    if (total - particles).abs() > COMPATIBILITY_TOL {
        return Err(Error::Compatibility {
            condition: "density normalization (integral of n0 equals N)",
            deviation: (total - particles).abs(),
            tolerance: COMPATIBILITY_TOL,
        });
    }
    let rate = grid.integrate(n1);
    if rate.abs() > COMPATIBILITY_TOL {
        return Err(Error::Compatibility {
            condition: "particle conservation (integral of n1 vanishes)",
            deviation: rate.abs(),
            tolerance: COMPATIBILITY_TOL,
        });
    }

    let m = grid.len();
    let h = grid.h();
    // bond currents from continuity, n1_k = −(J_{k+1} − J_k)/h with J_0 = 0
    let mut current = vec![0.0; m + 1];
    for k in 0..m - 1 {
        current[k + 1] = current[k] - h * n1[k];
    }
    let amplitude: Vec<f64> = (1..m).map(|k| (n0[k - 1] * n0[k]).sqrt()).collect();
    for (b, (&j, &a)) in current[1..m].iter().zip(&amplitude).enumerate() {
        if (h * j).abs() >= a {
            return Err(Error::Precondition(format!(
                "density rate not representable by a single orbital at bond {b}: |hJ| = {:.3e} >= {:.3e}",
                (h * j).abs(),
                a
            )));
        }
    }

    // unknowns θ_1..θ_{m−1}; face f (between nodes f−1 and f) has coefficient c_f
    let mut dtheta = vec![0.0; m - 1];
    let mut theta = vec![0.0; m];
    let rhs: Vec<f64> = n1[1..].to_vec();
    let mut converged = false;
    let mut history = Vec::new();
    for _ in 0..PHASE_ITERATIONS {
        let c: Vec<f64> = amplitude
            .iter()
            .zip(&dtheta)
            .map(|(a, d)| a * sinc(*d))
            .collect();
        let inv = 1.0 / (h * h);
        // −∇·(c∇θ) with Dirichlet θ_0 = 0 on the left and a closed right end
        let diag: Vec<f64> = (0..m - 1)
            .map(|i| (c[i] + c.get(i + 1).copied().unwrap_or(0.0)) * inv)
            .collect();
        let off: Vec<f64> = (0..m - 2).map(|i| -c[i + 1] * inv).collect();
        let sol = solve_tridiagonal(&diag, &off, &rhs);
        theta[1..].copy_from_slice(&sol);
        let next: Vec<f64> = (0..m - 1).map(|f| theta[f + 1] - theta[f]).collect();
        let change = next
            .iter()
            .zip(&dtheta)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        dtheta = next;
        // Bonds with tiny amplitude carry round-off of order eps·max(c)/c in
        // the phase; once the change stops shrinking the iteration has
        // reached that floor.
        let stagnated = history.last().is_some_and(|&prev: &f64| change >= 0.5 * prev);
        history.push(change);
        if change <= PHASE_TOL || stagnated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            solver: "Kohn-Sham phase fixed point",
            iterations: PHASE_ITERATIONS,
            residual: history.last().copied().unwrap_or(f64::NAN),
            history,
        });
    }
    // cross-check the resulting lattice current against the prescribed one
    let scale = current.iter().fold(0.0_f64, |a, j| a.max(j.abs())).max(1.0);
    let mismatch = (0..m - 1)
        .map(|f| (amplitude[f] * dtheta[f].sin() / h - current[f + 1]).abs())
        .fold(0.0_f64, f64::max);
    if mismatch > CURRENT_TOL * scale {
        return Err(Error::Precondition(format!(
            "Kohn-Sham phase reproduces the prescribed current only to {mismatch:.3e}"
        )));
    }

    let phi: Vec<Complex64> = (0..m)
        .map(|k| Complex64::from_polar((n0[k] * h / particles).sqrt(), theta[k]))
        .collect();
    QuantumState::normalized(system.product_state(&phi))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}
