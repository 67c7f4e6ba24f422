//! Order-by-order relations between potential and density Taylor coefficients.
//!
//! On the lattice the second time derivative of the density obeys
//! `∂ₜ²n = ∇·(b∇v) + q`, with `b` the bond density. Differentiating `k` times,
//!
//! `n⁽ᵏ⁺²⁾ = q⁽ᵏ⁾ + Σ_{l≤k} C(k,l) ∇·(b⁽ᵏ⁻ˡ⁾∇v⁽ˡ⁾)`,
//!
//! which predicts densities from potentials and, read backwards, is a
//! Sturm–Liouville problem for the highest potential order `v⁽ᵏ⁾` with
//! coefficient `b⁽⁰⁾`. The right-hand side only involves potential orders below
//! `k`, so the inversion proceeds order by order. Potentials constructed here
//! vanish on `∂Ω` and outside `Ω`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_floor, flux_divergence, FluxOperator, TaylorField, Window};
use crate::quantum::{
    binomial, bond_density_taylor, current_divergence, density, q_expectation_taylor,
    ManyBodySystem, QuantumState, TaylorEngine,
};
use crate::sturm::{solve_with_diagnostics, SlDiagnostics, SlProblem, DEFAULT_TOL};

/// Tolerance on the initial-state compatibility conditions.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    pub engine: TaylorEngine,
    /// Relative residual of every Sturm–Liouville solve.
    pub tol: f64,
    pub floor: f64,
    /// Random fields per Lax–Milgram check.
    pub trials: usize,
    pub seed: u64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            engine: TaylorEngine::Heisenberg,
            tol: DEFAULT_TOL,
            floor: crate::grid::DEFAULT_DENSITY_FLOOR,
            trials: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

/// Potential orders on `Ω` with per-order solver diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    /// `v′⁽ᵏ⁾` on the interior nodes of `Ω`.
    pub v_prime: Vec<Vec<f64>>,
    /// `v_Δ⁽ᵏ⁾` when produced by the correction route.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub v_delta: Option<Vec<Vec<f64>>>,
    pub diagnostics: Vec<SlDiagnostics>,
    /// Right-hand side `ζ⁽ᵏ⁾` of each order's Sturm–Liouville problem.
    pub rhs: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provenance: Option<Provenance>,
}

impl InversionResult {
    pub fn v_prime_field(&self) -> TaylorField {
        TaylorField::new(self.v_prime.clone())
    }

    /// Zero extension of `v′` to the simulation box.
    pub fn v_prime_box(&self, window: &Window) -> TaylorField {
        TaylorField::new(self.v_prime.iter().map(|v| window.extend(v)).collect())
    }

    pub fn max_residual(&self) -> f64 {
        self.diagnostics.iter().fold(0.0, |a, d| a.max(d.residual))
    }
}

/// Subtract the value at the first interior node (the node next to `∂Ω`).
pub fn gauge_aligned(f: &[f64]) -> Vec<f64> {
    let c = f.first().copied().unwrap_or(0.0);
    f.iter().map(|x| x - c).collect()
}

/// Density orders `n⁽⁰⁾..n⁽ᴷ⁺²⁾` on the box from potential orders
/// `v⁽⁰⁾..v⁽ᴷ⁾` (box fields), via the second-derivative recursion.
pub fn predict_density_taylor(
    system: &ManyBodySystem,
    state: &QuantumState,
    v: &TaylorField,
    k: usize,
    engine: TaylorEngine,
) -> Result<TaylorField> {
    if v.len() < k + 1 {
        return Err(Error::MissingOrders {
            needed: k + 1,
            available: v.len(),
        });
    }
    let h = system.grid().h();
    let q = q_expectation_taylor(system, state, v, k, engine)?;
    let b = bond_density_taylor(system, state, v, k, engine)?;
    let mut n = TaylorField::new(vec![
        density(system, state)?,
        current_divergence(system, state)?.iter().map(|d| -d).collect(),
    ]);
    for j in 0..=k {
        let mut next = q.order(j).to_vec();
        for l in 0..=j {
            let c = binomial(j, l);
            for (o, t) in next
                .iter_mut()
                .zip(flux_divergence(h, b.order(j - l), v.order(l)))
            {
                *o += c * t;
            }
        }
        n.push(next);
    }
    Ok(n)
}

fn check_compatibility(
    window: &Window,
    target: &TaylorField,
    primed: &ManyBodySystem,
    state: &QuantumState,
) -> Result<()> {
    let n0 = window.restrict(&density(primed, state)?);
    let n1: Vec<f64> = window
        .restrict(&current_divergence(primed, state)?)
        .iter()
        .map(|d| -d)
        .collect();
    let scale = target.order(0).iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    for (condition, own, wanted) in [
        ("equal initial densities", &n0, target.order(0)),
        ("equal initial density rates", &n1, target.order(1)),
    ] {
        let deviation = own
            .iter()
            .zip(wanted)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        if !(deviation <= COMPATIBILITY_TOL * scale) {
            return Err(Error::Compatibility {
                condition,
                deviation,
                tolerance: COMPATIBILITY_TOL * scale,
            });
        }
    }
    Ok(())
}

fn check_target(window: &Window, target: &TaylorField, k: usize, floor: f64) -> Result<()> {
    if target.len() < k + 3 {
        return Err(Error::MissingOrders {
            needed: k + 3,
            available: target.len(),
        });
    }
    for order in &target.orders {
        window.omega().check_field(order, "target density order")?;
    }
    check_floor(target.order(0), floor)
}

/// Solve `∇·(b′⁽⁰⁾∇u) = ζ` on `Ω` with `u = 0` on `∂Ω`.
fn solve_order(
    window: &Window,
    b0_box: &[f64],
    rhs: Vec<f64>,
    opts: &InversionOptions,
    order: usize,
) -> Result<(Vec<f64>, SlDiagnostics)> {
    let op = FluxOperator::from_faces(window.grid().h(), window.restrict_faces(b0_box))?;
    let problem = SlProblem::new(op, rhs, opts.floor)?;
    solve_with_diagnostics(
        window.omega(),
        &problem,
        opts.tol,
        opts.trials,
        opts.seed.wrapping_add(order as u64),
    )
}

/// Box-level `Σ_{l<k} C(k,l) ∇·(b⁽ᵏ⁻ˡ⁾∇u⁽ˡ⁾)` restricted to `Ω`.
fn lower_order_flux(window: &Window, b: &TaylorField, u_box: &TaylorField, k: usize) -> Vec<f64> {
    let h = window.grid().h();
    let mut acc = vec![0.0; window.grid().len()];
    for l in 0..k {
        let c = binomial(k, l);
        for (a, t) in acc
            .iter_mut()
            .zip(flux_divergence(h, b.order(k - l), u_box.order(l)))
        {
            *a += c * t;
        }
    }
    window.restrict(&acc)
}

/// Construct `v′⁽⁰⁾..v′⁽ᴷ⁾` on `Ω` such that the primed system started in
/// `state` reproduces the target density orders (given on `Ω`, `0..K+2`).
pub fn invert_potential_taylor(
    target: &TaylorField,
    primed: &ManyBodySystem,
    state: &QuantumState,
    k: usize,
    opts: &InversionOptions,
) -> Result<InversionResult> {
    let window = primed.window();
    check_target(window, target, k, opts.floor)?;
    check_compatibility(window, target, primed, state)?;

    let mut v_box = TaylorField::default();
    let mut result = InversionResult {
        v_prime: Vec::new(),
        v_delta: None,
        diagnostics: Vec::new(),
        rhs: Vec::new(),
        provenance: None,
    };
    for order in 0..=k {
        let step = || -> Result<(Vec<f64>, SlDiagnostics, Vec<f64>)> {
            let q = q_expectation_taylor(primed, state, &v_box, order, opts.engine)?;
            let b = bond_density_taylor(primed, state, &v_box, order, opts.engine)?;
            let q_omega = window.restrict(q.order(order));
            let lower = lower_order_flux(window, &b, &v_box, order);
            let rhs: Vec<f64> = target
                .order(order + 2)
                .iter()
                .zip(&q_omega)
                .zip(&lower)
                .map(|((n, q), s)| n - q - s)
                .collect();
            let (v, diag) = solve_order(window, b.order(0), rhs.clone(), opts, order)?;
            Ok((v, diag, rhs))
        };
        let (v, diag, rhs) = step().map_err(|e| Error::Order {
            order,
            source: Box::new(e),
        })?;
        v_box.push(window.extend(&v));
        result.v_prime.push(v);
        result.diagnostics.push(diag);
        result.rhs.push(rhs);
    }
    Ok(result)
}

/// Construct the correction `v_Δ = v′ − v` order by order from the unprimed
/// run (system, state and box potential `v`, zero outside `Ω`) without
/// reference to the density itself.
pub fn delta_potential_taylor(
    unprimed: &ManyBodySystem,
    unprimed_state: &QuantumState,
    v: &TaylorField,
    primed: &ManyBodySystem,
    primed_state: &QuantumState,
    k: usize,
    opts: &InversionOptions,
) -> Result<InversionResult> {
    let window = primed.window();
    if v.len() < k + 1 {
        return Err(Error::MissingOrders {
            needed: k + 1,
            available: v.len(),
        });
    }
    if unprimed.grid() != primed.grid() || unprimed.window().omega() != window.omega() {
        return Err(Error::Precondition(
            "unprimed and primed systems must share the simulation box".into(),
        ));
    }
    let n0 = density(unprimed, unprimed_state)?;
    let n1: Vec<f64> = current_divergence(unprimed, unprimed_state)?
        .iter()
        .map(|d| -d)
        .collect();
    let initial = TaylorField::new(vec![window.restrict(&n0), window.restrict(&n1)]);
    check_floor(initial.order(0), opts.floor)?;
    check_compatibility(window, &initial, primed, primed_state)?;

    let h = window.grid().h();
    let q = q_expectation_taylor(unprimed, unprimed_state, v, k, opts.engine)?;
    let b = bond_density_taylor(unprimed, unprimed_state, v, k, opts.engine)?;

    let mut delta_box = TaylorField::default();
    let mut prime_box = TaylorField::default();
    let mut result = InversionResult {
        v_prime: Vec::new(),
        v_delta: Some(Vec::new()),
        diagnostics: Vec::new(),
        rhs: Vec::new(),
        provenance: None,
    };
    for order in 0..=k {
        let step = || -> Result<(Vec<f64>, SlDiagnostics, Vec<f64>)> {
            let qp = q_expectation_taylor(primed, primed_state, &prime_box, order, opts.engine)?;
            let bp = bond_density_taylor(primed, primed_state, &prime_box, order, opts.engine)?;
            let mut acc: Vec<f64> = q
                .order(order)
                .iter()
                .zip(qp.order(order))
                .map(|(a, b)| a - b)
                .collect();
            for l in 0..=order {
                let c = binomial(order, l);
                let db: Vec<f64> = b
                    .order(order - l)
                    .iter()
                    .zip(bp.order(order - l))
                    .map(|(x, y)| x - y)
                    .collect();
                for (a, t) in acc.iter_mut().zip(flux_divergence(h, &db, v.order(l))) {
                    *a += c * t;
                }
            }
            let lower = lower_order_flux(window, &bp, &delta_box, order);
            let rhs: Vec<f64> = window
                .restrict(&acc)
                .iter()
                .zip(&lower)
                .map(|(a, s)| a - s)
                .collect();
            let (u, diag) = solve_order(window, bp.order(0), rhs.clone(), opts, order)?;
            Ok((u, diag, rhs))
        };
        let (u, diag, rhs) = step().map_err(|e| Error::Order {
            order,
            source: Box::new(e),
        })?;
        let u_box = window.extend(&u);
        let p_box: Vec<f64> = v.order(order).iter().zip(&u_box).map(|(a, b)| a + b).collect();
        result.v_prime.push(window.restrict(&p_box));
        prime_box.push(p_box);
        delta_box.push(u_box);
        result.v_delta.as_mut().expect("set above").push(u);
        result.diagnostics.push(diag);
        result.rhs.push(rhs);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::quantum::{
        construct_ks_initial_state, ground_state, observable_taylor, OperatorField, SoftCore,
        Statistics, SystemSpec,
    };

    fn system(g: f64) -> ManyBodySystem {
        let window = Window::new(Grid::new(-2.0, 2.0, 7).unwrap(), 3).unwrap();
        let spec = SystemSpec {
            particles: 2,
            statistics: Statistics::FermionSinglet,
            interaction: SoftCore::new(g, 1.0),
        };
        ManyBodySystem::new(window, spec).unwrap()
    }

    fn initial_state(sys: &ManyBodySystem) -> QuantumState {
        let v = sys.grid().sample(|x| 0.3 * x * x + 0.1 * x);
        let gs = ground_state(&sys.hamiltonian(&v).unwrap(), 1e-12).unwrap();
        let mut amps = gs.state.into_amplitudes();
        sys.apply_kick(&mut amps, 0.25);
        QuantumState::new(amps).unwrap()
    }

    /// Potential orders on `Ω`, zero-extended to the box.
    fn potential(sys: &ManyBodySystem, orders: usize) -> TaylorField {
        let w = sys.window();
        let pi = std::f64::consts::PI;
        let fields: [&dyn Fn(f64) -> f64; 4] = [
            &|x| -1.5 * (pi * x / 4.0).cos().powi(2),
            &|x| 0.4 * (pi * x / 2.0).sin(),
            &|x| 0.3 * (pi * x / 4.0).cos().powi(2),
            &|x| -0.2 * (pi * x / 2.0).sin(),
        ];
        TaylorField::new(
            fields
                .iter()
                .take(orders)
                .map(|f| w.extend(&w.omega().sample(f)))
                .collect(),
        )
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    fn restrict(w: &Window, f: &TaylorField) -> TaylorField {
        f.map(|o| w.restrict(o))
    }

    #[test]
    fn stationary_states_have_static_density() {
        let sys = system(1.0);
        let v = sys.grid().sample(|x| 0.3 * x * x);
        let gs = ground_state(&sys.hamiltonian(&v).unwrap(), 1e-13).unwrap();
        let field = TaylorField::new(vec![v, vec![0.0; sys.grid().len()]]);
        let n = predict_density_taylor(&sys, &gs.state, &field, 1, TaylorEngine::Heisenberg).unwrap();
        for k in 1..n.len() {
            assert!(max_abs(n.order(k)) <= 1e-8, "order {k}");
        }
    }

    #[test]
    fn prediction_matches_direct_operator_recursion() {
        let sys = system(1.0);
        let state = initial_state(&sys);
        let v = potential(&sys, 4);
        let k = 3;
        let predicted = predict_density_taylor(&sys, &state, &v, k, TaylorEngine::Heisenberg).unwrap();
        let direct =
            observable_taylor(&sys, &state, &OperatorField::density(&sys), &v, k + 2).unwrap();
        for order in 0..=k + 2 {
            let scale = max_abs(direct.order(order));
            assert!(
                max_diff(predicted.order(order), direct.order(order)) <= 1e-8 * scale,
                "order {order}"
            );
            if order >= 1 {
                assert!(sys.grid().integrate(predicted.order(order)).abs() <= 1e-8 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn self_inversion_recovers_the_potential() {
        let sys = system(1.0);
        let state = initial_state(&sys);
        let v = potential(&sys, 4);
        let k = 3;
        let n = predict_density_taylor(&sys, &state, &v, k, TaylorEngine::Heisenberg).unwrap();
        let target = restrict(sys.window(), &n);
        let opts = InversionOptions::default();
        let result = invert_potential_taylor(&target, &sys, &state, k, &opts).unwrap();
        for order in 0..=k {
            let want = gauge_aligned(&sys.window().restrict(v.order(order)));
            let got = gauge_aligned(&result.v_prime[order]);
            assert!(max_diff(&got, &want) <= 1e-6 * max_abs(&want), "order {order}");
            let d = &result.diagnostics[order];
            assert!(d.residual <= opts.tol);
            assert_eq!(d.coercivity_violations, Some(0));
            assert!(d.coercivity_c > 0.0);
        }
    }

    #[test]
    fn incompatible_initial_state_is_rejected() {
        let sys = system(1.0);
        let state = initial_state(&sys);
        let v = potential(&sys, 2);
        let n = predict_density_taylor(&sys, &state, &v, 0, TaylorEngine::StateTaylor).unwrap();
        let mut target = restrict(sys.window(), &n);
        target.orders[0][3] *= 1.01;
        let err = invert_potential_taylor(&target, &sys, &state, 0, &InversionOptions::default())
            .unwrap_err();
        assert!(matches!(
            err,
            Error::Compatibility {
                condition: "equal initial densities",
                ..
            }
        ));
    }

    #[test]
    fn identical_systems_need_no_correction() {
        let sys = system(1.0);
        let state = initial_state(&sys);
        let v = potential(&sys, 3);
        let opts = InversionOptions::default();
        let result = delta_potential_taylor(&sys, &state, &v, &sys, &state, 2, &opts).unwrap();
        for u in result.v_delta.as_ref().unwrap() {
            assert!(max_abs(u) <= 1e-8);
        }
    }

    fn ks_pair(sys: &ManyBodySystem, state: &QuantumState, g: f64) -> (ManyBodySystem, QuantumState) {
        let primed = system(g);
        let n0 = density(sys, state).unwrap();
        let n1: Vec<f64> = current_divergence(sys, state).unwrap().iter().map(|d| -d).collect();
        let ks = construct_ks_initial_state(&primed, &n0, &n1, 1e-8).unwrap();
        (primed, ks)
    }

    #[test]
    fn correction_route_agrees_with_direct_inversion() {
        let sys = system(1.0);
        let state = initial_state(&sys);
        let v = potential(&sys, 3);
        let k = 2;
        let (ks_sys, ks) = ks_pair(&sys, &state, 0.0);
        let opts = InversionOptions::default();
        let n = predict_density_taylor(&sys, &state, &v, k, TaylorEngine::Heisenberg).unwrap();
        let direct =
            invert_potential_taylor(&restrict(sys.window(), &n), &ks_sys, &ks, k, &opts).unwrap();
        let corrected = delta_potential_taylor(&sys, &state, &v, &ks_sys, &ks, k, &opts).unwrap();
        for order in 0..=k {
            let a = &direct.v_prime[order];
            let b = &corrected.v_prime[order];
            assert!(max_diff(a, b) <= 1e-6 * max_abs(a), "order {order}");
        }
    }

    #[test]
    fn correction_is_linear_in_small_interaction_changes() {
        let sys = system(1.0);
        let state = initial_state(&sys);
        let v = potential(&sys, 1);
        let opts = InversionOptions::default();
        let size = |delta: f64| -> f64 {
            let (p, s) = ks_pair(&sys, &state, 1.0 + delta);
            let r = delta_potential_taylor(&sys, &state, &v, &p, &s, 0, &opts).unwrap();
            let own = delta_potential_taylor(&sys, &state, &v, &system(1.0), &ks_pair(&sys, &state, 1.0).1, 0, &opts)
                .unwrap();
            // subtract the part caused by the different initial state alone
            let u: Vec<f64> = r.v_delta.unwrap()[0]
                .iter()
                .zip(&own.v_delta.unwrap()[0])
                .map(|(a, b)| a - b)
                .collect();
            max_abs(&u)
        };
        let (a, b) = (size(1e-3), size(2e-3));
        assert!(a > 0.0);
        assert!((b / a - 2.0).abs() <= 0.2, "ratio {}", b / a);
    }

    #[test]
    fn correction_is_gauge_blind() {
        let sys = system(1.0);
        let state = initial_state(&sys);
        let v = potential(&sys, 3);
        let (ks_sys, ks) = ks_pair(&sys, &state, 0.0);
        let opts = InversionOptions::default();
        let base = delta_potential_taylor(&sys, &state, &v, &ks_sys, &ks, 2, &opts).unwrap();
        let mut shifted = v.clone();
        shifted.orders[0].iter_mut().for_each(|x| *x += 0.8);
        let moved = delta_potential_taylor(&sys, &state, &shifted, &ks_sys, &ks, 2, &opts).unwrap();
        for (a, b) in base.v_delta.unwrap().iter().zip(moved.v_delta.as_ref().unwrap()) {
            assert!(max_diff(a, b) <= 1e-8 * max_abs(a).max(1.0));
        }
    }
}
