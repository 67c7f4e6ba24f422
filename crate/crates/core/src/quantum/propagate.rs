//! Crank–Nicolson propagation with a midpoint potential.

use super::sparse::C64;
use super::system::ManyBodySystem;
use super::{norm, observables, QuantumState};
use crate::error::{Error, Result};
use crate::grid::TaylorField;

/// Default relative tolerance of the inner linear solves.
pub const CN_SOLVE_TOL: f64 = 1e-13;
const CN_MAX_ITER: usize = 500;

/// External potential on the box as a function of absolute time.
pub trait PotentialSchedule: Sync {
    fn potential(&self, t: f64) -> Result<Vec<f64>>;
}

/// Time-independent potential.
#[derive(Clone, Debug)]
pub struct StaticPotential(pub Vec<f64>);

impl PotentialSchedule for StaticPotential {
    fn potential(&self, _t: f64) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// Truncated Taylor series `Σ_k v⁽ᵏ⁾ (t − t0)ᵏ / k!`.
#[derive(Clone, Debug)]
pub struct TaylorSchedule {
    pub t0: f64,
    pub field: TaylorField,
}

impl PotentialSchedule for TaylorSchedule {
    fn potential(&self, t: f64) -> Result<Vec<f64>> {
        if self.field.is_empty() {
            return Err(Error::MissingOrders {
                needed: 1,
                available: 0,
            });
        }
        Ok(self.field.evaluate(t - self.t0))
    }
}

/// Piecewise-constant table: `values[j]` acts on `[t0 + j dt, t0 + (j+1) dt)`.
#[derive(Clone, Debug)]
pub struct StepTable {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
}

impl PotentialSchedule for StepTable {
    fn potential(&self, t: f64) -> Result<Vec<f64>> {
        let j = ((t - self.t0) / self.dt).floor();
        if j < 0.0 || j as usize >= self.values.len() {
            return Err(Error::Precondition(format!(
                "potential table does not cover t = {t}"
            )));
        }
        Ok(self.values[j as usize].clone())
    }
}

/// One Crank–Nicolson step `(1 + iaĤ) ψ' = (1 − iaĤ) ψ`, `a = dt/2`, solved as
/// the Hermitian positive-definite system `(1 + a²Ĥ²) ψ' = (1 − iaĤ)² ψ` by
/// conjugate gradients.
pub struct CrankNicolson<'a> {
    system: &'a ManyBodySystem,
    dt: f64,
    tol: f64,
}

impl<'a> CrankNicolson<'a> {
    pub fn new(system: &'a ManyBodySystem, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config("experiment.dt", "time step must be positive"));
        }
        Ok(Self {
            system,
            dt,
            tol: CN_SOLVE_TOL,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `psi` by one step under the (midpoint) potential `v`.
    /// Returns the new amplitudes and the number of CG iterations.
    pub fn step(&self, psi: &[C64], v: &[f64]) -> Result<(Vec<C64>, usize)> {
        let h = self.system.hamiltonian(v)?;
        let dim = psi.len();
        let a = 0.5 * self.dt;
        let ia = C64::new(0.0, a);
        let mut tmp = vec![C64::new(0.0, 0.0); dim];
        let mut tmp2 = vec![C64::new(0.0, 0.0); dim];

        // b = (1 − iaH)² ψ
        let mut b = psi.to_vec();
        for _ in 0..2 {
            h.apply(&b, &mut tmp);
            for (x, y) in b.iter_mut().zip(&tmp) {
                *x -= ia * y;
            }
        }
        let apply_a = |x: &[C64], out: &mut [C64], t1: &mut [C64]| {
            h.apply(x, t1);
            h.apply(t1, out);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = xi + *o * (a * a);
            }
        };

        let b_norm = norm(&b);
        let mut x = b.clone();
        let mut ax = vec![C64::new(0.0, 0.0); dim];
        apply_a(&x, &mut ax, &mut tmp);
        let mut r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let mut p = r.clone();
        let mut rr: f64 = r.iter().map(|c| c.norm_sqr()).sum();
        let mut history = Vec::new();
        for it in 0..CN_MAX_ITER {
            let res = rr.sqrt() / b_norm;
            history.push(res);
            if res <= self.tol {
                return Ok((x, it));
            }
            apply_a(&p, &mut tmp2, &mut tmp);
            let pap: f64 = p.iter().zip(&tmp2).map(|(u, w)| (u.conj() * w).re).sum();
            let alpha = rr / pap;
            for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&tmp2)) {
                *xi += pi * alpha;
                *ri -= api * alpha;
            }
            let rr_new: f64 = r.iter().map(|c| c.norm_sqr()).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + *pi * beta;
            }
        }
        Err(Error::NonConvergence {
            solver: "Crank-Nicolson CG",
            iterations: CN_MAX_ITER,
            residual: history.last().copied().unwrap_or(f64::NAN),
            history,
        })
    }
}

/// Densities (and optionally states) at `t0 + j dt`, `j = 0..=steps`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub densities: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    /// Present only when requested.
    pub states: Vec<QuantumState>,
    pub cg_iterations: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    /// Largest `|‖ψ‖ − 1|` along the trajectory.
    pub fn norm_drift(&self) -> f64 {
        self.norms.iter().fold(0.0, |a, n| a.max((n - 1.0).abs()))
    }
}

/// Propagate `state` from `t0` for `steps` steps of size `dt`.
pub fn propagate(
    system: &ManyBodySystem,
    state: &QuantumState,
    schedule: &dyn PotentialSchedule,
    t0: f64,
    dt: f64,
    steps: usize,
    keep_states: bool,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        t0,
        dt,
        densities: Vec::with_capacity(steps + 1),
        norms: Vec::with_capacity(steps + 1),
        states: Vec::new(),
        cg_iterations: Vec::with_capacity(steps),
    };
    let iterations = propagate_observed(system, state, schedule, t0, dt, steps, |_, s| {
        traj.densities.push(observables::density(system, s)?);
        traj.norms.push(s.norm());
        if keep_states {
            traj.states.push(s.clone());
        }
        Ok(())
    })?;
    traj.cg_iterations = iterations;
    Ok(traj)
}

/// Propagate and hand every state (including the initial one) to `observe`
/// together with its step index. Returns the CG iterations per step.
pub fn propagate_observed(
    system: &ManyBodySystem,
    state: &QuantumState,
    schedule: &dyn PotentialSchedule,
    t0: f64,
    dt: f64,
    steps: usize,
    mut observe: impl FnMut(usize, &QuantumState) -> Result<()>,
) -> Result<Vec<usize>> {
    state.check_dim(system)?;
    let cn = CrankNicolson::new(system, dt)?;
    observe(0, state)?;
    let mut psi = state.amplitudes().to_vec();
    let mut iterations = Vec::with_capacity(steps);
    for j in 0..steps {
        let v = schedule.potential(t0 + (j as f64 + 0.5) * dt)?;
        let (next, iters) = cn.step(&psi, &v)?;
        psi = next;
        let s = QuantumState::new(psi.clone())?;
        iterations.push(iters);
        observe(j + 1, &s)?;
    }
    Ok(iterations)
}
