//! Expectation values of the local operators.
//!
//! Node fields have one entry per box node. Bond fields are returned on the
//! `len + 1` faces of the box, with the two wall faces identically zero.

use rayon::prelude::*;

use super::sparse::SparseOp;
use super::system::ManyBodySystem;
use super::{bonds_to_faces, QuantumState};
use crate::error::Result;

fn bond_expectations(ops: &[SparseOp], state: &QuantumState) -> Vec<f64> {
    let psi = state.amplitudes();
    let bonds: Vec<f64> = ops.par_iter().map(|op| op.expectation(psi).re).collect();
    bonds_to_faces(&bonds)
}

/// `n(x_k) = ⟨n̂(x_k)⟩`; integrates to the particle number.
pub fn density(system: &ManyBodySystem, state: &QuantumState) -> Result<Vec<f64>> {
    state.check_dim(system)?;
    let m = system.grid().len();
    let h = system.grid().h();
    let mut n = vec![0.0; m];
    for (c, &[i, j]) in state.amplitudes().iter().zip(system.basis()) {
        let p = c.norm_sqr() / h;
        n[i as usize] += p;
        if system.particles() == 2 {
            n[j as usize] += p;
        }
    }
    Ok(n)
}

/// `⟨b̂⟩` on the box faces (the coefficient of the lattice `∇·(b∇v)`).
pub fn bond_density(system: &ManyBodySystem, state: &QuantumState) -> Result<Vec<f64>> {
    state.check_dim(system)?;
    Ok(bond_expectations(&system.local_operators().bond_density, state))
}

/// `⟨ĵ⟩` on the box faces.
pub fn bond_current(system: &ManyBodySystem, state: &QuantumState) -> Result<Vec<f64>> {
    state.check_dim(system)?;
    Ok(bond_expectations(&system.local_operators().current, state))
}

/// `⟨∇·ĵ⟩` on the box nodes; `∂ₜn = -⟨∇·ĵ⟩`.
pub fn current_divergence(system: &ManyBodySystem, state: &QuantumState) -> Result<Vec<f64>> {
    let j = bond_current(system, state)?;
    let h = system.grid().h();
    Ok((0..system.grid().len()).map(|k| (j[k + 1] - j[k]) / h).collect())
}

/// Kinetic stress force `⟨∂ₓT̂ₓₓ⟩` on the box faces.
pub fn kinetic_force(system: &ManyBodySystem, state: &QuantumState) -> Result<Vec<f64>> {
    state.check_dim(system)?;
    Ok(bond_expectations(&system.local_operators().kinetic_force, state))
}

/// Interaction stress force `⟨Ŵₓ⟩` on the box faces.
pub fn interaction_force(system: &ManyBodySystem, state: &QuantumState) -> Result<Vec<f64>> {
    state.check_dim(system)?;
    Ok(bond_expectations(&system.local_operators().interaction_force, state))
}

/// `⟨q̂⟩` on the box nodes.
pub fn q_field(system: &ManyBodySystem, state: &QuantumState) -> Result<Vec<f64>> {
    state.check_dim(system)?;
    let psi = state.amplitudes();
    Ok(system
        .local_operators()
        .q
        .par_iter()
        .map(|op| op.expectation(psi).re)
        .collect())
}

/// `⟨Ĥ[v]⟩` for a box potential `v`.
pub fn energy(system: &ManyBodySystem, state: &QuantumState, v: &[f64]) -> Result<f64> {
    state.check_dim(system)?;
    Ok(system.hamiltonian(v)?.expectation(state.amplitudes()))
}

/// All local expectation values of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Observables {
    pub density: Vec<f64>,
    pub bond_density: Vec<f64>,
    pub current: Vec<f64>,
    pub kinetic_force: Vec<f64>,
    pub interaction_force: Vec<f64>,
    pub q: Vec<f64>,
}

impl Observables {
    pub fn of(system: &ManyBodySystem, state: &QuantumState) -> Result<Self> {
        Ok(Self {
            density: density(system, state)?,
            bond_density: bond_density(system, state)?,
            current: bond_current(system, state)?,
            kinetic_force: kinetic_force(system, state)?,
            interaction_force: interaction_force(system, state)?,
            q: q_field(system, state)?,
        })
    }

    pub fn current_divergence(&self, h: f64) -> Vec<f64> {
        (0..self.density.len())
            .map(|k| (self.current[k + 1] - self.current[k]) / h)
            .collect()
    }
}
