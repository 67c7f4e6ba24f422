//! Exact few-body quantum dynamics on the simulation box.
//!
//! All local operators live on the lattice: densities on nodes, bond densities,
//! currents and stress forces on the bonds between neighbouring nodes. With
//! these definitions the continuity equation, the local force balance and the
//! second-derivative identity `∂ₜ²n = ∇·(b∇v) + q` hold exactly on the lattice.

mod eigen;
mod heisenberg;
mod kohn_sham;
mod observables;
mod propagate;
pub mod sparse;
mod system;

pub use eigen::{ground_state, GroundState};
pub use heisenberg::{
    bond_density_taylor, expectation_taylor, observable_taylor, q_expectation_taylor,
    state_taylor, TaylorEngine,
};
pub use kohn_sham::construct_ks_initial_state;
pub use observables::{
    bond_current, bond_density, current_divergence, density, energy, interaction_force,
    kinetic_force, q_field, Observables,
};
pub use propagate::{
    propagate, propagate_observed, CrankNicolson, PotentialSchedule, StaticPotential, StepTable, TaylorSchedule,
    Trajectory,
};
pub use sparse::{SparseOp, C64};
pub use system::{
    single_particle_kinetic, Hamiltonian, LocalOperators, ManyBodySystem, SoftCore, Statistics,
    SystemSpec,
};

use crate::error::{Error, Result};

/// Tolerance on `‖ψ‖ = 1` accepted by every state-consuming operation.
pub const NORM_TOL: f64 = 1e-9;

/// Relative Hermiticity tolerance for operator fields.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// A normalized pure state on the many-body basis of some system.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    amps: Vec<C64>,
}

impl QuantumState {
    /// Wrap amplitudes that are already normalized.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        let norm = norm(&amps);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Unnormalized { norm });
        }
        Ok(Self { amps })
    }

    /// Normalize arbitrary nonzero amplitudes.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let n = norm(&amps);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Unnormalized { norm: n });
        }
        amps.iter_mut().for_each(|c| *c /= n);
        Ok(Self { amps })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    pub(crate) fn check_dim(&self, system: &ManyBodySystem) -> Result<()> {
        if self.amps.len() != system.dim() {
            return Err(Error::Dimension {
                context: "state vs. many-body basis",
                expected: system.dim(),
                got: self.amps.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// One Hermitian operator per point (grid node or bond).
#[derive(Clone, Debug)]
pub struct OperatorField {
    ops: Vec<SparseOp>,
}

impl OperatorField {
    pub fn new(ops: Vec<SparseOp>) -> Result<Self> {
        for (i, op) in ops.iter().enumerate() {
            let defect = op.hermiticity_defect();
            if defect > HERMITICITY_TOL {
                return Err(Error::NonHermitian(format!(
                    "entry {i} (relative defect {defect:.3e})"
                )));
            }
        }
        Ok(Self { ops })
    }

    pub(crate) fn trusted(ops: Vec<SparseOp>) -> Self {
        Self { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn get(&self, i: usize) -> &SparseOp {
        &self.ops[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &SparseOp> {
        self.ops.iter()
    }

    /// `n̂` on every box node.
    pub fn density(system: &ManyBodySystem) -> Self {
        let local = system.local_operators();
        Self::trusted(local.density.iter().map(|d| SparseOp::diagonal(d)).collect())
    }

    /// `b̂` on every bond.
    pub fn bond_density(system: &ManyBodySystem) -> Self {
        Self::trusted(system.local_operators().bond_density.clone())
    }

    /// `ĵ` on every bond.
    pub fn current(system: &ManyBodySystem) -> Self {
        Self::trusted(system.local_operators().current.clone())
    }

    /// `q̂` on every box node.
    pub fn q(system: &ManyBodySystem) -> Self {
        Self::trusted(system.local_operators().q.clone())
    }

    /// `c·1` at a single point, for conservation tests.
    pub fn identity(dim: usize, c: f64) -> Self {
        Self::trusted(vec![SparseOp::diagonal(&vec![c; dim])])
    }
}

/// Binomial coefficient as a float (exact for the small orders used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Pad bond values (one per bond) with zero wall faces to a full face array.
pub fn bonds_to_faces(bonds: &[f64]) -> Vec<f64> {
    let mut faces = Vec::with_capacity(bonds.len() + 2);
    faces.push(0.0);
    faces.extend_from_slice(bonds);
    faces.push(0.0);
    faces
}

#[cfg(test)]
mod basics {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn state_normalization_is_enforced() {
        let bad = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        assert!(matches!(
            QuantumState::new(bad.clone()),
            Err(Error::Unnormalized { .. })
        ));
        let ok = QuantumState::normalized(bad).unwrap();
        assert!((ok.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_hermitian_field_is_rejected() {
        let op = SparseOp::from_triplets(2, [(0, 1, C64::new(1.0, 0.0))]);
        assert!(matches!(
            OperatorField::new(vec![op]),
            Err(Error::NonHermitian(_))
        ));
    }
}
#[cfg(test)]
mod tests;
