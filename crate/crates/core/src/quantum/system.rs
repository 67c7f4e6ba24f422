//! Few-body systems on the simulation box: basis enumeration, Hamiltonian
//! assembly and the local operator fields (density, bond density, current,
//! stress forces and the second-derivative source `q̂`).

use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::{SparseOp, C64};
use crate::error::{Error, Result};
use crate::grid::{softcore, Grid, Window};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistics {
    /// One particle.
    Single,
    /// Two bosons, symmetric spatial wavefunction.
    BosonPair,
    /// Two spin-1/2 fermions in the spin singlet; the spatial part is symmetric.
    FermionSinglet,
}

impl Statistics {
    pub fn particles(self) -> usize {
        match self {
            Statistics::Single => 1,
            Statistics::BosonPair | Statistics::FermionSinglet => 2,
        }
    }
}

/// Soft-core pair interaction `g / sqrt(r² + ε)`; `g = 0` is the noninteracting case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftCore {
    pub strength: f64,
    pub epsilon: f64,
}

impl SoftCore {
    pub const NONE: SoftCore = SoftCore {
        strength: 0.0,
        epsilon: 1.0,
    };

    pub fn new(strength: f64, epsilon: f64) -> Self {
        Self { strength, epsilon }
    }

    pub fn is_zero(&self) -> bool {
        self.strength == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub particles: usize,
    pub statistics: Statistics,
    pub interaction: SoftCore,
}

/// Operators attached to grid points (nodes) or bonds of the box.
///
/// Bond `j` joins box nodes `j` and `j + 1`; there are `len - 1` bonds. The
/// walls carry no bond operators.
pub struct LocalOperators {
    /// Diagonal of `n̂(x_k)` for every node.
    pub density: Vec<Vec<f64>>,
    /// Symmetrized hopping `b̂`, whose expectation is the bond density.
    pub bond_density: Vec<SparseOp>,
    /// Bond current `ĵ`.
    pub current: Vec<SparseOp>,
    /// Kinetic stress force `∂ₓT̂ₓₓ` on each bond.
    pub kinetic_force: Vec<SparseOp>,
    /// Interaction stress force `Ŵₓ` on each bond.
    pub interaction_force: Vec<SparseOp>,
    /// `q̂(x_k) = ∂ₓ(∂ₓT̂ₓₓ + Ŵₓ)` on every node.
    pub q: Vec<SparseOp>,
}

pub struct ManyBodySystem {
    window: Window,
    spec: SystemSpec,
    /// Occupied box nodes per basis state; `[i, i]` for a single particle.
    basis: Vec<[u32; 2]>,
    kinetic: SparseOp,
    interaction_diag: Vec<f64>,
    local: OnceLock<LocalOperators>,
}

impl std::fmt::Debug for ManyBodySystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManyBodySystem")
            .field("spec", &self.spec)
            .field("box_nodes", &self.window.grid().len())
            .field("dim", &self.basis.len())
            .finish()
    }
}

/// Hamiltonian for a fixed external potential: shared kinetic part plus a diagonal.
pub struct Hamiltonian<'a> {
    pub kinetic: &'a SparseOp,
    pub diag: Vec<f64>,
}

impl Hamiltonian<'_> {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.kinetic.matvec(x, y);
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.diag) {
            *yi += xi * d;
        }
    }

    /// Real symmetric action, used by the ground-state solver.
    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        for (r, yi) in y.iter_mut().enumerate() {
            let mut s = self.diag[r] * x[r];
            for &(c, v) in self.kinetic.row(r) {
                s += v.re * x[c as usize];
            }
            *yi = s;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<C64> {
        let mut m = self.kinetic.to_dense();
        for (i, d) in self.diag.iter().enumerate() {
            m[(i, i)] += C64::new(*d, 0.0);
        }
        m
    }

    pub fn expectation(&self, psi: &[C64]) -> f64 {
        let mut y = vec![C64::new(0.0, 0.0); psi.len()];
        self.apply(psi, &mut y);
        psi.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// Single-particle three-point kinetic operator `-½ ∇²` with hard walls.
pub fn single_particle_kinetic(m: usize, h: f64) -> SparseOp {
    let diag = 1.0 / (h * h);
    let off = -0.5 / (h * h);
    let mut trip = Vec::with_capacity(3 * m);
    for i in 0..m {
        trip.push((i, i, C64::new(diag, 0.0)));
        if i + 1 < m {
            trip.push((i, i + 1, C64::new(off, 0.0)));
            trip.push((i + 1, i, C64::new(off, 0.0)));
        }
    }
    SparseOp::from_triplets(m, trip)
}

impl ManyBodySystem {
    pub fn new(window: Window, spec: SystemSpec) -> Result<Self> {
        match (spec.particles, spec.statistics) {
            (1, Statistics::Single) => {}
            (2, Statistics::BosonPair | Statistics::FermionSinglet) => {}
            (n, s) => {
                return Err(Error::config(
                    "system.particles",
                    format!("unsupported combination of {n} particle(s) with {s:?} statistics"),
                ))
            }
        }
        if !spec.interaction.strength.is_finite() {
            return Err(Error::config("system.interaction.strength", "must be finite"));
        }
        if !spec.interaction.is_zero() {
            // validates ε > 0; the bare Coulomb kernel is not smooth at the origin
            softcore(0.0, 0.0, spec.interaction.epsilon, spec.interaction.strength)?;
        }
        let m = window.grid().len();
        let h = window.grid().h();
        let basis: Vec<[u32; 2]> = if spec.particles == 1 {
            (0..m as u32).map(|i| [i, i]).collect()
        } else {
            (0..m as u32)
                .flat_map(|i| (i..m as u32).map(move |j| [i, j]))
                .collect()
        };
        let mut sys = Self {
            window,
            spec,
            basis,
            kinetic: SparseOp::zeros(0),
            interaction_diag: Vec::new(),
            local: OnceLock::new(),
        };
        sys.kinetic = sys.lift(&single_particle_kinetic(m, h));
        sys.interaction_diag = sys.build_interaction();
        Ok(sys)
    }

    fn build_interaction(&self) -> Vec<f64> {
        let grid = self.window.grid();
        let w = self.spec.interaction;
        if self.spec.particles == 1 || w.is_zero() {
            return vec![0.0; self.basis.len()];
        }
        self.basis
            .iter()
            .map(|&[i, j]| {
                let d = grid.x(i as usize) - grid.x(j as usize);
                w.strength / (d * d + w.epsilon).sqrt()
            })
            .collect()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn grid(&self) -> &Grid {
        self.window.grid()
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn particles(&self) -> usize {
        self.spec.particles
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[[u32; 2]] {
        &self.basis
    }

    pub fn kinetic(&self) -> &SparseOp {
        &self.kinetic
    }

    pub fn interaction_diagonal(&self) -> &[f64] {
        &self.interaction_diag
    }

    /// Basis index of the configuration with particles on nodes `i` and `j`.
    pub fn index_of(&self, i: usize, j: usize) -> usize {
        if self.spec.particles == 1 {
            return i;
        }
        self.pair_index(i, j)
    }

    /// Diagonal of the one-body potential operator `Σ_p v(x_p)` for a box field `v`.
    pub fn potential_diagonal(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.grid().len();
        if v.len() != m {
            return Err(Error::Dimension {
                context: "external potential",
                expected: m,
                got: v.len(),
            });
        }
        Ok(if self.spec.particles == 1 {
            self.basis.iter().map(|&[i, _]| v[i as usize]).collect()
        } else {
            self.basis
                .iter()
                .map(|&[i, j]| v[i as usize] + v[j as usize])
                .collect()
        })
    }

    /// `Ĥ = T̂ + V̂_int + V̂[v]` for a box potential `v`.
    pub fn hamiltonian(&self, v: &[f64]) -> Result<Hamiltonian<'_>> {
        let pot = self.potential_diagonal(v)?;
        let diag = pot
            .iter()
            .zip(&self.interaction_diag)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Hamiltonian {
            kinetic: &self.kinetic,
            diag,
        })
    }

    /// Lift a single-particle operator on the box nodes to the many-body basis.
    pub fn lift(&self, o: &SparseOp) -> SparseOp {
        let m = self.grid().len();
        assert_eq!(o.dim(), m, "single-particle operator has the wrong dimension");
        if self.spec.particles == 1 {
            return o.clone();
        }
        // column access: o_{x, p} for fixed p
        let mut cols: Vec<Vec<(usize, C64)>> = vec![Vec::new(); m];
        for x in 0..m {
            for &(p, v) in o.row(x) {
                cols[p as usize].push((x, v));
            }
        }
        let sqrt_half = std::f64::consts::FRAC_1_SQRT_2;
        let mut trip = Vec::new();
        for (col, &[i, j]) in self.basis.iter().enumerate() {
            let (i, j) = (i as usize, j as usize);
            let entries: &[(usize, usize, f64)] = if i < j {
                &[(i, j, sqrt_half), (j, i, sqrt_half)]
            } else {
                &[(i, i, 1.0)]
            };
            for &(p, q, amp) in entries.iter() {
                // first particle moves: (x1, q) += o_{x1 p} * amp
                for &(x1, v) in &cols[p] {
                    push_symmetric(self, &mut trip, col, x1, q, v * amp);
                }
                // second particle moves: (p, x2) += o_{x2 q} * amp
                for &(x2, v) in &cols[q] {
                    push_symmetric(self, &mut trip, col, p, x2, v * amp);
                }
            }
        }
        SparseOp::from_triplets(self.dim(), trip)
    }

    /// Symmetric product state `φ ⊗ φ` (or `φ` for one particle).
    pub fn product_state(&self, phi: &[C64]) -> Vec<C64> {
        if self.spec.particles == 1 {
            return phi.to_vec();
        }
        let s2 = std::f64::consts::SQRT_2;
        self.basis
            .iter()
            .map(|&[i, j]| {
                let (a, b) = (phi[i as usize], phi[j as usize]);
                if i == j {
                    a * b
                } else {
                    a * b * s2
                }
            })
            .collect()
    }

    /// Multiply by the one-body phase `exp(i κ Σ_p x_p)`.
    pub fn apply_kick(&self, psi: &mut [C64], kappa: f64) {
        let grid = self.grid();
        for (c, &[i, j]) in psi.iter_mut().zip(&self.basis) {
            let phase = if self.spec.particles == 1 {
                grid.x(i as usize)
            } else {
                grid.x(i as usize) + grid.x(j as usize)
            };
            *c *= Complex64::from_polar(1.0, kappa * phase);
        }
    }

    pub fn local_operators(&self) -> &LocalOperators {
        self.local.get_or_init(|| self.build_local_operators())
    }

    fn build_local_operators(&self) -> LocalOperators {
        let grid = self.grid();
        let m = grid.len();
        let h = grid.h();
        let inv_h = 1.0 / h;
        let density = (0..m)
            .map(|k| {
                self.basis
                    .iter()
                    .map(|&[i, j]| {
                        let count = if self.spec.particles == 1 {
                            usize::from(i as usize == k)
                        } else {
                            usize::from(i as usize == k) + usize::from(j as usize == k)
                        };
                        count as f64 * inv_h
                    })
                    .collect()
            })
            .collect();

        let t1 = single_particle_kinetic(m, h);
        let bonds: Vec<usize> = (0..m - 1).collect();
        let per_bond: Vec<(SparseOp, SparseOp, SparseOp, SparseOp)> = bonds
            .par_iter()
            .map(|&j| {
                let jc = C64::new(0.0, 0.5 / (h * h));
                let cur1 = SparseOp::from_triplets(m, [(j + 1, j, jc), (j, j + 1, -jc)]);
                let bd = C64::new(0.5 / h, 0.0);
                let bond1 = SparseOp::from_triplets(m, [(j + 1, j, bd), (j, j + 1, bd)]);
                // -i [t, j] is again one-body
                let kin1 = cur1.commutator_with(&t1).scaled(C64::new(0.0, -1.0));
                let current = self.lift(&cur1);
                let interaction = current
                    .commutator_with_diagonal(&self.interaction_diag)
                    .scaled(C64::new(0.0, -1.0));
                (self.lift(&bond1), current, self.lift(&kin1), interaction)
            })
            .collect();
        let mut bond_density = Vec::with_capacity(m - 1);
        let mut current = Vec::with_capacity(m - 1);
        let mut kinetic_force = Vec::with_capacity(m - 1);
        let mut interaction_force = Vec::with_capacity(m - 1);
        for (b, c, k, w) in per_bond {
            bond_density.push(b);
            current.push(c);
            kinetic_force.push(k);
            interaction_force.push(w);
        }
        let force: Vec<SparseOp> = kinetic_force
            .iter()
            .zip(&interaction_force)
            .map(|(k, w)| k.add_scaled(w, C64::new(1.0, 0.0)))
            .collect();
        let dim = self.dim();
        let q = (0..m)
            .into_par_iter()
            .map(|k| {
                let right = if k + 1 < m { force[k].clone() } else { SparseOp::zeros(dim) };
                let q = if k > 0 {
                    right.add_scaled(&force[k - 1], C64::new(-1.0, 0.0))
                } else {
                    right
                };
                q.scaled(C64::new(inv_h, 0.0))
            })
            .collect();
        LocalOperators {
            density,
            bond_density,
            current,
            kinetic_force,
            interaction_force,
            q,
        }
    }
}

fn push_symmetric(
    sys: &ManyBodySystem,
    trip: &mut Vec<(usize, usize, C64)>,
    col: usize,
    x1: usize,
    x2: usize,
    v: C64,
) {
    // project the symmetric function onto the normalized basis vector |x1 x2⟩_S
    let row = sys.pair_index(x1, x2);
    let w = if x1 == x2 { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
    trip.push((row, col, v * w));
}

impl ManyBodySystem {
    fn pair_index(&self, i: usize, j: usize) -> usize {
        let m = self.grid().len();
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // rows 0..i hold m, m-1, ..., m-i+1 entries
        i * m - i * i.saturating_sub(1) / 2 + (j - i)
    }
}
