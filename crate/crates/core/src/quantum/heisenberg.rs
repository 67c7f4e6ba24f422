//! Time-Taylor coefficients of expectation values at `t0`.
//!
//! Two independent engines produce `⟨Â⟩⁽ᵏ⁾`:
//!
//! * [`TaylorEngine::Heisenberg`] applies the Heisenberg equation `k` times at
//!   the operator level. Because `Ĥ(t)` itself depends on time, the coefficient
//!   operators carry a second index for explicit time derivatives:
//!   `B̂_{k+1,m} = B̂_{k,m+1} + i Σ_{l≤m} C(m,l) [Ĥ_l, B̂_{k,m−l}]`, with
//!   `B̂_{0,0} = Â`, `B̂_{0,m>0} = 0` and `⟨Â⟩⁽ᵏ⁾ = ⟨ψ₀|B̂_{k,0}|ψ₀⟩`.
//! * [`TaylorEngine::StateTaylor`] differentiates the state instead,
//!   `ψ⁽ᵏ⁺¹⁾ = −i Σ_l C(k,l) Ĥ_l ψ⁽ᵏ⁻ˡ⁾`, and combines
//!   `⟨Â⟩⁽ᵏ⁾ = Σ_j C(k,j) ⟨ψ⁽ʲ⁾|Â|ψ⁽ᵏ⁻ʲ⁾⟩`. It is much cheaper and serves as the
//!   independent cross-check of the operator recursion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::{SparseOp, C64};
use super::system::ManyBodySystem;
use super::{binomial, bonds_to_faces, OperatorField, QuantumState};
use crate::error::{Error, Result};
use crate::grid::TaylorField;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaylorEngine {
    #[default]
    Heisenberg,
    StateTaylor,
}

/// Number of potential orders the coefficient `k_max` depends on.
fn orders_needed(field: &OperatorField, k_max: usize) -> usize {
    let diagonal = field.iter().all(|op| {
        (0..op.dim()).all(|r| op.row(r).iter().all(|&(c, _)| c as usize == r))
    });
    if diagonal {
        // [V̂_l, Â] = 0 for diagonal Â, so the highest order drops out
        k_max.saturating_sub(1)
    } else {
        k_max
    }
}

/// Diagonals of `Ĥ_l` (`l ≥ 1`) and of the diagonal part of `Ĥ₀`.
fn hamiltonian_diagonals(
    system: &ManyBodySystem,
    v: &TaylorField,
    count: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = system.grid().len();
    let mut diags = Vec::with_capacity(count);
    for l in 0..count {
        diags.push(system.potential_diagonal(&v.order_or_zero(l, m))?);
    }
    let mut d0 = diags
        .first()
        .cloned()
        .unwrap_or_else(|| vec![0.0; system.dim()]);
    for (a, w) in d0.iter_mut().zip(system.interaction_diagonal()) {
        *a += w;
    }
    Ok((d0, diags))
}

fn check_orders(field: &OperatorField, v: &TaylorField, k_max: usize) -> Result<usize> {
    let needed = orders_needed(field, k_max);
    if v.len() < needed {
        return Err(Error::MissingOrders {
            needed,
            available: v.len(),
        });
    }
    Ok(needed)
}

/// `⟨Â⟩⁽ᵏ⁾` for `k = 0..=k_max` and every point of `field`, via the operator
/// recursion. `v` holds box potentials; orders beyond those stored are never
/// needed (checked).
pub fn observable_taylor(
    system: &ManyBodySystem,
    state: &QuantumState,
    field: &OperatorField,
    v: &TaylorField,
    k_max: usize,
) -> Result<TaylorField> {
    state.check_dim(system)?;
    let needed = check_orders(field, v, k_max)?;
    let (d0, diags) = hamiltonian_diagonals(system, v, needed.max(1))?;
    let kinetic = system.kinetic();
    let psi = state.amplitudes();
    let i_unit = C64::new(0.0, 1.0);

    let commutator = |l: usize, b: &SparseOp| -> SparseOp {
        if l == 0 {
            b.commutator_with(kinetic)
                .add_scaled(&b.commutator_with_diagonal(&d0), C64::new(1.0, 0.0))
        } else {
            b.commutator_with_diagonal(&diags[l])
        }
    };

    let per_point: Vec<Vec<f64>> = field
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|a| {
            // table[j][m] = B̂_{j,m}; None is the zero operator
            let mut table: Vec<Vec<Option<SparseOp>>> = vec![vec![None; k_max + 1]; k_max + 1];
            table[0][0] = Some((*a).clone());
            for j in 0..k_max {
                for m in 0..k_max - j {
                    let mut acc: Option<SparseOp> = table[j][m + 1].clone();
                    for l in 0..=m {
                        if l >= 1 && l >= needed {
                            break;
                        }
                        if let Some(b) = &table[j][m - l] {
                            let c = commutator(l, b).scaled(i_unit * binomial(m, l));
                            acc = Some(match acc {
                                Some(s) => s.add_scaled(&c, C64::new(1.0, 0.0)),
                                None => c,
                            });
                        }
                    }
                    table[j + 1][m] = acc;
                }
            }
            (0..=k_max)
                .map(|k| table[k][0].as_ref().map_or(0.0, |b| b.expectation(psi).re))
                .collect()
        })
        .collect();

    Ok(transpose(per_point, k_max + 1))
}

fn transpose(per_point: Vec<Vec<f64>>, orders: usize) -> TaylorField {
    TaylorField::new(
        (0..orders)
            .map(|k| per_point.iter().map(|p| p[k]).collect())
            .collect(),
    )
}

/// `ψ⁽ᵏ⁾` for `k = 0..=k_max` from the time-dependent Schrödinger equation.
/// Potential orders beyond those stored are treated as zero.
pub fn state_taylor(
    system: &ManyBodySystem,
    state: &QuantumState,
    v: &TaylorField,
    k_max: usize,
) -> Result<Vec<Vec<C64>>> {
    state.check_dim(system)?;
    let (d0, diags) = hamiltonian_diagonals(system, v, k_max.max(1))?;
    let kinetic = system.kinetic();
    let dim = system.dim();
    let minus_i = C64::new(0.0, -1.0);
    let mut derivs: Vec<Vec<C64>> = vec![state.amplitudes().to_vec()];
    let mut scratch = vec![C64::new(0.0, 0.0); dim];
    for k in 0..k_max {
        let mut next = vec![C64::new(0.0, 0.0); dim];
        for l in 0..=k {
            let src = &derivs[k - l];
            let w = binomial(k, l);
            if l == 0 {
                kinetic.matvec(src, &mut scratch);
                for ((o, s), (x, d)) in next.iter_mut().zip(&scratch).zip(src.iter().zip(&d0)) {
                    *o += (s + x * d) * w;
                }
            } else {
                for ((o, x), d) in next.iter_mut().zip(src).zip(&diags[l]) {
                    *o += x * (d * w);
                }
            }
        }
        next.iter_mut().for_each(|c| *c *= minus_i);
        derivs.push(next);
    }
    Ok(derivs)
}

/// `⟨Â⟩⁽ᵏ⁾` via the state derivatives; same contract as [`observable_taylor`].
pub fn expectation_taylor(
    system: &ManyBodySystem,
    state: &QuantumState,
    field: &OperatorField,
    v: &TaylorField,
    k_max: usize,
) -> Result<TaylorField> {
    check_orders(field, v, k_max)?;
    let derivs = state_taylor(system, state, v, k_max)?;
    let dim = system.dim();
    let per_point: Vec<Vec<f64>> = field
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|a| {
            let applied: Vec<Vec<C64>> = derivs
                .iter()
                .map(|d| {
                    let mut y = vec![C64::new(0.0, 0.0); dim];
                    a.matvec(d, &mut y);
                    y
                })
                .collect();
            (0..=k_max)
                .map(|k| {
                    (0..=k)
                        .map(|j| {
                            let inner: C64 = derivs[j]
                                .iter()
                                .zip(&applied[k - j])
                                .map(|(x, y)| x.conj() * y)
                                .sum();
                            binomial(k, j) * inner.re
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(transpose(per_point, k_max + 1))
}

fn run(
    engine: TaylorEngine,
    system: &ManyBodySystem,
    state: &QuantumState,
    field: &OperatorField,
    v: &TaylorField,
    k_max: usize,
) -> Result<TaylorField> {
    match engine {
        TaylorEngine::Heisenberg => observable_taylor(system, state, field, v, k_max),
        TaylorEngine::StateTaylor => expectation_taylor(system, state, field, v, k_max),
    }
}

/// `q⁽ᵏ⁾` on the box nodes, `k = 0..=k_max`.
pub fn q_expectation_taylor(
    system: &ManyBodySystem,
    state: &QuantumState,
    v: &TaylorField,
    k_max: usize,
    engine: TaylorEngine,
) -> Result<TaylorField> {
    run(engine, system, state, &OperatorField::q(system), v, k_max)
}

/// `b⁽ᵏ⁾` on the box faces (zero at the walls), `k = 0..=k_max`.
pub fn bond_density_taylor(
    system: &ManyBodySystem,
    state: &QuantumState,
    v: &TaylorField,
    k_max: usize,
    engine: TaylorEngine,
) -> Result<TaylorField> {
    let bonds = run(engine, system, state, &OperatorField::bond_density(system), v, k_max)?;
    Ok(bonds.map(bonds_to_faces))
}
