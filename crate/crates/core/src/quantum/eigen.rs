//! Ground states by restarted Lanczos iteration.

use nalgebra::{DMatrix, SymmetricEigen};

use super::sparse::C64;
use super::system::Hamiltonian;
use super::QuantumState;
use crate::error::{Error, Result};

const KRYLOV_DIM: usize = 80;
const MAX_RESTARTS: usize = 200;

#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub state: QuantumState,
    /// `‖Ĥψ − Eψ‖₂` of the returned state.
    pub residual: f64,
    pub restarts: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

/// Lowest eigenpair of a real Hamiltonian to residual `tol`.
///
/// The kinetic hopping is non-positive, so the ground state is nodeless and a
/// positive start vector always overlaps with it.
pub fn ground_state(h: &Hamiltonian<'_>, tol: f64) -> Result<GroundState> {
    let dim = h.dim();
    let krylov = KRYLOV_DIM.min(dim);
    let mut start: Vec<f64> = (0..dim).map(|i| 1.0 + 1e-3 * ((i % 7) as f64)).collect();
    normalize(&mut start);
    let mut w = vec![0.0; dim];
    let mut history = Vec::new();

    for restart in 0..MAX_RESTARTS {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::with_capacity(krylov);
        let mut beta: Vec<f64> = Vec::with_capacity(krylov);
        for j in 0..krylov {
            h.apply_real(&basis[j], &mut w);
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            // full reorthogonalization, twice for stability
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            if j + 1 == krylov {
                break;
            }
            let b = dot(&w, &w).sqrt();
            if b < 1e-14 {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (idx, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty Krylov space");
        let mut y = vec![0.0; dim];
        for (k, q) in basis.iter().take(m).enumerate() {
            let c = eig.eigenvectors[(k, idx)];
            y.iter_mut().zip(q).for_each(|(a, b)| *a += c * b);
        }
        normalize(&mut y);
        h.apply_real(&y, &mut w);
        let residual = w
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - theta * b).powi(2))
            .sum::<f64>()
            .sqrt();
        history.push(residual);
        if residual <= tol || m == dim {
            // fix the global sign so the state is positive
            if y.iter().sum::<f64>() < 0.0 {
                y.iter_mut().for_each(|x| *x = -*x);
            }
            let state = QuantumState::normalized(y.iter().map(|&x| C64::new(x, 0.0)).collect())?;
            return Ok(GroundState {
                energy: theta,
                state,
                residual,
                restarts: restart,
            });
        }
        start = y;
    }
    Err(Error::NonConvergence {
        solver: "Lanczos ground state",
        iterations: MAX_RESTARTS,
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}
