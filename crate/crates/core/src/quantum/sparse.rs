//! Row-compressed complex operators on the many-body basis.
//!
//! Nested commutators of local operators with a nearest-neighbour kinetic
//! term stay sparse, so the Heisenberg recursion never forms dense matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    dim: usize,
    /// Sorted `(column, value)` pairs per row.
    rows: Vec<Vec<(u32, C64)>>,
}

/// Dense scratch row used to accumulate sparse row combinations.
struct RowAccumulator {
    values: Vec<C64>,
    touched: Vec<u32>,
    flag: Vec<bool>,
}

impl RowAccumulator {
    fn new(dim: usize) -> Self {
        Self {
            values: vec![ZERO; dim],
            touched: Vec::new(),
            flag: vec![false; dim],
        }
    }

    #[inline]
    fn add(&mut self, col: u32, v: C64) {
        let c = col as usize;
        if !self.flag[c] {
            self.flag[c] = true;
            self.touched.push(col);
        }
        self.values[c] += v;
    }

    fn drain(&mut self, drop_below: f64) -> Vec<(u32, C64)> {
        self.touched.sort_unstable();
        let mut out = Vec::with_capacity(self.touched.len());
        for &c in &self.touched {
            let v = self.values[c as usize];
            if v.norm_sqr() > drop_below * drop_below {
                out.push((c, v));
            }
            self.values[c as usize] = ZERO;
            self.flag[c as usize] = false;
        }
        self.touched.clear();
        out
    }
}

impl SparseOp {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self {
            dim: d.len(),
            rows: d
                .iter()
                .enumerate()
                .map(|(i, &v)| if v != 0.0 { vec![(i as u32, C64::new(v, 0.0))] } else { Vec::new() })
                .collect(),
        }
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut per_row: Vec<Vec<(u32, C64)>> = vec![Vec::new(); dim];
        for (r, c, v) in triplets {
            per_row[r].push((c as u32, v));
        }
        let mut acc = RowAccumulator::new(dim);
        let rows = per_row
            .into_iter()
            .map(|row| {
                for (c, v) in row {
                    acc.add(c, v);
                }
                acc.drain(0.0)
            })
            .collect();
        Self { dim, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn row(&self, i: usize) -> &[(u32, C64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match self.rows[i].binary_search_by_key(&(j as u32), |e| e.0) {
            Ok(k) => self.rows[i][k].1,
            Err(_) => ZERO,
        }
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().map(|&(c, v)| v * x[c as usize]).sum();
        }
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, psi: &[C64]) -> C64 {
        self.rows
            .iter()
            .zip(psi)
            .map(|(row, pi)| pi.conj() * row.iter().map(|&(c, v)| v * psi[c as usize]).sum::<C64>())
            .sum()
    }

    /// `⟨φ|A|ψ⟩`.
    pub fn matrix_element(&self, phi: &[C64], psi: &[C64]) -> C64 {
        self.rows
            .iter()
            .zip(phi)
            .map(|(row, pi)| pi.conj() * row.iter().map(|&(c, v)| v * psi[c as usize]).sum::<C64>())
            .sum()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            rows: self
                .rows
                .iter()
                .map(|row| row.iter().map(|&(c, v)| (c, v * s)).collect())
                .collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &SparseOp, s: C64) -> Self {
        let mut acc = RowAccumulator::new(self.dim);
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                for &(c, v) in a {
                    acc.add(c, v);
                }
                for &(c, v) in b {
                    acc.add(c, s * v);
                }
                acc.drain(0.0)
            })
            .collect();
        Self { dim: self.dim, rows }
    }

    pub fn adjoint(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                trip.push((c as usize, r, v.conj()));
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    /// Largest `|A - A†|` entry relative to the largest `|A|` entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self
            .rows
            .iter()
            .flat_map(|r| r.iter().map(|e| e.1.norm()))
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                let t = self.get(c as usize, r).conj();
                worst = worst.max((v - t).norm());
            }
        }
        worst / scale
    }

    /// `[D, A]` for a diagonal operator `D = diag(d)`.
    pub fn commutator_with_diagonal(&self, d: &[f64]) -> Self {
        Self {
            dim: self.dim,
            rows: self
                .rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    row.iter()
                        .filter_map(|&(c, v)| {
                            let w = d[r] - d[c as usize];
                            (w != 0.0).then(|| (c, v * w))
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// `[H, A]` for a general sparse `H`.
    pub fn commutator_with(&self, h: &SparseOp) -> Self {
        let mut acc = RowAccumulator::new(self.dim);
        let rows = (0..self.dim)
            .map(|r| {
                // (H A)_r = sum_c H_rc A_c
                for &(c, hv) in &h.rows[r] {
                    for &(k, av) in &self.rows[c as usize] {
                        acc.add(k, hv * av);
                    }
                }
                // (A H)_r = sum_c A_rc H_c
                for &(c, av) in &self.rows[r] {
                    for &(k, hv) in &h.rows[c as usize] {
                        acc.add(k, -av * hv);
                    }
                }
                acc.drain(1e-300)
            })
            .collect();
        Self { dim: self.dim, rows }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.dim, self.dim, ZERO);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c as usize)] = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample(dim: usize, seed: u64) -> SparseOp {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        let mut trip = Vec::new();
        for r in 0..dim {
            for cc in 0..dim {
                if (r + 2 * cc) % 3 == 0 {
                    trip.push((r, cc, c(next(), next())));
                }
            }
        }
        SparseOp::from_triplets(dim, trip)
    }

    #[test]
    fn commutator_matches_dense() {
        let a = sample(7, 1);
        let h = sample(7, 2);
        let comm = a.commutator_with(&h).to_dense();
        let (ad, hd) = (a.to_dense(), h.to_dense());
        let dense = &hd * &ad - &ad * &hd;
        assert!((comm - dense).norm() < 1e-13);
    }

    #[test]
    fn diagonal_commutator_matches_general() {
        let a = sample(6, 3);
        let d = [0.3, -1.0, 2.0, 0.0, 0.5, 1.5];
        let fast = a.commutator_with_diagonal(&d).to_dense();
        let slow = a.commutator_with(&SparseOp::diagonal(&d)).to_dense();
        assert!((fast - slow).norm() < 1e-13);
    }

    #[test]
    fn expectation_and_adjoint() {
        let a = sample(5, 4);
        let herm = a.add_scaled(&a.adjoint(), c(1.0, 0.0));
        assert!(herm.hermiticity_defect() < 1e-15);
        let psi: Vec<C64> = (0..5).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        assert!(herm.expectation(&psi).im.abs() < 1e-12);
        let mut y = vec![ZERO; 5];
        a.matvec(&psi, &mut y);
        let direct: C64 = psi.iter().zip(&y).map(|(p, q)| p.conj() * q).sum();
        assert!((direct - a.expectation(&psi)).norm() < 1e-12);
    }
}
