//! Uniform 1D grids with homogeneous Dirichlet boundaries, finite-difference
//! stencils, the flux-form weighted Laplacian and the soft-core kernel.
//!
//! Node convention: a grid on `[a, b]` with `m` interior points has spacing
//! `h = (b - a) / (m + 1)` and nodes `x_i = a + (i + 1) h` for `i = 0..m`
//! (zero-based). Every field is implicitly zero at `a` and `b`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound for densities used as Sturm–Liouville coefficients.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    m: usize,
    h: f64,
}

impl Grid {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::config("grid", "endpoints must be finite"));
        }
        if b <= a {
            return Err(Error::config(
                "grid.b",
                format!("right endpoint {b} must exceed left endpoint {a}"),
            ));
        }
        if m < 3 {
            return Err(Error::config(
                "grid.M",
                format!("at least 3 interior points are required (got {m})"),
            ));
        }
        Ok(Self {
            a,
            b,
            m,
            h: (b - a) / (m as f64 + 1.0),
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn x(&self, i: usize) -> f64 {
        self.a + (i as f64 + 1.0) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.x(i)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.m).map(|i| f(self.x(i))).collect()
    }

    /// Rectangle-rule integral; exact for the lattice inner product.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.h * f.iter().sum::<f64>()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.h * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Grid with the same spacing extended by `margin` nodes on each side.
    pub fn extended(&self, margin: usize) -> Result<Self> {
        let pad = margin as f64 * self.h;
        let mut g = Grid::new(self.a - pad, self.b + pad, self.m + 2 * margin)?;
        g.h = self.h;
        Ok(g)
    }

    /// Grid on the same interval with the spacing halved.
    pub fn refined(&self) -> Result<Self> {
        Grid::new(self.a, self.b, 2 * self.m + 1)
    }

    pub fn check_field(&self, f: &[f64], what: &'static str) -> Result<()> {
        if f.len() != self.m {
            return Err(Error::Dimension {
                context: what,
                expected: self.m,
                got: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what));
        }
        Ok(())
    }
}

/// A sub-interval `Ω` of a larger simulation box sharing its nodes.
///
/// The box has `margin` extra nodes on each side of `Ω`; the nodes at the
/// ends of `Ω` are box nodes, so `margin >= 1` keeps `Ω` strictly inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    omega: Grid,
    grid: Grid,
    margin: usize,
}

impl Window {
    pub fn new(omega: Grid, margin: usize) -> Result<Self> {
        if margin < 1 {
            return Err(Error::config(
                "grid.box_margin",
                "the simulation box must strictly contain the domain (margin >= 1)",
            ));
        }
        let grid = omega.extended(margin)?;
        Ok(Self {
            omega,
            grid,
            margin,
        })
    }

    /// The domain on which Sturm–Liouville problems are posed.
    pub fn omega(&self) -> &Grid {
        &self.omega
    }

    /// The full simulation box.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    /// Box index of the first interior node of `Ω`.
    pub fn first(&self) -> usize {
        self.margin
    }

    /// Box indices of the two boundary nodes of `Ω`.
    pub fn boundary(&self) -> (usize, usize) {
        (self.margin - 1, self.margin + self.omega.len())
    }

    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        f[self.margin..self.margin + self.omega.len()].to_vec()
    }

    /// Zero extension of an `Ω` field to the box.
    pub fn extend(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        out[self.margin..self.margin + f.len()].copy_from_slice(f);
        out
    }

    /// Box faces `(boundary-1 .. boundary)` bounding the interior of `Ω`.
    pub fn restrict_faces(&self, box_faces: &[f64]) -> Vec<f64> {
        // box face j sits between box nodes j-1 and j
        box_faces[self.margin..self.margin + self.omega.len() + 1].to_vec()
    }
}

/// Taylor coefficients in time, `orders[k] = ∂ₜᵏ f |_{t0}` (not divided by k!).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaylorField {
    pub orders: Vec<Vec<f64>>,
}

impl TaylorField {
    pub fn new(orders: Vec<Vec<f64>>) -> Self {
        Self { orders }
    }

    pub fn zeros(len: usize, count: usize) -> Self {
        Self {
            orders: vec![vec![0.0; len]; count],
        }
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn order(&self, k: usize) -> &[f64] {
        &self.orders[k]
    }

    /// Coefficient `k`, or zero beyond the stored orders.
    pub fn order_or_zero(&self, k: usize, len: usize) -> Vec<f64> {
        self.orders.get(k).cloned().unwrap_or_else(|| vec![0.0; len])
    }

    pub fn push(&mut self, f: Vec<f64>) {
        self.orders.push(f);
    }

    pub fn truncated(&self, count: usize) -> Self {
        Self {
            orders: self.orders.iter().take(count).cloned().collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            orders: self.orders.iter().map(|o| f(o)).collect(),
        }
    }

    /// Sum of `orders[k] τᵏ / k!` with `τ = t - t0`.
    pub fn evaluate(&self, tau: f64) -> Vec<f64> {
        let len = self.orders.first().map_or(0, Vec::len);
        let mut out = vec![0.0; len];
        let mut weight = 1.0;
        for (k, c) in self.orders.iter().enumerate() {
            if k > 0 {
                weight *= tau / k as f64;
            }
            for (o, v) in out.iter_mut().zip(c) {
                *o += weight * v;
            }
        }
        out
    }
}

fn ghost(f: &[f64], i: isize) -> f64 {
    if i < 0 || i as usize >= f.len() {
        0.0
    } else {
        f[i as usize]
    }
}

/// Central difference with zero ghost values outside the grid.
pub fn gradient(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let inv = 0.5 / grid.h();
    (0..f.len() as isize)
        .map(|i| (ghost(f, i + 1) - ghost(f, i - 1)) * inv)
        .collect()
}

/// In one dimension the divergence is the derivative; same stencil as [`gradient`].
pub fn divergence(grid: &Grid, f: &[f64]) -> Vec<f64> {
    gradient(grid, f)
}

/// Symmetric tridiagonal flux-form operator
/// `(A v)_i = [c_{i+1/2}(v_{i+1} - v_i) - c_{i-1/2}(v_i - v_{i-1})] / h²`
/// with homogeneous Dirichlet ghosts. Face `j` sits between nodes `j-1` and `j`,
/// so there are `len + 1` faces.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxOperator {
    h: f64,
    faces: Vec<f64>,
}

impl FluxOperator {
    /// Build from nodal coefficients: interior faces take the arithmetic mean of
    /// the adjacent nodes, the two boundary faces the adjacent nodal value.
    pub fn weighted_divgrad(grid: &Grid, n: &[f64], floor: f64) -> Result<Self> {
        grid.check_field(n, "coefficient field")?;
        check_floor(n, floor)?;
        let m = n.len();
        let mut faces = Vec::with_capacity(m + 1);
        faces.push(n[0]);
        for i in 1..m {
            faces.push(0.5 * (n[i - 1] + n[i]));
        }
        faces.push(n[m - 1]);
        Ok(Self { h: grid.h(), faces })
    }

    /// Build from face coefficients directly. Faces must be finite and `>= 0`.
    pub fn from_faces(h: f64, faces: Vec<f64>) -> Result<Self> {
        if faces.len() < 2 {
            return Err(Error::Precondition(
                "flux operator needs at least one node".into(),
            ));
        }
        if faces.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("face coefficients"));
        }
        if let Some(j) = faces.iter().position(|&c| c < 0.0) {
            return Err(Error::DensityFloor {
                min: faces[j],
                index: j,
                floor: 0.0,
            });
        }
        Ok(Self { h, faces })
    }

    pub fn unit(grid: &Grid) -> Self {
        Self {
            h: grid.h(),
            faces: vec![1.0; grid.len() + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.faces.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply_with_boundary(v, 0.0, 0.0)
    }

    /// Apply with prescribed values beyond the left and right ends.
    pub fn apply_with_boundary(&self, v: &[f64], left: f64, right: f64) -> Vec<f64> {
        let m = self.len();
        debug_assert_eq!(v.len(), m);
        let inv = 1.0 / (self.h * self.h);
        (0..m)
            .map(|i| {
                let vl = if i == 0 { left } else { v[i - 1] };
                let vr = if i + 1 == m { right } else { v[i + 1] };
                (self.faces[i + 1] * (vr - v[i]) - self.faces[i] * (v[i] - vl)) * inv
            })
            .collect()
    }

    /// Diagonal of `-A`.
    pub fn neg_diagonal(&self) -> Vec<f64> {
        let inv = 1.0 / (self.h * self.h);
        (0..self.len())
            .map(|i| (self.faces[i] + self.faces[i + 1]) * inv)
            .collect()
    }

    /// Discrete bilinear form `Q(u, w) = ⟨∇u, c ∇w⟩` over all faces.
    pub fn bilinear(&self, u: &[f64], w: &[f64]) -> f64 {
        let du = face_differences(u, self.h);
        let dw = face_differences(w, self.h);
        self.h
            * self
                .faces
                .iter()
                .zip(du.iter().zip(&dw))
                .map(|(c, (a, b))| c * a * b)
                .sum::<f64>()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.len();
        let inv = 1.0 / (self.h * self.h);
        DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                -(self.faces[i] + self.faces[i + 1]) * inv
            } else if j == i + 1 {
                self.faces[i + 1] * inv
            } else if i == j + 1 {
                self.faces[i] * inv
            } else {
                0.0
            }
        })
    }
}

/// `∇·(c∇v)` for arbitrary (possibly signed) face coefficients `c` and zero
/// ghosts; used for time derivatives of coefficients, which carry no sign.
pub fn flux_divergence(h: f64, faces: &[f64], v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(faces.len(), v.len() + 1);
    let d = face_differences(v, h);
    (0..v.len())
        .map(|i| (faces[i + 1] * d[i + 1] - faces[i] * d[i]) / h)
        .collect()
}

/// Forward differences across all `len + 1` faces with zero ghosts.
pub fn face_differences(u: &[f64], h: f64) -> Vec<f64> {
    let m = u.len();
    (0..=m)
        .map(|j| {
            let right = if j < m { u[j] } else { 0.0 };
            let left = if j > 0 { u[j - 1] } else { 0.0 };
            (right - left) / h
        })
        .collect()
}

pub fn check_floor(n: &[f64], floor: f64) -> Result<()> {
    let (index, min) = n
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if min < floor || !min.is_finite() {
        return Err(Error::DensityFloor { min, index, floor });
    }
    Ok(())
}

/// Soft-core pair interaction `g / sqrt((x - x')² + ε)`.
pub fn softcore(x: f64, xp: f64, epsilon: f64, strength: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::config(
            "system.interaction.epsilon",
            format!("soft-core parameter must be positive (got {epsilon}); the bare Coulomb kernel is excluded"),
        ));
    }
    let d = x - xp;
    Ok(strength / (d * d + epsilon).sqrt())
}
