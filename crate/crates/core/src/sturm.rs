//! Weighted Sturm–Liouville problems `∇·(c ∇v) = ζ` with homogeneous
//! Dirichlet data, their conjugate-gradient solution, and the Lax–Milgram /
//! classical-solvability diagnostics that accompany every solve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_floor, FluxOperator, Grid};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const HOELDER_PAIRS: usize = 10_000;
const POINCARE_TOL: f64 = 1e-10;

/// `∇·(c∇v) = ζ` on the nodes of `op`.
#[derive(Clone, Debug)]
pub struct SlProblem {
    op: FluxOperator,
    rhs: Vec<f64>,
}

impl SlProblem {
    /// Coefficient given at the nodes (faces use the arithmetic mean).
    pub fn from_density(grid: &Grid, n: &[f64], rhs: Vec<f64>, floor: f64) -> Result<Self> {
        let op = FluxOperator::weighted_divgrad(grid, n, floor)?;
        Self::new(op, rhs, floor)
    }

    /// Coefficient given on faces. Every face must satisfy the floor, except
    /// that one end face may be exactly zero (a closed, no-flux end).
    pub fn new(op: FluxOperator, rhs: Vec<f64>, floor: f64) -> Result<Self> {
        if rhs.len() != op.len() {
            return Err(Error::Dimension {
                context: "Sturm-Liouville right-hand side",
                expected: op.len(),
                got: rhs.len(),
            });
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Sturm-Liouville right-hand side"));
        }
        let faces = op.faces();
        let last = faces.len() - 1;
        let closed_left = faces[0] == 0.0;
        let closed_right = faces[last] == 0.0;
        if closed_left && closed_right {
            return Err(Error::Precondition(
                "both ends closed: the Dirichlet gauge is not fixed".into(),
            ));
        }
        let lo = usize::from(closed_left);
        let hi = if closed_right { last } else { last + 1 };
        check_floor(&faces[lo..hi], floor).map_err(|e| match e {
            Error::DensityFloor { min, index, floor } => Error::DensityFloor {
                min,
                index: index + lo,
                floor,
            },
            other => other,
        })?;
        Ok(Self { op, rhs })
    }

    pub fn operator(&self) -> &FluxOperator {
        &self.op
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }
}

/// Solvability report for one Sturm–Liouville problem.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlDiagnostics {
    /// Lower bound of the coefficient.
    pub m: f64,
    /// Upper bound of the coefficient.
    #[serde(rename = "M")]
    pub big_m: f64,
    /// Poincaré constant of the domain.
    pub lambda: f64,
    pub coercivity_c: f64,
    pub residual: f64,
    pub iterations: usize,
    pub hoelder_alpha: f64,
    pub hoelder_const: f64,
    pub c1_proxy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hoelder_r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coercivity_violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub continuity_violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classically_solvable: Option<bool>,
}

/// Solve with a zero initial guess.
pub fn solve_sl(problem: &SlProblem, tol: f64) -> Result<(Vec<f64>, SlDiagnostics)> {
    solve_sl_from(problem, tol, &vec![0.0; problem.op.len()])
}

/// Jacobi-preconditioned conjugate gradients on `-A v = -ζ`.
pub fn solve_sl_from(
    problem: &SlProblem,
    tol: f64,
    initial: &[f64],
) -> Result<(Vec<f64>, SlDiagnostics)> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive (got {tol})")));
    }
    let op = &problem.op;
    let m = op.len();
    let b: Vec<f64> = problem.rhs.iter().map(|z| -z).collect();
    let b_norm = norm(&b);

    let (lo, hi) = coefficient_bounds(op);
    let mut diag = SlDiagnostics {
        m: lo,
        big_m: hi,
        ..Default::default()
    };
    if b_norm == 0.0 {
        diag.residual = 0.0;
        return Ok((vec![0.0; m], diag));
    }

    let neg_apply = |v: &[f64]| -> Vec<f64> { op.apply(v).into_iter().map(|x| -x).collect() };
    let inv_diag: Vec<f64> = op.neg_diagonal().iter().map(|d| 1.0 / d).collect();

    let mut x = initial.to_vec();
    let ax = neg_apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 20 * m + 100;
    let mut history = Vec::new();
    let mut rel = norm(&r) / b_norm;
    history.push(rel);
    let mut iterations = 0;
    while rel > tol {
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                solver: "conjugate gradient",
                iterations,
                residual: rel,
                history,
            });
        }
        let ap = neg_apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        // recompute the true residual now and then to avoid drift
        if iterations % 50 == 0 {
            let ax = neg_apply(&x);
            for i in 0..m {
                r[i] = b[i] - ax[i];
            }
        }
        rel = norm(&r) / b_norm;
        history.push(rel);
        for i in 0..m {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    let ax = neg_apply(&x);
    let true_res: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    diag.residual = norm(&true_res) / b_norm;
    diag.iterations = iterations;
    Ok((x, diag))
}

fn coefficient_bounds(op: &FluxOperator) -> (f64, f64) {
    op.faces()
        .iter()
        .filter(|&&c| c > 0.0)
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &c| (lo.min(c), hi.max(c)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve the symmetric positive-definite tridiagonal system `T x = d`
/// (Thomas algorithm). `off[i]` couples rows `i` and `i + 1`.
pub fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Poincaré constant `λ = 1/sqrt(μ_min)` of the unit-coefficient Dirichlet
/// Laplacian, by inverse power iteration.
pub fn estimate_poincare(grid: &Grid) -> Result<f64> {
    let m = grid.len();
    let inv = 1.0 / (grid.h() * grid.h());
    let diag = vec![2.0 * inv; m];
    let off = vec![-inv; m.saturating_sub(1)];
    // a smooth positive start has a large overlap with the ground mode
    let mut u = grid.sample(|x| (x - grid.a()) * (grid.b() - x));
    let scale = norm(&u);
    u.iter_mut().for_each(|v| *v /= scale);
    let mut mu = 0.0;
    for _ in 0..500 {
        let w = solve_tridiagonal(&diag, &off, &u);
        let wn = norm(&w);
        let next = 1.0 / dot(&u, &w);
        u = w.into_iter().map(|v| v / wn).collect();
        if (next - mu).abs() <= POINCARE_TOL * next {
            return Ok(1.0 / next.sqrt());
        }
        mu = next;
    }
    Err(Error::NonConvergence {
        solver: "inverse power iteration",
        iterations: 500,
        residual: f64::NAN,
        history: Vec::new(),
    })
}

/// Sampled-pair estimate of the Hölder modulus `|ζ(x) - ζ(x')| <= h |x - x'|^α`.
///
/// Pair separations are stratified over logarithmic bins between `h` and a
/// quarter of the domain; the largest increment in each bin traces the modulus
/// of continuity, which is fitted by least squares in log-log form.
/// Returns `(α, h, r²)`.
pub fn estimate_hoelder(grid: &Grid, zeta: &[f64], pairs: usize, seed: u64) -> (f64, f64, f64) {
    let m = zeta.len();
    let h = grid.h();
    let max_sep = (m / 4).max(2);
    let bins = 12usize;
    let edges: Vec<f64> = (0..=bins)
        .map(|b| (max_sep as f64).powf(b as f64 / bins as f64))
        .collect();
    let mut best = vec![0.0_f64; bins];
    let mut dist = vec![0.0_f64; bins];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let bin = rng.gen_range(0..bins);
        let lo = edges[bin].ceil() as usize;
        let hi = (edges[bin + 1].floor() as usize).max(lo);
        if hi >= m {
            continue;
        }
        let sep = rng.gen_range(lo..=hi);
        let i = rng.gen_range(0..m - sep);
        let dz = (zeta[i + sep] - zeta[i]).abs();
        if dz > best[bin] {
            best[bin] = dz;
            dist[bin] = sep as f64 * h;
        }
    }
    let pts: Vec<(f64, f64)> = best
        .iter()
        .zip(&dist)
        .filter(|(z, _)| **z > 0.0)
        .map(|(z, d)| (d.ln(), z.ln()))
        .collect();
    if pts.len() < 2 {
        // constant field: trivially Lipschitz
        return (1.0, 0.0, 1.0);
    }
    let (slope, intercept, r2) = linear_fit(&pts);
    (slope, intercept.exp(), r2)
}

/// Ordinary least squares `y = slope * x + intercept`; returns `(slope, intercept, r²)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Lax–Milgram diagnostics for a coefficient on `grid` (faces of `op`) and a
/// right-hand side `zeta`. Never fails; violations are counted in the report.
pub fn check_lax_milgram(
    grid: &Grid,
    op: &FluxOperator,
    zeta: &[f64],
    trials: usize,
    seed: u64,
) -> SlDiagnostics {
    let (m, big_m) = coefficient_bounds(op);
    let lambda = estimate_poincare(grid).unwrap_or(f64::NAN);
    let c = m / (1.0 + lambda * lambda);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = op.len();
    let h = grid.h();
    let sobolev = |u: &[f64]| -> f64 {
        let grad: f64 = crate::grid::face_differences(u, h).iter().map(|d| d * d).sum();
        h * (u.iter().map(|v| v * v).sum::<f64>() + grad)
    };
    let mut coercive_bad = 0;
    let mut continuity_bad = 0;
    for _ in 0..trials.max(1) {
        let u: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let quu = op.bilinear(&u, &u);
        let nu = sobolev(&u);
        if quu < c * nu * (1.0 - 1e-12) {
            coercive_bad += 1;
        }
        let quw = op.bilinear(&u, &w).abs();
        if quw > big_m * (nu * sobolev(&w)).sqrt() * (1.0 + 1e-12) {
            continuity_bad += 1;
        }
    }

    let (alpha, hconst, r2) = estimate_hoelder(grid, zeta, HOELDER_PAIRS, seed ^ 0x5eed);
    let c1 = crate::grid::gradient(grid, zeta)
        .iter()
        .fold(0.0_f64, |a, g| a.max(g.abs()));
    let hoelder_ok = alpha > 0.0 && alpha < 1.0 && r2 >= 0.9;
    let lipschitz_ok = alpha >= 0.95 && c1.is_finite();

    SlDiagnostics {
        m,
        big_m,
        lambda,
        coercivity_c: c,
        residual: f64::NAN,
        iterations: 0,
        hoelder_alpha: alpha,
        hoelder_const: hconst,
        c1_proxy: c1,
        hoelder_r2: Some(r2),
        coercivity_violations: Some(coercive_bad),
        continuity_violations: Some(continuity_bad),
        trials: Some(trials.max(1)),
        classically_solvable: Some(hoelder_ok || lipschitz_ok),
    }
}

/// Solve and attach the Lax–Milgram report to the solver diagnostics.
pub fn solve_with_diagnostics(
    grid: &Grid,
    problem: &SlProblem,
    tol: f64,
    trials: usize,
    seed: u64,
) -> Result<(Vec<f64>, SlDiagnostics)> {
    let mut report = check_lax_milgram(grid, &problem.op, &problem.rhs, trials, seed);
    if !(report.coercivity_c > 0.0) {
        return Err(Error::Precondition(format!(
            "coercivity constant is not positive (c = {:.3e})",
            report.coercivity_c
        )));
    }
    let (v, solved) = solve_sl(problem, tol)?;
    report.residual = solved.residual;
    report.iterations = solved.iterations;
    Ok((v, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let g = Grid::new(0.0, 1.0, 31).unwrap();
        let p = SlProblem::from_density(&g, &vec![1.5; 31], vec![0.0; 31], 1e-8).unwrap();
        let (v, d) = solve_sl(&p, 1e-10).unwrap();
        assert!(v.iter().all(|x| x.abs() <= 1e-12));
        assert_eq!(d.iterations, 0);
    }

    #[test]
    fn poisson_with_constant_source_is_exact_on_quadratics() {
        let g = Grid::new(0.0, 1.0, 31).unwrap();
        let p = SlProblem::from_density(&g, &vec![1.0; 31], vec![1.0; 31], 1e-8).unwrap();
        let (v, d) = solve_sl(&p, 1e-13).unwrap();
        for (x, vi) in g.nodes().iter().zip(&v) {
            assert!((vi - 0.5 * (x * x - x)).abs() < 1e-12, "{vi} at {x}");
        }
        assert!(d.residual <= 1e-13);
    }

    #[test]
    fn manufactured_solution_recovered_exactly() {
        let g = Grid::new(0.0, 1.0, 63).unwrap();
        let n = g.sample(|x| 2.0 + x.cos());
        let op = FluxOperator::weighted_divgrad(&g, &n, 1e-8).unwrap();
        let exact = g.sample(|x| (PI * x).sin() * x * (1.0 - x));
        let zeta = op.apply(&exact);
        let p = SlProblem::new(op, zeta, 1e-8).unwrap();
        let (v, _) = solve_sl(&p, 1e-13).unwrap();
        let err = v.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9, "error {err}");
    }

    #[test]
    fn poincare_constant_on_unit_interval() {
        let g = Grid::new(0.0, 1.0, 199).unwrap();
        let lam = estimate_poincare(&g).unwrap();
        assert!((lam - 1.0 / PI).abs() < 1e-3, "{lam}");
        let g2 = Grid::new(0.0, 2.0, 199).unwrap();
        let lam2 = estimate_poincare(&g2).unwrap();
        assert!((lam2 - 2.0 / PI).abs() < 2e-3, "{lam2}");
    }

    #[test]
    fn poincare_converges_second_order() {
        let lam = |m| estimate_poincare(&Grid::new(0.0, 1.0, m).unwrap()).unwrap();
        let (l1, l2, l3) = (lam(15), lam(31), lam(63));
        let ratio = (l2 - l1) / (l3 - l2);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lax_milgram_unit_coefficient() {
        let g = Grid::new(0.0, 1.0, 63).unwrap();
        let op = FluxOperator::unit(&g);
        let zeta = g.sample(|x| x.sin());
        let d = check_lax_milgram(&g, &op, &zeta, 100, 3);
        assert_eq!(d.m, 1.0);
        assert_eq!(d.big_m, 1.0);
        assert_relative_eq!(d.coercivity_c, 1.0 / (1.0 + 1.0 / (PI * PI)), max_relative = 1e-3);
        assert_eq!(d.coercivity_violations, Some(0));
        assert_eq!(d.continuity_violations, Some(0));
    }

    #[test]
    fn lax_milgram_bounds_from_coefficient_range() {
        let g = Grid::new(0.0, 1.0, 9).unwrap();
        let faces = vec![0.5, 1.0, 2.0, 1.0, 0.7, 0.9, 1.2, 1.1, 0.6, 0.8];
        let op = FluxOperator::from_faces(g.h(), faces).unwrap();
        let d = check_lax_milgram(&g, &op, &[1.0; 9], 10, 1);
        assert_eq!(d.m, 0.5);
        assert_eq!(d.big_m, 2.0);
        assert_relative_eq!(d.coercivity_c, 0.5 / (1.0 + d.lambda * d.lambda));
    }

    #[test]
    fn hoelder_exponent_of_square_root_cusp() {
        let g = Grid::new(0.0, 1.0, 399).unwrap();
        let x0 = g.x(200);
        let zeta = g.sample(|x| (x - x0).abs().sqrt());
        let (alpha, _, _) = estimate_hoelder(&g, &zeta, HOELDER_PAIRS, 11);
        assert!((alpha - 0.5).abs() <= 0.1, "alpha {alpha}");
    }

    #[test]
    fn smooth_rhs_is_lipschitz() {
        let g = Grid::new(0.0, 1.0, 99).unwrap();
        let zeta = g.sample(|x| (3.0 * x).sin());
        let (alpha, _, _) = estimate_hoelder(&g, &zeta, HOELDER_PAIRS, 5);
        assert!(alpha > 0.9, "alpha {alpha}");
    }

    #[test]
    fn closed_end_is_accepted_but_not_both() {
        let faces = vec![1.0, 1.0, 1.0, 0.0];
        let op = FluxOperator::from_faces(0.1, faces).unwrap();
        // consistent rhs is not required with one open end
        let p = SlProblem::new(op, vec![1.0, -2.0, 0.5], 1e-8).unwrap();
        let (v, _) = solve_sl(&p, 1e-12).unwrap();
        let back = p.operator().apply(&v);
        for (a, b) in back.iter().zip(p.rhs()) {
            assert!((a - b).abs() < 1e-9);
        }
        let op = FluxOperator::from_faces(0.1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(SlProblem::new(op, vec![0.0; 3], 1e-8).is_err());
    }

    #[test]
    fn floor_violation_reported() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        let n = vec![1.0, 1.0, 1e-9, 1.0, 1.0];
        assert!(matches!(
            SlProblem::from_density(&g, &n, vec![0.0; 5], 1e-8),
            Err(Error::DensityFloor { .. })
        ));
    }
}
