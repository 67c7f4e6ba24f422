//! Small-time convergence-order fits.

use crate::error::{Error, Result};
use crate::sturm::linear_fit;

use super::report::{FloorModel, SlopeFit};

/// Errors above this value are outside the validity window.
pub const MAX_WINDOW_ERROR: f64 = 1e-2;
/// The window starts this many steps after `t0`.
pub const MIN_STEPS: f64 = 10.0;
/// A point enters the fit only when it exceeds the floor by this factor
/// (relaxed to `RELAXED_FLOOR_FACTOR` if too few points survive).
pub const FLOOR_FACTOR: f64 = 100.0;
pub const RELAXED_FLOOR_FACTOR: f64 = 10.0;
pub const MIN_POINTS: usize = 5;
/// Points are thinned to about this many, evenly spaced in `ln t`.
pub const FIT_SAMPLES: usize = 60;

/// Fit `ln e = p ln t + c` over `t ∈ [10 dt, T]`, where `T <= t_end` is
/// shrunk so that `e <= 10⁻²` throughout and points within `FLOOR_FACTOR`
/// of the discretization floor are dropped. `series` holds `(t − t0, e)`.
pub fn fit_slope(series: &[(f64, f64)], dt: f64, t_end: f64, floor: FloorModel) -> Result<SlopeFit> {
    let lower = MIN_STEPS * dt * (1.0 - 1e-9);
    let mut upper = t_end;
    let mut window_shrunk = false;
    for &(t, e) in series {
        if t > t_end * (1.0 + 1e-12) {
            break;
        }
        if !(e <= MAX_WINDOW_ERROR) {
            upper = t - dt;
            window_shrunk = true;
            break;
        }
    }
    for factor in [FLOOR_FACTOR, RELAXED_FLOOR_FACTOR] {
        let candidates: Vec<(f64, f64)> = series
            .iter()
            .copied()
            .filter(|&(t, e)| {
                t >= lower && t <= upper * (1.0 + 1e-12) && e > 0.0 && e >= factor * floor.at(t)
            })
            .collect();
        if candidates.len() < MIN_POINTS {
            continue;
        }
        let pts = log_thinned(&candidates);
        if pts.len() < MIN_POINTS {
            continue;
        }
        let logs: Vec<(f64, f64)> = pts.iter().map(|&(t, e)| (t.ln(), e.ln())).collect();
        let (slope, intercept, r_squared) = linear_fit(&logs);
        return Ok(SlopeFit {
            slope,
            intercept,
            r_squared,
            t_min: pts[0].0,
            t_max: pts[pts.len() - 1].0,
            points: pts.len(),
            window_shrunk,
            floor,
        });
    }
    Err(Error::Precondition(format!(
        "fewer than {MIN_POINTS} resolved points in the fit window [{lower:.3e}, {upper:.3e}]"
    )))
}

/// Pick the sample nearest to each of `FIT_SAMPLES` log-spaced times.
fn log_thinned(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if pts.len() <= FIT_SAMPLES {
        return pts.to_vec();
    }
    let (a, b) = (pts[0].0.ln(), pts[pts.len() - 1].0.ln());
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(FIT_SAMPLES);
    let mut cursor = 0;
    for s in 0..FIT_SAMPLES {
        let target = a + (b - a) * s as f64 / (FIT_SAMPLES - 1) as f64;
        while cursor + 1 < pts.len()
            && (pts[cursor + 1].0.ln() - target).abs() <= (pts[cursor].0.ln() - target).abs()
        {
            cursor += 1;
        }
        if out.last().is_none_or(|p| p.0 < pts[cursor].0) {
            out.push(pts[cursor]);
        }
    }
    out
}

/// Linear floor `rate · t` through the first sample, where truncation errors
/// of the measured order are still negligible.
pub fn linear_floor(series: &[(f64, f64)]) -> FloorModel {
    let rate = series
        .iter()
        .find(|p| p.0 > 0.0)
        .map_or(0.0, |&(t, e)| e / t);
    FloorModel::Linear { rate }
}

/// Constant floor at the error of the first positive-time sample.
pub fn constant_floor(series: &[(f64, f64)]) -> FloorModel {
    let level = series.iter().find(|p| p.0 > 0.0).map_or(0.0, |p| p.1);
    FloorModel::Constant { level }
}
