//! The shared verification grid for sampled "for all r > 0" inequalities.
//!
//! Closed-form small-gain and Ω-path conditions are stated for every positive
//! `r`. Where no algebraic decision procedure applies, the inequalities are
//! checked on a logarithmic grid spanning twelve decades, with strictness
//! enforced through a relative margin.

/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 100;

/// Lower endpoint of the verification grid.
pub const GRID_LO: f64 = 1e-6;

/// Upper endpoint of the verification grid.
pub const GRID_HI: f64 = 1e6;

/// Relative margin used to enforce strict inequalities on sampled data:
/// `lhs < rhs` is accepted when `lhs < rhs * (1 - STRICT_MARGIN)`.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Logarithmically spaced points on `[GRID_LO, GRID_HI]`.
///
/// The point count defaults to [`DEFAULT_GRID_POINTS`] and can be overridden
/// with the `TRIGNET_GRID_POINTS` environment variable (values below 2 are
/// ignored).
pub fn verification_grid() -> Vec<f64> {
    let points = std::env::var("TRIGNET_GRID_POINTS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&p| p >= 2)
        .unwrap_or(DEFAULT_GRID_POINTS);
    log_grid(GRID_LO, GRID_HI, points)
}

/// Logarithmically spaced points on `[lo, hi]` (both positive).
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (llo + (lhi - llo) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Strict-inequality test with the shared relative margin.
#[inline]
pub fn strictly_less(lhs: f64, rhs: f64) -> bool {
    lhs < rhs * (1.0 - STRICT_MARGIN)
}
