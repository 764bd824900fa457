//! Thin aliases over `libm` so the crate stays `no_std` without sprinkling
//! `libm::` call sites everywhere.

pub use libm::{cos, exp, fabs as abs, floor, log as ln, log2, sin, sqrt};

/// Round to nearest integer, ties away from zero (ties up for nonnegative
/// inputs, which is the only case the pixel paths produce).
#[inline]
pub fn round_half_up(x: f64) -> f64 {
    floor(x + 0.5)
}

/// Clamp a real intensity to [0, 255] and round (nearest, ties up).
#[inline]
pub fn to_intensity(x: f64) -> u8 {
    let r = round_half_up(x);
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += x * y;
    }
    s
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// Squared Euclidean distance between two equal-length rows.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Mean and population standard deviation (divide by N, defined for N = 1).
pub fn mean_pop_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, sqrt(var))
}
