//! Tapered-cosine (Tukey) window.

use std::f64::consts::PI;

/// Standard Tukey window: raised-cosine tapers covering a combined fraction
/// `alpha` of the length, flat at 1.0 in between. `alpha = 0` degenerates to
/// a rectangular window and `alpha = 1` to a Hann window. Endpoints are zero
/// whenever `alpha > 0`.
///
/// Panics if `n < 2` or `alpha` is outside [0, 1]; both are caller bugs, not
/// data-dependent conditions.
pub fn tukey_window(n: usize, alpha: f64) -> Vec<f64> {
    assert!(n >= 2, "window needs at least two points");
    assert!((0.0..=1.0).contains(&alpha), "alpha {alpha} outside [0, 1]");
    if alpha == 0.0 {
        return vec![1.0; n];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = i as f64 / last;
            if x < alpha / 2.0 {
                0.5 * (1.0 + (PI * (2.0 * x / alpha - 1.0)).cos())
            } else if x > 1.0 - alpha / 2.0 {
                0.5 * (1.0 + (PI * (2.0 * (1.0 - x) / alpha - 1.0)).cos())
            } else {
                1.0
            }
        })
        .collect()
}

/// Index range where `tukey_window(n, alpha)` is exactly flat (coefficient
/// 1.0). Demodulation comparisons restrict themselves to this span so taper
/// edges do not poison correlation measurements.
pub fn flat_region(n: usize, alpha: f64) -> std::ops::Range<usize> {
    if alpha == 0.0 {
        return 0..n;
    }
    let last = (n - 1) as f64;
    let lo = (alpha / 2.0 * last).ceil() as usize;
    let hi = ((1.0 - alpha / 2.0) * last).floor() as usize;
    lo..(hi + 1).min(n)
}
