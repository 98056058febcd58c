//! Analytic-signal construction (the Hilbert companion of a real signal).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Returns the analytic signal of `x`: a complex sequence whose real part is
/// `x` and whose imaginary part is the Hilbert transform of `x`.
///
/// Built in the frequency domain — zero the negative-frequency bins, double
/// the positive ones, and keep DC (and Nyquist, for even lengths) untouched.
/// On a finite buffer this is exact, which makes it a clean oracle for the
/// sideband math: single-sideband modulation multiplies this sequence onto
/// a complex carrier and takes the real part.
///
/// Panics if `x.len() < 2`; a one-sample signal has no spectrum to halve.
pub fn analytic_signal(x: &[f64]) -> Vec<Complex<f64>> {
    let n = x.len();
    assert!(n >= 2, "analytic signal needs at least two samples");

    let mut planner = FftPlanner::new();
    let mut spectrum: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spectrum);

    // One-sided doubling: bins 1..n/2 (exclusive of Nyquist when n is even)
    // carry the positive frequencies.
    let positive_end = n.div_ceil(2);
    for bin in spectrum.iter_mut().take(positive_end).skip(1) {
        *bin *= 2.0;
    }
    for bin in spectrum.iter_mut().skip(if n % 2 == 0 { n / 2 + 1 } else { positive_end }) {
        *bin = Complex::new(0.0, 0.0);
    }

    planner.plan_fft_inverse(n).process(&mut spectrum);
    let scale = 1.0 / n as f64;
    for bin in &mut spectrum {
        *bin *= scale;
    }
    spectrum
}
