//! Periodogram measurements used by the tests and the CLI reports.

use crate::audio::AudioBuffer;
use crate::DspError;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One-sided power spectrum: `(bin width in Hz, per-bin power)`. Power is
/// |X[k]|² without normalization — every consumer here takes ratios, so a
/// common scale factor would cancel anyway.
pub fn periodogram(audio: &AudioBuffer) -> (f64, Vec<f64>) {
    let n = audio.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let mut buf: Vec<Complex<f64>> = audio
        .samples
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    let power = buf[..bins].iter().map(|c| c.norm_sqr()).collect();
    (f64::from(audio.sample_rate) / n as f64, power)
}

/// Frequency and power of the strongest periodogram bin.
pub fn dominant_frequency(audio: &AudioBuffer) -> (f64, f64) {
    let (bin_hz, power) = periodogram(audio);
    let (index, &peak) = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap_or((0, &0.0));
    (index as f64 * bin_hz, peak)
}

/// Ratio of spectral energy inside [`f_lo`, `f_hi`] to the energy outside,
/// in decibels. Positive means the band dominates. All-zero input has no
/// defined ratio and is reported as [`DspError::ZeroEnergy`]; a band holding
/// everything (zero outside) returns +infinity.
pub fn band_energy_ratio(audio: &AudioBuffer, f_lo: f64, f_hi: f64) -> Result<f64, DspError> {
    let nyquist = f64::from(audio.sample_rate) / 2.0;
    if !(0.0..nyquist + 1e-9).contains(&f_lo) || f_hi <= f_lo || f_hi > nyquist + 1e-9 {
        return Err(DspError::InvalidParams(format!(
            "band [{f_lo}, {f_hi}] is not an ascending range within [0, {nyquist}]"
        )));
    }
    let (bin_hz, power) = periodogram(audio);
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (i, p) in power.iter().enumerate() {
        let freq = i as f64 * bin_hz;
        if freq >= f_lo && freq <= f_hi {
            inside += p;
        } else {
            outside += p;
        }
    }
    if inside + outside == 0.0 {
        return Err(DspError::ZeroEnergy);
    }
    Ok(10.0 * (inside / outside).log10())
}
