//! Recovery paths that prove the payload is intact: a coherent product
//! demodulator (what a deliberate receiver would run) and a square-law
//! envelope model (what a non-linear microphone front-end does implicitly).

use crate::audio::AudioBuffer;
use crate::fir::low_pass;
use crate::DspError;
use std::f64::consts::TAU;

/// Coherent demodulation: multiply by `2·cos(2π f_c n/fs)` and low-pass at
/// `cutoff_hz`. For an upper-sideband signal this lands the message back at
/// baseband with unit gain; the double-frequency image is removed by the
/// filter.
pub fn demodulate_coherent(
    audio: &AudioBuffer,
    carrier_hz: f64,
    cutoff_hz: f64,
    taps: usize,
) -> Result<AudioBuffer, DspError> {
    let nyquist = f64::from(audio.sample_rate) / 2.0;
    if !(carrier_hz > 0.0) || carrier_hz >= nyquist {
        return Err(DspError::Nyquist {
            what: "demodulation carrier",
            required_hz: carrier_hz,
            nyquist_hz: nyquist,
        });
    }
    let step = TAU * carrier_hz / f64::from(audio.sample_rate);
    let product: Vec<f64> = audio
        .samples
        .iter()
        .enumerate()
        .map(|(n, s)| 2.0 * s * (step * n as f64).cos())
        .collect();
    low_pass(&audio.with_samples(product), cutoff_hz, taps)
}

/// Square-law demodulation: square each sample, low-pass at `cutoff_hz`,
/// subtract the mean. Squaring an upper-sideband signal produces the
/// instantaneous envelope power `(m² + m̂²)/2` at baseband plus an image at
/// twice the carrier; the filter keeps the former, and mean removal drops
/// the DC pedestal a microphone stage would block anyway.
pub fn demodulate_square_law(
    audio: &AudioBuffer,
    cutoff_hz: f64,
    taps: usize,
) -> Result<AudioBuffer, DspError> {
    let squared: Vec<f64> = audio.samples.iter().map(|s| s * s).collect();
    let filtered = low_pass(&audio.with_samples(squared), cutoff_hz, taps)?;
    let mean = if filtered.is_empty() {
        0.0
    } else {
        filtered.samples.iter().sum::<f64>() / filtered.len() as f64
    };
    Ok(filtered.with_samples(filtered.samples.iter().map(|s| s - mean).collect()))
}

/// Pearson correlation between two equal-length slices. Returns 0.0 when
/// either side has no variance — uncorrelated by convention, which is the
/// conservative answer for a recovery check.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "correlation needs equal lengths");
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return 0.0;
    }
    cov / (var_a * var_b).sqrt()
}

/// Relative L2 distance ‖a − b‖ / ‖b‖ between two equal-length slices, with
/// `b` as the reference. Infinite when the reference is all-zero but `a`
/// is not.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative L2 needs equal lengths");
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let reference: f64 = b.iter().map(|y| y * y).sum();
    if reference == 0.0 {
        if diff == 0.0 {
            return 0.0;
        }
        return f64::INFINITY;
    }
    (diff / reference).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::analytic_signal;
    use crate::audio::ModulationParams;
    use crate::modulate::{modulate_pipeline, normalize_peak, ssb_modulate};
    use crate::window::flat_region;
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: u32, seconds: f64, amplitude: f64) -> AudioBuffer {
        let n = (f64::from(rate) * seconds) as usize;
        let samples = (0..n)
            .map(|i| amplitude * (2.0 * PI * freq * i as f64 / f64::from(rate)).cos())
            .collect();
        AudioBuffer::new(samples, rate).unwrap()
    }

    #[test]
    fn coherent_round_trip_recovers_a_tone() {
        let params = ModulationParams::default();
        let input = tone(1_000.0, 48_000, 0.5, 0.7);
        let reference = crate::fir::low_pass(&input, params.cutoff_hz, params.filter_taps).unwrap();
        let modulated = modulate_pipeline(&input, &params).unwrap();
        let recovered =
            demodulate_coherent(&modulated, params.carrier_hz, params.cutoff_hz, params.filter_taps)
                .unwrap();
        let region = flat_region(recovered.len(), params.tukey_alpha);
        let corr = pearson_correlation(
            &recovered.samples[region.clone()],
            &reference.samples[region],
        );
        assert!(corr >= 0.99, "correlation {corr:.4}");
    }

    #[test]
    fn wrong_carrier_recovers_nothing() {
        let params = ModulationParams::default();
        let input = tone(1_000.0, 48_000, 0.5, 0.7);
        let reference = crate::fir::low_pass(&input, params.cutoff_hz, params.filter_taps).unwrap();
        let modulated = modulate_pipeline(&input, &params).unwrap();
        let recovered =
            demodulate_coherent(&modulated, 12_000.0, params.cutoff_hz, params.filter_taps)
                .unwrap();
        let region = flat_region(recovered.len(), params.tukey_alpha);
        let corr = pearson_correlation(
            &recovered.samples[region.clone()],
            &reference.samples[region],
        );
        assert!(corr.abs() < 0.2, "correlation {corr:.4}");
    }

    #[test]
    fn demodulating_silence_is_silence() {
        let silent = AudioBuffer::new(vec![0.0; 4_096], 48_000).unwrap();
        let coherent = demodulate_coherent(&silent, 16_000.0, 6_000.0, 511).unwrap();
        assert!(coherent.samples.iter().all(|&s| s == 0.0));
        let square = demodulate_square_law(&silent, 6_000.0, 511).unwrap();
        assert!(square.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn square_law_on_a_pure_carrier_tone_is_flat() {
        // An SSB signal carrying a single tone is itself a single tone; its
        // squared envelope is constant, so after mean removal almost nothing
        // remains.
        let ssb_tone = tone(17_000.0, 48_000, 0.5, 0.8);
        let out = demodulate_square_law(&ssb_tone, 6_000.0, 511).unwrap();
        let interior = 2_000..out.len() - 2_000;
        let residual_rms = (out.samples[interior.clone()]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            / interior.len() as f64)
            .sqrt();
        // Pre-removal level is the envelope power A²/2.
        let level = 0.8 * 0.8 / 2.0;
        assert!(
            residual_rms <= 1e-2 * level,
            "residual {residual_rms:.2e} vs level {level:.2e}"
        );
    }

    #[test]
    fn square_law_matches_the_envelope_identity() {
        // Message: seeded noise confined to 3 kHz so the squared signal's
        // 2·f_c image folds no lower than 10 kHz, far above the 6 kHz
        // recovery filter. The square-law output must then equal the
        // low-passed, mean-removed (m² + m̂²)/2 computed from the analytic
        // signal of the same message.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<f64> = (0..24_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise = AudioBuffer::new(raw, 48_000).unwrap();
        let message = normalize_peak(
            &crate::fir::low_pass(&noise, 3_000.0, 511).unwrap(),
            0.9,
        )
        .unwrap();

        let modulated = ssb_modulate(&message, 16_000.0).unwrap();
        let recovered = demodulate_square_law(&modulated, 6_000.0, 511).unwrap();

        let analytic = analytic_signal(&message.samples);
        let envelope: Vec<f64> = analytic.iter().map(|a| a.norm_sqr() / 2.0).collect();
        let oracle = crate::fir::low_pass(&message.with_samples(envelope), 6_000.0, 511).unwrap();
        let interior = 2_000..recovered.len() - 2_000;
        let mean =
            oracle.samples[interior.clone()].iter().sum::<f64>() / interior.len() as f64;
        let centered: Vec<f64> = oracle.samples[interior.clone()]
            .iter()
            .map(|s| s - mean)
            .collect();
        // Re-center the recovered slice over the same interior so both sides
        // subtract the same region's mean.
        let rec_mean =
            recovered.samples[interior.clone()].iter().sum::<f64>() / interior.len() as f64;
        let rec_centered: Vec<f64> = recovered.samples[interior]
            .iter()
            .map(|s| s - rec_mean)
            .collect();
        let err = relative_l2(&rec_centered, &centered);
        assert!(err <= 1e-2, "relative L2 {err:.4}");
    }

    #[test]
    fn correlation_guards_degenerate_inputs() {
        assert_eq!(pearson_correlation(&[], &[]), 0.0);
        assert_eq!(pearson_correlation(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
        let x = [1.0, 2.0, 3.0];
        assert!((pearson_correlation(&x, &x) - 1.0).abs() < 1e-12);
        let y = [3.0, 2.0, 1.0];
        assert!((pearson_correlation(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_l2_handles_zero_reference() {
        assert_eq!(relative_l2(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(relative_l2(&[1.0, 0.0], &[0.0, 0.0]).is_infinite());
        assert!((relative_l2(&[1.0, 1.0], &[1.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
