//! The forward chain: normalize, single upper-sideband modulation, and the
//! full file-to-file pipeline.

use crate::analytic::analytic_signal;
use crate::audio::{AudioBuffer, ModulationParams};
use crate::fir::{low_pass, resample_to};
use crate::window::tukey_window;
use crate::DspError;
use std::f64::consts::TAU;

/// Scales so the largest absolute sample equals `target`. Silence comes back
/// unchanged — there is nothing to scale against.
pub fn normalize_peak(audio: &AudioBuffer, target: f64) -> Result<AudioBuffer, DspError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(DspError::InvalidParams(format!(
            "peak target {target} outside (0, 1]"
        )));
    }
    let peak = audio.peak();
    if peak == 0.0 {
        return Ok(audio.clone());
    }
    let gain = target / peak;
    Ok(audio.with_samples(audio.samples.iter().map(|s| s * gain).collect()))
}

/// Single upper-sideband modulation: `s[n] = m[n]·cos(ω n) − m̂[n]·sin(ω n)`
/// with `m̂` the Hilbert companion of `m`. A message occupying [0, B] moves
/// to [f_c, f_c + B]; nothing lands below the carrier, which is what keeps
/// the payload out of the audible range.
pub fn ssb_modulate(audio: &AudioBuffer, carrier_hz: f64) -> Result<AudioBuffer, DspError> {
    let nyquist = f64::from(audio.sample_rate) / 2.0;
    if !(carrier_hz > 0.0) || carrier_hz >= nyquist {
        return Err(DspError::Nyquist {
            what: "carrier",
            required_hz: carrier_hz,
            nyquist_hz: nyquist,
        });
    }
    if audio.len() < 2 {
        return Ok(audio.clone());
    }

    let analytic = analytic_signal(&audio.samples);
    let step = TAU * carrier_hz / f64::from(audio.sample_rate);
    let samples = analytic
        .iter()
        .enumerate()
        .map(|(n, a)| {
            let phase = step * n as f64;
            a.re * phase.cos() - a.im * phase.sin()
        })
        .collect();
    Ok(audio.with_samples(samples))
}

/// Full payload generation, in the published stage order: raise the rate to
/// 48 kHz when the recording is slower, band-limit, normalize, shift onto
/// the carrier, taper with the Tukey window, and normalize again.
/// Quantization happens when the result is written as PCM.
pub fn modulate_pipeline(
    audio: &AudioBuffer,
    params: &ModulationParams,
) -> Result<AudioBuffer, DspError> {
    const TARGET_RATE: u32 = 48_000;
    let audio = if audio.sample_rate < TARGET_RATE {
        resample_to(audio, TARGET_RATE)?
    } else {
        audio.clone()
    };
    params.validate(audio.sample_rate)?;
    if audio.is_empty() {
        return Ok(audio);
    }

    let band_limited = low_pass(&audio, params.cutoff_hz, params.filter_taps)?;
    let leveled = normalize_peak(&band_limited, params.peak_target)?;
    let shifted = ssb_modulate(&leveled, params.carrier_hz)?;

    let window = tukey_window(shifted.len().max(2), params.tukey_alpha);
    let tapered: Vec<f64> = shifted
        .samples
        .iter()
        .zip(&window)
        .map(|(s, w)| s * w)
        .collect();
    normalize_peak(&shifted.with_samples(tapered), params.peak_target)
}
