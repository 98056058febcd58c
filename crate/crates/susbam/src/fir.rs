//! Windowed-sinc filtering and rate conversion.

use crate::audio::AudioBuffer;
use crate::DspError;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn hamming(i: usize, n: usize) -> f64 {
    0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
}

/// Hamming-windowed sinc low-pass prototype with unity DC gain.
fn design_low_pass(cutoff_hz: f64, sample_rate: u32, taps: usize) -> Vec<f64> {
    let half = (taps / 2) as isize;
    let normalized = 2.0 * cutoff_hz / f64::from(sample_rate);
    let mut kernel: Vec<f64> = (0..taps)
        .map(|i| {
            let offset = i as isize - half;
            normalized * sinc(normalized * offset as f64) * hamming(i, taps)
        })
        .collect();
    let gain: f64 = kernel.iter().sum();
    for coefficient in &mut kernel {
        *coefficient /= gain;
    }
    kernel
}

/// Full linear convolution via FFT; output length is `x.len() + k.len() − 1`.
fn fft_convolve(x: &[f64], k: &[f64]) -> Vec<f64> {
    let out_len = x.len() + k.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();

    let mut a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(size, Complex::new(0.0, 0.0));
    let mut b: Vec<Complex<f64>> = k.iter().map(|&v| Complex::new(v, 0.0)).collect();
    b.resize(size, Complex::new(0.0, 0.0));

    let forward = planner.plan_fft_forward(size);
    forward.process(&mut a);
    forward.process(&mut b);
    for (lhs, rhs) in a.iter_mut().zip(&b) {
        *lhs *= rhs;
    }
    planner.plan_fft_inverse(size).process(&mut a);

    let scale = 1.0 / size as f64;
    a.truncate(out_len);
    a.iter().map(|c| c.re * scale).collect()
}

/// Zero-phase low-pass: linear-phase windowed-sinc filtering with the group
/// delay trimmed off, so features stay aligned with the input. Output length
/// equals input length.
pub fn low_pass(
    audio: &AudioBuffer,
    cutoff_hz: f64,
    taps: usize,
) -> Result<AudioBuffer, DspError> {
    let nyquist = f64::from(audio.sample_rate) / 2.0;
    if !(cutoff_hz > 0.0) || cutoff_hz >= nyquist {
        return Err(DspError::Nyquist {
            what: "low-pass cutoff",
            required_hz: cutoff_hz,
            nyquist_hz: nyquist,
        });
    }
    if taps < 3 || taps % 2 == 0 {
        return Err(DspError::InvalidParams(format!(
            "filter_taps {taps} must be odd and at least 3"
        )));
    }
    if audio.is_empty() {
        return Ok(audio.clone());
    }

    let kernel = design_low_pass(cutoff_hz, audio.sample_rate, taps);
    let full = fft_convolve(&audio.samples, &kernel);
    let delay = taps / 2;
    let samples = full[delay..delay + audio.len()].to_vec();
    Ok(audio.with_samples(samples))
}

/// Windowed-sinc interpolation to a higher rate; passing the current rate
/// returns a clone. Downsampling is out of scope for this pipeline (the
/// caller only ever raises low-rate recordings to 48 kHz), so it is
/// rejected rather than silently aliasing.
pub fn resample_to(audio: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, DspError> {
    if target_rate == audio.sample_rate {
        return Ok(audio.clone());
    }
    if target_rate < audio.sample_rate {
        return Err(DspError::InvalidParams(format!(
            "resample_to only raises rates ({} -> {target_rate})",
            audio.sample_rate
        )));
    }
    if audio.is_empty() {
        return Ok(AudioBuffer {
            samples: Vec::new(),
            sample_rate: target_rate,
        });
    }

    // Interpolate at input-sample positions t = n·fs_in/fs_out with a
    // Hamming-windowed sinc kernel. The kernel weights are renormalized per
    // output sample so truncation at the buffer edges cannot droop the gain.
    const HALF_WIDTH: isize = 64;
    let ratio = f64::from(audio.sample_rate) / f64::from(target_rate);
    let out_len = ((audio.len() as f64) / ratio).ceil() as usize;
    let input = &audio.samples;

    let samples = (0..out_len)
        .map(|n| {
            let center = n as f64 * ratio;
            let base = center.floor() as isize;
            let mut acc = 0.0;
            let mut weight_sum = 0.0;
            for k in (base - HALF_WIDTH + 1)..=(base + HALF_WIDTH) {
                if k < 0 || k as usize >= input.len() {
                    continue;
                }
                let offset = center - k as f64;
                // Hamming over the kernel span, expressed on [-1, 1].
                let window = 0.54 + 0.46 * (PI * offset / HALF_WIDTH as f64).cos();
                let weight = sinc(offset) * window;
                acc += input[k as usize] * weight;
                weight_sum += weight;
            }
            acc / weight_sum
        })
        .collect();

    Ok(AudioBuffer {
        samples,
        sample_rate: target_rate,
    })
}
