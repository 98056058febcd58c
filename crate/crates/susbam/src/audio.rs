//! Sample buffers and the modulation parameter set.

use crate::DspError;

/// A mono signal: real-valued samples nominally in [−1, 1] plus the rate
/// they were captured at. Stages that can push samples outside the range
/// (filtering overshoot, modulation) are followed by normalization before
/// anything is quantized.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::InvalidParams("sample_rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(DspError::InvalidParams(format!("non-finite sample {bad}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Length in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Largest absolute sample, 0.0 for an empty buffer.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |acc, s| acc.max(s.abs()))
    }

    /// Same-rate buffer with different samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Knobs for the forward chain. Defaults follow the published pipeline: a
/// 6 kHz message band shifted onto a 16 kHz carrier occupies 16–22 kHz,
/// inaudible to adults yet inside a 48 kHz Nyquist budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationParams {
    /// Low-pass cutoff applied to the message before modulation, Hz.
    pub cutoff_hz: f64,
    /// Upper-sideband carrier, Hz.
    pub carrier_hz: f64,
    /// Tukey taper fraction; 0 is rectangular, 1 is a full Hann.
    pub tukey_alpha: f64,
    /// Peak level after each normalization pass.
    pub peak_target: f64,
    /// Windowed-sinc filter length; odd so the group delay is integral.
    pub filter_taps: usize,
}

impl Default for ModulationParams {
    fn default() -> Self {
        Self {
            cutoff_hz: 6_000.0,
            carrier_hz: 16_000.0,
            tukey_alpha: 0.05,
            peak_target: 0.9,
            filter_taps: 511,
        }
    }
}

impl ModulationParams {
    /// Checks the parameter ranges and that carrier + message band fit under
    /// the Nyquist frequency of `sample_rate`.
    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz.is_finite()) {
            return Err(DspError::InvalidParams("cutoff_hz must be positive".into()));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(DspError::InvalidParams("carrier_hz must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tukey_alpha) {
            return Err(DspError::InvalidParams(format!(
                "tukey_alpha {} outside [0, 1]",
                self.tukey_alpha
            )));
        }
        if !(self.peak_target > 0.0 && self.peak_target <= 1.0) {
            return Err(DspError::InvalidParams(format!(
                "peak_target {} outside (0, 1]",
                self.peak_target
            )));
        }
        if self.filter_taps < 3 || self.filter_taps % 2 == 0 {
            return Err(DspError::InvalidParams(format!(
                "filter_taps {} must be odd and at least 3",
                self.filter_taps
            )));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if self.carrier_hz + self.cutoff_hz > nyquist {
            return Err(DspError::Nyquist {
                what: "carrier plus message band",
                required_hz: self.carrier_hz + self.cutoff_hz,
                nyquist_hz: nyquist,
            });
        }
        Ok(())
    }
}
