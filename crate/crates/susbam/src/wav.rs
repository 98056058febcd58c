//! Minimal RIFF/WAVE PCM-16 codec. Reading accepts mono or stereo (stereo
//! is averaged down); writing always emits the canonical 44-byte-header
//! mono form, so a golden fixture can be compared byte-for-byte.

use crate::audio::AudioBuffer;
use crate::DspError;
use std::path::Path;

const PCM_TAG: u16 = 1;
const FULL_SCALE: f64 = 32767.0;

/// Symmetric 16-bit quantization: scale by 32767, round half away from
/// zero, saturate. ±1.0 map to ±32767; out-of-range input clips instead of
/// wrapping.
pub fn quantize_pcm16(samples: &[f64]) -> Vec<i16> {
    samples
        .iter()
        .map(|&s| (s.clamp(-1.0, 1.0) * FULL_SCALE).round() as i16)
        .collect()
}

/// Inverse of [`quantize_pcm16`]. The one unreachable code (−32768) is
/// clamped so the output stays inside [−1, 1].
pub fn dequantize_pcm16(samples: &[i16]) -> Vec<f64> {
    samples
        .iter()
        .map(|&s| (f64::from(s) / FULL_SCALE).max(-1.0))
        .collect()
}

/// Serializes as canonical RIFF/WAVE: 44-byte header, PCM tag 1, 16 bits,
/// mono, little-endian, at the buffer's sample rate.
pub fn encode_wav(audio: &AudioBuffer) -> Vec<u8> {
    let pcm = quantize_pcm16(&audio.samples);
    let data_len = (pcm.len() * 2) as u32;
    let byte_rate = audio.sample_rate * 2;

    let mut out = Vec::with_capacity(44 + pcm.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_TAG.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for sample in pcm {
        out.extend_from_slice(&sample.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<(), DspError> {
    Ok(std::fs::write(path, encode_wav(audio))?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DspError> {
        if self.pos + n > self.bytes.len() {
            return Err(DspError::Wav(format!(
                "file ends inside {what} (wanted {n} bytes at offset {})",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self, what: &str) -> Result<u16, DspError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, DspError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses RIFF/WAVE PCM-16, mono or stereo. Stereo is averaged to mono.
/// Unknown chunks are skipped; errors name the structure that was missing
/// or the format tag that was found.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, DspError> {
    let mut cursor = Cursor { bytes, pos: 0 };
    if cursor.take(4, "the RIFF header")? != b"RIFF" {
        return Err(DspError::Wav("missing RIFF magic".into()));
    }
    cursor.u32("the RIFF size")?;
    if cursor.take(4, "the WAVE tag")? != b"WAVE" {
        return Err(DspError::Wav("missing WAVE tag".into()));
    }

    let mut format: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while cursor.pos < bytes.len() {
        let id: [u8; 4] = cursor.take(4, "a chunk id")?.try_into().unwrap();
        let size = cursor.u32("a chunk size")? as usize;
        let body = cursor.take(size, &format!("the {:?} chunk", String::from_utf8_lossy(&id)))?;
        match &id {
            b"fmt " => {
                let mut fmt = Cursor { bytes: body, pos: 0 };
                let tag = fmt.u16("the format tag")?;
                let channels = fmt.u16("the channel count")?;
                let rate = fmt.u32("the sample rate")?;
                fmt.u32("the byte rate")?;
                fmt.u16("the block alignment")?;
                let bits = fmt.u16("the bit depth")?;
                format = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // RIFF pads odd-sized chunks with one byte.
        if size % 2 == 1 && cursor.pos < bytes.len() {
            cursor.pos += 1;
        }
    }

    let (tag, channels, rate, bits) =
        format.ok_or_else(|| DspError::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| DspError::Wav("missing data chunk".into()))?;

    if tag != PCM_TAG {
        return Err(DspError::Wav(format!(
            "unsupported format tag {tag} (only PCM, tag 1)"
        )));
    }
    if bits != 16 {
        return Err(DspError::Wav(format!("unsupported bit depth {bits}")));
    }
    if channels == 0 || channels > 2 {
        return Err(DspError::Wav(format!("unsupported channel count {channels}")));
    }
    if rate == 0 {
        return Err(DspError::Wav("sample rate is zero".into()));
    }

    let frame = 2 * channels as usize;
    if data.len() % frame != 0 {
        return Err(DspError::Wav(format!(
            "data chunk length {} is not a whole number of frames",
            data.len()
        )));
    }

    let samples = data
        .chunks_exact(frame)
        .map(|chunk| {
            let mut acc = 0.0;
            for pair in chunk.chunks_exact(2) {
                let v = i16::from_le_bytes([pair[0], pair[1]]);
                acc += (f64::from(v) / FULL_SCALE).max(-1.0);
            }
            acc / f64::from(channels)
        })
        .collect();
    AudioBuffer::new(samples, rate)
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer, DspError> {
    decode_wav(&std::fs::read(path)?)
}
