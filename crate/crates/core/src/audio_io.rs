//! PCM16 mono RIFF/WAVE reading and writing.
//!
//! Samples are normalized by 32768 on read. Writing multiplies by 32768,
//! rounds, and clamps to the i16 range, so `+1.0` lands on 32767 and any clip
//! obtained from `read_wav` is written back bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Normalization divisor applied to raw i16 samples on read.
pub const PCM_SCALE: f64 = 32768.0;

#[derive(Error, Debug)]
pub enum WavError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed wav at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unsupported wav format: {field} = {value}")]
    Unsupported { field: &'static str, value: u32 },
    #[error("sample {index} out of range [-1, 1]: {value}")]
    SampleRange { index: usize, value: f64 },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
}

/// Mono audio with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting non-finite or out-of-range samples.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, WavError> {
        if sample_rate_hz == 0 {
            return Err(WavError::ZeroSampleRate);
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && (-1.0..=1.0).contains(*s)))
        {
            return Err(WavError::SampleRange { index, value });
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate_hz: sample_rate_hz.max(1),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    /// Returns a copy scaled by `gain`; fails if the result leaves `[-1, 1]`.
    pub fn scaled(&self, gain: f64) -> Result<Self, WavError> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
        )
    }
}

/// Quantizes one normalized sample to PCM16.
pub fn quantize(s: f64) -> i16 {
    (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn malformed(offset: usize, reason: impl Into<String>) -> WavError {
    WavError::Malformed {
        offset,
        reason: reason.into(),
    }
}

/// Parses a complete in-memory WAV file.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 {
        return Err(malformed(bytes.len(), "file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(malformed(0, "missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(malformed(8, "missing WAVE tag"));
    }

    let mut pos = 12;
    let mut sample_rate = None;
    while pos < bytes.len() {
        if pos + 8 > bytes.len() {
            return Err(malformed(pos, "truncated chunk header"));
        }
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| malformed(pos + 4, format!("chunk size {size} runs past end of file")))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed(pos + 4, "fmt chunk shorter than 16 bytes"));
                }
                let format = le_u16(bytes, body);
                if format != 1 {
                    return Err(WavError::Unsupported {
                        field: "audio_format",
                        value: format as u32,
                    });
                }
                let channels = le_u16(bytes, body + 2);
                if channels != 1 {
                    return Err(WavError::Unsupported {
                        field: "channels",
                        value: channels as u32,
                    });
                }
                let rate = le_u32(bytes, body + 4);
                if rate == 0 {
                    return Err(malformed(body + 4, "sample rate is zero"));
                }
                let bits = le_u16(bytes, body + 14);
                if bits != 16 {
                    return Err(WavError::Unsupported {
                        field: "bits_per_sample",
                        value: bits as u32,
                    });
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let rate = sample_rate
                    .ok_or_else(|| malformed(pos, "data chunk before fmt chunk"))?;
                if !size.is_multiple_of(2) {
                    return Err(malformed(pos + 4, "odd data chunk size for 16-bit samples"));
                }
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / PCM_SCALE)
                    .collect();
                return Ok(AudioClip {
                    samples,
                    sample_rate_hz: rate,
                });
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = end + (size & 1);
    }
    Err(malformed(bytes.len(), "no data chunk"))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, WavError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_wav(&bytes)
}

/// Serializes a clip as a canonical 44-byte-header PCM16 mono WAV.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>, WavError> {
    let data_len = clip.samples.len() * 2;
    let riff_len = u32::try_from(36 + data_len)
        .map_err(|_| malformed(4, "clip too long for a RIFF file"))?;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_len.to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for (index, &s) in clip.samples.iter().enumerate() {
        if !(s.is_finite() && (-1.0..=1.0).contains(&s)) {
            return Err(WavError::SampleRange { index, value: s });
        }
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    Ok(out)
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), WavError> {
    let bytes = encode_wav(clip)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
