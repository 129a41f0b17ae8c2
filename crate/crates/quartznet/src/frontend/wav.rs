//! Minimal RIFF/WAVE reader and writer for 16-bit PCM mono audio.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Waveform in [-1, 1] with its sample rate.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("unexpected end of WAV file".into()))
}

fn read_u16(bytes: &[u8], at: usize) -> Result<u16> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| Error::Format("unexpected end of WAV file".into()))
}

/// Load a RIFF/WAVE file. Only PCM, 16-bit, mono data is accepted; the
/// error names the offending header field otherwise. Samples are scaled by
/// 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let bytes = fs::read(path.as_ref())
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.as_ref().display())))?;
    parse_wav(&bytes)
}

pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;

    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4)? as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                let audio_format = read_u16(bytes, body_start)?;
                let channels = read_u16(bytes, body_start + 2)?;
                let sample_rate = read_u32(bytes, body_start + 4)?;
                let bits = read_u16(bytes, body_start + 14)?;
                fmt = Some((audio_format, channels, sample_rate, bits));
            }
            b"data" => {
                let body = bytes
                    .get(body_start..body_start + size)
                    .ok_or_else(|| Error::Format("truncated data chunk".into()))?;
                data = Some(body);
            }
            _ => {} // skip LIST, fact, etc.
        }
        // Chunks are word-aligned.
        pos = body_start + size + (size & 1);
    }

    let (audio_format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    if audio_format != 1 {
        return Err(Error::Format(format!("audio_format={audio_format}, need PCM (1)")));
    }
    if channels != 1 {
        return Err(Error::Format(format!("channels={channels}, need mono")));
    }
    if bits != 16 {
        return Err(Error::Format(format!("bits_per_sample={bits}, need 16")));
    }
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(Error::Format("data chunk holds a partial sample".into()));
    }

    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate,
    })
}

/// Write a 16-bit PCM mono WAV. Samples are clamped to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let n = clip.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}
