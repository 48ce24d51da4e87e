//! RIFF/WAVE reading and writing, PCM 16-bit little-endian only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Decoded PCM16 audio: channel 0 as floats in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
}

/// Reads a PCM16 WAV file, keeping channel 0 and scaling by 1/32768.
pub fn read_wav(path: &Path) -> Result<WavData> {
    let bytes = fs::read(path)?;
    parse_wav(&bytes)
}

/// Parses PCM16 WAV bytes.
pub fn parse_wav(bytes: &[u8]) -> Result<WavData> {
    if bytes.len() < 12 {
        return Err(Error::Format("file too small for a RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::Format("missing RIFF magic".into()));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing WAVE marker".into()));
    }

    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;

    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| Error::Format("chunk size overflows".into()))?;
        if body_end > bytes.len() {
            return Err(Error::Format(format!(
                "chunk '{}' declares {} bytes but file ends early",
                String::from_utf8_lossy(id),
                size
            )));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Format("fmt chunk truncated".into()));
                }
                let audio_format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((audio_format, channels, sample_rate, bits));
            }
            b"data" => {
                data = Some(body);
            }
            _ => {}
        }
        // Chunk bodies are padded to even length.
        pos = body_end + (size & 1);
    }

    let (audio_format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    if audio_format != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "audio format {audio_format}, only PCM (1) is supported"
        )));
    }
    if bits != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{bits} bits per sample, only 16 is supported"
        )));
    }
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Format("zero sample rate".into()));
    }

    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;
    if data.is_empty() {
        return Err(Error::EmptyInput("data chunk holds no samples".into()));
    }
    let block = 2 * channels as usize;
    if data.len() % block != 0 {
        return Err(Error::Format(format!(
            "data chunk length {} is not a multiple of the {}-byte frame",
            data.len(),
            block
        )));
    }

    let frames = data.len() / block;
    let mut samples = Vec::with_capacity(frames);
    for f in 0..frames {
        let off = f * block;
        let v = i16::from_le_bytes(data[off..off + 2].try_into().unwrap());
        samples.push(f64::from(v) / 32768.0);
    }

    Ok(WavData {
        samples,
        sample_rate,
        channels,
    })
}

/// Writes mono PCM16. Samples are clamped to [-1, 1] and scaled by 32768.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let bytes = encode_wav(samples, sample_rate);
    fs::write(path, bytes)?;
    Ok(())
}

/// Encodes mono PCM16 WAV bytes.
pub fn encode_wav(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");

    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());

    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_file(values: &[i16], channels: u16, rate: u32) -> Vec<u8> {
        let data_len = values.len() * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * u32::from(channels)).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    #[test]
    fn scales_pcm16_by_32768() {
        let bytes = pcm16_file(&[0, 16384, -16384, 32767], 1, 16000);
        let wav = parse_wav(&bytes).unwrap();
        assert_eq!(wav.samples, vec![0.0, 0.5, -0.5, 32767.0 / 32768.0]);
        assert_eq!(wav.sample_rate, 16000);
    }

    #[test]
    fn all_zero_payload_gives_zero_samples() {
        let bytes = pcm16_file(&[0; 57], 1, 8000);
        let wav = parse_wav(&bytes).unwrap();
        assert_eq!(wav.samples.len(), 57);
        assert!(wav.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stereo_takes_channel_zero() {
        // Interleaved L/R frames; channel 0 is the left value.
        let bytes = pcm16_file(&[100, -100, 200, -200, 300, -300], 2, 44100);
        let wav = parse_wav(&bytes).unwrap();
        assert_eq!(wav.samples.len(), 3);
        assert_eq!(wav.samples[0], 100.0 / 32768.0);
        assert_eq!(wav.samples[2], 300.0 / 32768.0);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = pcm16_file(&[1, 2, 3], 1, 16000);
        bytes[0] = b'X';
        assert!(matches!(parse_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_non_pcm() {
        let mut bytes = pcm16_file(&[1, 2, 3], 1, 16000);
        bytes[20] = 3; // IEEE float format tag
        assert!(matches!(
            parse_wav(&bytes),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn rejects_non_16_bit() {
        let mut bytes = pcm16_file(&[1, 2, 3], 1, 16000);
        bytes[34] = 8;
        assert!(matches!(
            parse_wav(&bytes),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn rejects_empty_data_chunk() {
        let bytes = pcm16_file(&[], 1, 16000);
        assert!(matches!(parse_wav(&bytes), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn rejects_truncated_data_chunk() {
        let mut bytes = pcm16_file(&[1, 2, 3, 4], 1, 16000);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(parse_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn pcm_payload_round_trips_bit_exactly() {
        let values: Vec<i16> = (-40..40).map(|v| v * 801).collect();
        let bytes = pcm16_file(&values, 1, 16000);
        let wav = parse_wav(&bytes).unwrap();
        let rewritten = encode_wav(&wav.samples, wav.sample_rate);
        let reread = parse_wav(&rewritten).unwrap();
        assert_eq!(wav.samples, reread.samples);
        // The PCM payload itself is identical.
        assert_eq!(&bytes[44..], &rewritten[44..]);
    }

    #[test]
    fn extremes_survive_round_trip() {
        let values = vec![i16::MIN, -1, 0, 1, i16::MAX];
        let bytes = pcm16_file(&values, 1, 16000);
        let wav = parse_wav(&bytes).unwrap();
        let rewritten = encode_wav(&wav.samples, wav.sample_rate);
        assert_eq!(&bytes[44..], &rewritten[44..]);
    }
}
