//! Mono 16-bit PCM WAV reading and writing.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono waveform with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Quantizes an amplitude to a 16-bit PCM code; inverse of the `1/32768`
/// scaling used on load, up to rounding.
pub fn to_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn from_pcm16(v: i16) -> f64 {
    v as f64 / 32768.0
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path)?;
    let reader = hound::WavReader::new(BufReader::new(file)).map_err(|e| match e {
        hound::Error::IoError(io) => Error::MalformedWav {
            path: path.to_path_buf(),
            reason: io.to_string(),
        },
        other => Error::MalformedWav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;

    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::NotMono {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::NotPcm16 {
            path: path.to_path_buf(),
            bits: spec.bits_per_sample,
            format: match spec.sample_format {
                hound::SampleFormat::Int => "integer PCM",
                hound::SampleFormat::Float => "float",
            },
        });
    }

    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(from_pcm16))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::MalformedWav {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;

    Ok(AudioClip::new(samples, spec.sample_rate))
}

pub fn wav_spec(sample_rate_hz: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

/// Encodes a clip as a canonical 44-byte-header PCM WAV in memory.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>> {
    let mut cursor = std::io::Cursor::new(Vec::with_capacity(44 + 2 * clip.len()));
    {
        let mut writer = hound::WavWriter::new(&mut cursor, wav_spec(clip.sample_rate_hz))
            .map_err(hound_to_io)?;
        let mut w16 = writer.get_i16_writer(clip.len() as u32);
        for &s in &clip.samples {
            w16.write_sample(to_pcm16(s));
        }
        w16.flush().map_err(hound_to_io)?;
        writer.finalize().map_err(hound_to_io)?;
    }
    Ok(cursor.into_inner())
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_wav(clip)?)?;
    Ok(())
}

fn hound_to_io(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    }
}
