//! Multichannel WAV files as planar `f64` buffers in `[-1, 1]`.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::config::WavFormat;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Wav {
    pub sample_rate: u32,
    /// `channels[c][n]`.
    pub channels: Vec<Vec<f64>>,
}

/// Reads integer PCM (8 to 32 bits) or 32-bit float files.
pub fn read(path: &Path) -> Result<Wav> {
    let reader = WavReader::open(path).map_err(|e| CliError::wav(path, e))?;
    let spec = reader.spec();
    let nch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| CliError::wav(path, e))?;
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch.max(1)); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, v) in frame.iter().enumerate() {
            channels[c].push(*v);
        }
    }
    Ok(Wav {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Writes equal-length channels. PCM16 clips to `[-1, 1]` and returns the
/// number of clipped samples.
pub fn write(path: &Path, sample_rate: u32, channels: &[Vec<f64>], format: WavFormat) -> Result<usize> {
    let len = channels.first().map_or(0, Vec::len);
    if channels.is_empty() || channels.iter().any(|c| c.len() != len) {
        return Err(CliError::Config(format!("{}: channels must be non-empty and equal length", path.display())));
    }
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| CliError::wav(path, e))?;
    let mut clipped = 0;
    for n in 0..len {
        for c in channels {
            let v = c[n];
            let r = match format {
                WavFormat::Float32 => w.write_sample(v as f32),
                WavFormat::Pcm16 => {
                    if v.abs() > 1.0 {
                        clipped += 1;
                    }
                    w.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                }
            };
            r.map_err(|e| CliError::wav(path, e))?;
        }
    }
    w.finalize().map_err(|e| CliError::wav(path, e))?;
    Ok(clipped)
}
