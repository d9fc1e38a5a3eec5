//! 16-bit PCM WAV input/output with downmix and resampling on read.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Half-width of the resampling kernel in zero crossings.
const SINC_ZERO_CROSSINGS: f64 = 16.0;

/// Reads a WAV file, averaging channels to mono and resampling to `target_rate`
/// when given.
pub fn read_wav<T: Scalar>(path: &Path, target_rate: Option<u32>) -> Result<AudioBuffer<T>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    decode_wav(std::io::BufReader::new(file), target_rate)
}

pub fn decode_wav<T: Scalar, R: Read>(
    reader: R,
    target_rate: Option<u32>,
) -> Result<AudioBuffer<T>> {
    let reader = WavReader::new(reader).map_err(|e| Error::Format(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ 1..=32) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Format(format!("{bits}-bit {fmt:?} samples")));
        }
    };
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();

    let mono = match target_rate {
        Some(rate) if rate != spec.sample_rate => resample(&mono, spec.sample_rate, rate),
        _ => mono,
    };
    let rate = target_rate.unwrap_or(spec.sample_rate);
    AudioBuffer::new(mono.into_iter().map(T::of).collect(), rate)
}

/// Writes 16-bit PCM mono, clipping to [-1, 1].
pub fn write_wav<T: Scalar>(audio: &AudioBuffer<T>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    encode_wav(audio, std::io::BufWriter::new(file))
}

pub fn wav_bytes<T: Scalar>(audio: &AudioBuffer<T>) -> Result<Vec<u8>> {
    let mut cursor = Cursor::new(Vec::new());
    encode_wav(audio, &mut cursor)?;
    Ok(cursor.into_inner())
}

fn encode_wav<T: Scalar, W: Write + Seek>(audio: &AudioBuffer<T>, sink: W) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::new(sink, spec)?;
    for &s in audio.samples() {
        writer.write_sample(quantize(s.to_f64_lossy()))?;
    }
    writer.finalize()?;
    Ok(())
}

fn quantize(s: f64) -> i16 {
    (s * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16
}

/// Band-limited (Hann-windowed sinc) sample-rate conversion.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || x.is_empty() {
        return x.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = (x.len() as f64 * ratio).round() as usize;
    let cutoff = ratio.min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    (0..out_len)
        .map(|m| {
            let t = m as f64 / ratio;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(x.len() - 1);
            (lo..=hi)
                .map(|n| {
                    let d = n as f64 - t;
                    let w = 0.5 * (1.0 + (std::f64::consts::PI * d / half_width).cos());
                    x[n] * cutoff * sinc(cutoff * d) * w
                })
                .sum()
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}
