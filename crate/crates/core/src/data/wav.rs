use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    /// IEEE float, lossless for `f32` values.
    #[default]
    Float32,
    /// Signed 16-bit, clipped to `[-1, 1)`.
    Pcm16,
}

// The bytes are already in memory, so even hound's I/O errors mean a malformed file.
fn format_err(path: &Path, e: hound::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Read a mono PCM (8 to 32-bit integer) or 32-bit float WAV file.
/// Integer samples are scaled by `1 / 2^(bits - 1)`.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = fsutil::read(path)?;
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| format_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, e))?,
        (SampleFormat::Int, bits @ 8..=32) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format_err(path, e))?
        }
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported sample format {fmt:?} with {bits} bits",
                path.display()
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn encode_wav(w: &Waveform, encoding: WavEncoding) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Float32 => 32,
            WavEncoding::Pcm16 => 16,
        },
        sample_format: match encoding {
            WavEncoding::Float32 => SampleFormat::Float,
            WavEncoding::Pcm16 => SampleFormat::Int,
        },
    };
    let mut buf = Cursor::new(Vec::new());
    let to_fmt = |e: hound::Error| Error::Format(format!("wav encoding: {e}"));
    {
        let mut writer = hound::WavWriter::new(&mut buf, spec).map_err(to_fmt)?;
        for &s in w.samples() {
            match encoding {
                WavEncoding::Float32 => writer.write_sample(s as f32),
                WavEncoding::Pcm16 => {
                    writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                }
            }
            .map_err(to_fmt)?;
        }
        writer.finalize().map_err(to_fmt)?;
    }
    Ok(buf.into_inner())
}

pub fn write_wav(w: &Waveform, path: &Path, encoding: WavEncoding) -> Result<()> {
    fsutil::write_atomic(path, &encode_wav(w, encoding)?)
}
