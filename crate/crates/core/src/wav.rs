//! 16-bit PCM mono WAV import/export. Amplitudes map linearly onto [-1, 1).

use std::path::Path;

use crate::error::{Error, Result};
use crate::signals::Signal;

const FULL_SCALE: f64 = 32768.0;

pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Config(format!(
            "{}: expected 16-bit PCM mono, got {} channel(s) at {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Signal::new(samples, spec.sample_rate)
}

/// Writes `sig` as 16-bit PCM, clipping to the representable range.
pub fn write_wav(path: impl AsRef<Path>, sig: &Signal) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sig.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io_err = |e: hound::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut writer = hound::WavWriter::create(path, spec).map_err(io_err)?;
    for &x in sig.samples() {
        let v = (x * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(io_err)?;
    }
    writer.finalize().map_err(io_err)
}
