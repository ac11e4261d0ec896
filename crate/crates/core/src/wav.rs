//! WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Write `channels` (all of equal length) as interleaved 32-bit float PCM.
pub fn write_f32(path: &Path, fs: u32, channels: &[Vec<f64>]) -> Result<()> {
    let len = channels.first().map_or(0, Vec::len);
    if let Some(c) = channels.iter().find(|c| c.len() != len) {
        return Err(Error::LengthMismatch {
            left: c.len(),
            right: len,
        });
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: fs,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for t in 0..len {
        for c in channels {
            w.write_sample(c[t] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// Read any PCM or float WAV into per-channel `f64` samples in [-1, 1].
pub fn read(path: &Path) -> Result<(u32, Vec<Vec<f64>>)> {
    let mut r = WavReader::open(path)?;
    let spec = r.spec();
    let nch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch.max(1)); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, v) in channels.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    Ok((spec.sample_rate, channels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let ch = vec![vec![0.5, -0.25, 0.125], vec![0.0, 1.0, -1.0]];
        write_f32(&p, 16000, &ch).unwrap();
        let (fs, back) = read(&p).unwrap();
        assert_eq!(fs, 16000);
        assert_eq!(back, ch);
    }
}
