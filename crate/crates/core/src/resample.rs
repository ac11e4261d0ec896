//! Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Zero crossings of the kernel on each side, in units of the output (or
/// input, whichever is slower) sample period.
const HALF_ZEROS: f64 = 64.0;

/// Kaiser shape parameter for about 90 dB of stopband attenuation.
const KAISER_BETA: f64 = 8.96;

/// Passband edge as a fraction of the lower Nyquist frequency. The
/// transition band ends at that Nyquist frequency.
const PASSBAND: f64 = 0.9;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        bessel_i0(KAISER_BETA * (1.0 - t * t).sqrt()) / bessel_i0(KAISER_BETA)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resample `x` from `fs_in` to `fs_out`. Output length is
/// `ceil(len * fs_out / fs_in)`.
pub fn resample(x: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>> {
    if !(fs_in > 0.0 && fs_out > 0.0 && fs_in.is_finite() && fs_out.is_finite()) {
        return Err(Error::Precondition(format!(
            "sample rates must be positive, got {fs_in} and {fs_out}"
        )));
    }
    if fs_in == fs_out {
        return Ok(x.to_vec());
    }
    let ratio = fs_out / fs_in;
    // Cutoff in cycles per input sample; the transition band is centered on
    // it and ends at the lower Nyquist frequency.
    let nyq = 0.5 * ratio.min(1.0);
    let cutoff = 0.5 * (1.0 + PASSBAND) * nyq;
    let half_width = HALF_ZEROS / ratio.min(1.0);
    let n_out = (x.len() as f64 * ratio).ceil() as usize;
    let mut y = vec![0.0; n_out];
    for (n, out) in y.iter_mut().enumerate() {
        let center = n as f64 / ratio;
        let first = (center - half_width).ceil().max(0.0) as usize;
        let last = ((center + half_width).floor() as usize).min(x.len().saturating_sub(1));
        let mut acc = 0.0;
        for (k, &v) in x.iter().enumerate().take(last + 1).skip(first) {
            let d = k as f64 - center;
            acc += v * 2.0 * cutoff * sinc(2.0 * cutoff * d) * kaiser(d / half_width);
        }
        *out = acc;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn identity_rate_copies() {
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(resample(&x, 16000.0, 16000.0).unwrap(), x);
    }

    #[test]
    fn passband_tone_survives_downsampling() {
        let y = resample(&tone(1000.0, 48000.0, 48000), 48000.0, 16000.0).unwrap();
        assert_eq!(y.len(), 16000);
        let want = tone(1000.0, 16000.0, 16000);
        let mid = 2000..14000;
        let err: f64 = mid.clone().map(|i| (y[i] - want[i]).powi(2)).sum::<f64>();
        let sig: f64 = mid.map(|i| want[i].powi(2)).sum::<f64>();
        assert!(10.0 * (err / sig).log10() < -60.0);
    }

    #[test]
    fn stopband_tone_is_rejected() {
        let y = resample(&tone(12000.0, 48000.0, 48000), 48000.0, 16000.0).unwrap();
        let level = 20.0 * (rms(&y[2000..14000]) / (0.5f64).sqrt()).log10();
        assert!(level < -80.0, "leak {level} dB");
    }

    #[test]
    fn upsampling_keeps_tone() {
        let y = resample(&tone(440.0, 8000.0, 8000), 8000.0, 16000.0).unwrap();
        let want = tone(440.0, 16000.0, 16000);
        let err: f64 = (2000..14000).map(|i| (y[i] - want[i]).powi(2)).sum::<f64>();
        assert!(err / 12000.0 < 1e-8);
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(resample(&[1.0], 0.0, 16000.0).is_err());
        assert!(resample(&[1.0], 16000.0, f64::NAN).is_err());
    }
}
