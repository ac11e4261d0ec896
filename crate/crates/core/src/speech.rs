//! Dry-speech sources: a corpus loader and a synthetic voiced-speech
//! generator used when no recordings are supplied, plus speech-shaped noise.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fft;
use crate::resample::resample;

/// Knee of the long-term speech spectrum envelope, Hz. Flat below, falling
/// 6 dB per octave above.
pub const SPEECH_KNEE_HZ: f64 = 500.0;

/// First three formants (Hz) of a handful of vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const FORMANT_BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];

/// Mono recordings at a common sample rate.
#[derive(Debug, Clone)]
pub struct SpeechCorpus {
    pub fs: f64,
    pub utterances: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

impl SpeechCorpus {
    /// Every `.wav` file directly inside `dir`, in name order, downmixed to
    /// mono and resampled to `fs`.
    pub fn load_dir(dir: &Path, fs: f64) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<PathBuf> = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let is_wav = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if is_wav && path.is_file() {
                paths.push(path);
            }
        }
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Empty(format!("no .wav files in {}", dir.display())));
        }
        let mut utterances = Vec::with_capacity(paths.len());
        let mut names = Vec::with_capacity(paths.len());
        for path in &paths {
            let (rate, channels) = crate::wav::read(path)?;
            let len = channels.first().map_or(0, Vec::len);
            let mono: Vec<f64> = (0..len)
                .map(|t| channels.iter().map(|c| c[t]).sum::<f64>() / channels.len() as f64)
                .collect();
            utterances.push(resample(&mono, f64::from(rate), fs)?);
            names.push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
        Ok(SpeechCorpus { fs, utterances, names })
    }
}

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .zip(FORMANT_BANDWIDTHS)
        .map(|(&fc, bw)| {
            let x = (f - fc) / (0.5 * bw);
            1.0 / (1.0 + x * x).sqrt()
        })
        .sum::<f64>()
        + 0.05
}

/// Synthetic utterance: voiced syllables built from harmonics of a gliding
/// pitch under vowel formants, interleaved with short fricative bursts and
/// pauses. Band-limited below `0.45 * fs` and peak-normalized to 0.5.
pub fn synthetic_utterance<R: Rng + ?Sized>(rng: &mut R, fs: f64, seconds: f64) -> Vec<f64> {
    let n = (seconds * fs).round() as usize;
    let mut y = vec![0.0; n];
    let f0_base: f64 = rng.random_range(95.0..220.0);
    let mut t = rng.random_range(0.0..0.15);
    while t < seconds {
        let syllable = rng.random_range(0.12..0.32);
        let start = (t * fs) as usize;
        let end = (((t + syllable) * fs) as usize).min(n);
        let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
        let f0_start = f0_base * rng.random_range(0.85..1.2);
        let f0_end = f0_base * rng.random_range(0.8..1.15);
        let loudness: f64 = rng.random_range(0.4..1.0);

        if rng.random_bool(0.35) {
            // Fricative onset: high-passed noise with a short decay.
            let len = ((rng.random_range(0.04..0.1) * fs) as usize).min(n - start.min(n));
            let mut prev = 0.0;
            for k in 0..len {
                let w: f64 = StandardNormal.sample(rng);
                let hp = w - prev;
                prev = w;
                let env = (PI * k as f64 / len as f64).sin();
                y[start + k] += 0.08 * loudness * env * hp;
            }
        }

        let len = end.saturating_sub(start);
        let phase0: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let mut phase = 0.0;
        for k in 0..len {
            let u = k as f64 / len.max(1) as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            phase += 2.0 * PI * f0 / fs;
            let env = (PI * u).sin().powf(0.6) * loudness;
            let mut s = 0.0;
            let mut h = 1;
            while (h as f64) * f0 < 0.45 * fs && h <= phase0.len() {
                let fh = h as f64 * f0;
                s += formant_gain(fh, &vowel) / h as f64 * (h as f64 * phase + phase0[h - 1]).sin();
                h += 1;
            }
            y[start + k] += env * s;
        }
        t += syllable + rng.random_range(0.03..0.25);
    }
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        y.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    y
}

/// Gaussian noise with the long-term speech envelope: flat below
/// [`SPEECH_KNEE_HZ`], -6 dB per octave above. Shaped in the DFT domain over
/// the whole signal; unit variance.
pub fn speech_shaped_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, fs: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let n_fft = n.next_power_of_two();
    let mut white: Vec<f64> = (0..n_fft).map(|_| StandardNormal.sample(rng)).collect();
    let mut spec = fft::forward_real(&mut white);
    for (b, v) in spec.iter_mut().enumerate() {
        let f = b as f64 * fs / n_fft as f64;
        *v *= Complex64::from(1.0 / (1.0 + (f / SPEECH_KNEE_HZ).powi(2)).sqrt());
    }
    let mut y = fft::inverse_real(&mut spec, n_fft);
    y.truncate(n);
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        y.iter_mut().for_each(|v| *v /= rms);
    }
    y
}
