//! Surface absorption, reflection spectra, air attenuation and reverberation
//! time.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{ImageSource, Shoebox, Surface};

/// Octave-band centers in Hz.
pub const BAND_CENTERS: [f64; 6] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0];

/// Energy attenuation of air per meter at the octave-band centers
/// (20 °C, 50 % relative humidity).
pub const AIR_ATTENUATION: [f64; 6] = [0.0002, 0.0004, 0.0008, 0.0016, 0.004, 0.012];

/// `24 ln(10) / c` with c = 343 m/s, rounded as in the usual Sabine form.
pub const EYRING_CONSTANT: f64 = 0.161;

/// Smallest magnitude handed to the cepstrum.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

/// Absorption bounds used when sampling materials.
pub const ALPHA_MIN: f64 = 0.01;
pub const ALPHA_MAX: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionProfile {
    pub band_centers: [f64; 6],
    pub alphas: [f64; 6],
}

impl AbsorptionProfile {
    pub fn new(band_centers: [f64; 6], alphas: [f64; 6]) -> Result<Self> {
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::OutOfRange(format!("absorption coefficient {a} not in (0, 1]")));
        }
        if band_centers.windows(2).any(|w| !(w[0] < w[1])) || !(band_centers[0] > 0.0) {
            return Err(Error::OutOfRange(
                "band centers must be positive and strictly increasing".into(),
            ));
        }
        Ok(AbsorptionProfile { band_centers, alphas })
    }

    pub fn octave(alphas: [f64; 6]) -> Result<Self> {
        Self::new(BAND_CENTERS, alphas)
    }

    pub fn flat(alpha: f64) -> Result<Self> {
        Self::octave([alpha; 6])
    }

    pub fn is_flat(&self) -> bool {
        self.alphas.iter().all(|&a| a == self.alphas[0])
    }

    /// Reflection magnitude `sqrt(1 - alpha)` per band.
    pub fn reflection_magnitudes(&self) -> [f64; 6] {
        self.alphas.map(|a| (1.0 - a).max(0.0).sqrt())
    }
}

/// One absorption profile per room surface, indexed by [`Surface`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSet {
    pub profiles: [AbsorptionProfile; 6],
}

impl SurfaceSet {
    pub fn uniform(profile: AbsorptionProfile) -> Self {
        SurfaceSet { profiles: [profile; 6] }
    }

    pub fn flat(alpha: f64) -> Result<Self> {
        Ok(Self::uniform(AbsorptionProfile::flat(alpha)?))
    }

    pub fn get(&self, surface: Surface) -> &AbsorptionProfile {
        &self.profiles[surface.index()]
    }

    /// Area-weighted mean absorption per band.
    pub fn mean_alphas(&self, room: &Shoebox) -> [f64; 6] {
        let total = room.total_area();
        let mut mean = [0.0; 6];
        for s in Surface::ALL {
            let w = room.surface_area(s) / total;
            for (m, a) in mean.iter_mut().zip(self.get(s).alphas) {
                *m += w * a;
            }
        }
        mean
    }

    /// Broadband absorption used by the frequency-flat engine: area-weighted
    /// and averaged over bands.
    pub fn broadband_alpha(&self, room: &Shoebox) -> f64 {
        (self.mean_alphas(room).iter().sum::<f64>() / 6.0).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionSpectrum {
    pub gains: Vec<Complex64>,
}

impl ReflectionSpectrum {
    pub fn unity(bins: usize) -> Self {
        ReflectionSpectrum {
            gains: vec![Complex64::new(1.0, 0.0); bins],
        }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Frequencies of the `n_fft/2 + 1` real-DFT bins.
pub fn bin_frequencies(n_fft: usize, fs: f64) -> Vec<f64> {
    (0..=n_fft / 2).map(|b| b as f64 * fs / n_fft as f64).collect()
}

/// Half-cosine interpolation of per-band values on a log-frequency axis.
///
/// Values are exact at the centers and held flat outside the first and last
/// center.
pub fn interpolate_bands(centers: &[f64; 6], values: &[f64; 6], freqs: &[f64]) -> Vec<f64> {
    freqs
        .iter()
        .map(|&f| {
            if f <= centers[0] {
                return values[0];
            }
            if f >= centers[5] {
                return values[5];
            }
            let i = centers.partition_point(|&c| c <= f) - 1;
            let u = (f / centers[i]).ln() / (centers[i + 1] / centers[i]).ln();
            let w = 0.5 * (1.0 + (PI * u).cos());
            w * values[i] + (1.0 - w) * values[i + 1]
        })
        .collect()
}

/// Reflection magnitude `sqrt(1 - alpha)` on the DFT grid.
pub fn band_to_dft(profile: &AbsorptionProfile, n_fft: usize, fs: f64) -> Result<Vec<f64>> {
    if !n_fft.is_power_of_two() || n_fft < 2 {
        return Err(Error::Precondition(format!(
            "n_fft must be a power of two, got {n_fft}"
        )));
    }
    if !(fs > 2.0 * profile.band_centers[5]) {
        return Err(Error::Precondition(format!(
            "fs = {fs} Hz does not cover the highest band center"
        )));
    }
    Ok(interpolate_bands(
        &profile.band_centers,
        &profile.reflection_magnitudes(),
        &bin_frequencies(n_fft, fs),
    ))
}

/// Minimum-phase spectrum with the given magnitude, via the folded real
/// cepstrum. The input covers `n/2 + 1` bins of an `n`-point DFT.
pub fn minimum_phase(magnitude: &[f64]) -> ReflectionSpectrum {
    let bins = magnitude.len();
    assert!(bins >= 2, "minimum_phase needs at least two bins");
    let n = 2 * (bins - 1);

    let mut spectrum: Vec<Complex64> = magnitude
        .iter()
        .map(|&m| Complex64::new(m.max(MAGNITUDE_FLOOR).ln(), 0.0))
        .collect();
    let mut cepstrum = fft::inverse_real(&mut spectrum, n);
    let scale = 1.0 / n as f64;
    for (k, c) in cepstrum.iter_mut().enumerate() {
        let fold = if k == 0 || k == n / 2 {
            1.0
        } else if k < n / 2 {
            2.0
        } else {
            0.0
        };
        *c *= fold * scale;
    }
    let folded = fft::forward_real(&mut cepstrum);
    ReflectionSpectrum {
        gains: folded.into_iter().map(|c| c.exp()).collect(),
    }
}

/// Minimum-phase reflection spectrum of each surface on the DFT grid.
pub fn surface_spectra(surfaces: &SurfaceSet, n_fft: usize, fs: f64) -> Result<Vec<ReflectionSpectrum>> {
    surfaces
        .profiles
        .iter()
        .map(|p| Ok(minimum_phase(&band_to_dft(p, n_fft, fs)?)))
        .collect()
}

/// Product over surfaces of each surface spectrum raised to its reflection
/// count.
pub fn compound_reflection(
    image: &ImageSource,
    surfaces: &SurfaceSet,
    n_fft: usize,
    fs: f64,
) -> Result<ReflectionSpectrum> {
    let bins = n_fft / 2 + 1;
    if image.order == 0 {
        return Ok(ReflectionSpectrum::unity(bins));
    }
    let mut out = ReflectionSpectrum::unity(bins);
    for s in Surface::ALL {
        let count = image.reflections_off(s);
        if count == 0 {
            continue;
        }
        let spec = minimum_phase(&band_to_dft(surfaces.get(s), n_fft, fs)?);
        for (o, g) in out.gains.iter_mut().zip(&spec.gains) {
            *o *= g.powi(count as i32);
        }
    }
    Ok(out)
}

/// Energy attenuation coefficient of air per meter on an arbitrary grid.
pub fn air_coefficients(freqs: &[f64]) -> Vec<f64> {
    interpolate_bands(&BAND_CENTERS, &AIR_ATTENUATION, freqs)
}

/// Amplitude gain of air over `r` meters at frequency `f`.
pub fn air_attenuation(r: f64, f: f64) -> f64 {
    let a = air_coefficients(&[f])[0];
    (-0.5 * a * r).exp()
}

/// Eyring reverberation time per band.
pub fn eyring_t60(room: &Shoebox, surfaces: &SurfaceSet) -> Result<[f64; 6]> {
    let mean = surfaces.mean_alphas(room);
    if mean.iter().any(|&a| a <= 0.0) {
        return Err(Error::InfiniteT60);
    }
    let v = room.volume();
    let s = room.total_area();
    Ok(mean.map(|a| {
        if a >= 1.0 {
            0.0
        } else {
            EYRING_CONSTANT * v / (-s * (1.0 - a).ln())
        }
    }))
}

/// Single-figure reverberation time: mean of the 500 Hz and 1 kHz bands.
pub fn mid_band_t60(room: &Shoebox, surfaces: &SurfaceSet) -> Result<f64> {
    let t = eyring_t60(room, surfaces)?;
    Ok(0.5 * (t[2] + t[3]))
}

/// Flat absorption giving the requested Eyring reverberation time.
pub fn naive_alpha(target_t60: f64, room: &Shoebox) -> Result<f64> {
    if !(target_t60 > 0.0 && target_t60.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "target T60 must be positive and finite, got {target_t60}"
        )));
    }
    let x = EYRING_CONSTANT * room.volume() / (room.total_area() * target_t60);
    let alpha = -(-x).exp_m1();
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "T60 {target_t60} s not reachable in this room (alpha = {alpha})"
        )));
    }
    Ok(alpha)
}

/// Identical frequency-flat surfaces tuned to `target_t60`.
pub fn sample_naive_absorption(target_t60: f64, room: &Shoebox) -> Result<SurfaceSet> {
    SurfaceSet::flat(naive_alpha(target_t60, room)?)
}

/// Reachable T60 range of a room for flat absorption in
/// `[ALPHA_MIN, 1]`.
pub fn t60_range(room: &Shoebox) -> (f64, f64) {
    let t = |alpha: f64| eyring_t60(room, &SurfaceSet::flat(alpha).expect("valid alpha")).expect("alpha > 0")[0];
    (t(1.0), t(ALPHA_MIN))
}

/// Per-band truncated-normal material class with a mean that ramps linearly
/// from the lowest to the highest band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialClass {
    pub mean_low: f64,
    pub mean_high: f64,
    pub sd: f64,
}

impl MaterialClass {
    pub fn band_mean(&self, band: usize) -> f64 {
        self.mean_low + (self.mean_high - self.mean_low) * band as f64 / 5.0
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 6] {
        std::array::from_fn(|band| {
            let normal = Normal::new(self.band_mean(band), self.sd).expect("sd > 0");
            loop {
                let a = normal.sample(rng);
                if (ALPHA_MIN..=ALPHA_MAX).contains(&a) {
                    break a;
                }
            }
        })
    }
}

/// Two-class mixture for one surface kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMixture {
    pub p_reflective: f64,
    pub reflective: MaterialClass,
    pub absorptive: MaterialClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionMixture {
    pub walls: SurfaceMixture,
    pub floor: SurfaceMixture,
    pub ceiling: SurfaceMixture,
}

impl Default for AbsorptionMixture {
    fn default() -> Self {
        let reflective = MaterialClass {
            mean_low: 0.05,
            mean_high: 0.15,
            sd: 0.03,
        };
        let absorptive = |mean_low, mean_high| MaterialClass {
            mean_low,
            mean_high,
            sd: 0.1,
        };
        AbsorptionMixture {
            walls: SurfaceMixture {
                p_reflective: 0.75,
                reflective,
                absorptive: absorptive(0.25, 0.7),
            },
            floor: SurfaceMixture {
                p_reflective: 0.5,
                reflective,
                absorptive: absorptive(0.1, 0.45),
            },
            ceiling: SurfaceMixture {
                p_reflective: 0.5,
                reflective,
                absorptive: absorptive(0.25, 0.65),
            },
        }
    }
}

impl AbsorptionMixture {
    pub fn for_surface(&self, surface: Surface) -> &SurfaceMixture {
        match surface {
            Surface::Floor => &self.floor,
            Surface::Ceiling => &self.ceiling,
            _ => &self.walls,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SurfaceSet {
        let profiles = Surface::ALL.map(|s| {
            let mix = self.for_surface(s);
            let class = if rng.random::<f64>() < mix.p_reflective {
                &mix.reflective
            } else {
                &mix.absorptive
            };
            AbsorptionProfile {
                band_centers: BAND_CENTERS,
                alphas: class.draw(rng),
            }
        });
        SurfaceSet { profiles }
    }
}

/// Frequency-dependent surfaces drawn from the default material mixture.
pub fn sample_advanced_absorption(seed: u64) -> SurfaceSet {
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Materials);
    AbsorptionMixture::default().sample(&mut rng)
}
