//! Frequency-domain image-source synthesis.
//!
//! Every image contributes, per DFT bin, a pure delay `exp(-j 2 pi f r / c)`,
//! spherical spreading `1 / r`, air absorption, the compound reflection
//! spectrum of the walls it bounced off, and the source and receiver
//! directivities. Summing over images gives the multichannel transfer
//! function; one inverse real FFT per channel gives the RIR.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::directivity::{frequency_bracket, DirectivityPattern, Orientation, OrientedPattern};
use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{enumerate_images, point_geometry, ImageSource, Shoebox, Vec3};
use crate::materials::{self, ReflectionSpectrum, SurfaceSet};

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Default cap on RIR length in samples.
pub const DEFAULT_MAX_SAMPLES: usize = 1 << 22;

/// Extra time appended after the last image arrival and the reverberant tail.
pub const TAIL_GUARD_S: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// One frequency-flat reflection coefficient for every surface and
    /// omnidirectional source and receivers.
    Naive,
    /// Per-surface minimum-phase reflection spectra and directivities.
    Advanced,
}

impl std::fmt::Display for SimulationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimulationMode::Naive => "naive",
            SimulationMode::Advanced => "advanced",
        })
    }
}

impl std::str::FromStr for SimulationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(SimulationMode::Naive),
            "advanced" => Ok(SimulationMode::Advanced),
            other => Err(Error::Precondition(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverMode {
    /// One distance and direction per image, measured from the array center;
    /// the per-channel patterns carry all inter-channel differences.
    ArrayCentered,
    /// Distance and direction recomputed for every microphone.
    PerMicrophone,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Microphone {
    /// Position relative to the array center, in the array frame.
    pub offset: Vec3,
    /// Pattern and mounting, in the array frame.
    pub directivity: OrientedPattern,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrayGeometry {
    pub mics: Vec<Microphone>,
    pub mode: ReceiverMode,
}

impl ArrayGeometry {
    /// Two omnidirectional microphones at `±aperture/2` along the local x
    /// axis.
    pub fn omni_pair(aperture: f64) -> Self {
        let mic = |x| Microphone {
            offset: Vec3::new(x, 0.0, 0.0),
            directivity: OrientedPattern::omni(),
        };
        ArrayGeometry {
            mics: vec![mic(-0.5 * aperture), mic(0.5 * aperture)],
            mode: ReceiverMode::PerMicrophone,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.mics.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RirRequest {
    pub room: Shoebox,
    pub surfaces: SurfaceSet,
    pub source: Vec3,
    pub source_directivity: OrientedPattern,
    pub array: ArrayGeometry,
    pub array_center: Vec3,
    pub array_orientation: Orientation,
    pub fs: f64,
    pub max_order: u32,
    pub mode: SimulationMode,
    pub air_absorption: bool,
    pub max_samples: usize,
    pub seed: Option<u64>,
}

impl RirRequest {
    /// Omnidirectional single-microphone request with flat absorption.
    pub fn simple(room: Shoebox, alpha: f64, source: Vec3, receiver: Vec3, fs: f64, max_order: u32) -> Result<Self> {
        Ok(RirRequest {
            room,
            surfaces: SurfaceSet::flat(alpha)?,
            source,
            source_directivity: OrientedPattern::omni(),
            array: ArrayGeometry {
                mics: vec![Microphone {
                    offset: Vec3::ZERO,
                    directivity: OrientedPattern::omni(),
                }],
                mode: ReceiverMode::PerMicrophone,
            },
            array_center: receiver,
            array_orientation: Orientation::default(),
            fs,
            max_order,
            mode: SimulationMode::Naive,
            air_absorption: true,
            max_samples: DEFAULT_MAX_SAMPLES,
            seed: None,
        })
    }

    pub fn mic_position(&self, m: usize) -> Vec3 {
        self.array_center + self.array_orientation.to_world(self.array.mics[m].offset)
    }

    pub fn mic_orientation(&self, m: usize) -> Orientation {
        self.array_orientation
            .compose(&self.array.mics[m].directivity.orientation)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::Precondition(format!("fs must be positive, got {}", self.fs)));
        }
        if self.array.mics.is_empty() {
            return Err(Error::Precondition("array has no microphones".into()));
        }
        self.room.check_inside(self.source, "source")?;
        self.room.check_inside(self.array_center, "array center")?;
        for m in 0..self.array.mics.len() {
            self.room.check_inside(self.mic_position(m), "microphone")?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the request.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("request is serializable");
        hex::encode(Sha256::digest(&json))
    }

    /// Surfaces as the engine sees them: flat and identical in naive mode.
    pub fn effective_surfaces(&self) -> Result<SurfaceSet> {
        match self.mode {
            SimulationMode::Advanced => Ok(self.surfaces),
            SimulationMode::Naive => SurfaceSet::flat(self.surfaces.broadband_alpha(&self.room)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    /// `channels[m][t]`.
    pub channels: Vec<Vec<f64>>,
    pub fs: f64,
    pub digest: String,
    pub seed: Option<u64>,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|v| v * v).sum()
    }

    /// Write a 32-bit float WAV and a JSON sidecar next to it.
    pub fn save(&self, wav_path: &Path) -> Result<()> {
        crate::wav::write_f32(wav_path, self.fs.round() as u32, &self.channels)?;
        let meta = RirMetadata {
            fs: self.fs,
            channels: self.channels.len(),
            samples: self.len(),
            request_digest: self.digest.clone(),
            seed: self.seed,
        };
        let side = wav_path.with_extension("json");
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirMetadata {
    pub fs: f64,
    pub channels: usize,
    pub samples: usize,
    pub request_digest: String,
    pub seed: Option<u64>,
}

/// Where and how a channel listens.
#[derive(Debug, Clone)]
struct Receiver {
    position: Vec3,
    pattern: OrientedPattern,
}

/// Split-complex spectrum; the layout the inner loops vectorize over.
#[derive(Debug, Clone)]
struct SplitSpectrum {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitSpectrum {
    fn zeros(n: usize) -> Self {
        SplitSpectrum {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    fn from_complex(v: &[Complex64]) -> Self {
        SplitSpectrum {
            re: v.iter().map(|c| c.re).collect(),
            im: v.iter().map(|c| c.im).collect(),
        }
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    fn mul_assign(&mut self, other: &SplitSpectrum) {
        for (((ar, ai), br), bi) in self.re.iter_mut().zip(self.im.iter_mut()).zip(&other.re).zip(&other.im) {
            let r = *ar * br - *ai * bi;
            *ai = *ar * bi + *ai * br;
            *ar = r;
        }
    }
}

/// Per-bin linear interpolation of a measured pattern, stored as runs of bins
/// sharing the same pair of bracketing frequency nodes.
#[derive(Debug, Clone)]
struct BinBrackets {
    /// `(first bin, end bin, lower node)`.
    runs: Vec<(usize, usize, usize)>,
    t: Vec<f64>,
}

impl BinBrackets {
    fn new(axis: &[f64], freqs: &[f64]) -> Self {
        let (lo, t): (Vec<usize>, Vec<f64>) = freqs.iter().map(|&f| frequency_bracket(axis, f)).unzip();
        let mut runs = Vec::new();
        let mut start = 0;
        for b in 1..=lo.len() {
            if b == lo.len() || lo[b] != lo[start] {
                runs.push((start, b, lo[start]));
                start = b;
            }
        }
        BinBrackets { runs, t }
    }
}

#[derive(Debug, Clone)]
struct AirTable {
    half_coef: Vec<f64>,
    /// Bins `[lo, hi)` where the coefficient varies; outside it is constant.
    lo: usize,
    hi: usize,
}

impl AirTable {
    fn new(freqs: &[f64]) -> Self {
        let half_coef: Vec<f64> = materials::air_coefficients(freqs)
            .into_iter()
            .map(|a| 0.5 * a)
            .collect();
        let first = materials::BAND_CENTERS[0];
        let last = materials::BAND_CENTERS[5];
        let lo = freqs.partition_point(|&f| f <= first);
        let hi = freqs.partition_point(|&f| f < last).max(lo);
        AirTable { half_coef, lo, hi }
    }

    /// Multiply a real per-bin gain by the air attenuation over `r` meters.
    fn apply(&self, r: f64, gain: &mut [f64]) {
        let n = gain.len();
        if self.lo > 0 {
            let g = (-self.half_coef[0] * r).exp();
            gain[..self.lo].iter_mut().for_each(|a| *a *= g);
        }
        if self.hi < n {
            let g = (-self.half_coef[n - 1] * r).exp();
            gain[self.hi..].iter_mut().for_each(|a| *a *= g);
        }
        let (lo, hi) = (self.lo, self.hi);
        scale_by_exp(&mut gain[lo..hi], &self.half_coef[lo..hi], -r);
    }
}

/// `gain[b] *= exp(coef[b] * x)` for `coef[b] * x <= 0`.
fn scale_by_exp(gain: &mut [f64], coef: &[f64], x: f64) {
    #[cfg(target_arch = "x86_64")]
    match vector_width() {
        // SAFETY: the CPU supports the feature, checked at runtime.
        Width::Avx512 => return unsafe { scale_by_exp_avx512(gain, coef, x) },
        Width::Avx2 => return unsafe { scale_by_exp_avx2(gain, coef, x) },
        Width::Baseline => {}
    }
    scale_by_exp_impl(gain, coef, x)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn scale_by_exp_avx512(gain: &mut [f64], coef: &[f64], x: f64) {
    scale_by_exp_impl(gain, coef, x)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn scale_by_exp_avx2(gain: &mut [f64], coef: &[f64], x: f64) {
    scale_by_exp_impl(gain, coef, x)
}

#[inline(always)]
fn scale_by_exp_impl(gain: &mut [f64], coef: &[f64], x: f64) {
    for (a, c) in gain.iter_mut().zip(coef) {
        *a *= exp_nonpositive(c * x);
    }
}

/// `exp(x)` for `-700 < x <= 0`, branch-free so that loops over it
/// vectorize. Relative error is within a few ulps of `f64::exp`.
#[inline(always)]
fn exp_nonpositive(x: f64) -> f64 {
    const SHIFTER: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let t = x * std::f64::consts::LOG2_E + SHIFTER;
    let k = t - SHIFTER;
    let f = (x - k * LN2_HI) - k * LN2_LO;
    // Taylor series of e^f for |f| <= ln(2)/2, degree 13.
    let mut p = 1.0 / 6_227_020_800.0;
    p = p * f + 1.0 / 479_001_600.0;
    p = p * f + 1.0 / 39_916_800.0;
    p = p * f + 1.0 / 3_628_800.0;
    p = p * f + 1.0 / 362_880.0;
    p = p * f + 1.0 / 40_320.0;
    p = p * f + 1.0 / 5_040.0;
    p = p * f + 1.0 / 720.0;
    p = p * f + 1.0 / 120.0;
    p = p * f + 1.0 / 24.0;
    p = p * f + 1.0 / 6.0;
    p = p * f + 0.5;
    p = p * f + 1.0;
    p = p * f + 1.0;
    let bits = (t.to_bits() as i64).wrapping_shl(52);
    f64::from_bits((p.to_bits() as i64).wrapping_add(bits) as u64)
}

const PHASE_BLOCK: usize = 64;

/// Per-bin amplitude of one image at one channel.
#[derive(Clone, Copy)]
enum Amplitude<'s> {
    Real(&'s [f64]),
    /// Product of two complex spectra and a real gain.
    Product(&'s SplitSpectrum, &'s SplitSpectrum, &'s [f64]),
    Complex(&'s SplitSpectrum),
}

/// `out[b] += amp[b] * exp(-j 2 pi b delay / n_fft)`, with `delay` in
/// samples. The phase is exact at each block start and built from a per-call
/// table inside the block.
fn accumulate_delayed(out: &mut SplitSpectrum, amp: Amplitude<'_>, delay: f64, n_fft: usize) {
    #[cfg(target_arch = "x86_64")]
    match vector_width() {
        // SAFETY: the CPU supports the feature, checked at runtime.
        Width::Avx512 => return unsafe { accumulate_delayed_avx512(out, amp, delay, n_fft) },
        Width::Avx2 => return unsafe { accumulate_delayed_avx2(out, amp, delay, n_fft) },
        Width::Baseline => {}
    }
    accumulate_delayed_impl(out, amp, delay, n_fft)
}

#[cfg(target_arch = "x86_64")]
#[derive(Clone, Copy)]
enum Width {
    Baseline,
    Avx2,
    Avx512,
}

#[cfg(target_arch = "x86_64")]
fn vector_width() -> Width {
    static DETECTED: std::sync::OnceLock<Width> = std::sync::OnceLock::new();
    *DETECTED.get_or_init(|| {
        if std::arch::is_x86_feature_detected!("avx512f") {
            Width::Avx512
        } else if std::arch::is_x86_feature_detected!("avx2") {
            Width::Avx2
        } else {
            Width::Baseline
        }
    })
}

// Same arithmetic as the generic path, compiled for wider registers. No FMA
// is enabled, so results are bitwise identical.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn accumulate_delayed_avx2(out: &mut SplitSpectrum, amp: Amplitude<'_>, delay: f64, n_fft: usize) {
    accumulate_delayed_impl(out, amp, delay, n_fft)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn accumulate_delayed_avx512(out: &mut SplitSpectrum, amp: Amplitude<'_>, delay: f64, n_fft: usize) {
    accumulate_delayed_impl(out, amp, delay, n_fft)
}

#[inline(always)]
fn accumulate_delayed_impl(out: &mut SplitSpectrum, amp: Amplitude<'_>, delay: f64, n_fft: usize) {
    let cycles_per_bin = delay / n_fft as f64;
    let step = -2.0 * PI * cycles_per_bin;
    let mut tab_re = [0.0; PHASE_BLOCK];
    let mut tab_im = [0.0; PHASE_BLOCK];
    for j in 0..PHASE_BLOCK {
        let (s, c) = (step * j as f64).sin_cos();
        tab_re[j] = c;
        tab_im[j] = s;
    }
    let bins = out.re.len();
    let mut start = 0;
    while start < bins {
        let end = (start + PHASE_BLOCK).min(bins);
        let turns = cycles_per_bin * start as f64;
        let (bs, bc) = (-2.0 * PI * (turns - turns.floor())).sin_cos();
        let o_re = &mut out.re[start..end];
        let o_im = &mut out.im[start..end];
        let len = end - start;
        let (t_re, t_im) = (&tab_re[..len], &tab_im[..len]);
        match amp {
            Amplitude::Real(g) => {
                let g = &g[start..end];
                for j in 0..len {
                    let pr = bc * t_re[j] - bs * t_im[j];
                    let pi = bc * t_im[j] + bs * t_re[j];
                    o_re[j] += g[j] * pr;
                    o_im[j] += g[j] * pi;
                }
            }
            Amplitude::Product(u, w, g) => {
                let (u_re, u_im) = (&u.re[start..end], &u.im[start..end]);
                let (w_re, w_im, g) = (&w.re[start..end], &w.im[start..end], &g[start..end]);
                for j in 0..len {
                    let pr = (bc * t_re[j] - bs * t_im[j]) * g[j];
                    let pi = (bc * t_im[j] + bs * t_re[j]) * g[j];
                    let zr = u_re[j] * w_re[j] - u_im[j] * w_im[j];
                    let zi = u_re[j] * w_im[j] + u_im[j] * w_re[j];
                    o_re[j] += zr * pr - zi * pi;
                    o_im[j] += zr * pi + zi * pr;
                }
            }
            Amplitude::Complex(z) => {
                let (z_re, z_im) = (&z.re[start..end], &z.im[start..end]);
                for j in 0..len {
                    let pr = bc * t_re[j] - bs * t_im[j];
                    let pi = bc * t_im[j] + bs * t_re[j];
                    o_re[j] += z_re[j] * pr - z_im[j] * pi;
                    o_im[j] += z_re[j] * pi + z_im[j] * pr;
                }
            }
        }
        start = end;
    }
}

/// Compound reflection spectrum as a product of two factors; `None` when
/// frequency-flat.
type Reflection<'s> = Option<(&'s SplitSpectrum, &'s SplitSpectrum)>;

/// Scratch state for one image at one channel: a real gain, promoted to a
/// full complex spectrum only when a pattern has complex gains.
struct Work {
    gain: Vec<f64>,
    amp: SplitSpectrum,
    complex: bool,
}

impl Work {
    fn promote(&mut self, refl: Reflection<'_>) {
        if self.complex {
            return;
        }
        match refl {
            Some((u, w)) => {
                for b in 0..self.gain.len() {
                    let zr = u.re[b] * w.re[b] - u.im[b] * w.im[b];
                    let zi = u.re[b] * w.im[b] + u.im[b] * w.re[b];
                    self.amp.re[b] = zr * self.gain[b];
                    self.amp.im[b] = zi * self.gain[b];
                }
            }
            None => {
                self.amp.re.copy_from_slice(&self.gain);
                self.amp.im.fill(0.0);
            }
        }
        self.complex = true;
    }

    fn scale_real(&mut self, from: usize, to: usize, g0: f64, dg: f64, t: &[f64]) {
        let targets: [&mut [f64]; 2] = if self.complex {
            [&mut self.amp.re[from..to], &mut self.amp.im[from..to]]
        } else {
            [&mut self.gain[from..to], &mut []]
        };
        for v in targets {
            for (a, t) in v.iter_mut().zip(t) {
                *a *= g0 + dg * t;
            }
        }
    }
}

/// Departure direction at the real source for an image reached along
/// `toward_receiver`: mirrored once per odd lattice index.
fn departure_direction(image: &ImageSource, toward_receiver: Vec3) -> Vec3 {
    let flip = |n: i32, v: f64| if n % 2 == 0 { v } else { -v };
    Vec3::new(
        flip(image.lattice[0], toward_receiver.x),
        flip(image.lattice[1], toward_receiver.y),
        flip(image.lattice[2], toward_receiver.z),
    )
}

/// A request with everything that does not depend on the image index
/// precomputed for one DFT size.
pub struct PreparedRequest<'a> {
    req: &'a RirRequest,
    n_fft: usize,
    images: Vec<ImageSource>,
    receivers: Vec<Receiver>,
    source: OrientedPattern,
    /// Per-axis compound reflection spectra indexed by `lattice + max_order`.
    axis_reflections: Option<[Vec<SplitSpectrum>; 3]>,
    /// Naive frequency-flat reflection amplitude.
    flat_reflection: f64,
    air: Option<AirTable>,
    source_brackets: Option<BinBrackets>,
    mic_brackets: Vec<Option<BinBrackets>>,
}

impl<'a> PreparedRequest<'a> {
    pub fn new(req: &'a RirRequest, n_fft: usize) -> Result<Self> {
        req.validate()?;
        if n_fft < 2 || !n_fft.is_power_of_two() {
            return Err(Error::Precondition(format!(
                "n_fft must be a power of two, got {n_fft}"
            )));
        }
        let images = enumerate_images(&req.room, req.source, req.max_order)?;
        let freqs = materials::bin_frequencies(n_fft, req.fs);
        let naive = req.mode == SimulationMode::Naive;

        let receivers = (0..req.array.mics.len())
            .map(|m| Receiver {
                position: req.mic_position(m),
                pattern: if naive {
                    OrientedPattern::omni()
                } else {
                    OrientedPattern::new(req.array.mics[m].directivity.pattern.clone(), req.mic_orientation(m))
                },
            })
            .collect::<Vec<_>>();
        let source = if naive {
            OrientedPattern::omni()
        } else {
            req.source_directivity.clone()
        };

        let (axis_reflections, flat_reflection) = if naive {
            let alpha = req.surfaces.broadband_alpha(&req.room);
            (None, (1.0 - alpha).max(0.0).sqrt())
        } else {
            let spectra = materials::surface_spectra(&req.surfaces, n_fft, req.fs)?;
            (Some(axis_tables(&spectra, req.max_order)), 1.0)
        };

        let brackets = |p: &DirectivityPattern| match p {
            DirectivityPattern::Measured(g) if g.freqs.len() > 1 => Some(BinBrackets::new(&g.freqs, &freqs)),
            _ => None,
        };
        let source_brackets = brackets(&source.pattern);
        let mic_brackets = receivers.iter().map(|r| brackets(&r.pattern.pattern)).collect();

        Ok(PreparedRequest {
            req,
            n_fft,
            images,
            receivers,
            source,
            axis_reflections,
            flat_reflection,
            air: req.air_absorption.then(|| AirTable::new(&freqs)),
            source_brackets,
            mic_brackets,
        })
    }

    pub fn images(&self) -> &[ImageSource] {
        &self.images
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn num_channels(&self) -> usize {
        self.receivers.len()
    }

    /// Multiply the scratch amplitude by a pattern's per-bin gain toward
    /// `direction`.
    fn apply_pattern(
        pattern: &OrientedPattern,
        brackets: Option<&BinBrackets>,
        direction: Vec3,
        work: &mut Work,
        refl: Reflection<'_>,
    ) {
        let local = pattern.orientation.to_local(direction);
        match (&*pattern.pattern, brackets) {
            (DirectivityPattern::Omni, _) => {}
            (DirectivityPattern::Measured(grid), Some(br)) => {
                let g = grid.node_gains(grid.nearest_node(local));
                if g.iter().any(|v| v.im != 0.0) {
                    work.promote(refl);
                }
                for &(from, to, lo) in &br.runs {
                    let g0 = g[lo];
                    let dg = if lo + 1 < g.len() {
                        g[lo + 1] - g0
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    let t = &br.t[from..to];
                    if g0.im == 0.0 && dg.im == 0.0 {
                        work.scale_real(from, to, g0.re, dg.re, t);
                    } else {
                        let re = &mut work.amp.re[from..to];
                        let im = &mut work.amp.im[from..to];
                        for ((ar, ai), t) in re.iter_mut().zip(im.iter_mut()).zip(t) {
                            let gr = g0.re + dg.re * t;
                            let gi = g0.im + dg.im * t;
                            let r = *ar * gr - *ai * gi;
                            *ai = *ar * gi + *ai * gr;
                            *ar = r;
                        }
                    }
                }
            }
            (p, _) => {
                let g = p.eval_local(local, 0.0);
                if g.im == 0.0 {
                    work.gain.iter_mut().for_each(|a| *a *= g.re);
                    if work.complex {
                        work.amp.re.iter_mut().for_each(|a| *a *= g.re);
                        work.amp.im.iter_mut().for_each(|a| *a *= g.re);
                    }
                } else {
                    work.promote(refl);
                    for (ar, ai) in work.amp.re.iter_mut().zip(work.amp.im.iter_mut()) {
                        let r = *ar * g.re - *ai * g.im;
                        *ai = *ar * g.im + *ai * g.re;
                        *ar = r;
                    }
                }
            }
        }
    }

    fn accumulate_split(&self, images: &[ImageSource], out: &mut [SplitSpectrum]) -> Result<()> {
        let bins = self.bins();
        let mut xy = SplitSpectrum::zeros(bins);
        let mut xy_key = None;
        let mut work = Work {
            gain: vec![0.0; bins],
            amp: SplitSpectrum::zeros(bins),
            complex: false,
        };
        let order_offset = self.req.max_order as i32;
        let fs_over_c = self.req.fs / SPEED_OF_SOUND;
        let array_centered = self.req.array.mode == ReceiverMode::ArrayCentered;

        // Visiting images grouped by their (x, y) lattice pair lets the
        // product of those two axis spectra be reused.
        let mut visit: Vec<&ImageSource> = images.iter().collect();
        if self.axis_reflections.is_some() {
            visit.sort_by_key(|img| (img.lattice[0], img.lattice[1], img.lattice[2]));
        }

        for image in visit {
            let idx = |a: usize| (image.lattice[a] + order_offset) as usize;
            let (flat_gain, refl): (f64, Reflection<'_>) = match &self.axis_reflections {
                Some([tx, ty, tz]) => {
                    let key = (image.lattice[0], image.lattice[1]);
                    if xy_key != Some(key) {
                        xy.re.copy_from_slice(&tx[idx(0)].re);
                        xy.im.copy_from_slice(&tx[idx(0)].im);
                        xy.mul_assign(&ty[idx(1)]);
                        xy_key = Some(key);
                    }
                    (1.0, Some((&xy, &tz[idx(2)])))
                }
                None => (self.flat_reflection.powi(image.order as i32), None),
            };
            let shared = if array_centered {
                Some(point_geometry(image.position, self.req.array_center)?)
            } else {
                None
            };

            for (m, (rcv, spectrum)) in self.receivers.iter().zip(out.iter_mut()).enumerate() {
                // `dir` points from the receiver toward the image.
                let (r, dir) = match shared {
                    Some(g) => g,
                    None => point_geometry(image.position, rcv.position)?,
                };
                work.complex = false;
                work.gain.fill(flat_gain / r);
                if let Some(air) = &self.air {
                    air.apply(r, &mut work.gain);
                }
                Self::apply_pattern(
                    &self.source,
                    self.source_brackets.as_ref(),
                    departure_direction(image, -dir),
                    &mut work,
                    refl,
                );
                Self::apply_pattern(&rcv.pattern, self.mic_brackets[m].as_ref(), dir, &mut work, refl);
                let amp = match (work.complex, refl) {
                    (true, _) => Amplitude::Complex(&work.amp),
                    (false, Some((u, w))) => Amplitude::Product(u, w, &work.gain),
                    (false, None) => Amplitude::Real(&work.gain),
                };
                accumulate_delayed(spectrum, amp, r * fs_over_c, self.n_fft);
            }
        }
        Ok(())
    }

    /// Add the contributions of `images` to per-channel spectra `out`.
    pub fn accumulate(&self, images: &[ImageSource], out: &mut [Vec<Complex64>]) -> Result<()> {
        let mut split: Vec<SplitSpectrum> = out.iter().map(|c| SplitSpectrum::from_complex(c)).collect();
        self.accumulate_split(images, &mut split)?;
        for (o, s) in out.iter_mut().zip(&split) {
            *o = s.to_complex();
        }
        Ok(())
    }

    fn sum_images(&self, images: &[ImageSource]) -> Result<Vec<Vec<Complex64>>> {
        let mut out = vec![SplitSpectrum::zeros(self.bins()); self.receivers.len()];
        self.accumulate_split(images, &mut out)?;
        Ok(out.iter().map(SplitSpectrum::to_complex).collect())
    }

    /// Multichannel transfer function over all images.
    pub fn transfer_function(&self) -> Result<Vec<Vec<Complex64>>> {
        self.sum_images(&self.images)
    }

    /// Transfer function of the `k`-th image alone.
    pub fn image_transfer(&self, k: usize) -> Result<Vec<Vec<Complex64>>> {
        self.sum_images(&self.images[k..=k])
    }
}

/// Compound reflection spectrum for every lattice index on each axis.
fn axis_tables(surface: &[ReflectionSpectrum], max_order: u32) -> [Vec<SplitSpectrum>; 3] {
    let n = max_order as usize;
    std::array::from_fn(|axis| {
        let lo = SplitSpectrum::from_complex(&surface[2 * axis].gains);
        let hi = SplitSpectrum::from_complex(&surface[2 * axis + 1].gains);
        let bins = lo.re.len();
        let mut unity = SplitSpectrum::zeros(bins);
        unity.re.fill(1.0);
        let mut table = vec![unity; 2 * n + 1];
        for m in 1..=n {
            // Index +m gains a hit on the high wall when m is odd, -m on the
            // low wall.
            let (up, down) = if m % 2 == 1 { (&hi, &lo) } else { (&lo, &hi) };
            let mut next = table[n + m - 1].clone();
            next.mul_assign(up);
            table[n + m] = next;
            let mut next = table[n + 1 - m].clone();
            next.mul_assign(down);
            table[n - m] = next;
        }
        table
    })
}

/// Largest image delay over all channels, in seconds.
pub fn max_image_delay(req: &RirRequest) -> Result<f64> {
    req.validate()?;
    let images = enumerate_images(&req.room, req.source, req.max_order)?;
    let points: Vec<Vec3> = match req.array.mode {
        ReceiverMode::ArrayCentered => vec![req.array_center],
        ReceiverMode::PerMicrophone => (0..req.array.mics.len()).map(|m| req.mic_position(m)).collect(),
    };
    let mut max_r: f64 = 0.0;
    for img in &images {
        for p in &points {
            max_r = max_r.max(img.position.distance(*p));
        }
    }
    Ok(max_r / SPEED_OF_SOUND)
}

/// RIR length in samples: the next power of two covering the farthest image,
/// the longest band reverberation time and a guard interval.
pub fn rir_length(req: &RirRequest) -> Result<usize> {
    let t60 = materials::eyring_t60(&req.room, &req.effective_surfaces()?)?
        .into_iter()
        .fold(0.0, f64::max);
    let seconds = max_image_delay(req)? + t60 + TAIL_GUARD_S;
    let samples = (req.fs * seconds).ceil() as usize;
    let n = samples.max(2).next_power_of_two();
    if n > req.max_samples {
        return Err(Error::RequestTooLong {
            samples: n,
            cap: req.max_samples,
        });
    }
    Ok(n)
}

/// Per-channel transfer functions on an `n_fft`-point grid.
pub fn transfer_function(req: &RirRequest, n_fft: usize) -> Result<Vec<Vec<Complex64>>> {
    PreparedRequest::new(req, n_fft)?.transfer_function()
}

/// Inverse real DFT of each channel spectrum, normalized.
pub fn spectra_to_time(spectra: Vec<Vec<Complex64>>, n_fft: usize) -> Vec<Vec<f64>> {
    let scale = 1.0 / n_fft as f64;
    spectra
        .into_iter()
        .map(|mut s| {
            let mut h = fft::inverse_real(&mut s, n_fft);
            h.iter_mut().for_each(|v| *v *= scale);
            h
        })
        .collect()
}

pub fn synthesize_rir(req: &RirRequest) -> Result<Rir> {
    let n = rir_length(req)?;
    let spectra = transfer_function(req, n)?;
    Ok(Rir {
        channels: spectra_to_time(spectra, n),
        fs: req.fs,
        digest: req.digest(),
        seed: req.seed,
    })
}

/// Synthesize many RIRs on `workers` threads. Output order follows input
/// order and each entry carries its own success or failure.
pub fn batch_rirs(requests: &[RirRequest], workers: usize) -> Result<Vec<Result<Rir>>> {
    crate::parallel::map_ordered(requests, workers, |_, req| synthesize_rir(req))
}
