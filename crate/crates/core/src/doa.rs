//! STFT front end and the SRP-PHAT two-microphone direction-of-arrival
//! estimator over [0, 180] degrees.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::ism::SPEED_OF_SOUND;
use crate::records::{fmt_f64, Manifest, ResultRow, ResultsFile, Status};

pub const STFT_FS: f64 = 16000.0;
pub const WINDOW_LEN: usize = 683;
pub const HOP: usize = 341;
pub const N_FFT: usize = 1024;

/// Cross-spectra below this magnitude are skipped.
pub const PHAT_GUARD: f64 = 1e-12;

/// Framing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub fs: f64,
    pub window_len: usize,
    pub hop: usize,
    pub n_fft: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            fs: STFT_FS,
            window_len: WINDOW_LEN,
            hop: HOP,
            n_fft: N_FFT,
        }
    }
}

/// Symmetric Hann window of odd length `n`: the periodic window of period
/// `n - 1` with its closing zero repeated, so half-overlapped copies at hop
/// `(n - 1) / 2` sum to one.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Complex spectrogram per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StftFrames {
    /// `data[channel][frame][bin]`.
    pub data: Vec<Vec<Vec<Complex64>>>,
    pub config: StftConfig,
}

impl StftFrames {
    pub fn num_frames(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn num_bins(&self) -> usize {
        self.config.n_fft / 2 + 1
    }
}

/// Hann-windowed, zero-padded frames at the default 16 kHz configuration.
pub fn stft(x: &[Vec<f64>], fs: f64) -> Result<StftFrames> {
    if fs != STFT_FS {
        return Err(Error::Precondition(format!(
            "STFT expects {STFT_FS} Hz input, got {fs}"
        )));
    }
    stft_with(x, &StftConfig::default())
}

pub fn stft_with(x: &[Vec<f64>], cfg: &StftConfig) -> Result<StftFrames> {
    if cfg.window_len == 0 || cfg.hop == 0 || cfg.n_fft < cfg.window_len {
        return Err(Error::Precondition(format!("invalid STFT configuration {cfg:?}")));
    }
    if x.is_empty() {
        return Err(Error::Empty("no channels".into()));
    }
    let len = x[0].len();
    if let Some(c) = x.iter().find(|c| c.len() != len) {
        return Err(Error::LengthMismatch {
            left: len,
            right: c.len(),
        });
    }
    if len < cfg.window_len {
        return Err(Error::Precondition(format!(
            "signal of {len} samples is shorter than one {}-sample window",
            cfg.window_len
        )));
    }
    let window = hann(cfg.window_len);
    let frames = 1 + (len - cfg.window_len) / cfg.hop;
    let data = x
        .iter()
        .map(|ch| {
            (0..frames)
                .map(|f| {
                    let start = f * cfg.hop;
                    let mut buf = vec![0.0; cfg.n_fft];
                    for (k, w) in window.iter().enumerate() {
                        buf[k] = ch[start + k] * w;
                    }
                    fft::forward_real(&mut buf)
                })
                .collect()
        })
        .collect();
    Ok(StftFrames { data, config: *cfg })
}

/// Candidate angles `0, step, ..., 180` degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaGrid {
    pub angles: Vec<f64>,
}

impl DoaGrid {
    pub fn uniform(step_deg: f64) -> Result<Self> {
        let n = 180.0 / step_deg;
        if !(step_deg > 0.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::Precondition(format!("grid step {step_deg} does not divide 180")));
        }
        let n = n.round() as usize;
        Ok(DoaGrid {
            angles: (0..=n).map(|i| i as f64 * 180.0 / n as f64).collect(),
        })
    }
}

impl Default for DoaGrid {
    fn default() -> Self {
        DoaGrid::uniform(1.0).expect("1 degree divides 180")
    }
}

/// Estimator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SrpConfig {
    pub grid: DoaGrid,
    /// Hz, inclusive.
    pub band: (f64, f64),
}

impl Default for SrpConfig {
    fn default() -> Self {
        SrpConfig {
            grid: DoaGrid::default(),
            band: (100.0, 7600.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    pub doa_hat: f64,
    /// Score per grid angle, normalized by the number of contributing
    /// time-frequency points.
    pub pseudo_spectrum: Vec<f64>,
}

/// Far-field time difference `t1 - t2` for a source at `theta_deg` from the
/// mic-1-to-mic-2 axis.
pub fn tdoa(aperture: f64, theta_deg: f64) -> f64 {
    aperture * theta_deg.to_radians().cos() / SPEED_OF_SOUND
}

pub fn srp_phat(frames: &StftFrames, aperture: f64, cfg: &SrpConfig) -> Result<DoaEstimate> {
    if frames.data.len() != 2 {
        return Err(Error::Precondition(format!(
            "SRP-PHAT needs 2 channels, got {}",
            frames.data.len()
        )));
    }
    if !(aperture > 0.0 && aperture.is_finite()) {
        return Err(Error::Precondition(format!(
            "aperture must be positive, got {aperture}"
        )));
    }
    let fs = frames.config.fs;
    let n_fft = frames.config.n_fft;
    let (lo, hi) = cfg.band;
    if !(0.0 <= lo && lo <= hi && hi <= fs / 2.0) {
        return Err(Error::Precondition(format!(
            "band [{lo}, {hi}] outside [0, {}]",
            fs / 2.0
        )));
    }
    if cfg.grid.angles.is_empty() {
        return Err(Error::Precondition("empty angle grid".into()));
    }
    let bins: Vec<usize> = (0..frames.num_bins())
        .filter(|&b| {
            let f = b as f64 * fs / n_fft as f64;
            f >= lo && f <= hi
        })
        .collect();

    // The frame sum commutes with steering, so phase-normalized cross-spectra
    // are accumulated per bin first.
    let mut acc = vec![Complex64::new(0.0, 0.0); bins.len()];
    let mut terms = 0usize;
    for (x1, x2) in frames.data[0].iter().zip(&frames.data[1]) {
        for (a, &b) in acc.iter_mut().zip(&bins) {
            let cross = x1[b] * x2[b].conj();
            let mag = cross.norm();
            if mag >= PHAT_GUARD {
                *a += cross / mag;
                terms += 1;
            }
        }
    }
    if terms == 0 {
        return Err(Error::NoEstimate("no time-frequency point above the PHAT guard".into()));
    }

    let pseudo_spectrum: Vec<f64> = cfg
        .grid
        .angles
        .iter()
        .map(|&theta| {
            let tau = tdoa(aperture, theta);
            let s: f64 = acc
                .iter()
                .zip(&bins)
                .map(|(a, &b)| {
                    let w = 2.0 * PI * b as f64 * fs / n_fft as f64;
                    (a * Complex64::from_polar(1.0, w * tau)).re
                })
                .sum();
            s / terms as f64
        })
        .collect();

    let mut best = 0;
    for (i, &s) in pseudo_spectrum.iter().enumerate() {
        let b = pseudo_spectrum[best];
        let closer = (cfg.grid.angles[i] - 90.0).abs() < (cfg.grid.angles[best] - 90.0).abs();
        if s > b || (s == b && closer) {
            best = i;
        }
    }
    Ok(DoaEstimate {
        doa_hat: cfg.grid.angles[best],
        pseudo_spectrum,
    })
}

/// Full pipeline for one two-channel recording.
pub fn estimate(x: &[Vec<f64>], fs: f64, aperture: f64, cfg: &SrpConfig) -> Result<DoaEstimate> {
    srp_phat(&stft(x, fs)?, aperture, cfg)
}

/// Settings for evaluating a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub srp: SrpConfig,
    /// Overrides the aperture recorded in the manifest header.
    pub aperture: Option<f64>,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            srp: SrpConfig::default(),
            aperture: None,
            workers: 1,
        }
    }
}

/// Run SRP-PHAT on every manifest entry. Audio paths are resolved against
/// `base_dir`. A failing row is recorded with an error status and the run
/// continues.
pub fn evaluate_dataset(manifest: &Manifest, base_dir: &Path, cfg: &EvalConfig) -> Result<ResultsFile> {
    let aperture = match cfg.aperture {
        Some(a) => a,
        None => {
            let raw = manifest
                .get("aperture_m")
                .ok_or_else(|| Error::Precondition("manifest has no aperture_m and none was given".into()))?;
            raw.parse::<f64>()
                .map_err(|_| Error::Precondition(format!("manifest aperture_m is not a number: {raw:?}")))?
        }
    };
    let rows = crate::parallel::map_ordered(&manifest.entries, cfg.workers, |_, e| {
        let outcome = crate::wav::read(&base_dir.join(&e.wav))
            .and_then(|(fs, audio)| estimate(&audio, f64::from(fs), aperture, &cfg.srp));
        match outcome {
            Ok(est) => ResultRow {
                id: e.id.clone(),
                doa_true: e.doa_true,
                doa_hat: est.doa_hat,
                error_deg: (est.doa_hat - e.doa_true).abs(),
                status: Status::Ok,
            },
            Err(err) => ResultRow {
                id: e.id.clone(),
                doa_true: e.doa_true,
                doa_hat: f64::NAN,
                error_deg: f64::NAN,
                status: Status::Error(err.to_string()),
            },
        }
    })?;
    let step = cfg.srp.grid.angles.get(1).map_or(0.0, |a| a - cfg.srp.grid.angles[0]);
    let mut header = vec![
        ("estimator".to_string(), "srp_phat".to_string()),
        ("aperture_m".to_string(), fmt_f64(aperture)),
        ("grid_step_deg".to_string(), fmt_f64(step)),
        (
            "band_hz".to_string(),
            format!("{}..{}", fmt_f64(cfg.srp.band.0), fmt_f64(cfg.srp.band.1)),
        ),
        ("window".to_string(), WINDOW_LEN.to_string()),
        ("hop".to_string(), HOP.to_string()),
        ("n_fft".to_string(), N_FFT.to_string()),
    ];
    for key in ["profile", "mode", "seed", "n"] {
        if let Some(v) = manifest.get(key) {
            header.push((format!("dataset_{key}"), v.to_string()));
        }
    }
    Ok(ResultsFile { header, rows })
}
