//! Run configuration file.
//!
//! A TOML document of flat keys plus optional `[noise]` and `[estimator]`
//! tables:
//!
//! ```toml
//! profile = "voicehome"        # voicehome | dirha | starss
//! mode = "advanced"            # naive | advanced
//! n = 200
//! seed = 7                     # required, here or on the command line
//! out = "data/advanced"
//! speech_dir = "speech"        # optional; synthetic utterances otherwise
//! source_pattern = "talker.dir" # optional measured source directivity
//! aperture_m = 0.104           # optional; profile default otherwise
//! max_order = 20
//! air_absorption = true
//! validation_fraction = 0.05
//! workers = 1
//!
//! [noise]
//! enabled = true
//! snr_mean_db = 40.0
//! snr_sd_db = 10.0
//! snr_min_db = 15.0
//! snr_max_db = 75.0
//! white_fraction = 0.1
//! late_onset_s = 0.05
//!
//! [estimator]
//! grid_step_deg = 1.0
//! band_low_hz = 100.0
//! band_high_hz = 7600.0
//! threshold_deg = 10.0
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Command-line flags take precedence over file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ismf_core::doa::{DoaGrid, EvalConfig, SrpConfig};
use ismf_core::ism::SimulationMode;
use ismf_core::metrics::DEFAULT_THRESHOLD_DEG;
use ismf_core::scenario::{NoiseConfig, Profile};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Option<Profile>,
    pub mode: Option<SimulationMode>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub speech_dir: Option<PathBuf>,
    pub source_pattern: Option<PathBuf>,
    pub aperture_m: Option<f64>,
    pub max_order: Option<u32>,
    pub air_absorption: Option<bool>,
    pub validation_fraction: Option<f64>,
    pub workers: Option<usize>,
    pub noise: Option<NoiseConfig>,
    pub estimator: Option<EstimatorConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub grid_step_deg: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub threshold_deg: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let srp = SrpConfig::default();
        EstimatorConfig {
            grid_step_deg: 1.0,
            band_low_hz: srp.band.0,
            band_high_hz: srp.band.1,
            threshold_deg: DEFAULT_THRESHOLD_DEG,
        }
    }
}

impl EstimatorConfig {
    pub fn to_eval(&self, aperture: Option<f64>, workers: usize) -> Result<EvalConfig, CliError> {
        let grid = DoaGrid::uniform(self.grid_step_deg).map_err(CliError::config)?;
        let (lo, hi) = (self.band_low_hz, self.band_high_hz);
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(CliError::Config(format!("estimator band {lo}..{hi} Hz is empty")));
        }
        if !(self.threshold_deg > 0.0) {
            return Err(CliError::Config(format!(
                "threshold {} must be positive",
                self.threshold_deg
            )));
        }
        if let Some(a) = aperture {
            if !(a > 0.0 && a.is_finite()) {
                return Err(CliError::Config(format!("aperture must be positive, got {a}")));
            }
        }
        if workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(EvalConfig {
            srp: SrpConfig { grid, band: (lo, hi) },
            aperture,
            workers,
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.out, &mut cfg.speech_dir, &mut cfg.source_pattern]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn estimator(&self) -> EstimatorConfig {
        self.estimator.clone().unwrap_or_default()
    }
}
