//! Single-RIR inspection: scene files, the per-image table and the
//! decomposition check.
//!
//! A scene file is either a dataset scene record (`.json`, as written under
//! `scenes/` by `gen`) or a TOML description:
//!
//! ```toml
//! fs = 16000.0                 # default 16000
//! max_order = 2
//! mode = "advanced"            # default naive
//! air_absorption = false       # default true
//! room = [5.0, 4.0, 3.0]
//! source = [1.0, 1.5, 1.6]
//! source_look = [1.0, 0.0, 0.0]       # default +x
//! source_pattern = { kind = "talker" } # default omni
//!
//! [absorption]
//! default = 0.3                # one value, or six band values
//! ceiling = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
//!
//! [[mics]]
//! position = [3.0, 2.0, 1.2]
//! pattern = { kind = "cardioid", order = 1, a = 0.5 }
//! look = [-1.0, 0.0, 0.0]
//!
//! [[mics]]
//! position = [3.1, 2.0, 1.2]
//! ```
//!
//! Surfaces are `west` (x = 0), `east`, `south` (y = 0), `north`, `floor`
//! and `ceiling`. Band values are at 125, 250, 500, 1000, 2000 and 4000 Hz.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use ismf_core::directivity::{Orientation, OrientedPattern};
use ismf_core::geometry::{image_geometry, Shoebox, Surface, Vec3};
use ismf_core::ism::{self, ArrayGeometry, Microphone, PreparedRequest, ReceiverMode, RirRequest, SimulationMode};
use ismf_core::materials::{AbsorptionProfile, SurfaceSet, BAND_CENTERS};
use ismf_core::scenario::{PatternSpec, SceneSpec};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Alphas {
    Flat(f64),
    Bands([f64; 6]),
}

impl Alphas {
    fn profile(&self) -> ismf_core::Result<AbsorptionProfile> {
        match self {
            Alphas::Flat(a) => AbsorptionProfile::flat(*a),
            Alphas::Bands(b) => AbsorptionProfile::octave(*b),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorptionSpec {
    pub default: Alphas,
    pub west: Option<Alphas>,
    pub east: Option<Alphas>,
    pub south: Option<Alphas>,
    pub north: Option<Alphas>,
    pub floor: Option<Alphas>,
    pub ceiling: Option<Alphas>,
}

impl AbsorptionSpec {
    fn surfaces(&self) -> ismf_core::Result<SurfaceSet> {
        let mut set = SurfaceSet::uniform(self.default.profile()?);
        let overrides = [
            &self.west,
            &self.east,
            &self.south,
            &self.north,
            &self.floor,
            &self.ceiling,
        ];
        for (s, o) in Surface::ALL.into_iter().zip(overrides) {
            if let Some(a) = o {
                set.profiles[s.index()] = a.profile()?;
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicSpec {
    pub position: [f64; 3],
    pub pattern: Option<PatternSpec>,
    pub look: Option<[f64; 3]>,
}

fn default_fs() -> f64 {
    16000.0
}

fn default_mode() -> SimulationMode {
    SimulationMode::Naive
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RirSpec {
    #[serde(default = "default_fs")]
    pub fs: f64,
    pub max_order: u32,
    #[serde(default = "default_mode")]
    pub mode: SimulationMode,
    #[serde(default = "default_true")]
    pub air_absorption: bool,
    pub room: [f64; 3],
    pub source: [f64; 3],
    pub source_look: Option<[f64; 3]>,
    pub source_pattern: Option<PatternSpec>,
    pub absorption: AbsorptionSpec,
    pub mics: Vec<MicSpec>,
    pub seed: Option<u64>,
}

fn oriented(pattern: &Option<PatternSpec>, look: Option<[f64; 3]>) -> ismf_core::Result<OrientedPattern> {
    let pattern = pattern.clone().unwrap_or(PatternSpec::Omni).resolve()?;
    let orientation = match look {
        Some(l) => Orientation::facing(Vec3::from_array(l))?,
        None => Orientation::default(),
    };
    Ok(OrientedPattern::new(Arc::new(pattern), orientation))
}

impl RirSpec {
    /// Engine request; the array frame is the world frame centered on the
    /// microphone centroid.
    pub fn request(&self) -> ismf_core::Result<RirRequest> {
        if self.mics.is_empty() {
            return Err(ismf_core::Error::Precondition(
                "at least one [[mics]] entry is required".into(),
            ));
        }
        let room = Shoebox::new(self.room[0], self.room[1], self.room[2])?;
        let positions: Vec<Vec3> = self.mics.iter().map(|m| Vec3::from_array(m.position)).collect();
        let center = positions.iter().fold(Vec3::ZERO, |a, p| a + *p) / positions.len() as f64;
        let mut mics = Vec::with_capacity(self.mics.len());
        for (m, p) in self.mics.iter().zip(&positions) {
            mics.push(Microphone {
                offset: *p - center,
                directivity: oriented(&m.pattern, m.look)?,
            });
        }
        let req = RirRequest {
            room,
            surfaces: self.absorption.surfaces()?,
            source: Vec3::from_array(self.source),
            source_directivity: oriented(&self.source_pattern, self.source_look)?,
            array: ArrayGeometry {
                mics,
                mode: ReceiverMode::PerMicrophone,
            },
            array_center: center,
            array_orientation: Orientation::default(),
            fs: self.fs,
            max_order: self.max_order,
            mode: self.mode,
            air_absorption: self.air_absorption,
            max_samples: ism::DEFAULT_MAX_SAMPLES,
            seed: self.seed,
        };
        req.validate()?;
        Ok(req)
    }
}

/// Load a scene file by extension: `.json` dataset scene or TOML spec.
pub fn load_request(path: &Path) -> Result<RirRequest, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let located = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let scene: SceneSpec = serde_json::from_str(&text).map_err(|e| located(&e))?;
        scene.request().map_err(|e| located(&e))
    } else {
        let spec: RirSpec = toml::from_str(&text).map_err(|e| located(&e))?;
        spec.request().map_err(|e| located(&e))
    }
}

/// Reflection magnitude of every image at the band centers.
fn band_magnitudes(counts: &[u32; 6], surfaces: &SurfaceSet) -> [f64; 6] {
    let mut out = [1.0; 6];
    for s in Surface::ALL {
        let n = counts[s.index()] as i32;
        if n == 0 {
            continue;
        }
        let mags = surfaces.get(s).reflection_magnitudes();
        for (o, m) in out.iter_mut().zip(mags) {
            *o *= m.powi(n);
        }
    }
    out
}

/// Tab-separated table, one row per image: index, order, lattice index,
/// distance and direction from the array center, and the compound
/// reflection magnitude at each band center.
pub fn image_table(req: &RirRequest) -> ismf_core::Result<String> {
    let images = ismf_core::geometry::enumerate_images(&req.room, req.source, req.max_order)?;
    let surfaces = req.effective_surfaces()?;
    let mut out = String::new();
    out.push_str("k\torder\tnx\tny\tnz\tr_m\tazimuth_deg\televation_deg");
    for f in BAND_CENTERS {
        let _ = write!(out, "\td_{f}");
    }
    out.push('\n');
    for (k, img) in images.iter().enumerate() {
        let (r, dir) = image_geometry(img, req.array_center)?;
        let azimuth = dir.y.atan2(dir.x).to_degrees();
        let elevation = dir.z.clamp(-1.0, 1.0).asin().to_degrees();
        let [nx, ny, nz] = img.lattice;
        let _ = write!(
            out,
            "{k}\t{}\t{nx}\t{ny}\t{nz}\t{r:.6}\t{azimuth:.3}\t{elevation:.3}",
            img.order
        );
        for d in band_magnitudes(&img.reflection_counts, &surfaces) {
            let _ = write!(out, "\t{d:.6e}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Largest absolute difference between `rir` and the sum of the
/// time-domain contributions of the individual images, relative to the
/// peak of `rir`.
pub fn decomposition_error(req: &RirRequest, rir: &[Vec<f64>]) -> ismf_core::Result<f64> {
    let n = rir.first().map_or(0, Vec::len);
    let prepared = PreparedRequest::new(req, n)?;
    let mut sum = vec![vec![0.0; n]; rir.len()];
    for k in 0..prepared.images().len() {
        let part = ism::spectra_to_time(prepared.image_transfer(k)?, n);
        for (acc, ch) in sum.iter_mut().zip(&part) {
            acc.iter_mut().zip(ch).for_each(|(a, v)| *a += v);
        }
    }
    let peak = rir.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let dev = sum
        .iter()
        .flatten()
        .zip(rir.iter().flatten())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(if peak > 0.0 { dev / peak } else { dev })
}
