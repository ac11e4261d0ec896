//! Randomized two-microphone scenes and dataset generation.
//!
//! Every random quantity of a sample comes from one stream of its seed:
//! room and poses from [`Stream::Geometry`], surfaces from
//! [`Stream::Materials`], device orientations from [`Stream::Directivity`],
//! the dry utterance from [`Stream::Speech`], the crop from [`Stream::Crop`],
//! SNR and noise from [`Stream::Noise`] and the noise-source position from
//! [`Stream::Auxiliary`]. Naive and advanced scenes drawn with one seed
//! therefore share the room and, for arrays placed inside the room, all
//! poses.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::directivity::{self, DirectivityPattern, Orientation, OrientedPattern};
use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{Shoebox, Surface, Vec3};
use crate::ism::{self, ArrayGeometry, Microphone, ReceiverMode, RirRequest, SimulationMode, SPEED_OF_SOUND};
use crate::materials::{self, SurfaceSet};
use crate::records::{Manifest, ManifestEntry, Split};
use crate::rng::{self, Stream};
use crate::speech::{self, SpeechCorpus};

pub const SAMPLE_FS: f64 = 16000.0;
pub const SAMPLE_SECONDS: f64 = 2.0;

/// Minimum source-array and device-wall distance, meters.
pub const MIN_DISTANCE: f64 = 0.3;

/// Room dimension ranges, meters.
pub const ROOM_RANGES: [(f64, f64); 3] = [(3.0, 10.0), (3.0, 10.0), (2.0, 4.5)];

/// Distance of a wall-mounted array from its wall, meters.
pub const WALL_INSET: f64 = 0.01;

pub const MAX_DRAWS: usize = 10_000;
pub const DEFAULT_MAX_ORDER: u32 = 20;

/// Naive-mode target T60 range, seconds.
pub const NAIVE_T60_RANGE: (f64, f64) = (0.2, 1.0);

/// Length of generated synthetic utterances, seconds.
pub const SYNTHETIC_SECONDS: f64 = 3.0;

/// Crop candidates are spaced this many samples apart.
const CROP_HOP: usize = 160;

/// Recording scenario: array aperture, mounting and capsule type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Free-standing pair of omnidirectional capsules, 10.4 cm apart.
    Voicehome,
    /// Wall-mounted pair, 30 cm apart.
    Dirha,
    /// Pair of capsules on a rigid spherical baffle, 6.8 cm apart.
    Starss,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Voicehome, Profile::Dirha, Profile::Starss];

    pub fn aperture(self) -> f64 {
        match self {
            Profile::Voicehome => 0.104,
            Profile::Dirha => 0.30,
            Profile::Starss => 0.068,
        }
    }

    pub fn wall_mounted(self) -> bool {
        self == Profile::Dirha
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Voicehome => "voicehome",
            Profile::Dirha => "dirha",
            Profile::Starss => "starss",
        }
    }

    /// Capsule pattern in advanced mode.
    fn mic_pattern(self) -> PatternSpec {
        match self {
            Profile::Voicehome => PatternSpec::Omni,
            Profile::Dirha => PatternSpec::HalfSphere,
            Profile::Starss => PatternSpec::Baffled,
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Profile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown profile {s:?}")))
    }
}

/// Named directivity, resolved to a pattern when the scene is simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternSpec {
    Omni,
    /// Built-in frequency-dependent talker.
    Talker,
    /// Built-in capsule on a rigid baffle.
    Baffled,
    HalfSphere,
    Cardioid {
        order: u32,
        a: f64,
    },
    /// Measured grid in the `ISMF-DIR v1` text format.
    File {
        path: PathBuf,
    },
}

impl PatternSpec {
    pub fn resolve(&self) -> Result<DirectivityPattern> {
        Ok(match self {
            PatternSpec::Omni => DirectivityPattern::Omni,
            PatternSpec::Talker => directivity::synthetic_talker(),
            PatternSpec::Baffled => directivity::baffled_capsule(),
            PatternSpec::HalfSphere => DirectivityPattern::HalfSphere,
            PatternSpec::Cardioid { order, a } => {
                if !(0.0..=1.0).contains(a) {
                    return Err(Error::Precondition(format!("cardioid parameter {a} outside [0, 1]")));
                }
                DirectivityPattern::Cardioid { order: *order, a: *a }
            }
            PatternSpec::File { path } => directivity::load_pattern(path)?,
        })
    }
}

/// One simulated recording setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub profile: Profile,
    pub mode: SimulationMode,
    pub seed: u64,
    pub fs: f64,
    pub max_order: u32,
    pub air_absorption: bool,
    pub room: Shoebox,
    pub surfaces: SurfaceSet,
    pub source: Vec3,
    /// Unit main axis of the source.
    pub source_look: Vec3,
    pub source_pattern: PatternSpec,
    pub array_center: Vec3,
    /// Unit vector from microphone 1 to microphone 2.
    pub array_axis: Vec3,
    pub aperture: f64,
    pub mic_pattern: PatternSpec,
    /// Unit main axis of each capsule.
    pub mic_looks: [Vec3; 2],
    /// Position of the diffuse-noise source.
    pub noise_source: Vec3,
}

impl SceneSpec {
    pub fn mic_positions(&self) -> [Vec3; 2] {
        let half = self.array_axis * (0.5 * self.aperture);
        [self.array_center - half, self.array_center + half]
    }

    /// Hex SHA-256 of the scene's JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("scene is serializable");
        hex::encode(Sha256::digest(&json))
    }

    /// Scene invariants of the sampler: room ranges, wall clearances and
    /// source-array distance.
    pub fn check_invariants(&self) -> Result<()> {
        for (axis, &(lo, hi)) in ROOM_RANGES.iter().enumerate() {
            let d = self.room.dims.axis(axis);
            if !(lo..=hi).contains(&d) {
                return Err(Error::InvalidGeometry(format!(
                    "room dimension {d} outside [{lo}, {hi}]"
                )));
            }
        }
        if self.room.wall_clearance(self.source) < MIN_DISTANCE {
            return Err(Error::InvalidGeometry("source too close to a wall".into()));
        }
        if self.source.distance(self.array_center) < MIN_DISTANCE {
            return Err(Error::InvalidGeometry("source too close to the array".into()));
        }
        let wall_mounted = self.profile.wall_mounted() && self.mode == SimulationMode::Advanced;
        for p in self.mic_positions() {
            let clearance = self.room.wall_clearance(p);
            let ok = if wall_mounted {
                clearance > 0.0
            } else {
                clearance >= MIN_DISTANCE
            };
            if !ok {
                return Err(Error::InvalidGeometry("microphone too close to a wall".into()));
            }
        }
        Ok(())
    }

    fn request_with(&self, source: Vec3, source_pattern: OrientedPattern) -> Result<RirRequest> {
        if !(self.aperture > 0.0 && self.aperture.is_finite()) {
            return Err(Error::Precondition(format!(
                "aperture must be positive, got {}",
                self.aperture
            )));
        }
        let axis = unit(self.array_axis, "array axis")?;
        let frame = Orientation::facing(axis)?;
        let mic_pattern = Arc::new(self.mic_pattern.resolve()?);
        let mut mics = Vec::with_capacity(2);
        for (k, look) in self.mic_looks.iter().enumerate() {
            let world = Orientation::facing(unit(*look, "microphone look")?)?;
            let local = Orientation {
                look: frame.to_local(world.look),
                up: frame.to_local(world.up),
            };
            let sign = if k == 0 { -0.5 } else { 0.5 };
            mics.push(Microphone {
                offset: Vec3::new(sign * self.aperture, 0.0, 0.0),
                directivity: OrientedPattern::new(mic_pattern.clone(), local),
            });
        }
        Ok(RirRequest {
            room: self.room,
            surfaces: self.surfaces,
            source,
            source_directivity: source_pattern,
            array: ArrayGeometry {
                mics,
                mode: ReceiverMode::PerMicrophone,
            },
            array_center: self.array_center,
            array_orientation: frame,
            fs: self.fs,
            max_order: self.max_order,
            mode: self.mode,
            air_absorption: self.air_absorption,
            max_samples: ism::DEFAULT_MAX_SAMPLES,
            seed: Some(self.seed),
        })
    }

    /// Engine request for the speech source.
    pub fn request(&self) -> Result<RirRequest> {
        let look = unit(self.source_look, "source look")?;
        let pattern = OrientedPattern::new(Arc::new(self.source_pattern.resolve()?), Orientation::facing(look)?);
        self.request_with(self.source, pattern)
    }

    /// Engine request for the omnidirectional diffuse-noise source.
    pub fn noise_request(&self) -> Result<RirRequest> {
        self.request_with(self.noise_source, OrientedPattern::omni())
    }
}

fn unit(v: Vec3, what: &str) -> Result<Vec3> {
    if (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("{what} must be a unit vector")));
    }
    Ok(v)
}

/// Angle in degrees between the microphone axis (mic 1 to mic 2) and the
/// direction from the array center to the source.
pub fn ground_truth_doa(scene: &SceneSpec) -> Result<f64> {
    let [m1, m2] = scene.mic_positions();
    let axis = m2 - m1;
    let to_source = scene.source - scene.array_center;
    let denom = axis.norm() * to_source.norm();
    if denom == 0.0 {
        return Err(Error::DegenerateGeometry(
            "source at the array center or zero aperture".into(),
        ));
    }
    Ok((axis.dot(to_source) / denom).clamp(-1.0, 1.0).acos().to_degrees())
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, room: &Shoebox) -> Vec3 {
    Vec3::new(
        rng.random_range(0.0..room.dims.axis(0)),
        rng.random_range(0.0..room.dims.axis(1)),
        rng.random_range(0.0..room.dims.axis(2)),
    )
}

/// Array pose: center, axis and capsule looks.
type Pose = (Vec3, Vec3, [Vec3; 2]);

fn wall_pose(room: &Shoebox, wall: Surface, u: f64, h: f64, aperture: f64) -> Pose {
    let normal = wall.inward_normal();
    let tangent = Vec3::Z.cross(normal);
    let along_len = if wall.axis() == 0 {
        room.dims.axis(1)
    } else {
        room.dims.axis(0)
    };
    let margin = MIN_DISTANCE.max(0.5 * aperture + WALL_INSET);
    let along = margin + u * (along_len - 2.0 * margin).max(0.0);
    let height = MIN_DISTANCE + h * (room.dims.axis(2) - 2.0 * MIN_DISTANCE);
    let on_wall = if wall.axis() == 0 {
        let x = if normal.x > 0.0 {
            WALL_INSET
        } else {
            room.dims.axis(0) - WALL_INSET
        };
        Vec3::new(x, along, height)
    } else {
        let y = if normal.y > 0.0 {
            WALL_INSET
        } else {
            room.dims.axis(1) - WALL_INSET
        };
        Vec3::new(along, y, height)
    };
    (on_wall, tangent, [normal, normal])
}

/// Draw a scene. Room dimensions are drawn once; source and array poses are
/// redrawn until every constraint holds.
pub fn sample_scene(mode: SimulationMode, profile: Profile, seed: u64) -> Result<SceneSpec> {
    sample_scene_with(mode, profile, profile.aperture(), seed)
}

/// Source clearance and microphone placement test for one candidate pose.
fn pose_ok(room: &Shoebox, source: Vec3, center: Vec3, axis: Vec3, aperture: f64, on_wall: bool) -> bool {
    let half = axis * (0.5 * aperture);
    let mics_ok = [center - half, center + half].iter().all(|&m| {
        if on_wall {
            room.contains_strictly(m)
        } else {
            room.wall_clearance(m) >= MIN_DISTANCE
        }
    });
    room.wall_clearance(source) >= MIN_DISTANCE && source.distance(center) >= MIN_DISTANCE && mics_ok
}

/// [`sample_scene`] with an explicit aperture.
pub fn sample_scene_with(mode: SimulationMode, profile: Profile, aperture: f64, seed: u64) -> Result<SceneSpec> {
    if !(aperture > 0.0 && aperture.is_finite()) {
        return Err(Error::Precondition(format!(
            "aperture must be positive, got {aperture}"
        )));
    }
    let mut geo = rng::stream(seed, Stream::Geometry);
    let dims: Vec<f64> = ROOM_RANGES.iter().map(|&(lo, hi)| geo.random_range(lo..=hi)).collect();
    let room = Shoebox::new(dims[0], dims[1], dims[2])?;
    let wall_mounted = profile.wall_mounted() && mode == SimulationMode::Advanced;
    let walls = [Surface::West, Surface::East, Surface::South, Surface::North];

    let mut found = None;
    for _ in 0..MAX_DRAWS {
        let source = uniform_in(&mut geo, &room);
        let center = uniform_in(&mut geo, &room);
        let azimuth = geo.random_range(0.0..2.0 * PI);
        let wall = walls[geo.random_range(0..walls.len())];
        let (u, h): (f64, f64) = (geo.random(), geo.random());

        // Both poses must be valid for wall-mounted profiles so the accepted
        // draw, and with it the source, does not depend on the mode.
        let free_axis = Vec3::new(azimuth.cos(), azimuth.sin(), 0.0);
        let free = (center, free_axis, [-free_axis, free_axis]);
        let free_ok = pose_ok(&room, source, free.0, free.1, aperture, false);
        let wall = profile.wall_mounted().then(|| wall_pose(&room, wall, u, h, aperture));
        let wall_ok = wall.is_none_or(|w| pose_ok(&room, source, w.0, w.1, aperture, true));
        if free_ok && wall_ok {
            let (center, axis, looks) = if wall_mounted { wall.unwrap() } else { free };
            found = Some((source, center, axis, looks));
            break;
        }
    }
    let (source, array_center, array_axis, mic_looks) = found.ok_or_else(|| {
        Error::Infeasible(format!(
            "{profile} with aperture {aperture} m: no valid pose after {MAX_DRAWS} draws"
        ))
    })?;

    let surfaces = match mode {
        SimulationMode::Naive => {
            let mut mat = rng::stream(seed, Stream::Materials);
            let target: f64 = mat.random_range(NAIVE_T60_RANGE.0..=NAIVE_T60_RANGE.1);
            let (lo, hi) = materials::t60_range(&room);
            materials::sample_naive_absorption(target.clamp(lo.max(1e-6), hi), &room)?
        }
        SimulationMode::Advanced => materials::sample_advanced_absorption(seed),
    };

    let mut dir = rng::stream(seed, Stream::Directivity);
    let source_azimuth = dir.random_range(0.0..2.0 * PI);
    let source_look = Vec3::new(source_azimuth.cos(), source_azimuth.sin(), 0.0);

    let mut aux = rng::stream(seed, Stream::Auxiliary);
    let noise_source = (0..MAX_DRAWS)
        .map(|_| uniform_in(&mut aux, &room))
        .find(|&p| room.wall_clearance(p) >= MIN_DISTANCE && p.distance(array_center) >= MIN_DISTANCE)
        .ok_or_else(|| Error::Infeasible("no valid noise-source position".into()))?;

    let (source_pattern, mic_pattern) = match mode {
        SimulationMode::Naive => (PatternSpec::Omni, PatternSpec::Omni),
        SimulationMode::Advanced => (PatternSpec::Talker, profile.mic_pattern()),
    };

    Ok(SceneSpec {
        profile,
        mode,
        seed,
        fs: SAMPLE_FS,
        max_order: DEFAULT_MAX_ORDER,
        air_absorption: true,
        room,
        surfaces,
        source,
        source_look,
        source_pattern,
        array_center,
        array_axis,
        aperture,
        mic_pattern,
        mic_looks,
        noise_source,
    })
}

/// Additive noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub snr_mean_db: f64,
    pub snr_sd_db: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// Share of the noise power that is white; the rest is diffuse.
    pub white_fraction: f64,
    /// Diffuse noise uses the auxiliary RIR from this long after its direct
    /// arrival, seconds.
    pub late_onset_s: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: true,
            snr_mean_db: 40.0,
            snr_sd_db: 10.0,
            snr_min_db: 15.0,
            snr_max_db: 75.0,
            white_fraction: 0.1,
            late_onset_s: 0.05,
        }
    }
}

impl NoiseConfig {
    pub fn disabled() -> Self {
        NoiseConfig {
            enabled: false,
            ..NoiseConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.snr_mean_db,
            self.snr_sd_db,
            self.snr_min_db,
            self.snr_max_db,
            self.white_fraction,
            self.late_onset_s,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Precondition("noise parameters must be finite".into()));
        }
        if self.snr_min_db >= self.snr_max_db {
            return Err(Error::Precondition(format!(
                "SNR bounds out of order: [{}, {}]",
                self.snr_min_db, self.snr_max_db
            )));
        }
        if self.snr_sd_db <= 0.0 {
            return Err(Error::Precondition("SNR standard deviation must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.white_fraction) {
            return Err(Error::Precondition(format!(
                "white fraction {} outside [0, 1]",
                self.white_fraction
            )));
        }
        if self.late_onset_s < 0.0 {
            return Err(Error::Precondition("late onset must be non-negative".into()));
        }
        Ok(())
    }

    /// SNR in dB from the normal distribution truncated to the configured
    /// bounds, by inverse-CDF sampling.
    pub fn draw_snr<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        let normal = Normal::new(self.snr_mean_db, self.snr_sd_db)
            .map_err(|e| Error::Precondition(format!("SNR distribution: {e}")))?;
        let lo = normal.cdf(self.snr_min_db);
        let hi = normal.cdf(self.snr_max_db);
        let u: f64 = rng.random();
        let snr = normal.inverse_cdf(lo + u * (hi - lo));
        Ok(snr.clamp(self.snr_min_db, self.snr_max_db))
    }
}

/// A rendered two-second two-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `audio[m][t]` = speech image + noise.
    pub audio: Vec<Vec<f64>>,
    pub speech_image: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub fs: f64,
    pub doa_true: f64,
    /// Drawn SNR; infinite when noise is disabled.
    pub snr_db: f64,
    /// Offset of the crop within the reverberant utterance, samples.
    pub crop_start: usize,
}

fn mean_power(channels: &[Vec<f64>]) -> f64 {
    let n: usize = channels.iter().map(Vec::len).sum();
    if n == 0 {
        return 0.0;
    }
    channels.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64
}

/// Measured speech-to-noise power ratio in dB.
pub fn measured_snr(speech_image: &[Vec<f64>], noise: &[Vec<f64>]) -> f64 {
    10.0 * (mean_power(speech_image) / mean_power(noise)).log10()
}

/// Start of a `window`-sample crop of `channels`: uniformly chosen among
/// candidate starts whose RMS is at least half the best candidate's.
pub fn choose_crop<R: Rng + ?Sized>(channels: &[Vec<f64>], window: usize, rng: &mut R) -> Result<usize> {
    let len = channels.first().map_or(0, Vec::len);
    if len < window || window == 0 {
        return Err(Error::NoValidCrop(format!(
            "signal of {len} samples is shorter than the {window}-sample window"
        )));
    }
    let mut prefix = vec![0.0; len + 1];
    for t in 0..len {
        prefix[t + 1] = prefix[t] + channels.iter().map(|c| c[t] * c[t]).sum::<f64>();
    }
    let starts: Vec<usize> = (0..=len - window).step_by(CROP_HOP).collect();
    let energy: Vec<f64> = starts.iter().map(|&s| prefix[s + window] - prefix[s]).collect();
    let best = energy.iter().cloned().fold(0.0, f64::max);
    if !(best > 0.0) {
        return Err(Error::NoValidCrop("input is silent".into()));
    }
    // RMS ratio 0.5 is an energy ratio of 0.25.
    let eligible: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| e >= 0.25 * best)
        .map(|(&s, _)| s)
        .collect();
    Ok(eligible[rng.random_range(0..eligible.len())])
}

/// Reverberate `dry` through the scene, crop two seconds and add noise at a
/// drawn SNR. `dry` must be at the scene's sample rate.
pub fn render_sample(scene: &SceneSpec, dry: &[f64], noise_cfg: &NoiseConfig, seed: u64) -> Result<Sample> {
    let window = (SAMPLE_SECONDS * scene.fs).round() as usize;
    if dry.len() < window {
        return Err(Error::Precondition(format!(
            "dry speech has {} samples, needs at least {window}",
            dry.len()
        )));
    }
    noise_cfg.validate()?;
    let doa_true = ground_truth_doa(scene)?;
    let rir = ism::synthesize_rir(&scene.request()?)?;
    let reverberant: Vec<Vec<f64>> = rir
        .channels
        .iter()
        .map(|h| {
            let mut y = fft::convolve(h, dry);
            y.truncate(dry.len());
            y
        })
        .collect();
    let crop_start = choose_crop(&reverberant, window, &mut rng::stream(seed, Stream::Crop))?;
    let speech_image: Vec<Vec<f64>> = reverberant
        .iter()
        .map(|c| c[crop_start..crop_start + window].to_vec())
        .collect();

    if !noise_cfg.enabled {
        let noise = vec![vec![0.0; window]; speech_image.len()];
        return Ok(Sample {
            audio: speech_image.clone(),
            speech_image,
            noise,
            fs: scene.fs,
            doa_true,
            snr_db: f64::INFINITY,
            crop_start,
        });
    }

    let mut rng = rng::stream(seed, Stream::Noise);
    let snr_db = noise_cfg.draw_snr(&mut rng)?;
    let target = mean_power(&speech_image) / 10f64.powf(snr_db / 10.0);

    let white: Vec<Vec<f64>> = speech_image
        .iter()
        .map(|_| (0..window).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();

    let aux = ism::synthesize_rir(&scene.noise_request()?)?;
    let direct = scene
        .mic_positions()
        .iter()
        .map(|m| m.distance(scene.noise_source))
        .fold(f64::INFINITY, f64::min)
        / SPEED_OF_SOUND;
    let onset = ((direct + noise_cfg.late_onset_s) * scene.fs).ceil() as usize;
    let aux_len = aux.len();
    let shaped = speech::speech_shaped_noise(&mut rng, window + aux_len, scene.fs);
    let diffuse: Vec<Vec<f64>> = aux
        .channels
        .iter()
        .map(|h| {
            let mut late = h.clone();
            late[..onset.min(aux_len)].fill(0.0);
            let y = fft::convolve(&late, &shaped);
            y[aux_len..aux_len + window].to_vec()
        })
        .collect();

    let p_white = mean_power(&white);
    let p_diffuse = mean_power(&diffuse);
    let white_share = if p_diffuse > 0.0 { noise_cfg.white_fraction } else { 1.0 };
    let g_white = if p_white > 0.0 {
        (white_share / p_white).sqrt()
    } else {
        0.0
    };
    let g_diffuse = if p_diffuse > 0.0 {
        ((1.0 - white_share) / p_diffuse).sqrt()
    } else {
        0.0
    };
    let mut noise: Vec<Vec<f64>> = white
        .iter()
        .zip(&diffuse)
        .map(|(w, d)| w.iter().zip(d).map(|(a, b)| g_white * a + g_diffuse * b).collect())
        .collect();
    // The two parts are not exactly orthogonal over a finite window; scale
    // the sum so the total power is exact.
    let g = (target / mean_power(&noise)).sqrt();
    noise.iter_mut().flatten().for_each(|v| *v *= g);

    let audio = speech_image
        .iter()
        .zip(&noise)
        .map(|(s, n)| s.iter().zip(n).map(|(a, b)| a + b).collect())
        .collect();
    Ok(Sample {
        audio,
        speech_image,
        noise,
        fs: scene.fs,
        doa_true,
        snr_db,
        crop_start,
    })
}

/// Everything that determines a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub profile: Profile,
    pub mode: SimulationMode,
    pub n: usize,
    pub seed: u64,
    /// Directory of dry recordings; synthetic utterances when absent.
    pub speech_dir: Option<PathBuf>,
    /// Measured source pattern replacing the built-in talker in advanced
    /// mode.
    pub source_pattern: Option<PathBuf>,
    pub aperture: f64,
    pub max_order: u32,
    pub air_absorption: bool,
    pub noise: NoiseConfig,
    pub validation_fraction: f64,
    pub workers: usize,
}

impl DatasetConfig {
    pub fn new(profile: Profile, mode: SimulationMode, n: usize, seed: u64) -> Self {
        DatasetConfig {
            profile,
            mode,
            n,
            seed,
            speech_dir: None,
            source_pattern: None,
            aperture: profile.aperture(),
            max_order: DEFAULT_MAX_ORDER,
            air_absorption: true,
            noise: NoiseConfig::default(),
            validation_fraction: 0.05,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(0.0..=1.0).contains(&self.validation_fraction) {
            return Err(Error::Precondition(format!(
                "validation fraction {} outside [0, 1]",
                self.validation_fraction
            )));
        }
        if !(self.aperture > 0.0 && self.aperture.is_finite()) {
            return Err(Error::Precondition(format!(
                "aperture must be positive, got {}",
                self.aperture
            )));
        }
        if self.workers == 0 {
            return Err(Error::Precondition("workers must be at least 1".into()));
        }
        if let Some(dir) = &self.speech_dir {
            if !dir.is_dir() {
                return Err(Error::Precondition(format!(
                    "speech directory {} does not exist",
                    dir.display()
                )));
            }
        }
        if let Some(path) = &self.source_pattern {
            if !path.is_file() {
                return Err(Error::Precondition(format!(
                    "pattern file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Provenance pairs recorded in the manifest header.
    pub fn provenance(&self) -> Vec<(String, String)> {
        use crate::records::fmt_f64;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        vec![
            ("profile".into(), self.profile.to_string()),
            ("mode".into(), self.mode.to_string()),
            ("n".into(), self.n.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("aperture_m".into(), fmt_f64(self.aperture)),
            ("fs".into(), fmt_f64(SAMPLE_FS)),
            ("duration_s".into(), fmt_f64(SAMPLE_SECONDS)),
            ("max_order".into(), self.max_order.to_string()),
            ("air_absorption".into(), self.air_absorption.to_string()),
            ("speech_dir".into(), path(&self.speech_dir)),
            ("source_pattern".into(), path(&self.source_pattern)),
            ("noise_enabled".into(), self.noise.enabled.to_string()),
            ("snr_mean_db".into(), fmt_f64(self.noise.snr_mean_db)),
            ("snr_sd_db".into(), fmt_f64(self.noise.snr_sd_db)),
            ("snr_min_db".into(), fmt_f64(self.noise.snr_min_db)),
            ("snr_max_db".into(), fmt_f64(self.noise.snr_max_db)),
            ("white_fraction".into(), fmt_f64(self.noise.white_fraction)),
            ("late_onset_s".into(), fmt_f64(self.noise.late_onset_s)),
            ("validation_fraction".into(), fmt_f64(self.validation_fraction)),
            ("min_distance_m".into(), fmt_f64(MIN_DISTANCE)),
            (
                "naive_t60_range_s".into(),
                format!("{}..{}", fmt_f64(NAIVE_T60_RANGE.0), fmt_f64(NAIVE_T60_RANGE.1)),
            ),
        ]
    }

    /// Scene of sample `index`, as generated.
    pub fn scene(&self, index: usize) -> Result<SceneSpec> {
        let seed = rng::sample_seed(self.seed, index as u64);
        let mut scene = sample_scene_with(self.mode, self.profile, self.aperture, seed)?;
        scene.max_order = self.max_order;
        scene.air_absorption = self.air_absorption;
        if let (SimulationMode::Advanced, Some(path)) = (self.mode, &self.source_pattern) {
            scene.source_pattern = PatternSpec::File { path: path.clone() };
        }
        Ok(scene)
    }
}

pub const MANIFEST_NAME: &str = "manifest.tsv";
pub const AUDIO_DIR: &str = "audio";
pub const SCENE_DIR: &str = "scenes";

fn sample_id(index: usize) -> String {
    format!("{index:06}")
}

fn generate_one(
    cfg: &DatasetConfig,
    corpus: Option<&SpeechCorpus>,
    out_dir: &Path,
    index: usize,
) -> Result<ManifestEntry> {
    let seed = rng::sample_seed(cfg.seed, index as u64);
    let scene = cfg.scene(index)?;
    let mut speech_rng = rng::stream(seed, Stream::Speech);
    let dry = match corpus {
        Some(c) => {
            let window = (SAMPLE_SECONDS * SAMPLE_FS).round() as usize;
            let usable: Vec<&Vec<f64>> = c.utterances.iter().filter(|u| u.len() >= window).collect();
            if usable.is_empty() {
                return Err(Error::Empty("no utterance is at least two seconds long".into()));
            }
            usable[speech_rng.random_range(0..usable.len())].clone()
        }
        None => speech::synthetic_utterance(&mut speech_rng, SAMPLE_FS, SYNTHETIC_SECONDS),
    };
    let sample = render_sample(&scene, &dry, &cfg.noise, seed)?;
    let split = if rng::stream(seed, Stream::Split).random::<f64>() < cfg.validation_fraction {
        Split::Validation
    } else {
        Split::Train
    };

    let id = sample_id(index);
    let wav_rel = format!("{AUDIO_DIR}/{id}.wav");
    crate::wav::write_f32(&out_dir.join(&wav_rel), SAMPLE_FS as u32, &sample.audio)?;
    let scene_path = out_dir.join(SCENE_DIR).join(format!("{id}.json"));
    let json = serde_json::to_string_pretty(&scene)? + "\n";
    std::fs::write(&scene_path, json).map_err(|e| Error::io(&scene_path, e))?;

    Ok(ManifestEntry {
        id,
        wav: wav_rel,
        fs: SAMPLE_FS as u32,
        doa_true: sample.doa_true,
        snr_db: sample.snr_db,
        mode: cfg.mode,
        scene_digest: scene.digest(),
        seed,
        split,
    })
}

/// Render `cfg.n` samples into `out_dir` and write the manifest last. On
/// failure no manifest is left behind.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let corpus = match &cfg.speech_dir {
        Some(dir) => Some(SpeechCorpus::load_dir(dir, SAMPLE_FS)?),
        None => None,
    };
    for sub in [AUDIO_DIR, SCENE_DIR] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let manifest_path = out_dir.join(MANIFEST_NAME);
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    let indices: Vec<usize> = (0..cfg.n).collect();
    let results = crate::parallel::map_ordered(&indices, cfg.workers, |_, &i| {
        generate_one(cfg, corpus.as_ref(), out_dir, i)
    })?;
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        header: cfg.provenance(),
        entries,
    };
    let written = crate::records::save_manifest(&manifest, &manifest_path);
    if written.is_err() {
        let _ = std::fs::remove_file(&manifest_path);
    }
    written.map(|_| manifest)
}
