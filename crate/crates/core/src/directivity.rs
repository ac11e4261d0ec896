//! Source and receiver directional responses.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const PATTERN_MAGIC: &str = "ISMF-DIR v1";

const ORTHONORMAL_TOL: f64 = 1e-9;
const DIRECTION_TOL: f64 = 1e-6;

/// Local frame of a directional device: `look` is the main axis, `up` fixes
/// the roll.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub look: Vec3,
    pub up: Vec3,
}

impl Default for Orientation {
    fn default() -> Self {
        Orientation {
            look: Vec3::X,
            up: Vec3::Z,
        }
    }
}

impl Orientation {
    pub fn new(look: Vec3, up: Vec3) -> Result<Self> {
        let ok = (look.norm() - 1.0).abs() <= ORTHONORMAL_TOL
            && (up.norm() - 1.0).abs() <= ORTHONORMAL_TOL
            && look.dot(up).abs() <= ORTHONORMAL_TOL;
        if !ok {
            return Err(Error::Precondition("orientation vectors must be orthonormal".into()));
        }
        Ok(Orientation { look, up })
    }

    /// Looking along `look`, with `up` as close to +z as possible.
    pub fn facing(look: Vec3) -> Result<Self> {
        let look = look
            .normalized()
            .ok_or_else(|| Error::Precondition("zero look vector".into()))?;
        let hint = if look.z.abs() > 0.9 { Vec3::X } else { Vec3::Z };
        let up = (hint - look * hint.dot(look))
            .normalized()
            .expect("hint is not parallel to look");
        Orientation::new(look, up)
    }

    /// Horizontal look direction at `azimuth` radians from +x, up = +z.
    pub fn horizontal(azimuth: f64) -> Self {
        Orientation {
            look: Vec3::new(azimuth.cos(), azimuth.sin(), 0.0),
            up: Vec3::Z,
        }
    }

    pub fn left(&self) -> Vec3 {
        self.up.cross(self.look)
    }

    /// Coordinates of a world vector in the (look, left, up) frame.
    pub fn to_local(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(self.look), v.dot(self.left()), v.dot(self.up))
    }

    pub fn to_world(&self, v: Vec3) -> Vec3 {
        self.look * v.x + self.left() * v.y + self.up * v.z
    }

    /// Compose: interpret `inner` as expressed in this frame.
    pub fn compose(&self, inner: &Orientation) -> Orientation {
        Orientation {
            look: self.to_world(inner.look),
            up: self.to_world(inner.up),
        }
    }
}

/// Measured response on an azimuth x elevation grid, several frequencies per
/// direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridData")]
pub struct MeasuredGrid {
    /// Hz, strictly increasing.
    pub freqs: Vec<f64>,
    /// Degrees.
    pub azimuths: Vec<f64>,
    /// Degrees.
    pub elevations: Vec<f64>,
    /// Direction-major (azimuth, then elevation), frequency-minor.
    pub gains: Vec<Complex64>,
    #[serde(skip)]
    node_dirs: Vec<Vec3>,
}

#[derive(Deserialize)]
struct GridData {
    freqs: Vec<f64>,
    azimuths: Vec<f64>,
    elevations: Vec<f64>,
    gains: Vec<Complex64>,
}

impl TryFrom<GridData> for MeasuredGrid {
    type Error = Error;
    fn try_from(d: GridData) -> Result<Self> {
        MeasuredGrid::new(d.freqs, d.azimuths, d.elevations, d.gains)
    }
}

impl PartialEq for MeasuredGrid {
    fn eq(&self, other: &Self) -> bool {
        self.freqs == other.freqs
            && self.azimuths == other.azimuths
            && self.elevations == other.elevations
            && self.gains == other.gains
    }
}

fn unit_from_angles(az_deg: f64, el_deg: f64) -> Vec3 {
    let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

impl MeasuredGrid {
    pub fn new(freqs: Vec<f64>, azimuths: Vec<f64>, elevations: Vec<f64>, gains: Vec<Complex64>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::Precondition("measured grid needs a frequency".into()));
        }
        if freqs.iter().any(|f| !f.is_finite() || *f < 0.0) || freqs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition(
                "frequency axis must be finite, non-negative and strictly increasing".into(),
            ));
        }
        if azimuths.len() * elevations.len() < 4 {
            return Err(Error::Precondition("measured grid needs at least 4 directions".into()));
        }
        if azimuths.iter().chain(&elevations).any(|a| !a.is_finite()) {
            return Err(Error::Precondition("non-finite grid angle".into()));
        }
        let expected = azimuths.len() * elevations.len() * freqs.len();
        if gains.len() != expected {
            return Err(Error::LengthMismatch {
                left: gains.len(),
                right: expected,
            });
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::Precondition("non-finite gain".into()));
        }
        let mut grid = MeasuredGrid {
            freqs,
            azimuths,
            elevations,
            gains,
            node_dirs: Vec::new(),
        };
        grid.build_nodes();
        Ok(grid)
    }

    /// Sample `f(direction, frequency)` on the grid.
    pub fn sample(
        freqs: Vec<f64>,
        azimuths: Vec<f64>,
        elevations: Vec<f64>,
        f: impl Fn(Vec3, f64) -> Complex64,
    ) -> Result<Self> {
        let mut gains = Vec::with_capacity(azimuths.len() * elevations.len() * freqs.len());
        for &az in &azimuths {
            for &el in &elevations {
                let d = unit_from_angles(az, el);
                for &fr in &freqs {
                    gains.push(f(d, fr));
                }
            }
        }
        MeasuredGrid::new(freqs, azimuths, elevations, gains)
    }

    fn build_nodes(&mut self) {
        self.node_dirs = self
            .azimuths
            .iter()
            .flat_map(|&az| self.elevations.iter().map(move |&el| unit_from_angles(az, el)))
            .collect();
    }

    pub fn num_directions(&self) -> usize {
        self.azimuths.len() * self.elevations.len()
    }

    pub fn node_direction(&self, node: usize) -> Vec3 {
        self.node_dirs[node]
    }

    /// Index of the grid direction closest to `local` (first one on ties).
    pub fn nearest_node(&self, local: Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, d) in self.node_dirs.iter().enumerate() {
            let dot = d.dot(local);
            if dot > best_dot {
                best_dot = dot;
                best = i;
            }
        }
        best
    }

    pub fn node_gains(&self, node: usize) -> &[Complex64] {
        let nf = self.freqs.len();
        &self.gains[node * nf..(node + 1) * nf]
    }

    pub fn gain_at(&self, node: usize, f: f64) -> Complex64 {
        let (lo, t) = frequency_bracket(&self.freqs, f);
        let g = self.node_gains(node);
        if t == 0.0 {
            g[lo]
        } else {
            g[lo] * (1.0 - t) + g[lo + 1] * t
        }
    }
}

/// Lower bracketing index and linear weight of `f` on `axis`, flat outside.
pub(crate) fn frequency_bracket(axis: &[f64], f: f64) -> (usize, f64) {
    if axis.len() == 1 || f <= axis[0] {
        return (0, 0.0);
    }
    let last = axis.len() - 1;
    if f >= axis[last] {
        return (last, 0.0);
    }
    let i = axis.partition_point(|&x| x <= f) - 1;
    (i, (f - axis[i]) / (axis[i + 1] - axis[i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirectivityPattern {
    Omni,
    /// `(a + (1 - a) cos θ)^order`.
    Cardioid {
        order: u32,
        a: f64,
    },
    /// Unit gain in the front half-space (grazing included), zero behind.
    HalfSphere,
    Measured(MeasuredGrid),
}

impl DirectivityPattern {
    pub fn cardioid(a: f64) -> Self {
        DirectivityPattern::Cardioid { order: 1, a }
    }

    pub fn is_omni(&self) -> bool {
        matches!(self, DirectivityPattern::Omni)
    }

    /// Gain for a direction already expressed in the device frame.
    pub fn eval_local(&self, local: Vec3, f: f64) -> Complex64 {
        match self {
            DirectivityPattern::Omni => Complex64::new(1.0, 0.0),
            DirectivityPattern::Cardioid { order, a } => {
                Complex64::new((a + (1.0 - a) * local.x).powi(*order as i32), 0.0)
            }
            DirectivityPattern::HalfSphere => Complex64::new(if local.x >= 0.0 { 1.0 } else { 0.0 }, 0.0),
            DirectivityPattern::Measured(grid) => grid.gain_at(grid.nearest_node(local), f),
        }
    }

    /// Whether the gain depends on frequency.
    pub fn is_frequency_dependent(&self) -> bool {
        matches!(self, DirectivityPattern::Measured(g) if g.freqs.len() > 1)
    }
}

/// Complex gain of `pattern`, mounted with `orientation`, toward the world
/// unit vector `direction` at frequency `f`.
pub fn eval_pattern(
    pattern: &DirectivityPattern,
    orientation: &Orientation,
    direction: Vec3,
    f: f64,
) -> Result<Complex64> {
    if (direction.norm() - 1.0).abs() > DIRECTION_TOL {
        return Err(Error::Precondition(format!(
            "direction must be a unit vector (norm {})",
            direction.norm()
        )));
    }
    Ok(pattern.eval_local(orientation.to_local(direction), f))
}

/// A pattern together with the way it is mounted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedPattern {
    pub pattern: Arc<DirectivityPattern>,
    pub orientation: Orientation,
}

impl OrientedPattern {
    pub fn omni() -> Self {
        OrientedPattern {
            pattern: Arc::new(DirectivityPattern::Omni),
            orientation: Orientation::default(),
        }
    }

    pub fn new(pattern: Arc<DirectivityPattern>, orientation: Orientation) -> Self {
        OrientedPattern { pattern, orientation }
    }

    pub fn eval(&self, direction: Vec3, f: f64) -> Result<Complex64> {
        eval_pattern(&self.pattern, &self.orientation, direction, f)
    }
}

/// Half-space receiver looking along the inward wall normal.
pub fn wall_mount(inward_normal: Vec3) -> Result<OrientedPattern> {
    if (inward_normal.norm() - 1.0).abs() > DIRECTION_TOL {
        return Err(Error::Precondition("wall normal must be unit-norm".into()));
    }
    Ok(OrientedPattern {
        pattern: Arc::new(DirectivityPattern::HalfSphere),
        orientation: Orientation::facing(inward_normal)?,
    })
}

fn default_azimuths() -> Vec<f64> {
    (0..36).map(|i| f64::from(i) * 10.0).collect()
}

fn default_elevations() -> Vec<f64> {
    (0..19).map(|i| -90.0 + f64::from(i) * 10.0).collect()
}

/// Frequency-dependent talker stand-in: nearly omnidirectional at low
/// frequencies, narrowing toward a front lobe with a -20 dB rear floor at
/// high frequencies. Sampled on a 10° grid.
pub fn synthetic_talker() -> DirectivityPattern {
    let freqs = vec![125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];
    let a_at = [0.95, 0.9, 0.8, 0.65, 0.5, 0.4, 0.35];
    let grid = MeasuredGrid::sample(freqs.clone(), default_azimuths(), default_elevations(), |d, f| {
        let i = freqs.iter().position(|&x| x == f).expect("sampled on axis");
        let a = a_at[i];
        Complex64::new((a + (1.0 - a) * d.x).max(0.1), 0.0)
    })
    .expect("static grid is valid");
    DirectivityPattern::Measured(grid)
}

/// Capsule on a small rigid baffle: mild first-order directivity toward the
/// outward normal.
pub fn baffled_capsule() -> DirectivityPattern {
    DirectivityPattern::Cardioid { order: 1, a: 0.7 }
}

/// Serialize a measured grid in the `ISMF-DIR v1` text format.
pub fn pattern_to_string(grid: &MeasuredGrid) -> String {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    let _ = writeln!(out, "{PATTERN_MAGIC}");
    let _ = writeln!(
        out,
        "counts {} {} {}",
        grid.freqs.len(),
        grid.azimuths.len(),
        grid.elevations.len()
    );
    let _ = writeln!(out, "freqs {}", join(&grid.freqs));
    let _ = writeln!(out, "azimuths {}", join(&grid.azimuths));
    let _ = writeln!(out, "elevations {}", join(&grid.elevations));
    let mut idx = 0;
    for az in &grid.azimuths {
        for el in &grid.elevations {
            for f in &grid.freqs {
                let g = grid.gains[idx];
                let _ = writeln!(out, "{az:?} {el:?} {f:?} {:?} {:?}", g.re, g.im);
                idx += 1;
            }
        }
    }
    out
}

pub fn save_pattern(grid: &MeasuredGrid, path: &Path) -> Result<()> {
    std::fs::write(path, pattern_to_string(grid)).map_err(|e| Error::io(path, e))
}

pub fn load_pattern(path: &Path) -> Result<DirectivityPattern> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pattern(&text, Some(path)).map(DirectivityPattern::Measured)
}

/// Parse the `ISMF-DIR v1` format. Blank lines and `#` comments are ignored.
pub fn parse_pattern(text: &str, path: Option<&Path>) -> Result<MeasuredGrid> {
    let err = |line: usize, msg: String| Error::format(path, line, msg);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut next = |what: &str| {
        lines.next().ok_or_else(|| {
            err(
                text.lines().count() + 1,
                format!("unexpected end of file, expected {what}"),
            )
        })
    };

    let (ln, magic) = next("header")?;
    if magic != PATTERN_MAGIC {
        return Err(err(ln, format!("bad magic {magic:?}, expected {PATTERN_MAGIC:?}")));
    }

    let keyed = |ln: usize, line: &str, key: &str| -> Result<Vec<f64>> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(err(ln, format!("expected `{key}` line")));
        }
        parts
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| err(ln, format!("cannot parse number {t:?}")))
            })
            .collect()
    };

    let (ln, line) = next("counts")?;
    let counts = keyed(ln, line, "counts")?;
    if counts.len() != 3 || counts.iter().any(|c| *c < 0.0 || c.fract() != 0.0) {
        return Err(err(ln, "counts line needs three non-negative integers".into()));
    }
    let (nf, naz, nel) = (counts[0] as usize, counts[1] as usize, counts[2] as usize);
    if nf < 1 {
        return Err(err(ln, "at least one frequency is required".into()));
    }
    if naz * nel < 4 {
        return Err(err(ln, format!("{} directions given, at least 4 required", naz * nel)));
    }

    let mut axis = |key: &str, n: usize| -> Result<Vec<f64>> {
        let (ln, line) = next(key)?;
        let v = keyed(ln, line, key)?;
        if v.len() != n {
            return Err(err(ln, format!("{key}: expected {n} values, found {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(err(ln, format!("{key}: non-finite value")));
        }
        if key == "freqs" && (v.windows(2).any(|w| !(w[0] < w[1])) || v.iter().any(|f| *f < 0.0)) {
            return Err(err(
                ln,
                "frequency axis must be non-negative and strictly increasing".into(),
            ));
        }
        Ok(v)
    };
    let freqs = axis("freqs", nf)?;
    let azimuths = axis("azimuths", naz)?;
    let elevations = axis("elevations", nel)?;

    let mut gains = Vec::with_capacity(nf * naz * nel);
    for az in &azimuths {
        for el in &elevations {
            for f in &freqs {
                let (ln, line) = next("gain row")?;
                let nums: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| err(ln, format!("cannot parse number {t:?}")))
                    })
                    .collect::<Result<_>>()?;
                if nums.len() != 5 {
                    return Err(err(ln, format!("gain row needs 5 fields, found {}", nums.len())));
                }
                if nums[0] != *az || nums[1] != *el || nums[2] != *f {
                    return Err(err(
                        ln,
                        format!(
                            "row ({} {} {}) out of order, expected ({az} {el} {f})",
                            nums[0], nums[1], nums[2]
                        ),
                    ));
                }
                if !nums[3].is_finite() || !nums[4].is_finite() {
                    return Err(err(ln, "non-finite gain".into()));
                }
                gains.push(Complex64::new(nums[3], nums[4]));
            }
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, "trailing data after last gain row".into()));
    }
    MeasuredGrid::new(freqs, azimuths, elevations, gains).map_err(|e| err(0, e.to_string()))
}
