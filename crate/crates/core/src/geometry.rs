//! Shoebox rooms and the image-source lattice.
//!
//! Each image is addressed by a signed lattice index per axis. Index `n` on an
//! axis of length `L` with source coordinate `s` sits at `n*L + s` when `n` is
//! even and at `(n+1)*L - s` when `n` is odd; it has undergone `|n|`
//! reflections on that axis, alternating between the two walls starting with
//! the wall the index points toward.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for a zero-length vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, k: f64) -> Vec3 {
        Vec3::new(self.x / k, self.y / k, self.z / k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// The six boundary planes of a shoebox, in lattice order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    /// x = 0
    West,
    /// x = Lx
    East,
    /// y = 0
    South,
    /// y = Ly
    North,
    /// z = 0
    Floor,
    /// z = Lz
    Ceiling,
}

impl Surface {
    pub const ALL: [Surface; 6] = [
        Surface::West,
        Surface::East,
        Surface::South,
        Surface::North,
        Surface::Floor,
        Surface::Ceiling,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axis(self) -> usize {
        self.index() / 2
    }

    pub fn is_wall(self) -> bool {
        self.axis() < 2
    }

    /// Unit normal pointing into the room.
    pub fn inward_normal(self) -> Vec3 {
        match self {
            Surface::West => Vec3::X,
            Surface::East => -Vec3::X,
            Surface::South => Vec3::Y,
            Surface::North => -Vec3::Y,
            Surface::Floor => Vec3::Z,
            Surface::Ceiling => -Vec3::Z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shoebox {
    pub dims: Vec3,
}

impl Shoebox {
    pub fn new(lx: f64, ly: f64, lz: f64) -> Result<Self> {
        let dims = Vec3::new(lx, ly, lz);
        if !dims.is_finite() || lx <= 0.0 || ly <= 0.0 || lz <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "room dimensions must be positive and finite, got {lx} x {ly} x {lz}"
            )));
        }
        Ok(Shoebox { dims })
    }

    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    pub fn surface_area(&self, surface: Surface) -> f64 {
        let d = self.dims;
        match surface.axis() {
            0 => d.y * d.z,
            1 => d.x * d.z,
            _ => d.x * d.y,
        }
    }

    pub fn total_area(&self) -> f64 {
        Surface::ALL.iter().map(|&s| self.surface_area(s)).sum()
    }

    pub fn contains_strictly(&self, p: Vec3) -> bool {
        p.is_finite()
            && (0..3).all(|i| {
                let c = p.axis(i);
                c > 0.0 && c < self.dims.axis(i)
            })
    }

    /// Smallest distance from `p` to any of the six planes.
    pub fn wall_clearance(&self, p: Vec3) -> f64 {
        (0..3)
            .map(|i| p.axis(i).min(self.dims.axis(i) - p.axis(i)))
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_inside(&self, p: Vec3, what: &str) -> Result<()> {
        if self.contains_strictly(p) {
            Ok(())
        } else {
            Err(Error::InvalidGeometry(format!(
                "{what} at ({}, {}, {}) is not strictly inside the {} x {} x {} room",
                p.x, p.y, p.z, self.dims.x, self.dims.y, self.dims.z
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub position: Vec3,
    pub order: u32,
    /// Reflection counts in [`Surface::ALL`] order.
    pub reflection_counts: [u32; 6],
    /// Signed lattice index per axis.
    pub lattice: [i32; 3],
}

impl ImageSource {
    pub fn reflections_off(&self, surface: Surface) -> u32 {
        self.reflection_counts[surface.index()]
    }
}

/// Position of lattice index `n` along one axis.
pub(crate) fn lattice_coordinate(n: i32, length: f64, source: f64) -> f64 {
    if n % 2 == 0 {
        f64::from(n) * length + source
    } else {
        f64::from(n + 1) * length - source
    }
}

/// `(hits on the low wall, hits on the high wall)` for lattice index `n`.
pub(crate) fn lattice_counts(n: i32) -> (u32, u32) {
    let m = n.unsigned_abs();
    let toward = m.div_ceil(2);
    let away = m / 2;
    if n >= 0 {
        (away, toward)
    } else {
        (toward, away)
    }
}

/// All image sources of order `<= max_order`, sorted by order then by lattice
/// index.
pub fn enumerate_images(room: &Shoebox, source: Vec3, max_order: u32) -> Result<Vec<ImageSource>> {
    room.check_inside(source, "source")?;
    let n = i32::try_from(max_order).map_err(|_| Error::OutOfRange(format!("max_order {max_order} too large")))?;

    let mut images = Vec::new();
    for ix in -n..=n {
        let rem_x = n - ix.abs();
        for iy in -rem_x..=rem_x {
            let rem_y = rem_x - iy.abs();
            for iz in -rem_y..=rem_y {
                images.push(image_at(room, source, [ix, iy, iz]));
            }
        }
    }
    images.sort_by(|a, b| a.order.cmp(&b.order).then(a.lattice.cmp(&b.lattice)));
    Ok(images)
}

pub(crate) fn image_at(room: &Shoebox, source: Vec3, lattice: [i32; 3]) -> ImageSource {
    let mut pos = [0.0; 3];
    let mut counts = [0u32; 6];
    for axis in 0..3 {
        pos[axis] = lattice_coordinate(lattice[axis], room.dims.axis(axis), source.axis(axis));
        let (lo, hi) = lattice_counts(lattice[axis]);
        counts[2 * axis] = lo;
        counts[2 * axis + 1] = hi;
    }
    ImageSource {
        position: Vec3::from_array(pos),
        order: lattice.iter().map(|i| i.unsigned_abs()).sum(),
        reflection_counts: counts,
        lattice,
    }
}

/// Number of images with order exactly `order` in the 3-D lattice.
pub fn images_at_order(order: u32) -> u64 {
    if order == 0 {
        1
    } else {
        let o = u64::from(order);
        4 * o * o + 2
    }
}

/// Distance from `reference` to the image and the unit direction pointing
/// from `reference` toward the image.
pub fn image_geometry(image: &ImageSource, reference: Vec3) -> Result<(f64, Vec3)> {
    point_geometry(image.position, reference)
}

pub(crate) fn point_geometry(point: Vec3, reference: Vec3) -> Result<(f64, Vec3)> {
    let delta = point - reference;
    let r = delta.norm();
    if r <= 0.0 || !r.is_finite() {
        return Err(Error::DegenerateGeometry("image coincides with reference point".into()));
    }
    Ok((r, delta / r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> Shoebox {
        Shoebox::new(4.0, 5.0, 3.0).unwrap()
    }

    #[test]
    fn order_zero_is_the_source() {
        let src = Vec3::new(1.0, 2.0, 0.5);
        let imgs = enumerate_images(&room(), src, 0).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].position, src);
        assert_eq!(imgs[0].order, 0);
        assert_eq!(imgs[0].reflection_counts, [0; 6]);
    }

    #[test]
    fn first_order_has_one_image_per_surface() {
        let imgs = enumerate_images(&room(), Vec3::new(1.0, 1.0, 1.0), 1).unwrap();
        assert_eq!(imgs.len(), 7);
        for s in Surface::ALL {
            let n = imgs
                .iter()
                .filter(|i| i.order == 1 && i.reflections_off(s) == 1)
                .count();
            assert_eq!(n, 1, "{s:?}");
        }
        let west = imgs.iter().find(|i| i.reflections_off(Surface::West) == 1).unwrap();
        assert_eq!(west.position, Vec3::new(-1.0, 1.0, 1.0));
        let ceiling = imgs.iter().find(|i| i.reflections_off(Surface::Ceiling) == 1).unwrap();
        assert_eq!(ceiling.position, Vec3::new(1.0, 1.0, 5.0));
    }

    #[test]
    fn lattice_counts_alternate() {
        assert_eq!(lattice_counts(0), (0, 0));
        assert_eq!(lattice_counts(1), (0, 1));
        assert_eq!(lattice_counts(-1), (1, 0));
        assert_eq!(lattice_counts(2), (1, 1));
        assert_eq!(lattice_counts(3), (1, 2));
        assert_eq!(lattice_counts(-3), (2, 1));
    }

    #[test]
    fn sorted_by_order_then_lattice() {
        let imgs = enumerate_images(&room(), Vec3::new(1.0, 1.0, 1.0), 3).unwrap();
        for w in imgs.windows(2) {
            assert!((w[0].order, w[0].lattice) < (w[1].order, w[1].lattice));
        }
    }

    #[test]
    fn source_on_wall_is_rejected() {
        let err = enumerate_images(&room(), Vec3::new(0.0, 1.0, 1.0), 2).unwrap_err();
        assert!(matches!(err, Error::InvalidGeometry(_)));
        let err = enumerate_images(&room(), Vec3::new(1.0, 6.0, 1.0), 2).unwrap_err();
        assert!(matches!(err, Error::InvalidGeometry(_)));
    }

    #[test]
    fn geometry_examples() {
        let img = |p| ImageSource {
            position: p,
            order: 0,
            reflection_counts: [0; 6],
            lattice: [0; 3],
        };
        let (r, d) = image_geometry(&img(Vec3::new(3.0, 0.0, 0.0)), Vec3::ZERO).unwrap();
        assert_eq!(r, 3.0);
        assert_eq!(d, Vec3::X);
        let (r, d) = image_geometry(&img(Vec3::new(1.0, 1.0, 0.0)), Vec3::ZERO).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        assert!((d.x - 0.5f64.sqrt()).abs() < 1e-15 && (d.y - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            image_geometry(&img(Vec3::ZERO), Vec3::ZERO),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn invalid_room() {
        assert!(Shoebox::new(0.0, 1.0, 1.0).is_err());
        assert!(Shoebox::new(1.0, f64::NAN, 1.0).is_err());
    }
}
