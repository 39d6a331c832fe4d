//! Flat 3-torus geometry: wrapped points, minimum-image displacements, and
//! the periodic image lattice that collision prediction searches.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Free vector in R^3: velocities, displacements, collision normals.
/// Serializes as a 3-element array.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub fn new(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Vec3 {
        Vec3 { x: a[0], y: a[1], z: a[2] }
    }

    /// Componentwise maximum of absolute values.
    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(3)?;
        t.serialize_element(&self.x)?;
        t.serialize_element(&self.y)?;
        t.serialize_element(&self.z)?;
        t.end()
    }
}

struct Vec3Visitor;

impl<'de> Visitor<'de> for Vec3Visitor {
    type Value = Vec3;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("an array of three numbers")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Vec3, A::Error> {
        let x = seq.next_element()?.ok_or_else(|| serde::de::Error::invalid_length(0, &self))?;
        let y = seq.next_element()?.ok_or_else(|| serde::de::Error::invalid_length(1, &self))?;
        let z = seq.next_element()?.ok_or_else(|| serde::de::Error::invalid_length(2, &self))?;
        Ok(Vec3::new(x, y, z))
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Vec3, D::Error> {
        d.deserialize_tuple(3, Vec3Visitor)
    }
}

/// Position on the torus [0, L)^3. Constructed through `wrap`, which
/// maintains the coordinate range. Serializes as a 3-element array.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TorusPoint {
    x: f64,
    y: f64,
    z: f64,
}

impl TorusPoint {
    #[inline]
    pub fn x(self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(self) -> f64 {
        self.y
    }

    #[inline]
    pub fn z(self) -> f64 {
        self.z
    }

    #[inline]
    pub fn as_vec(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Serialize for TorusPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(3)?;
        t.serialize_element(&self.x)?;
        t.serialize_element(&self.y)?;
        t.serialize_element(&self.z)?;
        t.end()
    }
}

#[inline]
fn wrap1(x: f64, l: f64) -> f64 {
    // rem_euclid is exact, but adding l to a tiny negative remainder can
    // round up to l itself; fold that boundary case back to 0.
    let r = x.rem_euclid(l);
    if r >= l {
        0.0
    } else {
        r
    }
}

/// Wrap raw coordinates into [0, L)^3.
pub fn wrap(p: Vec3, l: f64) -> Result<TorusPoint> {
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidParam(format!("box length must be positive and finite, got {l}")));
    }
    if !p.is_finite() {
        return Err(Error::InvalidParam("non-finite coordinate in wrap".into()));
    }
    Ok(TorusPoint { x: wrap1(p.x, l), y: wrap1(p.y, l), z: wrap1(p.z, l) })
}

#[inline]
fn fold1(d: f64, l: f64) -> f64 {
    // Maps into (-L/2, L/2]: the antipodal tie at exactly L/2 resolves to
    // the non-negative representative.
    d - l * (d / l - 0.5).ceil()
}

/// Fold a raw displacement componentwise into (-L/2, L/2].
#[inline]
pub fn min_image_disp(d: Vec3, l: f64) -> Vec3 {
    Vec3::new(fold1(d.x, l), fold1(d.y, l), fold1(d.z, l))
}

/// Shortest displacement d with p = wrap(q + d); each |component| <= L/2,
/// ties broken toward +L/2.
#[inline]
pub fn min_image(p: TorusPoint, q: TorusPoint, l: f64) -> Vec3 {
    min_image_disp(p.as_vec() - q.as_vec(), l)
}

/// Torus distance between two points.
#[inline]
pub fn torus_distance(p: TorusPoint, q: TorusPoint, l: f64) -> f64 {
    min_image(p, q, l).norm()
}

/// Lattice offsets k*L a contact search must scan so that a sphere of
/// diameter `a` starting anywhere in the minimum-image cell and travelling a
/// relative distance of at most `horizon` cannot reach an unlisted image.
/// `horizon = 0` degenerates to the origin cell only.
pub fn image_offsets(a: f64, l: f64, horizon: f64) -> Result<Vec<Vec3>> {
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidParam(format!("box length must be positive and finite, got {l}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParam(format!("sphere diameter must be positive and finite, got {a}")));
    }
    if a >= l / 2.0 {
        return Err(Error::SphereTooLarge { a, l });
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParam(format!("horizon must be non-negative and finite, got {horizon}")));
    }
    let k_max: i64 = if horizon == 0.0 {
        0
    } else {
        (((l / 2.0 + a + horizon) / l).floor() as i64).max(1)
    };
    let mut offsets = Vec::with_capacity(((2 * k_max + 1).pow(3)) as usize);
    for kx in -k_max..=k_max {
        for ky in -k_max..=k_max {
            for kz in -k_max..=k_max {
                offsets.push(Vec3::new(kx as f64 * l, ky as f64 * l, kz as f64 * l));
            }
        }
    }
    Ok(offsets)
}
