//! One-particle phase-space densities f(r, v) on the torus cross velocity
//! space, and the standard smooth families used throughout the crate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mollifier::Mollifier;
use crate::torus::{min_image, TorusPoint, Vec3};

/// Whether field values count particles per volume or mass per volume. The
/// two conventions differ only by the particle mass factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    PerVolume,
    PerMass,
}

/// Coarse regularity tag: smooth closed-form fields versus kernel-smoothed
/// sums of near-delta terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    Smooth,
    MollifiedDelta,
}

/// A one-particle density. Evaluators must be safe for concurrent reads;
/// all methods are pure functions of the arguments.
pub trait PhaseField: Sync {
    /// Density value at position `r`, velocity `v`. Must be non-negative
    /// and finite wherever the collision operator probes it.
    fn eval(&self, r: TorusPoint, v: Vec3) -> f64;

    fn normalization(&self) -> Normalization {
        Normalization::PerVolume
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Smooth
    }

    /// True when `eval` ignores `r`. The collision operator uses this to
    /// hoist position-independent factors out of its direction loop.
    fn is_spatially_uniform(&self) -> bool {
        false
    }

    /// Closed-form velocity marginal at `r` (the integral of f over all
    /// velocities), when one is available.
    fn spatial_density(&self, _r: TorusPoint) -> Option<f64> {
        None
    }
}

impl<T: PhaseField + ?Sized> PhaseField for &T {
    fn eval(&self, r: TorusPoint, v: Vec3) -> f64 {
        (**self).eval(r, v)
    }
    fn normalization(&self) -> Normalization {
        (**self).normalization()
    }
    fn smoothness(&self) -> Smoothness {
        (**self).smoothness()
    }
    fn is_spatially_uniform(&self) -> bool {
        (**self).is_spatially_uniform()
    }
    fn spatial_density(&self, r: TorusPoint) -> Option<f64> {
        (**self).spatial_density(r)
    }
}

/// Unit-mass Gaussian in velocity with mean `mean` and temperature `theta`
/// (variance per axis).
#[inline]
pub fn maxwellian3(v: Vec3, mean: Vec3, theta: f64) -> f64 {
    let d = v - mean;
    let s = 2.0 * PI * theta;
    (-d.norm_sq() / (2.0 * theta)).exp() / (s * s.sqrt())
}

/// One Gaussian stream: density weight, drift velocity, temperature.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MaxwellianComponent {
    pub weight: f64,
    pub mean: Vec3,
    pub theta: f64,
}

impl MaxwellianComponent {
    fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::InvalidParam(format!(
                "component weight must be finite and non-negative, got {}",
                self.weight
            )));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::InvalidParam(format!(
                "temperature must be positive and finite, got {}",
                self.theta
            )));
        }
        if !self.mean.is_finite() {
            return Err(Error::InvalidParam("component mean must be finite".into()));
        }
        Ok(())
    }
}

/// Spatially uniform mixture of Gaussian streams.
///
/// Construction precompiles each stream's normalization so that the hot
/// evaluation path costs one exponential per stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "UniformFieldData", into = "UniformFieldData")]
pub struct UniformField {
    components: Vec<MaxwellianComponent>,
    compiled: Vec<CompiledGaussian>,
}

#[derive(Clone, Copy, Debug)]
struct CompiledGaussian {
    mean: Vec3,
    neg_inv_two_theta: f64,
    weighted_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct UniformFieldData {
    components: Vec<MaxwellianComponent>,
}

impl TryFrom<UniformFieldData> for UniformField {
    type Error = Error;
    fn try_from(data: UniformFieldData) -> Result<UniformField> {
        UniformField::new(data.components)
    }
}

impl From<UniformField> for UniformFieldData {
    fn from(f: UniformField) -> UniformFieldData {
        UniformFieldData { components: f.components }
    }
}

impl UniformField {
    pub fn new(components: Vec<MaxwellianComponent>) -> Result<UniformField> {
        if components.is_empty() {
            return Err(Error::InvalidParam("field needs at least one component".into()));
        }
        for c in &components {
            c.validate()?;
        }
        let compiled = components
            .iter()
            .map(|c| {
                let s = 2.0 * PI * c.theta;
                CompiledGaussian {
                    mean: c.mean,
                    neg_inv_two_theta: -1.0 / (2.0 * c.theta),
                    weighted_norm: c.weight / (s * s.sqrt()),
                }
            })
            .collect();
        Ok(UniformField { components, compiled })
    }

    /// Single stream at rest.
    pub fn maxwellian(density: f64, mean: Vec3, theta: f64) -> Result<UniformField> {
        UniformField::new(vec![MaxwellianComponent { weight: density, mean, theta }])
    }

    /// Two equal-weight streams drifting at +/- `drift`.
    pub fn bimodal(density: f64, drift: Vec3, theta: f64) -> Result<UniformField> {
        UniformField::new(vec![
            MaxwellianComponent { weight: 0.5 * density, mean: drift, theta },
            MaxwellianComponent { weight: 0.5 * density, mean: -drift, theta },
        ])
    }

    pub fn components(&self) -> &[MaxwellianComponent] {
        &self.components
    }

    pub fn density(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Velocity profile, independent of position.
    #[inline]
    pub fn velocity_profile(&self, v: Vec3) -> f64 {
        let mut total = 0.0;
        for g in &self.compiled {
            let d = v - g.mean;
            total += g.weighted_norm * (d.norm_sq() * g.neg_inv_two_theta).exp();
        }
        total
    }
}

impl PhaseField for UniformField {
    fn eval(&self, _r: TorusPoint, v: Vec3) -> f64 {
        self.velocity_profile(v)
    }

    fn is_spatially_uniform(&self) -> bool {
        true
    }

    fn spatial_density(&self, _r: TorusPoint) -> Option<f64> {
        Some(self.density())
    }
}

/// Maxwellian velocity profile with a sinusoidal density modulation along x:
/// rho(x) = density (1 + amplitude sin(2 pi k x / L)).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModulatedField {
    pub density: f64,
    pub mean: Vec3,
    pub theta: f64,
    pub amplitude: f64,
    pub mode: u32,
    pub l: f64,
}

impl ModulatedField {
    pub fn new(
        density: f64,
        mean: Vec3,
        theta: f64,
        amplitude: f64,
        mode: u32,
        l: f64,
    ) -> Result<ModulatedField> {
        MaxwellianComponent { weight: density, mean, theta }.validate()?;
        if !(amplitude.abs() <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "modulation amplitude must lie in [-1, 1] to keep the field non-negative, got {amplitude}"
            )));
        }
        if !(l > 0.0) || !l.is_finite() || mode == 0 {
            return Err(Error::InvalidParam(format!(
                "modulation needs positive period length and mode, got {l}, {mode}"
            )));
        }
        Ok(ModulatedField { density, mean, theta, amplitude, mode, l })
    }

    fn modulation(&self, x: f64) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * self.mode as f64 * x / self.l).sin()
    }
}

impl PhaseField for ModulatedField {
    fn eval(&self, r: TorusPoint, v: Vec3) -> f64 {
        self.density * self.modulation(r.x()) * maxwellian3(v, self.mean, self.theta)
    }

    fn spatial_density(&self, r: TorusPoint) -> Option<f64> {
        Some(self.density * self.modulation(r.x()))
    }
}

/// Sum of compact spatial bumps sharing one Maxwellian velocity profile.
/// Each center carries a mass weight; the spatial factor is the unit-mass
/// product kernel of width `eps_r`, evaluated through the shortest torus
/// displacement.
#[derive(Clone, Debug)]
pub struct BumpClusterField {
    pub centers: Vec<(TorusPoint, f64)>,
    pub eps_r: f64,
    pub theta: f64,
    pub l: f64,
}

impl BumpClusterField {
    pub fn new(
        centers: Vec<(TorusPoint, f64)>,
        eps_r: f64,
        theta: f64,
        l: f64,
    ) -> Result<BumpClusterField> {
        if centers.is_empty() {
            return Err(Error::InvalidParam("bump field needs at least one center".into()));
        }
        if !(eps_r > 0.0) || eps_r >= 0.5 * l {
            return Err(Error::InvalidParam(format!(
                "bump width must be positive and below half the period, got {eps_r} at length {l}"
            )));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidParam(format!(
                "temperature must be positive and finite, got {theta}"
            )));
        }
        for (_, w) in &centers {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "bump weight must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(BumpClusterField { centers, eps_r, theta, l })
    }

    fn kernel(&self) -> Mollifier {
        Mollifier { eps_r: self.eps_r, eps_v: 1.0 }
    }
}

impl PhaseField for BumpClusterField {
    fn eval(&self, r: TorusPoint, v: Vec3) -> f64 {
        self.spatial_density(r).unwrap_or(0.0) * maxwellian3(v, Vec3::ZERO, self.theta)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::MollifiedDelta
    }

    fn spatial_density(&self, r: TorusPoint) -> Option<f64> {
        let kernel = self.kernel();
        let total = self
            .centers
            .iter()
            .map(|(c, w)| w * kernel.spatial(min_image(r, *c, self.l)))
            .sum();
        Some(total)
    }
}
