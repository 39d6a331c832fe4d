//! Quadrature evaluation of the hard-sphere collision integral — in its
//! diameter-shifted form and its local zero-diameter-limit form — plus the
//! mean-field acceleration term for a smooth pair potential and a pointwise
//! product-balance diagnostic.
//!
//! All operators are pure functions of an immutable [`PhaseField`]; callers
//! may evaluate them concurrently at many phase-space points.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bev::PairPotential;
use crate::error::{Error, Result};
use crate::hard_sphere::impulse;
use crate::phase_field::PhaseField;
use crate::quadrature::{QuadratureRule, VelocityRule};
use crate::seeding::derive_rng;
use crate::torus::{min_image, wrap, TorusPoint, Vec3};

/// Density-coupling convention fixing the collision prefactor.
///
/// Under `Concentration` the field is normalized per volume and the
/// prefactor is the concentration itself. Under `MassNormalized` the field
/// is normalized against total mass and the prefactor is the mass density
/// divided by the particle mass — numerically equal to the concentration
/// when the mass density is the concentration times the particle mass.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum Coupling {
    Concentration(f64),
    MassNormalized { mass: f64, mass_density: f64 },
}

impl Coupling {
    pub fn prefactor(&self) -> f64 {
        match self {
            Coupling::Concentration(n) => *n,
            Coupling::MassNormalized { mass, mass_density } => mass_density / mass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Coupling::Concentration(n) => {
                if !(*n >= 0.0) || !n.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "concentration must be finite and non-negative, got {n}"
                    )));
                }
            }
            Coupling::MassNormalized { mass, mass_density } => {
                if !(*mass > 0.0) || !mass.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "particle mass must be positive and finite, got {mass}"
                    )));
                }
                if !(*mass_density >= 0.0) || !mass_density.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "mass density must be finite and non-negative, got {mass_density}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn validate_operator_params(a: f64, l: f64, coupling: Coupling) -> Result<()> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidParam(format!("domain length must be positive, got {l}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParam(format!("diameter must be positive, got {a}")));
    }
    if a >= 0.5 * l {
        return Err(Error::SphereTooLarge { a, l });
    }
    coupling.validate()
}

/// Field evaluation with the velocity-cube convention: values at velocities
/// outside the quadrature cube are taken as zero without consulting the
/// field. Negative or NaN values are rejected.
#[inline]
fn eval_checked<F: PhaseField + ?Sized>(
    f: &F,
    r: TorusPoint,
    v: Vec3,
    cube: &VelocityRule,
) -> Result<f64> {
    if !cube.contains(v) {
        return Ok(0.0);
    }
    let val = f.eval(r, v);
    if val.is_nan() || val < 0.0 {
        return Err(Error::NegativeDensity { value: val });
    }
    if !val.is_finite() {
        return Err(Error::NonFinite(format!("field value at {:?}", v.to_array())));
    }
    Ok(val)
}

/// Collision integral with diameter shifts: the gain term pairs the local
/// post-collision value with the partner value a diameter away along the
/// contact direction (`+`), the loss term a diameter away against it (`-`).
///
/// The returned value is
/// `prefactor * a^2 * sum_{sigma} sum_{v2, (v2-v1, sigma) > 0} w * (v2-v1, sigma) *
/// [f(r1, v1') f(r1+a sigma, v2') - f(r1, v1) f(r1-a sigma, v2)]`
/// with `v1' = v1 + sigma (v2-v1, sigma)` and `v2' = v2 - sigma (v2-v1, sigma)`.
///
/// For a spatially uniform field the shifts are skipped, making the
/// evaluation bit-identical to [`st_boltzmann`]. The loss-side partner
/// values are then probed at every velocity node regardless of the
/// hemisphere cut.
pub fn st_enskog<F: PhaseField + ?Sized>(
    f: &F,
    r1: TorusPoint,
    v1: Vec3,
    a: f64,
    l: f64,
    coupling: Coupling,
    quad: &QuadratureRule,
) -> Result<f64> {
    st_generic(f, r1, v1, a, l, coupling, quad, !f.is_spatially_uniform())
}

/// Collision integral in the local form: both gain and loss partner values
/// are evaluated at `r1` itself, with no diameter shift.
pub fn st_boltzmann<F: PhaseField + ?Sized>(
    f: &F,
    r1: TorusPoint,
    v1: Vec3,
    a: f64,
    l: f64,
    coupling: Coupling,
    quad: &QuadratureRule,
) -> Result<f64> {
    st_generic(f, r1, v1, a, l, coupling, quad, false)
}

fn st_generic<F: PhaseField + ?Sized>(
    f: &F,
    r1: TorusPoint,
    v1: Vec3,
    a: f64,
    l: f64,
    coupling: Coupling,
    quad: &QuadratureRule,
    shifted: bool,
) -> Result<f64> {
    validate_operator_params(a, l, coupling)?;
    let cube = &quad.velocity;
    let f_v1 = eval_checked(f, r1, v1, cube)?;
    let loss_table: Option<Vec<f64>> = if shifted {
        None
    } else {
        let mut t = Vec::with_capacity(cube.nodes.len());
        for v2 in &cube.nodes {
            t.push(eval_checked(f, r1, *v2, cube)?);
        }
        Some(t)
    };
    let n_axis = cube.axis_nodes.len();
    let mut proj = vec![0.0f64; 3 * n_axis];
    let sig = &quad.sigma;
    let mut total = 0.0;
    for si in 0..sig.nodes.len() {
        let pair = sig.antipodes[si];
        if pair < si {
            continue; // covered by its opposite's fused pass
        }
        let sigma = sig.nodes[si];
        let ws = sig.weights[si];
        let s1 = v1.dot(sigma);
        // Partner-node projections onto sigma factorize over the tensor
        // axes: (v2, sigma) = px[i] + py[j] + pz[k].
        let (px, rest) = proj.split_at_mut(n_axis);
        let (py, pz) = rest.split_at_mut(n_axis);
        for (i, x) in cube.axis_nodes.iter().enumerate() {
            px[i] = sigma.x * x;
            py[i] = sigma.y * x;
            pz[i] = sigma.z * x;
        }
        let mut acc = 0.0;
        let mut idx = 0usize;
        if pair != si && !shifted {
            // Fused pass for an antipodal pair: the opposite direction
            // activates exactly the nodes with projection gap b < 0, with
            // the same impulse sigma * b, so one full-grid sweep with |b|
            // covers both directions.
            let table = loss_table.as_ref().expect("table exists when unshifted");
            for bx in px.iter().map(|p| p - s1) {
                for by in py.iter() {
                    let bxy = bx + by;
                    for bz in pz.iter() {
                        let b = bxy + bz;
                        if b != 0.0 {
                            let imp = sigma * b;
                            let g1 = eval_checked(f, r1, v1 + imp, cube)?;
                            let gain = if g1 == 0.0 {
                                0.0
                            } else {
                                g1 * eval_checked(f, r1, cube.nodes[idx] - imp, cube)?
                            };
                            acc += cube.weights[idx]
                                * b.abs()
                                * (gain - f_v1 * table[idx]);
                        }
                        idx += 1;
                    }
                }
            }
        } else if pair != si {
            let r_plus = wrap(r1.as_vec() + sigma * a, l)?;
            let r_minus = wrap(r1.as_vec() - sigma * a, l)?;
            for bx in px.iter().map(|p| p - s1) {
                for by in py.iter() {
                    let bxy = bx + by;
                    for bz in pz.iter() {
                        let b = bxy + bz;
                        if b != 0.0 {
                            let v2 = cube.nodes[idx];
                            let imp = sigma * b;
                            let (r_gain, r_loss) =
                                if b > 0.0 { (r_plus, r_minus) } else { (r_minus, r_plus) };
                            let g1 = eval_checked(f, r1, v1 + imp, cube)?;
                            let gain = if g1 == 0.0 {
                                0.0
                            } else {
                                g1 * eval_checked(f, r_gain, v2 - imp, cube)?
                            };
                            let loss = if f_v1 == 0.0 {
                                0.0
                            } else {
                                f_v1 * eval_checked(f, r_loss, v2, cube)?
                            };
                            acc += cube.weights[idx] * b.abs() * (gain - loss);
                        }
                        idx += 1;
                    }
                }
            }
        } else {
            // No exact opposite in the rule: hemisphere-restricted pass.
            let (r_gain, r_loss) = if shifted {
                (wrap(r1.as_vec() + sigma * a, l)?, wrap(r1.as_vec() - sigma * a, l)?)
            } else {
                (r1, r1)
            };
            for bx in px.iter().map(|p| p - s1) {
                for by in py.iter() {
                    let bxy = bx + by;
                    for bz in pz.iter() {
                        let b = bxy + bz;
                        if b > 0.0 {
                            let v2 = cube.nodes[idx];
                            let imp = sigma * b;
                            let g1 = eval_checked(f, r1, v1 + imp, cube)?;
                            let gain = if g1 == 0.0 {
                                0.0
                            } else {
                                g1 * eval_checked(f, r_gain, v2 - imp, cube)?
                            };
                            let loss = if f_v1 == 0.0 {
                                0.0
                            } else {
                                f_v1 * match &loss_table {
                                    Some(t) => t[idx],
                                    None => eval_checked(f, r_loss, v2, cube)?,
                                }
                            };
                            acc += cube.weights[idx] * b * (gain - loss);
                        }
                        idx += 1;
                    }
                }
            }
        }
        total += ws * acc;
    }
    Ok(coupling.prefactor() * a * a * total)
}

/// The loss term alone, with the same shift convention as [`st_enskog`]:
/// `prefactor * a^2 * f(r1, v1) * sum w * (v2-v1, sigma)^+ * f(r1-a sigma, v2)`.
/// Useful as a magnitude scale when checking that the full integral
/// vanishes.
pub fn st_loss<F: PhaseField + ?Sized>(
    f: &F,
    r1: TorusPoint,
    v1: Vec3,
    a: f64,
    l: f64,
    coupling: Coupling,
    quad: &QuadratureRule,
) -> Result<f64> {
    validate_operator_params(a, l, coupling)?;
    let cube = &quad.velocity;
    let f_v1 = eval_checked(f, r1, v1, cube)?;
    let shifted = !f.is_spatially_uniform();
    let loss_table: Option<Vec<f64>> = if shifted {
        None
    } else {
        let mut t = Vec::with_capacity(cube.nodes.len());
        for v2 in &cube.nodes {
            t.push(eval_checked(f, r1, *v2, cube)?);
        }
        Some(t)
    };
    let n_axis = cube.axis_nodes.len();
    let mut proj = vec![0.0f64; 3 * n_axis];
    let sig = &quad.sigma;
    let mut total = 0.0;
    for si in 0..sig.nodes.len() {
        let pair = sig.antipodes[si];
        if pair < si {
            continue; // covered by its opposite's fused pass
        }
        let sigma = sig.nodes[si];
        let ws = sig.weights[si];
        let s1 = v1.dot(sigma);
        let (px, rest) = proj.split_at_mut(n_axis);
        let (py, pz) = rest.split_at_mut(n_axis);
        for (i, x) in cube.axis_nodes.iter().enumerate() {
            px[i] = sigma.x * x;
            py[i] = sigma.y * x;
            pz[i] = sigma.z * x;
        }
        let mut acc = 0.0;
        let mut idx = 0usize;
        if pair != si && !shifted {
            let table = loss_table.as_ref().expect("table exists when unshifted");
            for bx in px.iter().map(|p| p - s1) {
                for by in py.iter() {
                    let bxy = bx + by;
                    for bz in pz.iter() {
                        let b = bxy + bz;
                        acc += cube.weights[idx] * b.abs() * table[idx];
                        idx += 1;
                    }
                }
            }
        } else if pair != si {
            let r_plus = wrap(r1.as_vec() + sigma * a, l)?;
            let r_minus = wrap(r1.as_vec() - sigma * a, l)?;
            for bx in px.iter().map(|p| p - s1) {
                for by in py.iter() {
                    let bxy = bx + by;
                    for bz in pz.iter() {
                        let b = bxy + bz;
                        if b != 0.0 {
                            let r_loss = if b > 0.0 { r_minus } else { r_plus };
                            let partner =
                                eval_checked(f, r_loss, cube.nodes[idx], cube)?;
                            acc += cube.weights[idx] * b.abs() * partner;
                        }
                        idx += 1;
                    }
                }
            }
        } else {
            let r_loss =
                if shifted { wrap(r1.as_vec() - sigma * a, l)? } else { r1 };
            for bx in px.iter().map(|p| p - s1) {
                for by in py.iter() {
                    let bxy = bx + by;
                    for bz in pz.iter() {
                        let b = bxy + bz;
                        if b > 0.0 {
                            let partner = match &loss_table {
                                Some(t) => t[idx],
                                None => eval_checked(f, r_loss, cube.nodes[idx], cube)?,
                            };
                            acc += cube.weights[idx] * b * partner;
                        }
                        idx += 1;
                    }
                }
            }
        }
        total += ws * acc;
    }
    Ok(coupling.prefactor() * a * a * f_v1 * total)
}

/// Spatial mass distribution consumed by the mean-field term: either
/// density values on quadrature nodes sharing one cell volume, or discrete
/// point masses.
#[derive(Clone, Debug)]
pub enum SpatialDensity {
    Gridded { nodes: Vec<TorusPoint>, values: Vec<f64>, cell_volume: f64 },
    Points(Vec<(TorusPoint, f64)>),
}

impl SpatialDensity {
    /// Velocity marginal of `f` sampled on the corner-aligned `m`^3 grid
    /// with spacing `l / m`. Uses the field's closed-form marginal when
    /// available, otherwise integrates with the supplied velocity rule.
    pub fn from_field<F: PhaseField + ?Sized>(
        f: &F,
        l: f64,
        m: usize,
        vel: &VelocityRule,
    ) -> Result<SpatialDensity> {
        if !(l > 0.0) || !l.is_finite() || m == 0 {
            return Err(Error::InvalidParam(format!(
                "density grid needs positive length and size, got {l}, {m}"
            )));
        }
        let h = l / m as f64;
        let mut nodes = Vec::with_capacity(m * m * m);
        let mut values = Vec::with_capacity(m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let r = wrap(
                        Vec3::new(i as f64 * h, j as f64 * h, k as f64 * h),
                        l,
                    )?;
                    let rho = match f.spatial_density(r) {
                        Some(v) => v,
                        None => vel
                            .nodes
                            .iter()
                            .zip(&vel.weights)
                            .map(|(v, w)| w * f.eval(r, *v))
                            .sum(),
                    };
                    if rho.is_nan() || rho < 0.0 {
                        return Err(Error::NegativeDensity { value: rho });
                    }
                    if !rho.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "spatial density at node ({i}, {j}, {k})"
                        )));
                    }
                    nodes.push(r);
                    values.push(rho);
                }
            }
        }
        Ok(SpatialDensity::Gridded { nodes, values, cell_volume: h * h * h })
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            SpatialDensity::Gridded { values, cell_volume, .. } => {
                values.iter().sum::<f64>() * cell_volume
            }
            SpatialDensity::Points(points) => points.iter().map(|(_, w)| w).sum(),
        }
    }
}

/// Convolution of the pair-potential gradient with the spatial density:
/// `sum_k mass_k * dPhi/dr1 (|r1 - r_k|)`, distances by minimum image.
/// A source closer than `1e-12 * l` to the probe contributes nothing (the
/// gradient direction is undefined there and a symmetric neighborhood
/// cancels).
pub fn mean_field_gradient(
    rho: &SpatialDensity,
    r1: TorusPoint,
    pot: &PairPotential,
    l: f64,
) -> Result<Vec3> {
    pot.validate(l)?;
    let tiny = 1e-12 * l;
    let mut g = Vec3::ZERO;
    let mut add = |node: TorusPoint, mass: f64| {
        let d = min_image(r1, node, l);
        let s = d.norm();
        if s <= tiny || s >= pot.cutoff {
            return;
        }
        g += d * (pot.dphi(s) / s * mass);
    };
    match rho {
        SpatialDensity::Gridded { nodes, values, cell_volume } => {
            for (node, value) in nodes.iter().zip(values) {
                add(*node, value * cell_volume);
            }
        }
        SpatialDensity::Points(points) => {
            for (node, mass) in points {
                add(*node, *mass);
            }
        }
    }
    Ok(g)
}

/// Mean-field transport term: the density-weighted potential gradient at
/// `r1`, dotted with the velocity gradient of `f` (central differences of
/// step `h_v`), scaled by the coupling prefactor over the particle mass.
pub fn vlasov_term<F: PhaseField + ?Sized>(
    f: &F,
    r1: TorusPoint,
    v1: Vec3,
    pot: &PairPotential,
    coupling: Coupling,
    rho: &SpatialDensity,
    l: f64,
    h_v: f64,
) -> Result<f64> {
    if !(h_v > 0.0) || !h_v.is_finite() {
        return Err(Error::InvalidParam(format!(
            "velocity-difference step must be positive, got {h_v}"
        )));
    }
    coupling.validate()?;
    let g = mean_field_gradient(rho, r1, pot, l)?;
    let diff = |e: Vec3| (f.eval(r1, v1 + e), f.eval(r1, v1 - e));
    let (px, mx) = diff(Vec3::new(h_v, 0.0, 0.0));
    let (py, my) = diff(Vec3::new(0.0, h_v, 0.0));
    let (pz, mz) = diff(Vec3::new(0.0, 0.0, h_v));
    let grad = Vec3::new(px - mx, py - my, pz - mz) * (0.5 / h_v);
    if !grad.is_finite() {
        return Err(Error::NonFinite(format!(
            "velocity gradient of the field at {:?}",
            v1.to_array()
        )));
    }
    Ok(coupling.prefactor() / pot.mass * g.dot(grad))
}

/// Conventional central-difference step for velocity gradients.
pub fn default_velocity_step(velocity_scale: f64) -> f64 {
    1e-4 * velocity_scale
}

/// One probe for the pointwise product-balance diagnostic: a phase-space
/// point, a partner velocity, and an approaching contact direction.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Condition11Sample {
    pub r1: TorusPoint,
    pub v1: Vec3,
    pub v2: Vec3,
    pub sigma: Vec3,
}

/// Deterministic sample set: positions uniform on the torus, velocities
/// Gaussian of the given scale, directions uniform on the sphere flipped
/// into the approaching hemisphere `(v2 - v1, sigma) >= 0`.
pub fn condition11_samples(
    l: f64,
    velocity_scale: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Condition11Sample>> {
    if !(l > 0.0) || !l.is_finite() || !(velocity_scale > 0.0) || !velocity_scale.is_finite() {
        return Err(Error::InvalidParam(format!(
            "sample generation needs positive length and scale, got {l}, {velocity_scale}"
        )));
    }
    let mut rng = derive_rng(seed, "product-balance-samples", 0);
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec3 {
        Vec3::new(
            velocity_scale * rng.sample::<f64, _>(StandardNormal),
            velocity_scale * rng.sample::<f64, _>(StandardNormal),
            velocity_scale * rng.sample::<f64, _>(StandardNormal),
        )
    };
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let r1 = wrap(
            Vec3::new(
                rng.random::<f64>() * l,
                rng.random::<f64>() * l,
                rng.random::<f64>() * l,
            ),
            l,
        )?;
        let v1 = gauss(&mut rng);
        let v2 = gauss(&mut rng);
        let z: f64 = 1.0 - 2.0 * rng.random::<f64>();
        let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        let s = (1.0 - z * z).max(0.0).sqrt();
        let mut sigma = Vec3::new(s * phi.cos(), s * phi.sin(), z);
        if (v2 - v1).dot(sigma) < 0.0 {
            sigma = -sigma;
        }
        samples.push(Condition11Sample { r1, v1, v2, sigma });
    }
    Ok(samples)
}

/// Maximum over the samples of the absolute product imbalance
/// `|f(r1,v1) f(r1-a sigma,v2) - f(r1,v1') f(r1-a sigma,v2')|`,
/// the pointwise condition a density must satisfy to solve the
/// diameter-shifted equation. Geometry parameters must be finite with
/// `l > 0`.
pub fn check_condition_11<F: PhaseField + ?Sized>(
    f: &F,
    a: f64,
    l: f64,
    samples: &[Condition11Sample],
) -> f64 {
    let mut max = 0.0f64;
    for s in samples {
        debug_assert!((s.v2 - s.v1).dot(s.sigma) >= 0.0, "receding sample");
        let r_shift = wrap(s.r1.as_vec() - s.sigma * a, l)
            .expect("finite shift of a valid torus point");
        let p = impulse(s.v1, s.v2, s.sigma);
        let lhs = f.eval(s.r1, s.v1) * f.eval(r_shift, s.v2);
        let rhs = f.eval(s.r1, s.v1 + p) * f.eval(r_shift, s.v2 - p);
        max = max.max((lhs - rhs).abs());
    }
    max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_field::{maxwellian3, BumpClusterField, ModulatedField, UniformField};
    use crate::quadrature::SigmaRule;

    fn probe(x: f64, y: f64, z: f64, l: f64) -> TorusPoint {
        wrap(Vec3::new(x, y, z), l).unwrap()
    }

    struct ZeroField;
    impl PhaseField for ZeroField {
        fn eval(&self, _r: TorusPoint, _v: Vec3) -> f64 {
            0.0
        }
        fn is_spatially_uniform(&self) -> bool {
            true
        }
    }

    struct ScaledField<'a> {
        inner: &'a UniformField,
        c: f64,
    }
    impl PhaseField for ScaledField<'_> {
        fn eval(&self, r: TorusPoint, v: Vec3) -> f64 {
            self.c * self.inner.eval(r, v)
        }
        fn is_spatially_uniform(&self) -> bool {
            true
        }
    }

    #[test]
    fn uniform_maxwellian_integral_vanishes() {
        let f = UniformField::maxwellian(1.2, Vec3::ZERO, 0.85).unwrap();
        let quad = QuadratureRule::standard(0.85f64.sqrt()).unwrap();
        let l = 1.0;
        let r1 = probe(0.3, 0.4, 0.5, l);
        let v1 = Vec3::new(0.4, -0.2, 0.1);
        let coupling = Coupling::Concentration(2.0);
        let a = 0.1;
        let loss = st_loss(&f, r1, v1, a, l, coupling, &quad).unwrap();
        assert!(loss > 0.0);
        let e = st_enskog(&f, r1, v1, a, l, coupling, &quad).unwrap();
        let b = st_boltzmann(&f, r1, v1, a, l, coupling, &quad).unwrap();
        assert!(e.abs() <= 1e-6 * loss, "shifted form {e} vs loss {loss}");
        assert!(b.abs() <= 1e-6 * loss, "local form {b} vs loss {loss}");
    }

    #[test]
    fn zero_field_evaluates_to_zero_exactly() {
        let quad = QuadratureRule::standard(1.0).unwrap();
        let r1 = probe(0.2, 0.2, 0.2, 1.0);
        let v1 = Vec3::new(0.3, 0.0, 0.0);
        let coupling = Coupling::Concentration(1.0);
        let e = st_enskog(&ZeroField, r1, v1, 0.1, 1.0, coupling, &quad).unwrap();
        assert_eq!(e, 0.0);
        let b = st_boltzmann(&ZeroField, r1, v1, 0.1, 1.0, coupling, &quad).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn monte_carlo_oracle_confirms_bimodal_value() {
        let drift = Vec3::new(0.8, 0.0, 0.0);
        let theta = 0.35;
        let f = UniformField::bimodal(1.0, drift, theta).unwrap();
        let scale = 0.8;
        let quad = QuadratureRule::standard(scale).unwrap();
        let fine = QuadratureRule::custom(24, 48, 24, scale).unwrap();
        let l = 1.0;
        let a = 0.1;
        let coupling = Coupling::Concentration(1.0);
        let r1 = probe(0.5, 0.5, 0.5, l);

        // Monte Carlo estimate of the same integral: directions uniform on
        // the sphere, partner velocities uniform in the quadrature cube.
        let v_max = quad.velocity.v_max;
        let inside = |v: Vec3| {
            v.x.abs() <= v_max && v.y.abs() <= v_max && v.z.abs() <= v_max
        };
        let prof = |v: Vec3| if inside(v) { f.velocity_profile(v) } else { 0.0 };
        let measure =
            4.0 * std::f64::consts::PI * (2.0 * v_max).powi(3) * coupling.prefactor() * a * a;
        let mc_estimate = |v1: Vec3, stream: u64| -> (f64, f64) {
            let mut rng = derive_rng(2024, "mc-oracle", stream);
            let samples: u64 = 10_000_000;
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            let f_v1 = prof(v1);
            for _ in 0..samples {
                let z: f64 = 1.0 - 2.0 * rng.random::<f64>();
                let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                let st = (1.0 - z * z).max(0.0).sqrt();
                let sigma = Vec3::new(st * phi.cos(), st * phi.sin(), z);
                let v2 = Vec3::new(
                    (2.0 * rng.random::<f64>() - 1.0) * v_max,
                    (2.0 * rng.random::<f64>() - 1.0) * v_max,
                    (2.0 * rng.random::<f64>() - 1.0) * v_max,
                );
                let b = (v2 - v1).dot(sigma);
                let term = if b > 0.0 {
                    let imp = sigma * b;
                    b * (prof(v1 + imp) * prof(v2 - imp) - f_v1 * prof(v2))
                } else {
                    0.0
                };
                sum += term;
                sum_sq += term * term;
            }
            let n = samples as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            (measure * mean, measure * (var / n).sqrt())
        };

        // Midpoint of the two stream means (near-cancellation there), and
        // one in-stream probe where the integral is clearly resolved.
        for (idx, v1) in [Vec3::ZERO, drift].into_iter().enumerate() {
            let value = st_enskog(&f, r1, v1, a, l, coupling, &quad).unwrap();
            let value_fine = st_enskog(&f, r1, v1, a, l, coupling, &fine).unwrap();
            let (mc, se) = mc_estimate(v1, idx as u64);
            let budget = 3.0 * (se + (value_fine - value).abs());
            assert!(
                (mc - value).abs() <= budget,
                "probe {idx}: mc {mc} vs quadrature {value} (se {se}, refinement shift {})",
                (value_fine - value).abs()
            );
            if idx == 1 {
                // Inside a stream the loss side dominates: the peak erodes
                // toward equilibrium, and the value must be resolved well
                // above the Monte Carlo noise.
                assert!(value < 0.0, "in-stream value {value}");
                assert!(value.abs() > 5.0 * se, "unresolved value {value} vs se {se}");
            }
        }
    }

    #[test]
    fn scaling_field_by_two_scales_integral_by_four_exactly() {
        let inner = UniformField::bimodal(0.9, Vec3::new(0.5, 0.1, 0.0), 0.4).unwrap();
        let scaled = ScaledField { inner: &inner, c: 2.0 };
        let quad = QuadratureRule::standard(0.8).unwrap();
        let l = 1.0;
        let r1 = probe(0.1, 0.6, 0.9, l);
        let v1 = Vec3::new(0.2, -0.4, 0.3);
        let coupling = Coupling::Concentration(1.3);
        let base = st_enskog(&inner, r1, v1, 0.08, l, coupling, &quad).unwrap();
        let four = st_enskog(&scaled, r1, v1, 0.08, l, coupling, &quad).unwrap();
        assert_eq!(four, 4.0 * base);
    }

    #[test]
    fn uniform_field_local_and_shifted_forms_agree_exactly() {
        let f = UniformField::bimodal(1.1, Vec3::new(0.6, 0.0, 0.2), 0.5).unwrap();
        let quad = QuadratureRule::standard(0.9).unwrap();
        let l = 2.0;
        let r1 = probe(1.3, 0.2, 1.9, l);
        let v1 = Vec3::new(-0.3, 0.5, 0.1);
        let coupling = Coupling::Concentration(0.7);
        let e = st_enskog(&f, r1, v1, 0.15, l, coupling, &quad).unwrap();
        let b = st_boltzmann(&f, r1, v1, 0.15, l, coupling, &quad).unwrap();
        assert_eq!(e, b);
    }

    #[test]
    fn mass_normalized_coupling_matches_concentration() {
        let f = UniformField::bimodal(1.0, Vec3::new(0.4, 0.0, 0.0), 0.5).unwrap();
        let quad = QuadratureRule::standard(0.8).unwrap();
        let l = 1.0;
        let r1 = probe(0.4, 0.4, 0.4, l);
        let v1 = Vec3::new(0.1, 0.2, -0.3);
        let n = 1.7;
        let mass = 0.25;
        let by_count = Coupling::Concentration(n);
        let by_mass = Coupling::MassNormalized { mass, mass_density: n * mass };
        assert_eq!(by_count.prefactor(), by_mass.prefactor());
        let a = st_enskog(&f, r1, v1, 0.1, l, by_count, &quad).unwrap();
        let b = st_enskog(&f, r1, v1, 0.1, l, by_mass, &quad).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gap_between_forms_halves_with_diameter() {
        let f = ModulatedField::new(1.0, Vec3::ZERO, 0.6, 0.5, 1, 1.0).unwrap();
        let quad = QuadratureRule::standard(0.6f64.sqrt()).unwrap();
        let l = 1.0;
        let r1 = probe(0.0, 0.3, 0.7, l); // density slope is largest at x = 0
        let v1 = Vec3::new(0.3, -0.1, 0.2);
        let gap = |a: f64, n: f64| {
            let c = Coupling::Concentration(n);
            let e = st_enskog(&f, r1, v1, a, l, c, &quad).unwrap();
            let b = st_boltzmann(&f, r1, v1, a, l, c, &quad).unwrap();
            (e - b).abs()
        };
        // Halving the diameter, holding n a^2 fixed.
        let g1 = gap(0.05, 1.0);
        let g2 = gap(0.025, 4.0);
        assert!(g1 > 1e-9, "gap not resolved: {g1}");
        let ratio = g2 / g1;
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio} (gaps {g1}, {g2})");
    }

    #[test]
    fn collision_moments_vanish_for_uniform_field() {
        let f = UniformField::bimodal(1.0, Vec3::new(0.5, 0.0, 0.0), 0.4).unwrap();
        let quad = QuadratureRule {
            sigma: SigmaRule::product(2, 4),
            velocity: VelocityRule::tensor(18, 0.7).unwrap(),
        };
        let l = 1.0;
        let r1 = probe(0.5, 0.5, 0.5, l);
        let a = 0.1;
        let coupling = Coupling::Concentration(1.0);
        // Integrate st and its loss term against the collision invariants
        // over the rule's own velocity nodes.
        let mut moments = [0.0f64; 5];
        let mut scales = [0.0f64; 5];
        for (v1, w) in quad.velocity.nodes.iter().zip(&quad.velocity.weights) {
            let st = st_enskog(&f, r1, *v1, a, l, coupling, &quad).unwrap();
            let loss = st_loss(&f, r1, *v1, a, l, coupling, &quad).unwrap();
            let psis = [1.0, v1.x, v1.y, v1.z, v1.norm_sq()];
            for (m, psi) in psis.iter().enumerate() {
                moments[m] += w * psi * st;
                scales[m] += w * psi.abs() * loss;
            }
        }
        for m in 0..5 {
            assert!(
                moments[m].abs() <= 1e-5 * scales[m],
                "moment {m}: {} vs loss scale {}",
                moments[m],
                scales[m]
            );
        }
    }

    #[test]
    fn product_balance_vanishes_for_uniform_maxwellian() {
        let f = UniformField::maxwellian(1.0, Vec3::ZERO, 0.9).unwrap();
        let samples = condition11_samples(1.0, 1.0, 2000, 5).unwrap();
        let max = check_condition_11(&f, 0.1, 1.0, &samples);
        assert!(max <= 1e-12, "imbalance {max}");
    }

    #[test]
    fn product_balance_separated_bumps_is_exactly_zero() {
        let l = 1.0;
        let eps = 0.01;
        let a = 0.05; // larger than the bump support diameter 2*sqrt(3)*eps
        let f = BumpClusterField::new(
            vec![
                (probe(0.2, 0.2, 0.2, l), 1.0),
                (probe(0.75, 0.75, 0.75, l), 1.5),
            ],
            eps,
            1.0,
            l,
        )
        .unwrap();
        let mut samples = condition11_samples(l, 1.0, 2000, 9).unwrap();
        // Append probes that actually sit inside the first bump, so some
        // factors are nonzero while their partners vanish.
        let targeted: Vec<Condition11Sample> = samples
            .iter()
            .take(100)
            .map(|s| Condition11Sample {
                r1: probe(0.2 + 0.004, 0.2 - 0.003, 0.2, l),
                ..*s
            })
            .collect();
        samples.extend(targeted);
        let max = check_condition_11(&f, a, l, &samples);
        assert_eq!(max, 0.0);
    }

    #[test]
    fn product_balance_modulated_field_is_strictly_positive() {
        let f = ModulatedField::new(1.0, Vec3::ZERO, 0.7, 0.5, 1, 1.0).unwrap();
        let samples = condition11_samples(1.0, 1.0, 10_000, 17).unwrap();
        let max = check_condition_11(&f, 0.1, 1.0, &samples);
        assert!(max > 0.0, "expected a strictly positive imbalance");
    }

    #[test]
    fn mean_field_uniform_density_cancels_at_grid_nodes() {
        let f = UniformField::maxwellian(2.0, Vec3::ZERO, 1.0).unwrap();
        let vel = VelocityRule::tensor(18, 1.0).unwrap();
        let l = 1.0;
        let rho = SpatialDensity::from_field(&f, l, 16, &vel).unwrap();
        assert!((rho.total_mass() - 2.0).abs() < 1e-12);
        let pot = PairPotential::harmonic(1.5, 0.3, 1.0);
        // Probe exactly at grid nodes: the displacement set is symmetric
        // under negation there, so contributions cancel.
        for (i, j, k) in [(3usize, 5usize, 9usize), (0, 0, 0), (8, 8, 8), (15, 1, 7)] {
            let r1 = probe(i as f64 / 16.0, j as f64 / 16.0, k as f64 / 16.0, l);
            let g = mean_field_gradient(&rho, r1, &pot, l).unwrap();
            assert!(g.max_abs() <= 1e-10, "gradient {g:?} at node ({i},{j},{k})");
            let term = vlasov_term(
                &f,
                r1,
                Vec3::new(0.4, -0.2, 0.6),
                &pot,
                Coupling::Concentration(1.0),
                &rho,
                l,
                default_velocity_step(1.0),
            )
            .unwrap();
            assert!(term.abs() <= 1e-10, "term {term}");
        }
    }

    #[test]
    fn mean_field_single_source_matches_closed_form() {
        let l = 1.0;
        let center = probe(0.5, 0.5, 0.5, l);
        let rho = SpatialDensity::Points(vec![(center, 2.0)]);
        let pot = PairPotential::harmonic(1.5, 0.3, 0.5);
        let r1 = probe(0.7, 0.5, 0.5, l);
        let g = mean_field_gradient(&rho, r1, &pot, l).unwrap();
        // dphi at separation 0.2 is -strength*(cutoff - s) = -0.15, along +x.
        let expected = Vec3::new(2.0 * (-0.15), 0.0, 0.0);
        assert!((g - expected).max_abs() < 1e-12, "gradient {g:?}");

        // Full term against the analytic velocity gradient of a Maxwellian.
        let theta = 0.8;
        let f = UniformField::maxwellian(1.0, Vec3::ZERO, theta).unwrap();
        let v1 = Vec3::new(0.5, -0.3, 0.2);
        let coupling = Coupling::Concentration(1.3);
        let term = vlasov_term(
            &f,
            r1,
            v1,
            &pot,
            coupling,
            &rho,
            l,
            default_velocity_step(theta.sqrt()),
        )
        .unwrap();
        let grad_analytic = -(v1 * (1.0 / theta)) * maxwellian3(v1, Vec3::ZERO, theta);
        let expected_term = coupling.prefactor() / pot.mass * g.dot(grad_analytic);
        assert!(
            (term - expected_term).abs() <= 1e-6 * expected_term.abs(),
            "term {term} vs {expected_term}"
        );
    }

    #[test]
    fn mean_field_two_sources_match_direct_sum() {
        let l = 1.0;
        let pot = PairPotential::harmonic(1.5, 0.3, 1.0);
        let c1 = probe(0.3, 0.5, 0.5, l);
        let c2 = probe(0.6, 0.5, 0.5, l);
        let (w1, w2) = (1.2, 0.8);
        let points = SpatialDensity::Points(vec![(c1, w1), (c2, w2)]);
        let r1 = probe(0.45, 0.5, 0.5, l);

        // Hand-written two-term sum: separations 0.15 on either side.
        let dphi = -1.5 * (0.3 - 0.15);
        let expected = Vec3::new(w1 * dphi - w2 * dphi, 0.0, 0.0);

        let g_points = mean_field_gradient(&points, r1, &pot, l).unwrap();
        assert!((g_points - expected).max_abs() < 1e-12);

        // Same two sources embedded in a full grid of density nodes.
        let m = 10usize;
        let h = l / m as f64;
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let node = probe(i as f64 * h, j as f64 * h, k as f64 * h, l);
                    let value = if (i, j, k) == (3, 5, 5) {
                        w1 / (h * h * h)
                    } else if (i, j, k) == (6, 5, 5) {
                        w2 / (h * h * h)
                    } else {
                        0.0
                    };
                    nodes.push(node);
                    values.push(value);
                }
            }
        }
        let grid = SpatialDensity::Gridded { nodes, values, cell_volume: h * h * h };
        let g_grid = mean_field_gradient(&grid, r1, &pot, l).unwrap();
        let rel = (g_grid - expected).max_abs() / expected.max_abs();
        assert!(rel <= 1e-3, "grid convolution off by {rel}");
        assert!((g_grid - g_points).max_abs() < 1e-12);
    }

    #[test]
    fn negative_field_is_rejected() {
        struct NegativeField;
        impl PhaseField for NegativeField {
            fn eval(&self, _r: TorusPoint, _v: Vec3) -> f64 {
                -0.5
            }
            fn is_spatially_uniform(&self) -> bool {
                true
            }
        }
        let quad = QuadratureRule::standard(1.0).unwrap();
        let err = st_enskog(
            &NegativeField,
            probe(0.5, 0.5, 0.5, 1.0),
            Vec3::ZERO,
            0.1,
            1.0,
            Coupling::Concentration(1.0),
            &quad,
        );
        assert!(matches!(err, Err(Error::NegativeDensity { .. })), "{err:?}");
    }

    #[test]
    fn nan_field_gradient_is_rejected() {
        struct NanField;
        impl PhaseField for NanField {
            fn eval(&self, _r: TorusPoint, _v: Vec3) -> f64 {
                f64::NAN
            }
        }
        let rho = SpatialDensity::Points(vec![(probe(0.5, 0.5, 0.5, 1.0), 1.0)]);
        let pot = PairPotential::harmonic(1.0, 0.3, 1.0);
        let err = vlasov_term(
            &NanField,
            probe(0.7, 0.5, 0.5, 1.0),
            Vec3::ZERO,
            &pot,
            Coupling::Concentration(1.0),
            &rho,
            1.0,
            1e-4,
        );
        assert!(matches!(err, Err(Error::NonFinite(_))), "{err:?}");
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let f = UniformField::maxwellian(1.0, Vec3::ZERO, 1.0).unwrap();
        let quad = QuadratureRule::standard(1.0).unwrap();
        let r1 = probe(0.5, 0.5, 0.5, 1.0);
        let v1 = Vec3::ZERO;
        let c = Coupling::Concentration(1.0);
        assert!(st_enskog(&f, r1, v1, 0.0, 1.0, c, &quad).is_err());
        assert!(st_enskog(&f, r1, v1, 0.6, 1.0, c, &quad)
            .is_err_and(|e| matches!(e, Error::SphereTooLarge { .. })));
        assert!(st_enskog(&f, r1, v1, 0.1, 1.0, Coupling::Concentration(-1.0), &quad)
            .is_err());
        assert!(st_enskog(
            &f,
            r1,
            v1,
            0.1,
            1.0,
            Coupling::MassNormalized { mass: 0.0, mass_density: 1.0 },
            &quad
        )
        .is_err());
        assert!(Coupling::MassNormalized { mass: 1.0, mass_density: -2.0 }
            .validate()
            .is_err());
    }
}
