//! Hybrid dynamics: a smooth long-range pair force between contacts, the
//! elastic hard-sphere exchange at contact.
//!
//! The smooth part integrates with velocity Verlet. Contacts have no closed
//! form under forces, so pairs whose distance crosses the sphere diameter
//! within a step are located by sign-change bisection on the in-step Verlet
//! trajectory (whose positions are per-particle quadratics in the substep
//! size), the state is advanced to the contact, and the collision law is
//! applied there. Contacts that dip below the diameter and recover strictly
//! inside one substep leave no sign change and are not seen; the adaptive
//! substep cap of a quarter diameter of gap closure keeps that window small.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard_sphere::{impulse, CollisionRecord, ParticleConfig, GRAZING_TOL};
use crate::torus::{min_image_disp, wrap, TorusPoint, Vec3};

/// Distance tolerance of the contact bisection, relative to the diameter.
pub const CONTACT_TOL: f64 = 1e-10;

/// Shape of the smooth pair interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PotentialKind {
    /// No interaction; the dynamics degenerates to pure hard spheres.
    Zero,
    /// strength * (1 - (s/cutoff)^2)^2 inside the cutoff. C1 at the cutoff.
    QuarticBump { strength: f64 },
    /// strength/2 * (cutoff - s)^2 inside the cutoff. C1 at the cutoff.
    Harmonic { strength: f64 },
}

/// Smooth pair potential with compact support and the particle mass it acts
/// on. The energy and its radial derivative vanish at and beyond the cutoff,
/// which keeps the periodic force sum single-image for cutoff <= L/2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPotential {
    pub kind: PotentialKind,
    pub cutoff: f64,
    pub mass: f64,
}

impl PairPotential {
    pub fn zero() -> PairPotential {
        PairPotential { kind: PotentialKind::Zero, cutoff: 0.0, mass: 1.0 }
    }

    pub fn quartic_bump(strength: f64, cutoff: f64, mass: f64) -> PairPotential {
        PairPotential { kind: PotentialKind::QuarticBump { strength }, cutoff, mass }
    }

    pub fn harmonic(strength: f64, cutoff: f64, mass: f64) -> PairPotential {
        PairPotential { kind: PotentialKind::Harmonic { strength }, cutoff, mass }
    }

    /// Energy at center distance `s`; zero at and beyond the cutoff.
    pub fn phi(&self, s: f64) -> f64 {
        if s >= self.cutoff {
            return 0.0;
        }
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::QuarticBump { strength } => {
                let u = 1.0 - (s / self.cutoff).powi(2);
                strength * u * u
            }
            PotentialKind::Harmonic { strength } => {
                let g = self.cutoff - s;
                0.5 * strength * g * g
            }
        }
    }

    /// Radial derivative dPhi/ds; zero at and beyond the cutoff.
    pub fn dphi(&self, s: f64) -> f64 {
        if s >= self.cutoff {
            return 0.0;
        }
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::QuarticBump { strength } => {
                let c2 = self.cutoff * self.cutoff;
                let u = 1.0 - s * s / c2;
                -4.0 * strength * s * u / c2
            }
            PotentialKind::Harmonic { strength } => -strength * (self.cutoff - s),
        }
    }

    pub fn validate(&self, l: f64) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidParam(format!("mass {} must be positive", self.mass)));
        }
        if !self.cutoff.is_finite() || self.cutoff < 0.0 {
            return Err(Error::InvalidParam(format!("cutoff {} must be non-negative", self.cutoff)));
        }
        if self.cutoff > 0.5 * l {
            return Err(Error::InvalidParam(format!(
                "cutoff {} exceeds half the box length {l}; the force sum would need \
                 multiple periodic images",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// Force on particle `i` from every other particle: the sum over j of
/// -dPhi/ds at the pair distance, directed along the minimum-image unit
/// vector from j to i. Pairs at or beyond the cutoff contribute nothing.
pub fn total_force(config: &ParticleConfig, pot: &PairPotential, i: usize) -> Result<Vec3> {
    pot.validate(config.l())?;
    let mut force = Vec3::ZERO;
    for j in 0..config.num_particles() {
        if j == i {
            continue;
        }
        let d = crate::torus::min_image(config.positions()[i], config.positions()[j], config.l());
        force += pair_force(d, config.a(), pot)?;
    }
    Ok(force)
}

/// Force on the first particle of a pair with minimum-image displacement `d`
/// (first minus second). The second particle receives the exact negation.
fn pair_force(d: Vec3, a: f64, pot: &PairPotential) -> Result<Vec3> {
    let s = d.norm();
    if s < a * (1.0 - 1e-9) {
        return Err(Error::Overlap { i: 0, j: 0, sep: s, a });
    }
    if s >= pot.cutoff {
        return Ok(Vec3::ZERO);
    }
    Ok(d * (-pot.dphi(s) / s))
}

/// Total potential energy, one minimum-image term per pair.
pub fn potential_energy(config: &ParticleConfig, pot: &PairPotential) -> f64 {
    let n = config.num_particles();
    let mut e = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = crate::torus::torus_distance(
                config.positions()[i],
                config.positions()[j],
                config.l(),
            );
            e += pot.phi(s);
        }
    }
    e
}

/// One row of the energy series recorded along a hybrid run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BevStats {
    pub substeps: u64,
    pub collisions: u64,
    pub grazing_contacts: u64,
}

#[derive(Clone, Debug)]
pub struct BevOutcome {
    pub config: ParticleConfig,
    pub events: Vec<CollisionRecord>,
    pub energy: Vec<EnergySample>,
    pub stats: BevStats,
}

/// Advance the configuration by duration `t` under the pair potential with
/// requested step `dt`, applying the elastic exchange at every detected
/// contact.
///
/// The effective substep is capped adaptively so no pair's gap can close by
/// more than a quarter diameter per substep; contact location then bisects
/// within a single substep. Kinetic energy uses the potential's mass.
pub fn evolve_bev(
    config: &ParticleConfig,
    pot: &PairPotential,
    t: f64,
    dt: f64,
) -> Result<BevOutcome> {
    pot.validate(config.l())?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam(format!("duration {t} must be finite and non-negative")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParam(format!("step {dt} must be finite and positive")));
    }

    let n = config.num_particles();
    let (a, l, m) = (config.a(), config.l(), pot.mass);
    let t0 = config.time();
    let mut pos: Vec<Vec3> = config.positions().iter().map(|p| p.as_vec()).collect();
    let mut vel: Vec<Vec3> = config.velocities().to_vec();
    let mut forces = all_forces(&pos, a, l, pot)?;
    let mut elapsed = 0.0;
    let mut events = Vec::new();
    let mut stats = BevStats::default();
    let mut energy = Vec::new();

    let record = |energy: &mut Vec<EnergySample>, t: f64, pos: &[Vec3], vel: &[Vec3]| {
        let kinetic = 0.5 * m * vel.iter().map(|v| v.norm_sq()).sum::<f64>();
        let potential = pair_sum(pos, l, |s| pot.phi(s));
        energy.push(EnergySample { t, kinetic, potential, total: kinetic + potential });
    };
    record(&mut energy, t0, &pos, &vel);

    while elapsed < t {
        let mut h = dt.min(t - elapsed);
        // Cap the substep: no pair gap may close faster than a/4 per substep.
        let vmax_rel = max_relative_speed(&vel);
        if vmax_rel > 0.0 {
            h = h.min(0.25 * a / vmax_rel);
        }
        if h < dt * 1e-12 {
            return Err(Error::StepUnderflow(h));
        }

        // Locate the earliest contact among pairs whose distance crosses a
        // within the substep. Only the position map is needed here, so no
        // forces are evaluated at possibly-overlapping trial positions.
        let mut earliest: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let after = pair_distance_in_substep(&pos, &vel, &forces, m, l, i, j, h);
                if after < a {
                    let hc = bisect_contact(&pos, &vel, &forces, m, l, a, i, j, h)?;
                    let replace = match earliest {
                        None => true,
                        Some((hb, bi, bj)) => {
                            hc < hb || (hc == hb && (i, j) < (bi, bj))
                        }
                    };
                    if replace {
                        earliest = Some((hc, i, j));
                    }
                }
            }
        }

        match earliest {
            None => {
                let (npos, nvel, nforces) = verlet_substep(&pos, &vel, &forces, h, m, a, l, pot)?;
                pos = npos;
                vel = nvel;
                forces = nforces;
                elapsed += h;
                stats.substeps += 1;
                record(&mut energy, t0 + elapsed, &pos, &vel);
            }
            Some((hc, i, j)) => {
                if hc < dt * 1e-12 && h < 0.25 * dt {
                    // No progress is possible: the same contact keeps
                    // re-triggering at the start of ever-smaller substeps.
                    return Err(Error::StepUnderflow(hc));
                }
                let (npos, nvel, nforces) = verlet_substep(&pos, &vel, &forces, hc, m, a, l, pot)?;
                pos = npos;
                vel = nvel;
                forces = nforces;
                elapsed += hc;
                stats.substeps += 1;
                let t_abs = t0 + elapsed;

                let s = min_image_disp(pos[i] - pos[j], l);
                let sigma = s * (1.0 / s.norm());
                let (v1, v2) = (vel[i], vel[j]);
                let v21 = v2 - v1;
                let normal_speed = v21.dot(sigma);
                if normal_speed <= GRAZING_TOL * v21.norm() {
                    stats.grazing_contacts += 1;
                    events.push(CollisionRecord {
                        t: t_abs,
                        i,
                        j,
                        sigma,
                        v1_pre: v1,
                        v2_pre: v2,
                        v1_post: v1,
                        v2_post: v2,
                        grazing: true,
                    });
                } else {
                    let p = impulse(v1, v2, sigma);
                    vel[i] = v1 + p;
                    vel[j] = v2 - p;
                    stats.collisions += 1;
                    events.push(CollisionRecord {
                        t: t_abs,
                        i,
                        j,
                        sigma,
                        v1_pre: v1,
                        v2_pre: v2,
                        v1_post: vel[i],
                        v2_post: vel[j],
                        grazing: false,
                    });
                }
                record(&mut energy, t_abs, &pos, &vel);
            }
        }
    }

    let positions = pos.iter().map(|p| wrap(*p, l)).collect::<Result<Vec<TorusPoint>>>()?;
    let out = ParticleConfig::new(a, l, positions, vel, t0 + t)?;
    Ok(BevOutcome { config: out, events, energy, stats })
}

fn max_relative_speed(vel: &[Vec3]) -> f64 {
    let n = vel.len();
    let mut vmax: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            vmax = vmax.max((vel[i] - vel[j]).norm());
        }
    }
    vmax
}

fn pair_sum(pos: &[Vec3], l: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = pos.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            acc += f(min_image_disp(pos[i] - pos[j], l).norm());
        }
    }
    acc
}

/// Pairwise-accumulated forces; each pair adds `f` to one side and exactly
/// `-f` to the other, so the force sum conserves momentum by construction.
fn all_forces(pos: &[Vec3], a: f64, l: f64, pot: &PairPotential) -> Result<Vec<Vec3>> {
    let n = pos.len();
    let mut forces = vec![Vec3::ZERO; n];
    if matches!(pot.kind, PotentialKind::Zero) {
        return Ok(forces);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = min_image_disp(pos[i] - pos[j], l);
            let f = pair_force(d, a, pot).map_err(|e| match e {
                Error::Overlap { sep, a, .. } => Error::Overlap { i, j, sep, a },
                other => other,
            })?;
            forces[i] += f;
            forces[j] -= f;
        }
    }
    Ok(forces)
}

/// One velocity-Verlet substep of size `h` from the given state.
#[allow(clippy::too_many_arguments)]
fn verlet_substep(
    pos: &[Vec3],
    vel: &[Vec3],
    forces: &[Vec3],
    h: f64,
    m: f64,
    a: f64,
    l: f64,
    pot: &PairPotential,
) -> Result<(Vec<Vec3>, Vec<Vec3>, Vec<Vec3>)> {
    let inv_m = 1.0 / m;
    let npos: Vec<Vec3> = pos
        .iter()
        .zip(vel)
        .zip(forces)
        .map(|((p, v), f)| *p + *v * h + *f * (0.5 * inv_m * h * h))
        .collect();
    let nforces = all_forces(&npos, a, l, pot)?;
    let nvel: Vec<Vec3> = vel
        .iter()
        .zip(forces.iter().zip(&nforces))
        .map(|(v, (f0, f1))| *v + (*f0 + *f1) * (0.5 * inv_m * h))
        .collect();
    Ok((npos, nvel, nforces))
}

/// Distance of pair (i, j) after a Verlet substep of size `hp`, using only the
/// position map: each coordinate is a quadratic in the substep size with the
/// initial forces, so probing is O(1) per pair.
#[allow(clippy::too_many_arguments)]
fn pair_distance_in_substep(
    pos: &[Vec3],
    vel: &[Vec3],
    forces: &[Vec3],
    m: f64,
    l: f64,
    i: usize,
    j: usize,
    hp: f64,
) -> f64 {
    let inv_m = 1.0 / m;
    let pi = pos[i] + vel[i] * hp + forces[i] * (0.5 * inv_m * hp * hp);
    let pj = pos[j] + vel[j] * hp + forces[j] * (0.5 * inv_m * hp * hp);
    min_image_disp(pi - pj, l).norm()
}

/// Bisect the substep size at which pair (i, j) reaches the contact distance,
/// returning the largest probe on the non-overlapping side within
/// [`CONTACT_TOL`] of the diameter.
#[allow(clippy::too_many_arguments)]
fn bisect_contact(
    pos: &[Vec3],
    vel: &[Vec3],
    forces: &[Vec3],
    m: f64,
    l: f64,
    a: f64,
    i: usize,
    j: usize,
    h: f64,
) -> Result<f64> {
    let gap = |hp: f64| pair_distance_in_substep(pos, vel, forces, m, l, i, j, hp) - a;
    let mut lo = 0.0;
    let mut hi = h;
    if gap(lo) < 0.0 {
        return Err(Error::BisectionFailure(format!(
            "pair ({i}, {j}) already inside the contact distance at the substep start"
        )));
    }
    for _ in 0..200 {
        if gap(lo) <= CONTACT_TOL * a {
            return Ok(lo);
        }
        let mid = 0.5 * (lo + hi);
        if gap(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BisectionFailure(format!(
        "no convergence for pair ({i}, {j}): bracket [{lo}, {hi}], gap {}",
        gap(lo)
    )))
}
