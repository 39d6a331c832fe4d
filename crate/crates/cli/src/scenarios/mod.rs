//! Scenario runners. Each takes its parsed parameters, the effective seed,
//! and the output directory, and returns the names of the files it wrote.

pub mod blobs;
pub mod kinetic;
pub mod reversal;
pub mod simulate;
pub mod stscan;

use enskog_core::{
    h_functional, sample_admissible_config, wrap, MomentSample, ParticleConfig, Vec3,
    VelocityField,
};

use crate::config::{FieldInit, ParticleInit};
use crate::errors::{CliError, CliResult};

pub fn vec3(x: [f64; 3]) -> Vec3 {
    Vec3::new(x[0], x[1], x[2])
}

/// Builds the initial particle state, drawing from the run seed when the
/// configuration asks for a random one.
pub fn build_particles(
    init: &ParticleInit,
    a: f64,
    l: f64,
    seed: u64,
) -> CliResult<ParticleConfig> {
    match init {
        ParticleInit::Random { n, velocity_scale } => {
            Ok(sample_admissible_config(*n, a, l, *velocity_scale, seed)?)
        }
        ParticleInit::Explicit { positions, velocities } => {
            if positions.len() != velocities.len() {
                return Err(CliError::Config(format!(
                    "positions and velocities differ in length: {} vs {}",
                    positions.len(),
                    velocities.len()
                )));
            }
            let pos = positions
                .iter()
                .map(|&p| wrap(vec3(p), l))
                .collect::<enskog_core::Result<Vec<_>>>()?;
            let vel = velocities.iter().map(|&v| vec3(v)).collect();
            Ok(ParticleConfig::new(a, l, pos, vel, 0.0)?)
        }
    }
}

/// Builds the initial velocity-space density on an `m`^3 grid.
pub fn build_field(init: &FieldInit, m: usize, v_max: f64) -> CliResult<VelocityField> {
    Ok(match init {
        FieldInit::Maxwellian { density, mean, theta } => {
            VelocityField::maxwellian(m, v_max, *density, vec3(*mean), *theta)?
        }
        FieldInit::Bimodal { density, drift, theta } => {
            VelocityField::bimodal(m, v_max, *density, vec3(*drift), *theta)?
        }
        FieldInit::Mixture { components } => {
            let comps: Vec<(f64, Vec3, f64)> =
                components.iter().map(|c| (c.density, vec3(c.mean), c.theta)).collect();
            VelocityField::mixture(m, v_max, &comps)?
        }
    })
}

/// Resolves the step size from an absolute value or a fraction of the
/// measured stability bound; exactly one of the two must be present.
pub fn resolve_dt(dt: Option<f64>, dt_fraction: Option<f64>, bound: f64) -> CliResult<f64> {
    match (dt, dt_fraction) {
        (Some(dt), None) => Ok(dt),
        (None, Some(fraction)) => {
            if !(fraction > 0.0) || !fraction.is_finite() {
                return Err(CliError::Config(format!(
                    "dt_fraction must be positive and finite, got {fraction}"
                )));
            }
            Ok(fraction * bound)
        }
        _ => Err(CliError::Config("give exactly one of dt and dt_fraction".into())),
    }
}

/// Moments plus entropy of a field, stamped with the field's time.
pub fn moment_sample(field: &VelocityField) -> MomentSample {
    let m = field.moments();
    MomentSample {
        t: field.time(),
        mass: m.mass,
        px: m.momentum.x,
        py: m.momentum.y,
        pz: m.momentum.z,
        energy: m.energy,
        h: h_functional(field),
    }
}
