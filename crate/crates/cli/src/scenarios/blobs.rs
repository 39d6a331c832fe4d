//! `blobs`: mollified-ensemble width sweep against one reference particle
//! state. For each width pair the run reports the coherence window, the
//! per-particle centroid errors at the probe time (shared random draws
//! across widths), and the two-point factorization gap at the evolved
//! reference's pair phase points.

use std::path::Path;

use enskog_core::{
    coherence_time, draw_ensemble, evolve, factorization_gap, flow_ensemble,
    limit_trajectory_error, io, torus_distance, HarnessReport, Mollifier, ParticleConfig,
    TorusPoint, Vec3, DEFAULT_COHERENCE_FRACTION,
};

use crate::config::BlobsParams;
use crate::errors::{CliError, CliResult};

use super::build_particles;

pub fn run(p: &BlobsParams, seed: u64, out: &Path) -> CliResult<Vec<String>> {
    if p.widths.is_empty() {
        return Err(CliError::Config("need at least one width pair".into()));
    }
    let reference = build_particles(&p.init, p.a, p.l, seed)?;
    let horizon = p.coherence_horizon.unwrap_or(p.t_probe);
    let fraction = p.coherence_fraction.unwrap_or(DEFAULT_COHERENCE_FRACTION);
    let threshold = fraction * p.a;

    let kernels = p
        .widths
        .iter()
        .map(|w| Mollifier::new(w.eps_r, w.eps_v))
        .collect::<enskog_core::Result<Vec<_>>>()?;
    let limits = limit_trajectory_error(&reference, &kernels, p.s, p.t_probe, seed)?;

    let probe_state = evolve(&reference, p.t_probe)?.config;
    let probes = pair_probes(&probe_state);

    let mut files = Vec::new();
    let mut reports = Vec::new();
    for (i, (kernel, limit)) in kernels.iter().zip(&limits).enumerate() {
        let ensemble = draw_ensemble(&reference, *kernel, p.s, seed)?;
        let window = coherence_time(&ensemble, horizon, threshold)?;
        let flowed = flow_ensemble(&ensemble, p.t_probe)?;
        let gap = if probes.is_empty() {
            0.0
        } else {
            factorization_gap(&flowed, &probes)?.max_gap
        };
        let report = HarnessReport {
            epsilon_r: kernel.eps_r,
            epsilon_v: kernel.eps_v,
            samples: p.s,
            coherence_window: window,
            factorization_gap: gap,
            centroid_errors: limit.per_particle.clone(),
        };
        let report_name = format!("report-{i}.json");
        io::write_json_pretty(out.join(&report_name), &report)?;
        let ensemble_name = format!("ensemble-{i}.csv");
        io::write_ensemble_snapshots(out.join(&ensemble_name), &[ensemble, flowed])?;
        files.push(report_name);
        files.push(ensemble_name);
        reports.push(report);
    }
    io::write_json_pretty(out.join("sweep.json"), &reports)?;
    files.push("sweep.json".to_string());
    Ok(files)
}

/// Pair phase points of a particle state that sit strictly outside contact,
/// usable as factorization probes.
fn pair_probes(config: &ParticleConfig) -> Vec<((TorusPoint, Vec3), (TorusPoint, Vec3))> {
    let a = config.a();
    let l = config.l();
    let pos = config.positions();
    let vel = config.velocities();
    let mut probes = Vec::new();
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            if torus_distance(pos[i], pos[j], l) >= a * (1.0 + 1e-9) {
                probes.push(((pos[i], vel[i]), (pos[j], vel[j])));
            }
        }
    }
    probes
}
