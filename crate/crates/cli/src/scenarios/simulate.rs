//! `simulate`: particle dynamics. Event-driven hard spheres by default;
//! with a configured potential, the smooth-potential hybrid integrator.

use std::path::Path;

use enskog_core::{evolve, evolve_bev, io, EnergySample, PairPotential};

use crate::config::SimulateParams;
use crate::errors::{CliError, CliResult};

use super::build_particles;

pub fn run(p: &SimulateParams, seed: u64, out: &Path) -> CliResult<Vec<String>> {
    if !(p.t >= 0.0) || !p.t.is_finite() {
        return Err(CliError::Config(format!(
            "duration must be non-negative and finite, got {}",
            p.t
        )));
    }
    if p.snapshots < 2 {
        return Err(CliError::Config(format!(
            "need at least 2 snapshots (initial and final), got {}",
            p.snapshots
        )));
    }
    let start = build_particles(&p.init, p.a, p.l, seed)?;
    let segments = p.snapshots - 1;

    let mut states = vec![start];
    let mut events = Vec::new();
    let mut energy: Vec<EnergySample> = Vec::new();

    if let Some(pp) = &p.potential {
        let pot = PairPotential { kind: pp.kind, cutoff: pp.cutoff, mass: pp.mass };
        for k in 1..=segments {
            let target = p.t * k as f64 / segments as f64;
            let current = states.last().expect("at least the initial state");
            let outcome = evolve_bev(current, &pot, target - current.time(), pp.dt)?;
            events.extend(outcome.events);
            // Every leg re-records its starting energy; drop the duplicate.
            let skip = usize::from(!energy.is_empty());
            energy.extend(outcome.energy.into_iter().skip(skip));
            states.push(outcome.config);
        }
    } else {
        for k in 1..=segments {
            let target = p.t * k as f64 / segments as f64;
            let current = states.last().expect("at least the initial state");
            let outcome = evolve(current, target - current.time())?;
            events.extend(outcome.events);
            states.push(outcome.config);
        }
    }

    io::write_event_log(out.join("events.jsonl"), &events)?;
    io::write_snapshots(out.join("snapshots.csv"), &states)?;
    let mut files = vec!["events.jsonl".to_string(), "snapshots.csv".to_string()];
    if p.potential.is_some() {
        io::write_energy_series(out.join("energy.csv"), &energy)?;
        files.push("energy.csv".to_string());
    }
    Ok(files)
}
