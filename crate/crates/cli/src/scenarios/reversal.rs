//! `reversal`: forward/backward round trips at the particle, smooth-field,
//! or mollified-ensemble level, with one JSON report per run.

use std::path::Path;

use enskog_core::{
    io, run_blob_reversal, run_particle_reversal, run_smooth_irreversibility, Coupling,
    HomogeneousSolver, Mollifier, SmoothReversalOptions,
};

use crate::config::ReversalParams;
use crate::errors::CliResult;

use super::{build_field, build_particles, resolve_dt};

pub fn run(p: &ReversalParams, seed: u64, out: &Path) -> CliResult<Vec<String>> {
    match p {
        ReversalParams::Particle { a, l, init, t, tolerance } => {
            let config = build_particles(init, *a, *l, seed)?;
            let report = run_particle_reversal(&config, *t, *tolerance)?;
            io::write_json_pretty(out.join("report.json"), &report)?;
            Ok(vec!["report.json".to_string()])
        }
        ReversalParams::Smooth {
            m,
            v_max,
            a,
            l,
            concentration,
            field,
            dt,
            dt_fraction,
            t_rev,
            t_total,
            probes,
        } => {
            let initial = build_field(field, *m, *v_max)?;
            let coupling = Coupling::Concentration(*concentration);
            let solver = HomogeneousSolver::new(*m, *v_max)?;
            let bound = solver.stability_bound(&initial, *a, coupling)?;
            let step = resolve_dt(*dt, *dt_fraction, bound)?;
            let opts = SmoothReversalOptions {
                a: *a,
                coupling,
                dt: step,
                l: *l,
                probes: *probes,
                seed,
            };
            let report = run_smooth_irreversibility(&initial, *t_rev, *t_total, &opts)?;
            io::write_json_pretty(out.join("report.json"), &report)?;
            let mut files = vec!["report.json".to_string()];
            if let Some(metrics) = &report.smooth {
                io::write_moment_series(out.join("h_series.csv"), &metrics.series)?;
                files.push("h_series.csv".to_string());
            }
            Ok(files)
        }
        ReversalParams::Blob { a, l, init, eps_r, eps_v, s, t, tolerance } => {
            let config = build_particles(init, *a, *l, seed)?;
            let kernel = Mollifier::new(*eps_r, *eps_v)?;
            let report = run_blob_reversal(&config, kernel, *s, *t, *tolerance, seed)?;
            io::write_json_pretty(out.join("report.json"), &report)?;
            Ok(vec!["report.json".to_string()])
        }
    }
}
