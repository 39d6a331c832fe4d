//! `stscan`: pointwise scans of the two collision integrals — and of the
//! mean-field acceleration when configured — at seeded random phase points.
//! Probes are independent pure evaluations, so the scan parallelizes over
//! the worker pool with results identical for any thread count.

use std::path::Path;

use enskog_core::seeding::derive_rng;
use enskog_core::{
    check_condition_11, condition11_samples, default_velocity_step, io, st_boltzmann, st_enskog,
    vlasov_term, wrap, BumpClusterField, Coupling, MaxwellianComponent, ModulatedField,
    OperatorScanRow, PairPotential, PhaseField, QuadratureRule, SpatialDensity, TorusPoint,
    UniformField, Vec3, VelocityRule,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{PhaseFieldInit, StscanParams};
use crate::errors::{CliError, CliResult};

use super::vec3;

#[derive(Serialize)]
struct ScanSummary {
    probes: usize,
    a: f64,
    mean_abs_gap: f64,
    max_abs_vlasov: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    half_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_abs_gap_half: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    product_balance_defect: Option<f64>,
}

pub fn run(p: &StscanParams, seed: u64, out: &Path) -> CliResult<Vec<String>> {
    if p.probes == 0 {
        return Err(CliError::Config("need at least one probe".into()));
    }
    let field = build_phase_field(&p.field, p.l)?;
    let coupling = Coupling::Concentration(p.concentration);
    // Rule construction rejects sizes that break the quadrature accuracy
    // contract; that is a parameter problem, not a runtime failure.
    let quad = match &p.quadrature {
        Some(q) => QuadratureRule::custom(q.n_cos, q.n_phi, q.n_velocity, p.velocity_scale),
        None => QuadratureRule::standard(p.velocity_scale),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    let probes =
        sample_probes(p.l, p.velocity_scale, p.probes, seed, p.probe_positions.as_deref())?;
    let mean_field = match &p.mean_field {
        Some(mf) => {
            let pot = PairPotential { kind: mf.kind, cutoff: mf.cutoff, mass: mf.mass };
            // Fallback velocity rule for fields without a closed-form marginal.
            let marginal_rule = VelocityRule::tensor(18, p.velocity_scale)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let rho = SpatialDensity::from_field(field.as_ref(), p.l, mf.rho_grid, &marginal_rule)?;
            Some((pot, rho))
        }
        None => None,
    };
    let h_v = default_velocity_step(p.velocity_scale);

    let eval = |diameter: f64, coupling: Coupling| -> CliResult<Vec<OperatorScanRow>> {
        probes
            .par_iter()
            .map(|&(r, v)| -> enskog_core::Result<OperatorScanRow> {
                let f = field.as_ref();
                let st_e = st_enskog(f, r, v, diameter, p.l, coupling, &quad)?;
                let st_b = st_boltzmann(f, r, v, diameter, p.l, coupling, &quad)?;
                let vlasov = match &mean_field {
                    Some((pot, rho)) => vlasov_term(f, r, v, pot, coupling, rho, p.l, h_v)?,
                    None => 0.0,
                };
                Ok(OperatorScanRow { r: r.as_vec(), v, st_enskog: st_e, st_boltzmann: st_b, vlasov })
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::from)
    };

    let rows = eval(p.a, coupling)?;
    io::write_operator_scan(out.join("scan.csv"), &rows)?;
    let mut files = vec!["scan.csv".to_string()];

    let mean_gap = mean_abs_gap(&rows);
    let mut summary = ScanSummary {
        probes: p.probes,
        a: p.a,
        mean_abs_gap: mean_gap,
        max_abs_vlasov: rows.iter().map(|r| r.vlasov.abs()).fold(0.0, f64::max),
        half_a: None,
        mean_abs_gap_half: None,
        gap_ratio: None,
        product_balance_defect: None,
    };

    if p.halve_a {
        // Half the diameter at four times the concentration keeps the
        // mean free path (concentration times diameter squared) fixed, so
        // the remaining gap change isolates the shift's first-order effect.
        let half_coupling = Coupling::Concentration(4.0 * p.concentration);
        let half_rows = eval(0.5 * p.a, half_coupling)?;
        io::write_operator_scan(out.join("scan_half.csv"), &half_rows)?;
        files.push("scan_half.csv".to_string());
        let half_gap = mean_abs_gap(&half_rows);
        summary.half_a = Some(0.5 * p.a);
        summary.mean_abs_gap_half = Some(half_gap);
        summary.gap_ratio = (half_gap > 0.0).then(|| mean_gap / half_gap);
    }

    if let Some(count) = p.balance_samples {
        let samples = condition11_samples(p.l, p.velocity_scale, count, seed)?;
        summary.product_balance_defect =
            Some(check_condition_11(field.as_ref(), p.a, p.l, &samples));
    }

    io::write_json_pretty(out.join("summary.json"), &summary)?;
    files.push("summary.json".to_string());
    Ok(files)
}

fn mean_abs_gap(rows: &[OperatorScanRow]) -> f64 {
    rows.iter().map(|r| (r.st_enskog - r.st_boltzmann).abs()).sum::<f64>() / rows.len() as f64
}

fn build_phase_field(init: &PhaseFieldInit, l: f64) -> CliResult<Box<dyn PhaseField>> {
    Ok(match init {
        PhaseFieldInit::Uniform { components } => {
            let comps = components
                .iter()
                .map(|c| MaxwellianComponent { weight: c.density, mean: vec3(c.mean), theta: c.theta })
                .collect();
            Box::new(UniformField::new(comps)?)
        }
        PhaseFieldInit::Modulated { density, mean, theta, amplitude, mode } => Box::new(
            ModulatedField::new(*density, vec3(*mean), *theta, *amplitude, *mode, l)?,
        ),
        PhaseFieldInit::Bumps { centers, eps_r, theta } => {
            let centers = centers
                .iter()
                .map(|b| Ok((wrap(vec3(b.center), l)?, b.mass)))
                .collect::<enskog_core::Result<Vec<_>>>()?;
            Box::new(BumpClusterField::new(centers, *eps_r, *theta, l)?)
        }
    })
}

/// Seeded probe points: positions explicit or uniform over the box,
/// velocities Gaussian at the configured scale, one derived stream per
/// probe.
fn sample_probes(
    l: f64,
    scale: f64,
    count: usize,
    seed: u64,
    positions: Option<&[[f64; 3]]>,
) -> CliResult<Vec<(TorusPoint, Vec3)>> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(CliError::Config(format!(
            "velocity scale must be positive and finite, got {scale}"
        )));
    }
    if let Some(given) = positions {
        if given.len() != count {
            return Err(CliError::Config(format!(
                "probe_positions has {} entries but probes is {count}",
                given.len()
            )));
        }
    }
    let mut probes = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = derive_rng(seed, "operator-probes", i as u64);
        let r = match positions {
            Some(given) => wrap(vec3(given[i]), l)?,
            None => wrap(
                Vec3::new(
                    rng.random::<f64>() * l,
                    rng.random::<f64>() * l,
                    rng.random::<f64>() * l,
                ),
                l,
            )?,
        };
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let v = Vec3::new(gauss() * scale, gauss() * scale, gauss() * scale);
        probes.push((r, v));
    }
    Ok(probes)
}
