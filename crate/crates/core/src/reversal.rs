//! Time-reversal drivers for the three solution classes.
//!
//! Each driver runs a forward leg, flips velocities, runs the return leg,
//! and reports what survived: exact recurrence for particle configurations
//! and for sampled blob ensembles (whose reversal acts samplewise), versus
//! a monotonically decreasing H functional for densities stepped on the
//! velocity grid, where reversal does not send the solution back.  Every
//! verdict is derived mechanically from thresholds recorded in the report.

use serde::{Deserialize, Serialize};

use crate::blobs::{coherence_time, draw_ensemble, DEFAULT_COHERENCE_FRACTION};
use crate::collision_operator::{check_condition_11, condition11_samples, Coupling};
use crate::error::{Error, Result};
use crate::hard_sphere::{evolve, reverse, ParticleConfig};
use crate::homogeneous::{
    h_functional, reverse_field, HomogeneousSolver, VelocityField, CLIP_BUDGET,
};
use crate::mollifier::Mollifier;
use crate::phase_field::PhaseField;
use crate::torus::{min_image, TorusPoint, Vec3};

/// Which solution class a reversal run exercised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReversalClass {
    SmoothGrid,
    Particle,
    Blob,
}

/// Mechanical outcome of a reversal run.
///
/// `Reversible`: the return leg reproduced the reversed initial state
/// within tolerance.  `Irreversible`: H kept decreasing after the flip and
/// the pointwise product-balance defect stood clear of its measurement
/// floor.  `Degenerate`: an equilibrium state, where the irreversibility
/// diagnostics have nothing to bite on.  `Inconclusive`: none of the above
/// certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Reversible,
    Irreversible,
    Degenerate,
    Inconclusive,
}

/// One row of the kinetic time series: discrete moments and H.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MomentSample {
    pub t: f64,
    pub mass: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub energy: f64,
    pub h: f64,
}

/// Outcome of a particle-configuration round trip.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParticleReversalMetrics {
    pub tolerance: f64,
    /// Max over particles of the shortest-image distance between the
    /// round-trip state and the reversed initial state.
    pub max_position_error: f64,
    pub max_velocity_error: f64,
    pub forward_collisions: u64,
    pub backward_collisions: u64,
    pub forward_grazing: u64,
    pub backward_grazing: u64,
    /// Smallest pair separation seen at any forward event time.
    pub min_event_separation: Option<f64>,
}

/// Outcome of a grid-density run with a mid-course velocity flip.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothIrreversibilityMetrics {
    pub t_rev: f64,
    pub t_total: f64,
    pub dt: f64,
    /// Moments and H after every accepted step; the flip instant appears
    /// twice, before and after reversal, with the momentum sign change.
    pub series: Vec<MomentSample>,
    pub h_initial: f64,
    pub h_at_reversal: f64,
    pub h_final: f64,
    /// Per-step H increase allowance: the larger of one clipping budget of
    /// the initial mass and twice the measured equilibrium H drift.
    pub h_step_allowance: f64,
    /// One-step |H change| of the matched-moment equilibrium: the H noise
    /// of this grid and step size.
    pub h_equilibrium_drift: f64,
    pub h_monotone_before_reversal: bool,
    pub h_monotone_after_reversal: bool,
    /// Largest amount by which post-flip H exceeded H at the flip.
    pub max_h_excess_after_reversal: f64,
    /// Net H decrease over the return leg.
    pub h_drop_after_reversal: f64,
    /// Pointwise product-balance defect of the field at the flip instant.
    pub violation: f64,
    /// Same defect measured on the matched-moment equilibrium with the
    /// same probes: the discretization noise floor.
    pub noise_floor: f64,
    pub probes: usize,
    pub total_clipped_mass: f64,
}

/// Outcome of an ensemble round trip (reversal acts on every sample and on
/// the reference).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlobReversalMetrics {
    pub tolerance: f64,
    pub samples: usize,
    pub eps_r: f64,
    pub eps_v: f64,
    /// Coherence window measured before the run, capped at the requested
    /// duration.
    pub coherence_window: f64,
    /// False when the requested duration exceeds the measured window; the
    /// run still executes and reports (informational).
    pub within_guaranteed_window: bool,
    /// Worst round-trip state error over all samples and the reference.
    pub max_position_error: f64,
    pub max_velocity_error: f64,
    pub reference_position_error: f64,
    pub reference_velocity_error: f64,
    pub forward_collisions: u64,
    pub backward_collisions: u64,
    /// Samples whose forward and backward contact counts disagreed.
    pub count_mismatches: usize,
}

/// Result of one reversal run; exactly one of the per-class metric blocks
/// is present, matching `class`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReversalReport {
    pub scenario: String,
    pub class: ReversalClass,
    /// Duration of one leg of the run.
    pub duration: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particle: Option<ParticleReversalMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth: Option<SmoothIrreversibilityMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blob: Option<BlobReversalMetrics>,
}

/// Max shortest-image position error and max velocity error between two
/// configurations of the same shape.
fn split_deviation(x: &ParticleConfig, y: &ParticleConfig) -> Result<(f64, f64)> {
    if x.num_particles() != y.num_particles() || x.l() != y.l() {
        return Err(Error::InvalidParam(
            "configurations must share particle count and box length".into(),
        ));
    }
    let mut dp = 0.0f64;
    let mut dv = 0.0f64;
    for k in 0..x.num_particles() {
        dp = dp.max(min_image(x.positions()[k], y.positions()[k], x.l()).norm());
        dv = dv.max((x.velocities()[k] - y.velocities()[k]).norm());
    }
    Ok((dp, dv))
}

// ---------------------------------------------------------------------------
// Particle class
// ---------------------------------------------------------------------------

/// Evolves `config` by `t`, flips velocities, evolves by `t` again, and
/// compares the result to the velocity-flipped initial state.  Verdict is
/// `Reversible` iff the worst position and velocity errors stay within
/// `tol` and the two legs saw the same number of contacts.
pub fn run_particle_reversal(config: &ParticleConfig, t: f64, tol: f64) -> Result<ReversalReport> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam(format!(
            "leg duration must be non-negative and finite, got {t}"
        )));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParam(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    let forward = evolve(config, t)?;
    let back = evolve(&reverse(&forward.config), t)?;
    let target = reverse(config);
    let (max_position_error, max_velocity_error) = split_deviation(&back.config, &target)?;
    let metrics = ParticleReversalMetrics {
        tolerance: tol,
        max_position_error,
        max_velocity_error,
        forward_collisions: forward.stats.collisions,
        backward_collisions: back.stats.collisions,
        forward_grazing: forward.stats.grazing_contacts,
        backward_grazing: back.stats.grazing_contacts,
        min_event_separation: forward.stats.min_event_separation,
    };
    let verdict = if max_position_error <= tol
        && max_velocity_error <= tol
        && metrics.forward_collisions == metrics.backward_collisions
    {
        Verdict::Reversible
    } else {
        Verdict::Inconclusive
    };
    Ok(ReversalReport {
        scenario: format!("particle-n{}-t{}", config.num_particles(), t),
        class: ReversalClass::Particle,
        duration: t,
        verdict,
        particle: Some(metrics),
        smooth: None,
        blob: None,
    })
}

// ---------------------------------------------------------------------------
// Smooth grid class
// ---------------------------------------------------------------------------

/// Physics and measurement parameters for [`run_smooth_irreversibility`].
#[derive(Clone, Copy, Debug)]
pub struct SmoothReversalOptions {
    /// Sphere diameter entering the collision term and the probe shift.
    pub a: f64,
    /// Coupling constant in front of the collision term.
    pub coupling: Coupling,
    /// Step size; both `t_rev` and `t_total` must be whole multiples.
    pub dt: f64,
    /// Box length used for the product-balance probe geometry (the field
    /// itself is spatially uniform).
    pub l: f64,
    /// Number of product-balance probes.
    pub probes: usize,
    /// Seed for the probe set.
    pub seed: u64,
}

/// Read-only view of a velocity grid as a spatially uniform phase-space
/// density, with tricubic (Catmull-Rom) interpolation between nodes and
/// zero outside the grid.  The cubic stencil keeps the interpolation error
/// a couple of orders below the linear one, which matters because the
/// product-balance noise floor is set by exactly this error.
struct GridView<'a> {
    field: &'a VelocityField,
}

/// Catmull-Rom weights for the four taps at offsets -1, 0, 1, 2 around the
/// base node, at fractional position `t` in [0, 1).  The weights sum to
/// one and reproduce the node values exactly at t = 0.
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

impl PhaseField for GridView<'_> {
    fn eval(&self, _r: TorusPoint, v: Vec3) -> f64 {
        let f = self.field;
        let m = f.m() as isize;
        let delta = f.delta();
        let half = 0.5 * f.m() as f64;
        let arr = v.to_array();
        let mut base = [0isize; 3];
        let mut weights = [[0.0f64; 4]; 3];
        for c in 0..3 {
            let u = arr[c] / delta + half - 0.5;
            if !(u > -1.0) || !(u < m as f64) {
                return 0.0;
            }
            let fl = u.floor();
            base[c] = fl as isize;
            weights[c] = catmull_rom(u - fl);
        }
        let node = |i: isize, j: isize, k: isize| -> f64 {
            if i < 0 || j < 0 || k < 0 || i >= m || j >= m || k >= m {
                0.0
            } else {
                self.field.values()[self.field.flat_index(i as usize, j as usize, k as usize)]
            }
        };
        let mut acc = 0.0;
        for (di, &wi) in weights[0].iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            for (dj, &wj) in weights[1].iter().enumerate() {
                for (dk, &wk) in weights[2].iter().enumerate() {
                    let w = wi * wj * wk;
                    if w != 0.0 {
                        acc += w
                            * node(
                                base[0] + di as isize - 1,
                                base[1] + dj as isize - 1,
                                base[2] + dk as isize - 1,
                            );
                    }
                }
            }
        }
        acc
    }

    fn is_spatially_uniform(&self) -> bool {
        true
    }
}

fn sample_of(field: &VelocityField) -> MomentSample {
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

fn whole_steps(t: f64, dt: f64, what: &str) -> Result<usize> {
    let steps = (t / dt).round();
    if (steps * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Error::InvalidParam(format!(
            "{what} = {t} is not a whole number of steps of {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Steps the density forward to `t_rev`, measures the pointwise
/// product-balance defect there (against the matched-moment equilibrium as
/// noise floor), flips velocities, and continues to `t_total`.
///
/// Verdict is `Irreversible` iff H keeps decreasing after the flip — every
/// step within one clipping budget, with a net drop beyond the accumulated
/// allowance — and the defect exceeds five times its floor.  A field whose
/// defect sits at the floor with flat H is reported `Degenerate`
/// (equilibrium).
pub fn run_smooth_irreversibility(
    initial: &VelocityField,
    t_rev: f64,
    t_total: f64,
    opts: &SmoothReversalOptions,
) -> Result<ReversalReport> {
    if !(t_total > 0.0) || !t_total.is_finite() || !(t_rev >= 0.0) || !(t_rev < t_total) {
        return Err(Error::InvalidParam(format!(
            "need 0 <= t_rev < t_total with t_total positive, got {t_rev}, {t_total}"
        )));
    }
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::InvalidParam(format!(
            "step size must be positive and finite, got {}",
            opts.dt
        )));
    }
    if opts.probes == 0 {
        return Err(Error::InvalidParam("need at least one probe".into()));
    }
    if !(opts.l > 0.0) || !opts.l.is_finite() {
        return Err(Error::InvalidParam(format!(
            "box length must be positive and finite, got {}",
            opts.l
        )));
    }
    let steps_before = whole_steps(t_rev, opts.dt, "reversal time")?;
    let steps_after = whole_steps(t_total - t_rev, opts.dt, "return leg")?;
    let solver = HomogeneousSolver::new(initial.m(), initial.v_max())?;

    let mut field = initial.clone();
    let mut series = vec![sample_of(&field)];
    let h_initial = series[0].h;
    let moments0 = initial.moments();
    // The stepper transports mass, momentum, and energy exactly, so the
    // matched-moment equilibrium of the initial field is also the matched
    // equilibrium at the flip instant.  One step of it measures the
    // per-step H noise of this grid and step size — the equilibrium is a
    // fixed point only up to the spectral residual — and that measured
    // noise joins the clipping budget in the H tolerance.
    let equilibrium = initial.equilibrium_with_same_moments()?;
    let (eq_next, _) = solver.step(&equilibrium, opts.dt, opts.a, opts.coupling)?;
    let h_equilibrium_drift = (h_functional(&eq_next) - h_functional(&equilibrium)).abs();
    let h_step_allowance = (CLIP_BUDGET * moments0.mass).max(2.0 * h_equilibrium_drift);
    let mut total_clipped_mass = 0.0;

    let mut h_monotone_before = true;
    let mut prev_h = h_initial;
    for _ in 0..steps_before {
        let (next, stats) = solver.step(&field, opts.dt, opts.a, opts.coupling)?;
        total_clipped_mass += stats.clipped_mass;
        field = next;
        let row = sample_of(&field);
        if row.h > prev_h + h_step_allowance {
            h_monotone_before = false;
        }
        prev_h = row.h;
        series.push(row);
    }

    // Product-balance defect at the flip instant, probed with velocities
    // drawn at the field's own thermal scale; the same probes on the
    // matched-moment equilibrium measure the discretization floor.
    let u = moments0.momentum * (1.0 / moments0.mass);
    let theta = (2.0 * moments0.energy / moments0.mass - u.norm_sq()) / 3.0;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidParam(format!(
            "field temperature must be positive, got {theta}"
        )));
    }
    let probes = condition11_samples(opts.l, theta.sqrt(), opts.probes, opts.seed)?;
    let violation = check_condition_11(&GridView { field: &field }, opts.a, opts.l, &probes);
    let noise_floor =
        check_condition_11(&GridView { field: &equilibrium }, opts.a, opts.l, &probes);

    let h_at_reversal = prev_h;
    field = reverse_field(&field);
    series.push(sample_of(&field));

    let mut h_monotone_after = true;
    let mut max_h_excess = 0.0f64;
    prev_h = h_at_reversal;
    for _ in 0..steps_after {
        let (next, stats) = solver.step(&field, opts.dt, opts.a, opts.coupling)?;
        total_clipped_mass += stats.clipped_mass;
        field = next;
        let row = sample_of(&field);
        if row.h > prev_h + h_step_allowance {
            h_monotone_after = false;
        }
        max_h_excess = max_h_excess.max(row.h - h_at_reversal);
        prev_h = row.h;
        series.push(row);
    }
    let h_final = prev_h;
    let h_drop_after_reversal = h_at_reversal - h_final;
    let after_allowance = steps_after as f64 * h_step_allowance;

    let verdict = if violation > 5.0 * noise_floor
        && h_monotone_after
        && h_drop_after_reversal > after_allowance
    {
        Verdict::Irreversible
    } else if violation <= 5.0 * noise_floor && h_drop_after_reversal.abs() <= after_allowance {
        Verdict::Degenerate
    } else {
        Verdict::Inconclusive
    };

    let metrics = SmoothIrreversibilityMetrics {
        t_rev,
        t_total,
        dt: opts.dt,
        series,
        h_initial,
        h_at_reversal,
        h_final,
        h_step_allowance,
        h_equilibrium_drift,
        h_monotone_before_reversal: h_monotone_before,
        h_monotone_after_reversal: h_monotone_after,
        max_h_excess_after_reversal: max_h_excess,
        h_drop_after_reversal,
        violation,
        noise_floor,
        probes: opts.probes,
        total_clipped_mass,
    };
    Ok(ReversalReport {
        scenario: format!("smooth-m{}-trev{}-ttotal{}", initial.m(), t_rev, t_total),
        class: ReversalClass::SmoothGrid,
        duration: t_total,
        verdict,
        particle: None,
        smooth: Some(metrics),
        blob: None,
    })
}

// ---------------------------------------------------------------------------
// Blob class
// ---------------------------------------------------------------------------

/// Draws an ensemble around `config`, measures its coherence window, then
/// round-trips every sample and the reference: evolve by `t`, flip
/// velocities, evolve by `t`, compare to the flipped start.  A duration
/// beyond the measured window is flagged but still executed.  Verdict is
/// `Reversible` iff the worst sample error stays within `tol` and every
/// sample's two legs agree on contact counts.
pub fn run_blob_reversal(
    config: &ParticleConfig,
    kernel: Mollifier,
    s: usize,
    t: f64,
    tol: f64,
    seed: u64,
) -> Result<ReversalReport> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam(format!(
            "leg duration must be positive and finite, got {t}"
        )));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParam(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    let ens = draw_ensemble(config, kernel, s, seed)?;
    let threshold = DEFAULT_COHERENCE_FRACTION * config.a();
    let coherence_window = coherence_time(&ens, t, threshold)?;
    let within = coherence_window >= t;

    let mut max_dp = 0.0f64;
    let mut max_dv = 0.0f64;
    let mut forward_collisions = 0u64;
    let mut backward_collisions = 0u64;
    let mut count_mismatches = 0usize;
    for sample in ens.samples() {
        let fwd = evolve(sample, t)?;
        let back = evolve(&reverse(&fwd.config), t)?;
        let (dp, dv) = split_deviation(&back.config, &reverse(sample))?;
        max_dp = max_dp.max(dp);
        max_dv = max_dv.max(dv);
        forward_collisions += fwd.stats.collisions;
        backward_collisions += back.stats.collisions;
        if fwd.stats.collisions != back.stats.collisions {
            count_mismatches += 1;
        }
    }
    let fwd = evolve(ens.reference(), t)?;
    let back = evolve(&reverse(&fwd.config), t)?;
    let (reference_position_error, reference_velocity_error) =
        split_deviation(&back.config, &reverse(ens.reference()))?;
    if fwd.stats.collisions != back.stats.collisions {
        count_mismatches += 1;
    }
    max_dp = max_dp.max(reference_position_error);
    max_dv = max_dv.max(reference_velocity_error);

    let verdict = if max_dp <= tol && max_dv <= tol && count_mismatches == 0 {
        Verdict::Reversible
    } else {
        Verdict::Inconclusive
    };
    let metrics = BlobReversalMetrics {
        tolerance: tol,
        samples: s,
        eps_r: kernel.eps_r,
        eps_v: kernel.eps_v,
        coherence_window,
        within_guaranteed_window: within,
        max_position_error: max_dp,
        max_velocity_error: max_dv,
        reference_position_error,
        reference_velocity_error,
        forward_collisions,
        backward_collisions,
        count_mismatches,
    };
    Ok(ReversalReport {
        scenario: format!(
            "blob-n{}-s{}-epsr{}-t{}",
            config.num_particles(),
            s,
            kernel.eps_r,
            t
        ),
        class: ReversalClass::Blob,
        duration: t,
        verdict,
        particle: None,
        smooth: None,
        blob: Some(metrics),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hard_sphere::sample_admissible_config;
    use crate::phase_field::maxwellian3;
    use crate::torus::wrap;

    fn head_on_pair() -> ParticleConfig {
        let positions = vec![
            wrap(Vec3::new(0.30, 0.50, 0.50), 1.0).unwrap(),
            wrap(Vec3::new(0.70, 0.50, 0.50), 1.0).unwrap(),
        ];
        let velocities = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        ParticleConfig::new(0.1, 1.0, positions, velocities, 0.0).unwrap()
    }

    #[test]
    fn particle_round_trip_recurs_through_collisions() {
        let config = head_on_pair();
        let report = run_particle_reversal(&config, 0.3, 1e-9).unwrap();
        assert_eq!(report.verdict, Verdict::Reversible);
        let m = report.particle.as_ref().unwrap();
        assert_eq!(m.forward_collisions, 1);
        assert_eq!(m.backward_collisions, 1);
        assert!(m.max_position_error <= 1e-12, "{}", m.max_position_error);
        assert!(m.max_velocity_error <= 1e-12, "{}", m.max_velocity_error);
        // Zero duration: exact equality.
        let frozen = run_particle_reversal(&config, 0.0, 1e-15).unwrap();
        assert_eq!(frozen.particle.as_ref().unwrap().max_position_error, 0.0);
        assert_eq!(frozen.particle.as_ref().unwrap().max_velocity_error, 0.0);
        assert_eq!(frozen.verdict, Verdict::Reversible);
    }

    #[test]
    fn particle_round_trip_holds_for_a_crowded_box() {
        let config = sample_admissible_config(8, 0.1, 1.0, 1.0, 1234).unwrap();
        let report = run_particle_reversal(&config, 4.0, 1e-6).unwrap();
        assert_eq!(report.verdict, Verdict::Reversible, "{report:?}");
        let m = report.particle.as_ref().unwrap();
        assert!(m.forward_collisions > 0, "scenario must actually collide");
        if let Some(sep) = m.min_event_separation {
            assert!(sep >= 0.1 * (1.0 - 1e-9));
        }
    }

    #[test]
    fn grid_view_interpolates_nodes_exactly_and_vanishes_outside() {
        let field = VelocityField::maxwellian(12, 5.0, 1.0, Vec3::ZERO, 1.0).unwrap();
        let view = GridView { field: &field };
        let r = wrap(Vec3::ZERO, 1.0).unwrap();
        // Node coordinates reproduce node values (up to rounding of the
        // fractional index leaking ulp-scale weight onto larger
        // neighbors).
        for (i, j, k) in [(0usize, 3usize, 7usize), (5, 5, 5), (11, 0, 2)] {
            let v = field.node(i, j, k);
            let want = field.values()[field.flat_index(i, j, k)];
            let got = view.eval(r, v);
            assert!((got - want).abs() <= 1e-9 * want.abs(), "{got} vs {want}");
        }
        assert_eq!(view.eval(r, Vec3::new(6.0, 0.0, 0.0)), 0.0);
        // Midpoint along one axis: the four-tap cubic stencil by hand.
        let va = field.node(5, 5, 5);
        let vb = field.node(6, 5, 5);
        let mid = (va + vb) * 0.5;
        let tap = |i: usize| field.values()[field.flat_index(i, 5, 5)];
        let want = -0.0625 * tap(4) + 0.5625 * tap(5) + 0.5625 * tap(6) - 0.0625 * tap(7);
        let got = view.eval(r, mid);
        assert!((got - want).abs() <= 1e-14 * want.abs(), "{got} vs {want}");
        // The cubic stencil tracks the analytic density to a few percent
        // even on this deliberately coarse grid (cell width 0.83 thermal
        // units).
        let dense = maxwellian3(mid, Vec3::ZERO, 1.0);
        assert!((got - dense).abs() <= 4e-2 * dense, "{got} vs {dense}");
    }

    #[test]
    fn bimodal_density_keeps_dissipating_after_the_flip() {
        let initial =
            VelocityField::bimodal(24, 7.2, 1.0, Vec3::new(0.7, 0.0, 0.0), 1.0).unwrap();
        let solver = HomogeneousSolver::new(24, 7.2).unwrap();
        let coupling = Coupling::Concentration(1.0);
        let bound = solver.stability_bound(&initial, 0.35, coupling).unwrap();
        let dt = 0.01 * bound;
        let opts = SmoothReversalOptions {
            a: 0.35,
            coupling,
            dt,
            l: 1.0,
            probes: 200,
            seed: 7,
        };
        let report =
            run_smooth_irreversibility(&initial, 6.0 * dt, 12.0 * dt, &opts).unwrap();
        assert_eq!(report.verdict, Verdict::Irreversible, "{report:?}");
        let m = report.smooth.as_ref().unwrap();
        assert!(m.h_monotone_before_reversal);
        assert!(m.h_monotone_after_reversal);
        assert!(m.violation > 5.0 * m.noise_floor, "{} vs floor {}", m.violation, m.noise_floor);
        assert!(m.h_drop_after_reversal > 0.0);
        assert!(m.max_h_excess_after_reversal <= m.h_step_allowance);
        // Series: initial + 6 forward + flip row + 6 backward.
        assert_eq!(m.series.len(), 14);
        // The flip instant appears twice with opposite momentum (both at
        // roundoff scale for this symmetric field) and equal H.
        let before = &m.series[6];
        let after = &m.series[7];
        assert_eq!(before.t, after.t);
        assert!((before.px + after.px).abs() <= 1e-12 * before.mass);
        assert!((before.h - after.h).abs() <= 1e-9 * before.h.abs());
    }

    #[test]
    fn equilibrium_density_reports_degenerate() {
        let initial = VelocityField::maxwellian(24, 7.2, 1.0, Vec3::ZERO, 1.0).unwrap();
        let solver = HomogeneousSolver::new(24, 7.2).unwrap();
        let coupling = Coupling::Concentration(1.0);
        let bound = solver.stability_bound(&initial, 0.35, coupling).unwrap();
        let dt = 0.01 * bound;
        let opts = SmoothReversalOptions {
            a: 0.35,
            coupling,
            dt,
            l: 1.0,
            probes: 200,
            seed: 7,
        };
        let report = run_smooth_irreversibility(&initial, 3.0 * dt, 6.0 * dt, &opts).unwrap();
        assert_eq!(report.verdict, Verdict::Degenerate, "{report:?}");
        let m = report.smooth.as_ref().unwrap();
        assert!(m.violation <= 5.0 * m.noise_floor, "{} vs {}", m.violation, m.noise_floor);
    }

    #[test]
    fn flip_at_time_zero_is_a_plain_forward_run() {
        // The symmetric bimodal field equals its own reversal, so flipping
        // at t = 0 must reproduce the forward H trajectory exactly.
        let initial =
            VelocityField::bimodal(16, 6.0, 1.0, Vec3::new(0.7, 0.0, 0.0), 1.0).unwrap();
        let flipped = reverse_field(&initial);
        assert_eq!(initial.values(), flipped.values());
        let solver = HomogeneousSolver::new(16, 6.0).unwrap();
        let coupling = Coupling::Concentration(1.0);
        let bound = solver.stability_bound(&initial, 0.35, coupling).unwrap();
        let dt = 0.002 * bound;
        let opts = SmoothReversalOptions {
            a: 0.35,
            coupling,
            dt,
            l: 1.0,
            probes: 50,
            seed: 1,
        };
        let report = run_smooth_irreversibility(&initial, 0.0, 3.0 * dt, &opts).unwrap();
        let m = report.smooth.as_ref().unwrap();
        assert_eq!(m.series.len(), 5);
        assert_eq!(m.h_at_reversal, m.h_initial);
        // Forward stepping by hand matches the post-flip series.
        let (one, _) = solver.step(&initial, dt, 0.35, coupling).unwrap();
        assert!((h_functional(&one) - m.series[2].h).abs() <= 1e-12 * m.series[2].h.abs());
    }

    #[test]
    fn degenerate_blob_reversal_matches_the_particle_driver() {
        let config = head_on_pair();
        let blob = run_blob_reversal(
            &config,
            Mollifier::new(0.0, 0.0).unwrap(),
            3,
            0.3,
            1e-9,
            11,
        )
        .unwrap();
        let particle = run_particle_reversal(&config, 0.3, 1e-9).unwrap();
        assert_eq!(blob.verdict, Verdict::Reversible);
        let b = blob.blob.as_ref().unwrap();
        let p = particle.particle.as_ref().unwrap();
        assert_eq!(b.max_position_error, p.max_position_error);
        assert_eq!(b.max_velocity_error, p.max_velocity_error);
        assert!(b.within_guaranteed_window);
        assert_eq!(b.coherence_window, 0.3);
        assert_eq!(b.count_mismatches, 0);
    }

    #[test]
    fn sampled_blob_reversal_recurs_within_tolerance() {
        let config = head_on_pair();
        let kernel = Mollifier::new(0.004, 0.004).unwrap();
        let report = run_blob_reversal(&config, kernel, 20, 0.3, 1e-9, 5).unwrap();
        assert_eq!(report.verdict, Verdict::Reversible, "{report:?}");
        let b = report.blob.as_ref().unwrap();
        assert!(b.within_guaranteed_window, "window {}", b.coherence_window);
        assert_eq!(b.forward_collisions, b.backward_collisions);
        assert!(b.max_position_error <= 1e-11);
        // Far beyond the coherence window the run still executes and is
        // flagged.
        let wide = Mollifier::new(0.02, 0.02).unwrap();
        let flagged = run_blob_reversal(&config, wide, 20, 0.3, 1e-9, 5).unwrap();
        let fb = flagged.blob.as_ref().unwrap();
        assert!(!fb.within_guaranteed_window);
        assert!(fb.coherence_window < 0.3);
        // Reversal is exact dynamics samplewise, so the verdict stays
        // reversible even outside the window.
        assert_eq!(flagged.verdict, Verdict::Reversible);
    }

    #[test]
    fn reports_serialize_with_one_metric_block() {
        let config = head_on_pair();
        let report = run_particle_reversal(&config, 0.3, 1e-9).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"class\":\"particle\""));
        assert!(json.contains("\"verdict\":\"reversible\""));
        assert!(!json.contains("\"smooth\""));
        assert!(!json.contains("\"blob\""));
        let back: ReversalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.verdict, Verdict::Reversible);
        assert_eq!(back.class, ReversalClass::Particle);
    }
}
