//! Mollified particle ensembles.
//!
//! A smooth "blob" field places a compact product kernel on every particle
//! of an N-particle configuration.  The same construction, read as a
//! probability density, is realized here by Monte Carlo: ensembles of
//! perturbed configurations transported through the exact hard-sphere flow.
//! On top of the transported samples this module provides kernel marginal
//! estimates with their pair-factorization diagnostic, the coherence window
//! during which every sample shadows the reference trajectory, and the
//! sharp-width limit in which the sample clouds collapse onto the reference
//! particles.
//!
//! Estimator reductions run over samples in fixed index order, so results
//! are reproducible bit for bit for a given seed regardless of how the
//! caller schedules the per-sample work.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard_sphere::{evolve, reverse, CollisionRecord, ParticleConfig};
use crate::mollifier::Mollifier;
use crate::phase_field::{PhaseField, Smoothness};
use crate::seeding::derive_rng;
use crate::torus::{min_image, torus_distance, wrap, TorusPoint, Vec3};

/// Default coherence threshold as a fraction of the contact distance.
pub const DEFAULT_COHERENCE_FRACTION: f64 = 0.25;

/// Number of uniformly spaced probe times used by [`coherence_time`] in
/// addition to every event time.
pub const COHERENCE_PROBE_COUNT: usize = 100;

/// Relative margin above the contact distance within which a probe time
/// counts as a contact instant.
const CONTACT_EXCLUSION_TOL: f64 = 1e-9;

fn check_separation(config: &ParticleConfig, kernel: &Mollifier) -> Result<()> {
    if let Some((i, j, sep)) = config.closest_pair() {
        let required = config.a() + 2.0 * kernel.eps_r;
        if sep <= required {
            return Err(Error::InvalidParam(format!(
                "blob supports must be separated: particles {i} and {j} sit at \
                 distance {sep}, need more than contact plus two widths = {required}"
            )));
        }
    }
    Ok(())
}

fn check_kernel_fits(kernel: &Mollifier, l: f64) -> Result<()> {
    if kernel.eps_r >= 0.5 * l {
        return Err(Error::InvalidParam(format!(
            "position width {} must stay below half the box length {}",
            kernel.eps_r, l
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Smooth blob field
// ---------------------------------------------------------------------------

/// Continuously differentiable field built by centering the product kernel
/// on every particle of a configuration, scaled by the inverse
/// concentration; its phase-space integral is the box volume.
#[derive(Clone, Debug)]
pub struct BlobField {
    centers: Vec<(TorusPoint, Vec3)>,
    kernel: Mollifier,
    l: f64,
    inv_concentration: f64,
}

impl BlobField {
    pub fn centers(&self) -> &[(TorusPoint, Vec3)] {
        &self.centers
    }

    pub fn kernel(&self) -> Mollifier {
        self.kernel
    }

    /// Peak value attained at each blob center (ignoring overlap, which the
    /// separation precondition rules out).
    pub fn peak(&self) -> f64 {
        self.inv_concentration * self.kernel.peak()
    }
}

impl PhaseField for BlobField {
    fn eval(&self, r: TorusPoint, v: Vec3) -> f64 {
        let mut total = 0.0;
        for (q, w) in &self.centers {
            total += self.kernel.density(min_image(r, *q, self.l), v - *w);
        }
        self.inv_concentration * total
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::MollifiedDelta
    }

    fn spatial_density(&self, r: TorusPoint) -> Option<f64> {
        let mut total = 0.0;
        for (q, _) in &self.centers {
            total += self.kernel.spatial(min_image(r, *q, self.l));
        }
        Some(self.inv_concentration * total)
    }
}

/// Builds the smooth blob field over `config`.
///
/// Requires strictly positive kernel widths and blob centers separated by
/// more than the contact distance plus two position widths, so supports are
/// pairwise disjoint with room to spare.
pub fn make_blob_initial(config: &ParticleConfig, kernel: Mollifier) -> Result<BlobField> {
    if !(kernel.eps_r > 0.0) || !(kernel.eps_v > 0.0) {
        return Err(Error::InvalidParam(format!(
            "smooth blob field needs positive widths, got {} and {}",
            kernel.eps_r, kernel.eps_v
        )));
    }
    check_kernel_fits(&kernel, config.l())?;
    check_separation(config, &kernel)?;
    let volume = config.l().powi(3);
    let inv_concentration = volume / config.num_particles() as f64;
    let centers = config
        .positions()
        .iter()
        .zip(config.velocities())
        .map(|(q, w)| (*q, *w))
        .collect();
    Ok(BlobField { centers, kernel, l: config.l(), inv_concentration })
}

// ---------------------------------------------------------------------------
// Sampled ensembles
// ---------------------------------------------------------------------------

/// A reference configuration together with independently perturbed copies,
/// each particle offset by a kernel-distributed amount. Samples carry their
/// own exact dynamics; the reference is evolved alongside.
#[derive(Clone, Debug)]
pub struct BlobEnsemble {
    reference: ParticleConfig,
    kernel: Mollifier,
    samples: Vec<ParticleConfig>,
    seed: u64,
}

impl BlobEnsemble {
    pub fn reference(&self) -> &ParticleConfig {
        &self.reference
    }

    pub fn kernel(&self) -> Mollifier {
        self.kernel
    }

    pub fn samples(&self) -> &[ParticleConfig] {
        &self.samples
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[cfg(test)]
    pub(crate) fn from_parts(
        reference: ParticleConfig,
        kernel: Mollifier,
        samples: Vec<ParticleConfig>,
        seed: u64,
    ) -> Result<BlobEnsemble> {
        if samples.is_empty() {
            return Err(Error::InvalidParam("ensemble needs at least one sample".into()));
        }
        for s in &samples {
            if s.num_particles() != reference.num_particles()
                || s.a() != reference.a()
                || s.l() != reference.l()
            {
                return Err(Error::InvalidParam(
                    "sample geometry differs from the reference".into(),
                ));
            }
        }
        Ok(BlobEnsemble { reference, kernel, samples, seed })
    }
}

/// Draws `s` independent perturbed copies of `config`, particle `k` of each
/// sample offset from the reference by a kernel draw.  Deterministic in
/// `seed`; sample `i` consumes its own derived stream, so the draw does not
/// depend on evaluation order.  Degenerate (zero-width) kernels reproduce
/// the reference exactly.
pub fn draw_ensemble(
    config: &ParticleConfig,
    kernel: Mollifier,
    s: usize,
    seed: u64,
) -> Result<BlobEnsemble> {
    if s == 0 {
        return Err(Error::InvalidParam("sample count must be positive".into()));
    }
    check_kernel_fits(&kernel, config.l())?;
    check_separation(config, &kernel)?;
    let l = config.l();
    let mut samples = Vec::with_capacity(s);
    for index in 0..s {
        let mut rng = derive_rng(seed, "blob-draw", index as u64);
        let mut positions = Vec::with_capacity(config.num_particles());
        let mut velocities = Vec::with_capacity(config.num_particles());
        for (q, w) in config.positions().iter().zip(config.velocities()) {
            let (dq, dw) = kernel.draw(&mut rng);
            positions.push(wrap(q.as_vec() + dq, l)?);
            velocities.push(*w + dw);
        }
        samples.push(ParticleConfig::new(config.a(), l, positions, velocities, config.time())?);
    }
    Ok(BlobEnsemble { reference: config.clone(), kernel, samples, seed })
}

/// Advances the reference and every sample by duration `t` under the exact
/// hard-sphere flow.
pub fn flow_ensemble(ens: &BlobEnsemble, t: f64) -> Result<BlobEnsemble> {
    let reference = evolve(&ens.reference, t)?.config;
    let mut samples = Vec::with_capacity(ens.samples.len());
    for sample in &ens.samples {
        samples.push(evolve(sample, t)?.config);
    }
    Ok(BlobEnsemble { reference, kernel: ens.kernel, samples, seed: ens.seed })
}

/// Reverses every sample velocity and the reference, leaving positions and
/// times unchanged.
pub fn reverse_ensemble(ens: &BlobEnsemble) -> BlobEnsemble {
    BlobEnsemble {
        reference: reverse(&ens.reference),
        kernel: ens.kernel,
        samples: ens.samples.iter().map(reverse).collect(),
        seed: ens.seed,
    }
}

// ---------------------------------------------------------------------------
// Trajectory reconstruction
// ---------------------------------------------------------------------------

/// Piecewise free-flight reconstruction of an evolution from its event log:
/// a checkpoint after every contact, positions in between by drift.
struct PathSampler {
    l: f64,
    times: Vec<f64>,
    positions: Vec<Vec<Vec3>>,
    velocities: Vec<Vec<Vec3>>,
}

impl PathSampler {
    fn new(start: &ParticleConfig, events: &[CollisionRecord]) -> PathSampler {
        let l = start.l();
        let mut times = vec![start.time()];
        let mut positions = vec![start.positions().iter().map(|p| p.as_vec()).collect::<Vec<_>>()];
        let mut velocities = vec![start.velocities().to_vec()];
        for rec in events {
            let last = times.len() - 1;
            let dt = rec.t - times[last];
            let mut pos = positions[last].clone();
            for (p, v) in pos.iter_mut().zip(&velocities[last]) {
                *p = *p + *v * dt;
            }
            let mut vel = velocities[last].clone();
            vel[rec.i] = rec.v1_post;
            vel[rec.j] = rec.v2_post;
            times.push(rec.t);
            positions.push(pos);
            velocities.push(vel);
        }
        PathSampler { l, times, positions, velocities }
    }

    /// Particle positions at absolute time `t` (must lie within the evolved
    /// window; later checkpoints win at ties).
    fn positions_at(&self, t: f64) -> Vec<TorusPoint> {
        let idx = self.times.partition_point(|&ck| ck <= t).saturating_sub(1);
        let dt = t - self.times[idx];
        self.positions[idx]
            .iter()
            .zip(&self.velocities[idx])
            .map(|(p, v)| {
                wrap(*p + *v * dt, self.l).expect("finite trajectory state")
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Coherence window
// ---------------------------------------------------------------------------

/// Largest duration `T <= t_max` such that, at every probe time up to `T`,
/// each sample particle stays within `threshold` of the corresponding
/// reference particle.  Probe times are a uniform grid of
/// [`COHERENCE_PROBE_COUNT`] points plus every contact time of the
/// reference and of the sample under test.  Returns zero if some sample is
/// incoherent at its first probe.
pub fn coherence_time(ens: &BlobEnsemble, t_max: f64, threshold: f64) -> Result<f64> {
    let a = ens.reference.a();
    if !(threshold > 0.0) || !(threshold < 0.5 * a) {
        return Err(Error::InvalidParam(format!(
            "coherence threshold {threshold} must be positive and below half \
             the contact distance {a}"
        )));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidParam(format!(
            "coherence horizon must be positive and finite, got {t_max}"
        )));
    }
    let t0 = ens.reference.time();
    let ref_out = evolve(&ens.reference, t_max)?;
    let ref_path = PathSampler::new(&ens.reference, &ref_out.events);
    let grid: Vec<f64> = (1..=COHERENCE_PROBE_COUNT)
        .map(|j| t0 + t_max * j as f64 / COHERENCE_PROBE_COUNT as f64)
        .collect();
    let l = ens.reference.l();
    let mut global = t_max;
    for sample in &ens.samples {
        let out = evolve(sample, t_max)?;
        let path = PathSampler::new(sample, &out.events);
        let mut probes: Vec<f64> = grid.clone();
        probes.extend(ref_out.events.iter().map(|e| e.t));
        probes.extend(out.events.iter().map(|e| e.t));
        probes.retain(|&t| t > t0 && t <= t0 + t_max);
        probes.sort_by(f64::total_cmp);
        let mut coherent_until = 0.0;
        for &t in &probes {
            let rp = ref_path.positions_at(t);
            let sp = path.positions_at(t);
            let apart = rp
                .iter()
                .zip(&sp)
                .any(|(r, s)| torus_distance(*r, *s, l) > threshold);
            if apart {
                break;
            }
            coherent_until = t - t0;
        }
        global = global.min(coherent_until);
        if global == 0.0 {
            break;
        }
    }
    Ok(global)
}

// ---------------------------------------------------------------------------
// Marginal estimation
// ---------------------------------------------------------------------------

/// A kernel estimate together with its Monte Carlo standard error (zero
/// when only one sample is available).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Kernel density estimates of the one- and two-point marginals of a
/// transported ensemble.
///
/// The one-point estimate pools all particles of all samples, weighted so
/// its phase-space integral is exactly the box volume; the two-point
/// estimate sums over ordered distinct particle pairs, carrying the usual
/// (1 - 1/N) depletion relative to a perfect product.  Both are symmetric
/// under particle relabeling.  The two-point marginal is identically zero
/// whenever the probe positions are closer than the contact distance: no
/// admissible configuration can realize such a pair.
#[derive(Clone, Debug)]
pub struct MarginalEstimate {
    samples: Vec<Vec<(TorusPoint, Vec3)>>,
    l: f64,
    a: f64,
    inv_concentration: f64,
    h_r: [f64; 3],
    h_v: [f64; 3],
}

impl MarginalEstimate {
    /// Builds the estimator with per-coordinate Scott bandwidths
    /// `sigma_c * (S*N)^(-1/10)` over the pooled transported points.
    /// Needs at least two samples and nonzero spread in every coordinate.
    pub fn from_ensemble(ens: &BlobEnsemble) -> Result<MarginalEstimate> {
        if ens.num_samples() < 2 {
            return Err(Error::InvalidParam(
                "bandwidth selection needs at least two samples; supply an explicit \
                 bandwidth instead"
                    .into(),
            ));
        }
        let count = (ens.num_samples() * ens.reference.num_particles()) as f64;
        let factor = count.powf(-0.1);
        let mut h = [0.0f64; 6];
        for c in 0..6 {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for sample in &ens.samples {
                for (q, w) in sample.positions().iter().zip(sample.velocities()) {
                    let x = coordinate(*q, *w, c);
                    sum += x;
                    sum_sq += x * x;
                }
            }
            let mean = sum / count;
            let var = (sum_sq / count - mean * mean).max(0.0);
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "degenerate spread in coordinate {c}; supply an explicit bandwidth"
                )));
            }
            h[c] = sd * factor;
        }
        Self::build(ens, [h[0], h[1], h[2]], [h[3], h[4], h[5]])
    }

    /// Builds the estimator with isotropic position and velocity bandwidths.
    pub fn with_bandwidth(ens: &BlobEnsemble, h_r: f64, h_v: f64) -> Result<MarginalEstimate> {
        if !(h_r > 0.0) || !h_r.is_finite() || !(h_v > 0.0) || !h_v.is_finite() {
            return Err(Error::InvalidParam(format!(
                "bandwidths must be positive and finite, got {h_r}, {h_v}"
            )));
        }
        Self::build(ens, [h_r; 3], [h_v; 3])
    }

    fn build(ens: &BlobEnsemble, h_r: [f64; 3], h_v: [f64; 3]) -> Result<MarginalEstimate> {
        let l = ens.reference.l();
        for h in h_r {
            if h >= 0.5 * l {
                return Err(Error::InvalidParam(format!(
                    "position bandwidth {h} must stay below half the box length {l}"
                )));
            }
        }
        let volume = l.powi(3);
        let samples = ens
            .samples
            .iter()
            .map(|s| {
                s.positions()
                    .iter()
                    .zip(s.velocities())
                    .map(|(q, w)| (*q, *w))
                    .collect()
            })
            .collect();
        Ok(MarginalEstimate {
            samples,
            l,
            a: ens.reference.a(),
            inv_concentration: volume / ens.reference.num_particles() as f64,
            h_r,
            h_v,
        })
    }

    pub fn bandwidths(&self) -> ([f64; 3], [f64; 3]) {
        (self.h_r, self.h_v)
    }

    /// Product kernel between a probe point and a stored point.
    fn kernel6(&self, r: TorusPoint, v: Vec3, q: TorusPoint, w: Vec3) -> f64 {
        let dr = min_image(r, q, self.l).to_array();
        let dv = (v - w).to_array();
        let mut k = 1.0;
        for c in 0..3 {
            k *= crate::mollifier::kernel1(dr[c] / self.h_r[c]) / self.h_r[c];
            if k == 0.0 {
                return 0.0;
            }
        }
        for c in 0..3 {
            k *= crate::mollifier::kernel1(dv[c] / self.h_v[c]) / self.h_v[c];
            if k == 0.0 {
                return 0.0;
            }
        }
        k
    }

    fn mean_and_se(values: impl Iterator<Item = f64>) -> Estimate {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in values {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        let se = if n > 1 {
            (m2 / ((n - 1) as f64 * n as f64)).max(0.0).sqrt()
        } else {
            0.0
        };
        Estimate { value: mean, se }
    }

    /// One-point marginal estimate at phase point `(r, v)`.
    pub fn f1(&self, r: TorusPoint, v: Vec3) -> Estimate {
        let inv = self.inv_concentration;
        Self::mean_and_se(self.samples.iter().map(|pts| {
            inv * pts.iter().map(|(q, w)| self.kernel6(r, v, *q, *w)).sum::<f64>()
        }))
    }

    /// Two-point marginal estimate at probe pair `(x1, x2)`; exactly zero
    /// when the probe positions are closer than the contact distance.
    pub fn f2(
        &self,
        x1: (TorusPoint, Vec3),
        x2: (TorusPoint, Vec3),
    ) -> Estimate {
        if torus_distance(x1.0, x2.0, self.l) < self.a {
            return Estimate { value: 0.0, se: 0.0 };
        }
        let inv_sq = self.inv_concentration * self.inv_concentration;
        Self::mean_and_se(self.samples.iter().map(|pts| {
            let k1: Vec<f64> =
                pts.iter().map(|(q, w)| self.kernel6(x1.0, x1.1, *q, *w)).collect();
            let k2: Vec<f64> =
                pts.iter().map(|(q, w)| self.kernel6(x2.0, x2.1, *q, *w)).collect();
            let mut acc = 0.0;
            for i in 0..pts.len() {
                if k1[i] == 0.0 {
                    continue;
                }
                for j in 0..pts.len() {
                    if j != i {
                        acc += k1[i] * k2[j];
                    }
                }
            }
            inv_sq * acc
        }))
    }

    /// Signed factorization defect `F2(x1,x2) - F1(x1) F1(x2)` with the
    /// combined standard error of the three estimates.
    pub fn factorization_defect(
        &self,
        x1: (TorusPoint, Vec3),
        x2: (TorusPoint, Vec3),
    ) -> Estimate {
        let pair = self.f2(x1, x2);
        let a = self.f1(x1.0, x1.1);
        let b = self.f1(x2.0, x2.1);
        let value = pair.value - a.value * b.value;
        let se = (pair.se * pair.se
            + (a.value * b.se) * (a.value * b.se)
            + (b.value * a.se) * (b.value * a.se))
            .sqrt();
        Estimate { value, se }
    }
}

fn coordinate(q: TorusPoint, w: Vec3, c: usize) -> f64 {
    match c {
        0 => q.x(),
        1 => q.y(),
        2 => q.z(),
        3 => w.x,
        4 => w.y,
        _ => w.z,
    }
}

/// Factorization report over a set of probe pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// Signed defect and combined standard error per probe pair.
    pub defects: Vec<Estimate>,
    /// Largest absolute defect.
    pub max_gap: f64,
    /// Combined standard error at the probe attaining `max_gap`.
    pub se_at_max: f64,
}

/// Evaluates the factorization defect of the ensemble's current state over
/// the given probe pairs, whose positions must be at least the contact
/// distance apart.
pub fn factorization_gap(
    ens: &BlobEnsemble,
    probes: &[((TorusPoint, Vec3), (TorusPoint, Vec3))],
) -> Result<FactorizationReport> {
    if probes.is_empty() {
        return Err(Error::InvalidParam("need at least one probe pair".into()));
    }
    let a = ens.reference.a();
    let l = ens.reference.l();
    for (x1, x2) in probes {
        let sep = torus_distance(x1.0, x2.0, l);
        if sep < a {
            return Err(Error::InvalidParam(format!(
                "probe pair at distance {sep} violates the contact separation {a}"
            )));
        }
    }
    let est = MarginalEstimate::from_ensemble(ens)?;
    let mut defects = Vec::with_capacity(probes.len());
    let mut max_gap = 0.0;
    let mut se_at_max = 0.0;
    for (x1, x2) in probes {
        let d = est.factorization_defect(*x1, *x2);
        if d.value.abs() >= max_gap {
            max_gap = d.value.abs();
            se_at_max = d.se;
        }
        defects.push(d);
    }
    Ok(FactorizationReport { defects, max_gap, se_at_max })
}

// ---------------------------------------------------------------------------
// Sharp-width limit
// ---------------------------------------------------------------------------

/// Centroid error of one width in a sharp-width sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitPoint {
    pub eps_r: f64,
    pub eps_v: f64,
    /// Largest distance between a sample-cloud centroid and its reference
    /// particle at the probe time.
    pub error: f64,
    /// Monte Carlo standard error of the centroid attaining `error`.
    pub se: f64,
    /// Centroid distance per particle.
    pub per_particle: Vec<f64>,
}

/// Plot-ready summary of a transported ensemble at one kernel width.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarnessReport {
    pub epsilon_r: f64,
    pub epsilon_v: f64,
    #[serde(rename = "S")]
    pub samples: usize,
    #[serde(rename = "T_epsilon")]
    pub coherence_window: f64,
    pub factorization_gap: f64,
    pub centroid_errors: Vec<f64>,
}

/// Transports ensembles of shrinking width to `t_probe` and measures how
/// far each particle's sample-cloud centroid sits from the reference
/// particle.  Kernels must have strictly decreasing position widths and
/// non-increasing velocity widths.  The same seed is reused for every
/// width, so draws share their underlying variates and the width dependence
/// is not drowned in fresh sampling noise.  The probe time must not be a
/// contact instant of the reference.
pub fn limit_trajectory_error(
    config: &ParticleConfig,
    kernels: &[Mollifier],
    s: usize,
    t_probe: f64,
    seed: u64,
) -> Result<Vec<LimitPoint>> {
    if kernels.is_empty() {
        return Err(Error::InvalidParam("need at least one kernel width".into()));
    }
    for pair in kernels.windows(2) {
        if !(pair[1].eps_r < pair[0].eps_r) || pair[1].eps_v > pair[0].eps_v {
            return Err(Error::InvalidParam(
                "kernel widths must strictly decrease in position and not grow in \
                 velocity"
                    .into(),
            ));
        }
    }
    if !(t_probe > 0.0) || !t_probe.is_finite() {
        return Err(Error::InvalidParam(format!(
            "probe time must be positive and finite, got {t_probe}"
        )));
    }
    let reference = evolve(config, t_probe)?.config;
    if let Some((_, _, sep)) = reference.closest_pair() {
        let a = config.a();
        if sep <= a * (1.0 + CONTACT_EXCLUSION_TOL) {
            return Err(Error::ProbeAtContact { sep, a });
        }
    }
    let l = config.l();
    let n = config.num_particles();
    let mut out = Vec::with_capacity(kernels.len());
    for kernel in kernels {
        let ens = draw_ensemble(config, *kernel, s, seed)?;
        let flowed = flow_ensemble(&ens, t_probe)?;
        let mut worst = 0.0f64;
        let mut worst_se = 0.0f64;
        let mut per_particle = Vec::with_capacity(n);
        for k in 0..n {
            let target = reference.positions()[k];
            let mut mean = Vec3::ZERO;
            let mut sum_sq = Vec3::ZERO;
            for sample in flowed.samples() {
                let d = min_image(sample.positions()[k], target, l);
                mean = mean + d;
                sum_sq = sum_sq + Vec3::new(d.x * d.x, d.y * d.y, d.z * d.z);
            }
            let count = flowed.num_samples() as f64;
            mean = mean * (1.0 / count);
            let err = mean.norm();
            let se = if flowed.num_samples() > 1 {
                let vx = (sum_sq.x / count - mean.x * mean.x).max(0.0);
                let vy = (sum_sq.y / count - mean.y * mean.y).max(0.0);
                let vz = (sum_sq.z / count - mean.z * mean.z).max(0.0);
                ((vx + vy + vz) / (count - 1.0)).sqrt()
            } else {
                0.0
            };
            per_particle.push(err);
            if err >= worst {
                worst = err;
                worst_se = se;
            }
        }
        out.push(LimitPoint {
            eps_r: kernel.eps_r,
            eps_v: kernel.eps_v,
            error: worst,
            se: worst_se,
            per_particle,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hard_sphere::state_deviation;
    use crate::mollifier::KERNEL_PEAK_1D;
    use crate::quadrature::gauss_legendre;

    fn two_particle_config() -> ParticleConfig {
        let positions = vec![
            wrap(Vec3::new(0.30, 0.50, 0.50), 1.0).unwrap(),
            wrap(Vec3::new(0.70, 0.50, 0.50), 1.0).unwrap(),
        ];
        let velocities = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        ParticleConfig::new(0.1, 1.0, positions, velocities, 0.0).unwrap()
    }

    /// Three particles on a line: the first sweeps right, strikes the
    /// second, which strikes the third; two contacts by t = 0.5.
    fn three_particle_chain() -> ParticleConfig {
        let positions = vec![
            wrap(Vec3::new(0.20, 0.50, 0.50), 1.0).unwrap(),
            wrap(Vec3::new(0.50, 0.50, 0.50), 1.0).unwrap(),
            wrap(Vec3::new(0.80, 0.50, 0.50), 1.0).unwrap(),
        ];
        let velocities = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::ZERO, Vec3::ZERO];
        ParticleConfig::new(0.1, 1.0, positions, velocities, 0.0).unwrap()
    }

    #[test]
    fn blob_field_peak_support_and_separation_gate() {
        let config = two_particle_config();
        let kernel = Mollifier::new(0.02, 0.05).unwrap();
        let field = make_blob_initial(&config, kernel).unwrap();
        // At a center the other blob contributes nothing.
        let peak = field.eval(config.positions()[0], config.velocities()[0]);
        let expected = 0.5 * KERNEL_PEAK_1D.powi(6) / (0.02f64.powi(3) * 0.05f64.powi(3));
        assert!((peak - expected).abs() <= 1e-12 * expected, "{peak} vs {expected}");
        assert!((peak - field.peak()).abs() <= 1e-12 * expected);
        // Farther than the widths from every center: exact zero.
        let far = wrap(Vec3::new(0.5, 0.1, 0.9), 1.0).unwrap();
        assert_eq!(field.eval(far, Vec3::ZERO), 0.0);
        // Off-support in velocity only.
        assert_eq!(field.eval(config.positions()[0], Vec3::new(2.0, 0.0, 0.0)), 0.0);
        // Degenerate widths are not a smooth field.
        assert!(make_blob_initial(&config, Mollifier::new(0.0, 0.1).unwrap()).is_err());
        // Separation gate: centers at distance 0.13 with a = 0.1 leave no
        // room for width 0.02 (needs > 0.14).
        let close = ParticleConfig::new(
            0.1,
            1.0,
            vec![
                wrap(Vec3::new(0.30, 0.5, 0.5), 1.0).unwrap(),
                wrap(Vec3::new(0.43, 0.5, 0.5), 1.0).unwrap(),
            ],
            vec![Vec3::ZERO, Vec3::ZERO],
            0.0,
        )
        .unwrap();
        assert!(make_blob_initial(&close, kernel).is_err());
    }

    #[test]
    fn blob_field_mass_is_the_box_volume() {
        // One blob deliberately near the box corner so the wrap path is
        // exercised by the quadrature.
        let positions = vec![
            wrap(Vec3::new(0.01, 0.02, 0.98), 1.0).unwrap(),
            wrap(Vec3::new(0.50, 0.50, 0.50), 1.0).unwrap(),
        ];
        let velocities = vec![Vec3::new(0.4, -0.2, 0.1), Vec3::new(-0.3, 0.0, 0.2)];
        let config = ParticleConfig::new(0.1, 1.0, positions, velocities, 0.0).unwrap();
        let kernel = Mollifier::new(0.03, 0.07).unwrap();
        let field = make_blob_initial(&config, kernel).unwrap();
        // Tensor Gauss-Legendre over each blob's own support; supports are
        // disjoint, so the sum of local integrals is the total integral.
        // Eight nodes per axis integrate the quartic kernel exactly.
        let (nodes, weights) = gauss_legendre(8);
        let mut total = 0.0;
        for (center, vel) in field.centers() {
            let mut blob = 0.0;
            for (xi, wx) in nodes.iter().zip(&weights) {
                for (yi, wy) in nodes.iter().zip(&weights) {
                    for (zi, wz) in nodes.iter().zip(&weights) {
                        let r = wrap(
                            center.as_vec()
                                + Vec3::new(xi * kernel.eps_r, yi * kernel.eps_r, zi * kernel.eps_r),
                            1.0,
                        )
                        .unwrap();
                        let wr = wx * wy * wz;
                        for (ui, wu) in nodes.iter().zip(&weights) {
                            for (vi, wv) in nodes.iter().zip(&weights) {
                                for (si, ws) in nodes.iter().zip(&weights) {
                                    let v = *vel
                                        + Vec3::new(
                                            ui * kernel.eps_v,
                                            vi * kernel.eps_v,
                                            si * kernel.eps_v,
                                        );
                                    blob += wr * wu * wv * ws * field.eval(r, v);
                                }
                            }
                        }
                    }
                }
            }
            total += blob * kernel.eps_r.powi(3) * kernel.eps_v.powi(3);
        }
        // Integral of the field is the box volume (here 1).
        assert!((total - 1.0).abs() <= 1e-6, "total {total}");
    }

    #[test]
    fn ensemble_draw_is_seeded_centered_and_admissible() {
        let config = two_particle_config();
        let kernel = Mollifier::new(0.02, 0.05).unwrap();
        let s = 400;
        let ens = draw_ensemble(&config, kernel, s, 9001).unwrap();
        let again = draw_ensemble(&config, kernel, s, 9001).unwrap();
        for (x, y) in ens.samples().iter().zip(again.samples()) {
            assert_eq!(state_deviation(x, y).unwrap(), 0.0);
        }
        let other = draw_ensemble(&config, kernel, s, 9002).unwrap();
        assert!(state_deviation(&ens.samples()[0], &other.samples()[0]).unwrap() > 0.0);
        // Offsets stay inside the kernel support and average out.
        let kernel_sd = kernel.eps_r / 7.0f64.sqrt();
        for k in 0..config.num_particles() {
            let mut mean = Vec3::ZERO;
            for sample in ens.samples() {
                let d = min_image(sample.positions()[k], config.positions()[k], 1.0);
                assert!(d.max_abs() < kernel.eps_r);
                mean = mean + d;
            }
            mean = mean * (1.0 / s as f64);
            let tol = 3.0 * kernel_sd / (s as f64).sqrt();
            assert!(mean.norm() < 3.0f64.sqrt() * tol, "bias {} vs {tol}", mean.norm());
        }
        // Degenerate widths reproduce the reference exactly.
        let degenerate = draw_ensemble(&config, Mollifier::new(0.0, 0.0).unwrap(), 5, 1).unwrap();
        for sample in degenerate.samples() {
            assert_eq!(state_deviation(sample, &config).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_particle_ensemble_free_flights() {
        let config = ParticleConfig::new(
            0.1,
            1.0,
            vec![wrap(Vec3::new(0.2, 0.3, 0.4), 1.0).unwrap()],
            vec![Vec3::new(0.7, -0.4, 0.2)],
            0.0,
        )
        .unwrap();
        let kernel = Mollifier::new(0.05, 0.3).unwrap();
        let ens = draw_ensemble(&config, kernel, 20, 5).unwrap();
        let t = 1.7;
        let flowed = flow_ensemble(&ens, t).unwrap();
        for (before, after) in ens.samples().iter().zip(flowed.samples()) {
            let q = before.positions()[0];
            let v = before.velocities()[0];
            let expect = wrap(q.as_vec() + v * t, 1.0).unwrap();
            assert!(torus_distance(after.positions()[0], expect, 1.0) <= 1e-12);
            assert_eq!(after.velocities()[0].to_array(), v.to_array());
        }
        // t = 0 is the identity.
        let frozen = flow_ensemble(&ens, 0.0).unwrap();
        for (x, y) in ens.samples().iter().zip(frozen.samples()) {
            assert_eq!(state_deviation(x, y).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_body_clouds_center_on_post_collision_velocities() {
        let config = two_particle_config();
        let kernel = Mollifier::new(0.005, 0.005).unwrap();
        let s = 400;
        let ens = draw_ensemble(&config, kernel, s, 31).unwrap();
        // Head-on contact at t = 0.15; flow past it.
        let flowed = flow_ensemble(&ens, 0.3).unwrap();
        let reference = evolve(&config, 0.3).unwrap();
        assert_eq!(reference.stats.collisions, 1);
        let post = reference.config.velocities();
        assert!((post[0] - Vec3::new(-1.0, 0.0, 0.0)).max_abs() <= 1e-12);
        for k in 0..2 {
            let mut mean = Vec3::ZERO;
            for sample in flowed.samples() {
                mean = mean + sample.velocities()[k];
            }
            mean = mean * (1.0 / s as f64);
            assert!(
                (mean - post[k]).norm() <= 0.02,
                "cloud {k} centered at {:?} vs {:?}",
                mean.to_array(),
                post[k].to_array()
            );
        }
    }

    #[test]
    fn coherence_window_is_full_for_degenerate_and_shrinks_with_width() {
        let config = two_particle_config();
        let t_max = 0.3;
        let threshold = 0.025;
        let degenerate =
            draw_ensemble(&config, Mollifier::new(0.0, 0.0).unwrap(), 10, 2).unwrap();
        assert_eq!(coherence_time(&degenerate, t_max, threshold).unwrap(), t_max);
        let tight = draw_ensemble(&config, Mollifier::new(0.004, 0.004).unwrap(), 60, 2).unwrap();
        let t_tight = coherence_time(&tight, t_max, threshold).unwrap();
        let wide = draw_ensemble(&config, Mollifier::new(0.02, 0.02).unwrap(), 60, 2).unwrap();
        let t_wide = coherence_time(&wide, t_max, threshold).unwrap();
        assert_eq!(t_tight, t_max, "tight ensemble stays coherent");
        assert!(t_wide < t_max, "wide ensemble must lose coherence, got {t_wide}");
        assert!(t_wide <= t_tight);
        // The wide ensemble survives at least until its first probe after
        // the reference collision window begins.
        assert!(t_wide > 0.0);
        // Threshold gate.
        assert!(coherence_time(&tight, t_max, 0.05).is_err());
        assert!(coherence_time(&tight, t_max, 0.0).is_err());
    }

    #[test]
    fn single_particle_coherence_is_full_with_zero_velocity_width() {
        let config = ParticleConfig::new(
            0.05,
            1.0,
            vec![wrap(Vec3::new(0.5, 0.5, 0.5), 1.0).unwrap()],
            vec![Vec3::new(0.3, 0.9, -0.2)],
            0.0,
        )
        .unwrap();
        // Position offsets below the threshold, no velocity spread: free
        // flight preserves the offsets forever.
        let kernel = Mollifier::new(0.01, 0.0).unwrap();
        let ens = draw_ensemble(&config, kernel, 30, 77).unwrap();
        assert_eq!(coherence_time(&ens, 5.0, 0.012).unwrap(), 5.0);
    }

    #[test]
    fn marginal_normalization_is_exact_for_a_single_cloud() {
        let config = ParticleConfig::new(
            0.1,
            1.0,
            vec![wrap(Vec3::new(0.97, 0.5, 0.02), 1.0).unwrap()],
            vec![Vec3::new(0.2, -0.1, 0.4)],
            0.0,
        )
        .unwrap();
        let ens = draw_ensemble(&config, Mollifier::new(0.0, 0.0).unwrap(), 1, 3).unwrap();
        let (h_r, h_v) = (0.04, 0.09);
        let est = MarginalEstimate::with_bandwidth(&ens, h_r, h_v).unwrap();
        // With one sample and one particle the estimate is a single product
        // kernel: three Gauss nodes per axis integrate it exactly, and the
        // integral must equal the box volume.
        let (nodes, weights) = gauss_legendre(3);
        let center = (config.positions()[0], config.velocities()[0]);
        let mut total = 0.0;
        for (xi, wx) in nodes.iter().zip(&weights) {
            for (yi, wy) in nodes.iter().zip(&weights) {
                for (zi, wz) in nodes.iter().zip(&weights) {
                    let r = wrap(
                        center.0.as_vec() + Vec3::new(xi * h_r, yi * h_r, zi * h_r),
                        1.0,
                    )
                    .unwrap();
                    for (ui, wu) in nodes.iter().zip(&weights) {
                        for (vi, wv) in nodes.iter().zip(&weights) {
                            for (si, ws) in nodes.iter().zip(&weights) {
                                let v = center.1
                                    + Vec3::new(ui * h_v, vi * h_v, si * h_v);
                                total += wx * wy * wz * wu * wv * ws
                                    * est.f1(r, v).value;
                            }
                        }
                    }
                }
            }
        }
        total *= h_r.powi(3) * h_v.powi(3);
        assert!((total - 1.0).abs() <= 1e-10, "integral {total}");
    }

    #[test]
    fn marginal_estimates_are_relabeling_invariant_and_match_direct_sums() {
        let config = two_particle_config();
        let kernel = Mollifier::new(0.01, 0.02).unwrap();
        let ens = draw_ensemble(&config, kernel, 8, 17).unwrap();
        let est = MarginalEstimate::with_bandwidth(&ens, 0.03, 0.06).unwrap();
        let probe_r = config.positions()[0];
        let probe_v = config.velocities()[0];
        // Direct reimplementation of the pooled sum.
        let volume_over_n = 0.5;
        let mut per_sample = Vec::new();
        for sample in ens.samples() {
            let mut acc = 0.0;
            for (q, w) in sample.positions().iter().zip(sample.velocities()) {
                let dr = min_image(probe_r, *q, 1.0).to_array();
                let dv = (probe_v - *w).to_array();
                let mut k = 1.0;
                for c in 0..3 {
                    k *= crate::mollifier::kernel1(dr[c] / 0.03) / 0.03;
                }
                for c in 0..3 {
                    k *= crate::mollifier::kernel1(dv[c] / 0.06) / 0.06;
                }
                acc += k;
            }
            per_sample.push(volume_over_n * acc);
        }
        let mean: f64 = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        let got = est.f1(probe_r, probe_v);
        assert!((got.value - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        // Relabeling the particles inside every sample leaves the
        // estimates unchanged.
        let swapped: Vec<ParticleConfig> = ens
            .samples()
            .iter()
            .map(|sample| {
                let mut pos = sample.positions().to_vec();
                let mut vel = sample.velocities().to_vec();
                pos.swap(0, 1);
                vel.swap(0, 1);
                ParticleConfig::new(0.1, 1.0, pos, vel, sample.time()).unwrap()
            })
            .collect();
        let relabeled = BlobEnsemble::from_parts(
            ens.reference().clone(),
            kernel,
            swapped,
            ens.seed(),
        )
        .unwrap();
        let est2 = MarginalEstimate::with_bandwidth(&relabeled, 0.03, 0.06).unwrap();
        let got2 = est2.f1(probe_r, probe_v);
        assert_eq!(got.value, got2.value);
        assert_eq!(got.se, got2.se);
        let x1 = (config.positions()[0], config.velocities()[0]);
        let x2 = (config.positions()[1], config.velocities()[1]);
        assert_eq!(est.f2(x1, x2).value, est2.f2(x1, x2).value);
    }

    #[test]
    fn pair_marginal_vanishes_inside_contact_and_factorizes_at_centers() {
        let config = two_particle_config();
        let kernel = Mollifier::new(0.01, 0.02).unwrap();
        let ens = draw_ensemble(&config, kernel, 200, 23).unwrap();
        let x1 = (config.positions()[0], config.velocities()[0]);
        let x2 = (config.positions()[1], config.velocities()[1]);
        // Inside the contact distance the pair marginal is identically zero.
        let near = (
            wrap(Vec3::new(0.33, 0.5, 0.5), 1.0).unwrap(),
            Vec3::ZERO,
        );
        let near2 = (
            wrap(Vec3::new(0.40, 0.5, 0.5), 1.0).unwrap(),
            Vec3::ZERO,
        );
        let inside = MarginalEstimate::from_ensemble(&ens).unwrap().f2(near, near2);
        assert_eq!(inside.value, 0.0);
        assert_eq!(inside.se, 0.0);
        // At the two blob centers the pair estimate factorizes within the
        // Monte Carlo error: the clouds are drawn independently.
        let report = factorization_gap(&ens, &[(x1, x2)]).unwrap();
        assert!(
            report.max_gap <= 3.0 * report.se_at_max,
            "gap {} vs se {}",
            report.max_gap,
            report.se_at_max
        );
        // Probes outside every support give exact zeros.
        let off = (
            wrap(Vec3::new(0.1, 0.1, 0.1), 1.0).unwrap(),
            Vec3::new(3.0, 0.0, 0.0),
        );
        let off2 = (
            wrap(Vec3::new(0.9, 0.9, 0.9), 1.0).unwrap(),
            Vec3::new(-3.0, 0.0, 0.0),
        );
        let est = MarginalEstimate::from_ensemble(&ens).unwrap();
        assert_eq!(est.f1(off.0, off.1).value, 0.0);
        assert_eq!(est.f2(off, off2).value, 0.0);
        let gap = est.factorization_defect(off, off2);
        assert_eq!(gap.value, 0.0);
        // Probe pair closer than the contact distance is rejected by the
        // gap driver.
        assert!(factorization_gap(&ens, &[(near, near2)]).is_err());
    }

    #[test]
    fn pair_marginal_is_zero_on_both_sides_of_a_contact_probe() {
        // Pre- and post-collision probe pairs at contact, with velocities
        // far outside every blob's velocity support: both estimates vanish
        // identically, so the continuity-across-collision surrogate holds
        // as an exact zero-equals-zero identity for separated blobs.
        let config = two_particle_config();
        let kernel = Mollifier::new(0.01, 0.02).unwrap();
        let ens = draw_ensemble(&config, kernel, 50, 41).unwrap();
        let est = MarginalEstimate::from_ensemble(&ens).unwrap();
        let r1 = config.positions()[0];
        let r2 = wrap(r1.as_vec() + Vec3::new(0.1, 0.0, 0.0), 1.0).unwrap();
        let v1 = Vec3::new(4.0, 0.0, 0.0);
        let v2 = Vec3::new(-4.0, 0.0, 0.0);
        let pre = est.f2((r1, v1), (r2, v2));
        // Head-on exchange along the contact normal.
        let post = est.f2((r1, v2), (r2, v1));
        assert_eq!(pre.value, 0.0);
        assert_eq!(post.value, 0.0);
    }

    #[test]
    fn limit_errors_shrink_with_width_under_shared_draws() {
        let config = three_particle_chain();
        let reference = evolve(&config, 0.7).unwrap();
        assert_eq!(reference.stats.collisions, 2);
        let kernels = [
            Mollifier::new(0.02, 0.02).unwrap(),
            Mollifier::new(0.01, 0.01).unwrap(),
            Mollifier::new(0.005, 0.005).unwrap(),
        ];
        let points = limit_trajectory_error(&config, &kernels, 200, 0.7, 4242).unwrap();
        assert_eq!(points.len(), 3);
        for pair in points.windows(2) {
            assert!(
                pair[1].error < pair[0].error,
                "errors must shrink: {} -> {}",
                pair[0].error,
                pair[1].error
            );
        }
        // The finest width sits near its own Monte Carlo noise scale.
        assert!(points[2].error < 0.02, "finest error {}", points[2].error);
        // Width ordering is validated.
        let bad = [kernels[1], kernels[0]];
        assert!(limit_trajectory_error(&config, &bad, 10, 0.7, 1).is_err());
    }

    #[test]
    fn limit_probe_at_contact_instant_is_rejected() {
        let config = two_particle_config();
        // Head-on contact happens exactly at t = 0.15.
        let err = limit_trajectory_error(
            &config,
            &[Mollifier::new(0.01, 0.01).unwrap()],
            4,
            0.15,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ProbeAtContact { .. }), "{err:?}");
    }

    #[test]
    fn reverse_ensemble_is_an_involution() {
        let config = two_particle_config();
        let ens = draw_ensemble(&config, Mollifier::new(0.01, 0.01).unwrap(), 12, 8).unwrap();
        let back = reverse_ensemble(&reverse_ensemble(&ens));
        for (x, y) in ens.samples().iter().zip(back.samples()) {
            assert_eq!(state_deviation(x, y).unwrap(), 0.0);
        }
        assert_eq!(state_deviation(ens.reference(), back.reference()).unwrap(), 0.0);
        let rev = reverse_ensemble(&ens);
        for (x, y) in ens.samples().iter().zip(rev.samples()) {
            assert_eq!(x.velocities()[0].to_array(), (-y.velocities()[0]).to_array());
        }
    }
}
