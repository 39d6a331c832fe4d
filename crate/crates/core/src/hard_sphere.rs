//! Event-driven dynamics of N hard spheres on the torus.
//!
//! Between contacts every sphere moves in a straight line; at contact the
//! normal component of the relative velocity is exchanged and the tangential
//! part kept. The integrator is exact up to floating-point rounding: contact
//! times are roots of per-pair quadratics, not the product of time stepping.
//!
//! Scheduling uses a priority queue with per-particle collision counters so
//! stale predictions are discarded on pop rather than searched for. Positions
//! are advanced lazily: a particle's stored coordinate is only rewritten at
//! its own events, which keeps rounding from accumulating during free flight.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derive_rng;
use crate::torus::{image_offsets, min_image, min_image_disp, torus_distance, wrap, TorusPoint, Vec3};

/// Relative slack on the contact distance when validating configurations.
pub const OVERLAP_TOL: f64 = 1e-12;
/// Normal speed below this fraction of the relative speed makes a contact a
/// grazing no-op.
pub const GRAZING_TOL: f64 = 1e-12;
/// Relative inflation of the contact distance used to detect a third sphere
/// touching a colliding pair.
pub const TRIPLE_TOL: f64 = 1e-9;
/// Events closer in time than this are treated as simultaneous and processed
/// in lexicographic pair order.
pub const SIMULTANEITY_TOL: f64 = 1e-12;

/// Full phase point of an N-sphere system: positions on the torus, velocities,
/// the common sphere diameter, the box length, and the current time.
///
/// Construction validates the admissibility gates: at least one particle,
/// `0 < a < l/2`, and every pair separated by at least `a` up to
/// [`OVERLAP_TOL`] relative slack.
#[derive(Clone, Debug)]
pub struct ParticleConfig {
    a: f64,
    l: f64,
    positions: Vec<TorusPoint>,
    velocities: Vec<Vec3>,
    time: f64,
}

impl ParticleConfig {
    pub fn new(
        a: f64,
        l: f64,
        positions: Vec<TorusPoint>,
        velocities: Vec<Vec3>,
        time: f64,
    ) -> Result<ParticleConfig> {
        validate_geometry(a, l)?;
        if positions.is_empty() {
            return Err(Error::InvalidParam("need at least one particle".into()));
        }
        if positions.len() != velocities.len() {
            return Err(Error::InvalidParam(format!(
                "{} positions vs {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        if !time.is_finite() || !velocities.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParam("non-finite velocity or time".into()));
        }
        let config = ParticleConfig { a, l, positions, velocities, time };
        if let Some((i, j, sep)) = config.closest_pair() {
            if sep < a * (1.0 - OVERLAP_TOL) {
                return Err(Error::Overlap { i, j, sep, a });
            }
        }
        Ok(config)
    }

    pub fn num_particles(&self) -> usize {
        self.positions.len()
    }

    /// Sphere diameter (the contact distance).
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Torus side length.
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self) -> &[TorusPoint] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    /// Number density N / L^3.
    pub fn concentration(&self) -> f64 {
        self.positions.len() as f64 / self.l.powi(3)
    }

    /// Fraction of the box volume occupied by the spheres.
    pub fn packing_fraction(&self) -> f64 {
        self.positions.len() as f64 * (PI / 6.0) * self.a.powi(3) / self.l.powi(3)
    }

    /// Kinetic energy at unit particle mass.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.velocities.iter().map(|v| v.norm_sq()).sum::<f64>()
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.velocities.iter().fold(Vec3::ZERO, |acc, v| acc + *v)
    }

    /// Closest pair and its torus distance; `None` for a single particle.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let n = self.positions.len();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let sep = torus_distance(self.positions[i], self.positions[j], self.l);
                if best.map_or(true, |(_, _, s)| sep < s) {
                    best = Some((i, j, sep));
                }
            }
        }
        best
    }
}

fn validate_geometry(a: f64, l: f64) -> Result<()> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidParam(format!("box length {l} must be positive")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParam(format!("diameter {a} must be positive")));
    }
    if a >= 0.5 * l {
        return Err(Error::SphereTooLarge { a, l });
    }
    Ok(())
}

/// Negate every velocity, keeping positions and time.
pub fn reverse(config: &ParticleConfig) -> ParticleConfig {
    ParticleConfig {
        a: config.a,
        l: config.l,
        positions: config.positions.clone(),
        velocities: config.velocities.iter().map(|v| -*v).collect(),
        time: config.time,
    }
}

/// Largest per-particle deviation between two configurations: the max over
/// particles of the shortest-image position distance and the velocity
/// distance.  Zero exactly when the states coincide on the torus.
pub fn state_deviation(x: &ParticleConfig, y: &ParticleConfig) -> Result<f64> {
    if x.num_particles() != y.num_particles() || x.l != y.l {
        return Err(Error::InvalidParam(
            "configurations must share particle count and box length".into(),
        ));
    }
    let mut worst = 0.0f64;
    for k in 0..x.num_particles() {
        let dq = crate::torus::min_image(x.positions[k], y.positions[k], x.l).norm();
        let dv = (x.velocities[k] - y.velocities[k]).norm();
        worst = worst.max(dq).max(dv);
    }
    Ok(worst)
}

/// Momentum transferred to the first particle by a contact along `sigma`;
/// the second particle receives exactly `-p` of the same floating value.
#[inline]
pub fn impulse(v1: Vec3, v2: Vec3, sigma: Vec3) -> Vec3 {
    sigma * (v2 - v1).dot(sigma)
}

/// Elastic hard-sphere exchange: the component of the relative velocity along
/// the contact normal `sigma` (unit vector from the second sphere's center to
/// the first's) moves from one particle to the other.
///
/// Requires `|sigma| = 1` within 1e-12 and an approaching pair,
/// `(v2 - v1, sigma) >= 0`; equality (grazing) returns the inputs unchanged.
pub fn collide(v1: Vec3, v2: Vec3, sigma: Vec3) -> Result<(Vec3, Vec3)> {
    let norm = sigma.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NonUnitSigma(norm));
    }
    let b = (v2 - v1).dot(sigma);
    if b < 0.0 {
        return Err(Error::RecedingPair(b));
    }
    let p = impulse(v1, v2, sigma);
    Ok((v1 + p, v2 - p))
}

/// A scheduled pair contact: indices, absolute time, and the contact normal
/// pointing from particle `j`'s center to particle `i`'s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CollisionEvent {
    pub i: usize,
    pub j: usize,
    pub t_event: f64,
    pub sigma: Vec3,
}

/// Earliest contact of a pair within `(0, window]` for relative displacement
/// `d` and relative velocity `v` (both of particle i minus particle j).
///
/// The quadratic |d + v t|^2 = a^2 is solved in the root form that avoids
/// cancellation near grazing contacts. A pair already inside the contact
/// distance and genuinely closing collides immediately; that absorbs the
/// rounding-induced overlaps left by near-simultaneous event processing.
fn earliest_contact(d: Vec3, v: Vec3, a: f64, window: f64) -> Option<f64> {
    let quad = v.norm_sq();
    let b = d.dot(v);
    let c = d.norm_sq() - a * a;
    if c <= 0.0 {
        return (b < -GRAZING_TOL * a * quad.sqrt()).then_some(0.0);
    }
    if b >= 0.0 || quad == 0.0 {
        return None;
    }
    let disc = b * b - quad * c;
    if disc < 0.0 {
        return None;
    }
    let tau = c / (-b + disc.sqrt());
    (tau > 0.0 && tau <= window).then_some(tau)
}

/// Predict the earliest contact of particles `i` and `j` within `horizon` time
/// units from the configuration's current time, searching over the periodic
/// images the horizon can reach. Returns `None` when the pair does not meet.
pub fn predict_collision(
    config: &ParticleConfig,
    i: usize,
    j: usize,
    horizon: f64,
) -> Option<CollisionEvent> {
    assert!(i != j, "distinct particles required");
    if !(horizon > 0.0) || !horizon.is_finite() {
        return None;
    }
    let d = min_image(config.positions[i], config.positions[j], config.l);
    let v = config.velocities[i] - config.velocities[j];
    let reach = v.norm() * horizon;
    let offsets =
        image_offsets(config.a, config.l, reach).expect("geometry validated at construction");
    let mut best: Option<(f64, Vec3)> = None;
    for &k in &offsets {
        let dk = d + k;
        if let Some(tau) = earliest_contact(dk, v, config.a, horizon) {
            if best.map_or(true, |(bt, _)| tau < bt) {
                best = Some((tau, dk));
            }
        }
    }
    let (tau, dk) = best?;
    let s = dk + v * tau;
    let sigma = s * (1.0 / s.norm());
    Some(CollisionEvent { i, j, t_event: config.time + tau, sigma })
}

/// What a queue entry announces: a predicted contact or a request to re-run
/// prediction for a pair whose look-ahead window expired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Collision,
    Recheck,
}

/// Pending event plus the pair's collision counters at scheduling time.
#[derive(Clone, Copy, Debug)]
pub struct QueueEntry {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub kind: EventKind,
    pub ci: u64,
    pub cj: u64,
}

impl QueueEntry {
    fn key(&self) -> (f64, usize, usize, EventKind, u64, u64) {
        (self.t, self.i, self.j, self.kind, self.ci, self.cj)
    }
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ia, ja, ka, ca, cb) = self.key();
        let (tb, ib, jb, kb, cc, cd) = other.key();
        ta.total_cmp(&tb).then_with(|| (ia, ja, ka, ca, cb).cmp(&(ib, jb, kb, cc, cd)))
    }
}

/// Time-ordered queue of pending events with per-particle collision counters.
///
/// Pops are non-decreasing in time. An entry is current only while neither of
/// its particles has collided since it was scheduled; stale entries are
/// discarded on pop instead of being hunted down at invalidation time.
pub struct EventQueue {
    heap: BinaryHeap<Reverse<QueueEntry>>,
    counters: Vec<u64>,
}

impl EventQueue {
    pub fn new(n_particles: usize) -> EventQueue {
        EventQueue { heap: BinaryHeap::new(), counters: vec![0; n_particles] }
    }

    pub fn push(&mut self, entry: QueueEntry) {
        self.heap.push(Reverse(entry));
    }

    pub fn next_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(e)| e.t)
    }

    pub fn pop_next(&mut self) -> Option<QueueEntry> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn is_current(&self, entry: &QueueEntry) -> bool {
        self.counters[entry.i] == entry.ci && self.counters[entry.j] == entry.cj
    }

    /// Mark every pending entry that involves `particle` as stale.
    pub fn invalidate(&mut self, particle: usize) {
        self.counters[particle] += 1;
    }

    pub fn counter(&self, particle: usize) -> u64 {
        self.counters[particle]
    }
}

/// One processed contact, with velocities before and after. Grazing contacts
/// leave the velocities unchanged and carry the flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionRecord {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub sigma: Vec3,
    pub v1_pre: Vec3,
    pub v2_pre: Vec3,
    pub v1_post: Vec3,
    pub v2_post: Vec3,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub grazing: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvolutionStats {
    /// Contacts that exchanged momentum.
    pub collisions: u64,
    /// Contacts with vanishing normal speed, logged and skipped.
    pub grazing_contacts: u64,
    /// Expired look-ahead windows that triggered re-prediction.
    pub rechecks: u64,
    /// Smallest pair separation observed at any event time, if recorded.
    pub min_event_separation: Option<f64>,
}

/// Result of an evolution: the advanced configuration, the full event log in
/// time order, and run statistics.
#[derive(Clone, Debug)]
pub struct EvolutionOutcome {
    pub config: ParticleConfig,
    pub events: Vec<CollisionRecord>,
    pub stats: EvolutionStats,
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    /// Abort after this many contacts (grazing included).
    pub max_events: u64,
    /// Record the global minimum pair separation at every event time.
    pub record_min_separation: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { max_events: 10_000_000, record_min_separation: true }
    }
}

/// Advance the configuration by duration `t` with default options.
pub fn evolve(config: &ParticleConfig, t: f64) -> Result<EvolutionOutcome> {
    evolve_with(config, t, EvolveOptions::default())
}

/// Advance the configuration by duration `t`.
///
/// Near-simultaneous events (within [`SIMULTANEITY_TOL`]) are processed in
/// lexicographic pair order. A third sphere within `a * (1 + TRIPLE_TOL)` of a
/// colliding pair aborts the run: triple contacts are outside the model.
pub fn evolve_with(
    config: &ParticleConfig,
    t: f64,
    opts: EvolveOptions,
) -> Result<EvolutionOutcome> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam(format!("duration {t} must be finite and non-negative")));
    }
    let mut engine = Engine::new(config, t, opts)?;
    engine.run()?;
    engine.finish()
}

struct Engine {
    a: f64,
    l: f64,
    t_end: f64,
    /// Raw coordinates; unwrapped during the run, each valid at `tupd[i]`.
    pos: Vec<Vec3>,
    vel: Vec<Vec3>,
    tupd: Vec<f64>,
    queue: EventQueue,
    /// First periodic image shell; sufficient because per-pair look-ahead is
    /// capped so the relative displacement stays below L/2.
    shell: Vec<Vec3>,
    opts: EvolveOptions,
    events: Vec<CollisionRecord>,
    stats: EvolutionStats,
    batch: Vec<QueueEntry>,
}

impl Engine {
    fn new(config: &ParticleConfig, t: f64, opts: EvolveOptions) -> Result<Engine> {
        let n = config.positions.len();
        let t0 = config.time;
        let mut engine = Engine {
            a: config.a,
            l: config.l,
            t_end: t0 + t,
            pos: config.positions.iter().map(|p| p.as_vec()).collect(),
            vel: config.velocities.clone(),
            tupd: vec![t0; n],
            queue: EventQueue::new(n),
            shell: image_offsets(config.a, config.l, 0.5 * config.l)?,
            opts,
            events: Vec::new(),
            stats: EvolutionStats::default(),
            batch: Vec::new(),
        };
        for i in 0..n {
            for j in (i + 1)..n {
                engine.schedule(i, j, t0);
            }
        }
        Ok(engine)
    }

    #[inline]
    fn pos_at(&self, k: usize, t: f64) -> Vec3 {
        self.pos[k] + self.vel[k] * (t - self.tupd[k])
    }

    fn materialize(&mut self, k: usize, t: f64) {
        self.pos[k] = self.pos_at(k, t);
        self.tupd[k] = t;
    }

    /// Predict the pair's next contact from time `now` and queue the result.
    ///
    /// The look-ahead window is capped at L / (2 |v_rel|) so the first image
    /// shell covers every reachable contact; if the window expires before the
    /// run does, a recheck event keeps the pair under watch.
    fn schedule(&mut self, i: usize, j: usize, now: f64) {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let remaining = self.t_end - now;
        if remaining <= 0.0 {
            return;
        }
        let d = min_image_disp(self.pos_at(i, now) - self.pos_at(j, now), self.l);
        let v = self.vel[i] - self.vel[j];
        let speed = v.norm();
        let cap = if speed > 0.0 { 0.5 * self.l / speed } else { f64::INFINITY };
        let window = remaining.min(cap);
        let mut best: Option<f64> = None;
        for &k in &self.shell {
            if let Some(tau) = earliest_contact(d + k, v, self.a, window) {
                if best.map_or(true, |bt| tau < bt) {
                    best = Some(tau);
                }
            }
        }
        let (ci, cj) = (self.queue.counter(i), self.queue.counter(j));
        match best {
            Some(tau) => {
                self.queue.push(QueueEntry { t: now + tau, i, j, kind: EventKind::Collision, ci, cj });
            }
            None if cap < remaining => {
                self.queue.push(QueueEntry { t: now + cap, i, j, kind: EventKind::Recheck, ci, cj });
            }
            None => {}
        }
    }

    fn run(&mut self) -> Result<()> {
        loop {
            let first = loop {
                match self.queue.pop_next() {
                    Some(e) if self.queue.is_current(&e) => break e,
                    Some(_) => continue,
                    None => return Ok(()),
                }
            };
            self.batch.clear();
            self.batch.push(first);
            while let Some(t_next) = self.queue.next_time() {
                if t_next <= first.t + SIMULTANEITY_TOL {
                    let e = self.queue.pop_next().expect("peeked entry");
                    if self.queue.is_current(&e) {
                        self.batch.push(e);
                    }
                } else {
                    break;
                }
            }
            if self.batch.len() > 1 {
                self.batch.sort_by_key(|e| (e.i, e.j, e.kind));
            }
            let batch = std::mem::take(&mut self.batch);
            for e in &batch {
                if !self.queue.is_current(e) {
                    continue;
                }
                match e.kind {
                    EventKind::Recheck => {
                        self.stats.rechecks += 1;
                        self.schedule(e.i, e.j, e.t);
                    }
                    EventKind::Collision => self.handle_collision(e)?,
                }
            }
            self.batch = batch;
        }
    }

    fn handle_collision(&mut self, e: &QueueEntry) -> Result<()> {
        if self.stats.collisions + self.stats.grazing_contacts >= self.opts.max_events {
            return Err(Error::EventBudget(self.opts.max_events));
        }
        let (i, j, t) = (e.i, e.j, e.t);
        self.materialize(i, t);
        self.materialize(j, t);
        // Contact separation is below L/2, so the minimum image is the true one.
        let s = min_image_disp(self.pos[i] - self.pos[j], self.l);
        let dist = s.norm();
        let sigma = s * (1.0 / dist);

        if self.opts.record_min_separation {
            let mut min_sep = dist;
            let n = self.pos.len();
            for p in 0..n {
                for q in (p + 1)..n {
                    if (p, q) == (i, j) {
                        continue;
                    }
                    let sep =
                        min_image_disp(self.pos_at(p, t) - self.pos_at(q, t), self.l).norm();
                    min_sep = min_sep.min(sep);
                }
            }
            self.stats.min_event_separation = Some(match self.stats.min_event_separation {
                Some(m) => m.min(min_sep),
                None => min_sep,
            });
        }

        let reach = self.a * (1.0 + TRIPLE_TOL);
        for k in 0..self.pos.len() {
            if k == i || k == j {
                continue;
            }
            let pk = self.pos_at(k, t);
            let near_i = min_image_disp(pk - self.pos[i], self.l).norm() < reach;
            let near_j = min_image_disp(pk - self.pos[j], self.l).norm() < reach;
            if near_i || near_j {
                return Err(Error::TripleContact { t, i, j, k });
            }
        }

        let (v1, v2) = (self.vel[i], self.vel[j]);
        let v21 = v2 - v1;
        let normal_speed = v21.dot(sigma);
        if normal_speed <= GRAZING_TOL * v21.norm() {
            self.stats.grazing_contacts += 1;
            self.events.push(CollisionRecord {
                t,
                i,
                j,
                sigma,
                v1_pre: v1,
                v2_pre: v2,
                v1_post: v1,
                v2_post: v2,
                grazing: true,
            });
            // Velocities unchanged: existing predictions stay valid, but this
            // pair's own watch expired with the popped event.
            self.schedule(i, j, t);
            return Ok(());
        }

        let p = impulse(v1, v2, sigma);
        self.vel[i] = v1 + p;
        self.vel[j] = v2 - p;
        self.stats.collisions += 1;
        self.events.push(CollisionRecord {
            t,
            i,
            j,
            sigma,
            v1_pre: v1,
            v2_pre: v2,
            v1_post: self.vel[i],
            v2_post: self.vel[j],
            grazing: false,
        });
        self.queue.invalidate(i);
        self.queue.invalidate(j);
        for k in 0..self.pos.len() {
            if k != i {
                self.schedule(i, k, t);
            }
            if k != j && k != i {
                self.schedule(j, k, t);
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<EvolutionOutcome> {
        let t_end = self.t_end;
        for k in 0..self.pos.len() {
            self.materialize(k, t_end);
        }
        let positions =
            self.pos.iter().map(|p| wrap(*p, self.l)).collect::<Result<Vec<TorusPoint>>>()?;
        let config = ParticleConfig {
            a: self.a,
            l: self.l,
            positions,
            velocities: self.vel,
            time: t_end,
        };
        Ok(EvolutionOutcome { config, events: self.events, stats: self.stats })
    }
}

/// Draw a non-overlapping configuration: positions uniform on the torus with
/// rejection of overlaps, velocities Gaussian with the given per-axis scale.
/// Deterministic in the seed. Packing fractions above 0.3 are rejected.
pub fn sample_admissible_config(
    n: usize,
    a: f64,
    l: f64,
    velocity_scale: f64,
    seed: u64,
) -> Result<ParticleConfig> {
    validate_geometry(a, l)?;
    if n == 0 {
        return Err(Error::InvalidParam("need at least one particle".into()));
    }
    if !(velocity_scale >= 0.0) || !velocity_scale.is_finite() {
        return Err(Error::InvalidParam(format!(
            "velocity scale {velocity_scale} must be finite and non-negative"
        )));
    }
    let packing = n as f64 * (PI / 6.0) * a.powi(3) / l.powi(3);
    if packing > 0.3 {
        return Err(Error::InvalidParam(format!(
            "packing fraction {packing:.3} exceeds the 0.3 sampling bound"
        )));
    }
    const MAX_ATTEMPTS: usize = 100_000;
    let mut rng = derive_rng(seed, "sample-admissible-config", 0);
    let mut positions: Vec<TorusPoint> = Vec::with_capacity(n);
    for particle in 0..n {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let candidate = wrap(
                Vec3::new(
                    rng.random::<f64>() * l,
                    rng.random::<f64>() * l,
                    rng.random::<f64>() * l,
                ),
                l,
            )?;
            if positions.iter().all(|q| torus_distance(candidate, *q, l) > a) {
                positions.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::PackingTooDense { particle, attempts: MAX_ATTEMPTS });
        }
    }
    let velocities = (0..n)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            let z: f64 = rng.sample(StandardNormal);
            Vec3::new(x, y, z) * velocity_scale
        })
        .collect();
    ParticleConfig::new(a, l, positions, velocities, 0.0)
}
