//! Relaxation of a space-independent velocity distribution under the
//! hard-sphere collision integral, discretized on a cell-centered cubic
//! velocity grid.
//!
//! Evaluating the collision integral node-by-node against the quadrature
//! in [`crate::collision_operator`] costs `O(M^6)` per update of an `M^3`
//! grid, which is far outside the time budget of a multi-hundred-step run.
//! [`HomogeneousSolver`] instead computes the identical truncated integral
//! for every node at once in `O(P M^3 log M)` through a separated Fourier
//! representation of the gain term: for each contact direction the gain
//! splits into a product of two convolutions, evaluated with FFTs, while
//! the loss term is a single convolution with a closed-form multiplier.
//! Consistency with the nodewise quadrature operator is asserted by tests
//! on coarse grids.
//!
//! The integrator is classical fourth-order Runge-Kutta with three
//! safeguards: every stage derivative is projected onto the subspace that
//! exactly conserves discrete mass, momentum, and kinetic energy; negative
//! undershoots are clipped to zero with the clipped mass logged and bounded;
//! and the step size is checked against a collision-frequency stability
//! bound estimated from the current field.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::collision_operator::Coupling;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, SigmaRule};
use crate::torus::Vec3;

type Cpx = Complex<f64>;

/// Fraction of the grid half-width used as the relative-speed truncation
/// radius. With support radius `S = 2 v_max / (3 + sqrt 2)` the standard
/// anti-aliasing argument allows truncation at `R = 2 S`.
const TRUNCATION_FRACTION: f64 = 2.0 * 2.0 / (3.0 + std::f64::consts::SQRT_2);

/// Relative clipped-mass budget per step before the step errors out.
pub const CLIP_BUDGET: f64 = 1e-6;

/// Safety factor in the stability bound `dt_max = 0.1 / mean collision rate`.
const STABILITY_FACTOR: f64 = 0.1;

/// Non-negative density values on a cell-centered `m^3` velocity grid
/// spanning `[-v_max, v_max]^3`, together with the simulation clock.
#[derive(Clone, Debug)]
pub struct VelocityField {
    m: usize,
    v_max: f64,
    values: Vec<f64>,
    time: f64,
}

/// Discrete moments of a [`VelocityField`]: mass, momentum, and kinetic
/// energy (with the 1/2 factor), all per unit spatial volume.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
}

impl VelocityField {
    /// Wraps explicit node values; rejects negative or non-finite entries.
    pub fn new(m: usize, v_max: f64, values: Vec<f64>) -> Result<VelocityField> {
        if m < 2 {
            return Err(Error::InvalidParam(format!("grid needs m >= 2, got {m}")));
        }
        if !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::InvalidParam(format!(
                "grid half-width must be positive and finite, got {v_max}"
            )));
        }
        if values.len() != m * m * m {
            return Err(Error::InvalidParam(format!(
                "expected {} node values, got {}",
                m * m * m,
                values.len()
            )));
        }
        for (t, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "node value {v} at flat index {t} is not a density"
                )));
            }
        }
        Ok(VelocityField { m, v_max, values, time: 0.0 })
    }

    /// Single Maxwellian with the given density, mean velocity, and
    /// per-axis temperature, sampled at the grid nodes.
    pub fn maxwellian(
        m: usize,
        v_max: f64,
        density: f64,
        mean: Vec3,
        theta: f64,
    ) -> Result<VelocityField> {
        VelocityField::mixture(m, v_max, &[(density, mean, theta)])
    }

    /// Equal-weight pair of Maxwellians drifting at `+drift` and `-drift`.
    pub fn bimodal(
        m: usize,
        v_max: f64,
        density: f64,
        drift: Vec3,
        theta: f64,
    ) -> Result<VelocityField> {
        VelocityField::mixture(
            m,
            v_max,
            &[(0.5 * density, drift, theta), (0.5 * density, -drift, theta)],
        )
    }

    /// Sum of Maxwellian components given as (density, mean, theta).
    pub fn mixture(
        m: usize,
        v_max: f64,
        components: &[(f64, Vec3, f64)],
    ) -> Result<VelocityField> {
        for &(density, _, theta) in components {
            if !(density >= 0.0) || !density.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "component density must be non-negative, got {density}"
                )));
            }
            if !(theta > 0.0) || !theta.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "component temperature must be positive, got {theta}"
                )));
            }
        }
        let mut values = vec![0.0f64; m * m * m];
        let scratch = VelocityField { m, v_max, values: Vec::new(), time: 0.0 };
        if m >= 2 && v_max > 0.0 && v_max.is_finite() {
            let mut t = 0usize;
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let v = scratch.node(i, j, k);
                        let mut total = 0.0;
                        for &(density, mean, theta) in components {
                            let d = v - mean;
                            let s = 2.0 * PI * theta;
                            total += density * (-d.norm_sq() / (2.0 * theta)).exp()
                                / (s * s.sqrt());
                        }
                        values[t] = total;
                        t += 1;
                    }
                }
            }
        }
        VelocityField::new(m, v_max, values)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Grid spacing along each axis.
    pub fn delta(&self) -> f64 {
        2.0 * self.v_max / self.m as f64
    }

    pub fn cell_volume(&self) -> f64 {
        let d = self.delta();
        d * d * d
    }

    /// Node coordinate along one axis. The half-integer form guarantees
    /// `axis_coord(m-1-i) == -axis_coord(i)` exactly, so reversal is an
    /// exact permutation.
    pub fn axis_coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - self.m as f64 / 2.0) * self.delta()
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(self.axis_coord(i), self.axis_coord(j), self.axis_coord(k))
    }

    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.m + j) * self.m + k
    }

    pub fn moments(&self) -> Moments {
        let dv = self.cell_volume();
        let mut mass = 0.0;
        let mut momentum = Vec3::ZERO;
        let mut energy = 0.0;
        let mut t = 0usize;
        for i in 0..self.m {
            let x = self.axis_coord(i);
            for j in 0..self.m {
                let y = self.axis_coord(j);
                for k in 0..self.m {
                    let z = self.axis_coord(k);
                    let f = self.values[t];
                    mass += f;
                    momentum += Vec3::new(f * x, f * y, f * z);
                    energy += 0.5 * f * (x * x + y * y + z * z);
                    t += 1;
                }
            }
        }
        Moments { mass: mass * dv, momentum: momentum * dv, energy: energy * dv }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// L2 distance between two fields on the same grid.
    pub fn l2_distance(&self, other: &VelocityField) -> Result<f64> {
        if self.m != other.m || self.v_max != other.v_max {
            return Err(Error::InvalidParam(
                "fields live on different grids".into(),
            ));
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Ok((sum * self.cell_volume()).sqrt())
    }

    /// The Maxwellian sharing this field's discrete mass, momentum, and
    /// energy — the expected long-time state of the relaxation.
    pub fn equilibrium_with_same_moments(&self) -> Result<VelocityField> {
        let mo = self.moments();
        if !(mo.mass > 0.0) {
            return Err(Error::InvalidParam(
                "equilibrium needs positive mass".into(),
            ));
        }
        let u = mo.momentum * (1.0 / mo.mass);
        let theta = (2.0 * mo.energy / mo.mass - u.norm_sq()) / 3.0;
        if !(theta > 0.0) {
            return Err(Error::InvalidParam(format!(
                "equilibrium needs positive temperature, got {theta}"
            )));
        }
        let mut eq = VelocityField::maxwellian(self.m, self.v_max, mo.mass, u, theta)?;
        eq.time = self.time;
        Ok(eq)
    }
}

/// Entropy functional `sum f ln f * cell volume` over nodes with `f > 0`.
pub fn h_functional(field: &VelocityField) -> f64 {
    let mut total = 0.0;
    for &f in &field.values {
        if f > 0.0 {
            total += f * f.ln();
        }
    }
    total * field.cell_volume()
}

/// Velocity reversal `f(v) -> f(-v)`, an exact permutation of the
/// cell-centered grid. The clock is left untouched.
pub fn reverse_field(field: &VelocityField) -> VelocityField {
    let m = field.m;
    let mut values = vec![0.0f64; m * m * m];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                values[field.flat_index(i, j, k)] =
                    field.values[field.flat_index(m - 1 - i, m - 1 - j, m - 1 - k)];
            }
        }
    }
    VelocityField { m, v_max: field.v_max, values, time: field.time }
}

/// Outcome bookkeeping for one Runge-Kutta step.
#[derive(Clone, Copy, Debug)]
pub struct StepStats {
    /// Mass removed by clipping negative undershoots of the final update,
    /// in mass units. This is the logged, budgeted quantity.
    pub clipped_mass: f64,
    /// Mass floored away in intermediate stage inputs (diagnostic only;
    /// stage states are internal to the integrator).
    pub stage_clipped_mass: f64,
    /// Stability limit estimated from the pre-step field.
    pub dt_max: f64,
    /// Mass-weighted mean collision frequency of the pre-step field.
    pub mean_loss_rate: f64,
}

struct GainDirection {
    weight: f64,
    /// Combined multiplier `(phi + i psi) * inverse phase` so that one
    /// inverse FFT returns the two gain convolutions as real and imaginary
    /// parts.
    zeta: Vec<Cpx>,
}

/// Precomputed spectral machinery for one grid geometry: FFT plans, phase
/// ramps for the cell-centered nodes, per-direction gain multipliers, the
/// loss multiplier, and the conservation projector.
pub struct HomogeneousSolver {
    m: usize,
    v_max: f64,
    r_trunc: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    phase_fwd: Vec<Cpx>,
    loss_zeta: Vec<Cpx>,
    dirs: Vec<GainDirection>,
    basis: [Vec<f64>; 5],
    chol: [[f64; 5]; 5],
}

impl HomogeneousSolver {
    /// Solver with the default contact-direction resolution (8 x 16).
    pub fn new(m: usize, v_max: f64) -> Result<HomogeneousSolver> {
        HomogeneousSolver::with_options(m, v_max, 8, 16)
    }

    /// Solver with an explicit contact-direction product rule. The azimuth
    /// count must be even so every direction has an exact opposite.
    pub fn with_options(
        m: usize,
        v_max: f64,
        n_cos: usize,
        n_phi: usize,
    ) -> Result<HomogeneousSolver> {
        if m < 4 {
            return Err(Error::InvalidParam(format!("solver needs m >= 4, got {m}")));
        }
        if !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::InvalidParam(format!(
                "grid half-width must be positive and finite, got {v_max}"
            )));
        }
        if n_cos == 0 || n_phi == 0 || n_phi % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "direction rule needs n_cos >= 1 and even n_phi >= 2, got {n_cos} x {n_phi}"
            )));
        }
        let big_t = v_max;
        let r_trunc = TRUNCATION_FRACTION * v_max;
        let delta = 2.0 * big_t / m as f64;
        let n3 = m * m * m;

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);

        // Mode wavenumbers xi = pi * l / T in FFT storage order, with the
        // unpaired Nyquist plane of even grids masked out so every retained
        // mode has an exact conjugate partner (keeping node-space results
        // exactly real-valued in pairs).
        let mut xi = vec![0.0f64; m];
        let mut nyquist = vec![false; m];
        for (t, x) in xi.iter_mut().enumerate() {
            let l = if 2 * t < m { t as i64 } else { t as i64 - m as i64 };
            *x = PI * l as f64 / big_t;
            nyquist[t] = m % 2 == 0 && 2 * t == m;
        }
        let offset = big_t - delta / 2.0;
        let inv_m = 1.0 / m as f64;
        let phase_axis_fwd: Vec<Cpx> =
            xi.iter().map(|&x| Cpx::from_polar(inv_m, x * offset)).collect();
        let phase_axis_inv: Vec<Cpx> =
            xi.iter().map(|&x| Cpx::from_polar(1.0, -x * offset)).collect();

        let mut phase_fwd = vec![Cpx::ZERO; n3];
        let mut phase_inv = vec![Cpx::ZERO; n3];
        let mut masked = vec![false; n3];
        let mut t = 0usize;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    phase_fwd[t] = phase_axis_fwd[i] * phase_axis_fwd[j] * phase_axis_fwd[k];
                    phase_inv[t] = phase_axis_inv[i] * phase_axis_inv[j] * phase_axis_inv[k];
                    masked[t] = nyquist[i] || nyquist[j] || nyquist[k];
                    t += 1;
                }
            }
        }

        // Loss multiplier: Fourier transform of pi |u| over the truncation
        // ball, in closed form.
        let mut loss_zeta = vec![Cpx::ZERO; n3];
        let mut t = 0usize;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    if !masked[t] {
                        let knorm =
                            (xi[i] * xi[i] + xi[j] * xi[j] + xi[k] * xi[k]).sqrt();
                        loss_zeta[t] = phase_inv[t] * loss_multiplier(knorm, r_trunc);
                    }
                    t += 1;
                }
            }
        }

        // Disk-integral table psi(q) = 2 pi int_0^R r J0(q r) dr sampled
        // densely and interpolated cubically when building the per-direction
        // tables below.
        let q_max = 3.0f64.sqrt() * xi.iter().fold(0.0f64, |a, &x| a.max(x.abs())) * 1.0001;
        let disk = DiskTable::build(r_trunc, q_max.max(1e-12));

        let rule = SigmaRule::product(n_cos, n_phi);
        let mut dirs = Vec::new();
        for si in 0..rule.len() {
            if rule.antipodes[si] <= si {
                continue;
            }
            let sigma = rule.nodes[si];
            let mut zeta = vec![Cpx::ZERO; n3];
            let mut t = 0usize;
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        if !masked[t] {
                            let caxis = Vec3::new(xi[i], xi[j], xi[k]);
                            let along = caxis.dot(sigma);
                            let perp = (caxis - sigma * along).norm();
                            let phi_v = line_multiplier(along, r_trunc);
                            let psi_v = disk.eval(perp);
                            zeta[t] = phase_inv[t] * Cpx::new(phi_v, psi_v);
                        }
                        t += 1;
                    }
                }
            }
            dirs.push(GainDirection { weight: rule.weights[si], zeta });
        }
        if dirs.is_empty() {
            return Err(Error::InvalidParam(
                "direction rule yielded no antipodal pairs".into(),
            ));
        }

        // Conservation projector basis {1, vx, vy, vz, |v|^2} and the
        // Cholesky factor of its Gram matrix in the cell-weighted inner
        // product.
        let probe = VelocityField { m, v_max, values: Vec::new(), time: 0.0 };
        let mut basis: [Vec<f64>; 5] = [
            vec![1.0; n3],
            vec![0.0; n3],
            vec![0.0; n3],
            vec![0.0; n3],
            vec![0.0; n3],
        ];
        let mut t = 0usize;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let v = probe.node(i, j, k);
                    basis[1][t] = v.x;
                    basis[2][t] = v.y;
                    basis[3][t] = v.z;
                    basis[4][t] = v.norm_sq();
                    t += 1;
                }
            }
        }
        let dv = delta * delta * delta;
        let mut gram = [[0.0f64; 5]; 5];
        for a in 0..5 {
            for b in a..5 {
                let s: f64 =
                    basis[a].iter().zip(&basis[b]).map(|(&x, &y)| x * y).sum();
                gram[a][b] = s * dv;
                gram[b][a] = s * dv;
            }
        }
        let chol = cholesky5(&gram).ok_or_else(|| {
            Error::InvalidParam("conservation Gram matrix is singular".into())
        })?;

        Ok(HomogeneousSolver {
            m,
            v_max,
            r_trunc,
            fwd,
            inv,
            phase_fwd,
            loss_zeta,
            dirs,
            basis,
            chol,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Relative-speed truncation radius of the integral.
    pub fn truncation_radius(&self) -> f64 {
        self.r_trunc
    }

    fn cell_volume(&self) -> f64 {
        let d = 2.0 * self.v_max / self.m as f64;
        d * d * d
    }

    fn check_field(&self, field: &VelocityField) -> Result<()> {
        if field.m != self.m
            || (field.v_max - self.v_max).abs() > 1e-12 * self.v_max
        {
            return Err(Error::InvalidParam(format!(
                "field grid {}^3 half-width {} does not match solver grid {}^3 half-width {}",
                field.m, field.v_max, self.m, self.v_max
            )));
        }
        Ok(())
    }

    fn check_params(a: f64, coupling: Coupling) -> Result<()> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParam(format!(
                "sphere diameter must be positive and finite, got {a}"
            )));
        }
        coupling.validate()
    }

    /// In-place 3-D FFT over the `m^3` cube, one axis at a time.
    fn fft3(&self, buf: &mut [Cpx], inverse: bool) {
        let m = self.m;
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![Cpx::ZERO; plan.get_inplace_scratch_len()];
        for line in buf.chunks_exact_mut(m) {
            plan.process_with_scratch(line, &mut scratch);
        }
        let mut line = vec![Cpx::ZERO; m];
        for i in 0..m {
            for k in 0..m {
                let base = i * m * m + k;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = buf[base + j * m];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (j, slot) in line.iter().enumerate() {
                    buf[base + j * m] = *slot;
                }
            }
        }
        for j in 0..m {
            for k in 0..m {
                let base = j * m + k;
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = buf[base + i * m * m];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (i, slot) in line.iter().enumerate() {
                    buf[base + i * m * m] = *slot;
                }
            }
        }
    }

    /// Collision term at every node plus the mass-weighted mean collision
    /// frequency of the input values.
    fn collision_term(
        &self,
        values: &[f64],
        a: f64,
        coupling: Coupling,
    ) -> Result<(Vec<f64>, f64)> {
        let n3 = values.len();
        let cb = coupling.prefactor() * a * a;
        let mut chat: Vec<Cpx> =
            values.iter().map(|&v| Cpx::new(v, 0.0)).collect();
        self.fft3(&mut chat, false);
        for (c, p) in chat.iter_mut().zip(&self.phase_fwd) {
            *c *= *p;
        }

        let mut lbuf: Vec<Cpx> =
            chat.iter().zip(&self.loss_zeta).map(|(&c, &z)| c * z).collect();
        self.fft3(&mut lbuf, true);

        let mut gain = vec![0.0f64; n3];
        let mut buf = vec![Cpx::ZERO; n3];
        for dir in &self.dirs {
            for ((b, &c), &z) in buf.iter_mut().zip(&chat).zip(&dir.zeta) {
                *b = c * z;
            }
            self.fft3(&mut buf, true);
            let w = dir.weight;
            for (g, b) in gain.iter_mut().zip(&buf) {
                *g += w * b.re * b.im;
            }
        }

        let mut st = vec![0.0f64; n3];
        let mut weighted_loss = 0.0;
        let mut mass_sum = 0.0;
        for t in 0..n3 {
            let lv = lbuf[t].re;
            let val = cb * (gain[t] - values[t] * lv);
            if !val.is_finite() {
                return Err(Error::NonFinite(format!(
                    "collision term at flat index {t}"
                )));
            }
            st[t] = val;
            weighted_loss += values[t] * lv;
            mass_sum += values[t];
        }
        let nu = if mass_sum > 0.0 {
            cb * weighted_loss / mass_sum
        } else {
            0.0
        };
        Ok((st, nu))
    }

    /// The collision term of a field, unprojected — the raw spectral
    /// evaluation used by the integrator stages.
    pub fn collision_rhs(
        &self,
        field: &VelocityField,
        a: f64,
        coupling: Coupling,
    ) -> Result<Vec<f64>> {
        self.check_field(field)?;
        HomogeneousSolver::check_params(a, coupling)?;
        Ok(self.collision_term(&field.values, a, coupling)?.0)
    }

    /// Stability limit for the current field: `0.1 / mean collision rate`.
    pub fn stability_bound(
        &self,
        field: &VelocityField,
        a: f64,
        coupling: Coupling,
    ) -> Result<f64> {
        self.check_field(field)?;
        HomogeneousSolver::check_params(a, coupling)?;
        let (_, nu) = self.collision_term(&field.values, a, coupling)?;
        Ok(if nu > 0.0 { STABILITY_FACTOR / nu } else { f64::INFINITY })
    }

    /// Removes the discrete mass/momentum/energy content of a derivative so
    /// the Runge-Kutta update conserves all five invariants exactly.
    fn project(&self, k: &mut [f64]) {
        let dv = self.cell_volume();
        let mut mo = [0.0f64; 5];
        for (slot, basis) in mo.iter_mut().zip(&self.basis) {
            *slot = k.iter().zip(basis).map(|(&x, &y)| x * y).sum::<f64>() * dv;
        }
        let c = chol_solve5(&self.chol, mo);
        for (ca, basis) in c.iter().zip(&self.basis) {
            if *ca != 0.0 {
                for (kv, bv) in k.iter_mut().zip(basis) {
                    *kv -= ca * bv;
                }
            }
        }
    }

    /// One fourth-order Runge-Kutta step of size `dt`.
    ///
    /// Negative undershoots of the explicit update are clipped to zero; the
    /// clipped mass is logged in the returned stats and must stay within
    /// `1e-6` of the field mass, else the step fails with a resolution
    /// error.  (Stage inputs are floored the same way, but that is internal
    /// regularization reported separately and not counted against the
    /// budget.)  After clipping, the net increment is projected so the
    /// discrete mass, momentum, and energy of the field are carried across
    /// the step exactly rather than drifting by the clipped amount.  A step
    /// larger than the stability bound is rejected.
    pub fn step(
        &self,
        field: &VelocityField,
        dt: f64,
        a: f64,
        coupling: Coupling,
    ) -> Result<(VelocityField, StepStats)> {
        self.check_field(field)?;
        HomogeneousSolver::check_params(a, coupling)?;
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParam(format!(
                "step size must be non-negative and finite, got {dt}"
            )));
        }
        let mass0 = field.mass();
        let mut stage_clipped = 0.0f64;
        let clip_stage = |base: &[f64], coef: f64, k: &[f64], clipped: &mut f64| {
            base.iter()
                .zip(k)
                .map(|(&f, &kv)| {
                    let v = f + coef * kv;
                    if v < 0.0 {
                        *clipped -= v;
                        0.0
                    } else {
                        v
                    }
                })
                .collect::<Vec<f64>>()
        };

        let (mut k1, nu) = self.collision_term(&field.values, a, coupling)?;
        let bound = if nu > 0.0 { STABILITY_FACTOR / nu } else { f64::INFINITY };
        if dt > bound {
            return Err(Error::StabilityBound { dt, bound });
        }
        self.project(&mut k1);
        let s2 = clip_stage(&field.values, 0.5 * dt, &k1, &mut stage_clipped);
        let (mut k2, _) = self.collision_term(&s2, a, coupling)?;
        self.project(&mut k2);
        let s3 = clip_stage(&field.values, 0.5 * dt, &k2, &mut stage_clipped);
        let (mut k3, _) = self.collision_term(&s3, a, coupling)?;
        self.project(&mut k3);
        let s4 = clip_stage(&field.values, dt, &k3, &mut stage_clipped);
        let (mut k4, _) = self.collision_term(&s4, a, coupling)?;
        self.project(&mut k4);

        let sixth = dt / 6.0;
        let mut clipped = 0.0f64;
        let mut values = Vec::with_capacity(field.values.len());
        for t in 0..field.values.len() {
            let v = field.values[t]
                + sixth * (k1[t] + 2.0 * k2[t] + 2.0 * k3[t] + k4[t]);
            if v < 0.0 {
                clipped -= v;
                values.push(0.0);
            } else {
                values.push(v);
            }
        }
        let clipped_mass = clipped * self.cell_volume();
        let stage_clipped_mass = stage_clipped * self.cell_volume();
        if mass0 > 0.0 && clipped_mass > CLIP_BUDGET * mass0 {
            return Err(Error::ResolutionInsufficient(clipped_mass / mass0));
        }
        // Clipping adds a small amount of mass (and disproportionate energy,
        // since undershoots live in the far tails).  Restore the discrete
        // invariants with a density-weighted correction f <- f.(1 - sum d_i
        // u_i) over the invariant basis u: cells where f vanishes are left
        // untouched, so the correction cannot seed new undershoots except at
        // vanishing magnitude, which is floored into the logged clip mass.
        let dv = self.cell_volume();
        let mut err = [0.0f64; 5];
        for (slot, basis) in err.iter_mut().zip(&self.basis) {
            let before: f64 = field.values.iter().zip(basis).map(|(&x, &u)| x * u).sum();
            let after: f64 = values.iter().zip(basis).map(|(&x, &u)| x * u).sum();
            *slot = (after - before) * dv;
        }
        let mut gw = [[0.0f64; 5]; 5];
        for i in 0..5 {
            for j in 0..=i {
                let s: f64 = values
                    .iter()
                    .zip(&self.basis[i])
                    .zip(&self.basis[j])
                    .map(|((&x, &ui), &uj)| x * ui * uj)
                    .sum();
                gw[i][j] = s * dv;
                gw[j][i] = gw[i][j];
            }
        }
        if let Some(l) = cholesky5(&gw) {
            let d = chol_solve5(&l, err);
            for t in 0..values.len() {
                let mut poly = 0.0;
                for (di, basis) in d.iter().zip(&self.basis) {
                    poly += di * basis[t];
                }
                let v = values[t] * (1.0 - poly);
                if v < 0.0 {
                    clipped -= v;
                    values[t] = 0.0;
                } else {
                    values[t] = v;
                }
            }
        }
        let clipped_mass = clipped * self.cell_volume();
        let next = VelocityField {
            m: field.m,
            v_max: field.v_max,
            values,
            time: field.time + dt,
        };
        Ok((
            next,
            StepStats { clipped_mass, stage_clipped_mass, dt_max: bound, mean_loss_rate: nu },
        ))
    }
}

/// `int_{-R}^{R} |b| e^{i b s} db`, the line factor of the gain term.
fn line_multiplier(s: f64, r: f64) -> f64 {
    let sr = (s * r).abs();
    if sr < 1e-3 {
        r * r * (1.0 - sr * sr / 4.0 + sr.powi(4) / 72.0)
    } else {
        2.0 * r * r * (sr.sin() / sr + (sr.cos() - 1.0) / (sr * sr))
    }
}

/// `pi * int_{|u| <= R} |u| e^{i k.u} du`, the loss-side multiplier.
fn loss_multiplier(k: f64, r: f64) -> f64 {
    let kr = k * r;
    let r4 = r * r * r * r;
    if kr < 1e-3 {
        4.0 * PI * PI * r4 * (0.25 - kr * kr / 36.0 + kr.powi(4) / 960.0)
    } else {
        let kr2 = kr * kr;
        4.0 * PI
            * PI
            * r4
            * (-kr.cos() / kr2 + 2.0 * kr.sin() / (kr2 * kr)
                + 2.0 * (kr.cos() - 1.0) / (kr2 * kr2))
    }
}

/// Dense table of `psi(q) = 2 pi int_0^R r J0(q r) dr` with cubic
/// interpolation; built once per solver. The Bessel integral is reduced to
/// `4 int_0^{pi/2} G(q sin tau) d tau` with `G` in closed form.
struct DiskTable {
    step: f64,
    values: Vec<f64>,
}

impl DiskTable {
    fn build(r: f64, q_max: f64) -> DiskTable {
        const TABLE: usize = 8193;
        let (tau_nodes, tau_weights) = gauss_legendre(96);
        let step = q_max / (TABLE - 1) as f64;
        let mut values = Vec::with_capacity(TABLE);
        for idx in 0..TABLE {
            let q = idx as f64 * step;
            let mut total = 0.0;
            for (x, w) in tau_nodes.iter().zip(&tau_weights) {
                let tau = (x + 1.0) * PI / 4.0;
                total += w * radial_factor(q * tau.sin(), r);
            }
            values.push(4.0 * total * PI / 4.0);
        }
        DiskTable { step, values }
    }

    fn eval(&self, q: f64) -> f64 {
        let x = q.abs() / self.step;
        let n = self.values.len();
        let i = (x as usize).min(n - 2);
        let t = x - i as f64;
        let p0 = self.values[i.saturating_sub(1)];
        let p1 = self.values[i];
        let p2 = self.values[i + 1];
        let p3 = self.values[(i + 2).min(n - 1)];
        // Catmull-Rom cubic through the four surrounding samples.
        let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
        let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
        let c = -0.5 * p0 + 0.5 * p2;
        ((a * t + b) * t + c) * t + p1
    }
}

/// `int_0^R r cos(alpha r) dr` in closed form with a series fallback.
fn radial_factor(alpha: f64, r: f64) -> f64 {
    let ar = (alpha * r).abs();
    if ar < 1e-3 {
        r * r * (0.5 - ar * ar / 8.0 + ar.powi(4) / 144.0)
    } else {
        (ar.cos() - 1.0 + ar * ar.sin()) / (alpha * alpha)
    }
}

/// Cholesky factor (lower triangle) of a 5x5 SPD matrix.
fn cholesky5(g: &[[f64; 5]; 5]) -> Option<[[f64; 5]; 5]> {
    let mut l = [[0.0f64; 5]; 5];
    for i in 0..5 {
        for j in 0..=i {
            let mut s = g[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `L L^T x = b` for the factor from [`cholesky5`].
fn chol_solve5(l: &[[f64; 5]; 5], b: [f64; 5]) -> [f64; 5] {
    let mut y = [0.0f64; 5];
    for i in 0..5 {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0f64; 5];
    for i in (0..5).rev() {
        let mut s = y[i];
        for k in (i + 1)..5 {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}
