//! Compactly supported product smoothing kernel on position-velocity space.
//!
//! The one-dimensional kernel is the quartic bump (15/16)(1 - x^2)^2 on
//! [-1, 1], which integrates exactly to one. Six-dimensional kernels are
//! tensor products of scaled copies, with independent widths for the
//! position and velocity factors.

use rand::Rng;

use crate::error::{Error, Result};
use crate::torus::Vec3;

/// Height of the one-dimensional kernel at the origin.
pub const KERNEL_PEAK_1D: f64 = 15.0 / 16.0;

/// Unit-mass quartic bump on [-1, 1].
#[inline]
pub fn kernel1(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        let u = 1.0 - x * x;
        KERNEL_PEAK_1D * u * u
    }
}

/// Product kernel widths: `eps_r` per position axis, `eps_v` per velocity
/// axis. A width of zero is the degenerate (point mass) limit; it is legal
/// for sampling, where every draw returns a zero offset, but the density
/// itself is then undefined and must not be evaluated.
#[derive(Clone, Copy, Debug)]
pub struct Mollifier {
    pub eps_r: f64,
    pub eps_v: f64,
}

impl Mollifier {
    pub fn new(eps_r: f64, eps_v: f64) -> Result<Mollifier> {
        if !(eps_r >= 0.0) || !eps_r.is_finite() || !(eps_v >= 0.0) || !eps_v.is_finite() {
            return Err(Error::InvalidParam(format!(
                "kernel widths must be finite and non-negative, got {eps_r}, {eps_v}"
            )));
        }
        Ok(Mollifier { eps_r, eps_v })
    }

    /// Six-dimensional kernel value at offsets `(dr, dv)` from the center.
    /// Requires both widths to be positive.
    pub fn density(&self, dr: Vec3, dv: Vec3) -> f64 {
        self.spatial(dr) * self.velocity(dv)
    }

    /// Three-dimensional position factor, unit mass, support cube of
    /// half-width `eps_r`.
    pub fn spatial(&self, dr: Vec3) -> f64 {
        debug_assert!(self.eps_r > 0.0, "degenerate spatial kernel evaluated");
        let s = 1.0 / self.eps_r;
        kernel1(dr.x * s) * kernel1(dr.y * s) * kernel1(dr.z * s) * s * s * s
    }

    /// Three-dimensional velocity factor, unit mass, support cube of
    /// half-width `eps_v`.
    pub fn velocity(&self, dv: Vec3) -> f64 {
        debug_assert!(self.eps_v > 0.0, "degenerate velocity kernel evaluated");
        let s = 1.0 / self.eps_v;
        kernel1(dv.x * s) * kernel1(dv.y * s) * kernel1(dv.z * s) * s * s * s
    }

    /// Peak value of the six-dimensional kernel.
    pub fn peak(&self) -> f64 {
        KERNEL_PEAK_1D.powi(6) / (self.eps_r.powi(3) * self.eps_v.powi(3))
    }

    /// Draws a kernel-distributed offset pair. Deterministic given the
    /// generator state; zero widths yield zero offsets.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (Vec3, Vec3) {
        let dr = Vec3::new(
            self.eps_r * draw_kernel1(rng),
            self.eps_r * draw_kernel1(rng),
            self.eps_r * draw_kernel1(rng),
        );
        let dv = Vec3::new(
            self.eps_v * draw_kernel1(rng),
            self.eps_v * draw_kernel1(rng),
            self.eps_v * draw_kernel1(rng),
        );
        (dr, dv)
    }
}

/// Rejection sampler for the one-dimensional kernel on [-1, 1].
fn draw_kernel1<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let x = 2.0 * rng.random::<f64>() - 1.0;
        let y = KERNEL_PEAK_1D * rng.random::<f64>();
        if y < kernel1(x) {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use crate::seeding::derive_rng;

    #[test]
    fn kernel_has_unit_mass() {
        // The kernel is a degree-4 polynomial on its support, so a 3-point
        // Gauss rule integrates it exactly.
        let (nodes, weights) = gauss_legendre(3);
        let total: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * kernel1(*x)).sum();
        assert!((total - 1.0).abs() < 1e-14, "mass {total}");
    }

    #[test]
    fn kernel_support_is_exact() {
        assert_eq!(kernel1(1.0), 0.0);
        assert_eq!(kernel1(-1.0), 0.0);
        assert_eq!(kernel1(1.5), 0.0);
        assert!(kernel1(0.999_999) > 0.0);
        assert_eq!(kernel1(0.0), KERNEL_PEAK_1D);
    }

    #[test]
    fn six_dimensional_mass_and_peak() {
        let m = Mollifier::new(0.05, 0.2).unwrap();
        let (nodes, weights) = gauss_legendre(3);
        // Tensor the exact 1-D integral over one position and one velocity
        // axis; the remaining axes factor identically.
        let mass_r: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * m.eps_r * m.spatial(Vec3::new(x * m.eps_r, 0.0, 0.0)))
            .sum();
        let expected_slice = kernel1(0.0) * kernel1(0.0) / (m.eps_r * m.eps_r);
        assert!((mass_r - expected_slice).abs() < 1e-12 * expected_slice);
        let peak = m.density(Vec3::ZERO, Vec3::ZERO);
        assert!((peak - m.peak()).abs() < 1e-12 * m.peak());
    }

    #[test]
    fn draw_is_deterministic_and_in_support() {
        let m = Mollifier::new(0.1, 0.5).unwrap();
        let mut a = derive_rng(42, "kernel-draw", 0);
        let mut b = derive_rng(42, "kernel-draw", 0);
        for _ in 0..200 {
            let (dr, dv) = m.draw(&mut a);
            let (dr2, dv2) = m.draw(&mut b);
            assert_eq!(dr.to_array(), dr2.to_array());
            assert_eq!(dv.to_array(), dv2.to_array());
            assert!(dr.max_abs() < m.eps_r);
            assert!(dv.max_abs() < m.eps_v);
        }
    }

    #[test]
    fn degenerate_widths_draw_zero_offsets() {
        let m = Mollifier::new(0.0, 0.0).unwrap();
        let mut rng = derive_rng(1, "kernel-draw", 1);
        let (dr, dv) = m.draw(&mut rng);
        assert_eq!(dr.to_array(), [0.0; 3]);
        assert_eq!(dv.to_array(), [0.0; 3]);
    }

    #[test]
    fn draw_matches_kernel_moments() {
        let m = Mollifier::new(1.0, 1.0).unwrap();
        let mut rng = derive_rng(7, "kernel-moments", 0);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let (dr, _) = m.draw(&mut rng);
            sum += dr.x;
            sum_sq += dr.x * dr.x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // Second moment of the kernel is 1/7.
        assert!(mean.abs() < 3e-3, "mean {mean}");
        assert!((var - 1.0 / 7.0).abs() < 3e-3, "var {var}");
    }
}
