//! Quadrature rules for the collision integral: a product rule over contact
//! directions on the sphere and a tensor rule over the partner velocity cube.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::torus::Vec3;

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence. Nodes are returned in ascending order and are
/// exactly symmetric about zero (the negative half mirrors the positive one).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = (n + 1) / 2;
    for k in 0..half {
        // Tricomi initial guess for the k-th root (largest first).
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        if n % 2 == 1 && k == half - 1 {
            x = 0.0;
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - k] = x;
        nodes[k] = -x;
        weights[n - 1 - k] = w;
        weights[k] = w;
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at `x`, via the three-term
/// recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Unit-vector nodes and weights covering the full sphere of contact
/// directions: Gauss-Legendre in the polar cosine crossed with uniform
/// midpoints in azimuth. Weights sum to the sphere area 4 pi.
///
/// `antipodes[i]` is the index of the node opposite to node `i` when the
/// rule contains one at equal weight (`i` itself otherwise). Consumers use
/// the pairing to fuse the two hemisphere passes of a collision sum.
#[derive(Clone, Debug)]
pub struct SigmaRule {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub antipodes: Vec<usize>,
}

impl SigmaRule {
    pub fn product(n_cos: usize, n_phi: usize) -> SigmaRule {
        assert!(n_cos >= 1 && n_phi >= 1);
        let (cos_nodes, cos_weights) = gauss_legendre(n_cos);
        let dphi = 2.0 * PI / n_phi as f64;
        let half = n_phi / 2;
        let paired = n_phi % 2 == 0;
        let total = n_cos * n_phi;
        let mut nodes = vec![Vec3::ZERO; total];
        let mut weights = vec![0.0; total];
        for (ci, (&ct, &wc)) in cos_nodes.iter().zip(&cos_weights).enumerate() {
            let st = (1.0 - ct * ct).sqrt();
            for k in 0..n_phi {
                let idx = ci * n_phi + k;
                weights[idx] = wc * dphi;
                // Mirror the already-built node where an exact opposite
                // exists so antipodal pairs match bitwise; polar nodes come
                // in exact +/- pairs and azimuth midpoints differ by pi.
                let mirror = if !paired {
                    None
                } else if ct > 0.0 {
                    Some((n_cos - 1 - ci) * n_phi + (k + half) % n_phi)
                } else if ct == 0.0 && k >= half {
                    Some(ci * n_phi + k - half)
                } else {
                    None
                };
                nodes[idx] = match mirror {
                    Some(src) => -nodes[src],
                    None => {
                        let phi = dphi * (k as f64 + 0.5);
                        Vec3::new(st * phi.cos(), st * phi.sin(), ct)
                    }
                };
            }
        }
        let antipodes = find_antipodes(&nodes, &weights);
        SigmaRule { nodes, weights, antipodes }
    }

    /// Rule from explicit nodes and weights, detecting antipodal pairs.
    pub fn from_nodes(nodes: Vec<Vec3>, weights: Vec<f64>) -> SigmaRule {
        assert_eq!(nodes.len(), weights.len());
        let antipodes = find_antipodes(&nodes, &weights);
        SigmaRule { nodes, weights, antipodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// For each node, the index of an equal-weight exact opposite if present.
fn find_antipodes(nodes: &[Vec3], weights: &[f64]) -> Vec<usize> {
    let n = nodes.len();
    let mut antipodes: Vec<usize> = (0..n).collect();
    for i in 0..n {
        if antipodes[i] != i {
            continue;
        }
        for j in (i + 1)..n {
            if antipodes[j] != j {
                continue;
            }
            if (nodes[i] + nodes[j]).max_abs() == 0.0 && weights[i] == weights[j] {
                antipodes[i] = j;
                antipodes[j] = i;
                break;
            }
        }
    }
    antipodes
}

/// Tensor Gauss-Legendre rule over the velocity cube [-v_max, v_max]^3.
///
/// Construction verifies the rule's resolution contract: the unit-mass
/// Gaussian of the configured scale must integrate to 1 within 1e-6 relative
/// (truncation outside the cube counts against the rule).
#[derive(Clone, Debug)]
pub struct VelocityRule {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub axis_nodes: Vec<f64>,
    pub axis_weights: Vec<f64>,
    pub v_max: f64,
    pub scale: f64,
}

impl VelocityRule {
    /// Cube half-width 6 times the scale.
    pub fn tensor(n: usize, scale: f64) -> Result<VelocityRule> {
        VelocityRule::with_extent(n, 6.0 * scale, scale)
    }

    pub fn with_extent(n: usize, v_max: f64, scale: f64) -> Result<VelocityRule> {
        if !(v_max > 0.0) || !v_max.is_finite() || !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParam(format!(
                "velocity rule needs positive finite extent and scale, got {v_max}, {scale}"
            )));
        }
        let (raw_nodes, raw_weights) = gauss_legendre(n);
        let axis_nodes: Vec<f64> = raw_nodes.iter().map(|x| x * v_max).collect();
        let axis_weights: Vec<f64> = raw_weights.iter().map(|w| w * v_max).collect();
        let mut nodes = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for (x, wx) in axis_nodes.iter().zip(&axis_weights) {
            for (y, wy) in axis_nodes.iter().zip(&axis_weights) {
                for (z, wz) in axis_nodes.iter().zip(&axis_weights) {
                    nodes.push(Vec3::new(*x, *y, *z));
                    weights.push(wx * wy * wz);
                }
            }
        }
        let rule =
            VelocityRule { nodes, weights, axis_nodes, axis_weights, v_max, scale };
        let defect = rule.gaussian_defect();
        if defect > 1e-6 {
            return Err(Error::ResolutionInsufficient(defect));
        }
        Ok(rule)
    }

    /// Relative error of the rule on the centered unit-mass Gaussian of the
    /// configured scale.
    pub fn gaussian_defect(&self) -> f64 {
        let inv_two_theta = 1.0 / (2.0 * self.scale * self.scale);
        let norm = (2.0 * PI * self.scale * self.scale).powf(-1.5);
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * norm * (-v.norm_sq() * inv_two_theta).exp())
            .sum();
        (total - 1.0).abs()
    }

    /// True when `v` lies inside the cube the rule covers. Field values
    /// outside the cube are treated as zero by the collision operator.
    #[inline]
    pub fn contains(&self, v: Vec3) -> bool {
        v.x.abs() <= self.v_max && v.y.abs() <= self.v_max && v.z.abs() <= self.v_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// The pair of rules the collision operator consumes.
///
/// Defaults: 16 x 32 directions and an 18-per-axis velocity tensor at cube
/// half-width six times the velocity scale. Eighteen is the smallest per-axis
/// count whose tensor rule meets the 1e-6 Gaussian contract at that extent.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub sigma: SigmaRule,
    pub velocity: VelocityRule,
}

impl QuadratureRule {
    pub fn standard(velocity_scale: f64) -> Result<QuadratureRule> {
        Ok(QuadratureRule {
            sigma: SigmaRule::product(16, 32),
            velocity: VelocityRule::tensor(18, velocity_scale)?,
        })
    }

    pub fn custom(
        n_cos: usize,
        n_phi: usize,
        n_velocity: usize,
        velocity_scale: f64,
    ) -> Result<QuadratureRule> {
        Ok(QuadratureRule {
            sigma: SigmaRule::product(n_cos, n_phi),
            velocity: VelocityRule::tensor(n_velocity, velocity_scale)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_low_orders_match_closed_forms() {
        let (n2, w2) = gauss_legendre(2);
        let r = 1.0 / 3f64.sqrt();
        assert!((n2[0] + r).abs() < 1e-15 && (n2[1] - r).abs() < 1e-15);
        assert!((w2[0] - 1.0).abs() < 1e-15 && (w2[1] - 1.0).abs() < 1e-15);

        let (n3, w3) = gauss_legendre(3);
        assert_eq!(n3[1], 0.0);
        assert!((n3[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((w3[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((w3[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let (nodes, weights) = gauss_legendre(5);
        // Degree 9 is the exactness limit for 5 nodes.
        for k in 0..=9usize {
            let num: f64 =
                nodes.iter().zip(&weights).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((num - exact).abs() < 1e-14, "degree {k}: {num} vs {exact}");
        }
    }

    #[test]
    fn gauss_legendre_nodes_are_exactly_symmetric() {
        for n in [4, 7, 16, 18] {
            let (nodes, weights) = gauss_legendre(n);
            for k in 0..n {
                assert_eq!(nodes[k], -nodes[n - 1 - k]);
                assert_eq!(weights[k], weights[n - 1 - k]);
            }
            let total: f64 = weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sigma_rule_weights_sum_to_sphere_area() {
        let rule = SigmaRule::product(16, 32);
        assert_eq!(rule.len(), 512);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 4.0 * PI).abs() < 1e-10, "sum {total}");
        for s in &rule.nodes {
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_rule_integrates_low_moments() {
        let rule = SigmaRule::product(16, 32);
        let mean = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .fold(Vec3::ZERO, |acc, (s, w)| acc + *s * *w);
        assert!(mean.max_abs() < 1e-12, "first moment {mean:?}");
        // Second moment of any component over the sphere is 4 pi / 3.
        let zz: f64 =
            rule.nodes.iter().zip(&rule.weights).map(|(s, w)| w * s.z * s.z).sum();
        assert!((zz - 4.0 * PI / 3.0).abs() < 1e-10);
        let xy: f64 =
            rule.nodes.iter().zip(&rule.weights).map(|(s, w)| w * s.x * s.y).sum();
        assert!(xy.abs() < 1e-12);
    }

    #[test]
    fn sigma_rule_pairs_every_node_with_exact_opposite() {
        for (n_cos, n_phi) in [(16usize, 32usize), (15, 32), (2, 4), (5, 8)] {
            let rule = SigmaRule::product(n_cos, n_phi);
            for i in 0..rule.len() {
                let j = rule.antipodes[i];
                assert_ne!(j, i, "node {i} of ({n_cos},{n_phi}) unpaired");
                assert_eq!(rule.antipodes[j], i);
                assert_eq!((rule.nodes[i] + rule.nodes[j]).max_abs(), 0.0);
                assert_eq!(rule.weights[i], rule.weights[j]);
            }
        }
        // An odd azimuth count admits no exact opposites.
        let odd = SigmaRule::product(4, 7);
        for i in 0..odd.len() {
            assert_eq!(odd.antipodes[i], i);
        }
    }

    #[test]
    fn velocity_rule_meets_gaussian_contract() {
        let rule = VelocityRule::tensor(18, 1.3).unwrap();
        assert!(rule.gaussian_defect() <= 1e-6, "defect {}", rule.gaussian_defect());
        assert_eq!(rule.len(), 18 * 18 * 18);
        assert!((rule.v_max - 7.8).abs() < 1e-12);
    }

    #[test]
    fn velocity_rule_rejects_insufficient_resolution() {
        let err = VelocityRule::tensor(6, 1.0);
        assert!(matches!(err, Err(Error::ResolutionInsufficient(_))), "{err:?}");
    }

    #[test]
    fn velocity_rule_cube_membership() {
        let rule = VelocityRule::tensor(18, 1.0).unwrap();
        assert!(rule.contains(Vec3::new(5.9, -5.9, 0.0)));
        assert!(!rule.contains(Vec3::new(6.1, 0.0, 0.0)));
    }

    #[test]
    fn velocity_rule_weight_total_is_cube_volume() {
        let rule = VelocityRule::tensor(18, 0.5).unwrap();
        let total: f64 = rule.weights.iter().sum();
        let vol = (2.0 * rule.v_max).powi(3);
        assert!((total - vol).abs() < 1e-9 * vol);
    }
}
