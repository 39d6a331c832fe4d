//! JSON configuration schema for the scenario runner.
//!
//! A configuration file is one JSON object with four top-level keys:
//!
//! ```json
//! {
//!   "scenario": "simulate",
//!   "seed": 42,
//!   "out": "runs/demo",
//!   "params": { ... }
//! }
//! ```
//!
//! `scenario` must match the subcommand the binary was invoked with, `seed`
//! (default 0) is the master seed every random stream derives from, `out`
//! is the output directory (both overridable on the command line), and
//! `params` holds the scenario-specific parameters documented on the
//! structs below. Unknown keys are rejected everywhere so typos fail fast.

use std::path::PathBuf;

use enskog_core::PotentialKind;
use serde::{Deserialize, Serialize};

/// Top-level layout of a configuration file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioKind,
    /// Master seed; the `--seed` flag overrides it.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the `--out` flag overrides it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Scenario-specific parameters; accepted fields depend on `scenario`.
    pub params: serde_json::Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Simulate,
    Kinetic,
    Blobs,
    Reversal,
    Stscan,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Simulate => "simulate",
            ScenarioKind::Kinetic => "kinetic",
            ScenarioKind::Blobs => "blobs",
            ScenarioKind::Reversal => "reversal",
            ScenarioKind::Stscan => "stscan",
        }
    }
}

/// How to build an initial particle state.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ParticleInit {
    /// Draw an admissible state: uniform non-overlapping positions and
    /// Gaussian velocities of the given scale, from the run seed.
    Random { n: usize, velocity_scale: f64 },
    /// Explicit positions (wrapped into the box) and velocities; the state
    /// must be admissible (no overlapping pair).
    Explicit { positions: Vec<[f64; 3]>, velocities: Vec<[f64; 3]> },
}

/// `simulate` — particle dynamics: event-driven hard spheres, or the
/// smooth-potential hybrid when `potential` is present. Writes
/// `events.jsonl` and `snapshots.csv` (plus `energy.csv` for the hybrid).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    /// Sphere diameter.
    pub a: f64,
    /// Box side length.
    pub l: f64,
    pub init: ParticleInit,
    /// Total duration.
    pub t: f64,
    /// Number of evenly spaced states in the snapshot table, including the
    /// initial and final one (minimum 2).
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Smooth pair interaction; omit for pure hard spheres.
    #[serde(default)]
    pub potential: Option<PotentialParams>,
}

fn default_snapshots() -> usize {
    2
}

/// Smooth pair interaction for the hybrid integrator. `kind` uses the
/// potential's own tagging: `"Zero"`, `{"QuarticBump": {"strength": s}}`,
/// or `{"Harmonic": {"strength": s}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialParams {
    pub kind: PotentialKind,
    /// Interaction cutoff radius (at most half the box).
    pub cutoff: f64,
    /// Particle mass.
    pub mass: f64,
    /// Integrator step.
    pub dt: f64,
}

/// A Maxwellian stream: mass density, drift velocity, temperature.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentInit {
    pub density: f64,
    pub mean: [f64; 3],
    pub theta: f64,
}

/// Initial velocity-space density for grid scenarios.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldInit {
    Maxwellian { density: f64, mean: [f64; 3], theta: f64 },
    /// Symmetric two-stream field: half the density drifting each way.
    Bimodal { density: f64, drift: [f64; 3], theta: f64 },
    Mixture { components: Vec<ComponentInit> },
}

/// `kinetic` — space-homogeneous relaxation on an M^3 velocity grid.
/// Writes `series.csv` (moments and H per step), initial and final field
/// snapshots, and `summary.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticParams {
    /// Grid nodes per velocity axis.
    pub m: usize,
    /// Velocity-domain half width.
    pub v_max: f64,
    /// Sphere diameter in the collision term.
    pub a: f64,
    /// Concentration prefactor multiplying the collision term.
    pub concentration: f64,
    pub field: FieldInit,
    /// Absolute step size; give exactly one of `dt` and `dt_fraction`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Step as a fraction of the measured stability bound.
    #[serde(default)]
    pub dt_fraction: Option<f64>,
    pub steps: usize,
}

/// One mollifier width pair.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthPair {
    pub eps_r: f64,
    pub eps_v: f64,
}

/// `blobs` — mollified-ensemble width sweep against one reference particle
/// state: coherence window, per-particle centroid errors at `t_probe`, and
/// the two-point factorization gap. Writes `report-<i>.json` per width,
/// the combined `sweep.json`, and `ensemble-<i>.csv` snapshots.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsParams {
    pub a: f64,
    pub l: f64,
    pub init: ParticleInit,
    /// Width pairs, widest first: `eps_r` strictly decreasing, `eps_v`
    /// non-increasing.
    pub widths: Vec<WidthPair>,
    /// Ensemble size per width.
    pub s: usize,
    /// Comparison time; must not land on a contact instant.
    pub t_probe: f64,
    /// Horizon of the coherence scan; defaults to `t_probe`.
    #[serde(default)]
    pub coherence_horizon: Option<f64>,
    /// Coherence threshold as a fraction of the diameter, in (0, 0.5);
    /// defaults to the library's standard fraction.
    #[serde(default)]
    pub coherence_fraction: Option<f64>,
}

/// `reversal` — forward/backward round trips at one of three levels.
/// Writes `report.json` (and `h_series.csv` for the smooth class).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReversalParams {
    /// Exact particle round trip: evolve `t`, reverse, evolve `t` again.
    Particle { a: f64, l: f64, init: ParticleInit, t: f64, tolerance: f64 },
    /// Grid relaxation with a velocity flip at `t_rev`; both `t_rev` and
    /// `t_total` must be whole multiples of the step.
    Smooth {
        m: usize,
        v_max: f64,
        a: f64,
        /// Box side length behind the probe geometry of the noise floor.
        l: f64,
        concentration: f64,
        field: FieldInit,
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default)]
        dt_fraction: Option<f64>,
        t_rev: f64,
        t_total: f64,
        /// Product-balance probes behind the reported noise floor.
        #[serde(default = "default_probes")]
        probes: usize,
    },
    /// Mollified-ensemble round trip of length `t` per leg.
    Blob {
        a: f64,
        l: f64,
        init: ParticleInit,
        eps_r: f64,
        eps_v: f64,
        s: usize,
        t: f64,
        tolerance: f64,
    },
}

fn default_probes() -> usize {
    200
}

/// Quadrature sizes for the collision integrals: polar and azimuthal
/// direction counts and the per-axis velocity node count.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureInit {
    pub n_cos: usize,
    pub n_phi: usize,
    pub n_velocity: usize,
}

/// One spatial bump: center position and mass weight.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpInit {
    pub center: [f64; 3],
    pub mass: f64,
}

/// Smooth one-particle density for operator scans.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseFieldInit {
    /// Position-independent mixture of Maxwellian streams.
    Uniform { components: Vec<ComponentInit> },
    /// Maxwellian velocity profile with density
    /// `density (1 + amplitude sin(2 pi mode x / L))`.
    Modulated { density: f64, mean: [f64; 3], theta: f64, amplitude: f64, mode: u32 },
    /// Compact spatial bumps sharing one Maxwellian velocity profile.
    Bumps { centers: Vec<BumpInit>, eps_r: f64, theta: f64 },
}

/// Mean-field term of an operator scan: the smooth pair potential and the
/// resolution of the spatial density grid it is summed over.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldInit {
    pub kind: PotentialKind,
    pub cutoff: f64,
    pub mass: f64,
    /// Nodes per axis of the density grid.
    pub rho_grid: usize,
}

/// `stscan` — pointwise scans of the two collision integrals (and the
/// mean-field term when configured) at random phase points. Writes
/// `scan.csv`, `scan_half.csv` when `halve_a` is set, and `summary.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StscanParams {
    /// Sphere diameter.
    pub a: f64,
    /// Box side length.
    pub l: f64,
    pub field: PhaseFieldInit,
    /// Concentration prefactor of the collision term.
    pub concentration: f64,
    /// Number of phase-space probe points.
    pub probes: usize,
    /// Explicit probe positions (exactly `probes` of them); omit to draw
    /// positions uniformly over the box. Probe velocities are Gaussian
    /// draws either way.
    #[serde(default)]
    pub probe_positions: Option<Vec<[f64; 3]>>,
    /// Scale of the Gaussian probe velocities and of the velocity quadrature.
    pub velocity_scale: f64,
    /// Quadrature sizes; omit for the standard rule.
    #[serde(default)]
    pub quadrature: Option<QuadratureInit>,
    /// Also evaluate every probe at diameter a/2 and report the ratio of
    /// mean collision-integral gaps.
    #[serde(default)]
    pub halve_a: bool,
    /// Mean-field term; omit to leave the vlasov column at zero.
    #[serde(default)]
    pub mean_field: Option<MeanFieldInit>,
    /// Extra product-balance diagnostic with this many contact samples.
    #[serde(default)]
    pub balance_samples: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ConfigFile, serde_json::Error> {
        serde_json::from_str(text)
    }

    #[test]
    fn minimal_simulate_config_parses_with_defaults() {
        let cfg = parse(
            r#"{
                "scenario": "simulate",
                "params": {
                    "a": 0.1, "l": 1.0, "t": 0.3,
                    "init": {"random": {"n": 4, "velocity_scale": 1.0}}
                }
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::Simulate);
        assert_eq!(cfg.seed, 0);
        assert!(cfg.out.is_none());
        let p: SimulateParams = serde_json::from_value(cfg.params).unwrap();
        assert_eq!(p.snapshots, 2);
        assert!(p.potential.is_none());
        match p.init {
            ParticleInit::Random { n, velocity_scale } => {
                assert_eq!(n, 4);
                assert_eq!(velocity_scale, 1.0);
            }
            other => panic!("unexpected init {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_at_both_levels() {
        assert!(parse(r#"{"scenario": "simulate", "params": {}, "bogus": 1}"#).is_err());
        let cfg = parse(
            r#"{
                "scenario": "simulate",
                "params": {
                    "a": 0.1, "l": 1.0, "t": 0.3, "bogus": 1,
                    "init": {"random": {"n": 4, "velocity_scale": 1.0}}
                }
            }"#,
        )
        .unwrap();
        assert!(serde_json::from_value::<SimulateParams>(cfg.params).is_err());
    }

    #[test]
    fn reversal_variants_parse_by_class() {
        let cfg = parse(
            r#"{
                "scenario": "reversal",
                "params": {
                    "smooth": {
                        "m": 24, "v_max": 7.2, "a": 0.35, "l": 1.0, "concentration": 1.0,
                        "field": {"bimodal": {"density": 1.0, "drift": [0.7, 0, 0], "theta": 1.0}},
                        "dt": 0.0005, "t_rev": 0.003, "t_total": 0.006
                    }
                }
            }"#,
        )
        .unwrap();
        let p: ReversalParams = serde_json::from_value(cfg.params).unwrap();
        match p {
            ReversalParams::Smooth { probes, dt, dt_fraction, .. } => {
                assert_eq!(probes, 200);
                assert_eq!(dt, Some(0.0005));
                assert!(dt_fraction.is_none());
            }
            other => panic!("unexpected params {other:?}"),
        }
    }

    #[test]
    fn potential_kind_uses_the_library_tagging() {
        let text = r#"{"kind": {"QuarticBump": {"strength": 4.0}}, "cutoff": 0.3, "mass": 1.0, "dt": 0.001}"#;
        let p: PotentialParams = serde_json::from_str(text).unwrap();
        assert_eq!(p.kind, PotentialKind::QuarticBump { strength: 4.0 });
        assert_eq!(p.cutoff, 0.3);
    }

    #[test]
    fn shipped_sample_configs_parse() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("sample-configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            seen += 1;
            let text = std::fs::read_to_string(&path).unwrap();
            let cfg: ConfigFile =
                serde_json::from_str(&text).unwrap_or_else(|e| panic!("{path:?}: {e}"));
            let params_ok = match cfg.scenario {
                ScenarioKind::Simulate => {
                    serde_json::from_value::<SimulateParams>(cfg.params).is_ok()
                }
                ScenarioKind::Kinetic => {
                    serde_json::from_value::<KineticParams>(cfg.params).is_ok()
                }
                ScenarioKind::Blobs => serde_json::from_value::<BlobsParams>(cfg.params).is_ok(),
                ScenarioKind::Reversal => {
                    serde_json::from_value::<ReversalParams>(cfg.params).is_ok()
                }
                ScenarioKind::Stscan => {
                    serde_json::from_value::<StscanParams>(cfg.params).is_ok()
                }
            };
            assert!(params_ok, "params of {path:?} do not match its scenario");
        }
        assert!(seen >= 5, "expected sample configs, found {seen}");
    }
}
