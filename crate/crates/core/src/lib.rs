//! A two-level laboratory for a dilute hard-sphere gas on a flat 3-torus.
//!
//! The lower level is particle dynamics: an exact event-driven hard-sphere
//! simulator and a smooth-potential hybrid integrator, both time-reversible.
//! The upper level is kinetic: the Enskog collision integral (and its
//! Boltzmann and mean-field variants) evaluated by quadrature on smooth
//! phase-space densities, plus a space-homogeneous relaxation stepper with
//! an H functional. Mollified particle ensembles bridge the two levels, and
//! reversal drivers compare the arrow of time seen by each.

pub mod bev;
pub mod blobs;
pub mod collision_operator;
pub mod error;
pub mod hard_sphere;
pub mod homogeneous;
pub mod io;
pub mod mollifier;
pub mod phase_field;
pub mod quadrature;
pub mod reversal;
pub mod seeding;
pub mod torus;

pub use bev::{
    evolve_bev, potential_energy, total_force, BevOutcome, BevStats, EnergySample, PairPotential,
    PotentialKind,
};
pub use blobs::{
    coherence_time, draw_ensemble, factorization_gap, flow_ensemble, limit_trajectory_error,
    make_blob_initial, reverse_ensemble, BlobEnsemble, BlobField, Estimate, FactorizationReport,
    HarnessReport, LimitPoint, MarginalEstimate, COHERENCE_PROBE_COUNT,
    DEFAULT_COHERENCE_FRACTION,
};
pub use collision_operator::{
    check_condition_11, condition11_samples, default_velocity_step, mean_field_gradient,
    st_boltzmann, st_enskog, st_loss, vlasov_term, Condition11Sample, Coupling, SpatialDensity,
};
pub use error::{Error, Result};
pub use homogeneous::{
    h_functional, reverse_field, HomogeneousSolver, Moments, StepStats, VelocityField,
};
pub use io::{
    write_energy_series, write_ensemble_snapshots, write_event_log, write_field_snapshot,
    write_json_pretty, write_moment_series, write_operator_scan, write_snapshots, FieldHeader,
    OperatorScanRow,
};
pub use mollifier::{kernel1, Mollifier};
pub use phase_field::{
    maxwellian3, BumpClusterField, MaxwellianComponent, ModulatedField, Normalization, PhaseField,
    Smoothness, UniformField,
};
pub use quadrature::{gauss_legendre, QuadratureRule, SigmaRule, VelocityRule};
pub use reversal::{
    run_blob_reversal, run_particle_reversal, run_smooth_irreversibility, BlobReversalMetrics,
    MomentSample, ParticleReversalMetrics, ReversalClass, ReversalReport,
    SmoothIrreversibilityMetrics, SmoothReversalOptions, Verdict,
};
pub use hard_sphere::{
    collide, evolve, evolve_with, predict_collision, reverse, sample_admissible_config,
    state_deviation, CollisionEvent, CollisionRecord, EventQueue, EvolutionOutcome,
    EvolutionStats, EvolveOptions, ParticleConfig,
};
pub use torus::{image_offsets, min_image, min_image_disp, torus_distance, wrap, TorusPoint, Vec3};
