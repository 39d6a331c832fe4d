use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes across the crate. The first group marks rejected inputs
/// (fixable by changing parameters); the rest arise while running.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("sphere diameter {a} must be smaller than half the box length {l}")]
    SphereTooLarge { a: f64, l: f64 },

    #[error("no admissible placement for particle {particle} after {attempts} attempts; packing too dense")]
    PackingTooDense { particle: usize, attempts: usize },

    #[error("particles {i} and {j} overlap: separation {sep} below diameter {a}")]
    Overlap { i: usize, j: usize, sep: f64, a: f64 },

    #[error("receding pair: (v21, sigma) = {0} is negative")]
    RecedingPair(f64),

    #[error("sigma is not a unit vector: |sigma| = {0}")]
    NonUnitSigma(f64),

    #[error("collision event budget of {0} exhausted")]
    EventBudget(u64),

    #[error("near-triple contact at t = {t}: particle {k} in contact range of colliding pair ({i}, {j})")]
    TripleContact { t: f64, i: usize, j: usize, k: usize },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    StabilityBound { dt: f64, bound: f64 },

    #[error("step size underflow: sub-step shrank to {0}")]
    StepUnderflow(f64),

    #[error("bisection failure while locating contact: {0}")]
    BisectionFailure(String),

    #[error("negative density {value} at an evaluation point")]
    NegativeDensity { value: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("velocity resolution insufficient: defect measure {0}")]
    ResolutionInsufficient(f64),

    #[error("probe time falls at a contact: minimum separation {sep} within contact range of {a}")]
    ProbeAtContact { sep: f64, a: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that reject the configuration itself, as opposed to
    /// failures encountered while running an accepted configuration.
    pub fn is_rejected_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam(_) | Error::SphereTooLarge { .. } | Error::Overlap { .. }
        )
    }
}
