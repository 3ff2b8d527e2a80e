use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("perturbation kernel is singular at t={t} (sigma=0); evaluate above t_min")]
    SingularKernel { t: f64 },

    #[error("sampler diverged: non-finite score at step {step}")]
    DivergedSampler { step: usize },

    #[error("loss diverged: non-finite discriminator output")]
    DivergedLoss,

    #[error("training diverged at step {step}; parameters rolled back to last checkpoint")]
    DivergedTraining { step: usize },

    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),

    #[error("oscillatory construction violated: inner value {value} <= 0 at query point")]
    ConstructionViolated { value: f64 },

    #[error("oscillatory construction infeasible: r_opt={r_opt} <= epsilon={epsilon} at grid point {point:?}")]
    ConstructionInfeasible {
        r_opt: f64,
        epsilon: f64,
        point: Vec<f64>,
    },

    #[error("quadrature grid covers only {mass} of required {required} probability mass")]
    InsufficientCoverage { mass: f64, required: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
