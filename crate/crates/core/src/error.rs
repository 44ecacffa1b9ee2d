use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chart point x1 = {x1} lies within the pole guard band (eps = {guard})")]
    PoleProximity { x1: f64, guard: f64 },

    #[error("torus lift ambiguous at grid point ({i}, {j}): displacement {displacement:.4} exceeds {limit:.4}")]
    LiftAmbiguity {
        i: usize,
        j: usize,
        displacement: f64,
        limit: f64,
    },

    #[error("graph lost graphicality: min u1 = {min_u1:e} <= floor {floor:e}")]
    GraphicalityLoss { min_u1: f64, floor: f64 },

    #[error("non-finite value produced at grid point ({i}, {j})")]
    NonFiniteValue { i: usize, j: usize },

    #[error("configuration rejected: {0}")]
    ConfigRejected(String),

    #[error("initial data is not strictly area decreasing (min rho = {rho0})")]
    NotStrictlyDecreasing { rho0: f64 },

    #[error("invalid envelope input: {0}")]
    InvalidEnvelope(String),

    #[error("1-D reduction endpoint drifted by {drift:e}")]
    EndpointViolation { drift: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
