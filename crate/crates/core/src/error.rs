use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("orbit collapsed at s = {s}: a^2 + a'^2 = {radius_sq:e} (step too large?)")]
    OrbitCollapse { s: f64, radius_sq: f64 },

    #[error("no full revolution of the orbit found within span {span}")]
    NoReturn { span: f64 },

    #[error("exponent {exponent} leaves the floating-point range")]
    Overflow { exponent: f64 },

    #[error("resolution too coarse: {what} = {value} exceeds {limit}")]
    Resolution {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("empty half-plane intersection (inconsistent support estimates)")]
    EmptyIntersection,

    #[error("unbounded half-plane intersection: directions do not positively span the plane")]
    Unbounded,

    #[error("mesh budget exceeded: {required} vertices required, cap is {cap}")]
    Budget { required: usize, cap: usize },

    #[error("conductivity not positive: {0}")]
    Positivity(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e}, eps {eps:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        eps: f64,
    },

    #[error("line search failed at iteration {iteration} (directional derivative {slope:e})")]
    LineSearch { iteration: usize, slope: f64 },

    #[error("linear solve failed: {0}")]
    Linear(String),

    #[error("not enough usable samples: {usable} above the noise floor, need {required}")]
    InsufficientData { usable: usize, required: usize },

    #[error("reconstruction failed: only {succeeded} directions produced support estimates")]
    Reconstruction { succeeded: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Configuration and validation problems, as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Positivity(_) | Error::Config(_) | Error::Json(_)
        )
    }
}
