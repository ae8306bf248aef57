use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("temperature must be non-negative, got {0}")]
    NegativeTemperature(f64),

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("energy density {value} has no temperature preimage in [{lo}, {hi}] at z = {z}")]
    EnergyOutOfRange { value: f64, lo: f64, hi: f64, z: f64 },

    #[error("entropy density {value} has no log-temperature preimage in [{lo}, {hi}] at z = {z}")]
    EntropyOutOfRange { value: f64, lo: f64, hi: f64, z: f64 },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:e}")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("{solver} Newton iteration did not converge: {iterations} iterations, residual {residual:e}")]
    NewtonNotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("coupled fixed-point sweeps did not converge at t = {t}: mismatch {mismatch:e} after {sweeps} sweeps")]
    SweepNotConverged { t: f64, sweeps: usize, mismatch: f64 },

    #[error("step {step} (t = {t}): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration rejected:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn grid(msg: impl Into<String>) -> Self {
        Error::Grid(msg.into())
    }

    pub(crate) fn parse(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Parse {
            what,
            detail: detail.into(),
        }
    }
}
