use thiserror::Error;

/// Failures raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KatokError {
    #[error("point at distance {distance} lies outside the chart radius {radius}")]
    ChartOverflow { distance: f64, radius: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("integrator failed to meet the conservation tolerance at s = ({s1:e}, {s2:e})")]
    IntegratorFailure { s1: f64, s2: f64 },

    #[error("line field did not converge (last angle change {change:e} after burn-in {burn_in})")]
    NonConvergence { change: f64, burn_in: usize },

    #[error("orbit entering the slow disc at rho = {rho:e} did not exit within {steps} steps")]
    NonExit { rho: f64, steps: usize },

    #[error("leaves do not cross: {0}")]
    NoIntersection(String),

    #[error("empty candidate pool: {0}")]
    EmptyPool(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("sampling failure: {0}")]
    Sampling(String),

    #[error("config error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),
}

impl KatokError {
    /// True for failures of the numerics (integrator, fits, convergence), as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            KatokError::IntegratorFailure { .. }
                | KatokError::NonConvergence { .. }
                | KatokError::NonExit { .. }
                | KatokError::NoIntersection(_)
                | KatokError::DegenerateFit(_)
                | KatokError::Sampling(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, KatokError>;
