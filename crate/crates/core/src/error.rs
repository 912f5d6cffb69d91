use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("undefined heading: directed kernel evaluated with zero velocity")]
    UndefinedHeading,

    #[error("damping overshoot; reduce dt (H·dt = {0} ≥ 1)")]
    DampingOvershoot(f64),

    #[error("cell list degenerate; use naive path (R = {radius}, L/2 = {half})")]
    CellListDegenerate { radius: f64, half: f64 },

    #[error("kernel radius {radius} too large: R < L/2 = {half} required")]
    KernelTooWide { radius: f64, half: f64 },

    #[error("linear solver failed: relative residual {residual:e} > tolerance {tolerance:e}")]
    SolverFailed { residual: f64, tolerance: f64 },

    #[error("positivity violated: minimum value {min:e}")]
    PositivityViolated { min: f64 },

    #[error("CFL condition violated: |c| = {0} > 1")]
    CflViolated(f64),

    #[error("degenerate temperature; Maxwellian is a point mass")]
    DegenerateTemperature,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DampingOvershoot(_)
                | Error::SolverFailed { .. }
                | Error::PositivityViolated { .. }
                | Error::CflViolated(_)
                | Error::DegenerateTemperature
                | Error::UndefinedHeading
        )
    }
}
