use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("endpoint outside leg workspace (radius {radius:.6} m, reachable {min:.6}..={max:.6} m)")]
    Workspace { radius: f64, min: f64, max: f64 },

    #[error("singular input: endpoint at the hip origin")]
    Singular,

    #[error("invalid joint configuration: knee-relative angle {kappa:.6} rad outside [0, pi]")]
    InvalidConfiguration { kappa: f64 },

    #[error("least-squares fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("command rejected: {0}")]
    Command(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
