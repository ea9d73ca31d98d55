use thiserror::Error;

/// Errors raised by the model, bounds and optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("invalid intensity order: mu_x = {mu_x} must be strictly below mu_y = {mu_y}")]
    InvalidIntensityOrder { mu_x: f64, mu_y: f64 },
    #[error("invalid intensity: {0}")]
    InvalidIntensity(String),
    #[error("photon-number distribution: {0}")]
    InvalidDistribution(String),
    #[error("division by zero: {0} is zero")]
    DivisionByZero(&'static str),
    #[error("degenerate denominator in the single-photon yield bound (b_x1*b_y2 == b_x2*b_y1)")]
    DegenerateDenominator,
    #[error("single-photon yield lower bound is zero; no key can be extracted")]
    ZeroS11,
    #[error("empty set: fluctuation bound requested for N_C = 0")]
    EmptySet,
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("infeasible initial point: {0}")]
    InfeasibleInitial(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<()> {
    if value.is_nan() || value < lo || value > hi {
        Err(Error::OutOfRange { name, value, range })
    } else {
        Ok(())
    }
}
