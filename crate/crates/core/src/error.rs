use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("g(a) requires a > 0, got a = {0}")]
    Domain(f64),

    #[error("poisson table holds k <= {k_max} but the evaluation needs k = {needed}")]
    TableTooSmall { needed: u64, k_max: usize },

    #[error(
        "u = {u} is below baseline participation p = {p}; the residual is not monotone here, \
         use scan_fixed_points"
    )]
    Regime { u: f64, p: f64 },

    #[error("trajectory is empty")]
    EmptyTrajectory,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
