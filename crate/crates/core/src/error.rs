use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the function.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// The two key states coincide, so one virtual state has zero weight.
    #[error("key states are identical up to a phase (|<psi0|psi1>| = {overlap})")]
    DegenerateStates { overlap: f64 },

    /// The three Bloch endpoints lie on a line, so no plane is defined.
    #[error("Bloch endpoints are collinear (|cross| = {magnitude:e})")]
    CollinearStates { magnitude: f64 },

    /// The Bloch matrix of the basis states cannot be inverted.
    #[error("basis matrix is singular (|det| = {determinant:e})")]
    SingularBasis { determinant: f64 },

    /// The target state does not share the basis states' common plane.
    #[error("target is off the common plane (component {target}, plane {plane})")]
    PlaneMismatch { target: f64, plane: f64 },

    /// A signed decomposition does not have unit trace.
    #[error("decomposition coefficients sum to {sum}, expected 1")]
    NotUnitTrace { sum: f64 },

    /// No (a, b) pair satisfies the Kato constraints.
    #[error("infeasible Kato parameters: {0}")]
    InfeasibleParams(String),

    /// A tag has positive weight but no state carries it.
    #[error("tag set {0} is empty but carries a positive coefficient")]
    EmptyTagSet(&'static str),

    /// A protocol configuration field is invalid.
    #[error("invalid configuration field `{field}`: {detail}")]
    InvalidConfig { field: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        what,
        detail: detail.into(),
    }
}

pub(crate) fn invalid(field: &'static str, detail: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        detail: detail.into(),
    }
}

/// Checks that `p` lies in the closed unit interval.
pub(crate) fn check_probability(field: &'static str, p: f64) -> Result<()> {
    if p.is_finite() && (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, format!("{p} is not a probability")))
    }
}
