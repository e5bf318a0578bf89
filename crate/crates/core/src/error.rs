use thiserror::Error;

use crate::positive::Mode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{field}: {constraint} violated")]
    Invariant {
        field: &'static str,
        constraint: String,
    },
    #[error("non-physical porosity in region {region} (eps = {value})")]
    Porosity { region: &'static str, value: f64 },
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid identification setup: {0}")]
    Bounds(String),
}

impl ConfigError {
    pub(crate) fn invariant(field: &'static str, constraint: impl Into<String>) -> Self {
        ConfigError::Invariant {
            field,
            constraint: constraint.into(),
        }
    }
}

/// Failures of the pointwise model relations (correlations, kinetics, remaps).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("correlation out of domain: {0}")]
    OutOfDomain(String),
    #[error("non-finite rhs in {block} at index {index}")]
    NonFinite { block: &'static str, index: usize },
    #[error("zero conductivity in region {0}")]
    ZeroConductivity(&'static str),
    #[error("non-positive electrolyte concentration at the {0} collector")]
    BoundaryConcentration(&'static str),
    #[error("{electrode} stoichiometry {value} outside (0, 1)")]
    Stoichiometry { electrode: &'static str, value: f64 },
    #[error("zero exchange current density at the {0} electrode")]
    ZeroExchangeCurrent(&'static str),
    #[error("singular shell: r_p = {r_p:e} m is not below R_p = {radius:e} m")]
    SingularShell { r_p: f64, radius: f64 },
    #[error("initial boundary offset must be positive")]
    ZeroOffset,
    #[error("cannot leave two-phase regime: r_p / R_p = {0} above threshold")]
    ExitGuard(f64),
    #[error("lithium renormalization factor {0} outside 1 +/- 1e-3")]
    Renormalization(f64),
    #[error("ambiguous phase: theta_p = {0} lies inside the two-phase plateau")]
    AmbiguousPhase(f64),
    #[error("invalid state of charge {0}")]
    InvalidSoc(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step size collapsed at t = {t:.6} s in regime {regime:?}")]
    StepCollapse { t: f64, regime: Mode },
    #[error("saturation at t = {t:.3} s in regime {regime:?}: {source}")]
    Saturation {
        t: f64,
        regime: Mode,
        #[source]
        source: ModelError,
    },
    #[error("current sign reversal at t = {t:.3} s inside the two-phase regime")]
    SignReversal { t: f64 },
    #[error("invalid current profile: {0}")]
    Profile(String),
}
