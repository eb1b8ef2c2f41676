use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("field contains a non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("fields live on different domains")]
    DomainMismatch,

    #[error("operation requires a radial domain")]
    RadialOnly,

    #[error("degenerate metric: conformal factor {value} at node {node}")]
    DegenerateMetric { node: usize, value: f64 },

    #[error("geodesic radius {requested} lies outside the chart (max {available})")]
    OutOfChart { requested: f64, available: f64 },

    #[error("Green kernel evaluated on the diagonal (d = {0})")]
    Singularity(f64),

    #[error("divergent potential: {0}")]
    DivergentPotential(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("flow degenerated at t = {t} after {rejections} step rejections")]
    FlowDegeneracy { t: f64, rejections: usize },

    #[error("step budget of {steps} exhausted at t = {t}")]
    StepBudget { t: f64, steps: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time must be positive, got {0}")]
    InvalidTime(f64),

    #[error("candidate is not a solution: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    NotASolution { residual: f64, tolerance: f64 },

    #[error("insufficient horizon: trajectory ends at t = {t_end}, need at least {required}")]
    InsufficientHorizon { t_end: f64, required: f64 },
}
