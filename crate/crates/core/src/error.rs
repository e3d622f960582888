use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("prior precision must be positive and finite, got {0}")]
    NonPositivePriorPrecision(f64),
    #[error("coordination weight gamma must be positive and finite, got {0}")]
    NonPositiveGamma(f64),
    #[error("signal precision of agent {agent} must be positive and finite, got {value}")]
    NonPositiveSignalPrecision { agent: usize, value: f64 },
    #[error("need at least one agent")]
    NoAgents,
    #[error("cost schedule has {got} entries, expected one per degree 0..{agents} ({agents} entries)")]
    CostLength { got: usize, agents: usize },
    #[error("cost schedule must start at c(0) = 0, got {0}")]
    NonZeroBaseCost(f64),
    #[error("cost entry c({degree}) is not finite")]
    NonFiniteCost { degree: usize },
    #[error("cost schedule decreases between degree {degree} and {}", degree + 1)]
    DecreasingCost { degree: usize },
    #[error("marginal link cost falls between degree {degree} and {}", degree + 1)]
    NonConvexCost { degree: usize },

    #[error("agent {agent} is out of range for {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("agent set is empty")]
    EmptySubset,
    #[error("dimension mismatch: {what} has size {got}, expected {expected}")]
    DimensionMismatch { what: &'static str, got: usize, expected: usize },
    #[error("coefficient b[{agent}][{signal}] is non-zero outside the closed neighborhood")]
    SupportViolation { agent: usize, signal: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("fixed-point iteration did not reach tolerance within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("sender {0} has no neighbors")]
    IsolatedSender(usize),
    #[error("strategy profile is not an equilibrium (FOC residual {residual:e})")]
    NotAnEquilibrium { residual: f64 },

    #[error("{what} requires n <= {limit}, got {n}")]
    GuardExceeded { what: &'static str, n: usize, limit: usize },
    #[error("kappa region requires h >= l > 0 and sigma_theta > 0 (h = {h}, l = {l}, sigma_theta = {sigma_theta})")]
    KappaOrdering { h: f64, l: f64, sigma_theta: f64 },
    #[error("sample count must be at least 1")]
    ZeroSamples,
}
