use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("parallel edge between {0} and {1}")]
    ParallelEdge(usize, usize),
    #[error("source node {0} is not alive")]
    DeadSource(usize),
    #[error("line {line}: reactance must be finite and positive, got {reactance}")]
    InvalidReactance { line: usize, reactance: f64 },
    #[error("bus {bus}: injection {injection} is not allowed for a {role}")]
    InjectionRole {
        bus: usize,
        role: &'static str,
        injection: f64,
    },
    #[error("island {island}: injections sum to {imbalance}, expected a balanced island")]
    Unbalanced { island: usize, imbalance: f64 },
    #[error("island {island}: singular reduced Laplacian")]
    SingularSystem { island: usize },
    #[error("island {island}: node-balance residual {residual:e} exceeds tolerance")]
    Residual { island: usize, residual: f64 },
    #[error("line {0} has no capacity assigned")]
    MissingCapacity(usize),
    #[error("cascade round {round}: {source}")]
    Cascade { round: usize, source: Box<Error> },
    #[error("total load is zero")]
    ZeroLoad,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("coupling: {0}")]
    InvalidCoupling(String),
    #[error("linear program: {0}")]
    InvalidProgram(String),
    #[error("LP solver returned {0:?}")]
    Solver(LpStatus),
}
