use crate::geometry::NodeId;
use thiserror::Error;

/// Errors shared by the simulator, the estimators, and the analysis drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration value violates its documented range or a cross-field
    /// constraint (for example `n > n_max`).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// An operation addressed a node ID that is not alive in the network.
    #[error("node {0} is not alive")]
    NotAlive(NodeId),
    /// An argument is outside the domain of the requested computation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The operation needs state the caller has not produced (for example
    /// topology reconstruction without coordinate-carrying packets).
    #[error("invalid state: {0}")]
    InvalidState(String),
    /// Exhaustive enumeration refused to run because the joint outcome space
    /// is too large; the message reports the size that was hit.
    #[error("outcome space too large: {0}")]
    OutcomeSpaceTooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
