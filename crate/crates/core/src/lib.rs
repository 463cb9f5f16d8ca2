//! Estimating how many nodes are alive in an anonymous wireless network.
//!
//! Nodes are dropped uniformly at random into a rectangular field and can talk
//! to every node within a fixed radius. They run a randomized gossip protocol:
//! each round, every node that broadcast in the previous round is heard by its
//! neighbors (subject to independent erasures), heard packets are merged, and
//! each node then decides to broadcast with a self-adjusting probability. A
//! data collector later queries `K` of the possible node IDs and counts the
//! distinct IDs in the union of the returned packets. From that count a family
//! of linear estimators recovers the number of alive nodes.
//!
//! The crate is split by concern:
//! - [`geometry`]: fields, node placement, neighbor and multi-hop ball queries;
//! - [`protocol`]: the three-phase gossip simulator itself;
//! - [`estimation`]: querying a simulation and turning counts into estimates;
//! - [`analysis`]: Monte Carlo drivers, parameter sweeps, an exhaustive
//!   small-instance oracle, and paired-seed comparisons;
//! - [`rng`]: named deterministic substreams so every component of a trial is
//!   independently reproducible.

pub mod analysis;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod protocol;
pub mod rng;

pub use analysis::{
    empirical_alpha_product, exhaustive_expectation, min_queried_for_coverage,
    monte_carlo_expectation, run_trial_outcomes, run_trials, run_trials_detailed, summarize, sweep,
    sweep_queried_vs_estimated, time_to_coverage, trace_trial, trial_seed, CoverageMetric,
    ExactExpectation, MinQueriedPoint, Summary, SweepOverride, SweepResult, TimeToCoveragePoint,
    TrialConfig, TrialOutcome,
};
pub use error::{Error, Result};
pub use estimation::{
    alpha0, alpha1, blue_estimate, estimate_size, estimator_variance, fisher_information,
    max_bernoulli_param, query, reconstruct_topology, EstimateParams, EstimateReport, QueryResult,
    Regime, ReportRow, TopologyEstimate,
};
pub use geometry::{
    expected_ball_increment, generate_network, DistanceMode, FieldConfig, Network, NodeId, Point,
};
pub use protocol::{init, Erasure, NodeState, Packet, ProtocolConfig, SimState, TraceRecord};
pub use rng::{substream, Stream};
