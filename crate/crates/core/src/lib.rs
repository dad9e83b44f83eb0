//! Deterministic simulator of an edge-hosted multi-view 3D reconstruction
//! system with learned camera-subset and server selection.
//!
//! The pieces, bottom-up:
//! - [`disruption`]: correlated camera outages and server latency spikes.
//! - [`environment`]: quality and latency of one frame for a given choice.
//! - [`metrics`]: rewards, the reliability predicate, run statistics.
//! - [`policies`]: Q-learning agents and baselines.
//! - [`controller`]: the online loop and experiment grids.
//! - [`reporting`]: comparison tables and plot-ready data.

pub mod controller;
pub mod disruption;
pub mod environment;
pub mod error;
pub mod metrics;
pub mod policies;
pub mod reporting;
pub mod rng;

pub use controller::{run_episode, run_grid, Episode, ExperimentConfig};
pub use disruption::{DisruptionParams, Traces};
pub use environment::{CameraMask, Environment, FrameOutcome};
pub use error::{Error, Result};
pub use metrics::{FrameRecord, RewardWeights, RunStats, Thresholds};
pub use policies::{CameraPolicyKind, ServerPolicyKind};
