//! Discrete-event simulation of a single downlink cell.

pub mod engine;
pub mod metrics;
pub mod traffic;
pub mod verify;

pub use engine::{
    simulate, ChannelSettings, EventKind, EventRecord, FrameRecord, LagSummary, RunTrace,
    SimOptions, SimOutput, Workload,
};
pub use metrics::{fairness_metric, FlowStats, Metrics};
pub use traffic::{LeakyBucket, TrafficModel};
pub use verify::{verify_bounds, BoundCheck, BoundReport};

/// RNG stream carrying the arrival processes.
pub const TRAFFIC_STREAM: u64 = 1;
/// RNG stream carrying packet error outcomes.
pub const OUTCOME_STREAM: u64 = 2;
