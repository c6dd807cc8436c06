//! Closed-loop simulation: channel routing, the sample loop, recorded
//! traces and the analytic loop functions.

mod analysis;
mod config;
mod sim;
mod trace;

pub use analysis::{
    closed_loop_prediction, max_bandwidth, phase_margin, quarter_pi_tuning, ClosedLoopPrediction, InjectionPoint,
};
pub use config::{
    splitmix64, ChannelConfig, DitherSettings, LoopGains, RoutingConfig, Scenario, SimConfig, TestPoint,
};
pub use sim::{pipeline_latency, ChannelSample, Engine};
pub use trace::{run, SimTrace, TraceMeta};

use crate::error::Result;

/// Validates `cfg` and builds the engine wired for its routing scenario.
pub fn configure_routing(cfg: SimConfig) -> Result<Engine> {
    Engine::new(cfg)
}
