//! Sample-synchronous simulation of a digital phase-locked loop: NCO
//! demodulation, phase extraction, a PII²D loop filter and VCO/DAC
//! actuation, wrapped around a delayed plant model, with the instruments
//! used to characterize it.

pub mod dsp;
pub mod engine;
pub mod error;
pub mod export;
pub mod instruments;
pub mod loop_filter;
pub mod numerics;
pub mod plant;

pub use engine::{ChannelConfig, Engine, LoopGains, RoutingConfig, Scenario, SimConfig, SimTrace, TestPoint};
pub use error::{Error, Result};
pub use instruments::{CounterRecord, DitherEstimate, PsdResult, VnaResult};
pub use loop_filter::{GainSet, LoopFilterConfig};
pub use plant::{LinkModel, NoiseKind, NoiseSpec};
