//! Built-in measurement instruments.

mod counter;
mod dither;
mod psd;
mod vna;

pub use counter::{counter_update, CounterRecord, CounterState};
pub use dither::{dither_estimate, DitherEstimate, DitherModule};
pub use psd::{psd_estimate, psd_slope_db_per_decade, PsdKind, PsdResult};
pub use vna::{log_freqs, measure_point, vna_sweep, LinearPlant, LoopUnderTest, Probe, VnaMode, VnaResult, VnaSettings};
