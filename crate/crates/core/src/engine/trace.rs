use serde::{Deserialize, Serialize};

use super::config::{SimConfig, TestPoint};
use super::sim::{ChannelSample, Engine};
use crate::error::{Error, Result};
use crate::instruments::CounterRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub fs: f64,
    pub duration: u64,
    pub seeds: Vec<u64>,
    pub version: String,
    pub config: SimConfig,
}

/// Recorded test points of a finished run. Every series has `duration`
/// samples on the same time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub meta: TraceMeta,
    pub testpoints: Vec<TestPoint>,
    /// `series[channel][testpoint]`
    pub series: Vec<Vec<Vec<f64>>>,
    /// Closed counter gates per channel.
    pub counter: Vec<Vec<CounterRecord>>,
}

impl SimTrace {
    pub fn get(&self, channel: usize, tp: TestPoint) -> Option<&[f64]> {
        let idx = self.testpoints.iter().position(|&t| t == tp)?;
        self.series.get(channel).map(|s| s[idx].as_slice())
    }

    pub fn len(&self) -> usize {
        self.meta.duration as usize
    }

    pub fn is_empty(&self) -> bool {
        self.meta.duration == 0
    }
}

fn value(s: &ChannelSample, tp: TestPoint) -> f64 {
    match tp {
        TestPoint::AdcIn => s.adc_in,
        TestPoint::I => s.i,
        TestPoint::Q => s.q,
        TestPoint::Phase => s.phase,
        TestPoint::PhaseIncrement => s.phase_increment,
        TestPoint::FilterOut => s.filter_out,
        TestPoint::DacOut => s.dac_out,
    }
}

/// Runs `cfg.duration` samples and records the configured test points.
pub fn run(cfg: &SimConfig) -> Result<SimTrace> {
    if cfg.duration == 0 {
        return Err(Error::out_of_range("duration", 0.0, "[1, inf)"));
    }
    let mut engine = Engine::new(cfg.clone())?;
    let testpoints: Vec<TestPoint> = cfg.recorded_testpoints.iter().copied().collect();
    let n = cfg.duration as usize;
    let nch = engine.channel_count();
    let mut series = vec![vec![Vec::with_capacity(n); testpoints.len()]; nch];
    let mut counter = vec![Vec::new(); nch];
    for _ in 0..n {
        engine.step();
        for (k, per_channel) in series.iter_mut().enumerate() {
            let s = engine.last(k);
            for (buf, &tp) in per_channel.iter_mut().zip(&testpoints) {
                buf.push(value(s, tp));
            }
        }
        for (k, rec) in engine.take_counter_records() {
            counter[k].push(rec);
        }
    }
    Ok(SimTrace {
        meta: TraceMeta {
            fs: cfg.fs,
            duration: cfg.duration,
            seeds: cfg.noise.iter().map(|n| n.seed).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
        },
        testpoints,
        series,
        counter,
    })
}
