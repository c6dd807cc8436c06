use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterRecord {
    pub gate_index: u64,
    /// Mean frequency over the gate, Hz.
    pub mean_freq: f64,
    pub gate_time: f64,
    /// Sum of the phase increments in the gate, rad.
    pub phase_sum: f64,
}

/// Gate accumulator of the zero dead-time counter. Every increment lands in
/// exactly one gate; gates are `gate_samples` long and back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterState {
    fs: f64,
    gate_samples: u64,
    compensated: bool,
    in_gate: u64,
    sum: f64,
    carry: f64,
    next_gate: u64,
}

impl CounterState {
    pub fn new(fs: f64, gate_time: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::out_of_range("fs", fs, "(0, inf)"));
        }
        let gate_samples = (gate_time * fs).round();
        if gate_samples.is_nan() || gate_samples < 1.0 {
            return Err(Error::out_of_range("gate_time", gate_time, format!("[{}, inf)", 1.0 / fs)));
        }
        Ok(Self {
            fs,
            gate_samples: gate_samples as u64,
            compensated: true,
            in_gate: 0,
            sum: 0.0,
            carry: 0.0,
            next_gate: 0,
        })
    }

    /// Neumaier-compensated summation within a gate (on by default).
    pub fn with_compensation(mut self, on: bool) -> Self {
        self.compensated = on;
        self
    }

    pub fn gate_samples(&self) -> u64 {
        self.gate_samples
    }

    /// Gate length actually used, `gate_samples / fs`.
    pub fn gate_time(&self) -> f64 {
        self.gate_samples as f64 / self.fs
    }

    /// Samples accumulated in the open gate.
    pub fn pending(&self) -> u64 {
        self.in_gate
    }

    #[inline]
    pub fn push(&mut self, increment: f64) -> Option<CounterRecord> {
        if self.compensated {
            let t = self.sum + increment;
            if self.sum.abs() >= increment.abs() {
                self.carry += (self.sum - t) + increment;
            } else {
                self.carry += (increment - t) + self.sum;
            }
            self.sum = t;
        } else {
            self.sum += increment;
        }
        self.in_gate += 1;
        if self.in_gate < self.gate_samples {
            return None;
        }
        let phase_sum = self.sum + self.carry;
        let gate_time = self.gate_time();
        let rec = CounterRecord {
            gate_index: self.next_gate,
            mean_freq: phase_sum / (TAU * gate_time),
            gate_time,
            phase_sum,
        };
        self.next_gate += 1;
        self.in_gate = 0;
        self.sum = 0.0;
        self.carry = 0.0;
        Some(rec)
    }
}

/// Feeds a contiguous block of phase increments (rad/sample) and returns the
/// gates that closed within it.
pub fn counter_update(state: &mut CounterState, increments: &[f64]) -> Vec<CounterRecord> {
    increments.iter().filter_map(|&x| state.push(x)).collect()
}
