//! 48-bit phase-accumulator oscillator.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ACCUMULATOR_BITS: u32 = 48;
pub const ACCUMULATOR_MODULUS: u64 = 1 << ACCUMULATOR_BITS;
const ACCUMULATOR_MASK: u64 = ACCUMULATOR_MODULUS - 1;

const LUT_BITS: u32 = 16;

/// How the oscillator turns its phase word into cosine and sine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SineMode {
    /// Full double-precision evaluation of the 48-bit phase.
    #[default]
    Exact,
    /// Phase truncated to 16 bits and looked up in a table, as a fixed-point
    /// datapath would.
    Lut16,
}

/// Splits a finite non-negative double into `mantissa * 2^exponent`.
fn decompose(x: f64) -> (u64, i32) {
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    }
}

/// Tuning word `k` such that `k / 2^48 * f_clk` is the closest representable
/// frequency to `f_ref`. Evaluated exactly on the binary values of the inputs,
/// ties to even.
pub fn tuning_word(f_ref: f64, f_clk: f64) -> Result<u64> {
    if !(f_clk.is_finite() && f_clk > 0.0) {
        return Err(Error::out_of_range("f_clk", f_clk, "(0, inf)"));
    }
    if !(f_ref.is_finite() && f_ref >= 0.0 && f_ref < f_clk) {
        return Err(Error::out_of_range("f_ref", f_ref, format!("[0, {f_clk})")));
    }
    if f_ref == 0.0 {
        return Ok(0);
    }
    let (m_ref, e_ref) = decompose(f_ref);
    let (m_clk, e_clk) = decompose(f_clk);
    let shift = e_ref + ACCUMULATOR_BITS as i32 - e_clk;
    let mut num = BigUint::from(m_ref);
    let mut den = BigUint::from(m_clk);
    if shift >= 0 {
        num <<= shift as u32;
    } else {
        den <<= (-shift) as u32;
    }
    let mut q = &num / &den;
    let r2 = (&num % &den) << 1u32;
    if r2 > den || (r2 == den && (&q & BigUint::one()) != BigUint::zero()) {
        q += 1u32;
    }
    // f_ref < f_clk so q <= 2^48; a value that rounds up to a full turn wraps to 0.
    Ok(q.to_u64().expect("tuning word fits in 49 bits") & ACCUMULATOR_MASK)
}

fn sine_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = 1usize << LUT_BITS;
        (0..n).map(|i| (TAU * i as f64 / n as f64).sin()).collect()
    })
}

/// Numerically controlled oscillator with a 48-bit phase accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nco {
    accumulator: u64,
    tuning_word: u64,
    f_clk: f64,
    mode: SineMode,
}

impl Nco {
    pub fn new(tuning_word: u64, f_clk: f64) -> Self {
        Self {
            accumulator: 0,
            tuning_word: tuning_word & ACCUMULATOR_MASK,
            f_clk,
            mode: SineMode::Exact,
        }
    }

    pub fn with_frequency(f_ref: f64, f_clk: f64) -> Result<Self> {
        Ok(Self::new(tuning_word(f_ref, f_clk)?, f_clk))
    }

    pub fn with_mode(mut self, mode: SineMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_accumulator(mut self, accumulator: u64) -> Self {
        self.accumulator = accumulator & ACCUMULATOR_MASK;
        self
    }

    pub fn accumulator(&self) -> u64 {
        self.accumulator
    }

    pub fn tuning_word(&self) -> u64 {
        self.tuning_word
    }

    pub fn set_tuning_word(&mut self, k: u64) {
        self.tuning_word = k & ACCUMULATOR_MASK;
    }

    /// Mean output frequency, `k / 2^48 * f_clk`.
    pub fn frequency(&self) -> f64 {
        self.tuning_word as f64 / ACCUMULATOR_MODULUS as f64 * self.f_clk
    }

    /// Current phase in radians, `[0, 2pi)`.
    pub fn phase(&self) -> f64 {
        TAU * (self.accumulator as f64 / ACCUMULATOR_MODULUS as f64)
    }

    /// Cosine and sine of the current phase, without advancing.
    pub fn outputs(&self) -> (f64, f64) {
        match self.mode {
            SineMode::Exact => {
                let (s, c) = self.phase().sin_cos();
                (c, s)
            }
            SineMode::Lut16 => {
                let table = sine_table();
                let idx = (self.accumulator >> (ACCUMULATOR_BITS - LUT_BITS)) as usize;
                let quarter = 1usize << (LUT_BITS - 2);
                let mask = (1usize << LUT_BITS) - 1;
                (table[(idx + quarter) & mask], table[idx])
            }
        }
    }

    /// Emits cosine and sine of the current phase, then advances by `k`.
    pub fn step(&mut self) -> (f64, f64) {
        let out = self.outputs();
        self.accumulator = (self.accumulator + self.tuning_word) & ACCUMULATOR_MASK;
        out
    }

    /// Advances `n` samples at once; identical to calling [`Nco::step`] `n` times.
    pub fn advance(&mut self, n: u64) {
        let inc = (self.tuning_word as u128 * n as u128) & ACCUMULATOR_MASK as u128;
        self.accumulator = (self.accumulator + inc as u64) & ACCUMULATOR_MASK;
    }
}
