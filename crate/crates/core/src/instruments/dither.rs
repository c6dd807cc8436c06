use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::vna::LoopUnderTest;
use crate::error::{Error, Result};

/// Square-wave generator with a whole number of samples per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DitherModule {
    amplitude: f64,
    period: u64,
    index: u64,
    fs: f64,
}

impl DitherModule {
    pub fn new(fs: f64, freq: f64, amplitude: f64) -> Result<Self> {
        if !(freq > 0.0 && freq < fs / 4.0) {
            return Err(Error::out_of_range("dither frequency", freq, format!("(0, {})", fs / 4.0)));
        }
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::out_of_range("dither amplitude", amplitude, "[0, inf)"));
        }
        Ok(Self {
            amplitude,
            period: (fs / freq).round() as u64,
            index: 0,
            fs,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// Actual output frequency, `fs / period`.
    pub fn frequency(&self) -> f64 {
        self.fs / self.period as f64
    }

    /// Position within the current period.
    pub fn index(&self) -> u64 {
        self.index
    }

    #[inline]
    pub fn next_value(&mut self) -> f64 {
        let v = if 2 * self.index < self.period { self.amplitude } else { -self.amplitude };
        self.index += 1;
        if self.index == self.period {
            self.index = 0;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DitherEstimate {
    /// Signed gain from drive to measurement, Hz/V.
    pub gain: f64,
    /// Relative standard error of `gain`.
    pub confidence: f64,
    pub dither_freq: f64,
    pub dither_amplitude: f64,
}

impl DitherEstimate {
    pub const RELIABLE_BELOW: f64 = 0.1;

    pub fn reliable(&self) -> bool {
        self.confidence < Self::RELIABLE_BELOW
    }
}

const BLOCKS: u64 = 16;

fn signed_gain(z_meas: Complex64, z_drive: Complex64) -> f64 {
    let r = z_meas / z_drive;
    if r.re < 0.0 {
        -r.norm()
    } else {
        r.norm()
    }
}

/// Adds a square wave at the stimulus node of `system`, locks in to the
/// fundamental of both the measurement and the total drive, and reports
/// their ratio. The magnitude of the ratio carries the gain; the sign of its
/// in-phase part carries the polarity. Two periods are discarded first.
pub fn dither_estimate<S: LoopUnderTest>(
    system: &mut S,
    dither_freq: f64,
    dither_amplitude: f64,
    duration: f64,
) -> Result<DitherEstimate> {
    let fs = system.fs();
    let mut gen = DitherModule::new(fs, dither_freq, dither_amplitude)?;
    if dither_amplitude == 0.0 {
        return Err(Error::out_of_range("dither amplitude", 0.0, "(0, inf)"));
    }
    let period = gen.period();
    let periods = (duration * fs / period as f64).floor() as u64;
    if periods < BLOCKS {
        return Err(Error::StreamTooShort {
            needed: (BLOCKS * period) as usize,
            got: (duration * fs) as usize,
        });
    }
    for _ in 0..2 * period {
        system.step(gen.next_value());
    }
    let w = TAU / period as f64;
    let per_block = periods / BLOCKS;
    let mut blocks = Vec::with_capacity(BLOCKS as usize);
    let (mut zm_all, mut zd_all) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for _ in 0..BLOCKS {
        let (mut zm, mut zd) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for _ in 0..per_block * period {
            let k = gen.index();
            let p = system.step(gen.next_value());
            let lo = Complex64::from_polar(1.0, -w * k as f64);
            zm += lo * p.measurement;
            zd += lo * p.drive;
        }
        blocks.push(signed_gain(zm, zd));
        zm_all += zm;
        zd_all += zd;
    }
    let gain = signed_gain(zm_all, zd_all);
    let n = blocks.len() as f64;
    let mean = blocks.iter().sum::<f64>() / n;
    let var = blocks.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let confidence = if gain == 0.0 { f64::INFINITY } else { se / gain.abs() };
    Ok(DitherEstimate {
        gain,
        confidence,
        dither_freq: gen.frequency(),
        dither_amplitude,
    })
}
