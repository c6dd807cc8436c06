//! Fourth-order Butterworth low-pass used on the I/Q branches.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Selectable I/Q low-pass bandwidth. Cutoffs are quoted for a 125 MS/s
/// clock and scale with the sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpfSelect {
    /// 3.75 MHz at 125 MS/s.
    Narrow,
    /// 15.5 MHz at 125 MS/s.
    Medium,
    /// 31 MHz at 125 MS/s.
    #[default]
    Wide,
}

impl LpfSelect {
    pub const ALL: [LpfSelect; 3] = [LpfSelect::Narrow, LpfSelect::Medium, LpfSelect::Wide];

    /// Cutoff as a fraction of the sample rate.
    pub fn normalized_cutoff(self) -> f64 {
        match self {
            LpfSelect::Narrow => 3.75 / 125.0,
            LpfSelect::Medium => 15.5 / 125.0,
            LpfSelect::Wide => 31.0 / 125.0,
        }
    }

    pub fn cutoff_hz(self, fs: f64) -> f64 {
        self.normalized_cutoff() * fs
    }

    pub fn name(self) -> &'static str {
        match self {
            LpfSelect::Narrow => "narrow",
            LpfSelect::Medium => "medium",
            LpfSelect::Wide => "wide",
        }
    }
}

/// Direct-form-I biquad coefficients, `a0` normalized to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Low-pass section with quality factor `q`, bilinear transform
    /// pre-warped so that the analog cutoff lands at `fc`.
    pub fn lowpass(fc_over_fs: f64, q: f64) -> Self {
        let k = (PI * fc_over_fs).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + k / q + k2);
        let b0 = k2 * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - k / q + k2) * norm],
        }
    }

    pub fn response(&self, f_over_fs: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f_over_fs);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }

    /// Group delay in samples at DC.
    pub fn dc_group_delay(&self) -> f64 {
        let bsum: f64 = self.b.iter().sum();
        let bmom = self.b[1] + 2.0 * self.b[2];
        let asum = 1.0 + self.a[0] + self.a[1];
        let amom = self.a[0] + 2.0 * self.a[1];
        bmom / bsum - amom / asum
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct BiquadState {
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BiquadState {
    #[inline]
    fn step(&mut self, c: &Biquad, x: f64) -> f64 {
        let y = c.b[0] * x + c.b[1] * self.x1 + c.b[2] * self.x2 - c.a[0] * self.y1 - c.a[1] * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Butterworth pole-pair quality factors for order 4.
const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_5];

/// Two cascaded biquads forming a 4th-order Butterworth low-pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lowpass4 {
    sections: [Biquad; 2],
    state: [BiquadState; 2],
}

impl Lowpass4 {
    pub fn new(fc_over_fs: f64) -> Self {
        Self {
            sections: BUTTERWORTH4_Q.map(|q| Biquad::lowpass(fc_over_fs, q)),
            state: Default::default(),
        }
    }

    pub fn from_select(sel: LpfSelect) -> Self {
        Self::new(sel.normalized_cutoff())
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.state[0].step(&self.sections[0], x);
        self.state[1].step(&self.sections[1], y)
    }

    pub fn reset(&mut self) {
        self.state = Default::default();
    }

    /// Settles the internal state as if `x` had been applied forever.
    pub fn prime(&mut self, x: f64) {
        for st in &mut self.state {
            *st = BiquadState {
                x1: x,
                x2: x,
                y1: x,
                y2: x,
            };
        }
    }

    pub fn response(&self, f_over_fs: f64) -> Complex64 {
        self.sections.iter().map(|s| s.response(f_over_fs)).product()
    }

    pub fn dc_group_delay(&self) -> f64 {
        self.sections.iter().map(Biquad::dc_group_delay).sum()
    }
}
