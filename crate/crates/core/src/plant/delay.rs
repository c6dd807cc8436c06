use serde::{Deserialize, Serialize};

/// Integer-sample delay line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayLine {
    buf: Vec<f64>,
    pos: usize,
}

impl DelayLine {
    pub fn new(delay: usize) -> Self {
        Self {
            buf: vec![0.0; delay],
            pos: 0,
        }
    }

    /// Delay rounded to the nearest whole sample.
    pub fn from_seconds(tau: f64, fs: f64) -> Self {
        Self::new((tau * fs).round().max(0.0) as usize)
    }

    pub fn delay(&self) -> usize {
        self.buf.len()
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        if self.buf.is_empty() {
            return x;
        }
        let y = std::mem::replace(&mut self.buf[self.pos], x);
        self.pos += 1;
        if self.pos == self.buf.len() {
            self.pos = 0;
        }
        y
    }
}

/// Sparse FIR made of weighted, integer-sample delayed copies of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapDelay {
    taps: Vec<(usize, f64)>,
    history: Vec<f64>,
    pos: usize,
}

impl TapDelay {
    pub fn new(taps: Vec<(usize, f64)>) -> Self {
        let len = taps.iter().map(|&(d, _)| d).max().unwrap_or(0) + 1;
        Self {
            taps,
            history: vec![0.0; len],
            pos: 0,
        }
    }

    pub fn taps(&self) -> &[(usize, f64)] {
        &self.taps
    }

    /// Pushes `x` as the newest sample and returns the weighted sum.
    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let len = self.history.len();
        self.history[self.pos] = x;
        let mut y = 0.0;
        for &(d, w) in &self.taps {
            let idx = if self.pos >= d { self.pos - d } else { self.pos + len - d };
            y += w * self.history[idx];
        }
        self.pos += 1;
        if self.pos == len {
            self.pos = 0;
        }
        y
    }

    /// Frequency response at `f_over_fs`.
    pub fn response(&self, f_over_fs: f64) -> num_complex::Complex64 {
        self.taps
            .iter()
            .map(|&(d, w)| num_complex::Complex64::from_polar(w, -std::f64::consts::TAU * f_over_fs * d as f64))
            .sum()
    }
}
