use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::GaussianStream;

/// What a system reports for one sample of stimulus.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Probe {
    /// The observed output (for a loop: the measured frequency, Hz).
    pub measurement: f64,
    /// The total signal at the stimulus summing node (controller output
    /// plus stimulus, V).
    pub drive: f64,
    pub saturated: bool,
}

/// A sample-synchronous system with a stimulus input at the controller
/// output summing node.
pub trait LoopUnderTest {
    fn fs(&self) -> f64;
    fn step(&mut self, stimulus: f64) -> Probe;
}

impl<T: LoopUnderTest + ?Sized> LoopUnderTest for Box<T> {
    fn fs(&self) -> f64 {
        (**self).fs()
    }

    fn step(&mut self, stimulus: f64) -> Probe {
        (**self).step(stimulus)
    }
}

/// Which ratio a sweep reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VnaMode {
    /// measurement / stimulus
    #[default]
    Transfer,
    /// drive / stimulus; in a closed loop this is the rejection `1/(1+L)`.
    Rejection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VnaSettings {
    pub amplitude: f64,
    pub settle_cycles: u32,
    pub cycles_per_point: u32,
    /// Samples run before the settle interval of every point.
    pub warmup_samples: u64,
    pub mode: VnaMode,
}

impl Default for VnaSettings {
    fn default() -> Self {
        Self {
            amplitude: 0.01,
            settle_cycles: 20,
            cycles_per_point: 100,
            warmup_samples: 0,
            mode: VnaMode::Transfer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnaResult {
    pub freqs: Vec<f64>,
    pub response: Vec<Complex64>,
    pub excitation_amplitude: f64,
    pub cycles_per_point: u32,
    /// Points during which the system reported saturation.
    pub saturated: Vec<bool>,
}

impl VnaResult {
    pub fn any_saturated(&self) -> bool {
        self.saturated.iter().any(|&s| s)
    }

    pub fn mag_db(&self) -> Vec<f64> {
        self.response.iter().map(|h| 20.0 * h.norm().log10()).collect()
    }

    /// Phase in degrees, unwrapped along the sweep.
    pub fn phase_deg_unwrapped(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.response.len());
        let mut prev: Option<f64> = None;
        for h in &self.response {
            let mut p = h.arg().to_degrees();
            if let Some(q) = prev {
                p -= 360.0 * ((p - q) / 360.0).round();
            }
            out.push(p);
            prev = Some(p);
        }
        out
    }
}

/// `n` logarithmically spaced frequencies from `start` to `stop` inclusive.
pub fn log_freqs(start: f64, stop: f64, n: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > start && start.is_finite() && stop.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad sweep range {start}..{stop}")));
    }
    if n < 2 {
        return Err(Error::out_of_range("points", n as f64, "[2, inf)"));
    }
    let ratio = (stop / start).ln() / (n - 1) as f64;
    Ok((0..n)
        .map(|k| if k == n - 1 { stop } else { start * (ratio * k as f64).exp() })
        .collect())
}

/// Swept-sine measurement of one point on a freshly built system.
pub fn measure_point<S: LoopUnderTest>(system: &mut S, f: f64, settings: &VnaSettings) -> (Complex64, bool) {
    let fs = system.fs();
    let w = TAU * f / fs;
    let amp = settings.amplitude;
    for _ in 0..settings.warmup_samples {
        system.step(0.0);
    }
    let per_cycle = fs / f;
    let settle = (settings.settle_cycles as f64 * per_cycle).ceil() as u64;
    let n = (settings.cycles_per_point as f64 * per_cycle).round().max(2.0) as u64;
    let mut saturated = false;
    for k in 0..settle {
        let p = system.step(amp * (w * k as f64).cos());
        saturated |= p.saturated;
    }
    // Hann-weighted lock-in keeps the image at -f from leaking into the
    // estimate when the record is not a whole number of cycles.
    let (mut z_stim, mut z_out) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for j in 0..n {
        let k = settle + j;
        let s = amp * (w * k as f64).cos();
        let p = system.step(s);
        saturated |= p.saturated;
        let win = 0.5 - 0.5 * (TAU * (j as f64 + 0.5) / n as f64).cos();
        let lo = Complex64::from_polar(win, -w * k as f64);
        let out = match settings.mode {
            VnaMode::Transfer => p.measurement,
            VnaMode::Rejection => p.drive,
        };
        z_stim += lo * s;
        z_out += lo * out;
    }
    (z_out / z_stim, saturated)
}

/// Measures the response at every frequency in `freqs`. Each point runs on
/// a new system from `factory(point_index)`, so points are independent and
/// the result does not depend on how many threads rayon uses.
pub fn vna_sweep<S, F>(factory: F, freqs: &[f64], settings: &VnaSettings) -> Result<VnaResult>
where
    S: LoopUnderTest,
    F: Fn(usize) -> Result<S> + Sync,
{
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("sweep frequencies must be strictly increasing".into()));
    }
    if !(settings.amplitude.is_finite() && settings.amplitude > 0.0) {
        return Err(Error::out_of_range("vna amplitude", settings.amplitude, "(0, inf)"));
    }
    if settings.cycles_per_point == 0 {
        return Err(Error::out_of_range("cycles_per_point", 0.0, "[1, inf)"));
    }
    let points: Vec<(Complex64, bool)> = freqs
        .par_iter()
        .enumerate()
        .map(|(i, &f)| {
            let mut sys = factory(i)?;
            let nyquist = sys.fs() / 2.0;
            if !(f > 0.0 && f < nyquist) {
                return Err(Error::out_of_range("vna frequency", f, format!("(0, {nyquist})")));
            }
            Ok(measure_point(&mut sys, f, settings))
        })
        .collect::<Result<_>>()?;
    Ok(VnaResult {
        freqs: freqs.to_vec(),
        response: points.iter().map(|p| p.0).collect(),
        excitation_amplitude: settings.amplitude,
        cycles_per_point: settings.cycles_per_point,
        saturated: points.iter().map(|p| p.1).collect(),
    })
}

/// A memoryless gain followed by an integer delay, with optional white
/// measurement noise. Used to characterize the instruments themselves.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    fs: f64,
    gain: f64,
    history: Vec<f64>,
    pos: usize,
    noise_sigma: f64,
    noise: GaussianStream,
    limit: f64,
}

impl LinearPlant {
    pub fn new(fs: f64, gain: f64, delay: usize) -> Self {
        Self {
            fs,
            gain,
            history: vec![0.0; delay + 1],
            pos: 0,
            noise_sigma: 0.0,
            noise: GaussianStream::new(0),
            limit: f64::INFINITY,
        }
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.noise = GaussianStream::new(seed);
        self
    }

    /// Drive level above which the plant reports saturation.
    pub fn with_limit(mut self, limit: f64) -> Self {
        self.limit = limit;
        self
    }

    pub fn response(&self, f: f64) -> Complex64 {
        Complex64::from_polar(self.gain, -TAU * f / self.fs * (self.history.len() - 1) as f64)
    }
}

impl LoopUnderTest for LinearPlant {
    fn fs(&self) -> f64 {
        self.fs
    }

    fn step(&mut self, stimulus: f64) -> Probe {
        let len = self.history.len();
        self.history[self.pos] = stimulus;
        let oldest = self.history[(self.pos + 1) % len];
        self.pos = (self.pos + 1) % len;
        let noise = if self.noise_sigma > 0.0 {
            self.noise_sigma * self.noise.next_standard()
        } else {
            0.0
        };
        Probe {
            measurement: self.gain * oldest + noise,
            drive: stimulus,
            saturated: stimulus.abs() > self.limit,
        }
    }
}
