use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the input stream to [`psd_estimate`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdKind {
    /// Phase samples, rad.
    Phase,
    /// Frequency samples, Hz.
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdResult {
    /// Bin frequencies, DC excluded.
    pub freqs: Vec<f64>,
    pub phase_psd: Vec<f64>,
    pub freq_psd: Vec<f64>,
    /// `sqrt` of the phase PSD integrated from the top bin down to each bin.
    pub integrated_phase: Vec<f64>,
    pub segment_count: usize,
}

impl PsdResult {
    /// Integral of the PSD of the input kind over all bins (its variance).
    pub fn total_power(&self, kind: PsdKind) -> f64 {
        let df = self.freqs.first().copied().unwrap_or(0.0);
        match kind {
            PsdKind::Phase => self.phase_psd.iter().sum::<f64>() * df,
            PsdKind::Frequency => self.freq_psd.iter().sum::<f64>() * df,
        }
    }
}

/// Welch estimate: Hann window, 50% overlap, mean removed per segment,
/// one-sided density.
pub fn psd_estimate(stream: &[f64], fs: f64, segment_length: usize, kind: PsdKind) -> Result<PsdResult> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::out_of_range("fs", fs, "(0, inf)"));
    }
    if segment_length < 4 {
        return Err(Error::out_of_range("segment_length", segment_length as f64, "[4, inf)"));
    }
    if stream.len() < 2 * segment_length {
        return Err(Error::StreamTooShort {
            needed: 2 * segment_length,
            got: stream.len(),
        });
    }
    if stream.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("psd input"));
    }
    let n = segment_length;
    let hop = n / 2;
    let window: Vec<f64> = (0..n).map(|k| 0.5 - 0.5 * (TAU * k as f64 / n as f64).cos()).collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let bins = n / 2;
    let mut acc = vec![0.0; bins + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut segments = 0;
    let mut start = 0;
    while start + n <= stream.len() {
        let seg = &stream[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (fs * wss * segments as f64);
    let df = fs / n as f64;
    let mut freqs = Vec::with_capacity(bins);
    let mut input_psd = Vec::with_capacity(bins);
    for (k, a) in acc.iter().enumerate().skip(1) {
        let one_sided = if k == bins && n % 2 == 0 { 1.0 } else { 2.0 };
        freqs.push(k as f64 * df);
        input_psd.push(a * scale * one_sided);
    }
    let (phase_psd, freq_psd): (Vec<f64>, Vec<f64>) = match kind {
        PsdKind::Phase => {
            let fr = freqs.iter().zip(&input_psd).map(|(f, s)| s * f * f).collect();
            (input_psd, fr)
        }
        PsdKind::Frequency => {
            let ph = freqs.iter().zip(&input_psd).map(|(f, s)| s / (f * f)).collect();
            (ph, input_psd)
        }
    };
    let mut integrated_phase = vec![0.0; phase_psd.len()];
    let mut running = 0.0;
    for k in (0..phase_psd.len()).rev() {
        running += phase_psd[k] * df;
        integrated_phase[k] = running.sqrt();
    }
    Ok(PsdResult {
        freqs,
        phase_psd,
        freq_psd,
        integrated_phase,
        segment_count: segments,
    })
}

/// Least-squares slope of `10 log10(psd)` against `log10(f)` over
/// `[f_lo, f_hi]`, dB per decade.
pub fn psd_slope_db_per_decade(r: &PsdResult, psd: &[f64], f_lo: f64, f_hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = r
        .freqs
        .iter()
        .zip(psd)
        .filter(|(f, s)| **f >= f_lo && **f <= f_hi && **s > 0.0)
        .map(|(f, s)| (f.log10(), 10.0 * s.log10()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
