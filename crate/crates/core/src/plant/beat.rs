use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::delay::TapDelay;
use super::noise::{NoiseKind, NoiseSource, NoiseSpec};
use crate::dsp::Nco;
use crate::error::{Error, Result};
use crate::numerics::{quantize_flagged, wrap_phase_unchecked, FixedFormat};

/// Signed input converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcModel {
    pub bits: u32,
    /// Input range is `[-full_scale, full_scale)`, V.
    pub full_scale: f64,
    /// Pass samples through unquantized and unclipped.
    pub ideal: bool,
}

impl Default for AdcModel {
    fn default() -> Self {
        Self {
            bits: 14,
            full_scale: 1.0,
            ideal: false,
        }
    }
}

impl AdcModel {
    fn format(&self) -> Result<FixedFormat> {
        FixedFormat::signed_full_scale(self.bits, self.full_scale)
    }

    /// Converted value and whether it clipped.
    #[inline]
    pub fn convert(&self, x: f64, fmt: &FixedFormat) -> (f64, bool) {
        if self.ideal {
            return (x, false);
        }
        let (code, clipped) = quantize_flagged(x, fmt);
        (fmt.to_value(code), clipped)
    }
}

/// One synthesized and digitized beat sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatSample {
    /// ADC output, V.
    pub x: f64,
    /// Beat phase relative to the carrier, including white phase noise,
    /// wrapped to `[-pi, pi)`.
    pub phase: f64,
    pub clipped: bool,
}

/// The optical beat note seen by the ADC: a carrier at `carrier_hz` whose
/// phase accumulates a constant offset, frequency noise and the delayed
/// actuator corrections.
#[derive(Debug, Clone)]
pub struct BeatPlant {
    fs: f64,
    amplitude: f64,
    offset_hz: f64,
    carrier: Nco,
    phi_dev: f64,
    phase_total: f64,
    taps: TapDelay,
    freq_noise: Vec<NoiseSource>,
    phase_noise: Vec<NoiseSource>,
    adc_noise: Vec<NoiseSource>,
    adc: AdcModel,
    adc_format: FixedFormat,
    last_freq_hz: f64,
}

impl BeatPlant {
    pub fn new(
        fs: f64,
        carrier_hz: f64,
        amplitude: f64,
        taps: Vec<(usize, f64)>,
        noise: &[NoiseSpec],
        adc: AdcModel,
    ) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::out_of_range("beat amplitude", amplitude, "(0, inf)"));
        }
        for n in noise {
            if n.level.is_nan() || n.level < 0.0 || (n.level.is_infinite() && n.kind != NoiseKind::AdcSnr) {
                return Err(Error::out_of_range("noise level", n.level, "[0, inf)"));
            }
        }
        let pick = |kind| {
            noise
                .iter()
                .filter(|n| n.kind == kind)
                .map(|n| NoiseSource::new(*n, fs, amplitude))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            fs,
            amplitude,
            offset_hz: 0.0,
            carrier: Nco::with_frequency(carrier_hz, fs)?,
            phi_dev: 0.0,
            phase_total: 0.0,
            taps: TapDelay::new(taps),
            freq_noise: pick(NoiseKind::WhiteFrequency),
            phase_noise: pick(NoiseKind::WhitePhase),
            adc_noise: pick(NoiseKind::AdcSnr),
            adc_format: adc.format()?,
            adc,
            last_freq_hz: 0.0,
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier.frequency()
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn taps(&self) -> &[(usize, f64)] {
        self.taps.taps()
    }

    /// Constant frequency offset of the beat from the carrier, Hz.
    pub fn offset_hz(&self) -> f64 {
        self.offset_hz
    }

    pub fn set_offset_hz(&mut self, f: f64) {
        self.offset_hz = f;
    }

    /// Beat phase deviation accumulated so far, unwrapped (rad).
    pub fn phase_total(&self) -> f64 {
        self.phase_total
    }

    /// Frequency deviation applied during the last [`BeatPlant::advance`], Hz.
    pub fn last_freq_hz(&self) -> f64 {
        self.last_freq_hz
    }

    /// Produces the ADC sample for the current instant.
    #[inline]
    pub fn synthesize(&mut self) -> BeatSample {
        let mut phase = self.phi_dev;
        for n in &mut self.phase_noise {
            phase += n.next_sample();
        }
        let mut x = self.amplitude * (self.carrier.phase() + phase).cos();
        for n in &mut self.adc_noise {
            x += n.next_sample();
        }
        let (x, clipped) = self.adc.convert(x, &self.adc_format);
        BeatSample {
            x,
            phase: wrap_phase_unchecked(phase),
            clipped,
        }
    }

    /// Moves to the next sample. `actuator_hz` is the undelayed frequency
    /// correction commanded this sample; `extra_hz` is an external
    /// disturbance applied without delay.
    #[inline]
    pub fn advance(&mut self, actuator_hz: f64, extra_hz: f64) {
        let mut f = self.offset_hz + self.taps.step(actuator_hz) + extra_hz;
        for n in &mut self.freq_noise {
            f += n.next_sample();
        }
        let dphi = TAU * f / self.fs;
        self.phi_dev = wrap_phase_unchecked(self.phi_dev + dphi);
        self.phase_total += dphi;
        self.last_freq_hz = f;
        self.carrier.advance(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{Demodulator, LpfSelect};

    fn quiet(fs: f64, taps: Vec<(usize, f64)>) -> BeatPlant {
        BeatPlant::new(fs, fs / 4.0, 0.5, taps, &[], AdcModel::default()).unwrap()
    }

    #[test]
    fn offset_shows_up_as_increment() {
        let fs = 1e6;
        let mut p = quiet(fs, vec![(0, 1.0)]);
        p.set_offset_hz(1000.0);
        let mut d = Demodulator::new(Nco::with_frequency(fs / 4.0, fs).unwrap(), LpfSelect::Wide);
        // single increments carry ADC quantization noise; average them
        let mut sum = 0.0;
        for k in 0..21_000 {
            let s = p.synthesize();
            let inc = d.step(s.x).increment;
            if k >= 1000 {
                sum += inc;
            }
            p.advance(0.0, 0.0);
        }
        let f = sum / 20_000.0 * fs / TAU;
        assert!((f - 1000.0).abs() < 0.05, "{f}");
    }

    #[test]
    fn actuator_is_delayed_by_taps() {
        let fs = 1e6;
        let mut p = quiet(fs, vec![(5, 1.0)]);
        for k in 0..10 {
            p.synthesize();
            p.advance(if k == 0 { 1000.0 } else { 0.0 }, 0.0);
            let expected = if k == 5 { 1000.0 } else { 0.0 };
            assert_eq!(p.last_freq_hz(), expected);
        }
    }

    #[test]
    fn adc_quantizes_and_clips() {
        let adc = AdcModel::default();
        let fmt = adc.format().unwrap();
        let (v, c) = adc.convert(0.3, &fmt);
        assert!((v - 0.3).abs() <= 0.5 / 8192.0);
        assert!(!c);
        let (v, c) = adc.convert(1.5, &fmt);
        assert!(c);
        assert_eq!(v, 8191.0 / 8192.0);
    }

    #[test]
    fn noise_free_runs_are_identical_and_seeded_runs_repeat() {
        let fs = 1e6;
        let noise = [
            NoiseSpec { kind: NoiseKind::WhiteFrequency, level: 10.0, seed: 1 },
            NoiseSpec { kind: NoiseKind::AdcSnr, level: 50.0, seed: 2 },
        ];
        let run = || {
            let mut p = BeatPlant::new(fs, fs / 4.0, 0.5, vec![(0, 1.0)], &noise, AdcModel::default()).unwrap();
            (0..500)
                .map(|_| {
                    let s = p.synthesize();
                    p.advance(0.0, 0.0);
                    s.x.to_bits()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_negative_noise() {
        let noise = [NoiseSpec { kind: NoiseKind::WhitePhase, level: -1.0, seed: 0 }];
        assert!(BeatPlant::new(1e6, 2.5e5, 0.5, vec![(0, 1.0)], &noise, AdcModel::default()).is_err());
    }
}
