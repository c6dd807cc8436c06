//! Everything outside the controller: output converters, delays, the fiber
//! link, the synthesized beat note and its noise.

mod beat;
mod delay;
mod link;
mod noise;

pub use beat::{AdcModel, BeatPlant, BeatSample};
pub use delay::{DelayLine, TapDelay};
pub use link::{link_response, total_latency, AomVcoModel, LinkModel, MeasuredResponse, ResponsePoint};
pub use noise::{noise_step, GaussianStream, NoiseKind, NoiseSource, NoiseSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{quantize_flagged, FixedFormat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcoSpec {
    pub enabled: bool,
    /// Frequency of the top code, Hz.
    pub full_scale: f64,
    pub word_bits: u32,
    /// Hz per volt of controller output.
    pub gain: f64,
    /// Output frequency for a zero controller output, Hz.
    pub quiescent_offset: f64,
    /// Output amplitude in DAC units.
    pub amplitude: f64,
    /// Added to the controller output before mapping, V.
    pub dc_offset: f64,
}

impl VcoSpec {
    /// Full scale at Nyquist, gain of a quarter of `fs` per volt, centered
    /// so that the +-1 V controller range spans the whole output band. The
    /// quiescent frequency sits on the middle code so that a zero output is
    /// reproduced exactly.
    pub fn for_sample_rate(fs: f64) -> Self {
        let mut spec = Self {
            enabled: true,
            full_scale: fs / 2.0,
            word_bits: 16,
            gain: fs / 4.0,
            quiescent_offset: 0.0,
            amplitude: 8191.0,
            dc_offset: 0.0,
        };
        spec.quiescent_offset = vco_map(&spec, 1 << (spec.word_bits - 1));
        spec
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.full_scale > 0.0 && self.full_scale <= fs / 2.0) {
            return Err(Error::out_of_range("vco.full_scale", self.full_scale, format!("(0, {}]", fs / 2.0)));
        }
        if !(1..=32).contains(&self.word_bits) {
            return Err(Error::out_of_range("vco.word_bits", self.word_bits as f64, "[1, 32]"));
        }
        if !self.gain.is_finite() || self.gain == 0.0 {
            return Err(Error::out_of_range("vco.gain", self.gain, "finite, non-zero"));
        }
        if !(0.0..=self.full_scale).contains(&self.quiescent_offset) {
            return Err(Error::out_of_range(
                "vco.quiescent_offset",
                self.quiescent_offset,
                format!("[0, {}]", self.full_scale),
            ));
        }
        if !self.dc_offset.is_finite() {
            return Err(Error::NonFinite("vco.dc_offset"));
        }
        Ok(())
    }

    pub fn max_code(&self) -> u32 {
        ((1u64 << self.word_bits) - 1) as u32
    }
}

/// Output frequency for a VCO tuning code. Both ends of the code range map
/// exactly onto `0` and `full_scale`.
pub fn vco_map(spec: &VcoSpec, code: u32) -> f64 {
    let top = spec.max_code();
    debug_assert!(code <= top);
    code.min(top) as f64 * spec.full_scale / top as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DacSpec {
    pub bits: u32,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for DacSpec {
    fn default() -> Self {
        Self {
            bits: 14,
            v_min: -1.0,
            v_max: 1.0,
        }
    }
}

impl DacSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.bits) {
            return Err(Error::out_of_range("dac.bits", self.bits as f64, "[2, 32]"));
        }
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_max > self.v_min) {
            return Err(Error::InvalidConfig("dac range must satisfy v_min < v_max".into()));
        }
        Ok(())
    }

    pub fn lsb(&self) -> f64 {
        (self.v_max - self.v_min) / 2f64.powi(self.bits as i32)
    }

    pub fn min_code(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    pub fn max_code(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }
}

/// Output voltage for a two's complement DAC code: the code range maps
/// linearly onto `[v_min, v_max)`.
pub fn dac_map(spec: &DacSpec, code: i64) -> f64 {
    debug_assert!((spec.min_code()..=spec.max_code()).contains(&code));
    let code = code.clamp(spec.min_code(), spec.max_code());
    spec.v_min + (code - spec.min_code()) as f64 * spec.lsb()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuatorKind {
    #[default]
    Vco,
    Dac,
}

/// Maps the controller output to the value the plant actually sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuator {
    pub kind: ActuatorKind,
    pub vco: VcoSpec,
    pub dac: DacSpec,
    /// Skip output quantization (range limits still apply).
    pub ideal: bool,
}

/// One actuator update: the applied output in controller volts and whether
/// it hit the end of the range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorOutput {
    pub volts: f64,
    pub saturated: bool,
}

impl Actuator {
    pub fn new(kind: ActuatorKind, fs: f64) -> Self {
        Self {
            kind,
            vco: VcoSpec::for_sample_rate(fs),
            dac: DacSpec::default(),
            ideal: false,
        }
    }

    pub fn ideal(mut self, ideal: bool) -> Self {
        self.ideal = ideal;
        self
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        match self.kind {
            ActuatorKind::Vco => self.vco.validate(fs),
            ActuatorKind::Dac => self.dac.validate(),
        }
    }

    /// Equivalent controller voltage after the converter. Multiplying by the
    /// loop's `kc` gives the frequency change seen at the detector.
    #[inline]
    pub fn apply(&self, v: f64) -> ActuatorOutput {
        match self.kind {
            ActuatorKind::Vco => {
                let spec = &self.vco;
                let f = spec.quiescent_offset + spec.gain * (v + spec.dc_offset);
                let (f_out, saturated) = if self.ideal {
                    let c = f.clamp(0.0, spec.full_scale);
                    (c, c != f)
                } else {
                    let top = spec.max_code();
                    let fmt = FixedFormat::new(spec.word_bits, false, spec.full_scale / top as f64)
                        .expect("validated word width");
                    let (code, sat) = quantize_flagged(f, &fmt);
                    (vco_map(spec, code as u32), sat)
                };
                ActuatorOutput {
                    volts: (f_out - spec.quiescent_offset) / spec.gain,
                    saturated,
                }
            }
            ActuatorKind::Dac => {
                let spec = &self.dac;
                if self.ideal {
                    let top = spec.v_max - spec.lsb();
                    let c = v.clamp(spec.v_min, top);
                    ActuatorOutput {
                        volts: c,
                        saturated: c != v,
                    }
                } else {
                    let mid = 0.5 * (spec.v_min + spec.v_max);
                    let fmt = FixedFormat::new(spec.bits, true, spec.lsb()).expect("validated DAC width");
                    let (code, saturated) = quantize_flagged(v - mid, &fmt);
                    ActuatorOutput {
                        volts: dac_map(spec, code),
                        saturated,
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vco_map_examples() {
        let spec = VcoSpec::for_sample_rate(125e6);
        assert_eq!(spec.gain, 31.25e6);
        assert_eq!(vco_map(&spec, 0), 0.0);
        assert_eq!(vco_map(&spec, 65535), 62.5e6);
        assert!((vco_map(&spec, 32768) - 31_250_476.8).abs() < 0.1);
    }

    #[test]
    fn dac_map_examples() {
        let spec = DacSpec::default();
        assert_eq!(dac_map(&spec, 0), 0.0);
        assert_eq!(dac_map(&spec, -8192), -1.0);
        assert_eq!(dac_map(&spec, 4096), 0.5);
        assert_eq!(dac_map(&spec, 8191), 1.0 - 1.0 / 8192.0);
    }

    #[test]
    fn maps_are_strictly_monotone() {
        let vco = VcoSpec::for_sample_rate(125e6);
        for c in 0..65535u32 {
            assert!(vco_map(&vco, c + 1) > vco_map(&vco, c));
        }
        let dac = DacSpec::default();
        for c in -8192..8191i64 {
            assert!(dac_map(&dac, c + 1) > dac_map(&dac, c));
        }
    }

    #[test]
    fn vco_actuator_quantizes_and_saturates() {
        let a = Actuator::new(ActuatorKind::Vco, 125e6);
        let lsb_volts = 62.5e6 / 65535.0 / 31.25e6;
        let out = a.apply(0.1);
        assert!((out.volts - 0.1).abs() <= 0.5 * lsb_volts + 1e-15);
        assert!(!out.saturated);
        let hi = a.apply(3.0);
        assert!(hi.saturated);
        // top of the band, one half step short of +1 V since the rest
        // frequency sits on the middle code
        assert!((hi.volts - (1.0 - 0.5 * lsb_volts)).abs() < 1e-12);
        assert_eq!(a.apply(0.0).volts, 0.0);
        let ideal = a.ideal(true).apply(0.123456);
        assert!((ideal.volts - 0.123456).abs() < 1e-15);
    }

    #[test]
    fn dac_actuator_quantizes() {
        let a = Actuator::new(ActuatorKind::Dac, 1e6);
        assert_eq!(a.apply(0.5).volts, 0.5);
        assert_eq!(a.apply(0.5 + 0.3 / 8192.0).volts, 0.5);
        let low = a.apply(-2.0);
        assert!(low.saturated);
        assert_eq!(low.volts, -1.0);
    }

    proptest! {
        #[test]
        fn quantized_vco_error_is_half_lsb(v in -0.99f64..0.99) {
            let a = Actuator::new(ActuatorKind::Vco, 10e6);
            let lsb = a.vco.full_scale / 65535.0 / a.vco.gain;
            let out = a.apply(v);
            prop_assert!((out.volts - v).abs() <= 0.5 * lsb * (1.0 + 1e-9));
        }
    }
}
