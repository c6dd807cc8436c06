//! Demodulation front end: NCO, I/Q mixer, low-pass, arctangent phase
//! detector and the wrapped phase derivative.

mod lowpass;
mod nco;

pub use lowpass::{Biquad, LpfSelect, Lowpass4};
pub use nco::{tuning_word, Nco, SineMode, ACCUMULATOR_BITS, ACCUMULATOR_MODULUS};

use serde::{Deserialize, Serialize};

use crate::numerics::wrap_phase_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IqSample {
    pub i: f64,
    pub q: f64,
    pub t_index: u64,
}

/// Mixes a real sample down with the oscillator outputs.
///
/// The quadrature arm is `-x * sin`, i.e. multiplication by `exp(-j*theta)`,
/// so an input `cos(theta + phi)` low-passes to `(cos phi, sin phi) / 2` and a
/// positive extracted phase means the input leads the NCO.
#[inline]
pub fn iq_demodulate(x: f64, cos_out: f64, sin_out: f64, t_index: u64) -> IqSample {
    IqSample {
        i: x * cos_out,
        q: -x * sin_out,
        t_index,
    }
}

/// Runs one I/Q sample through a pair of low-pass filters.
#[inline]
pub fn lowpass_step(lpf_i: &mut Lowpass4, lpf_q: &mut Lowpass4, s: IqSample) -> IqSample {
    IqSample {
        i: lpf_i.step(s.i),
        q: lpf_q.step(s.q),
        t_index: s.t_index,
    }
}

/// Four-quadrant arctangent of `(q, i)` in `[-pi, pi)`; `None` when both
/// components are zero (signal loss).
#[inline]
pub fn phase_extract(s: IqSample) -> Option<f64> {
    if s.i == 0.0 && s.q == 0.0 {
        return None;
    }
    Some(wrap_phase_unchecked(s.q.atan2(s.i)))
}

/// Wrapped numerical derivative of the extracted phase.
#[inline]
pub fn phase_increment(now: f64, prev: f64) -> f64 {
    wrap_phase_unchecked(now - prev)
}

/// Output of one [`Demodulator`] step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodOutput {
    pub iq: IqSample,
    pub phase: f64,
    pub increment: f64,
    pub signal_loss: bool,
}

/// The complete front end for one channel. On signal loss the previous phase
/// is held, so the increment for that sample is zero.
#[derive(Debug, Clone)]
pub struct Demodulator {
    nco: Nco,
    lpf_i: Lowpass4,
    lpf_q: Lowpass4,
    select: LpfSelect,
    prev_phase: Option<f64>,
    t_index: u64,
    signal_loss_count: u64,
}

impl Demodulator {
    pub fn new(nco: Nco, select: LpfSelect) -> Self {
        Self {
            nco,
            lpf_i: Lowpass4::from_select(select),
            lpf_q: Lowpass4::from_select(select),
            select,
            prev_phase: None,
            t_index: 0,
            signal_loss_count: 0,
        }
    }

    pub fn nco(&self) -> &Nco {
        &self.nco
    }

    pub fn select(&self) -> LpfSelect {
        self.select
    }

    pub fn signal_loss_count(&self) -> u64 {
        self.signal_loss_count
    }

    /// Low-pass response seen by small phase modulations of the input.
    pub fn lowpass(&self) -> &Lowpass4 {
        &self.lpf_i
    }

    pub fn step(&mut self, x: f64) -> DemodOutput {
        let (c, s) = self.nco.step();
        let raw = iq_demodulate(x, c, s, self.t_index);
        self.t_index += 1;
        let iq = lowpass_step(&mut self.lpf_i, &mut self.lpf_q, raw);
        let (phase, signal_loss) = match phase_extract(iq) {
            Some(p) => (p, false),
            None => {
                self.signal_loss_count += 1;
                (self.prev_phase.unwrap_or(0.0), true)
            }
        };
        let increment = match self.prev_phase {
            Some(prev) => phase_increment(phase, prev),
            None => 0.0,
        };
        self.prev_phase = Some(phase);
        DemodOutput {
            iq,
            phase,
            increment,
            signal_loss,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    #[test]
    fn demodulate_examples() {
        let s = iq_demodulate(0.0, 0.3, 0.4, 0);
        assert_eq!((s.i, s.q), (0.0, 0.0));
        let s = iq_demodulate(1.0, 1.0, 0.0, 0);
        assert_eq!((s.i, s.q), (1.0, 0.0));
    }

    #[test]
    fn demodulated_tone_recovers_phase() {
        let fs = 1.0;
        let f = 0.25;
        for phi in [-2.5, -1.0, 0.0, 0.4, 3.0] {
            let mut d = Demodulator::new(Nco::with_frequency(f, fs).unwrap(), LpfSelect::Wide);
            let mut out = None;
            for n in 0..2000 {
                let x = (TAU * f * n as f64 + phi).cos();
                out = Some(d.step(x));
            }
            let out = out.unwrap();
            assert!((out.iq.i - phi.cos() / 2.0).abs() < 1e-9);
            assert!((out.iq.q - phi.sin() / 2.0).abs() < 1e-9);
            assert!((out.phase - phi).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_extract_examples() {
        let at = |i, q| phase_extract(IqSample { i, q, t_index: 0 }).unwrap();
        assert_eq!(at(1.0, 0.0), 0.0);
        assert_eq!(at(0.0, 1.0), FRAC_PI_2);
        assert!((at(-0.6, -0.8) - (-2.214_297_435_588_181)).abs() < 1e-12);
        assert_eq!(at(-1.0, 0.0), -PI);
        assert!(phase_extract(IqSample::default()).is_none());
    }

    #[test]
    fn phase_increment_examples() {
        assert_eq!(phase_increment(0.5, 0.5), 0.0);
        assert!((phase_increment(-3.1, 3.1) - 0.083_185_307_179_586_2).abs() < 1e-12);
    }

    #[test]
    fn increments_telescope_to_unwrapped_phase() {
        let fs = 1.0;
        let mut d = Demodulator::new(Nco::with_frequency(0.25, fs).unwrap(), LpfSelect::Wide);
        let df = 0.003;
        let mut total = 0.0;
        let mut first_phase = None;
        let mut last_phase = 0.0;
        let n = 5000;
        for k in 0..n {
            let x = (TAU * (0.25 + df) * k as f64).cos();
            let o = d.step(x);
            if k >= 100 {
                if first_phase.is_none() {
                    first_phase = Some(o.phase);
                } else {
                    total += o.increment;
                }
                last_phase = o.phase;
            }
        }
        let expected = TAU * df * (n - 101) as f64;
        assert!((total - expected).abs() < 1e-6);
        let unwrapped_delta = wrap_phase_unchecked(last_phase - first_phase.unwrap() - expected);
        assert!(unwrapped_delta.abs() < 1e-6);
    }

    #[test]
    fn signal_loss_holds_phase() {
        let mut d = Demodulator::new(Nco::new(0, 1.0), LpfSelect::Wide);
        let o = d.step(0.0);
        assert!(o.signal_loss);
        assert_eq!(o.increment, 0.0);
        assert_eq!(d.signal_loss_count(), 1);
    }

    #[test]
    fn cascade_is_deterministic() {
        let run = || {
            let mut d = Demodulator::new(Nco::with_frequency(0.2, 1.0).unwrap(), LpfSelect::Medium);
            (0..1000)
                .map(|k| d.step((0.2013 * TAU * k as f64).cos() + 1e-3 * (k as f64).sin()).increment.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
