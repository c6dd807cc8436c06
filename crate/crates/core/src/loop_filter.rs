//! PII²D loop filter: gain design from crossover frequencies, the per-sample
//! recurrence, and its exact frequency response.
//!
//! Integrators are plain forward accumulators (`acc += K * e`, output taken
//! after the update). The double integrator is a cascade: it accumulates the
//! integrator's state scaled by `f_ii * 2pi / fs`, so the II branch meets the
//! I branch at `f_ii`. The derivative branch differentiates the input and
//! passes it through a one-pole low-pass whose coefficient is
//! `f_df * 2pi / fs` (clamped to 1).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference for the I and D crossover frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverMode {
    /// `f_i`/`f_d` are where the branch crosses unity loop gain.
    RelativeTo0dB,
    /// `f_i`/`f_d` are where the branch crosses the proportional branch.
    #[default]
    RelativeToKp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchEnable {
    pub p: bool,
    pub i: bool,
    pub ii: bool,
    pub d: bool,
}

impl Default for BranchEnable {
    fn default() -> Self {
        Self {
            p: true,
            i: true,
            ii: false,
            d: false,
        }
    }
}

/// User-facing loop filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopFilterConfig {
    /// Proportional gain in dB relative to `1 / kc`.
    pub kp_db: f64,
    /// Open-loop DC gain of the controlled system (filter input units per
    /// filter output unit, e.g. Hz/V). Its sign sets the feedback polarity.
    pub kc: f64,
    pub fs: f64,
    pub f_i: f64,
    pub f_ii: f64,
    pub f_d: f64,
    pub f_df: f64,
    pub mode: CrossoverMode,
    pub enabled: BranchEnable,
}

impl LoopFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::out_of_range("fs", self.fs, "(0, inf)"));
        }
        if !self.kc.is_finite() || self.kc == 0.0 {
            return Err(Error::out_of_range("kc", self.kc, "finite, non-zero"));
        }
        if !self.kp_db.is_finite() {
            return Err(Error::NonFinite("kp_db"));
        }
        let nyq = self.fs / 2.0;
        let check = |name: &'static str, f: f64| -> Result<()> {
            if f > 0.0 && f < nyq {
                Ok(())
            } else {
                Err(Error::out_of_range(name, f, format!("(0, {nyq})")))
            }
        };
        let e = self.enabled;
        if e.i {
            check("f_i", self.f_i)?;
        }
        if e.ii {
            if !e.i {
                return Err(Error::InvalidConfig(
                    "the double integrator is cascaded on the integrator; enable I as well".into(),
                ));
            }
            check("f_ii", self.f_ii)?;
        }
        if e.d {
            check("f_d", self.f_d)?;
            check("f_df", self.f_df)?;
        }
        Ok(())
    }
}

/// Runtime gains of the filter recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GainSet {
    pub kp: f64,
    pub ki: f64,
    pub kii: f64,
    pub kd: f64,
    pub d_filter_coeff: f64,
}

impl GainSet {
    /// Proportional-only gains.
    pub fn proportional(kp: f64) -> Self {
        Self {
            kp,
            ..Default::default()
        }
    }

    /// Coefficient actually used by the derivative roll-off.
    pub fn effective_d_coeff(&self) -> f64 {
        if self.d_filter_coeff > 0.0 {
            self.d_filter_coeff.min(1.0)
        } else {
            1.0
        }
    }

    fn double_integrator_ratio(&self) -> f64 {
        if self.ki == 0.0 {
            0.0
        } else {
            self.kii / self.ki
        }
    }
}

/// Derives the runtime gains from the crossover settings.
pub fn design_gains(cfg: &LoopFilterConfig) -> Result<GainSet> {
    cfg.validate()?;
    let w = TAU / cfg.fs;
    let kp = 10f64.powf(cfg.kp_db / 20.0) / cfg.kc;
    let reference = match cfg.mode {
        CrossoverMode::RelativeTo0dB => 1.0 / cfg.kc,
        CrossoverMode::RelativeToKp => kp,
    };
    let ki = reference * cfg.f_i * w;
    let kd = if cfg.f_d > 0.0 { reference / (cfg.f_d * w) } else { 0.0 };
    let e = cfg.enabled;
    let ki_eff = if e.i { ki } else { 0.0 };
    Ok(GainSet {
        kp: if e.p { kp } else { 0.0 },
        ki: ki_eff,
        kii: if e.ii { ki_eff * cfg.f_ii * w } else { 0.0 },
        kd: if e.d { kd } else { 0.0 },
        d_filter_coeff: cfg.f_df * w,
    })
}

/// Accumulator clamp levels in filter output units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub integrator: f64,
    pub double_integrator: f64,
}

impl Default for Limits {
    /// Full DAC range, +-1 V.
    fn default() -> Self {
        Self {
            integrator: 1.0,
            double_integrator: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopFilterState {
    pub integrator_acc: f64,
    pub double_integrator_acc: f64,
    pub previous_input: f64,
    pub d_filter_state: f64,
}

/// Per-branch contributions of the last step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Branches {
    pub p: f64,
    pub i: f64,
    pub ii: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterOutput {
    pub u: f64,
    pub branches: Branches,
    pub saturated: bool,
}

#[inline]
fn clamp_flag(x: f64, limit: f64, flag: &mut bool) -> f64 {
    if x > limit {
        *flag = true;
        limit
    } else if x < -limit {
        *flag = true;
        -limit
    } else {
        x
    }
}

/// One sample of the filter recurrence.
#[inline]
pub fn filter_step(state: &mut LoopFilterState, gains: &GainSet, limits: &Limits, e: f64) -> FilterOutput {
    let mut saturated = false;
    let p = gains.kp * e;

    state.integrator_acc = clamp_flag(state.integrator_acc + gains.ki * e, limits.integrator, &mut saturated);
    let i = state.integrator_acc;

    state.double_integrator_acc = clamp_flag(
        state.double_integrator_acc + gains.double_integrator_ratio() * state.integrator_acc,
        limits.double_integrator,
        &mut saturated,
    );
    let ii = state.double_integrator_acc;

    let diff = gains.kd * (e - state.previous_input);
    state.previous_input = e;
    state.d_filter_state += gains.effective_d_coeff() * (diff - state.d_filter_state);
    let d = state.d_filter_state;

    FilterOutput {
        u: p + i + ii + d,
        branches: Branches { p, i, ii, d },
        saturated,
    }
}

/// Frequency response of [`filter_step`] (below saturation) at `f`.
pub fn controller_response(gains: &GainSet, f: f64, fs: f64) -> Result<Complex64> {
    if !(f > 0.0 && f < fs / 2.0) {
        return Err(Error::out_of_range("f", f, format!("(0, {})", fs / 2.0)));
    }
    Ok(controller_response_unchecked(gains, f / fs))
}

pub(crate) fn controller_response_unchecked(gains: &GainSet, f_over_fs: f64) -> Complex64 {
    let zinv = Complex64::from_polar(1.0, -2.0 * PI * f_over_fs);
    let one = Complex64::new(1.0, 0.0);
    let integ = one / (one - zinv);
    let alpha = gains.effective_d_coeff();
    let d = gains.kd * (one - zinv) * alpha / (one - (1.0 - alpha) * zinv);
    gains.kp + gains.ki * integ + gains.kii * integ * integ + d
}

/// A loop filter with its gains, limits and state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopFilter {
    gains: GainSet,
    limits: Limits,
    state: LoopFilterState,
}

impl LoopFilter {
    pub fn new(gains: GainSet) -> Self {
        Self::with_limits(gains, Limits::default())
    }

    pub fn with_limits(gains: GainSet, limits: Limits) -> Self {
        Self {
            gains,
            limits,
            state: LoopFilterState::default(),
        }
    }

    pub fn gains(&self) -> &GainSet {
        &self.gains
    }

    /// Swaps the gains; accumulators are kept, so the change is bumpless.
    pub fn set_gains(&mut self, gains: GainSet) {
        self.gains = gains;
    }

    pub fn state(&self) -> &LoopFilterState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = LoopFilterState::default();
    }

    #[inline]
    pub fn step(&mut self, e: f64) -> FilterOutput {
        filter_step(&mut self.state, &self.gains, &self.limits, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base_cfg() -> LoopFilterConfig {
        LoopFilterConfig {
            kp_db: 0.0,
            kc: 1.0,
            fs: 1e6,
            f_i: 1e3,
            f_ii: 100.0,
            f_d: 1e4,
            f_df: 1e5,
            mode: CrossoverMode::RelativeToKp,
            enabled: BranchEnable {
                p: true,
                i: true,
                ii: true,
                d: true,
            },
        }
    }

    #[test]
    fn design_examples() {
        let g = design_gains(&base_cfg()).unwrap();
        assert_eq!(g.kp, 1.0);

        let mut cfg = base_cfg();
        cfg.mode = CrossoverMode::RelativeTo0dB;
        cfg.f_i = cfg.fs / TAU;
        let g = design_gains(&cfg).unwrap();
        assert!((g.ki - 1.0).abs() < 1e-15);

        let mut cfg = base_cfg();
        cfg.kp_db = 6.0206;
        cfg.kc = 2.0;
        let g = design_gains(&cfg).unwrap();
        assert!((g.kp - 1.0).abs() < 1e-4);
    }

    #[test]
    fn disabled_branches_are_zero() {
        let mut cfg = base_cfg();
        cfg.enabled = BranchEnable {
            p: false,
            i: true,
            ii: false,
            d: false,
        };
        let g = design_gains(&cfg).unwrap();
        assert_eq!((g.kp, g.kii, g.kd), (0.0, 0.0, 0.0));
        // Kp-relative I still uses the nominal Kp
        assert!((g.ki - cfg.f_i * TAU / cfg.fs).abs() < 1e-15);
    }

    #[test]
    fn validation_errors() {
        let mut cfg = base_cfg();
        cfg.kc = 0.0;
        assert!(design_gains(&cfg).is_err());
        let mut cfg = base_cfg();
        cfg.f_i = 6e5;
        assert!(design_gains(&cfg).is_err());
        let mut cfg = base_cfg();
        cfg.enabled.i = false;
        assert!(matches!(design_gains(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = base_cfg();
        cfg.enabled.d = false;
        cfg.f_d = 0.0;
        cfg.f_df = 0.0;
        assert!(design_gains(&cfg).is_ok());
    }

    #[test]
    fn pure_proportional_step() {
        let mut f = LoopFilter::new(GainSet::proportional(2.0));
        assert_eq!(f.step(3.0).u, 6.0);
    }

    #[test]
    fn integrator_ramps_by_ki() {
        let gains = GainSet {
            ki: 0.01,
            ..Default::default()
        };
        let mut f = LoopFilter::new(gains);
        let mut prev = 0.0;
        for _ in 0..50 {
            let u = f.step(1.0).u;
            assert!((u - prev - 0.01).abs() < 1e-15);
            prev = u;
        }
    }

    #[test]
    fn integrator_saturates() {
        let gains = GainSet {
            ki: 0.3,
            ..Default::default()
        };
        let mut f = LoopFilter::new(gains);
        let mut last = FilterOutput::default();
        for _ in 0..10 {
            last = f.step(1.0);
        }
        assert!(last.saturated);
        assert_eq!(last.u, 1.0);
    }

    /// Amplitude of the component at `f` in `x`, by correlation.
    fn tone_amplitude(x: &[f64], f_over_fs: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in x.iter().enumerate() {
            let ph = TAU * f_over_fs * k as f64;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        2.0 * (re * re + im * im).sqrt() / x.len() as f64
    }

    #[test]
    fn p_and_i_cross_at_f_i() {
        let mut cfg = base_cfg();
        cfg.enabled = BranchEnable::default();
        let g = design_gains(&cfg).unwrap();
        let mut f = LoopFilter::with_limits(g, Limits { integrator: 1e9, double_integrator: 1e9 });
        let fo = cfg.f_i / cfg.fs;
        let period = (1.0 / fo).round() as usize;
        let (mut p, mut i) = (Vec::new(), Vec::new());
        for k in 0..period * 60 {
            let out = f.step((TAU * fo * k as f64).sin());
            if k >= period * 10 {
                p.push(out.branches.p);
                i.push(out.branches.i);
            }
        }
        let (ap, ai) = (tone_amplitude(&p, fo), tone_amplitude(&i, fo));
        assert!((ai / ap - 1.0).abs() < 0.02, "{ai} vs {ap}");
    }

    #[test]
    fn response_examples() {
        let fs = 1e6;
        let p = controller_response(&GainSet::proportional(3.5), 1234.0, fs).unwrap();
        assert_eq!(p, Complex64::new(3.5, 0.0));

        let gi = GainSet {
            ki: 1e-3,
            ..Default::default()
        };
        let f = 100.0;
        let h = controller_response(&gi, f, fs).unwrap().norm();
        let approx = gi.ki * fs / (TAU * f);
        assert!((h / approx - 1.0).abs() < 1e-4);

        let mut cfg = base_cfg();
        cfg.enabled = BranchEnable::default();
        let g = design_gains(&cfg).unwrap();
        let i_only = GainSet { kp: 0.0, ..g };
        let ratio = controller_response(&i_only, cfg.f_i, fs).unwrap().norm() / g.kp;
        assert!((ratio - 1.0).abs() < 0.01);

        assert!(controller_response(&g, 0.0, fs).is_err());
        assert!(controller_response(&g, fs / 2.0, fs).is_err());
    }

    #[test]
    fn modes_coincide_at_zero_db() {
        let mut a = base_cfg();
        a.kc = 3.7;
        a.mode = CrossoverMode::RelativeTo0dB;
        let mut b = a;
        b.mode = CrossoverMode::RelativeToKp;
        assert_eq!(design_gains(&a).unwrap(), design_gains(&b).unwrap());
    }

    #[test]
    fn response_matches_impulse_response() {
        let g = GainSet {
            kp: 0.7,
            ki: 0.01,
            kii: 0.0001,
            kd: 2.0,
            d_filter_coeff: 0.3,
        };
        // the double integrator grows without bound, so compare the differenced output
        let fo = 0.05;
        let mut f = LoopFilter::with_limits(g, Limits { integrator: 1e12, double_integrator: 1e12 });
        let n = 4000;
        let settle = 2000;
        let (mut re, mut im) = (0.0, 0.0);
        let mut prev_u = 0.0;
        for k in 0..n {
            let x = (TAU * fo * k as f64).cos();
            let u = f.step(x).u;
            if k >= settle {
                let du = u - prev_u;
                let ph = TAU * fo * k as f64;
                re += du * ph.cos();
                im -= du * ph.sin();
            }
            prev_u = u;
        }
        let measured = Complex64::new(re, im) * 2.0 / (n - settle) as f64;
        let zinv = Complex64::from_polar(1.0, -TAU * fo);
        let expected = controller_response_unchecked(&g, fo) * (1.0 - zinv);
        assert!((measured - expected).norm() / expected.norm() < 5e-3, "{measured} vs {expected}");
    }

    proptest! {
        #[test]
        fn filter_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let g = GainSet { kp: 0.5, ki: 0.02, kii: 0.001, kd: 1.5, d_filter_coeff: 0.4 };
            let lim = Limits { integrator: 1e12, double_integrator: 1e12 };
            let sig = |k: u64, s: u64| (((k * 2654435761 + s * 97) % 1000) as f64 / 500.0) - 1.0;
            let (mut f1, mut f2, mut f3) = (LoopFilter::with_limits(g, lim), LoopFilter::with_limits(g, lim), LoopFilter::with_limits(g, lim));
            for k in 0..200 {
                let e1 = sig(k, seed);
                let e2 = sig(k, seed + 1);
                let u1 = f1.step(e1).u;
                let u2 = f2.step(e2).u;
                let u3 = f3.step(a * e1 + b * e2).u;
                prop_assert!((u3 - (a * u1 + b * u2)).abs() < 1e-9 * (1.0 + u3.abs()));
            }
        }
    }
}
