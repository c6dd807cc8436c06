use std::f64::consts::{FRAC_PI_4, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::LoopGains;
use crate::error::{Error, Result};
use crate::loop_filter::{controller_response_unchecked, design_gains, BranchEnable, CrossoverMode};

/// Highest closed-loop bandwidth reachable with total loop delay `tau`:
/// `1 / (8 tau)`, the crossover of a first-order loop with pi/4 phase margin.
pub fn max_bandwidth(tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::out_of_range("tau", tau, "(0, inf)"));
    }
    Ok(1.0 / (8.0 * tau))
}

/// Where a disturbance enters the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionPoint {
    /// At the actuator (VCO noise at the local end): rejected by `S`.
    Actuator,
    /// At the phase detector (ADC or detection noise): written onto the
    /// output as `-T`.
    Detection,
    /// Fiber noise seen at the remote output, lumped at the far end of a
    /// link of one-way delay `tau_link`.
    RemoteOutput { tau_link: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopPrediction {
    pub freqs: Vec<f64>,
    pub sensitivity: Vec<Complex64>,
    pub complementary: Vec<Complex64>,
    pub injection: InjectionPoint,
    /// Transfer from the injected disturbance to the output.
    pub rejection: Vec<Complex64>,
}

// Keeps the remote-output transfer finite at the link nulls.
const NULL_FLOOR: f64 = 1e-3;

/// Closed-loop functions of an open-loop gain `l`.
pub fn closed_loop_prediction<F>(l: F, freqs: &[f64], injection: InjectionPoint) -> ClosedLoopPrediction
where
    F: Fn(f64) -> Complex64,
{
    let one = Complex64::new(1.0, 0.0);
    let mut sensitivity = Vec::with_capacity(freqs.len());
    let mut complementary = Vec::with_capacity(freqs.len());
    let mut rejection = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let lf = l(f);
        let (s, t) = if lf.is_finite() {
            (one / (one + lf), lf / (one + lf))
        } else {
            (Complex64::new(0.0, 0.0), one)
        };
        let r = match injection {
            InjectionPoint::Actuator => s,
            InjectionPoint::Detection => -t,
            InjectionPoint::RemoteOutput { tau_link } => {
                let x = TAU * f * tau_link;
                let pass = x.cos().powi(2).max(NULL_FLOOR);
                one - t * Complex64::from_polar(1.0, -x) / pass
            }
        };
        sensitivity.push(s);
        complementary.push(t);
        rejection.push(r);
    }
    ClosedLoopPrediction {
        freqs: freqs.to_vec(),
        sensitivity,
        complementary,
        injection,
        rejection,
    }
}

/// Gain crossover frequency and phase margin (rad) of `l`, searching
/// `[f_lo, f_hi]` for the first downward crossing of unity.
pub fn phase_margin<F>(l: F, f_lo: f64, f_hi: f64) -> Option<(f64, f64)>
where
    F: Fn(f64) -> Complex64,
{
    let steps = 2000;
    let r = (f_hi / f_lo).ln() / steps as f64;
    let mut prev = f_lo;
    if l(prev).norm() < 1.0 {
        return None;
    }
    for k in 1..=steps {
        let f = f_lo * (r * k as f64).exp();
        if l(f).norm() < 1.0 {
            let (mut a, mut b) = (prev, f);
            for _ in 0..60 {
                let m = (a * b).sqrt();
                if l(m).norm() >= 1.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let fc = (a * b).sqrt();
            let pm = (l(fc).arg() + PI).rem_euclid(TAU);
            let pm = if pm > PI { pm - TAU } else { pm };
            return Some((fc, pm));
        }
        prev = f;
    }
    None
}

/// PI plus double-integrator tuning for a delay-dominated loop: `f_i` at
/// the `1 / (8 tau)` bandwidth limit, `f_ii` a factor 16 lower, and the
/// proportional gain set so that the phase margin on `kc * exp(-j w tau)`
/// is pi/4.
pub fn quarter_pi_tuning(tau: f64, kc: f64, fs: f64) -> Result<LoopGains> {
    let f_i = max_bandwidth(tau)?;
    if !(fs.is_finite() && fs > 2.0 * f_i) {
        return Err(Error::out_of_range("fs", fs, format!("({}, inf)", 2.0 * f_i)));
    }
    let mut g = LoopGains {
        kp_db: 0.0,
        f_i,
        f_ii: f_i / 16.0,
        f_d: 0.0,
        f_df: 0.0,
        mode: CrossoverMode::RelativeToKp,
        enabled: BranchEnable {
            p: true,
            i: true,
            ii: true,
            d: false,
        },
    };
    // no crossover means the proportional path alone is above unity
    let margin = |kp_db: f64| -> Result<f64> {
        let mut trial = g;
        trial.kp_db = kp_db;
        let gains = design_gains(&trial.filter_config(kc, fs))?;
        let l = |f: f64| kc * controller_response_unchecked(&gains, f / fs) * Complex64::from_polar(1.0, -TAU * f * tau);
        Ok(phase_margin(l, f_i * 1e-4, fs / 2.0 * 0.999).map_or(f64::NEG_INFINITY, |(_, pm)| pm))
    };
    // margin rises with gain while the integrators dominate, then falls as
    // the crossover runs into the delay; take the upper solution
    let mut lo = None;
    let mut kp_db = 20.0;
    while kp_db >= -60.0 {
        if margin(kp_db)? > FRAC_PI_4 {
            lo = Some(kp_db);
            break;
        }
        kp_db -= 0.5;
    }
    let mut lo = lo.ok_or_else(|| Error::InvalidConfig("pi/4 margin not reachable for this delay".into()))?;
    let mut hi = lo + 0.5;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if margin(mid)? > FRAC_PI_4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    g.kp_db = 0.5 * (lo + hi);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_rule() {
        assert!((max_bandwidth(407e-9).unwrap() - 307_125.307_125_307_1).abs() < 1e-6);
        assert!((max_bandwidth(565e-9).unwrap() - 221_238.938_053_097_3).abs() < 1e-6);
        assert_eq!(max_bandwidth(4.0e-6).unwrap(), 31_250.0);
        assert!(max_bandwidth(0.0).is_err());
    }

    #[test]
    fn s_plus_t_is_one() {
        let freqs = [1.0, 10.0, 1e3, 1e5];
        let l = |f: f64| Complex64::new(3.0, -1.0) / Complex64::new(0.0, f / 100.0);
        let p = closed_loop_prediction(l, &freqs, InjectionPoint::Actuator);
        for (s, t) in p.sensitivity.iter().zip(&p.complementary) {
            assert!((s + t - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn limits() {
        let p = closed_loop_prediction(|_| Complex64::new(0.0, 0.0), &[1.0], InjectionPoint::Detection);
        assert_eq!(p.sensitivity[0], Complex64::new(1.0, 0.0));
        assert_eq!(p.complementary[0], Complex64::new(0.0, 0.0));
        let integ = |f: f64| Complex64::new(0.0, -1e3 / f);
        let p = closed_loop_prediction(integ, &[1e-6], InjectionPoint::Actuator);
        assert!(p.sensitivity[0].norm() < 1e-8);
    }

    #[test]
    fn margin_of_integrator_with_delay() {
        // k/(jw) e^{-jw tau}: crossover at k/(2 pi), margin pi/2 - w_c tau
        let tau = 1e-6;
        let k = TAU * 1e4;
        let l = |f: f64| Complex64::new(0.0, -k / (TAU * f)) * Complex64::from_polar(1.0, -TAU * f * tau);
        let (fc, pm) = phase_margin(l, 1.0, 1e6).unwrap();
        assert!((fc - 1e4).abs() < 1e-6);
        assert!((pm - (PI / 2.0 - TAU * 1e4 * tau)).abs() < 1e-9);
    }

    #[test]
    fn tuning_hits_quarter_pi() {
        let (tau, kc, fs) = (4.0e-6, 5e6, 10e6);
        let g = quarter_pi_tuning(tau, kc, fs).unwrap();
        assert_eq!(g.f_i, 31_250.0);
        assert!(g.kp_db < 0.0 && g.kp_db > -2.0, "{}", g.kp_db);
        let gains = design_gains(&g.filter_config(kc, fs)).unwrap();
        let l = |f: f64| kc * controller_response_unchecked(&gains, f / fs) * Complex64::from_polar(1.0, -TAU * f * tau);
        let (_, pm) = phase_margin(l, 1.0, 4e6).unwrap();
        assert!((pm - FRAC_PI_4).abs() < 1e-6);
    }
}
