//! Fixed-point formats, phase wrapping and converter SNR bookkeeping.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary fixed-point word: `total_bits` wide, optionally two's complement,
/// with one LSB worth `scale` engineering units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedFormat {
    total_bits: u32,
    signed: bool,
    scale: f64,
}

impl FixedFormat {
    pub fn new(total_bits: u32, signed: bool, scale: f64) -> Result<Self> {
        let max_bits = if signed { 64 } else { 63 };
        if !(1..=max_bits).contains(&total_bits) {
            return Err(Error::out_of_range(
                "total_bits",
                total_bits as f64,
                format!("[1, {max_bits}]"),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::out_of_range("scale", scale, "(0, inf)"));
        }
        Ok(Self {
            total_bits,
            signed,
            scale,
        })
    }

    /// Signed format spanning `[-full_scale, full_scale)`.
    pub fn signed_full_scale(total_bits: u32, full_scale: f64) -> Result<Self> {
        let scale = full_scale / 2f64.powi(total_bits as i32 - 1);
        Self::new(total_bits, true, scale)
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn min_code(&self) -> i64 {
        if self.signed {
            if self.total_bits == 64 {
                i64::MIN
            } else {
                -(1i64 << (self.total_bits - 1))
            }
        } else {
            0
        }
    }

    pub fn max_code(&self) -> i64 {
        if self.signed {
            if self.total_bits == 64 {
                i64::MAX
            } else {
                (1i64 << (self.total_bits - 1)) - 1
            }
        } else {
            (1i64 << self.total_bits) - 1
        }
    }

    pub fn to_value(&self, code: i64) -> f64 {
        code as f64 * self.scale
    }
}

/// Quantizes `x` to the nearest code of `fmt` (ties to even), saturating at
/// the ends of the range. NaN maps to code 0.
pub fn quantize(x: f64, fmt: &FixedFormat) -> i64 {
    quantize_flagged(x, fmt).0
}

/// Like [`quantize`], also reporting whether the value was clipped.
pub fn quantize_flagged(x: f64, fmt: &FixedFormat) -> (i64, bool) {
    if x.is_nan() {
        return (0, false);
    }
    let r = (x / fmt.scale).round_ties_even();
    let (lo, hi) = (fmt.min_code(), fmt.max_code());
    if r < lo as f64 {
        (lo, true)
    } else if r > hi as f64 {
        (hi, true)
    } else {
        (r as i64, false)
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_phase(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("phase"));
    }
    Ok(wrap_phase_unchecked(x))
}

#[inline]
pub(crate) fn wrap_phase_unchecked(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    // rem_euclid can return TAU itself for tiny negative inputs.
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Converter noise description: time-domain SNR over `0..fs/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcSpec {
    pub snr_t_db: f64,
    pub bits: u32,
    pub fs: f64,
}

impl AdcSpec {
    pub fn new(snr_t_db: f64, bits: u32, fs: f64) -> Result<Self> {
        let spec = Self { snr_t_db, bits, fs };
        spec.validate()?;
        Ok(spec)
    }

    /// SNR of an ideal quantizer with `bits` bits driven by a full-scale sine.
    pub fn ideal_snr_db(&self) -> f64 {
        6.02 * self.bits as f64 + 1.76
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::out_of_range("fs", self.fs, "(0, inf)"));
        }
        if self.bits == 0 {
            return Err(Error::out_of_range("bits", 0.0, "[1, inf)"));
        }
        if !self.snr_t_db.is_finite() || self.snr_t_db > self.ideal_snr_db() {
            return Err(Error::out_of_range(
                "snr_t_db",
                self.snr_t_db,
                format!("(-inf, {}]", self.ideal_snr_db()),
            ));
        }
        Ok(())
    }
}

/// SNR seen in a bandwidth `bw`, given the time-domain SNR over the full
/// Nyquist band.
pub fn spectral_snr(spec: &AdcSpec, bw: f64) -> Result<f64> {
    let nyquist = spec.fs / 2.0;
    if !(bw > 0.0 && bw <= nyquist) {
        return Err(Error::out_of_range("bw", bw, format!("(0, {nyquist}]")));
    }
    if bw == nyquist {
        return Ok(spec.snr_t_db);
    }
    Ok(spec.snr_t_db + 10.0 * (spec.fs / (2.0 * bw)).log10())
}

/// Effective number of bits for a given time-domain SNR.
pub fn enob(snr_t_db: f64) -> f64 {
    (snr_t_db - 1.76) / 6.02
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adc14() -> FixedFormat {
        FixedFormat::new(14, true, 1.0 / 8192.0).unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, &adc14()), 0);
        assert_eq!(quantize(1.0, &adc14()), 8191);
        assert_eq!(quantize(-0.5, &adc14()), -4096);
        assert_eq!(quantize(-2.0, &adc14()), -8192);
        assert_eq!(quantize(f64::INFINITY, &adc14()), 8191);
        assert_eq!(quantize(f64::NAN, &adc14()), 0);
    }

    #[test]
    fn quantize_ties_to_even() {
        let f = FixedFormat::new(8, true, 1.0).unwrap();
        assert_eq!(quantize(0.5, &f), 0);
        assert_eq!(quantize(1.5, &f), 2);
        assert_eq!(quantize(2.5, &f), 2);
        assert_eq!(quantize(-2.5, &f), -2);
    }

    #[test]
    fn format_ranges() {
        let u = FixedFormat::new(16, false, 1.0).unwrap();
        assert_eq!((u.min_code(), u.max_code()), (0, 65535));
        let s = FixedFormat::new(64, true, 1.0).unwrap();
        assert_eq!((s.min_code(), s.max_code()), (i64::MIN, i64::MAX));
        assert!(FixedFormat::new(0, true, 1.0).is_err());
        assert!(FixedFormat::new(64, false, 1.0).is_err());
        assert!(FixedFormat::new(8, true, 0.0).is_err());
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_phase(0.0).unwrap(), 0.0);
        assert_eq!(wrap_phase(PI).unwrap(), -PI);
        assert_eq!(wrap_phase(-PI).unwrap(), -PI);
        // -6.2 + 2*pi
        assert!((wrap_phase(-6.2).unwrap() - 0.083_185_307_179_586_2).abs() < 1e-15);
        assert!(wrap_phase(f64::NAN).is_err());
        assert!(wrap_phase(f64::INFINITY).is_err());
    }

    #[test]
    fn spectral_snr_examples() {
        let spec = AdcSpec::new(63.0, 14, 125e6).unwrap();
        assert_eq!(spectral_snr(&spec, 62.5e6).unwrap(), 63.0);
        let s = spectral_snr(&spec, 7.5e6).unwrap();
        assert!((s - 72.2).abs() < 0.05, "{s}");
        let nominal = AdcSpec::new(73.0, 14, 125e6).unwrap();
        assert_eq!(spectral_snr(&nominal, 62.5e6).unwrap(), 73.0);
        assert!(spectral_snr(&spec, 0.0).is_err());
        assert!(spectral_snr(&spec, 70e6).is_err());
    }

    #[test]
    fn adc_spec_rejects_super_ideal_snr() {
        assert!(AdcSpec::new(87.0, 14, 125e6).is_err());
        assert!(AdcSpec::new(86.04, 14, 125e6).is_ok());
    }

    #[test]
    fn enob_examples() {
        assert!((enob(63.0) - 10.17).abs() < 0.005);
        assert!((enob(86.0) - 13.99).abs() < 0.005);
        assert_eq!(enob(1.76), 0.0);
        for b in 1..=24 {
            let snr = 6.02 * b as f64 + 1.76;
            assert!((enob(snr) - b as f64).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn wrap_is_periodic(x in -10.0f64..10.0, n in -1_000_000i64..=1_000_000) {
            // stay clear of the +-pi seam where the two sides are a full turn apart
            let w = wrap_phase(x).unwrap();
            prop_assume!(PI - w.abs() > 1e-6);
            let shifted = wrap_phase(x + TAU * n as f64).unwrap();
            prop_assert!((shifted - w).abs() < 1e-9);
        }

        #[test]
        fn wrap_lands_in_half_open_interval(x in -1e9f64..1e9) {
            let w = wrap_phase(x).unwrap();
            prop_assert!((-PI..PI).contains(&w));
        }

        #[test]
        fn quantize_is_monotone(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let f = adc14();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize(lo, &f) <= quantize(hi, &f));
        }

        #[test]
        fn quantize_is_idempotent_on_codes(code in -8192i64..=8191) {
            let f = adc14();
            prop_assert_eq!(quantize(f.to_value(code), &f), code);
        }
    }
}
