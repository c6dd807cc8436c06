//! Double-pass fiber link with an AOM actuator.

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a measured AOM+VCO response file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePoint {
    pub freq_hz: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
}

/// A measured transfer function, interpolated linearly in frequency
/// (magnitude in dB, unwrapped phase).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredResponse {
    points: Vec<ResponsePoint>,
}

impl MeasuredResponse {
    pub fn new(mut points: Vec<ResponsePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::MeasuredResponse("no data rows".into()));
        }
        if points.iter().any(|p| !(p.freq_hz.is_finite() && p.mag_db.is_finite() && p.phase_deg.is_finite())) {
            return Err(Error::MeasuredResponse("non-finite value".into()));
        }
        if points.windows(2).any(|w| w[1].freq_hz <= w[0].freq_hz) || points[0].freq_hz <= 0.0 {
            return Err(Error::MeasuredResponse("frequencies must be positive and strictly increasing".into()));
        }
        // unwrap
        for k in 1..points.len() {
            let prev = points[k - 1].phase_deg;
            let mut p = points[k].phase_deg;
            while p - prev > 180.0 {
                p -= 360.0;
            }
            while p - prev < -180.0 {
                p += 360.0;
            }
            points[k].phase_deg = p;
        }
        Ok(Self { points })
    }

    /// Reads `freq_hz,mag_db,phase_deg` with a header row.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::MeasuredResponse(e.to_string()))?.clone();
        let expected = ["freq_hz", "mag_db", "phase_deg"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::MeasuredResponse(format!(
                "expected header {}, found {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for (line, row) in rdr.deserialize::<ResponsePoint>().enumerate() {
            points.push(row.map_err(|e| Error::MeasuredResponse(format!("row {}: {e}", line + 2)))?);
        }
        Self::new(points)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::MeasuredResponse(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn points(&self) -> &[ResponsePoint] {
        &self.points
    }

    pub fn response(&self, f: f64) -> Complex64 {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        let (mag_db, phase_deg) = if f <= first.freq_hz {
            // phase of a delay-like response goes to zero at DC
            (first.mag_db, first.phase_deg * (f / first.freq_hz))
        } else if f >= last.freq_hz {
            (last.mag_db, last.phase_deg)
        } else {
            let k = pts.partition_point(|p| p.freq_hz <= f);
            let (a, b) = (pts[k - 1], pts[k]);
            let t = (f - a.freq_hz) / (b.freq_hz - a.freq_hz);
            (a.mag_db + t * (b.mag_db - a.mag_db), a.phase_deg + t * (b.phase_deg - a.phase_deg))
        };
        Complex64::from_polar(10f64.powf(mag_db / 20.0), phase_deg.to_radians())
    }

    /// Least-squares delay from the unwrapped phase slope.
    pub fn effective_delay(&self) -> f64 {
        let n = self.points.len() as f64;
        if self.points.len() < 2 {
            return -self.points[0].phase_deg.to_radians() / (TAU * self.points[0].freq_hz);
        }
        let mx = self.points.iter().map(|p| p.freq_hz).sum::<f64>() / n;
        let my = self.points.iter().map(|p| p.phase_deg.to_radians()).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for p in &self.points {
            sxy += (p.freq_hz - mx) * (p.phase_deg.to_radians() - my);
            sxx += (p.freq_hz - mx).powi(2);
        }
        -(sxy / sxx) / TAU
    }

    pub fn dc_gain(&self) -> f64 {
        10f64.powf(self.points[0].mag_db / 20.0)
    }
}

/// Transfer function of the AOM driven by the VCO.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AomVcoModel {
    /// Unity-gain pure delay of `LinkModel::tau_aom`.
    PureDelay,
    Measured(MeasuredResponse),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    /// One-way differential fiber delay, s.
    pub tau_link: f64,
    /// AOM latency, s.
    pub tau_aom: f64,
    /// Processing latency of the controller, s.
    pub tau_fpga: f64,
    /// DC gain from controller output to measured beat frequency, Hz/V.
    pub kc: f64,
    pub double_pass: bool,
    pub aom_vco: AomVcoModel,
}

impl LinkModel {
    /// The 400 m double-pass link: 2.0 us fiber, 1.5 us AOM, 0.5 us
    /// controller. `kc` is twice the VCO gain (two passes through the AOM).
    pub fn fiber_link(fs: f64) -> Self {
        Self {
            tau_link: 2.0e-6,
            tau_aom: 1.5e-6,
            tau_fpga: 0.5e-6,
            kc: 2.0 * super::VcoSpec::for_sample_rate(fs).gain,
            double_pass: true,
            aom_vco: AomVcoModel::PureDelay,
        }
    }

    /// Actuator, link and controller delays with no fiber (local loop).
    pub fn local(kc: f64, tau: f64) -> Self {
        Self {
            tau_link: 0.0,
            tau_aom: 0.0,
            tau_fpga: tau,
            kc,
            double_pass: false,
            aom_vco: AomVcoModel::PureDelay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_link", self.tau_link), ("tau_aom", self.tau_aom), ("tau_fpga", self.tau_fpga)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::out_of_range(name, v, "[0, inf)"));
            }
        }
        if !self.kc.is_finite() || self.kc == 0.0 {
            return Err(Error::out_of_range("kc", self.kc, "finite, non-zero"));
        }
        Ok(())
    }

    pub fn aom_vco_response(&self, f: f64) -> Complex64 {
        match &self.aom_vco {
            AomVcoModel::PureDelay => Complex64::from_polar(1.0, -TAU * f * self.tau_aom),
            AomVcoModel::Measured(m) => m.response(f),
        }
    }

    /// Delay used for the AOM in time-domain simulation.
    pub fn aom_delay(&self) -> f64 {
        match &self.aom_vco {
            AomVcoModel::PureDelay => self.tau_aom,
            AomVcoModel::Measured(m) => m.effective_delay().max(0.0),
        }
    }

    fn aom_gain(&self) -> f64 {
        match &self.aom_vco {
            AomVcoModel::PureDelay => 1.0,
            AomVcoModel::Measured(m) => m.dc_gain(),
        }
    }

    /// Normalized (unit DC gain) link response including the AOM.
    pub fn response(&self, f: f64) -> Complex64 {
        link_response(f, self, self.aom_vco_response(f))
    }

    /// Total loop delay: fiber, AOM and controller.
    pub fn total_delay(&self) -> f64 {
        total_latency(&[self.tau_link, self.aom_delay(), self.tau_fpga])
    }

    /// Taps `(delay_samples, weight)` realizing the link, AOM and controller
    /// latency between the actuator and the beat frequency. `pipeline`
    /// is the latency (in samples) the simulated digital chain already adds;
    /// it is taken out of the lumped controller delay as far as causality
    /// allows. Delays are rounded to whole samples.
    pub fn actuator_taps(&self, fs: f64, pipeline: f64) -> Vec<(usize, f64)> {
        let link = (self.tau_link * fs).round() as usize;
        let aom = (self.aom_delay() * fs).round() as usize;
        let mut lumped = (self.tau_fpga * fs - pipeline).round().max(0.0) as usize;
        let gain = self.aom_gain();
        if self.double_pass {
            // cos^2(w t) e^{-j w t} = (2 e^{-j w t} + e^{+j w t} + e^{-3j w t}) / 4
            lumped = lumped.max(link.saturating_sub(aom));
            let center = aom + lumped + link;
            vec![
                (center - 2 * link, 0.25 * gain),
                (center, 0.5 * gain),
                (center + 2 * link, 0.25 * gain),
            ]
        } else {
            vec![(aom + lumped + link, gain)]
        }
    }
}

/// Link transfer function: the AOM+VCO response times the fiber delay, times
/// the `cos^2` double-pass factor when `double_pass` is set.
pub fn link_response(f: f64, m: &LinkModel, aom_vco: Complex64) -> Complex64 {
    let x = TAU * f * m.tau_link;
    let delay = Complex64::from_polar(1.0, -x);
    let pass = if m.double_pass { x.cos().powi(2) } else { 1.0 };
    aom_vco * delay * pass
}

/// Sum of latency contributions.
pub fn total_latency(parts: &[f64]) -> f64 {
    parts.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_examples() {
        assert!((total_latency(&[207e-9, 200e-9]) - 407e-9).abs() < 1e-18);
        assert!((total_latency(&[407e-9, 158e-9]) - 565e-9).abs() < 1e-18);
        assert!((total_latency(&[2.0e-6, 1.5e-6, 0.5e-6]) - 4.0e-6).abs() < 1e-18);
        assert!((LinkModel::fiber_link(125e6).total_delay() - 4.0e-6).abs() < 1e-18);
    }

    #[test]
    fn response_dc_limit() {
        let m = LinkModel::fiber_link(125e6);
        let h = link_response(1e-3, &m, Complex64::new(0.8, 0.0));
        assert!((h.norm() - 0.8).abs() < 1e-9);
    }

    #[test]
    fn first_null_at_quarter_inverse_delay() {
        let m = LinkModel::fiber_link(125e6);
        assert!(m.response(125e3).norm() < 1e-20);
        // cos^2(pi/4) = 1/2
        assert!((m.response(62.5e3).norm() - 0.5).abs() < 1e-12);
        for n in 0..5 {
            let f = (2 * n + 1) as f64 / (4.0 * m.tau_link);
            assert!(m.response(f).norm() < 1e-18);
        }
        let mut single = m.clone();
        single.double_pass = false;
        assert!((single.response(125e3).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn taps_reproduce_the_analytic_link() {
        let fs = 50e6;
        let m = LinkModel::fiber_link(fs);
        let taps = super::super::delay::TapDelay::new(m.actuator_taps(fs, 0.0));
        for f in [1e3, 30e3, 62.5e3, 100e3] {
            let h = taps.response(f / fs);
            let expected = m.response(f) * Complex64::from_polar(1.0, -TAU * f * m.tau_fpga);
            assert!((h - expected).norm() < 1e-9, "{f}: {h} vs {expected}");
        }
    }

    #[test]
    fn double_pass_taps_stay_causal() {
        let fs = 10e6;
        let m = LinkModel::fiber_link(fs);
        let taps = m.actuator_taps(fs, 3.0);
        assert_eq!(taps[0].0, 0);
        let total: f64 = taps.iter().map(|t| t.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn measured_response_csv() {
        let csv = "freq_hz,mag_db,phase_deg\n1000,0,-0.54\n10000,0,-5.4\n100000,-0.5,-54\n";
        let m = MeasuredResponse::from_csv_reader(csv.as_bytes()).unwrap();
        assert!((m.effective_delay() - 1.5e-6).abs() < 1e-12);
        let h = m.response(5500.0);
        assert!((h.arg().to_degrees() + 2.97).abs() < 1e-9);
        assert!(MeasuredResponse::from_csv_reader("f,m,p\n1,0,0\n".as_bytes()).is_err());
        assert!(MeasuredResponse::from_csv_reader("freq_hz,mag_db,phase_deg\n2,0,0\n1,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn measured_phase_is_unwrapped() {
        let pts = vec![
            ResponsePoint { freq_hz: 1.0, mag_db: 0.0, phase_deg: 170.0 },
            ResponsePoint { freq_hz: 2.0, mag_db: 0.0, phase_deg: -170.0 },
        ];
        let m = MeasuredResponse::new(pts).unwrap();
        assert_eq!(m.points()[1].phase_deg, 190.0);
    }
}
