//! CSV writers with fixed headers. Numbers use the shortest decimal that
//! round-trips to the same `f64`; lines end with LF.

use std::io::Write;

use num_complex::Complex64;

use crate::engine::SimTrace;
use crate::error::{Error, Result};
use crate::instruments::{CounterRecord, PsdResult, VnaResult};

/// Bumped whenever a header or column meaning changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const VNA_HEADER: [&str; 3] = ["freq_hz", "mag_db", "phase_deg"];
pub const COUNTER_HEADER: [&str; 3] = ["gate_index", "gate_time_s", "mean_freq_hz"];
pub const PSD_HEADER: [&str; 4] = [
    "freq_hz",
    "phase_psd_rad2_per_hz",
    "freq_psd_hz2_per_hz",
    "integrated_phase_rad",
];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Magnitude in dB and phase in degrees, unwrapped along the list.
pub fn write_bode_csv<W: Write>(w: W, freqs: &[f64], response: &[Complex64]) -> Result<()> {
    if freqs.len() != response.len() {
        return Err(Error::InvalidConfig("frequency and response lengths differ".into()));
    }
    let mut out = writer(w);
    out.write_record(VNA_HEADER)?;
    let mut prev: Option<f64> = None;
    for (f, h) in freqs.iter().zip(response) {
        let mut p = h.arg().to_degrees();
        if let Some(q) = prev {
            p -= 360.0 * ((p - q) / 360.0).round();
        }
        prev = Some(p);
        out.write_record([num(*f), num(20.0 * h.norm().log10()), num(p)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_vna_csv<W: Write>(w: W, r: &VnaResult) -> Result<()> {
    write_bode_csv(w, &r.freqs, &r.response)
}

pub fn write_counter_csv<W: Write>(w: W, records: &[CounterRecord]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(COUNTER_HEADER)?;
    for r in records {
        out.write_record([r.gate_index.to_string(), num(r.gate_time), num(r.mean_freq)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_psd_csv<W: Write>(w: W, r: &PsdResult) -> Result<()> {
    let mut out = writer(w);
    out.write_record(PSD_HEADER)?;
    for k in 0..r.freqs.len() {
        out.write_record([
            num(r.freqs[k]),
            num(r.phase_psd[k]),
            num(r.freq_psd[k]),
            num(r.integrated_phase[k]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `sample_index` followed by one column per recorded test point.
pub fn write_trace_csv<W: Write>(w: W, trace: &SimTrace, channel: usize) -> Result<()> {
    if channel >= trace.series.len() {
        return Err(Error::out_of_range("channel", channel as f64, format!("[0, {})", trace.series.len())));
    }
    let mut out = writer(w);
    let mut header = vec!["sample_index".to_string()];
    header.extend(trace.testpoints.iter().map(|t| t.name().to_string()));
    out.write_record(&header)?;
    let cols = &trace.series[channel];
    let mut row = Vec::with_capacity(cols.len() + 1);
    for n in 0..trace.len() {
        row.clear();
        row.push(n.to_string());
        row.extend(cols.iter().map(|c| num(c[n])));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bode_rows_round_trip() {
        let mut buf = Vec::new();
        let h = [Complex64::new(1.0, 0.0), Complex64::from_polar(0.1, -3.0), Complex64::from_polar(0.1, 3.0)];
        write_bode_csv(&mut buf, &[1.0, 2.0, 3.0], &h).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "freq_hz,mag_db,phase_deg");
        assert_eq!(lines[1], "1,0,0");
        assert!(!text.contains('\r'));
        // unwrapped: 3 rad follows -3 rad by going further negative
        let last: f64 = lines[3].split(',').nth(2).unwrap().parse().unwrap();
        assert!((last - (3.0f64.to_degrees() - 360.0)).abs() < 1e-9);
        let mag: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(mag, 20.0 * 0.1f64.log10());
    }

    #[test]
    fn counter_rows() {
        let mut buf = Vec::new();
        let r = CounterRecord {
            gate_index: 3,
            mean_freq: 1000.5,
            gate_time: 1.0,
            phase_sum: 0.0,
        };
        write_counter_csv(&mut buf, &[r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "gate_index,gate_time_s,mean_freq_hz\n3,1,1000.5\n");
    }
}
