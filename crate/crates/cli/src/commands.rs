use std::path::Path;

use anyhow::{bail, Context, Result};
use dpllsim_core::engine::{max_bandwidth, run, Engine, TestPoint};
use dpllsim_core::export::{write_bode_csv, write_counter_csv, write_psd_csv, write_trace_csv, write_vna_csv};
use dpllsim_core::instruments::{log_freqs, psd_estimate, vna_sweep, PsdKind};
use dpllsim_core::loop_filter::controller_response;
use log::{info, warn};

use crate::config::RunConfig;
use crate::manifest::RunRecorder;

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// The instrument finished but flagged its result.
    Warning,
}

pub fn design(rc: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let sim = &rc.sim;
    let sweep = rc.design_sweep;
    let stop = sweep.stop_hz.min(0.4999 * sim.fs);
    let freqs = log_freqs(sweep.start_hz, stop, sweep.points)?;
    let mut rec = RunRecorder::new(out_dir, "design")?;
    for k in 0..sim.channels.len() {
        let g = sim.gains(k)?;
        println!("channel {k}: design kc {} Hz/V", sim.design_kc(k));
        println!("  kp = {:e}", g.kp);
        println!("  ki = {:e}", g.ki);
        println!("  kii = {:e}", g.kii);
        println!("  kd = {:e}", g.kd);
        println!("  d_filter_coeff = {:e}", g.d_filter_coeff);
        let h = freqs
            .iter()
            .map(|&f| controller_response(&g, f, sim.fs))
            .collect::<dpllsim_core::Result<Vec<_>>>()?;
        rec.write(&format!("bode_ch{k}.csv"), "bode", |w| write_bode_csv(w, &freqs, &h))?;
    }
    let tau = sim.plant.total_delay();
    println!("total loop delay {tau:e} s");
    if tau > 0.0 {
        println!("max bandwidth {} Hz", max_bandwidth(tau)?);
    } else {
        println!("max bandwidth unbounded (no loop delay)");
    }
    rec.finish(rc.seed, sim)?;
    Ok(Outcome::Ok)
}

pub fn vna(rc: &RunConfig, out_dir: &Path, closed: Option<bool>, points: Option<usize>) -> Result<Outcome> {
    let mut cfg = rc.sim.clone();
    if let Some(c) = closed {
        for ch in &mut cfg.channels {
            ch.loop_closed = c;
        }
    }
    let sweep = rc.vna_sweep;
    let freqs = log_freqs(sweep.start_hz, sweep.stop_hz, points.unwrap_or(sweep.points))?;
    info!("sweeping {} points from {} Hz to {} Hz", freqs.len(), sweep.start_hz, sweep.stop_hz);
    let r = vna_sweep(|i| Engine::new(cfg.with_seed_salt(i as u64)), &freqs, &rc.vna)?;
    let mut rec = RunRecorder::new(out_dir, "vna")?;
    rec.write("vna.csv", "vna", |w| write_vna_csv(w, &r))?;
    rec.finish(rc.seed, &cfg)?;
    if r.any_saturated() {
        let n = r.saturated.iter().filter(|&&s| s).count();
        warn!("{n} of {} sweep points saturated; lower the excitation amplitude", freqs.len());
        return Ok(Outcome::Warning);
    }
    Ok(Outcome::Ok)
}

fn default_segment(n: usize) -> usize {
    let target = (n / 8).max(4);
    1 << (usize::BITS - 1 - target.leading_zeros())
}

pub fn simulate(
    rc: &RunConfig,
    out_dir: &Path,
    duration: Option<u64>,
    record: Option<Vec<TestPoint>>,
) -> Result<Outcome> {
    let mut cfg = rc.sim.clone();
    if let Some(d) = duration {
        cfg.duration = d;
    }
    if cfg.duration == 0 {
        bail!("duration is zero; set [sim] duration_samples or pass --duration");
    }
    if let Some(tps) = record {
        cfg.recorded_testpoints = tps.into_iter().collect();
    }
    // the spectra are computed from the phase increment
    cfg.recorded_testpoints.insert(TestPoint::PhaseIncrement);
    let trace = run(&cfg)?;
    let segment = rc.psd_segment.unwrap_or_else(|| default_segment(trace.len()));
    let mut rec = RunRecorder::new(out_dir, "simulate")?;
    for k in 0..trace.series.len() {
        rec.write(&format!("trace_ch{k}.csv"), "trace", |w| write_trace_csv(w, &trace, k))?;
        rec.write(&format!("counter_ch{k}.csv"), "counter", |w| write_counter_csv(w, &trace.counter[k]))?;
        let hz: Vec<f64> = trace
            .get(k, TestPoint::PhaseIncrement)
            .context("phase increment not recorded")?
            .iter()
            .map(|x| x * cfg.fs / std::f64::consts::TAU)
            .collect();
        let psd = psd_estimate(&hz, cfg.fs, segment, PsdKind::Frequency)?;
        rec.write(&format!("psd_ch{k}.csv"), "psd", |w| write_psd_csv(w, &psd))?;
        if let Some(last) = psd.integrated_phase.first() {
            println!("channel {k}: integrated phase {last} rad, {} counter gates", trace.counter[k].len());
        }
    }
    rec.finish(rc.seed, &cfg)?;
    Ok(Outcome::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_are_powers_of_two() {
        assert_eq!(default_segment(1 << 20), 1 << 17);
        assert_eq!(default_segment(100_000), 8192);
        assert_eq!(default_segment(10), 4);
    }
}
