//! TOML run configuration. Every dimensioned key carries its unit as a
//! suffix (`_hz`, `_s`, `_v`, `_db`, `_hz_per_v`).

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::{Path, PathBuf};

use dpllsim_core::dsp::{LpfSelect, SineMode};
use dpllsim_core::engine::{
    quarter_pi_tuning, splitmix64, ChannelConfig, DitherSettings, LoopGains, RoutingConfig, Scenario, SimConfig,
    TestPoint,
};
use dpllsim_core::instruments::{VnaMode, VnaSettings};
use dpllsim_core::loop_filter::{BranchEnable, CrossoverMode, Limits};
use dpllsim_core::plant::{
    vco_map, AdcModel, AomVcoModel, DacSpec, LinkModel, MeasuredResponse, NoiseKind, NoiseSpec, VcoSpec,
};
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

pub const SEED_ENV: &str = "DPLLSIM_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {err}")]
    Read { path: String, err: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Invalid { path: String, line: usize, message: String },
    #[error("{SEED_ENV}: `{0}` is not an unsigned 64-bit integer")]
    Seed(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    sim: Spanned<SimSection>,
    #[serde(default)]
    routing: Option<Spanned<RoutingSection>>,
    #[serde(default)]
    link: Option<Spanned<LinkSection>>,
    #[serde(default)]
    converters: Option<Spanned<ConverterSection>>,
    #[serde(default)]
    vna: Option<Spanned<VnaSection>>,
    #[serde(default)]
    design: Option<Spanned<DesignSection>>,
    #[serde(default)]
    channel: Vec<Spanned<ChannelSection>>,
    #[serde(default)]
    noise: Vec<Spanned<NoiseSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    fs_hz: f64,
    #[serde(default)]
    duration_samples: u64,
    #[serde(default)]
    seed: u64,
    carrier_hz: Option<f64>,
    #[serde(default = "default_beat_amplitude")]
    beat_amplitude_v: f64,
    #[serde(default)]
    beat_offset_hz: f64,
    #[serde(default = "default_gate")]
    counter_gate_s: f64,
    #[serde(default)]
    record: Vec<String>,
    psd_segment_samples: Option<usize>,
}

fn default_beat_amplitude() -> f64 {
    0.5
}

fn default_gate() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoutingSection {
    #[serde(default)]
    scenario: Scenario,
    /// Channel index, or -1 for no VCO.
    #[serde(default)]
    vco_owner: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum LinkPreset {
    Fiber,
    Local,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSection {
    preset: Option<LinkPreset>,
    tau_link_s: Option<f64>,
    tau_aom_s: Option<f64>,
    tau_fpga_s: Option<f64>,
    kc_hz_per_v: Option<f64>,
    double_pass: Option<bool>,
    /// CSV of a measured AOM+VCO response (freq_hz, mag_db, phase_deg),
    /// relative to the config file.
    aom_response_csv: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConverterSection {
    adc_bits: Option<u32>,
    adc_full_scale_v: Option<f64>,
    #[serde(default)]
    adc_ideal: bool,
    dac_bits: Option<u32>,
    dac_full_scale_v: Option<f64>,
    vco_bits: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum CrossoverKey {
    Kp,
    #[serde(rename = "0db")]
    ZeroDb,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    #[serde(default)]
    kp_db: f64,
    #[serde(default)]
    f_i_hz: f64,
    #[serde(default)]
    f_ii_hz: f64,
    #[serde(default)]
    f_d_hz: f64,
    #[serde(default)]
    f_df_hz: f64,
    crossover: Option<CrossoverKey>,
    /// Subset of `p`, `i`, `ii`, `d`.
    branches: Option<Vec<String>>,
    /// Replace the gains with the pi/4 phase-margin tuning for the link's
    /// total delay.
    #[serde(default)]
    auto_tune: bool,
    f_ref_hz: Option<f64>,
    #[serde(default)]
    lpf: LpfSelect,
    #[serde(default)]
    sine_mode: SineMode,
    kc_hz_per_v: Option<f64>,
    design_kc_hz_per_v: Option<f64>,
    setpoint_hz: Option<f64>,
    /// Cascade outer loop only: target inner-loop output.
    setpoint_v: Option<f64>,
    #[serde(default = "yes")]
    loop_closed: bool,
    #[serde(default)]
    ideal_actuator: bool,
    integrator_limit_v: Option<f64>,
    double_integrator_limit_v: Option<f64>,
    #[serde(default)]
    dither_enabled: bool,
    dither_freq_hz: Option<f64>,
    #[serde(default)]
    dither_amplitude_v: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    kind: NoiseKind,
    level_rad_per_rthz: Option<f64>,
    level_hz_per_rthz: Option<f64>,
    snr_db: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum VnaModeKey {
    Transfer,
    Rejection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VnaSection {
    start_hz: Option<f64>,
    stop_hz: Option<f64>,
    points: Option<usize>,
    amplitude_v: Option<f64>,
    settle_cycles: Option<u32>,
    cycles_per_point: Option<u32>,
    warmup_samples: Option<u64>,
    mode: Option<VnaModeKey>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignSection {
    start_hz: Option<f64>,
    stop_hz: Option<f64>,
    points: Option<usize>,
}

/// Frequency grid of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub seed: u64,
    pub vna: VnaSettings,
    pub vna_sweep: Sweep,
    pub design_sweep: Sweep,
    pub psd_segment: Option<usize>,
}

/// Byte offset to 1-based line number.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Ctx<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            path: self.path.display().to_string(),
            line: line_of(self.text, span.start),
            message: message.into(),
        }
    }
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|err| ConfigError::Read {
        path: path.display().to_string(),
        err,
    })?;
    let seed_override = match std::env::var(SEED_ENV) {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| ConfigError::Seed(s))?),
        Err(_) => None,
    };
    parse(&text, path, seed_override)
}

pub fn parse(text: &str, path: &Path, seed_override: Option<u64>) -> Result<RunConfig, ConfigError> {
    let cx = Ctx { path, text };
    let file: FileConfig = toml::from_str(text).map_err(|e| {
        let at = e.span().map_or(0, |s| s.start);
        cx.err(at..at, e.message().trim().to_string())
    })?;

    let sim_span = file.sim.span();
    let s = file.sim.into_inner();
    let fs = s.fs_hz;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(cx.err(sim_span, "fs_hz must be positive"));
    }
    let seed = seed_override.unwrap_or(s.seed);

    let link_span = file.link.as_ref().map_or(0..0, |l| l.span());
    let plant = match file.link {
        Some(l) => link_model(&cx, l.span(), l.into_inner(), fs)?,
        None => LinkModel::fiber_link(fs),
    };

    let mut adc = AdcModel::default();
    let mut dac = DacSpec::default();
    let mut vco = VcoSpec::for_sample_rate(fs);
    if let Some(c) = file.converters {
        let span = c.span();
        let c = c.into_inner();
        adc.bits = c.adc_bits.unwrap_or(adc.bits);
        adc.full_scale = c.adc_full_scale_v.unwrap_or(adc.full_scale);
        adc.ideal = c.adc_ideal;
        dac.bits = c.dac_bits.unwrap_or(dac.bits);
        if let Some(v) = c.dac_full_scale_v {
            dac.v_min = -v;
            dac.v_max = v;
        }
        if let Some(bits) = c.vco_bits {
            if !(1..=32).contains(&bits) {
                return Err(cx.err(span, format!("vco_bits must be in [1, 32], got {bits}")));
            }
            vco.word_bits = bits;
            vco.quiescent_offset = vco_map(&vco, 1 << (bits - 1));
        }
    }

    let mut recorded = BTreeSet::new();
    for name in &s.record {
        let tp: TestPoint = name.parse().map_err(|e: dpllsim_core::Error| cx.err(sim_span.clone(), e.to_string()))?;
        recorded.insert(tp);
    }

    let routing = match file.routing {
        Some(r) => {
            let span = r.span();
            let r = r.into_inner();
            let vco_owner = match r.vco_owner {
                -1 => None,
                k if k >= 0 => Some(k as usize),
                k => return Err(cx.err(span, format!("vco_owner must be a channel index or -1, got {k}"))),
            };
            RoutingConfig {
                scenario: r.scenario,
                vco_owner,
            }
        }
        None => RoutingConfig::default(),
    };

    if file.channel.is_empty() {
        return Err(cx.err(0..0, "at least one [[channel]] is required"));
    }
    let tau_total = plant.total_delay();
    let mut channels = Vec::with_capacity(file.channel.len());
    let mut spans = Vec::with_capacity(file.channel.len());
    for (k, c) in file.channel.into_iter().enumerate() {
        let span = c.span();
        let ch = channel(&cx, span.clone(), k, c.into_inner(), &routing, plant.kc, tau_total, fs)?;
        channels.push(ch);
        spans.push(span);
    }

    let mut noise = Vec::new();
    for (k, n) in file.noise.into_iter().enumerate() {
        let span = n.span();
        let n = n.into_inner();
        let (level, key) = match n.kind {
            NoiseKind::WhitePhase => (n.level_rad_per_rthz, "level_rad_per_rthz"),
            NoiseKind::WhiteFrequency => (n.level_hz_per_rthz, "level_hz_per_rthz"),
            NoiseKind::AdcSnr => (n.snr_db, "snr_db"),
        };
        let given = [n.level_rad_per_rthz, n.level_hz_per_rthz, n.snr_db].iter().filter(|v| v.is_some()).count();
        let level = match (level, given) {
            (Some(v), 1) => v,
            _ => return Err(cx.err(span, format!("this noise kind takes exactly one level key, `{key}`"))),
        };
        noise.push(NoiseSpec {
            kind: n.kind,
            level,
            seed: splitmix64(seed ^ splitmix64(k as u64)),
        });
    }

    let sim = SimConfig {
        fs,
        duration: s.duration_samples,
        channels,
        plant,
        noise,
        routing,
        recorded_testpoints: recorded,
        carrier_hz: s.carrier_hz,
        beat_amplitude: s.beat_amplitude_v,
        beat_offset_hz: s.beat_offset_hz,
        adc,
        vco,
        dac,
        counter_gate_s: s.counter_gate_s,
    };
    for (k, span) in spans.iter().enumerate() {
        sim.gains(k).map_err(|e| cx.err(span.clone(), format!("channel {k}: {e}")))?;
    }
    if let Err(e) = sim.validate() {
        // point at the section the failing value most likely came from
        let span = match &e {
            dpllsim_core::Error::Routing(_) => spans[0].clone(),
            dpllsim_core::Error::OutOfRange { name, .. } if name.starts_with("tau") || *name == "kc" => link_span,
            _ => sim_span,
        };
        return Err(cx.err(span, e.to_string()));
    }

    let mut vna = VnaSettings::default();
    let mut vna_sweep = Sweep {
        start_hz: 100.0,
        stop_hz: (fs / 100.0).min(1e6),
        points: 50,
    };
    if let Some(v) = file.vna {
        let v = v.into_inner();
        vna.amplitude = v.amplitude_v.unwrap_or(vna.amplitude);
        vna.settle_cycles = v.settle_cycles.unwrap_or(vna.settle_cycles);
        vna.cycles_per_point = v.cycles_per_point.unwrap_or(vna.cycles_per_point);
        vna.warmup_samples = v.warmup_samples.unwrap_or(vna.warmup_samples);
        vna.mode = match v.mode {
            Some(VnaModeKey::Rejection) => VnaMode::Rejection,
            Some(VnaModeKey::Transfer) | None => VnaMode::Transfer,
        };
        vna_sweep.start_hz = v.start_hz.unwrap_or(vna_sweep.start_hz);
        vna_sweep.stop_hz = v.stop_hz.unwrap_or(vna_sweep.stop_hz);
        vna_sweep.points = v.points.unwrap_or(vna_sweep.points);
    }
    let mut design_sweep = Sweep {
        start_hz: 10.0,
        stop_hz: 0.49 * fs,
        points: 200,
    };
    if let Some(d) = file.design {
        let d = d.into_inner();
        design_sweep.start_hz = d.start_hz.unwrap_or(design_sweep.start_hz);
        design_sweep.stop_hz = d.stop_hz.unwrap_or(design_sweep.stop_hz);
        design_sweep.points = d.points.unwrap_or(design_sweep.points);
    }
    Ok(RunConfig {
        sim,
        seed,
        vna,
        vna_sweep,
        design_sweep,
        psd_segment: s.psd_segment_samples,
    })
}

fn link_model(cx: &Ctx, span: Range<usize>, l: LinkSection, fs: f64) -> Result<LinkModel, ConfigError> {
    let mut m = match l.preset {
        Some(LinkPreset::Local) => LinkModel::local(VcoSpec::for_sample_rate(fs).gain, 0.0),
        Some(LinkPreset::Fiber) | None => LinkModel::fiber_link(fs),
    };
    m.tau_link = l.tau_link_s.unwrap_or(m.tau_link);
    m.tau_aom = l.tau_aom_s.unwrap_or(m.tau_aom);
    m.tau_fpga = l.tau_fpga_s.unwrap_or(m.tau_fpga);
    m.kc = l.kc_hz_per_v.unwrap_or(m.kc);
    m.double_pass = l.double_pass.unwrap_or(m.double_pass);
    if let Some(csv) = l.aom_response_csv {
        let full = cx.path.parent().map_or(csv.clone(), |dir| dir.join(&csv));
        let r = MeasuredResponse::from_csv_path(&full).map_err(|e| cx.err(span.clone(), e.to_string()))?;
        m.aom_vco = AomVcoModel::Measured(r);
    }
    m.validate().map_err(|e| cx.err(span, e.to_string()))?;
    Ok(m)
}

#[allow(clippy::too_many_arguments)]
fn channel(
    cx: &Ctx,
    span: Range<usize>,
    k: usize,
    c: ChannelSection,
    routing: &RoutingConfig,
    link_kc: f64,
    tau_total: f64,
    fs: f64,
) -> Result<ChannelConfig, ConfigError> {
    let mut enabled = BranchEnable {
        p: true,
        i: false,
        ii: false,
        d: false,
    };
    if let Some(list) = &c.branches {
        enabled = BranchEnable {
            p: false,
            i: false,
            ii: false,
            d: false,
        };
        for b in list {
            match b.as_str() {
                "p" => enabled.p = true,
                "i" => enabled.i = true,
                "ii" => enabled.ii = true,
                "d" => enabled.d = true,
                other => return Err(cx.err(span, format!("unknown branch `{other}` (p, i, ii, d)"))),
            }
        }
    }
    let gains = if c.auto_tune {
        let kc = c.design_kc_hz_per_v.or(c.kc_hz_per_v).unwrap_or(link_kc);
        quarter_pi_tuning(tau_total, kc, fs).map_err(|e| cx.err(span.clone(), format!("auto_tune: {e}")))?
    } else {
        LoopGains {
            kp_db: c.kp_db,
            f_i: c.f_i_hz,
            f_ii: c.f_ii_hz,
            f_d: c.f_d_hz,
            f_df: c.f_df_hz,
            mode: match c.crossover {
                Some(CrossoverKey::ZeroDb) => CrossoverMode::RelativeTo0dB,
                Some(CrossoverKey::Kp) | None => CrossoverMode::RelativeToKp,
            },
            enabled,
        }
    };
    let outer = routing.scenario == Scenario::Cascaded && k == 1;
    let setpoint = match (c.setpoint_hz, c.setpoint_v, outer) {
        (None, None, _) => 0.0,
        (Some(v), None, false) | (None, Some(v), true) => v,
        (_, _, true) => return Err(cx.err(span, "the outer cascade loop takes setpoint_v")),
        (_, _, false) => return Err(cx.err(span, "this channel takes setpoint_hz")),
    };
    let mut limits = Limits::default();
    limits.integrator = c.integrator_limit_v.unwrap_or(limits.integrator);
    limits.double_integrator = c.double_integrator_limit_v.unwrap_or(limits.double_integrator);
    let mut dither = DitherSettings {
        amplitude: c.dither_amplitude_v,
        enabled: c.dither_enabled,
        ..DitherSettings::default()
    };
    dither.freq = c.dither_freq_hz.unwrap_or(dither.freq);
    Ok(ChannelConfig {
        f_ref: c.f_ref_hz,
        lpf: c.lpf,
        sine_mode: c.sine_mode,
        gains,
        kc: c.kc_hz_per_v,
        design_kc: c.design_kc_hz_per_v,
        setpoint,
        loop_closed: c.loop_closed,
        ideal_actuator: c.ideal_actuator,
        limits,
        dither,
    })
}
