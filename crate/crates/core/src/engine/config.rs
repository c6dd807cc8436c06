use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{LpfSelect, SineMode};
use crate::error::{Error, Result};
use crate::loop_filter::{design_gains, BranchEnable, CrossoverMode, GainSet, Limits, LoopFilterConfig};
use crate::plant::{AdcModel, DacSpec, LinkModel, NoiseSpec, VcoSpec};

/// User-facing loop filter settings; `kc` and `fs` come from the channel and
/// the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopGains {
    pub kp_db: f64,
    pub f_i: f64,
    pub f_ii: f64,
    pub f_d: f64,
    pub f_df: f64,
    pub mode: CrossoverMode,
    pub enabled: BranchEnable,
}

impl Default for LoopGains {
    fn default() -> Self {
        Self {
            kp_db: 0.0,
            f_i: 0.0,
            f_ii: 0.0,
            f_d: 0.0,
            f_df: 0.0,
            mode: CrossoverMode::RelativeToKp,
            enabled: BranchEnable {
                p: true,
                i: false,
                ii: false,
                d: false,
            },
        }
    }
}

impl LoopGains {
    pub fn filter_config(&self, kc: f64, fs: f64) -> LoopFilterConfig {
        LoopFilterConfig {
            kp_db: self.kp_db,
            kc,
            fs,
            f_i: self.f_i,
            f_ii: self.f_ii,
            f_d: self.f_d,
            f_df: self.f_df,
            mode: self.mode,
            enabled: self.enabled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DitherSettings {
    pub freq: f64,
    pub amplitude: f64,
    pub enabled: bool,
}

impl Default for DitherSettings {
    fn default() -> Self {
        Self {
            freq: 1e3,
            amplitude: 0.0,
            enabled: false,
        }
    }
}

/// Everything tunable on one DPLL channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// NCO frequency, Hz. `None` uses the beat carrier frequency.
    pub f_ref: Option<f64>,
    pub lpf: LpfSelect,
    pub sine_mode: SineMode,
    pub gains: LoopGains,
    /// Gain from this channel's actuator output to the beat frequency, Hz/V.
    /// `None` uses the link's `kc`.
    pub kc: Option<f64>,
    /// Plant gain used for the gain design. `None` derives it from the
    /// routing (the actuator gain, or the inner-loop ratio when cascaded).
    pub design_kc: Option<f64>,
    /// Frequency setpoint in Hz; for the second channel of a cascade, the
    /// target first-channel output in V.
    pub setpoint: f64,
    pub loop_closed: bool,
    pub ideal_actuator: bool,
    pub limits: Limits,
    pub dither: DitherSettings,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            f_ref: None,
            lpf: LpfSelect::Wide,
            sine_mode: SineMode::Exact,
            gains: LoopGains::default(),
            kc: None,
            design_kc: None,
            setpoint: 0.0,
            loop_closed: true,
            ideal_actuator: false,
            limits: Limits::default(),
            dither: DitherSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Each channel has its own plant, converter and demodulator.
    #[default]
    Independent,
    /// Channel 0's demodulator feeds every loop filter; all actuators act on
    /// the one plant.
    SharedInput,
    /// Channel 1's input is channel 0's controller output.
    Cascaded,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Independent => "independent",
            Scenario::SharedInput => "shared_input",
            Scenario::Cascaded => "cascaded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub scenario: Scenario,
    /// The channel driving the VCO; all others use the DAC.
    pub vco_owner: Option<usize>,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Independent,
            vco_owner: Some(0),
        }
    }
}

/// The test points of the signal chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestPoint {
    AdcIn,
    I,
    Q,
    Phase,
    PhaseIncrement,
    FilterOut,
    DacOut,
}

impl TestPoint {
    pub const ALL: [TestPoint; 7] = [
        TestPoint::AdcIn,
        TestPoint::I,
        TestPoint::Q,
        TestPoint::Phase,
        TestPoint::PhaseIncrement,
        TestPoint::FilterOut,
        TestPoint::DacOut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestPoint::AdcIn => "adc_in",
            TestPoint::I => "i",
            TestPoint::Q => "q",
            TestPoint::Phase => "phase",
            TestPoint::PhaseIncrement => "phase_increment",
            TestPoint::FilterOut => "filter_out",
            TestPoint::DacOut => "dac_out",
        }
    }
}

impl fmt::Display for TestPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestPoint::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown test point `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub fs: f64,
    /// Samples.
    pub duration: u64,
    pub channels: Vec<ChannelConfig>,
    pub plant: LinkModel,
    pub noise: Vec<NoiseSpec>,
    pub routing: RoutingConfig,
    pub recorded_testpoints: BTreeSet<TestPoint>,
    /// Beat carrier frequency, Hz. `None` means `fs / 4`.
    pub carrier_hz: Option<f64>,
    /// Beat amplitude at the ADC input, V.
    pub beat_amplitude: f64,
    /// Constant frequency offset of the beat from the carrier, Hz.
    pub beat_offset_hz: f64,
    pub adc: AdcModel,
    pub vco: VcoSpec,
    pub dac: DacSpec,
    pub counter_gate_s: f64,
}

impl SimConfig {
    /// A single closed loop around `plant` with default converters and no
    /// noise.
    pub fn single(fs: f64, plant: LinkModel, channel: ChannelConfig) -> Self {
        Self {
            fs,
            duration: 0,
            channels: vec![channel],
            plant,
            noise: Vec::new(),
            routing: RoutingConfig::default(),
            recorded_testpoints: BTreeSet::new(),
            carrier_hz: None,
            beat_amplitude: 0.5,
            beat_offset_hz: 0.0,
            adc: AdcModel::default(),
            vco: VcoSpec::for_sample_rate(fs),
            dac: DacSpec::default(),
            counter_gate_s: 1.0,
        }
    }

    pub fn carrier(&self) -> f64 {
        self.carrier_hz.unwrap_or(self.fs / 4.0)
    }

    /// Actuator gain of channel `k`, Hz/V.
    pub fn actuator_kc(&self, k: usize) -> f64 {
        self.channels[k].kc.unwrap_or(self.plant.kc)
    }

    /// Plant gain used to design channel `k`'s loop filter.
    pub fn design_kc(&self, k: usize) -> f64 {
        if let Some(kc) = self.channels[k].design_kc {
            return kc;
        }
        if self.routing.scenario == Scenario::Cascaded && k == 1 {
            // the outer loop sees the inner loop cancel its actuator
            -self.actuator_kc(1) / self.actuator_kc(0)
        } else {
            self.actuator_kc(k)
        }
    }

    pub fn gains(&self, k: usize) -> Result<GainSet> {
        design_gains(&self.channels[k].gains.filter_config(self.design_kc(k), self.fs))
    }

    /// Number of distinct plants the routing instantiates.
    pub fn plant_count(&self) -> usize {
        match self.routing.scenario {
            Scenario::Independent => self.channels.len(),
            Scenario::SharedInput | Scenario::Cascaded => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::out_of_range("fs", self.fs, "(0, inf)"));
        }
        if self.channels.is_empty() {
            return Err(Error::InvalidConfig("at least one channel is required".into()));
        }
        self.plant.validate()?;
        let nyq = self.fs / 2.0;
        let carrier = self.carrier();
        if !(carrier > 0.0 && carrier < nyq) {
            return Err(Error::out_of_range("carrier_hz", carrier, format!("(0, {nyq})")));
        }
        if !(self.beat_amplitude.is_finite() && self.beat_amplitude > 0.0) {
            return Err(Error::out_of_range("beat_amplitude", self.beat_amplitude, "(0, inf)"));
        }
        if !self.beat_offset_hz.is_finite() || self.beat_offset_hz.abs() >= nyq {
            return Err(Error::out_of_range("beat_offset_hz", self.beat_offset_hz, format!("(-{nyq}, {nyq})")));
        }
        if (self.counter_gate_s * self.fs).is_nan() || self.counter_gate_s * self.fs < 1.0 {
            return Err(Error::out_of_range("counter_gate_s", self.counter_gate_s, format!("[{}, inf)", 1.0 / self.fs)));
        }
        for n in &self.noise {
            if n.level.is_nan() || n.level < 0.0 {
                return Err(Error::out_of_range("noise level", n.level, "[0, inf)"));
            }
        }
        match self.routing.scenario {
            Scenario::Independent => {}
            Scenario::SharedInput => {
                if self.channels.len() < 2 {
                    return Err(Error::Routing("shared_input needs at least two channels".into()));
                }
            }
            Scenario::Cascaded => {
                if self.channels.len() != 2 {
                    return Err(Error::Routing("cascaded needs exactly two channels".into()));
                }
            }
        }
        if let Some(owner) = self.routing.vco_owner {
            if owner >= self.channels.len() {
                return Err(Error::Routing(format!(
                    "vco_owner {owner} does not exist ({} channels)",
                    self.channels.len()
                )));
            }
            self.vco.validate(self.fs)?;
        }
        self.dac.validate()?;
        for (k, ch) in self.channels.iter().enumerate() {
            if let Some(f) = ch.f_ref {
                if !(f >= 0.0 && f < nyq) {
                    return Err(Error::out_of_range("f_ref", f, format!("[0, {nyq})")));
                }
            }
            if let Some(kc) = ch.kc {
                if !kc.is_finite() || kc == 0.0 {
                    return Err(Error::out_of_range("kc", kc, "finite, non-zero"));
                }
            }
            if !ch.setpoint.is_finite() {
                return Err(Error::NonFinite("setpoint"));
            }
            if ch.dither.enabled {
                crate::instruments::DitherModule::new(self.fs, ch.dither.freq, ch.dither.amplitude)?;
            }
            self.gains(k)?;
        }
        Ok(())
    }

    /// A copy whose noise seeds are remixed with `salt`, for independent
    /// repetitions (one per VNA point, say).
    pub fn with_seed_salt(&self, salt: u64) -> Self {
        let mut c = self.clone();
        for n in &mut c.noise {
            n.seed = splitmix64(n.seed ^ splitmix64(salt));
        }
        c
    }
}

/// The SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
