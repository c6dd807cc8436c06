use std::f64::consts::TAU;

use num_complex::Complex64;

use super::config::{Scenario, SimConfig};
use crate::dsp::{Demodulator, Lowpass4, Nco};
use crate::error::{Error, Result};
use crate::instruments::{CounterRecord, CounterState, DitherModule, LoopUnderTest, Probe};
use crate::loop_filter::{controller_response_unchecked, design_gains, GainSet, LoopFilter};
use crate::plant::{Actuator, ActuatorKind, BeatPlant, BeatSample, TapDelay};

/// Values at every test point of one channel for the latest sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelSample {
    pub adc_in: f64,
    pub i: f64,
    pub q: f64,
    pub phase: f64,
    pub phase_increment: f64,
    /// Phase increment expressed in Hz.
    pub measurement: f64,
    pub filter_out: f64,
    /// Controller output plus dither and stimulus, before the converter.
    pub drive: f64,
    /// Converter output in controller volts.
    pub dac_out: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone)]
struct Channel {
    demod: Option<Demodulator>,
    filter: LoopFilter,
    actuator: Actuator,
    actuator_kc: f64,
    dither: Option<DitherModule>,
    counter: CounterState,
    plant: usize,
    last: ChannelSample,
}

/// A running, sample-synchronous simulation.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: SimConfig,
    channels: Vec<Channel>,
    plants: Vec<BeatPlant>,
    plant_drive: Vec<f64>,
    beats: Vec<BeatSample>,
    sample: u64,
    probe_channel: usize,
    disturbance_hz: f64,
    new_records: Vec<(usize, CounterRecord)>,
}

/// Latency, in samples, that the chain itself adds between the actuator
/// command and the measured frequency: the output register plus the
/// demodulation low-pass.
pub fn pipeline_latency(lpf: &Lowpass4) -> f64 {
    1.0 + lpf.dc_group_delay()
}

impl Engine {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let fs = cfg.fs;
        let lead = Lowpass4::from_select(cfg.channels[0].lpf);
        let taps = cfg.plant.actuator_taps(fs, pipeline_latency(&lead));
        let plants = (0..cfg.plant_count())
            .map(|_| {
                BeatPlant::new(fs, cfg.carrier(), cfg.beat_amplitude, taps.clone(), &cfg.noise, cfg.adc).map(|mut p| {
                    p.set_offset_hz(cfg.beat_offset_hz);
                    p
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut channels = Vec::with_capacity(cfg.channels.len());
        for (k, ch) in cfg.channels.iter().enumerate() {
            let own_input = cfg.routing.scenario == Scenario::Independent || k == 0;
            let demod = if own_input {
                let nco = Nco::with_frequency(ch.f_ref.unwrap_or(cfg.carrier()), fs)?.with_mode(ch.sine_mode);
                Some(Demodulator::new(nco, ch.lpf))
            } else {
                None
            };
            let kind = if cfg.routing.vco_owner == Some(k) { ActuatorKind::Vco } else { ActuatorKind::Dac };
            let actuator = Actuator {
                kind,
                vco: cfg.vco,
                dac: cfg.dac,
                ideal: ch.ideal_actuator,
            };
            let dither = if ch.dither.enabled {
                Some(DitherModule::new(fs, ch.dither.freq, ch.dither.amplitude)?)
            } else {
                None
            };
            channels.push(Channel {
                demod,
                filter: LoopFilter::with_limits(cfg.gains(k)?, ch.limits),
                actuator,
                actuator_kc: cfg.actuator_kc(k),
                dither,
                counter: CounterState::new(fs, cfg.counter_gate_s)?,
                plant: if cfg.routing.scenario == Scenario::Independent { k } else { 0 },
                last: ChannelSample::default(),
            });
        }
        Ok(Self {
            plant_drive: vec![0.0; plants.len()],
            beats: Vec::with_capacity(plants.len()),
            cfg,
            channels,
            plants,
            sample: 0,
            probe_channel: 0,
            disturbance_hz: 0.0,
            new_records: Vec::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn fs(&self) -> f64 {
        self.cfg.fs
    }

    pub fn sample_index(&self) -> u64 {
        self.sample
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn last(&self, channel: usize) -> &ChannelSample {
        &self.channels[channel].last
    }

    pub fn plant(&self, index: usize) -> &BeatPlant {
        &self.plants[index]
    }

    pub fn gains(&self, channel: usize) -> &GainSet {
        self.channels[channel].filter.gains()
    }

    /// Channel that receives the stimulus in [`LoopUnderTest::step`].
    pub fn set_probe_channel(&mut self, channel: usize) -> Result<()> {
        if channel >= self.channels.len() {
            return Err(Error::out_of_range("probe channel", channel as f64, format!("[0, {})", self.channels.len())));
        }
        self.probe_channel = channel;
        Ok(())
    }

    /// External frequency disturbance added to every plant without delay, Hz.
    pub fn set_disturbance_hz(&mut self, f: f64) {
        self.disturbance_hz = f;
    }

    /// Counter gates closed since the last call, tagged with their channel.
    pub fn take_counter_records(&mut self) -> Vec<(usize, CounterRecord)> {
        std::mem::take(&mut self.new_records)
    }

    /// Advances one sample with `stimulus` added at `stim_channel`'s
    /// controller output.
    pub fn step_with(&mut self, stim_channel: usize, stimulus: f64) {
        let fs = self.cfg.fs;
        let scenario = self.cfg.routing.scenario;
        self.beats.clear();
        self.beats.extend(self.plants.iter_mut().map(|p| p.synthesize()));
        self.plant_drive.iter_mut().for_each(|d| *d = 0.0);
        let mut shared = ChannelSample::default();
        let mut inner_out = 0.0;
        for (k, ch) in self.channels.iter_mut().enumerate() {
            let mut s = ChannelSample::default();
            let beat = self.beats[ch.plant];
            match &mut ch.demod {
                Some(d) => {
                    let o = d.step(beat.x);
                    s.adc_in = beat.x;
                    s.i = o.iq.i;
                    s.q = o.iq.q;
                    s.phase = o.phase;
                    s.phase_increment = o.increment;
                    s.measurement = o.increment * fs / TAU;
                    s.saturated = beat.clipped;
                }
                None => {
                    s = shared;
                }
            }
            if k == 0 {
                shared = s;
            }
            let input = if scenario == Scenario::Cascaded && k == 1 { inner_out } else { s.measurement };
            let setpoint = self.cfg.channels[k].setpoint;
            let out = ch.filter.step(setpoint - input);
            s.filter_out = out.u;
            if k == 0 {
                inner_out = out.u;
            }
            let mut drive = if self.cfg.channels[k].loop_closed { out.u } else { 0.0 };
            if let Some(d) = &mut ch.dither {
                drive += d.next_value();
            }
            if k == stim_channel {
                drive += stimulus;
            }
            s.drive = drive;
            let act = ch.actuator.apply(drive);
            s.dac_out = act.volts;
            s.saturated |= out.saturated || act.saturated;
            self.plant_drive[ch.plant] += ch.actuator_kc * act.volts;
            if ch.demod.is_some() {
                if let Some(rec) = ch.counter.push(s.phase_increment) {
                    self.new_records.push((k, rec));
                }
            }
            ch.last = s;
        }
        for (p, &drive) in self.plants.iter_mut().zip(&self.plant_drive) {
            p.advance(drive, self.disturbance_hz);
        }
        self.sample += 1;
    }

    pub fn step(&mut self) {
        self.step_with(self.probe_channel, 0.0);
    }

    /// Runs `n` samples without stimulus.
    pub fn run_for(&mut self, n: u64) {
        for _ in 0..n {
            self.step();
        }
    }

    /// Analytic open-loop gain of channel `k`'s loop (actuator gain,
    /// controller, demodulation low-pass, output register and link taps).
    pub fn open_loop_response(&self, k: usize, f: f64) -> Complex64 {
        let fs = self.cfg.fs;
        let x = f / fs;
        let ch = &self.channels[k];
        let c = controller_response_unchecked(ch.filter.gains(), x);
        let lpf = Lowpass4::from_select(self.cfg.channels[k].lpf).response(x);
        let taps = TapDelay::new(self.plants[ch.plant].taps().to_vec()).response(x);
        let reg = Complex64::from_polar(1.0, -TAU * x);
        ch.actuator_kc * c * lpf * reg * taps
    }

    pub fn get_param(&self, key: &str) -> Result<f64> {
        let (k, name) = self.split_key(key)?;
        let ch = &self.cfg.channels[k];
        let g = &ch.gains;
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        Ok(match name {
            "kp_db" => g.kp_db,
            "f_i_hz" => g.f_i,
            "f_ii_hz" => g.f_ii,
            "f_d_hz" => g.f_d,
            "f_df_hz" => g.f_df,
            "p_enabled" => flag(g.enabled.p),
            "i_enabled" => flag(g.enabled.i),
            "ii_enabled" => flag(g.enabled.ii),
            "d_enabled" => flag(g.enabled.d),
            "setpoint" => ch.setpoint,
            "loop_closed" => flag(ch.loop_closed),
            "dither_enabled" => flag(ch.dither.enabled),
            "dither_freq_hz" => ch.dither.freq,
            "dither_amplitude_v" => ch.dither.amplitude,
            _ => return Err(Error::UnknownParameter(key.to_string())),
        })
    }

    /// Changes a live parameter; the loop filter keeps its state. The
    /// change is validated before anything is applied.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let (k, name) = self.split_key(key)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("parameter value"));
        }
        let mut ch = self.cfg.channels[k].clone();
        let as_flag = |v: f64| v != 0.0;
        match name {
            "kp_db" => ch.gains.kp_db = value,
            "f_i_hz" => ch.gains.f_i = value,
            "f_ii_hz" => ch.gains.f_ii = value,
            "f_d_hz" => ch.gains.f_d = value,
            "f_df_hz" => ch.gains.f_df = value,
            "p_enabled" => ch.gains.enabled.p = as_flag(value),
            "i_enabled" => ch.gains.enabled.i = as_flag(value),
            "ii_enabled" => ch.gains.enabled.ii = as_flag(value),
            "d_enabled" => ch.gains.enabled.d = as_flag(value),
            "setpoint" => ch.setpoint = value,
            "loop_closed" => ch.loop_closed = as_flag(value),
            "dither_enabled" => ch.dither.enabled = as_flag(value),
            "dither_freq_hz" => ch.dither.freq = value,
            "dither_amplitude_v" => ch.dither.amplitude = value,
            _ => return Err(Error::UnknownParameter(key.to_string())),
        }
        let gains = design_gains(&ch.gains.filter_config(self.cfg.design_kc(k), self.cfg.fs))?;
        let dither = if ch.dither.enabled {
            let mut d = DitherModule::new(self.cfg.fs, ch.dither.freq, ch.dither.amplitude)?;
            // an amplitude change keeps the square wave's phase
            if let Some(old) = &self.channels[k].dither {
                if old.period() == d.period() {
                    for _ in 0..old.index() {
                        d.next_value();
                    }
                }
            }
            Some(d)
        } else {
            None
        };
        self.cfg.channels[k] = ch;
        self.channels[k].filter.set_gains(gains);
        self.channels[k].dither = dither;
        Ok(())
    }

    /// Parameter names accepted by [`Engine::get_param`] and
    /// [`Engine::set_param`]; prefix with `chN.` for channel `N`.
    pub const PARAMS: [&'static str; 14] = [
        "kp_db",
        "f_i_hz",
        "f_ii_hz",
        "f_d_hz",
        "f_df_hz",
        "p_enabled",
        "i_enabled",
        "ii_enabled",
        "d_enabled",
        "setpoint",
        "loop_closed",
        "dither_enabled",
        "dither_freq_hz",
        "dither_amplitude_v",
    ];

    fn split_key<'a>(&self, key: &'a str) -> Result<(usize, &'a str)> {
        let (k, name) = match key.strip_prefix("ch").and_then(|r| r.split_once('.')) {
            Some((idx, name)) => {
                let k: usize = idx.parse().map_err(|_| Error::UnknownParameter(key.to_string()))?;
                (k, name)
            }
            None => (0, key),
        };
        if k >= self.channels.len() {
            return Err(Error::UnknownParameter(key.to_string()));
        }
        Ok((k, name))
    }
}

impl LoopUnderTest for Engine {
    fn fs(&self) -> f64 {
        self.cfg.fs
    }

    fn step(&mut self, stimulus: f64) -> Probe {
        self.step_with(self.probe_channel, stimulus);
        let s = &self.channels[self.probe_channel].last;
        Probe {
            measurement: s.measurement,
            drive: s.drive,
            saturated: s.saturated,
        }
    }
}
