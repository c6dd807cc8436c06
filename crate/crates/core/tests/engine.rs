use dpllsim_core::engine::{
    closed_loop_prediction, configure_routing, quarter_pi_tuning, run, ChannelConfig, Engine, InjectionPoint,
    LoopGains, RoutingConfig, Scenario, SimConfig, TestPoint,
};
use dpllsim_core::instruments::{log_freqs, vna_sweep, VnaMode, VnaSettings};
use dpllsim_core::loop_filter::{BranchEnable, CrossoverMode};
use dpllsim_core::plant::{LinkModel, NoiseKind, NoiseSpec};
use dpllsim_core::Error;

fn open_channel() -> ChannelConfig {
    ChannelConfig {
        loop_closed: false,
        ..ChannelConfig::default()
    }
}

fn tuned(fs: f64) -> SimConfig {
    let link = LinkModel::fiber_link(fs);
    let gains = quarter_pi_tuning(4.0e-6, link.kc, fs).unwrap();
    SimConfig::single(
        fs,
        link,
        ChannelConfig {
            gains,
            ..ChannelConfig::default()
        },
    )
}

#[test]
fn on_frequency_beat_gives_zero_increment() {
    let mut cfg = SimConfig::single(1e6, LinkModel::local(1e5, 1e-6), open_channel());
    cfg.duration = 5000;
    cfg.recorded_testpoints = [TestPoint::PhaseIncrement].into_iter().collect();
    let t = run(&cfg).unwrap();
    assert!(t.get(0, TestPoint::PhaseIncrement).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn counter_reads_open_loop_offset() {
    let mut cfg = SimConfig::single(1e6, LinkModel::local(1e5, 1e-6), open_channel());
    cfg.beat_offset_hz = 1e3;
    cfg.counter_gate_s = 0.01;
    cfg.duration = 50_000;
    let t = run(&cfg).unwrap();
    assert_eq!(t.counter[0].len(), 5);
    // the first gate includes the filter start-up
    for r in &t.counter[0][1..] {
        assert!((r.mean_freq - 1e3).abs() < 0.05, "{}", r.mean_freq);
    }
}

#[test]
fn fiber_loop_locks_and_holds_phase() {
    let mut cfg = tuned(10e6);
    cfg.beat_offset_hz = 10e3;
    cfg.noise = vec![NoiseSpec {
        kind: NoiseKind::AdcSnr,
        level: 40.0,
        seed: 3,
    }];
    let mut e = Engine::new(cfg).unwrap();
    e.run_for(200_000);
    let start = e.plant(0).phase_total();
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        e.step();
        worst = worst.max((e.plant(0).phase_total() - start).abs());
    }
    // no cycle slip: the beat phase stays within one turn of where it locked
    assert!(worst < std::f64::consts::PI, "{worst}");
}

#[test]
fn independent_channels_with_equal_seeds_match() {
    let mut cfg = tuned(1e6);
    cfg.channels.push(cfg.channels[0].clone());
    cfg.routing = RoutingConfig {
        scenario: Scenario::Independent,
        vco_owner: None,
    };
    cfg.duration = 20_000;
    cfg.recorded_testpoints = TestPoint::ALL.into_iter().collect();
    cfg.noise = vec![NoiseSpec {
        kind: NoiseKind::WhiteFrequency,
        level: 10.0,
        seed: 5,
    }];
    let t = run(&cfg).unwrap();
    assert_eq!(t.series[0], t.series[1]);
}

#[test]
fn shared_input_with_null_second_filter_matches_single_loop() {
    let mut single = tuned(1e6);
    single.duration = 30_000;
    single.beat_offset_hz = 2e3;
    single.recorded_testpoints = TestPoint::ALL.into_iter().collect();
    let mut shared = single.clone();
    let mut second = single.channels[0].clone();
    second.gains = LoopGains {
        kp_db: -400.0,
        ..LoopGains::default()
    };
    second.kc = Some(1e5);
    shared.channels.push(second);
    shared.routing.scenario = Scenario::SharedInput;
    let a = run(&single).unwrap();
    let b = run(&shared).unwrap();
    assert_eq!(a.series[0], b.series[0]);
}

#[test]
fn cascade_drives_fast_output_to_setpoint() {
    let fs = 1e6;
    let mut cfg = SimConfig::single(fs, LinkModel::local(1e5, 2e-6), ChannelConfig::default());
    cfg.channels[0].gains = LoopGains {
        kp_db: -6.0,
        f_i: 10e3,
        enabled: BranchEnable {
            p: true,
            i: true,
            ii: false,
            d: false,
        },
        ..LoopGains::default()
    };
    cfg.channels[0].kc = Some(1e5);
    cfg.channels[0].ideal_actuator = true;
    cfg.channels.push(ChannelConfig {
        gains: LoopGains {
            kp_db: -20.0,
            f_i: 200.0,
            mode: CrossoverMode::RelativeToKp,
            enabled: BranchEnable {
                p: true,
                i: true,
                ii: false,
                d: false,
            },
            ..LoopGains::default()
        },
        kc: Some(2e4),
        setpoint: 0.05,
        ideal_actuator: true,
        ..ChannelConfig::default()
    });
    cfg.routing = RoutingConfig {
        scenario: Scenario::Cascaded,
        vco_owner: Some(0),
    };
    cfg.beat_offset_hz = 3e3;
    let mut e = configure_routing(cfg).unwrap();
    e.run_for(300_000);
    assert!((e.last(0).filter_out - 0.05).abs() < 1e-3, "{}", e.last(0).filter_out);
}

#[test]
fn routing_errors() {
    let mut cfg = tuned(1e6);
    cfg.routing.vco_owner = Some(3);
    assert!(matches!(Engine::new(cfg.clone()), Err(Error::Routing(_))));
    cfg.routing = RoutingConfig {
        scenario: Scenario::Cascaded,
        vco_owner: Some(0),
    };
    assert!(matches!(Engine::new(cfg), Err(Error::Routing(_))));
}

#[test]
fn scale_invariance() {
    let make = |fs: f64| {
        let mut cfg = SimConfig::single(
            fs,
            LinkModel::local(fs / 20.0, 4.0 / fs),
            ChannelConfig {
                gains: LoopGains {
                    kp_db: -3.0,
                    f_i: fs / 400.0,
                    f_ii: fs / 8000.0,
                    enabled: BranchEnable {
                        p: true,
                        i: true,
                        ii: true,
                        d: false,
                    },
                    ..LoopGains::default()
                },
                ..ChannelConfig::default()
            },
        );
        cfg.beat_offset_hz = fs / 1000.0;
        cfg.duration = 20_000;
        cfg.recorded_testpoints = [TestPoint::PhaseIncrement, TestPoint::FilterOut, TestPoint::Phase]
            .into_iter()
            .collect();
        run(&cfg).unwrap()
    };
    let a = make(100e6);
    let b = make(1e6);
    for (x, y) in a.series[0].iter().zip(&b.series[0]) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1e-3), "{u} vs {v}");
        }
    }
}

#[test]
fn params_round_trip_and_keep_state() {
    let mut e = Engine::new(tuned(1e6)).unwrap();
    e.run_for(1000);
    e.set_param("kp_db", -2.5).unwrap();
    assert_eq!(e.get_param("kp_db").unwrap(), -2.5);
    assert_eq!(e.get_param("ch0.kp_db").unwrap(), -2.5);
    e.set_param("dither_amplitude_v", 0.01).unwrap();
    e.set_param("dither_enabled", 1.0).unwrap();
    assert_eq!(e.get_param("dither_enabled").unwrap(), 1.0);
    assert!(matches!(e.get_param("nope"), Err(Error::UnknownParameter(_))));
    assert!(matches!(e.get_param("ch7.kp_db"), Err(Error::UnknownParameter(_))));
    // a rejected change leaves everything untouched
    assert!(e.set_param("f_i_hz", 2e6).is_err());
    assert_eq!(e.get_param("f_i_hz").unwrap(), 1.0 / 32e-6);
}

#[test]
fn measured_rejection_tracks_prediction_on_a_short_sweep() {
    let cfg = tuned(2e6);
    let freqs = log_freqs(2e3, 80e3, 8).unwrap();
    let settings = VnaSettings {
        mode: VnaMode::Rejection,
        ..VnaSettings::default()
    };
    let r = vna_sweep(|_| Engine::new(cfg.clone()), &freqs, &settings).unwrap();
    let e = Engine::new(cfg).unwrap();
    let p = closed_loop_prediction(|f| e.open_loop_response(0, f), &freqs, InjectionPoint::Actuator);
    for (m, s) in r.response.iter().zip(&p.sensitivity) {
        assert!((20.0 * (m.norm() / s.norm()).log10()).abs() < 1.0);
    }
}

#[test]
fn open_loop_transfer_matches_model() {
    let fs = 1e6;
    let cfg = SimConfig::single(fs, LinkModel::local(1e5, 5e-6), open_channel());
    let freqs = [1e3, 10e3, 50e3];
    let settings = VnaSettings::default();
    let r = vna_sweep(|_| Engine::new(cfg.clone()), &freqs, &settings).unwrap();
    // open loop: kc times the delays, with unity controller removed
    let e = Engine::new(cfg).unwrap();
    for (f, h) in freqs.iter().zip(&r.response) {
        let model = e.open_loop_response(0, *f) / e.gains(0).kp;
        assert!((h.norm() / model.norm() - 1.0).abs() < 0.01, "{f}");
        assert!((h / model).arg().to_degrees().abs() < 1.0);
    }
}
