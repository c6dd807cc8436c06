use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

use dpllsim_bench::{fiber_loop, test_signal};
use dpllsim_core::dsp::{Demodulator, LpfSelect, Nco};
use dpllsim_core::engine::Engine;
use dpllsim_core::instruments::{measure_point, psd_estimate, CounterState, PsdKind, VnaSettings};
use dpllsim_core::loop_filter::{design_gains, BranchEnable, CrossoverMode, LoopFilter, LoopFilterConfig};

fn engine(c: &mut Criterion) {
    let cfg = fiber_loop(10e6);
    let mut g = c.benchmark_group("engine");
    g.throughput(Throughput::Elements(10_000));
    g.bench_function("closed_loop_10k_samples", |b| {
        b.iter_batched_ref(
            || Engine::new(cfg.clone()).unwrap(),
            |e| e.run_for(10_000),
            BatchSize::LargeInput,
        )
    });
    g.finish();

    let settings = VnaSettings {
        cycles_per_point: 20,
        settle_cycles: 5,
        ..VnaSettings::default()
    };
    c.bench_function("vna_point_10khz", |b| {
        b.iter_batched_ref(
            || Engine::new(cfg.clone()).unwrap(),
            |e| measure_point(e, 10e3, &settings),
            BatchSize::LargeInput,
        )
    });
}

fn blocks(c: &mut Criterion) {
    let x = test_signal(4096);
    let mut g = c.benchmark_group("blocks");
    g.throughput(Throughput::Elements(x.len() as u64));
    g.bench_function("demodulator", |b| {
        let mut d = Demodulator::new(Nco::with_frequency(2.5e6, 10e6).unwrap(), LpfSelect::Wide);
        b.iter(|| {
            for &s in &x {
                black_box(d.step(s));
            }
        })
    });
    g.bench_function("loop_filter", |b| {
        let cfg = LoopFilterConfig {
            kp_db: -1.0,
            kc: 5e6,
            fs: 10e6,
            f_i: 31_250.0,
            f_ii: 1953.125,
            f_d: 1e6,
            f_df: 2e6,
            mode: CrossoverMode::RelativeToKp,
            enabled: BranchEnable {
                p: true,
                i: true,
                ii: true,
                d: true,
            },
        };
        let mut f = LoopFilter::new(design_gains(&cfg).unwrap());
        b.iter(|| {
            for &e in &x {
                black_box(f.step(e * 1e3));
            }
        })
    });
    g.bench_function("counter", |b| {
        let mut counter = CounterState::new(10e6, 1e-4).unwrap();
        b.iter(|| {
            for &e in &x {
                black_box(counter.push(e));
            }
        })
    });
    g.finish();

    let long = test_signal(1 << 18);
    c.bench_function("psd_2e18_seg_2e12", |b| {
        b.iter(|| psd_estimate(black_box(&long), 1e6, 1 << 12, PsdKind::Phase).unwrap())
    });
}

criterion_group!(benches, engine, blocks);
criterion_main!(benches);
