//! Fixtures shared by the benchmarks.

use dpllsim_core::engine::{quarter_pi_tuning, ChannelConfig, SimConfig};
use dpllsim_core::plant::{LinkModel, NoiseKind, NoiseSpec};

/// The tuned fiber-link loop at `fs` with converter noise.
pub fn fiber_loop(fs: f64) -> SimConfig {
    let link = LinkModel::fiber_link(fs);
    let gains = quarter_pi_tuning(link.total_delay(), link.kc, fs).expect("tunable delay");
    let mut cfg = SimConfig::single(
        fs,
        link,
        ChannelConfig {
            gains,
            ..ChannelConfig::default()
        },
    );
    cfg.noise = vec![NoiseSpec {
        kind: NoiseKind::AdcSnr,
        level: 63.0,
        seed: 1,
    }];
    cfg
}

/// Deterministic pseudo-random samples in `[-1, 1)`.
pub fn test_signal(n: usize) -> Vec<f64> {
    let mut x = 0x2545_f491_4f6c_dd1du64;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}
